//! Lattice geometry: sites, boxes and the deterministic mark family `G_k`.

use crate::{Error, Result};

/// One lattice coordinate.
pub type Coord = i64;

/// A site of `Z^d`, stored as its coordinate vector.
pub type Site = Vec<Coord>;

/// L∞ norm of a site.
pub fn linf_norm(site: &[Coord]) -> Coord {
    site.iter().map(|c| c.abs()).max().unwrap_or(0)
}

fn shell_sites(dimension: usize, radius: Coord) -> Vec<Site> {
    // All sites with L∞ norm exactly `radius`, in lexicographic order.
    let mut out = Vec::new();
    let mut cursor = vec![-radius; dimension];
    loop {
        if linf_norm(&cursor) == radius {
            out.push(cursor.clone());
        }
        // odometer step, most-significant coordinate first
        let mut axis = dimension;
        while axis > 0 {
            axis -= 1;
            cursor[axis] += 1;
            if cursor[axis] <= radius {
                break;
            }
            cursor[axis] = -radius;
            if axis == 0 {
                return out;
            }
        }
    }
}

/// The first `k` sites of `Z^d` in increasing L∞-shell order, ties within a
/// shell broken lexicographically. This is the mark `G_k`; the construction
/// is monotone in `k` and satisfies the box sandwich
/// `[-L,L]^d ⊆ G_k ⊆ [-L-1,L+1]^d`.
pub fn mark_points(dimension: usize, k: usize) -> Vec<Site> {
    assert!(k >= 1, "mark size must be at least 1");
    let mut book = MarkBook::new(dimension);
    book.mark(k).to_vec()
}

/// Lazily extended prefix of the shell-ordered site enumeration. Because the
/// mark family is monotone, one prefix serves every `G_k` as a slice.
#[derive(Debug, Clone)]
pub struct MarkBook {
    dimension: usize,
    sites: Vec<Site>,
    next_radius: Coord,
}

impl MarkBook {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 1, "dimension must be at least 1");
        MarkBook {
            dimension,
            sites: Vec::new(),
            next_radius: 0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn extend_to(&mut self, k: usize) {
        while self.sites.len() < k {
            let shell = shell_sites(self.dimension, self.next_radius);
            self.sites.extend(shell);
            self.next_radius += 1;
        }
    }

    /// The mark `G_k` as a slice of sites.
    pub fn mark(&mut self, k: usize) -> &[Site] {
        assert!(k >= 1, "mark size must be at least 1");
        self.extend_to(k);
        &self.sites[..k]
    }

    /// L∞ radius of `G_k` (shell order makes the last site the farthest).
    pub fn radius(&mut self, k: usize) -> Coord {
        self.extend_to(k);
        linf_norm(&self.sites[k - 1])
    }
}

/// An axis-aligned box `Λ ⊂ Z^d`, given by inclusive per-coordinate bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoxRegion {
    lo: Vec<Coord>,
    hi: Vec<Coord>,
}

impl BoxRegion {
    pub fn new(lo: Vec<Coord>, hi: Vec<Coord>) -> Result<Self> {
        if lo.is_empty() || lo.len() != hi.len() {
            return Err(Error::InvalidRegion(
                "bounds must be non-empty and of equal dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| a > b) {
            return Err(Error::InvalidRegion("box is empty".into()));
        }
        Ok(BoxRegion { lo, hi })
    }

    /// The centred box `[-h, h]^d`.
    pub fn centered(dimension: usize, halfwidth: Coord) -> Self {
        BoxRegion {
            lo: vec![-halfwidth; dimension],
            hi: vec![halfwidth; dimension],
        }
    }

    pub fn dimension(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[Coord] {
        &self.lo
    }

    pub fn hi(&self) -> &[Coord] {
        &self.hi
    }

    /// Number of sites in the box.
    pub fn volume(&self) -> u64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| (b - a + 1) as u64)
            .product()
    }

    pub fn contains(&self, site: &[Coord]) -> bool {
        site.len() == self.lo.len()
            && site
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(c, (a, b))| a <= c && c <= b)
    }

    /// True iff `site + G_k ⊆ Λ` for the given mark sites.
    pub fn contains_mark(&self, site: &[Coord], mark: &[Site]) -> bool {
        let mut buf = vec![0; site.len()];
        mark.iter().all(|g| {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = site[i] + g[i];
            }
            self.contains(&buf)
        })
    }

    /// All sites of the box in lexicographic (sorted) order.
    pub fn sites(&self) -> Vec<Site> {
        let mut out = Vec::with_capacity(self.volume() as usize);
        let mut cursor = self.lo.clone();
        loop {
            out.push(cursor.clone());
            let mut axis = self.lo.len();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                cursor[axis] += 1;
                if cursor[axis] <= self.hi[axis] {
                    break;
                }
                cursor[axis] = self.lo[axis];
            }
        }
    }
}

//! Particle configurations, counting functionals and the interaction energy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

pub use crate::lattice::BoxRegion;
use crate::lattice::{Coord, MarkBook, Site};
use crate::model::{pair_interaction_sites, ModelSpec};
use crate::{Error, Result};

/// A finite marked point configuration: multiplicity `ξ^(k)(x)` per
/// `(site, mark size)`. Zero entries are never stored, and iteration order is
/// the sorted key order, which makes energy sums reproducible.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    entries: BTreeMap<(Site, usize), u64>,
}

impl Configuration {
    pub fn empty() -> Self {
        Configuration::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (Site, usize, u64)>) -> Result<Self> {
        let mut cfg = Configuration::empty();
        for (site, k, mult) in entries {
            if k == 0 {
                return Err(Error::Precondition("mark size 0 in configuration".into()));
            }
            cfg.add(site, k, mult);
        }
        Ok(cfg)
    }

    pub fn add(&mut self, site: Site, k: usize, mult: u64) {
        if mult == 0 {
            return;
        }
        *self.entries.entry((site, k)).or_insert(0) += mult;
    }

    /// Removes one point at `(site, k)`.
    pub fn remove_one(&mut self, site: &[Coord], k: usize) -> Result<()> {
        let key = (site.to_vec(), k);
        match self.entries.get_mut(&key) {
            Some(m) if *m > 1 => {
                *m -= 1;
                Ok(())
            }
            Some(_) => {
                self.entries.remove(&key);
                Ok(())
            }
            None => Err(Error::Precondition(format!(
                "no point with mark size {k} at {site:?}"
            ))),
        }
    }

    pub fn multiplicity(&self, site: &[Coord], k: usize) -> u64 {
        self.entries.get(&(site.to_vec(), k)).copied().unwrap_or(0)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Site, usize, u64)> {
        self.entries.iter().map(|((s, k), m)| (s, *k, *m))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of points (multiplicities summed).
    pub fn point_count(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Total particle number `Σ k·ξ^(k)(x)`.
    pub fn particle_count(&self) -> u64 {
        self.entries.iter().map(|((_, k), m)| *k as u64 * m).sum()
    }

    /// Largest mark size present.
    pub fn max_mark(&self) -> usize {
        self.entries.keys().map(|(_, k)| *k).max().unwrap_or(0)
    }

    /// Canonical line format: one `x_1 … x_d k multiplicity` line per entry,
    /// in sorted key order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for ((site, k), mult) in &self.entries {
            for c in site {
                write!(out, "{c} ").unwrap();
            }
            writeln!(out, "{k} {mult}").unwrap();
        }
        out
    }

    pub fn from_text(text: &str, dimension: usize) -> Result<Self> {
        let mut cfg = Configuration::empty();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dimension + 2 {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, found {}",
                    lineno + 1,
                    dimension + 2,
                    fields.len()
                )));
            }
            let parse =
                |s: &str| -> Result<i64> { s.parse().map_err(|e| Error::Parse(format!("{e}: {s}"))) };
            let site: Site = fields[..dimension]
                .iter()
                .map(|s| parse(s))
                .collect::<Result<_>>()?;
            let k = parse(fields[dimension])? as usize;
            let mult = parse(fields[dimension + 1])? as u64;
            if k == 0 || mult == 0 {
                return Err(Error::Parse(format!(
                    "line {}: mark size and multiplicity must be positive",
                    lineno + 1
                )));
            }
            cfg.add(site, k, mult);
        }
        Ok(cfg)
    }
}

/// `N_Λ^(δ_k)`: number of points in `Λ` carrying a k-mark.
pub fn count_points(cfg: &Configuration, region: &BoxRegion, k: usize) -> u64 {
    cfg.entries()
        .filter(|(s, kk, _)| *kk == k && region.contains(s))
        .map(|(_, _, m)| m)
        .sum()
}

/// `N_Λ^ℓ`: number of particles attached to points in `Λ`.
pub fn count_particles(cfg: &Configuration, region: &BoxRegion) -> u64 {
    cfg.entries()
        .filter(|(s, _, _)| region.contains(s))
        .map(|(_, k, m)| k as u64 * m)
        .sum()
}

/// `M_{Λ,Λ'}^(δ_k)`: particles in `Λ'` attached to k-mark points in `Λ`.
pub fn attached_particles(
    cfg: &Configuration,
    points_in: &BoxRegion,
    particles_in: &BoxRegion,
    k: usize,
    spec: &ModelSpec,
) -> u64 {
    let mut book = spec.mark_book();
    let mut total = 0;
    let mut buf = vec![0; spec.dimension()];
    for (site, kk, mult) in cfg.entries() {
        if kk != k || !points_in.contains(site) {
            continue;
        }
        let inside = book
            .mark(k)
            .iter()
            .filter(|g| {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = site[i] + g[i];
                }
                particles_in.contains(&buf)
            })
            .count() as u64;
        total += inside * mult;
    }
    total
}

/// `M_{Λ,Λ^c}^(δ_k)`: particles escaping `Λ` from k-mark points inside it.
pub fn escaping_particles(cfg: &Configuration, region: &BoxRegion, k: usize, spec: &ModelSpec) -> u64 {
    let total: u64 = cfg
        .entries()
        .filter(|(s, kk, _)| *kk == k && region.contains(s))
        .map(|(_, _, m)| k as u64 * m)
        .sum();
    total - attached_particles(cfg, region, region, k, spec)
}

/// `Ñ_Λ`: particles located in `Λ`, from points anywhere.
pub fn located_particles(cfg: &Configuration, region: &BoxRegion, spec: &ModelSpec) -> u64 {
    let mut book = spec.mark_book();
    let mut total = 0;
    let mut buf = vec![0; spec.dimension()];
    for (site, k, mult) in cfg.entries() {
        let inside = book
            .mark(k)
            .iter()
            .filter(|g| {
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = site[i] + g[i];
                }
                region.contains(&buf)
            })
            .count() as u64;
        total += inside * mult;
    }
    total
}

/// Dirichlet admissibility: every point lies in `Λ` and its whole mark fits.
pub fn is_dirichlet(cfg: &Configuration, region: &BoxRegion, spec: &ModelSpec) -> bool {
    let mut book = spec.mark_book();
    cfg.entries()
        .all(|(site, k, _)| region.contains(site) && region.contains_mark(site, book.mark(k)))
}

fn t_between(
    spec: &ModelSpec,
    book: &mut MarkBook,
    x: &[Coord],
    k: usize,
    y: &[Coord],
    l: usize,
) -> f64 {
    let sites = book.mark(k.max(l));
    pair_interaction_sites(spec.potential(), x, &sites[..k], y, &sites[..l])
}

/// `Φ_{Λ,Λ'}(ω)`: total interaction between points of `ω` located in `Λ` and
/// in `Λ'`, self-interactions included (the diagonal contributes `ξ²·T`).
pub fn total_energy(
    cfg: &Configuration,
    lam: &BoxRegion,
    lam2: &BoxRegion,
    spec: &ModelSpec,
) -> f64 {
    let mut book = spec.mark_book();
    let mut total = 0.0;
    for (x, k, mx) in cfg.entries() {
        if !lam.contains(x) {
            continue;
        }
        for (y, l, my) in cfg.entries() {
            if !lam2.contains(y) {
                continue;
            }
            total += (mx * my) as f64 * t_between(spec, &mut book, x, k, y, l);
        }
    }
    total
}

/// Bilinear cross energy `Φ^↔(ω, ω̃)` over `Λ`; satisfies
/// `Φ(ω+ω̃) = Φ(ω) + 2Φ^↔(ω,ω̃) + Φ(ω̃)`.
pub fn mutual_energy(
    cfg: &Configuration,
    other: &Configuration,
    lam: &BoxRegion,
    spec: &ModelSpec,
) -> f64 {
    let mut book = spec.mark_book();
    let mut total = 0.0;
    for (x, k, mx) in cfg.entries() {
        if !lam.contains(x) {
            continue;
        }
        for (y, l, my) in other.entries() {
            if !lam.contains(y) {
                continue;
            }
            total += (mx * my) as f64 * t_between(spec, &mut book, x, k, y, l);
        }
    }
    total
}

/// `Φ^(k)(ω) = Σ_x Σ_l ξ^(l)(x) T_{0,x}(G_k, G_l)`: interaction of `ω` with a
/// probe k-mark at the origin.
pub fn field_energy_k(cfg: &Configuration, k: usize, spec: &ModelSpec) -> f64 {
    let origin = vec![0; spec.dimension()];
    probe_energy(cfg, &origin, k, None, spec, &mut spec.mark_book())
}

/// Interaction of `ω` (optionally restricted to a region) with a probe
/// `(site, k)` point. Used by the incremental energy updates.
pub(crate) fn probe_energy(
    cfg: &Configuration,
    site: &[Coord],
    k: usize,
    region: Option<&BoxRegion>,
    spec: &ModelSpec,
    book: &mut MarkBook,
) -> f64 {
    let mut total = 0.0;
    for (y, l, m) in cfg.entries() {
        if let Some(r) = region {
            if !r.contains(y) {
                continue;
            }
        }
        total += m as f64 * t_between(spec, book, site, k, y, l);
    }
    total
}

/// `Φ_{Λ,Λ}(ω') − Φ_{Λ,Λ}(ω)` for moving one point from `from` to `to`
/// (mark size may change), computed incrementally from the quadratic form.
pub fn delta_energy_move(
    cfg: &Configuration,
    from: (&[Coord], usize),
    to: (&[Coord], usize),
    lam: &BoxRegion,
    spec: &ModelSpec,
) -> Result<f64> {
    let (fx, fk) = from;
    let (tx, tk) = to;
    if cfg.multiplicity(fx, fk) == 0 {
        return Err(Error::Precondition(format!(
            "no point with mark size {fk} at {fx:?}"
        )));
    }
    let mut book = spec.mark_book();
    let in_from = lam.contains(fx);
    let in_to = lam.contains(tx);
    let b_from = if in_from {
        probe_energy(cfg, fx, fk, Some(lam), spec, &mut book)
    } else {
        0.0
    };
    let b_to = if in_to {
        probe_energy(cfg, tx, tk, Some(lam), spec, &mut book)
    } else {
        0.0
    };
    let t_from = if in_from {
        t_between(spec, &mut book, fx, fk, fx, fk)
    } else {
        0.0
    };
    let t_to = if in_to {
        t_between(spec, &mut book, tx, tk, tx, tk)
    } else {
        0.0
    };
    let cross = if in_from && in_to {
        t_between(spec, &mut book, fx, fk, tx, tk)
    } else {
        0.0
    };
    Ok(2.0 * (b_to - b_from) + t_from + t_to - 2.0 * cross)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::reference_model_d1;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn cfg(entries: &[(&[Coord], usize, u64)]) -> Configuration {
        Configuration::from_entries(entries.iter().map(|(s, k, m)| (s.to_vec(), *k, *m))).unwrap()
    }

    #[test]
    fn counting_examples() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 2);
        let one_three_mark = cfg(&[(&[0], 3, 1)]);
        assert_eq!(count_particles(&one_three_mark, &lam), 3);
        assert_eq!(count_points(&one_three_mark, &lam, 3), 1);
        assert_eq!(count_points(&one_three_mark, &lam, 1), 0);

        let empty = Configuration::empty();
        assert_eq!(count_particles(&empty, &lam), 0);
        assert_eq!(located_particles(&empty, &lam, &spec), 0);

        // G_2 = {0, -1}; with Λ = {0} one particle stays, one escapes
        let lam0 = BoxRegion::new(vec![0], vec![0]).unwrap();
        let two_mark = cfg(&[(&[0], 2, 1)]);
        assert_eq!(located_particles(&two_mark, &lam0, &spec), 1);
        assert_eq!(escaping_particles(&two_mark, &lam0, 2, &spec), 1);
        assert_eq!(attached_particles(&two_mark, &lam0, &lam0, 2, &spec), 1);
    }

    #[test]
    fn dirichlet_examples() {
        let spec = reference_model_d1();
        let lam0 = BoxRegion::new(vec![0], vec![0]).unwrap();
        assert!(is_dirichlet(&cfg(&[(&[0], 1, 1)]), &lam0, &spec));
        assert!(!is_dirichlet(&cfg(&[(&[0], 2, 1)]), &lam0, &spec));
        assert!(is_dirichlet(&Configuration::empty(), &lam0, &spec));
        // points outside the box are non-admissible, not an error
        assert!(!is_dirichlet(&cfg(&[(&[5], 1, 1)]), &lam0, &spec));
    }

    #[test]
    fn total_energy_examples() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 8);
        assert_eq!(total_energy(&cfg(&[(&[0], 1, 1)]), &lam, &lam, &spec), 1.0);
        assert_eq!(total_energy(&Configuration::empty(), &lam, &lam, &spec), 0.0);
        assert_eq!(
            total_energy(&cfg(&[(&[0], 1, 1), (&[5], 1, 1)]), &lam, &lam, &spec),
            2.0
        );
        // single point of mark k has energy t_k
        for k in 1..=6 {
            let e = total_energy(&cfg(&[(&[0], k, 1)]), &lam, &lam, &spec);
            assert_eq!(e, crate::model::self_interaction(k, &spec));
        }
    }

    fn random_config(rng: &mut StdRng, max_mark: usize) -> Configuration {
        let mut c = Configuration::empty();
        for _ in 0..rng.gen_range(0..5) {
            let site = vec![rng.gen_range(-4..=4i64)];
            let k = rng.gen_range(1..=max_mark);
            c.add(site, k, rng.gen_range(1..=2));
        }
        c
    }

    #[test]
    fn mutual_energy_decomposition_identity() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 8);
        let probe = cfg(&[(&[0], 1, 1)]);
        assert_eq!(mutual_energy(&probe, &Configuration::empty(), &lam, &spec), 0.0);
        assert_eq!(mutual_energy(&probe, &probe, &lam, &spec), 1.0);

        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..40 {
            let a = random_config(&mut rng, 4);
            let b = random_config(&mut rng, 4);
            let mut sum = a.clone();
            for (s, k, m) in b.entries() {
                sum.add(s.clone(), k, m);
            }
            let lhs = total_energy(&sum, &lam, &lam, &spec);
            let rhs = total_energy(&a, &lam, &lam, &spec)
                + 2.0 * mutual_energy(&a, &b, &lam, &spec)
                + total_energy(&b, &lam, &lam, &spec);
            assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn field_energy_examples() {
        let spec = reference_model_d1();
        assert_eq!(field_energy_k(&Configuration::empty(), 1, &spec), 0.0);
        assert_eq!(field_energy_k(&cfg(&[(&[0], 1, 1)]), 1, &spec), 1.0);
        // linearity in the configuration
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..20 {
            let a = random_config(&mut rng, 3);
            let b = random_config(&mut rng, 3);
            let mut sum = a.clone();
            for (s, k, m) in b.entries() {
                sum.add(s.clone(), k, m);
            }
            let lhs = field_energy_k(&sum, 2, &spec);
            let rhs = field_energy_k(&a, 2, &spec) + field_energy_k(&b, 2, &spec);
            assert!((lhs - rhs).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_energy_matches_full_recompute() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 6);
        // single point: any translation leaves the self term unchanged
        let single = cfg(&[(&[0], 2, 1)]);
        let d = delta_energy_move(&single, (&[0], 2), (&[3], 2), &lam, &spec).unwrap();
        assert!(d.abs() < 1e-12);

        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..60 {
            let mut c = random_config(&mut rng, 4);
            let site = vec![rng.gen_range(-4..=4i64)];
            let k = rng.gen_range(1..=4usize);
            c.add(site.clone(), k, 1);
            let to_site = vec![rng.gen_range(-4..=4i64)];
            let to_k = rng.gen_range(1..=4usize);
            let incremental =
                delta_energy_move(&c, (&site, k), (&to_site, to_k), &lam, &spec).unwrap();
            let mut moved = c.clone();
            moved.remove_one(&site, k).unwrap();
            moved.add(to_site.clone(), to_k, 1);
            let full = total_energy(&moved, &lam, &lam, &spec) - total_energy(&c, &lam, &lam, &spec);
            let scale = full.abs().max(1.0);
            assert!(
                (incremental - full).abs() <= 1e-9 * scale,
                "incremental {incremental} vs full {full}"
            );
        }
        // missing point is an error
        assert!(delta_energy_move(&single, (&[1], 1), (&[0], 1), &lam, &spec).is_err());
    }

    #[test]
    fn energy_monotone_under_adding_points() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 6);
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..30 {
            let a = random_config(&mut rng, 3);
            let mut b = a.clone();
            b.add(vec![rng.gen_range(-4..=4i64)], rng.gen_range(1..=3usize), 1);
            assert!(
                total_energy(&b, &lam, &lam, &spec) >= total_energy(&a, &lam, &lam, &spec) - 1e-12
            );
        }
    }

    #[test]
    fn text_round_trip_is_canonical() {
        let c = cfg(&[(&[1], 2, 1), (&[-1], 1, 3)]);
        let text = c.to_text();
        assert_eq!(text, "-1 1 3\n1 2 1\n");
        let parsed = Configuration::from_text(&text, 1).unwrap();
        assert_eq!(parsed, c);
        assert!(Configuration::from_text("0 1", 1).is_err());
        assert!(Configuration::from_text("0 0 1", 1).is_err());
    }
}

//! The model specification: interaction potential, intensity sequence and the
//! pure-geometry quantities `T`, `t_k`, `v̄`.

use std::collections::BTreeMap;

use serde::Deserialize;

use crate::lattice::{linf_norm, Coord, MarkBook, Site};
use crate::{Error, Result};

/// A symmetric, nonnegative pair potential with finite support on `Z^d`.
#[derive(Debug, Clone)]
pub struct Potential {
    dimension: usize,
    support: BTreeMap<Site, f64>,
    vbar: f64,
    range: Coord,
    // dense lookup over [-range, range]^d; None when the table would be large
    dense: Option<Vec<f64>>,
}

const DENSE_TABLE_LIMIT: usize = 1 << 22;

impl Potential {
    /// Builds a potential from offset/value pairs. Symmetry is completed by
    /// mirroring: a missing `-x` entry is filled with the value at `x`, and
    /// conflicting values for `x` and `-x` are rejected.
    pub fn new(dimension: usize, entries: impl IntoIterator<Item = (Site, f64)>) -> Result<Self> {
        let mut support: BTreeMap<Site, f64> = BTreeMap::new();
        for (offset, value) in entries {
            if offset.len() != dimension {
                return Err(Error::InvalidModel(format!(
                    "potential offset {offset:?} does not have dimension {dimension}"
                )));
            }
            if !value.is_finite() || value < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "potential value {value} at {offset:?} must be finite and nonnegative"
                )));
            }
            if value == 0.0 {
                continue;
            }
            if let Some(prev) = support.insert(offset.clone(), value) {
                if prev != value {
                    return Err(Error::InvalidModel(format!(
                        "conflicting values {prev} and {value} at offset {offset:?}"
                    )));
                }
            }
        }
        // mirror completion
        let given: Vec<(Site, f64)> = support.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (offset, value) in given {
            let mirrored: Site = offset.iter().map(|c| -c).collect();
            if let Some(prev) = support.insert(mirrored.clone(), value) {
                if prev != value {
                    return Err(Error::InvalidModel(format!(
                        "asymmetric potential: v({offset:?}) = {value} but v({mirrored:?}) = {prev}"
                    )));
                }
            }
        }
        let vbar = support.values().sum();
        let range = support.keys().map(|s| linf_norm(s)).max().unwrap_or(0);
        let mut pot = Potential {
            dimension,
            support,
            vbar,
            range,
            dense: None,
        };
        let side = (2 * range + 1) as usize;
        let table_len = side.checked_pow(dimension as u32).unwrap_or(usize::MAX);
        if range > 0 || !pot.support.is_empty() {
            if table_len <= DENSE_TABLE_LIMIT {
                let mut dense = vec![0.0; table_len.max(1)];
                for (offset, value) in &pot.support {
                    dense[pot.dense_index(offset)] = *value;
                }
                pot.dense = Some(dense);
            }
        }
        Ok(pot)
    }

    /// The zero potential (free gas).
    pub fn zero(dimension: usize) -> Self {
        Potential::new(dimension, std::iter::empty()).expect("zero potential is valid")
    }

    fn dense_index(&self, offset: &[Coord]) -> usize {
        let side = (2 * self.range + 1) as usize;
        let mut idx = 0usize;
        for &c in offset {
            idx = idx * side + (c + self.range) as usize;
        }
        idx
    }

    /// `v(offset)`, zero outside the support.
    #[inline]
    pub fn value(&self, offset: &[Coord]) -> f64 {
        if offset.iter().any(|c| c.abs() > self.range) {
            return 0.0;
        }
        match &self.dense {
            Some(table) => table[self.dense_index(offset)],
            None => self.support.get(offset).copied().unwrap_or(0.0),
        }
    }

    /// `v̄ = Σ_i v(i)`, the interaction of one particle with a full grid copy.
    pub fn vbar(&self) -> f64 {
        self.vbar
    }

    /// Maximal L∞ norm over the support.
    pub fn range(&self) -> Coord {
        self.range
    }

    pub fn is_zero(&self) -> bool {
        self.support.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn support(&self) -> impl Iterator<Item = (&Site, f64)> {
        self.support.iter().map(|(k, v)| (k, *v))
    }
}

/// First moment `Σ_k k q_k` of an intensity sequence; infinite for slowly
/// decaying sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstMoment {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone)]
enum IntensityKind {
    Geometric { c: f64, r: f64 },
    Polynomial { c: f64, gamma: f64 },
    Explicit { values: Vec<f64>, tail_bound: f64 },
}

/// The intensity sequence `(q_k)_{k≥1}` of the reference point process.
#[derive(Debug, Clone)]
pub struct IntensitySequence {
    kind: IntensityKind,
}

impl IntensitySequence {
    /// `q_k = c·r^k` with `0 < r < 1`.
    pub fn geometric(c: f64, r: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(r > 0.0 && r < 1.0) {
            return Err(Error::InvalidModel(format!(
                "geometric intensity needs c > 0 and 0 < r < 1, got c={c}, r={r}"
            )));
        }
        Ok(IntensitySequence {
            kind: IntensityKind::Geometric { c, r },
        })
    }

    /// `q_k = c·k^(-γ)` with `γ > 1`.
    pub fn polynomial(c: f64, gamma: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) || !(gamma > 1.0 && gamma.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "polynomial intensity needs c > 0 and gamma > 1, got c={c}, gamma={gamma}"
            )));
        }
        Ok(IntensitySequence {
            kind: IntensityKind::Polynomial { c, gamma },
        })
    }

    /// Finitely many explicit values `q_1, …, q_K` followed by a certified
    /// bound on `Σ_{k>K} q_k`. The bound is the caller's responsibility.
    pub fn explicit(values: Vec<f64>, tail_bound: f64) -> Result<Self> {
        if values.is_empty() || values.iter().any(|q| !(*q > 0.0 && q.is_finite())) {
            return Err(Error::InvalidModel(
                "explicit intensity needs at least one strictly positive value".into(),
            ));
        }
        if !(tail_bound >= 0.0 && tail_bound.is_finite()) {
            return Err(Error::InvalidModel(
                "explicit tail bound must be finite and nonnegative".into(),
            ));
        }
        Ok(IntensitySequence {
            kind: IntensityKind::Explicit { values, tail_bound },
        })
    }

    /// `q_k`, zero beyond the stored range of an explicit sequence.
    pub fn value(&self, k: usize) -> f64 {
        assert!(k >= 1, "intensity index starts at 1");
        match &self.kind {
            IntensityKind::Geometric { c, r } => c * r.powi(k as i32),
            IntensityKind::Polynomial { c, gamma } => c * (k as f64).powf(-gamma),
            IntensityKind::Explicit { values, .. } => values.get(k - 1).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{k≤K} q_k`, summed in increasing k.
    pub fn partial_sum(&self, k_max: usize) -> f64 {
        (1..=k_max).map(|k| self.value(k)).sum()
    }

    /// `Σ_{k>K} q_k` to absolute tolerance `tol`.
    pub fn tail_sum(&self, k_max: usize, tol: f64) -> Result<f64> {
        match &self.kind {
            IntensityKind::Geometric { c, r } => Ok(c * r.powi(k_max as i32 + 1) / (1.0 - r)),
            IntensityKind::Polynomial { c, gamma } => {
                // explicit terms until the integral bracket certifies tol
                let mut sum = 0.0;
                let mut k = k_max + 1;
                loop {
                    let upper = c * ((k as f64) - 1.0).powf(1.0 - gamma) / (gamma - 1.0);
                    let lower = c * (k as f64).powf(1.0 - gamma) / (gamma - 1.0);
                    if upper - lower <= tol {
                        return Ok(sum + 0.5 * (upper + lower));
                    }
                    sum += self.value(k);
                    k += 1;
                    if k > k_max + 10_000_000 {
                        return Err(Error::TailNotCertifiable(format!(
                            "polynomial tail did not certify within tol {tol}"
                        )));
                    }
                }
            }
            IntensityKind::Explicit { values, tail_bound } => {
                if *tail_bound > tol {
                    return Err(Error::TailNotCertifiable(format!(
                        "explicit tail bound {tail_bound} exceeds tolerance {tol}"
                    )));
                }
                let explicit: f64 = (k_max + 1..=values.len()).map(|k| self.value(k)).sum();
                Ok(explicit + tail_bound)
            }
        }
    }

    /// `Σ_k q_k` to absolute tolerance `tol`.
    pub fn total(&self, tol: f64) -> Result<f64> {
        Ok(self.partial_sum(0) + self.tail_sum(0, tol)?)
    }

    /// `Σ_k k q_k`; this is the free-gas critical density `ρ_c^(v=0)`.
    pub fn first_moment(&self, tol: f64) -> Result<FirstMoment> {
        match &self.kind {
            IntensityKind::Geometric { c, r } => {
                Ok(FirstMoment::Finite(c * r / ((1.0 - r) * (1.0 - r))))
            }
            IntensityKind::Polynomial { gamma, .. } => {
                if *gamma <= 2.0 {
                    return Ok(FirstMoment::Infinite);
                }
                let (_, weighted) = self.exp_weighted_sums(0.0, tol)?;
                Ok(FirstMoment::Finite(weighted))
            }
            IntensityKind::Explicit { values, tail_bound } => {
                if *tail_bound > 0.0 {
                    return Err(Error::TailNotCertifiable(
                        "first moment of an explicit sequence with nonzero tail bound".into(),
                    ));
                }
                Ok(FirstMoment::Finite(
                    values.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q).sum(),
                ))
            }
        }
    }

    /// `(Σ_k q_k e^{αk}, Σ_k k q_k e^{αk})` for `α ≤ 0`, each to absolute
    /// tolerance `tol`.
    pub fn exp_weighted_sums(&self, alpha: f64, tol: f64) -> Result<(f64, f64)> {
        if alpha > 0.0 {
            return Err(Error::Precondition(format!(
                "exp_weighted_sums needs alpha <= 0, got {alpha}"
            )));
        }
        match &self.kind {
            IntensityKind::Geometric { c, r } => {
                let y = r * alpha.exp();
                Ok((c * y / (1.0 - y), c * y / ((1.0 - y) * (1.0 - y))))
            }
            IntensityKind::Polynomial { c, gamma } => {
                let mut plain = 0.0;
                let mut weighted = 0.0;
                let mut k = 1usize;
                loop {
                    let q = c * (k as f64).powf(-gamma) * (alpha * k as f64).exp();
                    plain += q;
                    weighted += k as f64 * q;
                    // remainder bounds after k terms
                    let rem = if alpha < 0.0 {
                        // geometric domination: terms shrink at least by e^alpha
                        let ratio = alpha.exp();
                        (k + 1) as f64 * c * ((k + 1) as f64).powf(-gamma)
                            * (alpha * (k + 1) as f64).exp()
                            / (1.0 - ratio)
                    } else {
                        // alpha == 0: integral bound on sum k^{1-gamma}
                        if *gamma <= 2.0 {
                            return Err(Error::TailNotCertifiable(
                                "first moment diverges for gamma <= 2".into(),
                            ));
                        }
                        c * (k as f64).powf(2.0 - gamma) / (gamma - 2.0)
                    };
                    if rem <= tol {
                        return Ok((plain, weighted));
                    }
                    k += 1;
                    if k > 50_000_000 {
                        return Err(Error::TailNotCertifiable(
                            "exp-weighted polynomial sum did not certify".into(),
                        ));
                    }
                }
            }
            IntensityKind::Explicit { values, tail_bound } => {
                let mut plain = 0.0;
                let mut weighted = 0.0;
                for (i, q) in values.iter().enumerate() {
                    let k = (i + 1) as f64;
                    let w = q * (alpha * k).exp();
                    plain += w;
                    weighted += k * w;
                }
                if *tail_bound > 0.0 {
                    let k0 = values.len() as f64 + 1.0;
                    // sup_{k >= k0} k e^{alpha k}
                    let sup = if alpha == 0.0 {
                        f64::INFINITY
                    } else if -1.0 / alpha <= k0 {
                        k0 * (alpha * k0).exp()
                    } else {
                        (-1.0 / alpha) * (-1.0f64).exp()
                    };
                    let bound = sup * tail_bound;
                    if !(bound <= tol) {
                        return Err(Error::TailNotCertifiable(format!(
                            "explicit tail contributes up to {bound} > tol {tol}"
                        )));
                    }
                }
                Ok((plain, weighted))
            }
        }
    }
}

/// The full model: dimension, potential and intensity sequence.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    dimension: usize,
    potential: Potential,
    intensity: IntensitySequence,
}

impl ModelSpec {
    pub fn new(dimension: usize, potential: Potential, intensity: IntensitySequence) -> Result<Self> {
        if dimension < 1 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if potential.dimension() != dimension {
            return Err(Error::InvalidModel(format!(
                "potential dimension {} does not match model dimension {dimension}",
                potential.dimension()
            )));
        }
        Ok(ModelSpec {
            dimension,
            potential,
            intensity,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn intensity(&self) -> &IntensitySequence {
        &self.intensity
    }

    pub fn mark_book(&self) -> MarkBook {
        MarkBook::new(self.dimension)
    }

    /// Loads a model from its JSON description; see the README for the schema.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let raw: ModelConfig = serde_json::from_str(text)?;
        raw.build()
    }

    pub fn from_config_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ModelSpec::from_config_str(&text)
    }

    /// A canonical JSON rendering used for hashing and provenance.
    pub fn canonical_json(&self) -> String {
        let mut potential: Vec<String> = self
            .potential
            .support()
            .map(|(offset, value)| format!("[{:?},{}]", offset, value))
            .collect();
        potential.sort();
        let intensity = match &self.intensity.kind {
            IntensityKind::Geometric { c, r } => format!("{{\"kind\":\"geometric\",\"c\":{c},\"r\":{r}}}"),
            IntensityKind::Polynomial { c, gamma } => {
                format!("{{\"kind\":\"polynomial\",\"c\":{c},\"gamma\":{gamma}}}")
            }
            IntensityKind::Explicit { values, tail_bound } => format!(
                "{{\"kind\":\"explicit\",\"values\":{values:?},\"tail_bound\":{tail_bound}}}"
            ),
        };
        format!(
            "{{\"dimension\":{},\"potential\":[{}],\"intensity\":{}}}",
            self.dimension,
            potential.join(","),
            intensity
        )
    }
}

#[derive(Deserialize)]
struct ModelConfig {
    dimension: usize,
    #[serde(default)]
    potential: Vec<PotentialEntry>,
    intensity: IntensityConfig,
}

#[derive(Deserialize)]
struct PotentialEntry {
    offset: Vec<Coord>,
    value: f64,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum IntensityConfig {
    Geometric { c: f64, r: f64 },
    Polynomial { c: f64, gamma: f64 },
    Explicit {
        values: Vec<f64>,
        #[serde(default)]
        tail_bound: f64,
    },
}

impl ModelConfig {
    fn build(self) -> Result<ModelSpec> {
        let potential = Potential::new(
            self.dimension,
            self.potential.into_iter().map(|e| (e.offset, e.value)),
        )?;
        let intensity = match self.intensity {
            IntensityConfig::Geometric { c, r } => IntensitySequence::geometric(c, r)?,
            IntensityConfig::Polynomial { c, gamma } => IntensitySequence::polynomial(c, gamma)?,
            IntensityConfig::Explicit { values, tail_bound } => {
                IntensitySequence::explicit(values, tail_bound)?
            }
        };
        ModelSpec::new(self.dimension, potential, intensity)
    }
}

/// `T_{x,y}(G_k, G_l) = Σ_{i∈G_k} Σ_{j∈G_l} v(x+i−y−j)` for mark site slices.
pub(crate) fn pair_interaction_sites(
    potential: &Potential,
    x: &[Coord],
    g_k: &[Site],
    y: &[Coord],
    g_l: &[Site],
) -> f64 {
    let d = x.len();
    // bounding-box skip: marks within one shell of their radius
    let sep = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .max()
        .unwrap_or(0);
    let rad_k = g_k.last().map(|s| linf_norm(s)).unwrap_or(0);
    let rad_l = g_l.last().map(|s| linf_norm(s)).unwrap_or(0);
    if sep > potential.range() + rad_k + rad_l {
        return 0.0;
    }
    let mut total = 0.0;
    let mut offset = vec![0; d];
    for i in g_k {
        for j in g_l {
            for (idx, o) in offset.iter_mut().enumerate() {
                *o = x[idx] + i[idx] - y[idx] - j[idx];
            }
            total += potential.value(&offset);
        }
    }
    total
}

/// The double sum `T_{x,y}(G_k, G_l)` of the pair interaction between a
/// k-mark at `x` and an l-mark at `y`.
pub fn pair_mark_interaction(x: &[Coord], y: &[Coord], k: usize, l: usize, spec: &ModelSpec) -> f64 {
    let mut book = spec.mark_book();
    let sites = book.mark(k.max(l));
    pair_interaction_sites(spec.potential(), x, &sites[..k], y, &sites[..l])
}

/// The self-interaction `t_k = T_{0,0}(G_k, G_k)` of a single k-mark.
pub fn self_interaction(k: usize, spec: &ModelSpec) -> f64 {
    let origin = vec![0; spec.dimension()];
    pair_mark_interaction(&origin, &origin, k, k, spec)
}

/// `v̄` for the model's potential.
pub fn vbar(spec: &ModelSpec) -> f64 {
    spec.potential().vbar()
}

/// The boundary-deficit sequence `(k, v̄·k − t_k)` for `k = 1..=k_max`,
/// computed incrementally from the nested mark family.
pub fn tk_deficit_curve(k_max: usize, spec: &ModelSpec) -> Vec<(usize, f64)> {
    self_interactions(k_max, spec)
        .into_iter()
        .enumerate()
        .map(|(i, t)| (i + 1, spec.potential().vbar() * (i + 1) as f64 - t))
        .collect()
}

/// `t_1, …, t_{k_max}` in one pass: `t_k = t_{k-1} + v(0) + 2 Σ_{j<k} v(s_k − s_j)`.
pub fn self_interactions(k_max: usize, spec: &ModelSpec) -> Vec<f64> {
    let mut book = spec.mark_book();
    let sites = book.mark(k_max).to_vec();
    let pot = spec.potential();
    let origin = vec![0; spec.dimension()];
    let mut out = Vec::with_capacity(k_max);
    let mut t = 0.0;
    let mut offset = vec![0; spec.dimension()];
    for k in 1..=k_max {
        let new = &sites[k - 1];
        let mut cross = 0.0;
        for old in &sites[..k - 1] {
            for (idx, o) in offset.iter_mut().enumerate() {
                *o = new[idx] - old[idx];
            }
            cross += pot.value(&offset);
        }
        t += pot.value(&origin) + 2.0 * cross;
        out.push(t);
    }
    out
}

/// The d=1 reference model used throughout the tests:
/// `v = {0 ↦ 1, ±1 ↦ 0.5}` and `q_k = 2^{-k}`.
pub fn reference_model_d1() -> ModelSpec {
    let potential = Potential::new(1, vec![(vec![0], 1.0), (vec![1], 0.5)]).unwrap();
    let intensity = IntensitySequence::geometric(1.0, 0.5).unwrap();
    ModelSpec::new(1, potential, intensity).unwrap()
}

//! Numerical evaluation of the variational objects: relative entropy, the
//! free-gas curve, the sandwich bounds, the Poisson-product ansatz and the
//! Poisson-restricted Euler–Lagrange fixed point.
//!
//! The supremum over general stationary processes in the derivative and
//! Euler–Lagrange formulas is not computable; every operation here restricts
//! it to the Poisson product field `P^m`, for which all expectations have
//! closed forms. Outputs that depend on this restriction are tagged with
//! [`POISSON_RESTRICTED`].

use crate::lattice::Coord;
use crate::model::{pair_interaction_sites, FirstMoment, IntensitySequence, ModelSpec};
use crate::{Error, Result};

/// Approximation tag carried by Poisson-restricted results.
pub const POISSON_RESTRICTED: &str = "poisson-restricted";

/// A finitely supported intensity sequence `m_1, …, m_K` of mark densities.
#[derive(Debug, Clone, PartialEq)]
pub struct MassSequence {
    values: Vec<f64>,
}

impl MassSequence {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::Precondition(
                "mass sequence entries must be finite and nonnegative".into(),
            ));
        }
        Ok(MassSequence { values })
    }

    pub fn zero(cutoff: usize) -> Self {
        MassSequence {
            values: vec![0.0; cutoff],
        }
    }

    /// `m_k`, zero beyond the cutoff.
    pub fn get(&self, k: usize) -> f64 {
        assert!(k >= 1);
        self.values.get(k - 1).copied().unwrap_or(0.0)
    }

    pub fn cutoff(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Microscopic particle density `ρ_mi = Σ_k k·m_k`.
    pub fn rho_mi(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, m)| (i + 1) as f64 * m)
            .sum()
    }
}

/// A probability distribution `ψ` on overlap numbers `a ∈ {0, 1, 2, …}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroDistribution {
    weights: Vec<f64>,
}

impl MacroDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Precondition(
                "macro distribution weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Precondition(format!(
                "macro distribution weights sum to {sum}, expected 1"
            )));
        }
        Ok(MacroDistribution { weights })
    }

    pub fn delta(a: usize) -> Self {
        let mut weights = vec![0.0; a + 1];
        weights[a] = 1.0;
        MacroDistribution { weights }
    }

    pub fn weight(&self, a: usize) -> f64 {
        self.weights.get(a).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Macroscopic particle density `ρ_ma = Σ_a a·ψ(a)`.
    pub fn rho_ma(&self) -> f64 {
        self.weights
            .iter()
            .enumerate()
            .map(|(a, w)| a as f64 * w)
            .sum()
    }
}

/// Lagrange multiplier state of a constrained-entropy solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Multiplier {
    Finite(f64),
    /// Zero density: the multiplier escapes to `-∞`.
    NegInfinite,
    /// At or above the critical density: no multiplier exists.
    Saturated,
}

impl Multiplier {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Multiplier::Finite(a) => Some(*a),
            _ => None,
        }
    }
}

/// `H(m|q) = Σ_k (q_k − m_k + m_k log(m_k/q_k))` plus the certified q-tail
/// beyond the cutoff of `m`. Returns `+∞` when `m_k > 0` where `q_k = 0`.
pub fn relative_entropy(m: &MassSequence, q: &IntensitySequence, tol: f64) -> Result<f64> {
    let mut sum = 0.0;
    for k in 1..=m.cutoff() {
        let mk = m.get(k);
        let qk = q.value(k);
        if qk == 0.0 {
            if mk > 0.0 {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        sum += qk - mk;
        if mk > 0.0 {
            sum += mk * (mk / qk).ln();
        }
    }
    Ok(sum + q.tail_sum(m.cutoff(), tol)?)
}

/// The free-gas minimiser at density `ρ`: `m_k = q_k e^{αk}` with the
/// multiplier fixed by `Σ_k k m_k = ρ`, and the free energy
/// `χ^(v=0)(ρ) = Σ_k (q_k − m_k) + αρ`.
#[derive(Debug, Clone)]
pub struct FreeGasSolution {
    pub alpha: Multiplier,
    pub m: MassSequence,
    pub chi: f64,
    /// `ρ_c^(v=0) = Σ_k k q_k`.
    pub rho_c: FirstMoment,
    /// `χ^(v=0)(0) = Σ_k q_k`.
    pub chi_at_zero: f64,
    /// Mass `Σ_{k>K} k m_k` discarded by the stored truncation of `m`.
    pub discarded_mass: f64,
}

fn bisect_alpha(
    q: &IntensitySequence,
    target: f64,
    tol: f64,
) -> Result<f64> {
    // Σ_k k q_k e^{αk} is increasing in α; bracket [-64, 0] with expansion.
    let moment = |alpha: f64| -> Result<f64> { Ok(q.exp_weighted_sums(alpha, tol)?.1) };
    let mut lo = -64.0;
    let mut hi = 0.0;
    while moment(lo)? > target {
        lo *= 2.0;
        if lo < -1e6 {
            return Err(Error::NoRoot(format!(
                "no multiplier reaches density {target}"
            )));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let value = moment(mid)?;
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        // relative density tolerance 1e-12
        if ((value - target) / target.max(f64::MIN_POSITIVE)).abs() < 1e-12 {
            return Ok(mid);
        }
    }
    Ok(0.5 * (lo + hi))
}

fn truncate_free_gas(q: &IntensitySequence, alpha: f64, tol: f64) -> (MassSequence, f64) {
    // cutoff where the discarded k-weighted mass drops below tol
    let mut values = Vec::new();
    let mut k = 1usize;
    loop {
        values.push(q.value(k) * (alpha * k as f64).exp());
        let discarded = q
            .exp_weighted_sums(alpha, tol)
            .map(|(_, w)| w - values.iter().enumerate().map(|(i, m)| (i + 1) as f64 * m).sum::<f64>())
            .unwrap_or(0.0);
        if discarded.abs() <= tol || k >= 4096 {
            return (
                MassSequence { values },
                discarded.max(0.0),
            );
        }
        k += 1;
    }
}

/// Solves the free-gas variational problem at density `ρ`.
pub fn free_gas_chi(rho: f64, q: &IntensitySequence, tol: f64) -> Result<FreeGasSolution> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Precondition(format!(
            "density must be finite and nonnegative, got {rho}"
        )));
    }
    let rho_c = q.first_moment(tol)?;
    let chi_at_zero = q.total(tol)?;
    if rho == 0.0 {
        return Ok(FreeGasSolution {
            alpha: Multiplier::NegInfinite,
            m: MassSequence::zero(0),
            chi: chi_at_zero,
            rho_c,
            chi_at_zero,
            discarded_mass: 0.0,
        });
    }
    let saturated = match rho_c {
        FirstMoment::Finite(rc) => rho >= rc,
        FirstMoment::Infinite => false,
    };
    if saturated {
        let rc = match rho_c {
            FirstMoment::Finite(rc) => rc,
            FirstMoment::Infinite => unreachable!(),
        };
        // at rho = rho_c the multiplier is exactly 0 and m = q; beyond, no
        // multiplier exists and chi stays 0
        let (m, discarded) = truncate_free_gas(q, 0.0, tol);
        let alpha = if rho > rc {
            Multiplier::Saturated
        } else {
            Multiplier::Finite(0.0)
        };
        return Ok(FreeGasSolution {
            alpha,
            m,
            chi: 0.0,
            rho_c,
            chi_at_zero,
            discarded_mass: discarded,
        });
    }
    let alpha = bisect_alpha(q, rho, tol)?;
    let (plain, _) = q.exp_weighted_sums(alpha, tol)?;
    let chi = chi_at_zero - plain + alpha * rho;
    let (m, discarded) = truncate_free_gas(q, alpha, tol);
    Ok(FreeGasSolution {
        alpha: Multiplier::Finite(alpha),
        m,
        chi: chi.max(0.0),
        rho_c,
        chi_at_zero,
        discarded_mass: discarded,
    })
}

/// Two-sided sandwich for the interacting free energy:
/// `χ^(v=0)(ρ) + v̄ρ² ≤ χ(ρ) ≤ χ^(v=0)(ρ) + v̄(ρ² + ρ)`, the lower bound
/// valid under `2v(0) ≥ v̄`.
#[derive(Debug, Clone, Copy)]
pub struct ChiBounds {
    pub lower: f64,
    pub upper: f64,
    pub lower_valid: bool,
}

pub fn chi_bounds(rho: f64, spec: &ModelSpec, tol: f64) -> Result<ChiBounds> {
    let free = free_gas_chi(rho, spec.intensity(), tol)?;
    let vbar = spec.potential().vbar();
    let origin = vec![0; spec.dimension()];
    let v0 = spec.potential().value(&origin);
    Ok(ChiBounds {
        lower: free.chi + vbar * rho * rho,
        upper: free.chi + vbar * (rho * rho + rho),
        lower_valid: 2.0 * v0 >= vbar,
    })
}

/// The Poisson-product upper bound for `φ(m, δ_a)`:
/// `H(m|q) + v̄ρ_mi² + Σ_k m_k t_k + 2v̄aρ_mi + v̄a²`.
pub fn product_ansatz_phi(m: &MassSequence, a: usize, spec: &ModelSpec, tol: f64) -> Result<f64> {
    let entropy = relative_entropy(m, spec.intensity(), tol)?;
    let rho = m.rho_mi();
    let vbar = spec.potential().vbar();
    let ts = crate::model::self_interactions(m.cutoff().max(1), spec);
    let self_energy: f64 = (1..=m.cutoff()).map(|k| m.get(k) * ts[k - 1]).sum();
    Ok(entropy
        + vbar * rho * rho
        + self_energy
        + 2.0 * vbar * a as f64 * rho
        + vbar * (a as f64) * (a as f64))
}

/// Minimises the product ansatz over mass sequences with cutoff `k_cut` at
/// fixed density `ρ`: the minimiser is `m_k = q_k e^{βk − t_k − 2v̄kρ}` with
/// `β` fixed by the density constraint.
pub fn minimize_product_ansatz(
    rho: f64,
    k_cut: usize,
    spec: &ModelSpec,
    tol: f64,
) -> Result<(MassSequence, f64)> {
    if !(rho >= 0.0) || k_cut == 0 {
        return Err(Error::Precondition(
            "density must be nonnegative and the cutoff positive".into(),
        ));
    }
    if rho == 0.0 {
        let m = MassSequence::zero(k_cut);
        let value = product_ansatz_phi(&m, 0, spec, tol)?;
        return Ok((m, value));
    }
    let q = spec.intensity();
    let ts = crate::model::self_interactions(k_cut, spec);
    let vbar = spec.potential().vbar();
    let weight = |k: usize| q.value(k) * (-ts[k - 1] - 2.0 * vbar * k as f64 * rho).exp();
    let density = |beta: f64| -> f64 {
        (1..=k_cut)
            .map(|k| k as f64 * weight(k) * (beta * k as f64).exp())
            .sum()
    };
    let mut lo = -64.0;
    let mut hi = 64.0;
    while density(lo) > rho {
        lo *= 2.0;
    }
    while density(hi) < rho {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NoRoot("product-ansatz multiplier diverging".into()));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if density(mid) < rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = 0.5 * (lo + hi);
    let values: Vec<f64> = (1..=k_cut)
        .map(|k| weight(k) * (beta * k as f64).exp())
        .collect();
    let m = MassSequence { values };
    let value = product_ansatz_phi(&m, 0, spec, tol)?;
    Ok((m, value))
}

/// Sign of the exponent in the Laplace functional `E[e^{±2Φ^(k)}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingSign {
    Plus2,
    Minus2,
}

impl CouplingSign {
    fn factor(self) -> f64 {
        match self {
            CouplingSign::Plus2 => 2.0,
            CouplingSign::Minus2 => -2.0,
        }
    }
}

/// `log E^{P^m}[e^{±2Φ^(k)}] = Σ_{x∈Z^d} Σ_l m_l (e^{±2T_{0,x}(G_k,G_l)} − 1)`,
/// the exact Laplace functional of the Poisson product field with
/// intensities `m`. The spatial sum is finite by compact support of `v`.
pub fn poisson_exp_phi_log(m: &MassSequence, k: usize, spec: &ModelSpec, sign: CouplingSign) -> f64 {
    let s = sign.factor();
    let mut book = spec.mark_book();
    let k_top = k.max(m.cutoff().max(1));
    let sites = book.mark(k_top).to_vec();
    let g_k = &sites[..k];
    let pot = spec.potential();
    let d = spec.dimension();
    let mut total = 0.0;
    for l in 1..=m.cutoff() {
        let ml = m.get(l);
        if ml == 0.0 {
            continue;
        }
        let g_l = &sites[..l];
        // x ranges over the support of T(G_k, G_l): a box of radius
        // range + rad(G_k) + rad(G_l)
        let rad_k = crate::lattice::linf_norm(&sites[k - 1]);
        let rad_l = crate::lattice::linf_norm(&sites[l - 1]);
        let reach = pot.range() + rad_k + rad_l;
        let window = crate::lattice::BoxRegion::centered(d, reach);
        for x in window.sites() {
            let t = pair_interaction_sites(pot, &vec![0; d], g_k, &x, g_l);
            if t > 0.0 {
                total += ml * ((s * t).exp() - 1.0);
            }
        }
    }
    total
}

/// `E^{P^m}[e^{±2Φ^(k)}]`; use [`poisson_exp_phi_log`] when the `+2` branch
/// may overflow.
pub fn poisson_exp_phi(m: &MassSequence, k: usize, spec: &ModelSpec, sign: CouplingSign) -> f64 {
    poisson_exp_phi_log(m, k, spec, sign).exp()
}

/// The Poisson-restricted Euler–Lagrange solution.
#[derive(Debug, Clone)]
pub struct ElSolution {
    pub m: MassSequence,
    pub alpha: Multiplier,
    /// `max_k |m_k − RHS_k| / m_k` at convergence.
    pub residual: f64,
    pub iterations: usize,
    /// Mass `Σ_{k>K} k q_k e^{αk}` the cutoff discards, when certifiable.
    pub discarded_tail_mass: f64,
    /// Always [`POISSON_RESTRICTED`]: the supremum over stationary fields is
    /// replaced by the Poisson product field `P^m`.
    pub approximation: &'static str,
}

/// Damped fixed-point iteration for the Euler–Lagrange system
/// `m_k = q_k e^{αk − t_k} Σ_a ψ(a) e^{−2v̄ak} E^{P^m}[e^{−2Φ^(k)}]`,
/// with an inner bisection on `α` enforcing `Σ_k k m_k = ρ − ρ_ma(ψ)`.
pub fn el_fixed_point(
    rho: f64,
    psi: &MacroDistribution,
    k_cut: usize,
    spec: &ModelSpec,
    tol: f64,
    damping: f64,
) -> Result<ElSolution> {
    if !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Precondition(format!(
            "damping must lie in (0, 1], got {damping}"
        )));
    }
    let rho_mi = rho - psi.rho_ma();
    if rho_mi < 0.0 {
        return Err(Error::Precondition(format!(
            "microscopic density rho - rho_ma = {rho_mi} is negative"
        )));
    }
    if rho_mi == 0.0 {
        return Ok(ElSolution {
            m: MassSequence::zero(k_cut),
            alpha: Multiplier::NegInfinite,
            residual: 0.0,
            iterations: 0,
            discarded_tail_mass: 0.0,
            approximation: POISSON_RESTRICTED,
        });
    }
    let q = spec.intensity();
    let vbar = spec.potential().vbar();
    let ts = crate::model::self_interactions(k_cut, spec);
    let psi_mix = |k: usize| -> f64 {
        psi.weights()
            .iter()
            .enumerate()
            .map(|(a, w)| w * (-2.0 * vbar * (a * k) as f64).exp())
            .sum()
    };

    // initial iterate: free-gas shape at the target density, truncated
    let mut m = {
        let free = free_gas_chi(rho_mi.min(1.0), q, tol)?;
        let mut values = vec![0.0; k_cut];
        for (k, v) in values.iter_mut().enumerate() {
            *v = free.m.get(k + 1).max(q.value(k + 1) * 1e-6);
        }
        let scale = rho_mi
            / values
                .iter()
                .enumerate()
                .map(|(i, v)| (i + 1) as f64 * v)
                .sum::<f64>();
        MassSequence {
            values: values.iter().map(|v| v * scale).collect(),
        }
    };

    let solve_alpha = |weights: &[f64]| -> Result<f64> {
        let density = |alpha: f64| -> f64 {
            weights
                .iter()
                .enumerate()
                .map(|(i, w)| (i + 1) as f64 * w * (alpha * (i + 1) as f64).exp())
                .sum()
        };
        let mut lo = -64.0;
        let mut hi = 64.0;
        while density(lo) > rho_mi {
            lo *= 2.0;
        }
        while density(hi) < rho_mi {
            hi *= 2.0;
            if hi > 1e9 {
                return Err(Error::NoRoot("EL multiplier diverging".into()));
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if density(mid) < rho_mi {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };

    let max_iterations = 500;
    let mut history: Vec<f64> = Vec::new();
    let mut alpha = 0.0;
    for iteration in 1..=max_iterations {
        // right-hand side weights at the current m
        let weights: Vec<f64> = (1..=k_cut)
            .map(|k| {
                q.value(k)
                    * (-ts[k - 1]).exp()
                    * psi_mix(k)
                    * poisson_exp_phi(&m, k, spec, CouplingSign::Minus2)
            })
            .collect();
        alpha = solve_alpha(&weights)?;
        let target: Vec<f64> = weights
            .iter()
            .enumerate()
            .map(|(i, w)| w * (alpha * (i + 1) as f64).exp())
            .collect();
        let mut residual: f64 = 0.0;
        for k in 1..=k_cut {
            let mk = m.get(k);
            if mk > 0.0 {
                residual = residual.max((mk - target[k - 1]).abs() / mk);
            }
        }
        history.push(residual);
        if residual < tol {
            let discarded = match q.exp_weighted_sums(alpha.min(0.0), tol) {
                Ok((_, weighted)) if alpha <= 0.0 => {
                    (weighted
                        - (1..=k_cut)
                            .map(|k| k as f64 * q.value(k) * (alpha * k as f64).exp())
                            .sum::<f64>())
                    .max(0.0)
                }
                _ => 0.0,
            };
            return Ok(ElSolution {
                m,
                alpha: Multiplier::Finite(alpha),
                residual,
                iterations: iteration,
                discarded_tail_mass: discarded,
                approximation: POISSON_RESTRICTED,
            });
        }
        // divergence detection: residual grows three consecutive iterations
        if history.len() >= 4 {
            let n = history.len();
            if history[n - 1] > history[n - 2]
                && history[n - 2] > history[n - 3]
                && history[n - 3] > history[n - 4]
            {
                return Err(Error::NonConvergence(history));
            }
        }
        let new_values: Vec<f64> = (1..=k_cut)
            .map(|k| (1.0 - damping) * m.get(k) + damping * target[k - 1])
            .collect();
        m = MassSequence { values: new_values };
        // keep the density constraint exact after damping
        let rho_now = m.rho_mi();
        if rho_now > 0.0 {
            let scale = rho_mi / rho_now;
            m = MassSequence {
                values: m.values.iter().map(|v| v * scale).collect(),
            };
        }
        let _ = alpha;
    }
    Err(Error::NonConvergence(history))
}

/// Both derivative formulas of `∂φ/∂m_k` under the Poisson restriction.
///
/// `primary` is the Poisson-point-insertion form
/// `log(m_k/q_k) + t_k − log Σ_a ψ(a) e^{−2v̄ak} E[e^{−2Φ^(k)}]`, and
/// `alternate` is the thinning form
/// `log(m_k/q_k) + t_k + log Σ_a ψ(a) e^{2v̄ak} E[e^{2Φ^(k)}]`, using
/// `E[N_0^(δ_k) e^{2Φ^(k)}] = m_k e^{2t_k} E[e^{2Φ^(k)}]`. They agree only
/// for `v ≡ 0`; the discrepancy is reported, not resolved.
#[derive(Debug, Clone, Copy)]
pub struct DerivativeDiagnostic {
    pub primary: f64,
    pub alternate: f64,
    pub discrepancy: f64,
}

pub fn alt_derivative_poisson(
    m: &MassSequence,
    psi: &MacroDistribution,
    k: usize,
    spec: &ModelSpec,
) -> Result<DerivativeDiagnostic> {
    let mk = m.get(k);
    if mk <= 0.0 {
        return Err(Error::Precondition(format!("m_{k} must be positive")));
    }
    let qk = spec.intensity().value(k);
    if qk <= 0.0 {
        return Err(Error::Precondition(format!("q_{k} must be positive")));
    }
    let t_k = crate::model::self_interaction(k, spec);
    let vbar = spec.potential().vbar();
    let log_minus = poisson_exp_phi_log(m, k, spec, CouplingSign::Minus2);
    let log_plus = poisson_exp_phi_log(m, k, spec, CouplingSign::Plus2);
    let mix = |sign: f64, log_e: f64| -> f64 {
        // log Σ_a ψ(a) e^{sign·2v̄ak} E, in log space
        let mut best = f64::NEG_INFINITY;
        let terms: Vec<f64> = psi
            .weights()
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > 0.0)
            .map(|(a, w)| {
                let t = w.ln() + sign * 2.0 * vbar * (a * k) as f64 + log_e;
                best = best.max(t);
                t
            })
            .collect();
        best + terms.iter().map(|t| (t - best).exp()).sum::<f64>().ln()
    };
    let base = (mk / qk).ln() + t_k;
    let primary = base - mix(-1.0, log_minus);
    let alternate = base + mix(1.0, log_plus);
    Ok(DerivativeDiagnostic {
        primary,
        alternate,
        discrepancy: alternate - primary,
    })
}

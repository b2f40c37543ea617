//! Exact finite-volume partition functions by exhaustive enumeration, the
//! pinned-macroscopic-mark variant, and an independent compound-Poisson
//! oracle for the non-interacting case.

use crate::energy::{total_energy, BoxRegion, Configuration};
use crate::lattice::Site;
use crate::model::ModelSpec;
use crate::varfree::{relative_entropy, MassSequence};
use crate::{Error, Result};

/// Ceiling on the enumeration state count.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationLimits {
    pub max_states: u128,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        EnumerationLimits {
            max_states: 100_000_000,
        }
    }
}

/// Exact partition value together with provenance counters.
#[derive(Debug, Clone)]
pub struct PartitionResult {
    pub value: f64,
    pub log_value: f64,
    pub configuration_count: u128,
    /// `-|Λ|·Σ_{k>K} q_k`, the folded-in weight of never-present large marks.
    pub tail_factor_log: f64,
}

/// A non-increasing list of macroscopic mark sizes pinned at the origin.
#[derive(Debug, Clone)]
pub struct PinnedMacro {
    sizes: Vec<usize>,
}

impl PinnedMacro {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Precondition("pinned mark sizes must be >= 1".into()));
        }
        if sizes.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Precondition(
                "pinned mark sizes must be non-increasing".into(),
            ));
        }
        Ok(PinnedMacro { sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// The pinned configuration `ω_ψ = Σ_a δ_(0, G_{N_a})`.
    pub fn configuration(&self, dimension: usize) -> Configuration {
        let origin = vec![0; dimension];
        let mut cfg = Configuration::empty();
        for &s in &self.sizes {
            cfg.add(origin.clone(), s, 1);
        }
        cfg
    }
}

/// Per-mark-size count constraint for the pinned-macro partition function.
#[derive(Debug, Clone)]
pub enum CountWindow {
    /// No constraint on the point counts.
    All,
    /// `N^(δ_k) ∈ m_k|Λ|(1−δ, 1+δ)` for every `k ≤ K`, with `m_k = 0`
    /// forcing the count to zero.
    Band { m: Vec<f64>, delta: f64 },
}

/// One admissible placement slot `(site, k)` of the enumeration.
struct Slot {
    site: Site,
    k: usize,
    log_q: f64,
}

/// Admissible slots, site-major, mark size descending within a site
/// (descending k lets the particle budget prune early).
fn canonical_slots(region: &BoxRegion, n: u64, spec: &ModelSpec) -> Vec<Slot> {
    let mut book = spec.mark_book();
    let mut slots = Vec::new();
    for site in region.sites() {
        for k in (1..=n as usize).rev() {
            let q = spec.intensity().value(k);
            if q > 0.0 && region.contains_mark(&site, book.mark(k)) {
                slots.push(Slot {
                    site: site.clone(),
                    k,
                    log_q: q.ln(),
                });
            }
        }
    }
    slots
}

/// Counts the Dirichlet-admissible configurations with exactly `n` particles
/// by dynamic programming over slots; independent of the enumerator.
pub fn count_canonical(region: &BoxRegion, n: u64, spec: &ModelSpec) -> u128 {
    let slots = canonical_slots(region, n, spec);
    let n = n as usize;
    let mut ways = vec![0u128; n + 1];
    ways[0] = 1;
    for slot in &slots {
        let mut next = ways.clone();
        for budget in 0..=n {
            if ways[budget] == 0 {
                continue;
            }
            let mut used = slot.k;
            let mut mult = 1;
            while budget + used <= n {
                next[budget + used] = next[budget + used].saturating_add(ways[budget]);
                mult += 1;
                used = slot.k * mult;
            }
        }
        ways = next;
    }
    ways[n]
}

/// Streams every Dirichlet-admissible configuration in `Λ` with exactly `n`
/// particles, each exactly once, and returns the configuration count.
/// Refuses up front when the state count exceeds the ceiling.
pub fn enumerate_canonical(
    region: &BoxRegion,
    n: u64,
    spec: &ModelSpec,
    limits: &EnumerationLimits,
    mut visit: impl FnMut(&Configuration),
) -> Result<u128> {
    let estimated = count_canonical(region, n, spec);
    if estimated > limits.max_states {
        return Err(Error::EnumerationRefused {
            estimated,
            ceiling: limits.max_states,
        });
    }
    let slots = canonical_slots(region, n, spec);
    let mut current = Configuration::empty();
    let mut count = 0u128;
    descend_budget(&slots, 0, n as usize, &mut current, &mut count, &mut visit);
    Ok(count)
}

fn descend_budget(
    slots: &[Slot],
    index: usize,
    budget: usize,
    current: &mut Configuration,
    count: &mut u128,
    visit: &mut impl FnMut(&Configuration),
) {
    if budget == 0 {
        *count += 1;
        visit(current);
        return;
    }
    if index >= slots.len() {
        return;
    }
    let slot = &slots[index];
    let max_mult = budget / slot.k;
    for mult in 0..=max_mult {
        if mult > 0 {
            current.add(slot.site.clone(), slot.k, 1);
        }
        descend_budget(
            slots,
            index + 1,
            budget - mult * slot.k,
            current,
            count,
            visit,
        );
    }
    for _ in 0..max_mult {
        current.remove_one(&slot.site, slot.k).unwrap();
    }
}

/// Collects the enumeration into a vector.
pub fn canonical_states(
    region: &BoxRegion,
    n: u64,
    spec: &ModelSpec,
    limits: &EnumerationLimits,
) -> Result<Vec<Configuration>> {
    let mut out = Vec::new();
    enumerate_canonical(region, n, spec, limits, |c| out.push(c.clone()))?;
    Ok(out)
}

fn ln_factorial(n: u64) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Log of the Poisson-product weight `Π q_k^{ξ}/ξ!` of a configuration
/// (the `e^{-q}` normalisers are accounted for separately).
fn log_poisson_products(cfg: &Configuration, spec: &ModelSpec) -> f64 {
    cfg.entries()
        .map(|(_, k, m)| m as f64 * spec.intensity().value(k).ln() - ln_factorial(m))
        .sum()
}

/// Streaming log-sum-exp with compensated accumulation.
struct LogSumExp {
    max: f64,
    sum: f64,
    comp: f64,
}

impl LogSumExp {
    fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
            comp: 0.0,
        }
    }

    fn push(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            if self.max > f64::NEG_INFINITY {
                let scale = (self.max - log_term).exp();
                self.sum *= scale;
                self.comp *= scale;
            }
            self.max = log_term;
        }
        // Kahan step
        let y = (log_term - self.max).exp() - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    fn log_total(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

/// `Z_{N,Λ,Dir} = E_Λ[e^{-Φ_{Λ,Λ}} 1{N_Λ^ℓ = N} 1{Ñ_{Λ^c} = 0}]` by exact
/// enumeration; marks of size `> N` contribute only their Poisson-zero
/// factor, which is exact, not an approximation.
pub fn partition_dirichlet(
    region: &BoxRegion,
    n: u64,
    spec: &ModelSpec,
    tol: f64,
    limits: &EnumerationLimits,
) -> Result<PartitionResult> {
    let volume = region.volume() as f64;
    let q_total = spec.intensity().total(tol)?;
    let tail_factor_log = -volume * spec.intensity().tail_sum(n as usize, tol)?;
    let base_log = -volume * q_total;

    let mut lse = LogSumExp::new();
    let count = enumerate_canonical(region, n, spec, limits, |cfg| {
        let phi = total_energy(cfg, region, region, spec);
        lse.push(log_poisson_products(cfg, spec) - phi);
    })?;
    let log_value = base_log + lse.log_total();
    Ok(PartitionResult {
        value: log_value.exp(),
        log_value,
        configuration_count: count,
        tail_factor_log,
    })
}

/// `log P_Λ(M_{Λ,Λ^c} = 0) = -Σ_k q_k·#{x ∈ Λ : x + G_k ⊄ Λ}`, the log
/// probability of the Dirichlet conditioning event.
pub fn log_conditioning_probability(region: &BoxRegion, spec: &ModelSpec, tol: f64) -> Result<f64> {
    let volume = region.volume() as f64;
    let q_total = spec.intensity().total(tol)?;
    let mut book = spec.mark_book();
    // #fail(k) = |Λ| - n_k, and n_k = 0 once G_k no longer fits anywhere
    let mut fitted = 0.0;
    let mut k = 1usize;
    loop {
        let mark = book.mark(k);
        let n_k = region
            .sites()
            .iter()
            .filter(|s| region.contains_mark(s, mark))
            .count() as f64;
        if n_k == 0.0 {
            break;
        }
        fitted += spec.intensity().value(k) * n_k;
        k += 1;
        if k as u64 > region.volume() {
            break;
        }
    }
    Ok(-volume * q_total + fitted)
}

/// `Z^Dir_{N,Λ} = Z_{N,Λ,Dir} / P_Λ(M_{Λ,Λ^c} = 0)`, the conditional variant.
pub fn partition_conditional(
    region: &BoxRegion,
    n: u64,
    spec: &ModelSpec,
    tol: f64,
    limits: &EnumerationLimits,
) -> Result<PartitionResult> {
    let unconditioned = partition_dirichlet(region, n, spec, tol, limits)?;
    let log_cond = log_conditioning_probability(region, spec, tol)?;
    let log_value = unconditioned.log_value - log_cond;
    Ok(PartitionResult {
        value: log_value.exp(),
        log_value,
        configuration_count: unconditioned.configuration_count,
        tail_factor_log: unconditioned.tail_factor_log,
    })
}

/// Poisson tail quantile: the smallest `c` with `P(Poi(lambda) > c) <= eps`.
fn poisson_quantile(lambda: f64, eps: f64) -> u64 {
    let mut log_p = -lambda; // P(X = 0)
    let mut cdf = log_p.exp();
    let mut c = 0u64;
    while 1.0 - cdf > eps {
        c += 1;
        log_p += lambda.ln() - (c as f64).ln();
        cdf += log_p.exp();
        if c > 10_000_000 {
            break;
        }
    }
    c
}

/// Pinned-macro partition function: expectation over configurations with
/// marks of size `≤ k_max` only, energy evaluated for `ω + ω_ψ`, restricted
/// by per-size count windows. The reference measure is the restriction of
/// the process to marks `≤ k_max`, so no tail factor applies.
pub fn pinned_macro_partition(
    region: &BoxRegion,
    pinned: &PinnedMacro,
    k_max: usize,
    window: &CountWindow,
    spec: &ModelSpec,
    tol: f64,
    limits: &EnumerationLimits,
) -> Result<PartitionResult> {
    let mut book = spec.mark_book();
    let origin = vec![0; spec.dimension()];
    for &s in pinned.sizes() {
        if !region.contains_mark(&origin, book.mark(s)) {
            return Err(Error::Precondition(format!(
                "pinned mark of size {s} is not Dirichlet-admissible in the box"
            )));
        }
    }
    let volume = region.volume() as f64;

    // inclusive count bounds per mark size; `None` upper bound is resolved
    // via a certified Poisson tail cut
    let mut lo = vec![0u64; k_max + 1];
    let mut hi = vec![0u64; k_max + 1];
    match window {
        CountWindow::All => {
            for k in 1..=k_max {
                let lambda = spec.intensity().value(k) * volume;
                hi[k] = poisson_quantile(lambda, tol / k_max as f64);
            }
        }
        CountWindow::Band { m, delta } => {
            if !(*delta > 0.0 && *delta < 1.0) {
                return Err(Error::Precondition("window delta must be in (0,1)".into()));
            }
            for k in 1..=k_max {
                let mk = m.get(k - 1).copied().unwrap_or(0.0);
                if mk == 0.0 {
                    continue; // count forced to zero
                }
                let lower = mk * volume * (1.0 - delta);
                let upper = mk * volume * (1.0 + delta);
                // open interval (lower, upper)
                lo[k] = lower.floor() as u64 + 1;
                hi[k] = (upper.ceil() as u64).saturating_sub(1);
                if lo[k] > hi[k] {
                    return Err(Error::Precondition(format!(
                        "empty count window for mark size {k}"
                    )));
                }
            }
        }
    }

    // slots: all sites of the box, marks <= k_max with positive window
    let mut slots = Vec::new();
    for site in region.sites() {
        for k in (1..=k_max).rev() {
            let q = spec.intensity().value(k);
            if q > 0.0 && hi[k] > 0 {
                slots.push(Slot {
                    site: site.clone(),
                    k,
                    log_q: q.ln(),
                });
            }
        }
    }

    let pinned_cfg = pinned.configuration(spec.dimension());
    let base_log = -volume * spec.intensity().partial_sum(k_max);

    let mut lse = LogSumExp::new();
    let mut count = 0u128;
    let mut counts = vec![0u64; k_max + 1];
    let mut current = pinned_cfg.clone();
    descend_windows(
        &slots,
        0,
        &lo,
        &hi,
        &mut counts,
        &mut current,
        &pinned_cfg,
        region,
        spec,
        limits,
        &mut count,
        &mut lse,
    )?;
    let log_value = base_log + lse.log_total();
    Ok(PartitionResult {
        value: log_value.exp(),
        log_value,
        configuration_count: count,
        tail_factor_log: 0.0,
    })
}

#[allow(clippy::too_many_arguments)]
fn descend_windows(
    slots: &[Slot],
    index: usize,
    lo: &[u64],
    hi: &[u64],
    counts: &mut Vec<u64>,
    current: &mut Configuration,
    pinned: &Configuration,
    region: &BoxRegion,
    spec: &ModelSpec,
    limits: &EnumerationLimits,
    count: &mut u128,
    lse: &mut LogSumExp,
) -> Result<()> {
    if index >= slots.len() {
        for k in 1..lo.len() {
            if counts[k] < lo[k] {
                return Ok(());
            }
        }
        *count += 1;
        if *count > limits.max_states {
            return Err(Error::EnumerationRefused {
                estimated: *count,
                ceiling: limits.max_states,
            });
        }
        // Poisson weight of the micro part only; the pinned marks are a
        // deterministic insertion, not part of the reference measure. Where a
        // micro point shares a slot with a pinned mark the micro multiplicity
        // is the combined one minus the pinned one.
        let mut log_w = 0.0;
        for (site, k, m) in current.entries() {
            let micro = m - pinned.multiplicity(site, k);
            if micro > 0 {
                log_w += micro as f64 * spec.intensity().value(k).ln() - ln_factorial(micro);
            }
        }
        let phi = total_energy(current, region, region, spec);
        lse.push(log_w - phi);
        return Ok(());
    }
    let slot = &slots[index];
    let headroom = hi[slot.k] - counts[slot.k];
    for mult in 0..=headroom {
        if mult > 0 {
            current.add(slot.site.clone(), slot.k, 1);
            counts[slot.k] += 1;
        }
        descend_windows(
            slots,
            index + 1,
            lo,
            hi,
            counts,
            current,
            pinned,
            region,
            spec,
            limits,
            count,
            lse,
        )?;
    }
    for _ in 0..headroom {
        current.remove_one(&slot.site, slot.k).unwrap();
    }
    counts[slot.k] -= headroom;
    Ok(())
}

/// Independent oracle for `v ≡ 0`: the compound-Poisson law of the particle
/// number gives `Z_{N,Λ,Dir} = e^{-|Λ|Σ_k q_k}·[z^N] exp(Σ_{k≤N} q_k n_k z^k)`
/// with `n_k = #{x : x+G_k ⊆ Λ}`, extracted by power-series convolution.
pub fn free_case_oracle(region: &BoxRegion, n: u64, spec: &ModelSpec, tol: f64) -> Result<f64> {
    if !spec.potential().is_zero() {
        return Err(Error::Precondition(
            "free_case_oracle requires the zero potential".into(),
        ));
    }
    let volume = region.volume() as f64;
    let q_total = spec.intensity().total(tol)?;
    let n = n as usize;
    let mut book = spec.mark_book();
    // g(z) = sum_{k<=n} q_k n_k z^k
    let mut g = vec![0.0f64; n + 1];
    for (k, coeff) in g.iter_mut().enumerate().skip(1) {
        let mark = book.mark(k);
        let fits = region
            .sites()
            .iter()
            .filter(|s| region.contains_mark(s, mark))
            .count() as f64;
        *coeff = spec.intensity().value(k) * fits;
    }
    // F = exp(G) with F_0 = 1: j F_j = sum_{i=1}^{j} i G_i F_{j-i}
    let mut f = vec![0.0f64; n + 1];
    f[0] = 1.0;
    for j in 1..=n {
        let mut acc = 0.0;
        for i in 1..=j {
            acc += i as f64 * g[i] * f[j - i];
        }
        f[j] = acc / j as f64;
    }
    Ok((-volume * q_total).exp() * f[n])
}

/// `H_Λ(P^m_Λ | P_Λ) = |Λ|·H(m|q)`: finite-volume relative entropy between
/// independent Poisson fields, via the shared closed form.
pub fn finite_volume_entropy(
    m: &MassSequence,
    region: &BoxRegion,
    spec: &ModelSpec,
    tol: f64,
) -> Result<f64> {
    Ok(region.volume() as f64 * relative_entropy(m, spec.intensity(), tol)?)
}

/// Enumerated canonical states with their log weights
/// `log(Π q^ξ/ξ!) − Φ`; the common factor `e^{-|Λ|Σq}` is omitted, so the
/// weights are unnormalised.
pub fn canonical_states_with_log_weights(
    region: &BoxRegion,
    n: u64,
    spec: &ModelSpec,
    limits: &EnumerationLimits,
) -> Result<Vec<(Configuration, f64)>> {
    let mut out = Vec::new();
    enumerate_canonical(region, n, spec, limits, |cfg| {
        let w = log_poisson_products(cfg, spec) - total_energy(cfg, region, region, spec);
        out.push((cfg.clone(), w));
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_model_d1, IntensitySequence, ModelSpec, Potential};
    use std::collections::BTreeSet;

    fn free_model_d1() -> ModelSpec {
        ModelSpec::new(
            1,
            Potential::zero(1),
            IntensitySequence::geometric(1.0, 0.5).unwrap(),
        )
        .unwrap()
    }

    fn limits() -> EnumerationLimits {
        EnumerationLimits::default()
    }

    #[test]
    fn enumerate_single_site() {
        let spec = reference_model_d1();
        let lam = BoxRegion::new(vec![0], vec![0]).unwrap();
        let states = canonical_states(&lam, 1, &spec, &limits()).unwrap();
        assert_eq!(states.len(), 1);
        assert_eq!(states[0].multiplicity(&[0], 1), 1);
        // N = 0: exactly the empty configuration
        let empty = canonical_states(&lam, 0, &spec, &limits()).unwrap();
        assert_eq!(empty.len(), 1);
        assert!(empty[0].is_empty());
    }

    #[test]
    fn enumerate_three_sites_two_particles() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 1);
        let states = canonical_states(&lam, 2, &spec, &limits()).unwrap();
        // 2-marks fit at x in {0,1}; 1-marks anywhere: pairs (3 choose 2) + 3
        // doubles + 2 single 2-marks = 3 + 3 + 2 = 8
        assert_eq!(states.len(), 8);
        assert_eq!(count_canonical(&lam, 2, &spec), 8);
        for s in &states {
            assert_eq!(s.particle_count(), 2);
            assert!(crate::energy::is_dirichlet(s, &lam, &spec));
        }
    }

    /// Slow independent generator: recursion over (site, k) slots in the
    /// opposite slot order, collecting canonical text forms.
    fn slow_generator(region: &BoxRegion, n: u64, spec: &ModelSpec) -> BTreeSet<String> {
        fn recurse(
            slots: &[(Vec<i64>, usize)],
            budget: u64,
            acc: &mut Configuration,
            out: &mut BTreeSet<String>,
        ) {
            if budget == 0 {
                out.insert(acc.to_text());
                return;
            }
            if slots.is_empty() {
                return;
            }
            let (site, k) = &slots[0];
            let mut mult = 0;
            loop {
                let used = mult * *k as u64;
                if used > budget {
                    break;
                }
                for _ in 0..mult {
                    acc.add(site.clone(), *k, 1);
                }
                recurse(&slots[1..], budget - used, acc, out);
                for _ in 0..mult {
                    acc.remove_one(site, *k).unwrap();
                }
                mult += 1;
            }
        }
        let mut book = spec.mark_book();
        let mut slots = Vec::new();
        for site in region.sites() {
            for k in 1..=n as usize {
                if spec.intensity().value(k) > 0.0 && region.contains_mark(&site, book.mark(k)) {
                    slots.push((site.clone(), k));
                }
            }
        }
        slots.reverse();
        let mut out = BTreeSet::new();
        let mut acc = Configuration::empty();
        recurse(&slots, n, &mut acc, &mut out);
        out
    }

    #[test]
    fn enumerator_streams_each_state_exactly_once() {
        let spec = reference_model_d1();
        for halfwidth in 0..=2i64 {
            let lam = BoxRegion::centered(1, halfwidth);
            for n in 0..=4u64 {
                let mut seen = BTreeSet::new();
                let count = enumerate_canonical(&lam, n, &spec, &limits(), |c| {
                    assert!(seen.insert(c.to_text()), "duplicate state {:?}", c);
                })
                .unwrap();
                assert_eq!(count as usize, seen.len());
                assert_eq!(seen, slow_generator(&lam, n, &spec));
                assert_eq!(count, count_canonical(&lam, n, &spec));
            }
        }
    }

    #[test]
    fn enumeration_ceiling_is_enforced() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 2);
        let tight = EnumerationLimits { max_states: 3 };
        match enumerate_canonical(&lam, 4, &spec, &tight, |_| {}) {
            Err(Error::EnumerationRefused { estimated, ceiling }) => {
                assert!(estimated > 3);
                assert_eq!(ceiling, 3);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn partition_single_site_reference_values() {
        let spec = reference_model_d1();
        let lam = BoxRegion::new(vec![0], vec![0]).unwrap();
        let z1 = partition_dirichlet(&lam, 1, &spec, 1e-14, &limits()).unwrap();
        assert!((z1.value - 0.5 * (-2.0f64).exp()).abs() < 1e-15);
        assert_eq!(z1.configuration_count, 1);
        let z0 = partition_dirichlet(&lam, 0, &spec, 1e-14, &limits()).unwrap();
        assert!((z0.value - (-1.0f64).exp()).abs() < 1e-15);

        let c1 = partition_conditional(&lam, 1, &spec, 1e-14, &limits()).unwrap();
        assert!((c1.value - 0.5 * (-1.5f64).exp()).abs() < 1e-15);
        let c0 = partition_conditional(&lam, 0, &spec, 1e-14, &limits()).unwrap();
        assert!((c0.value - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn conditioning_probability_tends_to_one_per_volume() {
        let spec = reference_model_d1();
        // exponent is o(|Λ|): per-volume log probability goes to zero
        let mut last = f64::NEG_INFINITY;
        for halfwidth in [1i64, 4, 16, 64] {
            let lam = BoxRegion::centered(1, halfwidth);
            let per_site =
                log_conditioning_probability(&lam, &spec, 1e-14).unwrap() / lam.volume() as f64;
            assert!(per_site > last);
            last = per_site;
        }
        assert!(last > -1e-2);
    }

    #[test]
    fn free_case_oracle_examples() {
        let spec = free_model_d1();
        let lam = BoxRegion::new(vec![0], vec![0]).unwrap();
        let z = free_case_oracle(&lam, 1, &spec, 1e-14).unwrap();
        assert!((z - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        let z0 = free_case_oracle(&lam, 0, &spec, 1e-14).unwrap();
        assert!((z0 - (-1.0f64).exp()).abs() < 1e-15);
        // interacting potential is rejected
        assert!(free_case_oracle(&lam, 1, &reference_model_d1(), 1e-14).is_err());
    }

    #[test]
    fn oracle_matches_enumeration_for_free_gas() {
        let spec = free_model_d1();
        for halfwidth in 0..=2i64 {
            let lam = BoxRegion::centered(1, halfwidth);
            for n in 0..=6u64 {
                let z = partition_dirichlet(&lam, n, &spec, 1e-15, &limits()).unwrap();
                let oracle = free_case_oracle(&lam, n, &spec, 1e-15).unwrap();
                let rel = (z.value - oracle).abs() / oracle.abs();
                assert!(rel < 1e-12, "H={halfwidth} N={n}: rel {rel}");
            }
        }
    }

    #[test]
    fn total_mass_check_free_gas() {
        let spec = free_model_d1();
        let lam = BoxRegion::centered(1, 1);
        let mut total = 0.0;
        for n in 0..=30u64 {
            total += partition_dirichlet(&lam, n, &spec, 1e-15, &limits())
                .unwrap()
                .value;
        }
        let dirichlet_prob = log_conditioning_probability(&lam, &spec, 1e-15)
            .unwrap()
            .exp();
        assert!((total - dirichlet_prob).abs() < 1e-9, "{total} vs {dirichlet_prob}");
    }

    #[test]
    fn partition_monotone_in_potential() {
        let weak = reference_model_d1();
        let strong = ModelSpec::new(
            1,
            Potential::new(1, vec![(vec![0], 2.0), (vec![1], 1.0)]).unwrap(),
            IntensitySequence::geometric(1.0, 0.5).unwrap(),
        )
        .unwrap();
        let lam = BoxRegion::centered(1, 2);
        for n in 0..=4u64 {
            let zw = partition_dirichlet(&lam, n, &weak, 1e-14, &limits()).unwrap();
            let zs = partition_dirichlet(&lam, n, &strong, 1e-14, &limits()).unwrap();
            assert!(zs.value <= zw.value + 1e-15);
        }
    }

    #[test]
    fn pinned_macro_examples() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 1);
        // empty pinned list, all-counts window: no particle-number constraint
        let empty = PinnedMacro::new(vec![]).unwrap();
        let z_all = pinned_macro_partition(
            &lam,
            &empty,
            1,
            &CountWindow::All,
            &spec,
            1e-12,
            &limits(),
        )
        .unwrap();
        // direct check: marks of size 1 only, counts unconstrained
        let q1: f64 = 0.5;
        let mut direct = 0.0;
        // i.i.d. Poisson(q1) on 3 sites with pair interactions; sum over
        // multiplicities up to the same quantile cut used internally
        let cap = 12u64;
        let sites: Vec<i64> = vec![-1, 0, 1];
        let mut stack = vec![(0usize, Vec::new())];
        while let Some((idx, counts)) = stack.pop() {
            if idx == sites.len() {
                let mut cfg = Configuration::empty();
                for (i, &c) in counts.iter().enumerate() {
                    cfg.add(vec![sites[i]], 1, c);
                }
                let phi = total_energy(&cfg, &lam, &lam, &spec);
                let mut w = (-3.0 * q1).exp() * (-phi).exp();
                for &c in &counts {
                    let mut f = 1.0;
                    for i in 1..=c {
                        f *= i as f64;
                    }
                    w *= q1.powi(c as i32) / f;
                }
                direct += w;
                continue;
            }
            for c in 0..=cap {
                let mut next = counts.clone();
                next.push(c);
                stack.push((idx + 1, next));
            }
        }
        assert!(
            (z_all.value - direct).abs() < 1e-8,
            "{} vs {direct}",
            z_all.value
        );

        // pinned full-box mark, exactly one 1-mark
        let pinned = PinnedMacro::new(vec![3]).unwrap();
        let window = CountWindow::Band {
            m: vec![1.0 / 3.0],
            delta: 0.5,
        };
        let z = pinned_macro_partition(&lam, &pinned, 1, &window, &spec, 1e-12, &limits()).unwrap();
        // hand computation: one micro 1-mark at x in {-1,0,1};
        // weight q1 e^{-3 q1} e^{-t3} e^{-t1} e^{-2 T_{x,0}(G_1,G_3)}
        let t3 = 5.0;
        let t1 = 1.0;
        let cross: f64 = (-2.0f64 * 2.0).exp() + 2.0 * (-2.0f64 * 1.5).exp();
        let hand = q1 * (-3.0 * q1).exp() * (-(t3 + t1)).exp() * cross;
        assert!((z.value - hand).abs() < 1e-15, "{} vs {hand}", z.value);
        assert_eq!(z.configuration_count, 3);

        // pinned mark sharing a slot with the micro part: pinned [1,1] with
        // exactly one micro 1-mark
        let stacked = PinnedMacro::new(vec![1, 1]).unwrap();
        let z_stacked =
            pinned_macro_partition(&lam, &stacked, 1, &window, &spec, 1e-12, &limits()).unwrap();
        // x = 0: combined multiplicity 3, energy 9; x = ±1: 1 + 4 + 2·2·0.5 = 7
        let hand_stacked =
            q1 * (-3.0 * q1).exp() * ((-9.0f64).exp() + 2.0 * (-7.0f64).exp());
        assert!(
            (z_stacked.value - hand_stacked).abs() < 1e-15,
            "{} vs {hand_stacked}",
            z_stacked.value
        );

        // inadmissible pinned mark
        let too_big = PinnedMacro::new(vec![5]).unwrap();
        assert!(pinned_macro_partition(
            &lam,
            &too_big,
            1,
            &CountWindow::All,
            &spec,
            1e-12,
            &limits()
        )
        .is_err());
    }

    #[test]
    fn pinned_macro_monotone_in_pinning() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 1);
        let window = CountWindow::Band {
            m: vec![1.0 / 3.0],
            delta: 0.5,
        };
        let none = PinnedMacro::new(vec![]).unwrap();
        let one = PinnedMacro::new(vec![3]).unwrap();
        let z0 = pinned_macro_partition(&lam, &none, 1, &window, &spec, 1e-12, &limits()).unwrap();
        let z1 = pinned_macro_partition(&lam, &one, 1, &window, &spec, 1e-12, &limits()).unwrap();
        assert!(z1.value <= z0.value);
    }

    #[test]
    fn finite_volume_entropy_examples() {
        let spec = reference_model_d1();
        let lam = BoxRegion::centered(1, 1);
        let q_as_m = MassSequence::new(vec![0.5, 0.25, 0.125]).unwrap();
        // m = q on support: only the q-tail beyond the cutoff remains
        let h = finite_volume_entropy(&q_as_m, &lam, &spec, 1e-14).unwrap();
        assert!((h - 3.0 * 0.125).abs() < 1e-12);
        // m = 0
        let zero = MassSequence::new(vec![]).unwrap();
        let h0 = finite_volume_entropy(&zero, &lam, &spec, 1e-14).unwrap();
        assert!((h0 - 3.0 * 1.0).abs() < 1e-12);
        // doubled first coordinate
        let m = MassSequence::new(vec![1.0]).unwrap();
        let h2 = finite_volume_entropy(&m, &lam, &spec, 1e-14).unwrap();
        let expected = 3.0 * ((0.5 - 1.0 + 1.0 * (2.0f64).ln()) + 0.5);
        assert!((h2 - expected).abs() < 1e-12);
    }
}

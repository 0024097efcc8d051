//! Per-source model of a cyclic scheduler (CS).
//!
//! A [`CyclicSchedule`] is the global repeating pattern of sources served by
//! the shared server. Projected onto one source it becomes a
//! [`BinaryPattern`] of serve / vacation slots. The tagged-packet chain then
//! lives on pairs `(i, j)`: `i` is the slot (0-based here) the shared server
//! is working on, and `j` is one of the PS state labels 1..=10. Serve slots
//! carry `j in {2,3,4,5,7,8,9}`, vacation slots carry `j in {1,6,10}`.
//! States are laid out slot-major with `j` ascending inside each slot.

use std::fmt;

use nalgebra::DMatrix;

use crate::chain::{
    mean_aoi, stationary_distribution, AbsorbingChain, Absorption, ChainBuilder, RecurrentChain,
};
use crate::error::{check_rate, AoiError, Result};
use crate::system::SystemSpec;

/// Longest binary pattern accepted by the chain builders.
pub const MAX_PATTERN_LEN: usize = 512;

const SERVE_STATES: [usize; 7] = [2, 3, 4, 5, 7, 8, 9];
const VACATION_STATES: [usize; 3] = [1, 6, 10];

/// Repeating source pattern of the shared server. Entries are 1-based
/// source indices; sources may be absent from the pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CyclicSchedule {
    slots: Vec<usize>,
    num_sources: usize,
}

impl CyclicSchedule {
    pub fn new(slots: Vec<usize>, num_sources: usize) -> Result<Self> {
        if slots.is_empty() {
            return Err(AoiError::InvalidSchedule("schedule is empty".into()));
        }
        if let Some(&bad) = slots.iter().find(|&&s| s == 0 || s > num_sources) {
            return Err(AoiError::SourceOutOfRange {
                index: bad,
                count: num_sources,
            });
        }
        Ok(Self { slots, num_sources })
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    /// Number of slots given to each source, indexed `0..N`.
    pub fn slot_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_sources];
        for &s in &self.slots {
            counts[s - 1] += 1;
        }
        counts
    }

    /// Serve/vacation view of the pattern from `source`'s perspective.
    pub fn project(&self, source: usize) -> Result<BinaryPattern> {
        project_pattern(self, source)
    }
}

impl fmt::Display for CyclicSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.slots.iter().map(|s| s.to_string()).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Serve,
    Vacation,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryPattern {
    slots: Vec<Slot>,
}

impl BinaryPattern {
    pub fn new(slots: Vec<Slot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(AoiError::InvalidSchedule("binary pattern is empty".into()));
        }
        Ok(Self { slots })
    }

    /// `true` marks a serve slot.
    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        Self::new(
            mask.iter()
                .map(|&b| if b { Slot::Serve } else { Slot::Vacation })
                .collect(),
        )
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    /// Pattern length `m`.
    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Number of serve slots `k`.
    pub fn serves(&self) -> usize {
        self.slots.iter().filter(|&&s| s == Slot::Serve).count()
    }

    pub fn is_serve(&self, i: usize) -> bool {
        self.slots[i % self.slots.len()] == Slot::Serve
    }

    /// Compact key: one byte per slot.
    pub fn key(&self) -> Vec<u8> {
        self.slots
            .iter()
            .map(|&s| (s == Slot::Serve) as u8)
            .collect()
    }

    pub fn rotated(&self, by: usize) -> Self {
        let mut slots = self.slots.clone();
        let len = slots.len();
        slots.rotate_left(by % len);
        Self { slots }
    }

    pub fn repeated(&self, times: usize) -> Self {
        Self {
            slots: self.slots.repeat(times.max(1)),
        }
    }

    fn check_len(&self) -> Result<()> {
        if self.len() > MAX_PATTERN_LEN {
            Err(AoiError::PatternTooLong {
                len: self.len(),
                max: MAX_PATTERN_LEN,
            })
        } else {
            Ok(())
        }
    }
}

pub fn project_pattern(schedule: &CyclicSchedule, source: usize) -> Result<BinaryPattern> {
    if source == 0 || source > schedule.num_sources {
        return Err(AoiError::SourceOutOfRange {
            index: source,
            count: schedule.num_sources,
        });
    }
    BinaryPattern::new(
        schedule
            .slots
            .iter()
            .map(|&s| {
                if s == source {
                    Slot::Serve
                } else {
                    Slot::Vacation
                }
            })
            .collect(),
    )
}

/// Index map of the CS absorbing chain's transient states.
#[derive(Debug, Clone)]
pub struct CsLayout {
    offsets: Vec<usize>,
    serve: Vec<bool>,
    total: usize,
}

impl CsLayout {
    pub fn new(pattern: &BinaryPattern) -> Self {
        let mut offsets = Vec::with_capacity(pattern.len());
        let mut total = 0;
        let serve: Vec<bool> = (0..pattern.len()).map(|i| pattern.is_serve(i)).collect();
        for &s in &serve {
            offsets.push(total);
            total += if s {
                SERVE_STATES.len()
            } else {
                VACATION_STATES.len()
            };
        }
        Self {
            offsets,
            serve,
            total,
        }
    }

    pub fn num_transient(&self) -> usize {
        self.total
    }

    /// Index of state `(slot, label)`, or `None` if that label does not
    /// exist for the slot's kind.
    pub fn index(&self, slot: usize, label: usize) -> Option<usize> {
        let labels: &[usize] = if self.serve[slot] {
            &SERVE_STATES
        } else {
            &VACATION_STATES
        };
        labels
            .iter()
            .position(|&l| l == label)
            .map(|p| self.offsets[slot] + p)
    }

    fn at(&self, slot: usize, label: usize) -> usize {
        self.index(slot, label).expect("label valid for slot kind")
    }
}

/// Stationary probabilities `phi[i][r - 1]` of the recurrent states
/// `(i, R_r)`. Entries for labels absent from slot `i` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CsStationary {
    probs: Vec<[f64; 3]>,
}

impl CsStationary {
    pub fn get(&self, slot: usize, r: usize) -> f64 {
        self.probs[slot][r - 1]
    }

    /// Total mass of slot `i` (summed over its `R` labels).
    pub fn slot_mass(&self, slot: usize) -> f64 {
        self.probs[slot].iter().sum()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

fn check_rates(mu_n: f64, mu: f64) -> Result<()> {
    check_rate("mu_n", mu_n)?;
    check_rate("mu", mu)
}

/// Recurrent chain over `(i, R_r)`; returns the generator together with
/// the `(slot, r)` label of each state.
pub fn cs_rmc(
    pattern: &BinaryPattern,
    mu_n: f64,
    mu: f64,
) -> Result<(RecurrentChain, Vec<(usize, usize)>)> {
    check_rates(mu_n, mu)?;
    pattern.check_len()?;
    let m = pattern.len();
    let mut labels = Vec::with_capacity(2 * m);
    let mut offset = Vec::with_capacity(m);
    for i in 0..m {
        offset.push(labels.len());
        if pattern.is_serve(i) {
            labels.push((i, 2));
            labels.push((i, 3));
        } else {
            labels.push((i, 1));
        }
    }
    // After a shared completion from slot i the system enters slot i+1 in
    // R3 (fresh shared packet) or R1 (vacation).
    let entry = |i: usize| {
        let next = (i + 1) % m;
        if pattern.is_serve(next) {
            offset[next] + 1
        } else {
            offset[next]
        }
    };
    let n = labels.len();
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..m {
        if pattern.is_serve(i) {
            let r2 = offset[i];
            let r3 = offset[i] + 1;
            rates[(r2, entry(i))] += mu;
            rates[(r3, r2)] += mu_n;
            rates[(r3, entry(i))] += mu;
        } else {
            rates[(offset[i], entry(i))] += mu;
        }
    }
    Ok((RecurrentChain::from_rates(rates)?, labels))
}

pub fn cs_rmc_stationary(pattern: &BinaryPattern, mu_n: f64, mu: f64) -> Result<CsStationary> {
    let (rmc, labels) = cs_rmc(pattern, mu_n, mu)?;
    let phi = stationary_distribution(&rmc)?;
    let mut probs = vec![[0.0; 3]; pattern.len()];
    for (k, &(slot, r)) in labels.iter().enumerate() {
        probs[slot][r - 1] = phi[k];
    }
    Ok(CsStationary { probs })
}

/// Rate `f_c` at which fresh source-`n` packets enter the system.
pub fn cs_packet_rate(
    pattern: &BinaryPattern,
    phi: &CsStationary,
    mu_n: f64,
    mu: f64,
) -> Result<f64> {
    if phi.len() != pattern.len() {
        return Err(AoiError::DimensionMismatch {
            expected: pattern.len(),
            got: phi.len(),
        });
    }
    Ok((0..pattern.len())
        .map(|i| {
            let shared = if pattern.is_serve(i + 1) { mu } else { 0.0 };
            phi.slot_mass(i) * (mu_n + shared)
        })
        .sum())
}

/// Initial vector of the CS absorbing chain, laid out as [`CsLayout`].
pub fn cs_initial_vector(
    pattern: &BinaryPattern,
    phi: &CsStationary,
    f_c: f64,
    mu_n: f64,
    mu: f64,
) -> Result<Vec<f64>> {
    if phi.len() != pattern.len() {
        return Err(AoiError::DimensionMismatch {
            expected: pattern.len(),
            got: phi.len(),
        });
    }
    let m = pattern.len();
    let layout = CsLayout::new(pattern);
    let mut sigma = vec![0.0; layout.num_transient()];
    for i in 0..m {
        if pattern.is_serve(i) {
            let prev = (i + m - 1) % m;
            sigma[layout.at(i, 2)] = mu_n * (phi.get(i, 2) + phi.get(i, 3)) / f_c;
            sigma[layout.at(i, 4)] = mu * phi.slot_mass(prev) / f_c;
        } else {
            sigma[layout.at(i, 1)] = mu_n * phi.get(i, 1) / f_c;
        }
    }
    let mass: f64 = sigma.iter().sum();
    if (mass - 1.0).abs() > 1e-12 {
        return Err(AoiError::SelfCheck(format!(
            "CS initial vector sums to {mass}; stationary vector or f_c inconsistent"
        )));
    }
    Ok(sigma)
}

/// Absorbing chain of the tagged source-`n` packet for a binary pattern,
/// including its initial and transient-indicator vectors.
pub fn build_cs_amc(pattern: &BinaryPattern, mu_n: f64, mu: f64) -> Result<AbsorbingChain> {
    check_rates(mu_n, mu)?;
    pattern.check_len()?;
    let m = pattern.len();
    let layout = CsLayout::new(pattern);
    let mut b = ChainBuilder::new(layout.num_transient());

    for i in 0..m {
        let next = (i + 1) % m;
        let serve_next = pattern.is_serve(next);
        // where a shared completion moves each "kind" of state
        let to_fresh = layout.at(next, if serve_next { 3 } else { 1 });
        let to_obsolete_ded = layout.at(next, if serve_next { 8 } else { 10 });
        let to_fresh_ded = layout.at(next, if serve_next { 9 } else { 6 });
        let at = |j| layout.at(i, j);

        if pattern.is_serve(i) {
            b.transition(at(2), at(7), mu_n)
                .transition(at(2), to_fresh, mu);
            b.transition(at(3), at(9), mu_n)
                .absorb(at(3), Absorption::Unsuccessful, mu);
            b.transition(at(4), at(5), mu_n)
                .transition(at(4), to_obsolete_ded, mu);
            b.absorb(at(5), Absorption::Unsuccessful, mu_n)
                .transition(at(5), to_fresh_ded, mu);
            b.absorb(at(7), Absorption::Successful, mu_n)
                .transition(at(7), to_fresh_ded, mu);
            b.transition(at(8), at(9), mu_n)
                .absorb(at(8), Absorption::Successful, mu);
            b.absorb(at(9), Absorption::Successful, mu_n + mu);
            for j in [7, 8, 9] {
                b.mark_cycle(at(j));
            }
        } else {
            b.transition(at(1), at(6), mu_n)
                .transition(at(1), to_fresh, mu);
            b.absorb(at(6), Absorption::Successful, mu_n)
                .transition(at(6), to_fresh_ded, mu);
            b.transition(at(10), at(6), mu_n)
                .transition(at(10), to_obsolete_ded, mu);
            for j in [6, 10] {
                b.mark_cycle(at(j));
            }
        }
    }

    let phi = cs_rmc_stationary(pattern, mu_n, mu)?;
    let f_c = cs_packet_rate(pattern, &phi, mu_n, mu)?;
    let sigma = cs_initial_vector(pattern, &phi, f_c, mu_n, mu)?;
    for (k, &s) in sigma.iter().enumerate() {
        if s != 0.0 {
            b.initial(k, s);
        }
    }
    Ok(b.build())
}

/// Mean AoI of a source whose shared-server view is `pattern`.
pub fn cs_mean_aoi(pattern: &BinaryPattern, mu_n: f64, mu: f64) -> Result<f64> {
    mean_aoi(&build_cs_amc(pattern, mu_n, mu)?)
}

fn check_schedule(spec: &SystemSpec, schedule: &CyclicSchedule) -> Result<()> {
    if schedule.num_sources() != spec.num_sources() {
        return Err(AoiError::DimensionMismatch {
            expected: spec.num_sources(),
            got: schedule.num_sources(),
        });
    }
    Ok(())
}

/// Per-source mean AoI under a cyclic schedule, in source order.
pub fn cs_per_source_aoi(spec: &SystemSpec, schedule: &CyclicSchedule) -> Result<Vec<f64>> {
    check_schedule(spec, schedule)?;
    (1..=spec.num_sources())
        .map(|n| {
            cs_mean_aoi(
                &schedule.project(n)?,
                spec.mu_dedicated()[n - 1],
                spec.mu_shared(),
            )
        })
        .collect()
}

/// `sum_n w_n E[age_n]` under a cyclic schedule.
pub fn cs_weighted_aoi(spec: &SystemSpec, schedule: &CyclicSchedule) -> Result<f64> {
    Ok(spec.weighted_sum(&cs_per_source_aoi(spec, schedule)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::validate_chain;
    use crate::ps::ps_closed_form;
    use approx::assert_relative_eq;

    fn pat(bits: &str) -> BinaryPattern {
        BinaryPattern::from_mask(&bits.chars().map(|c| c == '1').collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn projection_examples() {
        let c = CyclicSchedule::new(vec![1, 2, 2, 3], 4).unwrap();
        assert_eq!(c.project(2).unwrap(), pat("0110"));
        assert_eq!(c.project(4).unwrap(), pat("0000"));
        assert!(matches!(
            c.project(5),
            Err(AoiError::SourceOutOfRange { .. })
        ));
        assert!(matches!(
            c.project(0),
            Err(AoiError::SourceOutOfRange { .. })
        ));
        let single = CyclicSchedule::new(vec![2], 2).unwrap();
        assert_eq!(single.project(2).unwrap(), pat("1"));
        assert_eq!(c.slot_counts(), vec![1, 2, 1, 0]);
    }

    #[test]
    fn schedule_validation() {
        assert!(CyclicSchedule::new(vec![], 2).is_err());
        assert!(CyclicSchedule::new(vec![1, 3], 2).is_err());
        assert!(CyclicSchedule::new(vec![0], 2).is_err());
    }

    #[test]
    fn state_counts() {
        for bits in ["1", "0", "000", "10", "1101001", "0110"] {
            let p = pat(bits);
            let (m, k) = (p.len(), p.serves());
            let chain = build_cs_amc(&p, 1.3, 2.1).unwrap();
            assert_eq!(chain.num_transient(), 7 * k + 3 * (m - k));
            assert_eq!(chain.v().ncols(), 2);
            let (rmc, _) = cs_rmc(&p, 1.3, 2.1).unwrap();
            assert_eq!(rmc.num_states(), 2 * k + (m - k));
            assert!(
                validate_chain(&chain).is_pass(),
                "{bits}: {:?}",
                validate_chain(&chain)
            );
        }
    }

    #[test]
    fn all_vacation_theta() {
        let p = pat("000");
        let chain = build_cs_amc(&p, 1.0, 1.0).unwrap();
        let layout = CsLayout::new(&p);
        for i in 0..3 {
            assert_eq!(chain.theta()[layout.at(i, 1)], 0.0);
            assert_eq!(chain.theta()[layout.at(i, 6)], 1.0);
            assert_eq!(chain.theta()[layout.at(i, 10)], 1.0);
        }
        assert_eq!(chain.theta().sum(), 6.0);
    }

    #[test]
    fn all_vacation_stationary_and_rate() {
        let p = pat("0000");
        let phi = cs_rmc_stationary(&p, 2.0, 3.0).unwrap();
        for i in 0..4 {
            assert_relative_eq!(phi.get(i, 1), 0.25, epsilon = 1e-14);
        }
        assert_relative_eq!(
            cs_packet_rate(&p, &phi, 2.0, 3.0).unwrap(),
            2.0,
            epsilon = 1e-14
        );
        let sigma = cs_initial_vector(&p, &phi, 2.0, 2.0, 3.0).unwrap();
        let layout = CsLayout::new(&p);
        for i in 0..4 {
            assert_relative_eq!(sigma[layout.at(i, 1)], 0.25, epsilon = 1e-14);
        }
        assert_relative_eq!(
            cs_mean_aoi(&p, 2.0, 3.0).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn always_serve_matches_ps_with_p_one() {
        let p = pat("1");
        let (mu_n, mu) = (1.0, 1.0);
        let phi = cs_rmc_stationary(&p, mu_n, mu).unwrap();
        assert_relative_eq!(phi.get(0, 2) + phi.get(0, 3), 1.0, epsilon = 1e-14);
        assert_relative_eq!(phi.get(0, 3), 0.5, epsilon = 1e-14);
        assert_relative_eq!(
            cs_packet_rate(&p, &phi, mu_n, mu).unwrap(),
            2.0,
            epsilon = 1e-14
        );

        let (mu_n, mu) = (3.0, 1.5);
        let phi = cs_rmc_stationary(&p, mu_n, mu).unwrap();
        let f_c = cs_packet_rate(&p, &phi, mu_n, mu).unwrap();
        assert_relative_eq!(f_c, mu_n + mu, epsilon = 1e-13);
        let sigma = cs_initial_vector(&p, &phi, f_c, mu_n, mu).unwrap();
        let layout = CsLayout::new(&p);
        assert_relative_eq!(sigma[layout.at(0, 2)], mu_n / (mu_n + mu), epsilon = 1e-14);
        assert_relative_eq!(sigma[layout.at(0, 4)], mu / (mu_n + mu), epsilon = 1e-14);
        assert_relative_eq!(
            cs_mean_aoi(&p, mu_n, mu).unwrap(),
            ps_closed_form(mu_n, mu, 1.0).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn alternating_pattern_rate_from_phi() {
        // c = [serve, vac], mu_n = 1, mu = 2. Oracle: each slot has mass 1/2,
        // and only slot 1 (vacation) is followed by a serve slot.
        let p = pat("10");
        let phi = cs_rmc_stationary(&p, 1.0, 2.0).unwrap();
        assert_relative_eq!(phi.slot_mass(0), 0.5, epsilon = 1e-14);
        assert_relative_eq!(phi.slot_mass(1), 0.5, epsilon = 1e-14);
        let f_c = cs_packet_rate(&p, &phi, 1.0, 2.0).unwrap();
        assert_relative_eq!(f_c, 0.5 * 1.0 + 0.5 * (1.0 + 2.0), epsilon = 1e-14);
    }

    #[test]
    fn slot_marginals_are_uniform() {
        for bits in ["1101001", "1000", "0111", "1010110011"] {
            let p = pat(bits);
            let phi = cs_rmc_stationary(&p, 0.7, 4.0).unwrap();
            for i in 0..p.len() {
                assert_relative_eq!(phi.slot_mass(i), 1.0 / p.len() as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn weighted_symmetry() {
        let spec = SystemSpec::equal_weights(2.0, vec![1.0, 1.0]).unwrap();
        let c = CyclicSchedule::new(vec![1, 2], 2).unwrap();
        let per = cs_per_source_aoi(&spec, &c).unwrap();
        assert_relative_eq!(per[0], per[1], max_relative = 1e-12);

        let spec1 = SystemSpec::new(1.0, vec![1.0], vec![1.0]).unwrap();
        let c1 = CyclicSchedule::new(vec![1], 1).unwrap();
        assert_relative_eq!(
            cs_weighted_aoi(&spec1, &c1).unwrap(),
            1.25,
            max_relative = 1e-12
        );
        assert!(cs_weighted_aoi(&spec, &c1).is_err());
    }

    #[test]
    fn pattern_too_long() {
        let p = BinaryPattern::from_mask(&vec![false; MAX_PATTERN_LEN + 1]).unwrap();
        assert!(matches!(
            cs_mean_aoi(&p, 1.0, 1.0),
            Err(AoiError::PatternTooLong { .. })
        ));
    }
}

//! Cyclic schedule construction.
//!
//! * Insertion search (IS): grow the schedule one (source, position)
//!   insertion at a time, always taking the insertion with the lowest
//!   weighted AoI, and keep the best schedule seen.
//! * Probability-aided cyclic (PAC): choose a period `K` and slot counts
//!   `K_n` that track the optimal PS probabilities, then spread the slots
//!   with credit-based deficit round robin.
//! * Round robin and uniform PS baselines.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::cs::{cs_mean_aoi, cs_weighted_aoi, BinaryPattern, CyclicSchedule};
use crate::error::{AoiError, Result};
use crate::system::{Pmf, SystemSpec};

pub const DEFAULT_EXPLORATION: usize = 6;
pub const DEFAULT_MAX_LEN: usize = 64;
pub const DEFAULT_MAX_PERIOD: usize = 50;
/// Sources with an optimal probability at or below this are left out of PAC.
pub const PAC_ACTIVE_THRESHOLD: f64 = 1e-6;

/// Relative margin a candidate must beat the incumbent by to count as an
/// improvement; absorbs rounding differences between equivalent patterns.
const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub schedule: CyclicSchedule,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleBuildReport {
    pub schedule: CyclicSchedule,
    pub weighted_aoi: f64,
    pub iterations: usize,
    pub trace: Vec<TraceEntry>,
    /// Slots per source (`K_n`), indexed `0..N`; sums to the period `K`.
    pub slot_counts: Vec<usize>,
}

/// Memoized per-source CS evaluations keyed by (source, binary pattern).
struct PatternCache<'a> {
    spec: &'a SystemSpec,
    values: HashMap<(usize, Vec<u8>), f64>,
}

impl<'a> PatternCache<'a> {
    fn new(spec: &'a SystemSpec) -> Self {
        Self {
            spec,
            values: HashMap::new(),
        }
    }

    fn key(schedule: &[usize], source: usize) -> (usize, Vec<u8>) {
        (
            source,
            schedule.iter().map(|&s| (s == source) as u8).collect(),
        )
    }

    /// Weighted AoI of every candidate; missing patterns are solved in parallel.
    fn evaluate(&mut self, candidates: &[Vec<usize>]) -> Result<Vec<f64>> {
        let n = self.spec.num_sources();
        let mut missing: Vec<(usize, Vec<u8>)> = Vec::new();
        for c in candidates {
            for source in 1..=n {
                let key = Self::key(c, source);
                if !self.values.contains_key(&key) && !missing.contains(&key) {
                    missing.push(key);
                }
            }
        }
        let spec = self.spec;
        let solved: Vec<Result<f64>> = missing
            .par_iter()
            .map(|(source, bits)| {
                let mask: Vec<bool> = bits.iter().map(|&b| b == 1).collect();
                cs_mean_aoi(
                    &BinaryPattern::from_mask(&mask)?,
                    spec.mu_dedicated()[source - 1],
                    spec.mu_shared(),
                )
            })
            .collect();
        for (key, value) in missing.into_iter().zip(solved) {
            self.values.insert(key, value?);
        }
        Ok(candidates
            .iter()
            .map(|c| {
                let per: Vec<f64> = (1..=n).map(|s| self.values[&Self::key(c, s)]).collect();
                spec.weighted_sum(&per)
            })
            .collect())
    }
}

/// Greedy insertion search over cyclic schedules.
///
/// Each iteration inserts the (source, position) pair with the lowest
/// weighted AoI (ties: earlier position, then smaller source). After the
/// first non-improving iteration the search continues for `exploration`
/// more iterations and stops unless one of them improves; it also stops
/// once the schedule reaches `max_len`. Returns the best schedule seen.
pub fn insertion_search(
    spec: &SystemSpec,
    exploration: usize,
    max_len: usize,
) -> Result<ScheduleBuildReport> {
    if max_len == 0 {
        return Err(AoiError::InvalidSchedule("max_len must be >= 1".into()));
    }
    let n = spec.num_sources();
    let mut cache = PatternCache::new(spec);
    let mut current: Vec<usize> = Vec::new();
    // empty schedule: dedicated servers only
    let mut best_value: f64 = spec.weighted_sum(
        &spec
            .mu_dedicated()
            .iter()
            .map(|m| 2.0 / m)
            .collect::<Vec<_>>(),
    );
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut trace = Vec::new();
    let mut stale = 0;
    let mut iteration = 0;

    while current.len() < max_len {
        iteration += 1;
        let mut candidates = Vec::with_capacity((current.len() + 1) * n);
        for pos in 0..=current.len() {
            for source in 1..=n {
                let mut c = current.clone();
                c.insert(pos, source);
                candidates.push(c);
            }
        }
        let values = cache.evaluate(&candidates)?;
        // candidates are generated in (position, source) order, so the first
        // minimum wins ties
        let (idx, &value) = values
            .iter()
            .enumerate()
            .fold(None, |acc: Option<(usize, &f64)>, (i, v)| match acc {
                Some((_, bv)) if *v >= *bv => acc,
                _ => Some((i, v)),
            })
            .expect("at least one candidate");
        current = candidates.swap_remove(idx);
        trace.push(TraceEntry {
            iteration,
            schedule: CyclicSchedule::new(current.clone(), n)?,
            value,
        });

        if value < best_value * (1.0 - IMPROVEMENT_TOL) {
            stale = 0;
            best_value = value;
            best = Some((current.clone(), value));
        } else {
            stale += 1;
            if best.is_none() {
                best = Some((current.clone(), value));
            }
        }
        if stale > exploration {
            break;
        }
    }

    let (slots, weighted_aoi) = best.expect("at least one iteration ran");
    let schedule = CyclicSchedule::new(slots, n)?;
    Ok(ScheduleBuildReport {
        slot_counts: schedule.slot_counts(),
        schedule,
        weighted_aoi,
        iterations: iteration,
        trace,
    })
}

/// Largest-remainder split of `period` slots in proportion to `shares`,
/// giving every entry at least one slot.
fn apportion(shares: &[f64], period: usize) -> Vec<usize> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * period as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    // largest remainder first, ties to the smaller index
    order.sort_by(|&i, &j| {
        let ri = quotas[i] - quotas[i].floor();
        let rj = quotas[j] - quotas[j].floor();
        rj.partial_cmp(&ri).unwrap().then(i.cmp(&j))
    });
    for &i in order.iter().take(period.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    // every active source keeps at least one slot
    while let Some(zero) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len())
            .filter(|&i| counts[i] >= 2)
            .max_by(|&i, &j| {
                let ei = counts[i] as f64 - quotas[i];
                let ej = counts[j] as f64 - quotas[j];
                ei.partial_cmp(&ej).unwrap().then(j.cmp(&i))
            })
            .expect("period >= number of active sources");
        counts[donor] -= 1;
        counts[zero] += 1;
    }
    counts
}

/// Spread `counts[i]` slots of each entry over a period of `sum(counts)`
/// slots. Each slot credits every entry with its count and serves the
/// entry with the largest credit (ties: smaller index), which then pays
/// the period. Returns positions into `counts`.
pub fn drr_spread(counts: &[usize]) -> Vec<usize> {
    let period: i64 = counts.iter().sum::<usize>() as i64;
    let mut credit = vec![0i64; counts.len()];
    let mut out = Vec::with_capacity(period as usize);
    for _ in 0..period {
        for (c, &k) in credit.iter_mut().zip(counts) {
            *c += k as i64;
        }
        let pick = (0..counts.len())
            .max_by(|&i, &j| credit[i].cmp(&credit[j]).then(j.cmp(&i)))
            .expect("nonempty");
        credit[pick] -= period;
        out.push(pick);
    }
    out
}

/// PAC schedule from an optimal PS pmf.
pub fn pac_build(
    spec: &SystemSpec,
    pmf_opt: &Pmf,
    max_period: usize,
) -> Result<ScheduleBuildReport> {
    let (schedule, iterations) = pac_schedule(spec, pmf_opt, max_period)?;
    let weighted_aoi = cs_weighted_aoi(spec, &schedule)?;
    Ok(ScheduleBuildReport {
        slot_counts: schedule.slot_counts(),
        trace: vec![TraceEntry {
            iteration: 1,
            schedule: schedule.clone(),
            value: weighted_aoi,
        }],
        schedule,
        weighted_aoi,
        iterations,
    })
}

/// The PAC pattern alone, without evaluating it, plus the number of
/// periods tried.
pub fn pac_schedule(
    spec: &SystemSpec,
    pmf_opt: &Pmf,
    max_period: usize,
) -> Result<(CyclicSchedule, usize)> {
    pmf_opt.ensure_len(spec.num_sources())?;
    let active: Vec<usize> = (0..spec.num_sources())
        .filter(|&n| pmf_opt.probs()[n] > PAC_ACTIVE_THRESHOLD)
        .collect();
    if active.is_empty() {
        return Err(AoiError::InvalidPmf(
            "no source has positive probability".into(),
        ));
    }
    if max_period < active.len() {
        return Err(AoiError::InvalidSchedule(format!(
            "max_period {max_period} is smaller than the {} active sources",
            active.len()
        )));
    }
    let mass: f64 = active.iter().map(|&n| pmf_opt.probs()[n]).sum();
    let shares: Vec<f64> = active.iter().map(|&n| pmf_opt.probs()[n] / mass).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut iterations = 0;
    for period in active.len()..=max_period {
        iterations += 1;
        let counts = apportion(&shares, period);
        let gap = counts
            .iter()
            .zip(&shares)
            .map(|(&k, &p)| (k as f64 / period as f64 - p).abs())
            .fold(0.0_f64, f64::max);
        if best.as_ref().is_none_or(|(g, _)| gap < *g) {
            best = Some((gap, counts));
        }
    }
    let (_, counts) = best.expect("at least one period");
    let slots: Vec<usize> = drr_spread(&counts)
        .into_iter()
        .map(|i| active[i] + 1)
        .collect();
    Ok((CyclicSchedule::new(slots, spec.num_sources())?, iterations))
}

/// `[1, 2, ..., N]`.
pub fn round_robin_schedule(num_sources: usize) -> Result<CyclicSchedule> {
    CyclicSchedule::new((1..=num_sources).collect(), num_sources)
}

/// `p_n = 1/N`.
pub fn uniform_pmf(num_sources: usize) -> Result<Pmf> {
    Pmf::uniform(num_sources)
}

/// Length-`len` schedule with `k` slots of `source` spread uniformly
/// (slot `floor(i * len / k)` for `i < k`) and `filler` everywhere else.
pub fn uniform_pattern(
    len: usize,
    k: usize,
    source: usize,
    filler: usize,
    num_sources: usize,
) -> Result<CyclicSchedule> {
    if k > len {
        return Err(AoiError::InvalidSchedule(format!(
            "k = {k} exceeds length {len}"
        )));
    }
    let mut slots = vec![filler; len];
    for i in 0..k {
        slots[i * len / k] = source;
    }
    CyclicSchedule::new(slots, num_sources)
}

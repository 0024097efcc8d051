//! Discrete-event simulation of the N-source system with one dedicated
//! server per source and one shared server, all generate-at-will.
//!
//! Every server is always busy: on completion it delivers its packet and
//! immediately pulls a fresh one (timestamp = pull instant). The shared
//! server picks the next source by a pmf draw or by stepping through a
//! cyclic schedule. A delivery whose timestamp is not newer than the
//! latest delivered one for that source is discarded.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each (replication, stream) pair gets its own
//! stream number `rep * (N + 2) + k`, where `k = 0` is the shared server,
//! `k = n` the dedicated server of source `n` and `k = N + 1` the shared
//! server's source selection. Service times are exponential by inversion,
//! `-ln(1 - U) / rate` with `U` uniform on `[0, 1)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::cs::CyclicSchedule;
use crate::error::{AoiError, Result};
use crate::system::{Pmf, SystemSpec};

pub const DEFAULT_WARMUP: f64 = 0.01;
pub const DEFAULT_REPLICATIONS: usize = 20;

/// Shared-server policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Pmf(Pmf),
    Schedule(CyclicSchedule),
}

/// When a replication stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Simulated time.
    Time(f64),
    /// Number of service completions.
    Events(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub spec: SystemSpec,
    pub policy: Policy,
    pub horizon: Horizon,
    /// Leading fraction of the horizon (of time, or of events) left out of
    /// the averages.
    pub warmup_fraction: f64,
    pub seed: u64,
    pub replications: usize,
}

impl SimConfig {
    pub fn new(spec: SystemSpec, policy: Policy, horizon: Horizon, seed: u64) -> Self {
        Self {
            spec,
            policy,
            horizon,
            warmup_fraction: DEFAULT_WARMUP,
            seed,
            replications: DEFAULT_REPLICATIONS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.spec.num_sources();
        match &self.policy {
            Policy::Pmf(p) => p.ensure_len(n)?,
            Policy::Schedule(s) => {
                if s.num_sources() != n {
                    return Err(AoiError::DimensionMismatch {
                        expected: n,
                        got: s.num_sources(),
                    });
                }
            }
        }
        match self.horizon {
            Horizon::Time(t) if !(t.is_finite() && t > 0.0) => {
                return Err(AoiError::InvalidConfig(format!(
                    "horizon {t} must be positive"
                )))
            }
            Horizon::Events(0) => {
                return Err(AoiError::InvalidConfig("event cap must be positive".into()))
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(AoiError::InvalidConfig(format!(
                "warmup fraction {} must lie in [0, 1)",
                self.warmup_fraction
            )));
        }
        if self.replications == 0 {
            return Err(AoiError::InvalidConfig("replications must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    /// Time-average age per source, averaged over replications.
    pub per_source_aoi: Vec<f64>,
    pub weighted_aoi: f64,
    /// 95% Student-t half-width per source (0 with a single replication).
    pub ci_halfwidth: Vec<f64>,
    pub weighted_ci_halfwidth: f64,
    /// Service completions over all replications.
    pub events: u64,
}

/// Result of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub per_source_aoi: Vec<f64>,
    pub events: u64,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    server: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // reversed so that BinaryHeap pops the earliest (time, server)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.server.cmp(&self.server))
    }
}

/// Age bookkeeping for one source. Area is accumulated lazily, at
/// deliveries and at the end, over the part of each segment inside
/// `[window_start, window_end]`.
struct AgeTrack {
    latest: f64,
    since: f64,
    area: f64,
}

impl AgeTrack {
    fn advance(&mut self, to: f64, window_start: f64) {
        let a = self.since.max(window_start);
        if to > a {
            let dt = to - a;
            self.area += dt * ((a - self.latest) + 0.5 * dt);
        }
        self.since = to;
    }
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(-u).ln_1p() / rate
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[allow(clippy::large_enum_variant)]
enum Selector<'a> {
    Draw(WeightedIndex<f64>, ChaCha8Rng),
    Cycle(&'a [usize], usize),
}

impl Selector<'_> {
    /// Next source, 1-based.
    fn next(&mut self) -> usize {
        match self {
            Selector::Draw(dist, rng) => dist.sample(rng) + 1,
            Selector::Cycle(slots, pos) => {
                let s = slots[*pos];
                *pos = (*pos + 1) % slots.len();
                s
            }
        }
    }
}

/// Run replication `rep` of `config`, optionally writing one line per
/// completion: `time<TAB>server<TAB>source<TAB>timestamp<TAB>delivered|discarded`
/// (server 0 is shared, server `n` the dedicated server of source `n`).
pub fn simulate_replication(
    config: &SimConfig,
    rep: usize,
    mut log: Option<&mut dyn Write>,
) -> Result<Replication> {
    config.validate()?;
    let spec = &config.spec;
    let n = spec.num_sources();
    let base = rep as u64 * (n as u64 + 2);
    let mut rngs: Vec<ChaCha8Rng> = (0..=n)
        .map(|k| stream_rng(config.seed, base + k as u64))
        .collect();
    let mut selector = match &config.policy {
        Policy::Pmf(p) => Selector::Draw(
            WeightedIndex::new(p.probs()).map_err(|e| AoiError::InvalidPmf(e.to_string()))?,
            stream_rng(config.seed, base + n as u64 + 1),
        ),
        Policy::Schedule(s) => Selector::Cycle(s.slots(), 0),
    };
    let rates: Vec<f64> = std::iter::once(spec.mu_shared())
        .chain(spec.mu_dedicated().iter().copied())
        .collect();

    let (mut window_start, event_cap, time_cap) = match config.horizon {
        Horizon::Time(t) => (config.warmup_fraction * t, u64::MAX, t),
        Horizon::Events(k) => (f64::INFINITY, k, f64::INFINITY),
    };
    let warmup_events = match config.horizon {
        Horizon::Events(k) => (config.warmup_fraction * k as f64).floor() as u64,
        Horizon::Time(_) => 0,
    };
    if warmup_events == 0 && window_start.is_infinite() {
        window_start = 0.0;
    }

    // packet in service at each server: (source, timestamp)
    let mut packet: Vec<(usize, f64)> = (0..=n).map(|k| (k, 0.0)).collect();
    packet[0] = (selector.next(), 0.0);
    let mut ages: Vec<AgeTrack> = (0..n)
        .map(|_| AgeTrack {
            latest: 0.0,
            since: 0.0,
            area: 0.0,
        })
        .collect();
    let mut heap = BinaryHeap::with_capacity(n + 1);
    for (k, rng) in rngs.iter_mut().enumerate() {
        heap.push(Event {
            time: exp_sample(rng, rates[k]),
            server: k,
        });
    }

    let mut events = 0u64;
    let mut now = 0.0;
    while events < event_cap {
        let ev = heap
            .pop()
            .expect("every server always has a pending completion");
        if ev.time > time_cap {
            break;
        }
        now = ev.time;
        events += 1;
        if events == warmup_events {
            window_start = now;
        }
        let (source, ts) = packet[ev.server];
        let track = &mut ages[source - 1];
        let delivered = ts > track.latest;
        if delivered {
            track.advance(now, window_start);
            track.latest = ts;
            assert!(
                now - ts >= 0.0,
                "negative age {} for source {source}",
                now - ts
            );
        }
        if let Some(w) = log.as_deref_mut() {
            writeln!(
                w,
                "{now}\t{}\t{source}\t{ts}\t{}",
                ev.server,
                if delivered { "delivered" } else { "discarded" }
            )?;
        }
        let next_source = if ev.server == 0 {
            selector.next()
        } else {
            ev.server
        };
        packet[ev.server] = (next_source, now);
        heap.push(Event {
            time: now + exp_sample(&mut rngs[ev.server], rates[ev.server]),
            server: ev.server,
        });
    }

    let end = match config.horizon {
        Horizon::Time(t) => t,
        Horizon::Events(_) => now,
    };
    let span = end - window_start;
    if !(span > 0.0) {
        return Err(AoiError::InvalidConfig(
            "observation window is empty; raise the horizon".into(),
        ));
    }
    let per_source_aoi = ages
        .iter_mut()
        .map(|t| {
            t.advance(end, window_start);
            t.area / span
        })
        .collect();
    Ok(Replication {
        per_source_aoi,
        events,
    })
}

/// 95% Student-t half-width of the mean of `xs`.
fn ci95(xs: &[f64]) -> f64 {
    let r = xs.len();
    if r < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / r as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (r - 1) as f64)
        .expect("dof >= 1")
        .inverse_cdf(0.975);
    t * (var / r as f64).sqrt()
}

/// Run all replications (in parallel) and combine them in replication order.
pub fn simulate(config: &SimConfig) -> Result<SimEstimate> {
    config.validate()?;
    let reps: Vec<Replication> = (0..config.replications)
        .into_par_iter()
        .map(|r| simulate_replication(config, r, None))
        .collect::<Result<_>>()?;
    let n = config.spec.num_sources();
    let r = reps.len() as f64;
    let column = |i: usize| -> Vec<f64> { reps.iter().map(|x| x.per_source_aoi[i]).collect() };
    let per_source_aoi: Vec<f64> = (0..n).map(|i| column(i).iter().sum::<f64>() / r).collect();
    let ci_halfwidth = (0..n).map(|i| ci95(&column(i))).collect();
    let weighted: Vec<f64> = reps
        .iter()
        .map(|x| config.spec.weighted_sum(&x.per_source_aoi))
        .collect();
    Ok(SimEstimate {
        weighted_aoi: config.spec.weighted_sum(&per_source_aoi),
        per_source_aoi,
        ci_halfwidth,
        weighted_ci_halfwidth: ci95(&weighted),
        events: reps.iter().map(|x| x.events).sum(),
    })
}

/// Service rate `bpi * clock_hz / (task_bits * cpi)` of a device that
/// executes a task of `task_bits` bits at `bpi` bits per instruction and
/// `cpi` cycles per instruction.
pub fn device_rate(task_bits: f64, cpi: f64, bpi: f64, clock_hz: f64) -> Result<f64> {
    for (name, v) in [
        ("task_bits", task_bits),
        ("cpi", cpi),
        ("bpi", bpi),
        ("clock_hz", clock_hz),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(AoiError::Domain(format!("{name} = {v} must be positive")));
        }
    }
    Ok(bpi * clock_hz / (task_bits * cpi))
}

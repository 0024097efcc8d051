use dualaoi_core::{
    cs_per_source_aoi, insertion_search, optimize_ps, pac_build, ps_per_source_aoi,
    round_robin_schedule, simulate, uniform_pmf, CyclicSchedule, Horizon, Pmf, Policy, SimConfig,
    SystemSpec,
};
use rayon::prelude::*;

use crate::scenario::{Point, PolicyId, Scenario};
use crate::table::Row;
use crate::CliError;

pub const DEFAULT_HORIZON: f64 = 1e4;
pub const DEFAULT_SEED: u64 = 1;

/// Command-line overrides of a scenario's `[sim]` section.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub horizon: Option<f64>,
    pub replications: Option<usize>,
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// A resolved shared-server policy.
#[derive(Debug, Clone, PartialEq)]
pub enum Resolved {
    Pmf(Pmf),
    Schedule(CyclicSchedule),
}

impl Resolved {
    pub fn per_source_aoi(&self, spec: &SystemSpec) -> Result<Vec<f64>, CliError> {
        match self {
            Resolved::Pmf(p) => ps_per_source_aoi(spec, p),
            Resolved::Schedule(s) => cs_per_source_aoi(spec, s),
        }
        .map_err(runtime)
    }

    /// `p_n`, or `K_n / K` for a cyclic schedule.
    pub fn shares(&self) -> Vec<f64> {
        match self {
            Resolved::Pmf(p) => p.probs().to_vec(),
            Resolved::Schedule(s) => {
                let k = s.len() as f64;
                s.slot_counts().iter().map(|&c| c as f64 / k).collect()
            }
        }
    }

    fn into_policy(self) -> Policy {
        match self {
            Resolved::Pmf(p) => Policy::Pmf(p),
            Resolved::Schedule(s) => Policy::Schedule(s),
        }
    }
}

pub fn resolve(scenario: &Scenario, point: &Point, policy: PolicyId) -> Result<Resolved, CliError> {
    let spec = &point.spec;
    let n = spec.num_sources();
    let o = &scenario.options;
    Ok(match policy {
        PolicyId::PsOpt => Resolved::Pmf(optimize_ps(spec, o.epsilon).map_err(runtime)?),
        PolicyId::Ups => Resolved::Pmf(uniform_pmf(n).map_err(runtime)?),
        PolicyId::Rr => Resolved::Schedule(round_robin_schedule(n).map_err(runtime)?),
        PolicyId::Is => Resolved::Schedule(
            insertion_search(spec, o.exploration, o.max_len)
                .map_err(runtime)?
                .schedule,
        ),
        PolicyId::Pac => {
            let opt = optimize_ps(spec, o.epsilon).map_err(runtime)?;
            Resolved::Schedule(
                pac_build(spec, &opt, o.max_period)
                    .map_err(runtime)?
                    .schedule,
            )
        }
        PolicyId::FixedPmf => Resolved::Pmf(point.pmf.clone().expect("validated")),
        PolicyId::FixedSchedule => Resolved::Schedule(point.schedule.clone().expect("validated")),
    })
}

fn sim_config(
    scenario: &Scenario,
    spec: &SystemSpec,
    policy: Policy,
    ov: &RunOverrides,
) -> SimConfig {
    let mut cfg = SimConfig::new(
        spec.clone(),
        policy,
        Horizon::Time(
            ov.horizon
                .or(scenario.sim.horizon)
                .unwrap_or(DEFAULT_HORIZON),
        ),
        ov.seed.or(scenario.sim.seed).unwrap_or(DEFAULT_SEED),
    );
    if let Some(r) = ov.replications.or(scenario.sim.replications) {
        cfg.replications = r;
    }
    if let Some(w) = scenario.sim.warmup_fraction {
        cfg.warmup_fraction = w;
    }
    cfg
}

fn rows_for(
    scenario: &Scenario,
    point: &Point,
    policy: PolicyId,
    ov: &RunOverrides,
) -> Result<Vec<Row>, CliError> {
    let n = point.spec.num_sources();
    let resolved = resolve(scenario, point, policy)?;
    let shares = resolved.shares();
    let analytic = if scenario.evaluation.analytic() {
        Some(resolved.per_source_aoi(&point.spec)?)
    } else {
        None
    };
    let sim = if scenario.evaluation.simulated() {
        let cfg = sim_config(scenario, &point.spec, resolved.into_policy(), ov);
        Some(simulate(&cfg).map_err(runtime)?)
    } else {
        None
    };
    let w = &point.report_weights;
    let row = |source: String| Row {
        scenario: scenario.name.clone(),
        sweep_param: scenario.sweep.param.clone(),
        sweep_value: point.value,
        policy: policy.to_string(),
        source,
        analytic_aoi: None,
        sim_aoi: None,
        ci_halfwidth: None,
        weighted: 0.0,
        share: None,
    };
    let mut rows: Vec<Row> = (0..n)
        .map(|i| {
            let a = analytic.as_ref().map(|v| v[i]);
            let s = sim.as_ref().map(|e| e.per_source_aoi[i]);
            Row {
                analytic_aoi: a,
                sim_aoi: s,
                ci_halfwidth: sim.as_ref().map(|e| e.ci_halfwidth[i]),
                weighted: w[i] * a.or(s).expect("at least one evaluation"),
                share: Some(shares[i]),
                ..row((i + 1).to_string())
            }
        })
        .collect();
    let weigh = |get: fn(&Row) -> Option<f64>| -> Option<f64> {
        rows.iter()
            .zip(w)
            .map(|(r, w)| get(r).map(|x| w * x))
            .sum::<Option<f64>>()
    };
    // report weights need not sum to one in as-printed mode
    let report_scale: f64 = w.iter().sum();
    let aggregate = Row {
        analytic_aoi: weigh(|r| r.analytic_aoi),
        sim_aoi: weigh(|r| r.sim_aoi),
        ci_halfwidth: sim.as_ref().map(|e| e.weighted_ci_halfwidth * report_scale),
        weighted: rows.iter().map(|r| r.weighted).sum(),
        ..row("*".into())
    };
    rows.push(aggregate);
    Ok(rows)
}

/// Evaluate every (sweep value, policy) pair. Sweep points run in
/// parallel; rows come back ordered by sweep value (file order), policy
/// (file order), then source with the aggregate last.
pub fn run_scenario(scenario: &Scenario, ov: &RunOverrides) -> Result<Vec<Row>, CliError> {
    let points = scenario.points()?;
    let per_point: Vec<Result<Vec<Row>, CliError>> = points
        .par_iter()
        .map(|pt| {
            let mut rows = Vec::new();
            for &policy in &scenario.policies {
                rows.extend(rows_for(scenario, pt, policy, ov)?);
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_point {
        out.extend(rows?);
    }
    Ok(out)
}

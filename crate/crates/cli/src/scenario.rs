//! Scenario files (TOML).
//!
//! ```toml
//! name = "fig8"
//! evaluation = "analytic"            # analytic | simulated | both
//! policies = ["IS", "PAC", "PS-opt"] # PS-opt UPS RR IS PAC fixed-pmf fixed-schedule
//!
//! [spec]
//! mu_shared = 8.0
//! mu_dedicated = [1.0, 2.0, 3.0]
//! weights = [0.3, 0.5, 0.3]          # default: equal
//! weight_mode = "normalize"          # strict | normalize | as-printed
//!
//! [sweep]
//! param = "mu_dedicated[1]"          # mu_shared, mu_dedicated[i], weights[i], p[i], pattern-k
//! values = [1.0, 2.0, 3.0]
//!
//! [sim]                              # optional
//! horizon = 1e5
//! replications = 20
//! seed = 1
//! warmup_fraction = 0.01
//!
//! [options]                          # optional
//! pmf = [0.5, 0.5]                   # fixed-pmf (base pmf for p[i] sweeps)
//! schedule = [1, 2, 2]               # fixed-schedule
//! pattern_len = 30                   # pattern-k sweeps
//! pattern_source = 1
//! pattern_filler = 2
//! is_cap = 12
//! ```
//!
//! Source indices in `mu_dedicated[i]`, `weights[i]`, `p[i]` and schedules
//! are 1-based.
//!
//! `weight_mode`: `strict` requires weights summing to one; `normalize`
//! rescales them; `as-printed` optimizes with the normalized weights but
//! reports weighted values with the raw ones.
//!
//! A `weights[i]` sweep sets `w_i` and rescales the other weights so their
//! total is unchanged; a `p[i]` sweep does the same with the base pmf
//! (`options.pmf`, default uniform).

use std::fmt;
use std::str::FromStr;

use dualaoi_core::{uniform_pattern, CyclicSchedule, Pmf, SystemSpec, DEFAULT_EPSILON};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Evaluation {
    #[default]
    Analytic,
    Simulated,
    Both,
}

impl Evaluation {
    pub fn analytic(self) -> bool {
        matches!(self, Evaluation::Analytic | Evaluation::Both)
    }

    pub fn simulated(self) -> bool {
        matches!(self, Evaluation::Simulated | Evaluation::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum PolicyId {
    #[serde(rename = "PS-opt")]
    PsOpt,
    #[serde(rename = "UPS")]
    Ups,
    #[serde(rename = "RR")]
    Rr,
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "PAC")]
    Pac,
    #[serde(rename = "fixed-pmf")]
    FixedPmf,
    #[serde(rename = "fixed-schedule")]
    FixedSchedule,
}

impl fmt::Display for PolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyId::PsOpt => "PS-opt",
            PolicyId::Ups => "UPS",
            PolicyId::Rr => "RR",
            PolicyId::Is => "IS",
            PolicyId::Pac => "PAC",
            PolicyId::FixedPmf => "fixed-pmf",
            PolicyId::FixedSchedule => "fixed-schedule",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    #[default]
    Strict,
    Normalize,
    AsPrinted,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub mu_shared: f64,
    pub mu_dedicated: Vec<f64>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub weight_mode: WeightMode,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub param: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub horizon: Option<f64>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub warmup_fraction: Option<f64>,
}

fn default_is_cap() -> usize {
    12
}
fn default_exploration() -> usize {
    dualaoi_core::schedulers::DEFAULT_EXPLORATION
}
fn default_max_len() -> usize {
    dualaoi_core::schedulers::DEFAULT_MAX_LEN
}
fn default_max_period() -> usize {
    dualaoi_core::schedulers::DEFAULT_MAX_PERIOD
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_source() -> usize {
    1
}
fn default_filler() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub pmf: Option<Vec<f64>>,
    pub schedule: Option<Vec<usize>>,
    pub pattern_len: Option<usize>,
    #[serde(default = "default_source")]
    pub pattern_source: usize,
    #[serde(default = "default_filler")]
    pub pattern_filler: usize,
    #[serde(default = "default_is_cap")]
    pub is_cap: usize,
    #[serde(default = "default_exploration")]
    pub exploration: usize,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_max_period")]
    pub max_period: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            pmf: None,
            schedule: None,
            pattern_len: None,
            pattern_source: default_source(),
            pattern_filler: default_filler(),
            is_cap: default_is_cap(),
            exploration: default_exploration(),
            max_len: default_max_len(),
            max_period: default_max_period(),
            epsilon: default_epsilon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub evaluation: Evaluation,
    pub policies: Vec<PolicyId>,
    pub spec: SpecConfig,
    pub sweep: SweepConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub options: Options,
}

/// The swept quantity; indices are 0-based here.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    MuShared,
    MuDedicated(usize),
    Weight(usize),
    P(usize),
    PatternK,
}

impl FromStr for SweepParam {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Config(format!("sweep.param: unknown parameter `{s}`"));
        let indexed = |prefix: &str| -> Result<Option<usize>, CliError> {
            match s
                .strip_prefix(prefix)
                .and_then(|r| r.strip_prefix('['))
                .and_then(|r| r.strip_suffix(']'))
            {
                Some(i) => {
                    let i: usize = i.trim().parse().map_err(|_| bad())?;
                    if i == 0 {
                        return Err(CliError::Config(format!(
                            "sweep.param `{s}`: indices are 1-based"
                        )));
                    }
                    Ok(Some(i - 1))
                }
                None => Ok(None),
            }
        };
        match s {
            "mu_shared" => return Ok(SweepParam::MuShared),
            "pattern-k" => return Ok(SweepParam::PatternK),
            _ => {}
        }
        if let Some(i) = indexed("mu_dedicated")? {
            return Ok(SweepParam::MuDedicated(i));
        }
        if let Some(i) = indexed("weights")? {
            return Ok(SweepParam::Weight(i));
        }
        if let Some(i) = indexed("p")? {
            return Ok(SweepParam::P(i));
        }
        Err(bad())
    }
}

/// Everything needed to evaluate the policies at one sweep value.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub value: f64,
    pub spec: SystemSpec,
    /// Weights used for reported weighted values.
    pub report_weights: Vec<f64>,
    pub pmf: Option<Pmf>,
    pub schedule: Option<CyclicSchedule>,
}

fn config(field: &str, e: impl fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {e}"))
}

/// Set entry `i` to `v` and rescale the others so the total is unchanged.
fn replace_keep_total(base: &[f64], i: usize, v: f64, field: &str) -> Result<Vec<f64>, CliError> {
    let total: f64 = base.iter().sum();
    let rest: f64 = total - base[i];
    if !(v >= 0.0 && v <= total) {
        return Err(config(field, format!("value {v} outside [0, {total}]")));
    }
    let mut out: Vec<f64> = base.to_vec();
    for (j, x) in out.iter_mut().enumerate() {
        if j == i {
            *x = v;
        } else if rest > 0.0 {
            *x *= (total - v) / rest;
        } else {
            *x = (total - v) / (base.len() - 1) as f64;
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        scenario.points()?;
        Ok(scenario)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn sweep_param(&self) -> Result<SweepParam, CliError> {
        self.sweep.param.parse()
    }

    pub fn num_sources(&self) -> usize {
        self.spec.mu_dedicated.len()
    }

    /// Validate the scenario and build every sweep point.
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let n = self.num_sources();
        if self.policies.is_empty() {
            return Err(config("policies", "list is empty"));
        }
        if self.sweep.values.is_empty() {
            return Err(config("sweep.values", "list is empty"));
        }
        if n == 0 {
            return Err(config("spec.mu_dedicated", "needs at least one source"));
        }
        if self.policies.contains(&PolicyId::Is) && n > self.options.is_cap {
            return Err(config(
                "policies",
                format!(
                    "IS is limited to N <= {} sources (got {n}); its cost grows steeply with N, use PAC instead or raise options.is_cap",
                    self.options.is_cap
                ),
            ));
        }
        let param = self.sweep_param()?;
        let in_range = |i: usize| {
            if i < n {
                Ok(())
            } else {
                Err(config(
                    "sweep.param",
                    format!("source {} out of range 1..={n}", i + 1),
                ))
            }
        };
        match param {
            SweepParam::MuDedicated(i) | SweepParam::Weight(i) | SweepParam::P(i) => in_range(i)?,
            _ => {}
        }
        if matches!(param, SweepParam::P(_)) && !self.policies.contains(&PolicyId::FixedPmf) {
            return Err(config(
                "sweep.param",
                "p[i] sweeps need the fixed-pmf policy",
            ));
        }
        if param == SweepParam::PatternK {
            if !self.policies.contains(&PolicyId::FixedSchedule) {
                return Err(config(
                    "sweep.param",
                    "pattern-k sweeps need the fixed-schedule policy",
                ));
            }
            if self.options.pattern_len.is_none() {
                return Err(config(
                    "options.pattern_len",
                    "required for pattern-k sweeps",
                ));
            }
        }
        if self.policies.contains(&PolicyId::FixedPmf)
            && self.options.pmf.is_none()
            && !matches!(param, SweepParam::P(_))
        {
            return Err(config("options.pmf", "required by the fixed-pmf policy"));
        }
        if self.policies.contains(&PolicyId::FixedSchedule)
            && self.options.schedule.is_none()
            && param != SweepParam::PatternK
        {
            return Err(config(
                "options.schedule",
                "required by the fixed-schedule policy",
            ));
        }
        if let Some(h) = self.sim.horizon {
            if !(h.is_finite() && h > 0.0) {
                return Err(config("sim.horizon", format!("{h} must be positive")));
            }
        }
        if self.sim.replications == Some(0) {
            return Err(config("sim.replications", "must be >= 1"));
        }
        self.sweep
            .values
            .iter()
            .map(|&v| self.point(param, v))
            .collect()
    }

    fn point(&self, param: SweepParam, v: f64) -> Result<Point, CliError> {
        let n = self.num_sources();
        let mut mu = self.spec.mu_shared;
        let mut mu_n = self.spec.mu_dedicated.clone();
        let mut raw_w = self
            .spec
            .weights
            .clone()
            .unwrap_or_else(|| vec![1.0 / n as f64; n]);
        if raw_w.len() != n {
            return Err(config(
                "spec.weights",
                format!("expected {n} entries, got {}", raw_w.len()),
            ));
        }
        let mut pmf = self.options.pmf.clone();
        let mut schedule = self.options.schedule.clone();
        match param {
            SweepParam::MuShared => mu = v,
            SweepParam::MuDedicated(i) => mu_n[i] = v,
            SweepParam::Weight(i) => raw_w = replace_keep_total(&raw_w, i, v, "sweep.values")?,
            SweepParam::P(i) => {
                let base = pmf.unwrap_or_else(|| vec![1.0 / n as f64; n]);
                if base.len() != n {
                    return Err(config(
                        "options.pmf",
                        format!("expected {n} entries, got {}", base.len()),
                    ));
                }
                pmf = Some(replace_keep_total(&base, i, v, "sweep.values")?);
            }
            SweepParam::PatternK => {
                if v.fract() != 0.0 || v < 0.0 {
                    return Err(config(
                        "sweep.values",
                        format!("pattern-k value {v} is not a count"),
                    ));
                }
                let len = self.options.pattern_len.expect("checked");
                let s = uniform_pattern(
                    len,
                    v as usize,
                    self.options.pattern_source,
                    self.options.pattern_filler,
                    n,
                )
                .map_err(|e| config("options", e))?;
                schedule = Some(s.slots().to_vec());
            }
        }
        let spec = match self.spec.weight_mode {
            WeightMode::Strict => SystemSpec::new(mu, mu_n, raw_w.clone()),
            WeightMode::Normalize | WeightMode::AsPrinted => {
                SystemSpec::relaxed(mu, mu_n, raw_w.clone())
            }
        }
        .map_err(|e| config("spec", e))?;
        let report_weights = match self.spec.weight_mode {
            WeightMode::AsPrinted => raw_w,
            _ => spec.weights().to_vec(),
        };
        let pmf = pmf
            .map(Pmf::new)
            .transpose()
            .map_err(|e| config("options.pmf", e))?;
        if let Some(p) = &pmf {
            if p.len() != n {
                return Err(config(
                    "options.pmf",
                    format!("expected {n} entries, got {}", p.len()),
                ));
            }
        }
        let schedule = schedule
            .map(|s| CyclicSchedule::new(s, n))
            .transpose()
            .map_err(|e| config("options.schedule", e))?;
        Ok(Point {
            value: v,
            spec,
            report_weights,
            pmf,
            schedule,
        })
    }
}

use std::time::Instant;

use dualaoi_core::{insertion_search, optimize_ps, pac_schedule, SystemSpec, DEFAULT_EPSILON};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub ps_opt_seconds: f64,
    pub pac_seconds: f64,
    /// Empty above the IS cap.
    pub is_seconds: Option<f64>,
}

/// `w = 1/N`, `mu = N/2`, `mu_1 = N`, `mu_n = n` for `n >= 2`.
pub fn timing_family(n: usize) -> Result<SystemSpec, CliError> {
    if n < 2 {
        return Err(CliError::Config(format!(
            "N = {n}: timing runs need N >= 2"
        )));
    }
    let mut mu_n: Vec<f64> = (1..=n).map(|k| k as f64).collect();
    mu_n[0] = n as f64;
    SystemSpec::equal_weights(n as f64 / 2.0, mu_n).map_err(|e| CliError::Config(e.to_string()))
}

/// Wall-clock seconds to build PS-opt, PAC (its PS-opt solve plus the
/// pattern construction, not the evaluation of the result) and, for
/// `N <= is_cap`, IS.
pub fn time_policies(ns: &[usize], is_cap: usize) -> Result<Vec<TimingRow>, CliError> {
    let rt = |e: dualaoi_core::AoiError| CliError::Runtime(e.to_string());
    ns.iter()
        .map(|&n| {
            let spec = timing_family(n)?;
            let t = Instant::now();
            optimize_ps(&spec, DEFAULT_EPSILON).map_err(rt)?;
            let ps_opt_seconds = t.elapsed().as_secs_f64();

            let t = Instant::now();
            let opt = optimize_ps(&spec, DEFAULT_EPSILON).map_err(rt)?;
            pac_schedule(&spec, &opt, dualaoi_core::schedulers::DEFAULT_MAX_PERIOD).map_err(rt)?;
            let pac_seconds = t.elapsed().as_secs_f64();

            let is_seconds = if n <= is_cap {
                let t = Instant::now();
                insertion_search(
                    &spec,
                    dualaoi_core::schedulers::DEFAULT_EXPLORATION,
                    dualaoi_core::schedulers::DEFAULT_MAX_LEN,
                )
                .map_err(rt)?;
                Some(t.elapsed().as_secs_f64())
            } else {
                None
            };
            Ok(TimingRow {
                n,
                ps_opt_seconds,
                pac_seconds,
                is_seconds,
            })
        })
        .collect()
}

pub fn emit_timing_csv<W: std::io::Write>(rows: &[TimingRow], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

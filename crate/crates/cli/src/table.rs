use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// One output line. `source` is `1..=N`, or `*` for the aggregate row.
/// Unevaluated cells are `None` and written as empty fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub scenario: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub policy: String,
    pub source: String,
    pub analytic_aoi: Option<f64>,
    pub sim_aoi: Option<f64>,
    pub ci_halfwidth: Option<f64>,
    /// `w_n * AoI_n` (analytic when available), or their sum on aggregate rows.
    pub weighted: f64,
    /// `p_n` for probabilistic policies, `K_n / K` for cyclic ones.
    pub share: Option<f64>,
}

pub fn emit_csv<W: Write>(rows: &[Row], out: W) -> Result<(), CliError> {
    if rows.is_empty() {
        return Err(CliError::Runtime("refusing to write an empty table".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Row>, CliError> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(e.to_string()))
}

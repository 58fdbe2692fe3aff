use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ScenarioResult, TraceRecord};
use crate::error::Result;

pub const TRACE_HEADER: [&str; 10] = [
    "t", "soc_true", "soc_est", "v_true", "v_meas", "v_est", "bias_true", "bias_est", "p_soc",
    "p_bias",
];

/// One CSV row. Estimate columns are empty before the filter starts, and
/// the bias estimate columns are empty for models without that bias state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub soc_true: f64,
    pub soc_est: Option<f64>,
    pub v_true: f64,
    pub v_meas: f64,
    pub v_est: Option<f64>,
    pub bias_true: f64,
    pub bias_est: Option<f64>,
    pub p_soc: Option<f64>,
    pub p_bias: Option<f64>,
}

impl TraceRow {
    pub fn from_record(r: &TraceRecord) -> Self {
        let e = r.estimate.as_ref();
        Self {
            t: r.t,
            soc_true: r.true_state.z,
            soc_est: e.map(|e| e.soc()),
            v_true: r.v_true,
            v_meas: r.v_meas,
            v_est: e.map(|e| e.v_est),
            bias_true: r.bias_true,
            bias_est: e.and_then(|e| e.bias_est),
            p_soc: e.map(|e| e.p_soc()),
            p_bias: e.and_then(|e| e.p_bias),
        }
    }
}

pub fn write_trace_csv<W: Write>(result: &ScenarioResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in result.records.iter().map(TraceRow::from_record) {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(reader: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_HEADER {
        return Err(crate::error::Error::Csv(format!(
            "unexpected header {header:?}, expected {TRACE_HEADER:?}"
        )));
    }
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

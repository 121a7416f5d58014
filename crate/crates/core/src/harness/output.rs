use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

use super::RunRecord;

/// Column order of the runs table.
pub const RUNS_COLUMNS: [&str; 13] = [
    "env",
    "algo",
    "k",
    "m",
    "seed",
    "solved",
    "sample_complexity",
    "final_return",
    "optimal_return",
    "training_timesteps",
    "num_evaluations",
    "evaluation_timesteps",
    "evaluation_returns",
];

/// Column order of the learning-curve table.
pub const CURVES_COLUMNS: [&str; 10] = [
    "env",
    "algo",
    "k",
    "m",
    "seed",
    "timesteps",
    "mean_return",
    "return_std",
    "exact_return",
    "optimal_return",
];

/// One row of the runs table. Evaluation lists are `;`-separated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub env: String,
    pub algo: String,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub solved: bool,
    pub sample_complexity: Option<u64>,
    pub final_return: Option<f64>,
    pub optimal_return: f64,
    pub training_timesteps: u64,
    pub num_evaluations: usize,
    pub evaluation_timesteps: String,
    pub evaluation_returns: String,
}

impl From<&RunRecord> for RunRow {
    fn from(r: &RunRecord) -> Self {
        let join = |f: &dyn Fn(&super::Evaluation) -> String| {
            r.evaluations.iter().map(f).collect::<Vec<_>>().join(";")
        };
        Self {
            env: r.env.clone(),
            algo: r.algo.algo.to_string(),
            k: r.algo.k,
            m: r.algo.m,
            seed: r.seed,
            solved: r.solved,
            sample_complexity: r.sample_complexity,
            final_return: r.final_return(),
            optimal_return: r.optimal_return,
            training_timesteps: r.training_timesteps,
            num_evaluations: r.evaluations.len(),
            evaluation_timesteps: join(&|e| e.timesteps.to_string()),
            evaluation_returns: join(&|e| e.mean_return.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub env: String,
    pub algo: String,
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub timesteps: u64,
    pub mean_return: f64,
    pub return_std: f64,
    pub exact_return: Option<f64>,
    pub optimal_return: f64,
}

pub fn write_runs_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(RunRow::from(r))?;
    }
    if records.is_empty() {
        w.write_record(RUNS_COLUMNS)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunRow>> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<std::result::Result<Vec<RunRow>, _>>()?)
}

pub fn write_curves_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut wrote = false;
    for r in records {
        for e in &r.evaluations {
            w.serialize(CurveRow {
                env: r.env.clone(),
                algo: r.algo.algo.to_string(),
                k: r.algo.k,
                m: r.algo.m,
                seed: r.seed,
                timesteps: e.timesteps,
                mean_return: e.mean_return,
                return_std: e.return_std,
                exact_return: e.exact_return,
                optimal_return: r.optimal_return,
            })?;
            wrote = true;
        }
    }
    if !wrote {
        w.write_record(CURVES_COLUMNS)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn strip_wall_clock(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("wall_clock_secs");
            map.values_mut().for_each(strip_wall_clock);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_wall_clock),
        _ => {}
    }
}

/// SHA-256 of the JSON form with wall-clock fields removed.
pub fn digest<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    strip_wall_clock(&mut v);
    let hash = Sha256::digest(serde_json::to_vec(&v)?);
    Ok(hash.iter().map(|b| format!("{b:02x}")).collect())
}

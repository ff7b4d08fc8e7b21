//! CSV tables and the binary ensemble dump.
//!
//! The dump is `MAGIC`, a little-endian `u64` header length, a JSON header
//! (grid, noise, control dimension) and then the history, increment and
//! control buffers as little-endian `f64`.

use delayfbsde_core::malliavin::MalliavinState;
use delayfbsde_core::noise::NoiseGrid;
use delayfbsde_core::quadvar::ConvergenceReport;
use delayfbsde_core::sdde::PathEnsemble;
use delayfbsde_core::segment::GridSpec;
use serde::{Deserialize, Serialize};

use crate::{LabError, LabResult};

pub const MAGIC: &[u8; 8] = b"DFBSDE1\n";

fn table(header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn labels(prefix: &str, count: usize) -> Vec<String> {
    if count == 1 {
        vec![prefix.to_string()]
    } else {
        (0..count).map(|i| format!("{prefix}{i}")).collect()
    }
}

/// `path, step, time, y…, u…` for every path and step `0..=M`; the control
/// columns are present only for controlled ensembles and empty at `M`.
pub fn ensemble_csv(ens: &PathEnsemble) -> Vec<u8> {
    let n = ens.grid().dim_n();
    let k = ens.control_dim();
    let mut header = vec!["path".to_string(), "step".into(), "time".into()];
    header.extend(labels("y", n));
    if let Some(k) = k {
        header.extend(labels("u", k));
    }
    let steps = ens.steps();
    let rows = (0..ens.num_paths()).flat_map(move |p| {
        (0..=steps).map(move |s| {
            let mut row = vec![p.to_string(), s.to_string(), ens.time(s).to_string()];
            row.extend(ens.state(p, s).iter().map(f64::to_string));
            if let Some(k) = k {
                match (s < steps).then(|| ens.control(p, s)).flatten() {
                    Some(u) => row.extend(u.iter().map(f64::to_string)),
                    None => row.extend(std::iter::repeat_n(String::new(), k)),
                }
            }
            row
        })
    });
    table(&header, rows)
}

/// `epsilon, mean_abs_error, std_error, mean_error, mean_error_se`.
pub fn convergence_csv(report: &ConvergenceReport) -> Vec<u8> {
    let header: Vec<String> = [
        "epsilon",
        "mean_abs_error",
        "std_error",
        "mean_error",
        "mean_error_se",
    ]
    .map(String::from)
    .to_vec();
    table(
        &header,
        report.rows.iter().map(|r| {
            [
                r.epsilon,
                r.mean_abs_error,
                r.std_error,
                r.mean_error,
                r.mean_error_se,
            ]
            .map(|v| v.to_string())
            .to_vec()
        }),
    )
}

/// `path, j, t, value` for the derivative `D^j_s y_t`, `t ∈ [s, T]`, of
/// scalar states.
pub fn malliavin_csv(state: &MalliavinState, ens: &PathEnsemble, dim_d: usize) -> Vec<u8> {
    let header: Vec<String> = ["path", "j", "t", "value"].map(String::from).to_vec();
    let s = state.base_step();
    let rows = (0..state.num_paths()).flat_map(move |p| {
        (0..dim_d).flat_map(move |j| {
            (s..=state.steps()).map(move |k| {
                vec![
                    p.to_string(),
                    j.to_string(),
                    ens.time(k).to_string(),
                    state.value(p, j, k)[0].to_string(),
                ]
            })
        })
    });
    table(&header, rows)
}

#[derive(Serialize, Deserialize)]
struct DumpHeader {
    grid: GridSpec,
    noise: NoiseGrid,
    control_dim: Option<usize>,
}

pub fn ensemble_binary(ens: &PathEnsemble) -> Vec<u8> {
    let header = serde_json::to_vec(&DumpHeader {
        grid: *ens.grid(),
        noise: ens.noise().clone(),
        control_dim: ens.control_dim(),
    })
    .expect("header serializes");
    let controls = ens.raw_controls().unwrap_or(&[]);
    let floats = ens.raw_history().len() + ens.raw_increments().len() + controls.len();
    let mut out = Vec::with_capacity(16 + header.len() + 8 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for v in ens
        .raw_history()
        .iter()
        .chain(ens.raw_increments())
        .chain(controls)
    {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn corrupt(what: &str) -> LabError {
    LabError::Config(format!("ensemble dump: {what}"))
}

pub fn read_ensemble_binary(bytes: &[u8]) -> LabResult<PathEnsemble> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..).ok_or_else(|| corrupt("truncated"))?;
    if body.len() < len {
        return Err(corrupt("truncated header"));
    }
    let header: DumpHeader =
        serde_json::from_slice(&body[..len]).map_err(|e| corrupt(&e.to_string()))?;
    let data = &body[len..];
    if data.len() % 8 != 0 {
        return Err(corrupt("payload is not a whole number of f64"));
    }
    let mut floats = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let (g, noise) = (header.grid, header.noise);
    let h_len = noise.num_paths * (g.nodes() + noise.steps) * g.dim_n();
    let i_len = noise.num_paths * noise.steps * noise.dim_d;
    let c_len = header
        .control_dim
        .map_or(0, |k| noise.num_paths * noise.steps * k);
    if data.len() / 8 != h_len + i_len + c_len {
        return Err(corrupt("payload length does not match the header"));
    }
    let history: Vec<f64> = floats.by_ref().take(h_len).collect();
    let increments: Vec<f64> = floats.by_ref().take(i_len).collect();
    let controls = header.control_dim.map(|k| (k, floats.collect()));
    Ok(PathEnsemble::from_parts(
        g, noise, history, increments, controls,
    )?)
}

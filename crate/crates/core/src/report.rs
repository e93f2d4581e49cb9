//! CSV emission and read-back. Numbers are written with six decimals so that
//! repeated runs produce byte-identical files; per-round errors use scientific
//! notation because they fall far below that resolution.

use crate::error::{Error, Result};
use crate::mechanism::{CurveRow, CurveTable, RowStatus};
use crate::solver::EquilibriumResult;

fn fixed(x: f64) -> String {
    format!("{x:.6}")
}

fn sci(x: f64) -> String {
    format!("{x:.6e}")
}

fn droop_headers(n: usize) -> impl Iterator<Item = String> {
    (1..=n).map(|i| format!("k_{i}"))
}

fn finish(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Columns: round, gamma, k_1..k_n, omega_hat, e_gamma, max_e_k.
pub fn trace_csv(result: &EquilibriumResult) -> Result<String> {
    let n = result.ad_ids.len();
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["round".to_string(), "gamma".to_string()];
    header.extend(droop_headers(n));
    header.extend(["omega_hat", "e_gamma", "max_e_k"].map(String::from));
    wtr.write_record(&header)?;
    for row in &result.trace {
        let mut rec = vec![row.round.to_string(), fixed(row.gamma)];
        rec.extend(row.k.iter().copied().map(fixed));
        rec.extend([fixed(row.omega_hat), sci(row.e_gamma), sci(row.max_e_k)]);
        wtr.write_record(&rec)?;
    }
    finish(wtr)
}

/// Columns: fault_id, delta_p_mw, omega_am, gamma, k_1..k_n, reward, omega_hat, iterations, status.
pub fn equilibrium_csv(results: &[EquilibriumResult]) -> Result<String> {
    let n = results.first().map_or(0, |r| r.ad_ids.len());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["fault_id", "delta_p_mw", "omega_am", "gamma"].map(String::from).to_vec();
    header.extend(droop_headers(n));
    header.extend(["reward", "omega_hat", "iterations", "status"].map(String::from));
    wtr.write_record(&header)?;
    for r in results {
        let mut rec = vec![r.fault_id.clone(), fixed(r.delta_p), fixed(r.omega_am), fixed(r.gamma_star)];
        rec.extend(r.k_star.iter().copied().map(fixed));
        rec.extend([fixed(r.reward_star), fixed(r.omega_hat), r.iterations.to_string(), r.status.as_str().to_string()]);
        wtr.write_record(&rec)?;
    }
    finish(wtr)
}

/// Columns: fault_id, delta_p_mw, gamma, k_1..k_n, reward, status.
pub fn curves_csv(table: &CurveTable) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["fault_id", "delta_p_mw", "gamma"].map(String::from).to_vec();
    header.extend(droop_headers(table.ad_ids.len()));
    header.extend(["reward", "status"].map(String::from));
    wtr.write_record(&header)?;
    for row in &table.rows {
        let mut rec = vec![row.fault_id.clone(), fixed(row.delta_p), fixed(row.gamma)];
        rec.extend(row.k.iter().copied().map(fixed));
        rec.extend([fixed(row.reward), row.status.to_string()]);
        wtr.write_record(&rec)?;
    }
    finish(wtr)
}

fn parse_field(value: &str, line: usize, column: &str) -> Result<f64> {
    value.trim().parse().map_err(|_| Error::Parse {
        path: column.to_string(),
        line,
        column: 0,
        message: format!("`{value}` is not a number"),
    })
}

/// Reads a table written by [`curves_csv`]. Droop columns are matched to
/// `ad_ids` by position; rows read back are marked unverified.
pub fn read_curves_csv(text: &str, ad_ids: Vec<String>, omega_am: f64) -> Result<CurveTable> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let n = ad_ids.len();
    let expected: Vec<String> = ["fault_id", "delta_p_mw", "gamma"]
        .map(String::from)
        .into_iter()
        .chain(droop_headers(n))
        .chain(["reward", "status"].map(String::from))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            path: "header".into(),
            line: 1,
            column: 0,
            message: format!("expected columns {}", expected.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |j: usize| parse_field(&rec[j], line, &expected[j]);
        let k = (0..n).map(|j| num(3 + j)).collect::<Result<Vec<_>>>()?;
        let status: RowStatus = rec[4 + n].parse().map_err(|_| Error::Parse {
            path: "status".into(),
            line,
            column: 0,
            message: format!("unknown status `{}`", &rec[4 + n]),
        })?;
        rows.push(CurveRow {
            fault_id: rec[0].to_string(),
            delta_p: num(1)?,
            gamma: num(2)?,
            k,
            reward: num(3 + n)?,
            status,
            verified: false,
        });
    }
    Ok(CurveTable { ad_ids, omega_am, rows })
}

/// Columns: omega_am, gamma, k_1..k_n, reward, omega_hat, status.
pub fn sweep_csv(results: &[EquilibriumResult]) -> Result<String> {
    let n = results.first().map_or(0, |r| r.ad_ids.len());
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["omega_am".to_string(), "gamma".to_string()];
    header.extend(droop_headers(n));
    header.extend(["reward", "omega_hat", "status"].map(String::from));
    wtr.write_record(&header)?;
    for r in results {
        let mut rec = vec![fixed(r.omega_am), fixed(r.gamma_star)];
        rec.extend(r.k_star.iter().copied().map(fixed));
        rec.extend([fixed(r.reward_star), fixed(r.omega_hat), r.status.as_str().to_string()]);
        wtr.write_record(&rec)?;
    }
    finish(wtr)
}

//! z-scores of Monte Carlo estimates against a reference curve.

use std::fmt;
use std::io::Read;

use super::analytic::Method;
use crate::error::{Error, Result};

pub const Z_LIMIT: f64 = 3.0;
pub const QUANTITIES: [&str; 4] = ["mean_Wp", "var_Wp", "mean_Wc", "var_Wc"];

/// One row of an estimate file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimateRow {
    pub t: f64,
    pub values: [f64; 4],
    pub stderr: [f64; 4],
    pub n_traj: u64,
}

/// One row of a reference curve: analytic (no errors) or another estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceRow {
    pub t: f64,
    pub values: [f64; 4],
    pub stderr: [f64; 4],
    pub method: Option<Method>,
}

fn csv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InsufficientData(format!("missing column `{name}`")))
}

fn field(record: &csv::StringRecord, idx: usize) -> Result<f64> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse().map_err(|_| Error::InsufficientData(format!("unparsable number `{raw}`")))
}

pub fn read_estimates<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    let mut reader = csv_reader(input);
    let headers = reader.headers()?.clone();
    let t = column(&headers, "t")?;
    let vals = QUANTITIES.map(|q| column(&headers, q));
    let ses = QUANTITIES.map(|q| column(&headers, &format!("se_{q}")));
    let n = column(&headers, "n_traj")?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut values = [0.0; 4];
        let mut stderr = [0.0; 4];
        for k in 0..4 {
            values[k] = field(&record, *vals[k].as_ref().map_err(|e| Error::InsufficientData(e.to_string()))?)?;
            stderr[k] = field(&record, *ses[k].as_ref().map_err(|e| Error::InsufficientData(e.to_string()))?)?;
        }
        rows.push(EstimateRow { t: field(&record, t)?, values, stderr, n_traj: field(&record, n)? as u64 });
    }
    Ok(rows)
}

/// Reads either an analytic file (with a `method` column) or an estimate file.
pub fn read_reference<R: Read>(input: R) -> Result<Vec<ReferenceRow>> {
    let mut reader = csv_reader(input);
    let headers = reader.headers()?.clone();
    let t = column(&headers, "t")?;
    let vals = QUANTITIES.map(|q| column(&headers, q));
    let ses: Vec<Option<usize>> = QUANTITIES.iter().map(|q| column(&headers, &format!("se_{q}")).ok()).collect();
    let method_col = column(&headers, "method").ok();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut values = [0.0; 4];
        let mut stderr = [0.0; 4];
        for k in 0..4 {
            values[k] = field(&record, *vals[k].as_ref().map_err(|e| Error::InsufficientData(e.to_string()))?)?;
            if let Some(idx) = ses[k] {
                stderr[k] = field(&record, idx)?;
            }
        }
        let method = match method_col {
            Some(idx) => Some(
                record.get(idx).unwrap_or("").parse::<Method>().map_err(Error::InsufficientData)?,
            ),
            None => None,
        };
        rows.push(ReferenceRow { t: field(&record, t)?, values, stderr, method });
    }
    Ok(rows)
}

/// `|mc - reference| / se`. The standard error is floored at `1/n`, the
/// resolution of an average of integer outcomes, so a degenerate ensemble
/// with zero spread does not produce an infinite score.
pub fn z_score(mc: f64, se: f64, reference: f64, reference_se: f64, n_traj: u64) -> f64 {
    let diff = (mc - reference).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let combined = (se * se + reference_se * reference_se).sqrt();
    diff / combined.max(1.0 / n_traj.max(1) as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparePoint {
    pub t: f64,
    pub z: [f64; 4],
    pub in_window: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareReport {
    pub method: Option<Method>,
    pub t_max: f64,
    pub points: Vec<ComparePoint>,
    /// Largest score per quantity inside the window.
    pub max_z: [f64; 4],
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.max_z.iter().all(|&z| z <= Z_LIMIT)
    }
}

impl fmt::Display for CompareReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let method = self.method.map_or_else(|| "estimate".to_string(), |m| m.to_string());
        writeln!(f, "# reference: {method}; window t <= {:.6e}; limit z <= {Z_LIMIT}", self.t_max)?;
        writeln!(f, "t,z_{},z_{},z_{},z_{},in_window", QUANTITIES[0], QUANTITIES[1], QUANTITIES[2], QUANTITIES[3])?;
        for p in &self.points {
            writeln!(f, "{:.10e},{:.4},{:.4},{:.4},{:.4},{}", p.t, p.z[0], p.z[1], p.z[2], p.z[3], p.in_window)?;
        }
        for (q, z) in QUANTITIES.iter().zip(&self.max_z) {
            writeln!(f, "# max z {q}: {z:.4}")?;
        }
        write!(f, "# {}", if self.passed() { "PASS" } else { "FAIL" })
    }
}

/// Scores `estimates` against the `method` rows of `reference` (the only
/// rows when the reference has no method column). The default method is
/// perturbative when present; its default window ends at half the grid,
/// where the two-jump truncation stops being reliable.
pub fn compare(
    estimates: &[EstimateRow],
    reference: &[ReferenceRow],
    method: Option<Method>,
    t_max: Option<f64>,
) -> Result<CompareReport> {
    let available = |m: Method| reference.iter().any(|r| r.method == Some(m));
    let method = match method {
        Some(m) if available(m) => Some(m),
        Some(m) => return Err(Error::InsufficientData(format!("reference has no `{m}` rows"))),
        None if available(Method::Perturbative) => Some(Method::Perturbative),
        None if available(Method::Unitary) => Some(Method::Unitary),
        None => None,
    };
    let rows: Vec<&ReferenceRow> = reference.iter().filter(|r| r.method == method).collect();
    if rows.len() != estimates.len() {
        return Err(Error::GridMismatch(estimates.get(rows.len().min(estimates.len())).map_or(f64::NAN, |e| e.t)));
    }
    let t_end = estimates.last().map_or(0.0, |e| e.t);
    let t_max = t_max.unwrap_or(if method == Some(Method::Perturbative) { 0.5 * t_end } else { t_end });
    let mut points = Vec::with_capacity(rows.len());
    let mut max_z = [0.0f64; 4];
    for (est, reference) in estimates.iter().zip(rows) {
        if (est.t - reference.t).abs() > 1e-9 * est.t.abs().max(1.0) {
            return Err(Error::GridMismatch(est.t));
        }
        let in_window = est.t <= t_max * (1.0 + 1e-12);
        let mut z = [0.0; 4];
        for k in 0..4 {
            z[k] = z_score(est.values[k], est.stderr[k], reference.values[k], reference.stderr[k], est.n_traj);
            if in_window {
                max_z[k] = max_z[k].max(z[k]);
            }
        }
        points.push(ComparePoint { t: est.t, z, in_window });
    }
    Ok(CompareReport { method, t_max, points, max_z })
}

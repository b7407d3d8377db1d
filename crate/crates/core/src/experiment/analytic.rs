use std::fmt;
use std::io::Write;
use std::str::FromStr;

use super::ensemble::number;
use crate::analytics::perturbative::{truncated_distribution, within_validity};
use crate::analytics::{unitary_calorimetric_moments, unitary_projective_moments, TruncationPolicy};
use crate::error::Result;
use crate::model::{PhysicalParams, Rates};
use crate::work::WorkKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Unitary,
    Perturbative,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Unitary => "unitary",
            Method::Perturbative => "perturbative",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "unitary" => Ok(Method::Unitary),
            "perturbative" => Ok(Method::Perturbative),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticRow {
    pub t: f64,
    pub mean_wp: f64,
    pub var_wp: f64,
    pub mean_wc: f64,
    pub var_wc: f64,
    pub method: Method,
}

/// Unitary-limit rows on `grid`, followed by perturbative rows when the
/// bath coupling is nonzero.
pub fn analytic_rows(params: &PhysicalParams, rates: &Rates, grid: &[f64], policy: &TruncationPolicy) -> Result<Vec<AnalyticRow>> {
    let mut rows = Vec::with_capacity(2 * grid.len());
    for &t in grid {
        let (mean_wp, var_wp) = unitary_projective_moments(t, params)?;
        let (mean_wc, var_wc) = unitary_calorimetric_moments(t, params, rates)?;
        rows.push(AnalyticRow { t, mean_wp, var_wp, mean_wc, var_wc, method: Method::Unitary });
    }
    if params.gamma > 0.0 {
        if let Some(&t) = grid.iter().find(|&&t| !within_validity(t, rates)) {
            log::warn!(
                "perturbative curves beyond gamma_sigma t = 1 from t = {t:.4} on; treat them as qualitative"
            );
        }
        for &t in grid {
            let d = truncated_distribution(t, params, rates, policy)?;
            let (mean_wp, var_wp) = d.mean_variance(WorkKind::Projective);
            let (mean_wc, var_wc) = d.mean_variance(WorkKind::Calorimetric);
            rows.push(AnalyticRow { t, mean_wp, var_wp, mean_wc, var_wc, method: Method::Perturbative });
        }
    }
    Ok(rows)
}

pub const ANALYTIC_COLUMNS: [&str; 6] = ["t", "mean_Wp", "var_Wp", "mean_Wc", "var_Wc", "method"];

pub fn write_analytic<W: Write>(mut out: W, header: &[String], rows: &[AnalyticRow]) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(ANALYTIC_COLUMNS)?;
    for r in rows {
        writer.write_record([
            number(r.t),
            number(r.mean_wp),
            number(r.var_wp),
            number(r.mean_wc),
            number(r.var_wc),
            r.method.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

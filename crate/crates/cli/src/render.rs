//! JSON and CSV rendering of response documents.
//!
//! Both the command line and the HTTP service go through these functions, so
//! the two surfaces emit identical bytes for identical requests.

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::api::{ApiError, CurveResponse, SimulateResponse, SolveResponse, TablesResponse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl Format {
    pub fn content_type(self) -> &'static str {
        match self {
            Format::Json => "application/json",
            Format::Csv => "text/csv; charset=utf-8",
        }
    }
}

/// A response that can be written in either output format.
pub trait Document: Serialize {
    /// Rows of the CSV rendering, header first.
    fn csv_rows(&self) -> Vec<Vec<String>>;

    fn render(&self, format: Format) -> Result<String, ApiError> {
        match format {
            Format::Json => to_json(self),
            Format::Csv => to_csv(&self.csv_rows()),
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ApiError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| ApiError::failure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_csv(rows: &[Vec<String>]) -> Result<String, ApiError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(row).map_err(|e| ApiError::failure(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| ApiError::failure(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ApiError::failure(e.to_string()))
}

fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Serde name of a unit enum value, for CSV cells.
fn label<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

/// Numbers as in JSON; non-finite values become empty cells.
fn num(x: f64) -> String {
    if x.is_finite() {
        serde_json::Number::from_f64(x).map(|n| n.to_string()).unwrap_or_default()
    } else {
        String::new()
    }
}

impl Document for SolveResponse {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut head = header(&["case", "mode", "regime", "r1", "r2", "r3"]);
        for s in 1..=3 {
            for a in 0..3 {
                head.push(format!("p{a}{s}"));
            }
        }
        head.extend(header(&["var1", "var2", "max_var", "ratio_vs_separate", "variance_gap"]));
        let mut row = vec![label(&self.request.case), label(&self.request.mode), label(&self.regime)];
        row.extend(self.plan.r.iter().map(|&x| num(x)));
        row.extend(self.plan.p.iter().flatten().map(|&x| num(x)));
        let v = &self.unit_variances;
        row.extend([v.var1, v.var2, v.max_var, self.ratio_vs_separate, self.variance_gap].map(num));
        vec![head, row]
    }
}

impl Document for CurveResponse {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![header(&["mode", "r2", "p02", "p12", "p22", "max_var", "ratio_vs_separate", "regime"])];
        rows.extend(self.rows.iter().map(|r| {
            vec![
                label(&r.mode),
                num(r.r2),
                num(r.p02),
                num(r.p12),
                num(r.p22),
                num(r.max_var),
                num(r.ratio_vs_separate),
                label(&r.regime),
            ]
        }));
        rows
    }
}

impl Document for TablesResponse {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![header(&["strategy", "arm", "period1", "period2", "period3", "total"])];
        for t in &self.tables {
            for (a, name) in ["control", "arm1", "arm2"].iter().enumerate() {
                let cells = t.counts.arm_row(a);
                let mut row = vec![label(&t.strategy), name.to_string()];
                row.extend(cells.iter().map(u64::to_string));
                row.push(cells.iter().sum::<u64>().to_string());
                rows.push(row);
            }
        }
        rows
    }
}

impl Document for SimulateResponse {
    fn csv_rows(&self) -> Vec<Vec<String>> {
        let mut rows = vec![header(&[
            "arm",
            "reps",
            "seed",
            "rejection_rate",
            "mc_se",
            "ci_width_mean",
            "estimate_mean",
            "estimate_sd",
            "se_mean",
        ])];
        for (k, a) in self.summary.arms.iter().enumerate() {
            let mut row = vec![format!("arm{}", k + 1), self.summary.reps.to_string(), self.summary.seed.to_string()];
            row.extend(
                [a.rejection_rate, a.mc_se, a.ci_width_mean, a.estimate_mean, a.estimate_sd, a.se_mean].map(num),
            );
            rows.push(row);
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api::{curve, CurveRequest, ModeSelection};

    #[test]
    fn curve_csv_has_header_and_lf_endings() {
        let out = curve(&CurveRequest { r1: 0.25, mode: ModeSelection::Both, grid: 3 }).unwrap();
        let csv = out.render(Format::Csv).unwrap();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "mode,r2,p02,p12,p22,max_var,ratio_vs_separate,regime");
        assert_eq!(lines.len(), 7);
        assert!(!csv.contains('\r'));
        assert!(lines[1].starts_with("cc,0.0,"));
    }
}

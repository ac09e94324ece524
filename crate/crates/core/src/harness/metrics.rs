//! Error metrics and repeat aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::{PhaseTimings, Termination};

/// `‖pred − exact‖₂ / ‖exact‖₂` over matching samples.
pub fn relative_l2(pred: &[f64], exact: &[f64]) -> Result<f64> {
    if pred.len() != exact.len() {
        return Err(Error::invalid(format!("{} predictions for {} reference values", pred.len(), exact.len())));
    }
    let den: f64 = exact.iter().map(|e| e * e).sum();
    if den == 0.0 {
        return Err(Error::ZeroNormReference);
    }
    let num: f64 = pred.iter().zip(exact).map(|(p, e)| (p - e) * (p - e)).sum();
    Ok((num / den).sqrt())
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatMetric {
    pub seed: u64,
    /// Relative L2 error per field.
    pub errors: Vec<f64>,
    pub termination: Termination,
    pub lbfgs_iterations: usize,
    pub final_loss: f64,
    pub handoff_error: Option<f64>,
    pub selected_units: Option<usize>,
    pub timings: PhaseTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRepeat {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub name: String,
    pub fields: Vec<String>,
    pub repeats: Vec<RepeatMetric>,
    pub failed: Vec<FailedRepeat>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub median: Vec<f64>,
}

impl MetricReport {
    pub fn new(name: String, fields: Vec<String>, repeats: Vec<RepeatMetric>, failed: Vec<FailedRepeat>) -> Self {
        let nf = fields.len();
        let column = |f: usize| repeats.iter().map(|r| r.errors[f]).collect::<Vec<_>>();
        let (mut mean, mut std, mut med) = (Vec::new(), Vec::new(), Vec::new());
        for f in 0..nf {
            let c = column(f);
            let (m, s) = mean_std(&c);
            mean.push(m);
            std.push(s);
            med.push(median(&c));
        }
        MetricReport { name, fields, repeats, failed, mean, std, median: med }
    }

    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    /// `seed,<field>...` rows with round-trip formatting.
    pub fn repeats_csv(&self) -> String {
        let mut out = String::from("seed");
        for f in &self.fields {
            out.push_str(&format!(",{f}"));
        }
        out.push_str(",termination,lbfgs_iterations,stage1_s,selection_s,stage2_s\n");
        for r in &self.repeats {
            out.push_str(&r.seed.to_string());
            for e in &r.errors {
                out.push_str(&format!(",{e:e}"));
            }
            out.push_str(&format!(
                ",{},{},{},{},{}\n",
                r.termination.as_str(),
                r.lbfgs_iterations,
                r.timings.stage1,
                r.timings.selection,
                r.timings.stage2
            ));
        }
        out
    }

    /// Per-field errors read back from [`Self::repeats_csv`] output.
    pub fn parse_repeats_csv(text: &str) -> Result<Vec<Vec<f64>>> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Parse("empty repeats table".into()))?.split(',').collect();
        let nf = header.iter().position(|&h| h == "termination").ok_or_else(|| Error::Parse("missing termination column".into()))? - 1;
        lines
            .map(|l| {
                l.split(',')
                    .skip(1)
                    .take(nf)
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Parse(format!("`{v}`: {e}"))))
                    .collect()
            })
            .collect()
    }

    pub fn table(&self) -> String {
        let mut out = format!("{} ({} repeats", self.name, self.repeats.len());
        if self.is_partial() {
            out.push_str(&format!(", {} failed", self.failed.len()));
        }
        out.push_str(")\n");
        for (f, name) in self.fields.iter().enumerate() {
            out.push_str(&format!(
                "  {name:<4} rel. L2 {:.3e} ± {:.2e} (median {:.3e})\n",
                self.mean[f], self.std[f], self.median[f]
            ));
        }
        out
    }
}

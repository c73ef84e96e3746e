//! Value at Risk and expected shortfall through the Rockafellar-Uryasev
//! objective `b(y) = y + E(X - y)_+ / (1 - alpha)`, and loss-series input.

use std::io::Read;

use crate::error::{invalid, Error, Result};

/// Grid resolution of the argmin search.
pub const VAR_GRID_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    /// Argmin of the regularized objective `a y^2 + b(y)`.
    pub var: f64,
    /// Unregularized `b` at that argmin.
    pub cvar: f64,
    /// Argmin of the regularized objective minus argmin of `b` alone, the
    /// bias the regularizer introduces on this sample.
    pub regularization_shift: f64,
    /// Set when the losses are constant and the search range collapses.
    pub degenerate: bool,
}

/// Empirical `b(y)` in `O(log n)` per evaluation via sorted prefix sums.
#[derive(Debug, Clone)]
pub struct EmpiricalObjective {
    sorted: Vec<f64>,
    suffix: Vec<f64>,
    alpha_level: f64,
}

impl EmpiricalObjective {
    pub fn new(losses: &[f64], alpha_level: f64) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::Input("empty loss sample".into()));
        }
        if !(alpha_level > 0.0 && alpha_level < 1.0) {
            return Err(invalid("alpha_level", format!("must lie in (0,1), got {alpha_level}")));
        }
        if losses.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("loss sample contains non-finite values".into()));
        }
        let mut sorted = losses.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut suffix = vec![0.0; sorted.len() + 1];
        for i in (0..sorted.len()).rev() {
            suffix[i] = suffix[i + 1] + sorted[i];
        }
        Ok(Self { sorted, suffix, alpha_level })
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// `b(y) = y + mean((X - y)_+) / (1 - alpha)`.
    pub fn b(&self, y: f64) -> f64 {
        let i = self.sorted.partition_point(|&v| v <= y);
        let above = (self.sorted.len() - i) as f64;
        let excess = self.suffix[i] - above * y;
        y + excess / (self.sorted.len() as f64 * (1.0 - self.alpha_level))
    }
}

fn grid_argmin(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut best = (f64::INFINITY, lo);
    for i in 0..VAR_GRID_POINTS {
        let y = lo + (hi - lo) * i as f64 / (VAR_GRID_POINTS - 1) as f64;
        let v = f(y);
        if v < best.0 {
            best = (v, y);
        }
    }
    best.1
}

/// VaR and CVaR from a loss sample, searching `[min loss, max loss]`.
pub fn extract_var_cvar(losses: &[f64], a: f64, alpha_level: f64) -> Result<RiskEstimate> {
    let obj = EmpiricalObjective::new(losses, alpha_level)?;
    extract_on_range(&obj, a, obj.min(), obj.max())
}

/// As [`extract_var_cvar`] over an explicit search range `[lo, hi]`.
pub fn extract_on_range(obj: &EmpiricalObjective, a: f64, lo: f64, hi: f64) -> Result<RiskEstimate> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(invalid("a", format!("must be finite and nonnegative, got {a}")));
    }
    if !(lo <= hi) {
        return Err(Error::Input(format!("empty search range [{lo}, {hi}]")));
    }
    if obj.min() == obj.max() || lo == hi {
        let y = if obj.min() == obj.max() { obj.min() } else { lo };
        return Ok(RiskEstimate { var: y, cvar: obj.b(y), regularization_shift: 0.0, degenerate: true });
    }
    let var = grid_argmin(lo, hi, |y| a * y * y + obj.b(y));
    let plain = grid_argmin(lo, hi, |y| obj.b(y));
    Ok(RiskEstimate { var, cvar: obj.b(var), regularization_shift: var - plain, degenerate: false })
}

/// Reads a loss series: a single column headed `loss`, one number per row.
pub fn read_losses<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Input(format!("line 1: {e}")))?.clone();
    if headers.len() != 1 || &headers[0] != "loss" {
        return Err(Error::Input(format!(
            "line 1: expected the single header `loss`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Input(format!("line {line}: {e}")))?;
        if record.len() != 1 {
            return Err(Error::Input(format!("line {line}: expected one field, found {}", record.len())));
        }
        let field = record[0].trim();
        let v: f64 = field.parse().map_err(|_| Error::Input(format!("line {line}: `{field}` is not a number")))?;
        if !v.is_finite() {
            return Err(Error::Input(format!("line {line}: `{field}` is not finite")));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Input("loss file has no rows".into()));
    }
    Ok(out)
}

//! Least-squares fits of decay curves against four rate templates.
//!
//! Each template is `log y(n) = c + theta * s(n)` for a shape `s`, fitted on
//! points with `n >= 8` and positive estimates. Logarithms inside shapes are
//! base 2.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::DecayCurve;

/// Smallest index used in a fit, so that `log log n` is defined and positive.
pub const MIN_INDEX: usize = 8;
/// Minimum number of usable points.
pub const MIN_POINTS: usize = 5;

/// Residual floor (mean squared log error) below which fits count as exact.
const RESIDUAL_FLOOR: f64 = 1e-24;
const GAMMA_GRID: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateTemplate {
    /// `lambda^n`.
    Geometric,
    /// `exp(-c n / (log n log log n))`.
    Bernstein,
    /// `exp(-c n^gamma)`, `gamma` in `(0, 1]` fitted.
    Stretched,
    /// `(log n)^gamma / n^gamma`.
    Polynomial,
}

impl RateTemplate {
    pub const ALL: [RateTemplate; 4] =
        [RateTemplate::Geometric, RateTemplate::Bernstein, RateTemplate::Stretched, RateTemplate::Polynomial];

    pub fn name(self) -> &'static str {
        match self {
            RateTemplate::Geometric => "geometric",
            RateTemplate::Bernstein => "bernstein",
            RateTemplate::Stretched => "stretched",
            RateTemplate::Polynomial => "polynomial",
        }
    }

    /// Free parameters of the template.
    pub fn parameter_count(self) -> usize {
        match self {
            RateTemplate::Stretched => 3,
            _ => 2,
        }
    }

    fn shape(self, n: f64, gamma: f64) -> f64 {
        let l = n.log2();
        match self {
            RateTemplate::Geometric => n,
            RateTemplate::Bernstein => n / (l * l.log2()),
            RateTemplate::Stretched => n.powf(gamma),
            RateTemplate::Polynomial => l.ln() - n.ln(),
        }
    }
}

impl fmt::Display for RateTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RateTemplate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RateTemplate::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| Error::Input(format!("unknown rate template `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemplateFit {
    pub template: RateTemplate,
    /// Fitted `c` in `log y = c + theta s(n)`.
    pub log_scale: f64,
    /// `lambda` for geometric, `c` for bernstein and stretched, `gamma` for polynomial.
    pub rate: f64,
    /// Fitted `gamma` for stretched and polynomial.
    pub exponent: Option<f64>,
    /// Weighted sum of squared log residuals.
    pub wssr: f64,
    /// `m ln(wssr / m) + p ln m`; lower is better.
    pub score: f64,
    pub points: usize,
}

struct Prepared {
    n: Vec<f64>,
    ly: Vec<f64>,
    w: Vec<f64>,
}

fn prepare(curve: &DecayCurve) -> Result<Prepared> {
    let pts = curve.points();
    if pts.iter().all(|p| p.estimate == 0.0) {
        return Err(Error::DegenerateFit("all estimates are zero".into()));
    }
    let usable: Vec<_> = pts.iter().filter(|p| p.index >= MIN_INDEX && p.estimate > 0.0 && p.estimate.is_finite()).collect();
    if usable.is_empty() {
        return Err(Error::DegenerateFit("no positive estimates at indices >= 8".into()));
    }
    if usable.len() < MIN_POINTS {
        return Err(Error::Input(format!(
            "rate fit needs at least {MIN_POINTS} positive points at indices >= {MIN_INDEX}, got {}",
            usable.len()
        )));
    }
    // delta method: sd(log y) ~ se / y
    let weighted = usable.iter().all(|p| p.std_error > 0.0 && p.std_error.is_finite());
    let mut w: Vec<f64> = usable.iter().map(|p| if weighted { (p.estimate / p.std_error).powi(2) } else { 1.0 }).collect();
    let mean_w = w.iter().sum::<f64>() / w.len() as f64;
    w.iter_mut().for_each(|v| *v /= mean_w);
    Ok(Prepared { n: usable.iter().map(|p| p.index as f64).collect(), ly: usable.iter().map(|p| p.estimate.ln()).collect(), w })
}

/// Weighted regression of `ly` on `s`; returns `(c, theta, wssr)`.
fn regress(s: &[f64], ly: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    let sw: f64 = w.iter().sum();
    let ms = s.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = ly.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for ((x, y), wi) in s.iter().zip(ly).zip(w) {
        sxx += wi * (x - ms) * (x - ms);
        sxy += wi * (x - ms) * (y - my);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let theta = sxy / sxx;
    let c = my - theta * ms;
    let wssr = s.iter().zip(ly).zip(w).map(|((x, y), wi)| wi * (y - c - theta * x).powi(2)).sum();
    Some((c, theta, wssr))
}

fn fit_with_gamma(p: &Prepared, t: RateTemplate, gamma: f64) -> Option<(f64, f64, f64)> {
    let s: Vec<f64> = p.n.iter().map(|&n| t.shape(n, gamma)).collect();
    regress(&s, &p.ly, &p.w)
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-10 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Fits one template to the curve.
pub fn rate_fit(curve: &DecayCurve, template: RateTemplate) -> Result<TemplateFit> {
    let p = prepare(curve)?;
    fit_prepared(&p, template)
}

fn fit_prepared(p: &Prepared, template: RateTemplate) -> Result<TemplateFit> {
    let degenerate = || Error::DegenerateFit(format!("{template} shape is constant over the curve indices"));
    let (gamma, (c, theta, wssr)) = if template == RateTemplate::Stretched {
        let obj = |g: f64| fit_with_gamma(p, template, g).map_or(f64::INFINITY, |r| r.2);
        let grid: Vec<f64> = (1..=GAMMA_GRID).map(|i| i as f64 / GAMMA_GRID as f64).collect();
        let best = (0..grid.len()).min_by(|&i, &j| obj(grid[i]).total_cmp(&obj(grid[j]))).expect("nonempty grid");
        let lo = if best == 0 { 1e-3 } else { grid[best - 1] };
        let hi = grid[(best + 1).min(grid.len() - 1)];
        let g = golden_min(obj, lo, hi);
        let g = if obj(g) <= obj(grid[best]) { g } else { grid[best] };
        (g, fit_with_gamma(p, template, g).ok_or_else(degenerate)?)
    } else {
        (1.0, fit_with_gamma(p, template, 1.0).ok_or_else(degenerate)?)
    };
    let m = p.n.len() as f64;
    let k = template.parameter_count();
    let score = m * (wssr / m).max(RESIDUAL_FLOOR).ln() + k as f64 * m.ln();
    let (rate, exponent) = match template {
        RateTemplate::Geometric => (theta.exp(), None),
        RateTemplate::Bernstein => (-theta, None),
        RateTemplate::Stretched => (-theta, Some(gamma)),
        RateTemplate::Polynomial => (theta, Some(theta)),
    };
    Ok(TemplateFit { template, log_scale: c, rate, exponent, wssr, score, points: p.n.len() })
}

/// Fits every template and returns them best first.
pub fn compare_templates(curve: &DecayCurve) -> Result<Vec<TemplateFit>> {
    let p = prepare(curve)?;
    let mut fits = RateTemplate::ALL.into_iter().map(|t| fit_prepared(&p, t)).collect::<Result<Vec<_>>>()?;
    fits.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(fits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::CurvePoint;

    fn grid() -> Vec<usize> {
        let mut v: Vec<usize> = (0..40).map(|i| (8.0 * 512f64.powf(i as f64 / 39.0)).round() as usize).collect();
        v.dedup();
        v
    }

    #[test]
    fn geometric_exact() {
        let c = DecayCurve::from_fn(grid(), |n| 0.9f64.powi(n as i32)).unwrap();
        let f = rate_fit(&c, RateTemplate::Geometric).unwrap();
        assert!((f.rate - 0.9).abs() < 1e-6);
        assert!(f.log_scale.abs() < 1e-6);
    }

    #[test]
    fn polynomial_exponent() {
        let c = DecayCurve::from_fn(grid(), |n| (n as f64).ln() / n as f64).unwrap();
        let f = rate_fit(&c, RateTemplate::Polynomial).unwrap();
        assert!((f.exponent.unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn bernstein_beats_geometric() {
        let c = DecayCurve::from_fn(grid(), |n| {
            let l = (n as f64).log2();
            (-(n as f64) / (l * l.log2())).exp()
        })
        .unwrap();
        let b = rate_fit(&c, RateTemplate::Bernstein).unwrap();
        let g = rate_fit(&c, RateTemplate::Geometric).unwrap();
        assert!(b.wssr < g.wssr);
        assert!((b.rate - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stretched_recovers_gamma() {
        let c = DecayCurve::from_fn(grid(), |n| 2.0 * (-0.7 * (n as f64).powf(0.37)).exp()).unwrap();
        let f = rate_fit(&c, RateTemplate::Stretched).unwrap();
        assert!((f.exponent.unwrap() - 0.37).abs() < 1e-6, "{f:?}");
        assert!((f.rate - 0.7).abs() < 1e-5);
    }

    #[test]
    fn errors() {
        let zero = DecayCurve::from_fn(grid(), |_| 0.0).unwrap();
        assert!(matches!(rate_fit(&zero, RateTemplate::Geometric), Err(Error::DegenerateFit(_))));
        let short = DecayCurve::from_fn([8, 9, 10, 11], |n| 0.5f64.powi(n as i32)).unwrap();
        assert!(matches!(rate_fit(&short, RateTemplate::Geometric), Err(Error::Input(_))));
        assert!(DecayCurve::new(vec![
            CurvePoint { index: 9, estimate: 0.1, std_error: 0.0 },
            CurvePoint { index: 8, estimate: 0.1, std_error: 0.0 },
        ])
        .is_err());
    }

    #[test]
    fn names_round_trip() {
        for t in RateTemplate::ALL {
            assert_eq!(t.name().parse::<RateTemplate>().unwrap(), t);
        }
    }
}

//! Tail distributions on `(0, inf)`, their convolution tails and numerical diagnostics for
//! subexponentiality.
//!
//! Tails live on a log-spaced grid and are interpolated linearly in `(ln x, ln F̄)`, which is
//! monotone and exact for power laws. Outside the grid only an attached analytic tail is used.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad::Quadrature;

type TailFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub const DEFAULT_X_MIN: f64 = 1e-3;
pub const DEFAULT_X_MAX: f64 = 1e6;
pub const DEFAULT_POINTS: usize = 4096;

/// Complementary distribution function `F̄` of a law on `(0, inf)` without atoms.
#[derive(Clone)]
pub struct TailDistribution {
    label: String,
    grid: Vec<f64>,
    tail: Vec<f64>,
    analytic: Option<TailFn>,
}

impl fmt::Debug for TailDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailDistribution")
            .field("label", &self.label)
            .field("points", &self.grid.len())
            .field("x_max", &self.x_max())
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

/// `points` log-spaced values from `x_min` to `x_max`.
pub fn log_grid(x_min: f64, x_max: f64, points: usize) -> Vec<f64> {
    let (a, b) = (x_min.ln(), x_max.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

impl TailDistribution {
    /// Tabulated tail with no extension beyond the last grid point.
    pub fn from_table(label: &str, grid: Vec<f64>, tail: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.len() != tail.len() {
            return Err(Error::Validation(
                "tail table needs at least two points and matching lengths".into(),
            ));
        }
        if !(grid[0] > 0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("tail grid must be positive and strictly increasing".into()));
        }
        if tail.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("tail values must lie in [0, 1]".into()));
        }
        if tail.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Validation("tail values must be non-increasing".into()));
        }
        Ok(Self {
            label: label.to_string(),
            grid,
            tail,
            analytic: None,
        })
    }

    /// Samples `f` on `grid` and keeps `f` as the analytic extension.
    pub fn from_fn<F>(label: &str, f: F, grid: Vec<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let tail = grid.iter().map(|&x| f(x)).collect();
        let mut d = Self::from_table(label, grid, tail)?;
        d.analytic = Some(Arc::new(f));
        Ok(d)
    }

    /// Pareto tail `min(1, x^-alpha)` on the default grid.
    pub fn pareto(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::Domain(format!("pareto index must be > 0, got {alpha}")));
        }
        Self::from_fn(
            &format!("pareto({alpha})"),
            move |x| if x <= 1.0 { 1.0 } else { x.powf(-alpha) },
            log_grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_POINTS),
        )
    }

    /// Exponential tail `e^{-rate x}` on the default grid.
    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::Domain(format!("rate must be > 0, got {rate}")));
        }
        Self::from_fn(
            &format!("exp({rate})"),
            move |x| (-rate * x).exp(),
            log_grid(DEFAULT_X_MIN, DEFAULT_X_MAX, DEFAULT_POINTS),
        )
    }

    /// `min(1, c F̄)`, a tail equivalent to `c F̄` at infinity.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Domain(format!("scale factor must be > 0, got {c}")));
        }
        let tail = self.tail.iter().map(|v| (c * v).min(1.0)).collect();
        let mut d = Self::from_table(&format!("{c}*{}", self.label), self.grid.clone(), tail)?;
        if let Some(f) = &self.analytic {
            let f = f.clone();
            d.analytic = Some(Arc::new(move |x| (c * f(x)).min(1.0)));
        }
        Ok(d)
    }

    /// Same law resampled on another grid; needs an analytic tail or a sub-range of the grid.
    pub fn regrid(&self, grid: Vec<f64>) -> Result<Self> {
        let tail = grid.iter().map(|&x| self.tail(x)).collect::<Result<Vec<_>>>()?;
        let mut d = Self::from_table(&self.label, grid, tail)?;
        d.analytic = self.analytic.clone();
        Ok(d)
    }

    /// Reads `x,tail` rows. Blank lines, `#` comments and a non-numeric header are skipped.
    pub fn from_csv(label: &str, text: &str) -> Result<Self> {
        let mut grid = Vec::new();
        let mut tail = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line: i + 1,
                    column: trimmed.len() + 1,
                    message: "expected two columns x,tail".into(),
                });
            }
            let x = fields[0].parse::<f64>();
            let v = fields[1].parse::<f64>();
            match (x, v) {
                (Ok(x), Ok(v)) => {
                    grid.push(x);
                    tail.push(v);
                }
                (Err(_), _) if grid.is_empty() && fields[0].chars().any(char::is_alphabetic) => {}
                (Err(_), _) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        column: line.find(fields[0]).unwrap_or(0) + 1,
                        message: format!("invalid number {:?}", fields[0]),
                    })
                }
                (_, Err(_)) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        column: line.find(fields[1]).unwrap_or(0) + 1,
                        message: format!("invalid number {:?}", fields[1]),
                    })
                }
            }
        }
        Self::from_table(label, grid, tail)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.tail
    }

    pub fn x_max(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    pub fn has_analytic_tail(&self) -> bool {
        self.analytic.is_some()
    }

    /// `F̄(x)`. Below the first grid point the tail is interpolated linearly towards
    /// `F̄(0+) = 1`.
    pub fn tail(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        let n = self.grid.len();
        if x > self.grid[n - 1] {
            return match &self.analytic {
                Some(f) => Ok(f(x)),
                None => Err(Error::Range { x, max: self.grid[n - 1] }),
            };
        }
        if x <= self.grid[0] {
            return Ok(1.0 + (self.tail[0] - 1.0) * x / self.grid[0]);
        }
        let i = self.grid.partition_point(|&g| g < x).max(1);
        let (x0, x1) = (self.grid[i - 1], self.grid[i]);
        let (v0, v1) = (self.tail[i - 1], self.tail[i]);
        if v0 > 0.0 && v1 > 0.0 {
            let w = (x / x0).ln() / (x1 / x0).ln();
            Ok((v0.ln() + w * (v1.ln() - v0.ln())).exp())
        } else {
            Ok(v0 + (v1 - v0) * (x - x0) / (x1 - x0))
        }
    }

    fn covers(&self, x: f64) -> bool {
        x <= self.x_max() || self.analytic.is_some()
    }
}

/// `P(X + Y > x)` for independent `X ~ F`, `Y ~ G`, from
/// `F̄(x) + int_[0,x] Ḡ(x - y) dF(y)`.
///
/// The Stieltjes integral runs over the grid of `F` merged with the reflected grid `x - g` of
/// `G`, so both ends of `[0, x]` are resolved; each cell uses the trapezoid value of `Ḡ`.
pub fn conv_tail(f: &TailDistribution, g: &TailDistribution, x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return if x <= 0.0 { Ok(1.0) } else { Err(Error::Domain("x is NaN".into())) };
    }
    if !f.covers(x) || !g.covers(x) {
        let max = if f.covers(x) { g.x_max() } else { f.x_max() };
        return Err(Error::Range { x, max });
    }
    let mut nodes: Vec<f64> = Vec::with_capacity(f.grid.len() + g.grid.len() + 2);
    nodes.push(0.0);
    nodes.extend(f.grid.iter().copied().filter(|&y| y < x));
    nodes.extend(g.grid.iter().map(|&z| x - z).filter(|&y| y > 0.0));
    nodes.push(x);
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    nodes.dedup();

    let mut fbar_prev = 1.0;
    let mut gbar_prev = g.tail(x)?;
    let mut integral = 0.0;
    for &y in &nodes[1..] {
        let fbar = f.tail(y)?;
        let gbar = g.tail(x - y)?;
        integral += 0.5 * (gbar_prev + gbar) * (fbar_prev - fbar);
        fbar_prev = fbar;
        gbar_prev = gbar;
    }
    Ok((f.tail(x)? + integral).min(1.0))
}

fn guarded_ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if !(den > f64::MIN_POSITIVE) {
        return Err(Error::DivisionGuard(format!("{what}: denominator is numerically zero")));
    }
    Ok(num / den)
}

/// `F̄*F̄(x) / F̄(x)`; tends to 2 for subexponential `F`.
pub fn subexp_ratio(f: &TailDistribution, x: f64) -> Result<f64> {
    let c = conv_tail(f, f, x)?;
    guarded_ratio(c, f.tail(x)?, "subexp_ratio")
}

/// `F̄*Ḡ(x) / (F̄(x) + Ḡ(x))`. Tends to 1 when `F` is subexponential and `Ḡ/F̄ -> c > 0`;
/// the second condition is the caller's responsibility.
pub fn mixed_ratio(f: &TailDistribution, g: &TailDistribution, x: f64) -> Result<f64> {
    let c = conv_tail(f, g, x)?;
    guarded_ratio(c, f.tail(x)? + g.tail(x)?, "mixed_ratio")
}

/// `F̄(x + y) / F̄(x)` for each `y`.
pub fn long_tail_check(f: &TailDistribution, ys: &[f64], x: f64) -> Result<Vec<f64>> {
    let base = f.tail(x)?;
    ys.iter()
        .map(|&y| guarded_ratio(f.tail(x + y)?, base, "long_tail_check"))
        .collect()
}

/// `e^{eps x} F̄(x)`, unbounded in `x` for subexponential `F`.
pub fn exp_moment_check(f: &TailDistribution, eps: f64, x: f64) -> Result<f64> {
    Ok((eps * x).exp() * f.tail(x)?)
}

/// `f1(lambda) / f2(lambda)` with `f_i(lambda) = int_0^inf e^{-lambda gamma} g_i(gamma) mu(gamma) dgamma`.
pub fn tauberian_ratio<M, G1, G2>(mu: M, g1: G1, g2: G2, lambda: f64) -> Result<f64>
where
    M: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
    G2: Fn(f64) -> f64,
{
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    let q = Quadrature {
        abs_tol: 1e-300,
        rel_tol: 1e-10,
        max_intervals: 20_000,
    };
    let laplace = |g: &dyn Fn(f64) -> f64| -> Result<f64> {
        let e = q.integrate_half_line(
            |x| {
                if x <= 0.0 {
                    0.0
                } else {
                    (-lambda * x).exp() * g(x) * mu(x)
                }
            },
            1.0 / lambda,
        )?;
        if !e.value.is_finite() {
            return Err(Error::Integrability("Laplace integral is not finite".into()));
        }
        Ok(e.value)
    };
    let f1 = laplace(&g1)?;
    let f2 = laplace(&g2)?;
    guarded_ratio(f1, f2, "tauberian_ratio")
}

/// A statistic evaluated at the tops of the three largest grid decades, with the fitted
/// slope of value against `log10 x`. A slope near 0 suggests the limit has been reached; it
/// is a diagnostic, not a proof of convergence.
#[derive(Debug, Clone, Serialize)]
pub struct LimitDiagnostic {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
}

pub fn limit_diagnostic<S>(f: &TailDistribution, statistic: S) -> Result<LimitDiagnostic>
where
    S: Fn(f64) -> Result<f64>,
{
    let top = f.x_max();
    let xs = vec![top / 100.0, top / 10.0, top];
    let values = xs.iter().map(|&x| statistic(x)).collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = xs.iter().map(|x| x.log10()).collect();
    let mx = lx.iter().sum::<f64>() / 3.0;
    let my = values.iter().sum::<f64>() / 3.0;
    let sxy: f64 = lx.iter().zip(&values).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(LimitDiagnostic {
        xs,
        values,
        slope: sxy / sxx,
    })
}

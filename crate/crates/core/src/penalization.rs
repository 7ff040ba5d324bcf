//! Penalization by a function of the local time: the martingale
//! `M^h_u = S(X_u) h(L_u) + 1 - H(L_u)`, expectations under the reweighted law
//! `Q^h = M^h_u . P_0`, and Monte Carlo checks of the law of `L_inf` and of the post-last-zero
//! process under `Q^h`.
//!
//! Monte Carlo routines need a Bessel preset. When `h` has compact support `[0, K]` the weight
//! vanishes on `{L_u >= K}`, so paths are drawn conditionally on `L_u < K` and carry the
//! conditional probability as an extra factor.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::bessel;
use crate::diffusion::{parse_json, DiffusionSpec};
use crate::error::{Error, Result};
use crate::montecarlo::{run_paths, BesselSampler, McEstimate};
use crate::quad::{Estimate, Quadrature};
use crate::spectral::SpectralModel;

type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A probability density `h` on `[0, inf)` and its distribution function `H`.
#[derive(Clone)]
pub struct WeightFunction {
    label: String,
    h: Fn1,
    cumulative: Fn1,
    support: f64,
}

impl fmt::Debug for WeightFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeightFunction")
            .field("label", &self.label)
            .field("support", &self.support)
            .finish()
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum WeightConfig {
    Indicator { ell0: f64 },
    Triangular { k: f64 },
    Table { xs: Vec<f64>, hs: Vec<f64> },
}

impl WeightFunction {
    /// `h = 1_[0, ell0) / ell0`.
    pub fn indicator(ell0: f64) -> Result<Self> {
        if !(ell0 > 0.0 && ell0.is_finite()) {
            return Err(Error::Validation(format!("indicator weight needs ell0 > 0, got {ell0}")));
        }
        Ok(Self {
            label: format!("indicator({ell0})"),
            h: Arc::new(move |l| if (0.0..ell0).contains(&l) { 1.0 / ell0 } else { 0.0 }),
            cumulative: Arc::new(move |l| (l.max(0.0) / ell0).min(1.0)),
            support: ell0,
        })
    }

    /// `h(l) = 2 (k - l) / k^2` on `[0, k]`.
    pub fn triangular(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Validation(format!("triangular weight needs k > 0, got {k}")));
        }
        Ok(Self {
            label: format!("triangular({k})"),
            h: Arc::new(move |l| if (0.0..k).contains(&l) { 2.0 * (k - l) / (k * k) } else { 0.0 }),
            cumulative: Arc::new(move |l| {
                let r = ((k - l.max(0.0)) / k).max(0.0);
                1.0 - r * r
            }),
            support: k,
        })
    }

    /// Piecewise-linear `h` through `(xs, hs)` starting at `xs[0] = 0`, zero beyond the last
    /// point.
    pub fn table(xs: Vec<f64>, hs: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != hs.len() {
            return Err(Error::Validation("weight table needs at least two points and matching lengths".into()));
        }
        if xs[0] != 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("weight table xs must start at 0 and increase".into()));
        }
        if hs.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::Validation("weight table values must be finite and >= 0".into()));
        }
        let mut cum = vec![0.0];
        for i in 1..xs.len() {
            cum.push(cum[i - 1] + 0.5 * (hs[i - 1] + hs[i]) * (xs[i] - xs[i - 1]));
        }
        let total = *cum.last().unwrap();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!("weight table integrates to {total}, not 1")));
        }
        let support = match hs.iter().rposition(|&v| v > 0.0) {
            Some(i) => xs[(i + 1).min(xs.len() - 1)],
            None => 0.0,
        };
        let (xs, hs, cum) = (Arc::new(xs), Arc::new(hs), Arc::new(cum));
        let (x1, h1) = (xs.clone(), hs.clone());
        let h = move |l: f64| {
            if l < 0.0 || l >= *x1.last().unwrap() {
                return 0.0;
            }
            let i = x1.partition_point(|&x| x <= l).max(1);
            let w = (l - x1[i - 1]) / (x1[i] - x1[i - 1]);
            h1[i - 1] + w * (h1[i] - h1[i - 1])
        };
        let cumulative = move |l: f64| {
            if l <= 0.0 {
                return 0.0;
            }
            if l >= *xs.last().unwrap() {
                return 1.0;
            }
            let i = xs.partition_point(|&x| x <= l).max(1);
            let d = l - xs[i - 1];
            let slope = (hs[i] - hs[i - 1]) / (xs[i] - xs[i - 1]);
            (cum[i - 1] + hs[i - 1] * d + 0.5 * slope * d * d).min(1.0)
        };
        Ok(Self {
            label: "table".into(),
            h: Arc::new(h),
            cumulative: Arc::new(cumulative),
            support,
        })
    }

    /// A general Borel density; `H` is obtained by quadrature on every call. `support` may be
    /// infinite.
    pub fn custom<F>(label: &str, h: F, support: f64) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let h: Fn1 = Arc::new(move |l| if l >= 0.0 && l < support { h(l) } else { 0.0 });
        let q = Quadrature::with_tolerances(1e-12, 1e-10);
        let total = if support.is_finite() {
            q.integrate(|l| h(l), 0.0, support)?.value
        } else {
            q.integrate_half_line(|l| h(l), 1.0)?.value
        };
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Validation(format!("weight function integrates to {total}, not 1")));
        }
        let hc = h.clone();
        let cumulative = move |l: f64| {
            if l <= 0.0 {
                0.0
            } else if l >= support {
                1.0
            } else {
                q.integrate(|z| hc(z), 0.0, l).map(|e| e.value.clamp(0.0, 1.0)).unwrap_or(f64::NAN)
            }
        };
        Ok(Self {
            label: label.to_string(),
            h,
            cumulative: Arc::new(cumulative),
            support,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: WeightConfig = parse_json(text)?;
        match cfg {
            WeightConfig::Indicator { ell0 } => Self::indicator(ell0),
            WeightConfig::Triangular { k } => Self::triangular(k),
            WeightConfig::Table { xs, hs } => Self::table(xs, hs),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn h(&self, l: f64) -> f64 {
        (self.h)(l)
    }

    pub fn cumulative(&self, l: f64) -> f64 {
        (self.cumulative)(l)
    }

    /// `K` with `h = 0` on `[K, inf)`, or infinity.
    pub fn support(&self) -> f64 {
        self.support
    }

    /// Stricter requirements for the L_inf results: finite support and `h`
    /// non-increasing (checked on a grid of 2001 points).
    pub fn check_monotone_compact(&self) -> Result<()> {
        if !self.support.is_finite() || self.support <= 0.0 {
            return Err(Error::Validation(format!("{} has no compact support", self.label)));
        }
        let n = 2000;
        let mut prev = f64::INFINITY;
        for i in 0..=n {
            let v = self.h(self.support * i as f64 / n as f64);
            if v > prev * (1.0 + 1e-12) + 1e-15 {
                return Err(Error::Validation(format!("{} is not non-increasing", self.label)));
            }
            prev = v;
        }
        Ok(())
    }
}

/// `S(x) h(ell) + 1 - H(ell)`.
pub fn martingale_value(spec: &DiffusionSpec, h: &WeightFunction, x: f64, ell: f64) -> Result<f64> {
    if !(x >= 0.0 && ell >= 0.0) {
        return Err(Error::Domain(format!("need x >= 0 and ell >= 0, got x={x}, ell={ell}")));
    }
    Ok(weight(spec.scale(x), h, ell))
}

fn weight(s: f64, h: &WeightFunction, ell: f64) -> f64 {
    let hv = h.h(ell);
    let v = if hv == 0.0 { 0.0 } else { s * hv };
    (v + 1.0 - h.cumulative(ell)).max(0.0)
}

/// `1 + (S(x) - ell) / ell0` on `{ell < ell0}` and `0` afterwards: the martingale of the
/// indicator weight written as a stopped process.
pub fn stopped_indicator_value(s: f64, ell: f64, ell0: f64) -> f64 {
    if ell < ell0 {
        1.0 + (s - ell) / ell0
    } else {
        0.0
    }
}

/// State of a path under `P_0` at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EndState {
    pub x: f64,
    pub local_time: f64,
    /// Last zero before the horizon.
    pub last_zero: f64,
}

fn zero_horizon(n_paths: usize, seed: u64) -> McEstimate {
    McEstimate { mean: 1.0, std_error: 0.0, n_paths, seed }
}

fn check_mc(u: f64, n_paths: usize) -> Result<()> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("horizon must be >= 0, got {u}")));
    }
    if n_paths == 0 {
        return Err(Error::Domain("n_paths must be positive".into()));
    }
    Ok(())
}

/// `E^h[F] = E_0[F M^h_u]` from exact draws of the horizon state (conditioned on `L_u < K`
/// for compactly supported `h`).
pub fn penalized_expectation<F>(spec: &DiffusionSpec, h: &WeightFunction, u: f64, functional: F, n_paths: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(&EndState) -> f64 + Sync + Send,
{
    let s = BesselSampler::for_spec(spec)?;
    check_mc(u, n_paths)?;
    if u == 0.0 {
        let f0 = functional(&EndState { x: 0.0, local_time: 0.0, last_zero: 0.0 });
        return Ok(McEstimate { mean: f0, ..zero_horizon(n_paths, seed) });
    }
    let alpha = s.alpha();
    let v = run_paths(n_paths, seed, |rng| {
        let (st, p) = horizon_draw(&s, h, u, rng);
        let end = EndState { x: st.x, local_time: st.dl, last_zero: st.last_zero.unwrap_or(0.0) };
        p * functional(&end) * weight(bessel::scale(alpha, st.x), h, st.dl)
    });
    Ok(McEstimate::from_values(&v, seed))
}

/// `E_0[M^h_u]`, which equals 1.
pub fn martingale_mean_mc(spec: &DiffusionSpec, h: &WeightFunction, u: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    penalized_expectation(spec, h, u, |_| 1.0, n_paths, seed)
}

/// One test function of the martingale check.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleRow {
    pub phi: String,
    pub at_s: McEstimate,
    pub at_t: McEstimate,
    /// Standard error of the paired difference.
    pub difference_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub s: f64,
    pub t: f64,
    pub rows: Vec<MartingaleRow>,
    /// Largest per-path gap between the weight and its stopped form (indicator weights only).
    pub stopped_form_max_diff: Option<f64>,
    pub pass: bool,
}

/// Compares `E[M_t phi(X_s, L_s)]` with `E[M_s phi(X_s, L_s)]` for indicators of rectangles
/// `[0, a) x [0, b)`, `a in {sqrt(s)/2, sqrt(s), inf}`, `b in {K/2, inf}`.
pub fn martingale_property_mc(spec: &DiffusionSpec, h: &WeightFunction, s: f64, t: f64, n_paths: usize, seed: u64) -> Result<MartingaleReport> {
    let sampler = BesselSampler::for_spec(spec)?;
    check_mc(s, n_paths)?;
    if !(t >= s) {
        return Err(Error::Domain(format!("need s <= t, got s={s}, t={t}")));
    }
    let alpha = sampler.alpha();
    let ell0 = h.label().strip_prefix("indicator(").and_then(|r| r.trim_end_matches(')').parse::<f64>().ok());
    let k = if h.support().is_finite() { h.support() } else { 1.0 };
    let states = run_paths(n_paths, seed, |rng| {
        let first = sampler.from_zero(s, rng);
        let second = sampler.advance(first.x, t - s, rng);
        (first.x, first.dl, second.x, first.dl + second.dl)
    });
    let mut rows = Vec::new();
    let xs = [0.5 * s.sqrt(), s.sqrt(), f64::INFINITY];
    let ls = [0.5 * k, f64::INFINITY];
    for &a in &xs {
        for &b in &ls {
            let phi = |x: f64, l: f64| (x < a && l < b) as u8 as f64;
            let ms: Vec<f64> = states.iter().map(|&(x, l, _, _)| phi(x, l) * weight(bessel::scale(alpha, x), h, l)).collect();
            let mt: Vec<f64> = states.iter().map(|&(x, l, y, m)| phi(x, l) * weight(bessel::scale(alpha, y), h, m)).collect();
            let diff: Vec<f64> = ms.iter().zip(&mt).map(|(p, q)| q - p).collect();
            let d = McEstimate::from_values(&diff, seed);
            rows.push(MartingaleRow {
                phi: format!("1{{X_s<{a:.4}, L_s<{b:.4}}}"),
                at_s: McEstimate::from_values(&ms, seed),
                at_t: McEstimate::from_values(&mt, seed),
                difference_se: d.std_error,
                pass: d.mean.abs() <= 3.0 * d.std_error,
            });
        }
    }
    let stopped_form_max_diff = ell0.map(|ell0| {
        states
            .iter()
            .map(|&(_, _, y, m)| {
                let sy = bessel::scale(alpha, y);
                (weight(sy, h, m) - stopped_indicator_value(sy, m, ell0)).abs()
            })
            .fold(0.0, f64::max)
    });
    let pass = rows.iter().all(|r| r.pass) && stopped_form_max_diff.is_none_or(|d| d < 1e-9);
    Ok(MartingaleReport { s, t, rows, stopped_form_max_diff, pass })
}

/// Draws the horizon state, conditionally on `L_u < K` when `h` has compact support.
/// Returns the state and the probability factor.
fn horizon_draw<R: rand::Rng + ?Sized>(s: &BesselSampler, h: &WeightFunction, u: f64, rng: &mut R) -> (crate::montecarlo::Step, f64) {
    if h.support().is_finite() {
        s.from_zero_below(u, h.support(), rng)
    } else {
        (s.from_zero(u, rng), 1.0)
    }
}

/// `E_0[1 - H(L_u)]`, the weight not yet carried by `S(X_u) h(L_u)`.
pub fn residual_mass(spec: &DiffusionSpec, h: &WeightFunction, u: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_mc(u, n_paths)?;
    let v = run_paths(n_paths, seed, |rng| {
        let (st, p) = horizon_draw(&s, h, u, rng);
        p * (1.0 - h.cumulative(st.dl))
    });
    Ok(McEstimate::from_values(&v, seed))
}

/// Smallest `u = 4^k` (k >= 0) with `E_0[1 - H(L_u)] < target`, from pilot runs.
pub fn choose_horizon(spec: &DiffusionSpec, h: &WeightFunction, target: f64, n_pilot: usize, seed: u64) -> Result<f64> {
    let mut u = 1.0;
    for _ in 0..20 {
        let r = residual_mass(spec, h, u, n_pilot, seed)?;
        if r.mean + 2.0 * r.std_error < target {
            return Ok(u);
        }
        u *= 4.0;
    }
    Err(Error::Tolerance {
        what: "no horizon up to 4^20 brings the residual mass below target".into(),
        estimate: f64::NAN,
        requested: target,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LinftyReport {
    pub u: f64,
    pub residual: McEstimate,
    pub levels: Vec<f64>,
    pub weighted_cdf: Vec<f64>,
    pub cdf_std_error: Vec<f64>,
    pub target: Vec<f64>,
    pub max_gap: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Weighted CDF `E_0[1{L_u <= l} M^h_u]` against `H(l)` on 50 levels. `u = None` picks the
/// horizon with [`choose_horizon`] at residual mass 0.01.
pub fn linfty_law_check(spec: &DiffusionSpec, h: &WeightFunction, u: Option<f64>, n_paths: usize, seed: u64) -> Result<LinftyReport> {
    let s = BesselSampler::for_spec(spec)?;
    let u = match u {
        Some(u) => u,
        None => choose_horizon(spec, h, 0.01, (n_paths / 10).max(1000), seed ^ 0x9e37_79b9)?,
    };
    check_mc(u, n_paths)?;
    let alpha = s.alpha();
    let draws = run_paths(n_paths, seed, |rng| {
        let (st, p) = horizon_draw(&s, h, u, rng);
        (st.dl, p * weight(bessel::scale(alpha, st.x), h, st.dl), p * (1.0 - h.cumulative(st.dl)))
    });
    let top = if h.support().is_finite() {
        h.support()
    } else {
        let mut l = 1.0;
        while h.cumulative(l) < 0.999 && l < 1e12 {
            l *= 2.0;
        }
        l
    };
    let levels: Vec<f64> = (1..=50).map(|i| top * i as f64 / 50.0).collect();
    let mut weighted_cdf = Vec::new();
    let mut cdf_std_error = Vec::new();
    let mut target = Vec::new();
    let mut max_gap: f64 = 0.0;
    for &l in &levels {
        let v: Vec<f64> = draws.iter().map(|&(dl, w, _)| if dl <= l { w } else { 0.0 }).collect();
        let e = McEstimate::from_values(&v, seed);
        let hl = h.cumulative(l);
        max_gap = max_gap.max((e.mean - hl).abs());
        weighted_cdf.push(e.mean);
        cdf_std_error.push(e.std_error);
        target.push(hl);
    }
    let residual: Vec<f64> = draws.iter().map(|d| d.2).collect();
    Ok(LinftyReport {
        u,
        residual: McEstimate::from_values(&residual, seed),
        levels,
        weighted_cdf,
        cdf_std_error,
        target,
        max_gap,
        threshold: 0.02,
        pass: max_gap < 0.02,
    })
}

/// `p^up(t; x, y) = p̂(t; x, y) / (S(x) S(y))` with respect to `S(y)^2 m(dy)`; at `x = 0` the
/// limit `f_{y0}(t) / S(y)`. Uses the closed forms attached to `spec`.
pub fn uparrow_density(spec: &DiffusionSpec, x: f64, y: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && y > 0.0 && x >= 0.0) {
        return Err(Error::Domain(format!("need t > 0, y > 0, x >= 0, got t={t}, x={x}, y={y}")));
    }
    let o = spec.oracles();
    if x == 0.0 {
        let f = o.hitting_density.as_ref().ok_or_else(|| Error::Unsupported("uparrow_density needs a hitting density".into()))?;
        Ok(f(y, t) / spec.scale(y))
    } else {
        let p = o.killed_density.as_ref().ok_or_else(|| Error::Unsupported("uparrow_density needs a killed density".into()))?;
        Ok(p(t, x, y) / (spec.scale(x) * spec.scale(y)))
    }
}

/// Same as [`uparrow_density`] through the spectral representations.
pub fn uparrow_density_spectral(model: &SpectralModel, x: f64, y: f64, t: f64) -> Result<Estimate> {
    if !(t > 0.0 && y > 0.0 && x >= 0.0) {
        return Err(Error::Domain(format!("need t > 0, y > 0, x >= 0, got t={t}, x={x}, y={y}")));
    }
    let spec = model.spec();
    let (e, d) = if x == 0.0 {
        (model.hitting_density(y, t)?, spec.scale(y))
    } else {
        (model.transition_density(x, y, t, true)?, spec.scale(x) * spec.scale(y))
    };
    Ok(Estimate::new(e.value / d, e.abs_err / d))
}

/// `int_0^inf p^up(t; 0, y) S(y)^2 m'(y) dy = int_0^inf f_{y0}(t) S(y) m'(y) dy`, which must
/// be 1, with the hitting density taken from the spectral integrals.
///
/// The `y`-range grows by doubling until a block adds less than `1e-8`; the spectral
/// integrals are evaluated at absolute tolerance `1e-12`.
pub fn uparrow_normalization(model: &SpectralModel, t: f64) -> Result<Estimate> {
    let model = model.clone().with_tol(1e-12);
    let spec = model.spec();
    let q = Quadrature::with_tolerances(1e-9, 1e-8);
    let f = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        match model.hitting_density(y, t) {
            Ok(e) => e.value * spec.scale(y) * spec.speed_density(y),
            Err(_) => f64::NAN,
        }
    };
    let check = |e: Estimate| -> Result<Estimate> {
        if e.value.is_finite() {
            Ok(e)
        } else {
            Err(Error::Tolerance { what: "spectral hitting density inside the normalization integral".into(), estimate: f64::NAN, requested: 1e-8 })
        }
    };
    let mut b = t.sqrt();
    let mut total = check(q.integrate(f, 0.0, b)?)?;
    for _ in 0..30 {
        let piece = check(q.integrate(f, b, 2.0 * b)?)?;
        total = total + piece;
        b *= 2.0;
        if piece.value.abs() < 1e-8 {
            return Ok(total);
        }
    }
    Err(Error::Integrability("normalization integral does not settle".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct LastZeroReport {
    pub horizon: f64,
    pub v: f64,
    pub edges: Vec<f64>,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
    /// `sum (observed - expected)^2 / expected` over the bins.
    pub distance: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Mean weight; 1 up to Monte Carlo error.
    pub mean_weight: McEstimate,
    pub effective_sample_size: f64,
    /// Weighted correlation of `L` at the last zero with `X` at `v` after it.
    pub correlation: f64,
    pub correlation_se: f64,
}

/// Law of `X_{lambda + v}` under `Q^h`, `lambda` the last zero before the horizon `N`,
/// compared with `p^up(v; 0, y) S(y)^2 m'(y)` on 20 bins.
///
/// Each path is drawn exactly: the horizon state under `P_0`, the position `v` after the last
/// zero (inside the final excursion, or continued past `N`), and the state at `N + v`, whose
/// weight `M^h_{N+v}` makes the event measurable. `horizon = None` uses [`choose_horizon`].
pub fn post_lastzero_marginal_check(
    spec: &DiffusionSpec,
    h: &WeightFunction,
    horizon: Option<f64>,
    v: f64,
    n_paths: usize,
    seed: u64,
) -> Result<LastZeroReport> {
    let s = BesselSampler::for_spec(spec)?;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("v must be > 0, got {v}")));
    }
    let n_big = match horizon {
        Some(n) => n,
        None => choose_horizon(spec, h, 0.01, (n_paths / 10).max(1000), seed ^ 0x9e37_79b9)?,
    };
    check_mc(n_big, n_paths)?;
    let alpha = s.alpha();
    let draws = run_paths(n_paths, seed, |rng| {
        let (st, p) = horizon_draw(&s, h, n_big, rng);
        let g = st.last_zero.unwrap_or(0.0);
        let l_lambda = st.dl;
        // position v after the last zero, then the state at N + v
        let (y, x_end, l_end) = if g + v <= n_big {
            let y = s.meander_position(v, n_big - g, rng);
            let x_n = if n_big - g - v > 0.0 { s.surviving_step(y, n_big - g - v, rng) } else { y };
            let more = s.advance(x_n, v, rng);
            (y, more.x, l_lambda + more.dl)
        } else {
            let first = s.advance(st.x, g + v - n_big, rng);
            let more = s.advance(first.x, n_big - g, rng);
            (first.x, more.x, l_lambda + first.dl + more.dl)
        };
        let w = p * weight(bessel::scale(alpha, x_end), h, l_end);
        (y, l_lambda, w)
    });

    let q = Quadrature::with_tolerances(1e-12, 1e-10);
    let target = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        let sy = spec.scale(y);
        uparrow_density(spec, 0.0, y, v).unwrap_or(f64::NAN) * sy * sy * spec.speed_density(y)
    };
    let top = (2.0 * v * 20.0).sqrt();
    let bins = 20;
    let mut edges: Vec<f64> = (0..bins).map(|i| top * i as f64 / (bins - 1) as f64).collect();
    edges.push(f64::INFINITY);
    let mut expected = Vec::with_capacity(bins);
    for i in 0..bins {
        let e = if edges[i + 1].is_finite() {
            q.integrate(target, edges[i], edges[i + 1])?.value
        } else {
            // y^2 / 2v is Gamma(alpha + 1) under the target
            gamma_ur(alpha + 1.0, edges[i] * edges[i] / (2.0 * v))
        };
        expected.push(e);
    }
    let total_w: f64 = draws.iter().map(|d| d.2).sum();
    if !(total_w > 0.0) {
        return Err(Error::DivisionGuard("all penalization weights vanished".into()));
    }
    let mut observed = vec![0.0; bins];
    for &(y, _, w) in &draws {
        let i = edges.partition_point(|&e| e <= y).clamp(1, bins) - 1;
        observed[i] += w / total_w;
    }
    let distance: f64 = observed
        .iter()
        .zip(&expected)
        .filter(|(_, e)| **e > 1e-12)
        .map(|(o, e)| (o - e).powi(2) / e)
        .sum();
    let sum_w2: f64 = draws.iter().map(|d| d.2 * d.2).sum();
    let ess = total_w * total_w / sum_w2;
    let mw = |f: &dyn Fn(&(f64, f64, f64)) -> f64| draws.iter().map(|d| d.2 * f(d)).sum::<f64>() / total_w;
    let (my, ml) = (mw(&|d| d.0), mw(&|d| d.1));
    let cov = mw(&|d| (d.0 - my) * (d.1 - ml));
    let vy = mw(&|d| (d.0 - my).powi(2));
    let vl = mw(&|d| (d.1 - ml).powi(2));
    let correlation = if vy > 0.0 && vl > 0.0 { cov / (vy * vl).sqrt() } else { 0.0 };
    let weights: Vec<f64> = draws.iter().map(|d| d.2).collect();
    Ok(LastZeroReport {
        horizon: n_big,
        v,
        edges,
        observed,
        expected,
        distance,
        threshold: 0.05,
        pass: distance < 0.05,
        mean_weight: McEstimate::from_values(&weights, seed),
        effective_sample_size: ess,
        correlation,
        correlation_se: 1.0 / ess.sqrt(),
    })
}

/// `E_a[h(L_t)] / nu((t, inf))`, which tends to `S(a) h(0) + 1`.
pub fn numerator_ratio_mc(spec: &DiffusionSpec, h: &WeightFunction, a: f64, t: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_mc(t, n_paths)?;
    if !(a >= 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("need a >= 0 and t > 0, got a={a}, t={t}")));
    }
    let tail = bessel::levy_tail(s.alpha(), t);
    let v = run_paths(n_paths, seed, |rng| {
        let hit = s.hitting_time(a, rng);
        let l = if hit >= t { 0.0 } else { s.from_zero(t - hit, rng).dl };
        h.h(l) / tail
    });
    Ok(McEstimate::from_values(&v, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::brownian;

    #[test]
    fn weight_constructors() {
        let h = WeightFunction::indicator(1.0).unwrap();
        assert_eq!(h.cumulative(0.5), 0.5);
        assert_eq!(h.cumulative(3.0), 1.0);
        let t = WeightFunction::triangular(2.0).unwrap();
        assert!((t.cumulative(1.0) - 0.75).abs() < 1e-15);
        let tab = WeightFunction::table(vec![0.0, 1.0, 2.0], vec![1.0, 0.5, 0.0]).unwrap();
        assert!((tab.cumulative(1.0) - 0.75).abs() < 1e-15);
        assert_eq!(tab.support(), 2.0);
        assert!(WeightFunction::indicator(0.0).is_err());
        assert!(WeightFunction::table(vec![0.0, 1.0], vec![1.0, 2.0]).is_err());
        assert!(WeightFunction::from_json(r#"{"kind":"indicator","ell0":2}"#).unwrap().check_monotone_compact().is_ok());
        let c = WeightFunction::custom("exp", |l: f64| (-l).exp(), f64::INFINITY).unwrap();
        assert!((c.cumulative(1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!(c.check_monotone_compact().is_err());
        let bump = WeightFunction::table(vec![0.0, 0.5, 1.0], vec![0.5, 1.5, 0.5]).unwrap();
        assert!(bump.check_monotone_compact().is_err());
    }

    #[test]
    fn martingale_values() {
        let spec = brownian();
        let h = WeightFunction::indicator(2.0).unwrap();
        assert_eq!(martingale_value(&spec, &h, 0.0, 0.0).unwrap(), 1.0);
        for x in [0.0, 0.3, 2.0] {
            for l in [0.0, 0.5, 1.9, 2.0, 3.0] {
                let v = martingale_value(&spec, &h, x, l).unwrap();
                assert!((v - stopped_indicator_value(spec.scale(x), l, 2.0)).abs() < 1e-15);
            }
        }
        // value at (0, ell) equals int_ell^inf h
        let t = WeightFunction::triangular(2.0).unwrap();
        for l in [0.0, 0.7, 1.5, 2.5] {
            let v = martingale_value(&spec, &t, 0.0, l).unwrap();
            assert!((v - (1.0 - t.cumulative(l))).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_horizon_is_exact() {
        let h = WeightFunction::indicator(1.0).unwrap();
        let m = martingale_mean_mc(&brownian(), &h, 0.0, 10, 1).unwrap();
        assert_eq!((m.mean, m.std_error), (1.0, 0.0));
    }
}

//! Power-series coefficients of the eigenfunctions `A(x; gamma)` and `C(x; gamma)`.
//!
//! With `A_0 = 1`, `C_0 = S` and
//! `F_{n+1}(x) = int_0^x dS(y) int_0^y F_n(z) m(dz)`,
//! the eigenfunctions are `sum_n (-gamma)^n F_n(x)`. Each `F_n` is bounded by
//! `F_0(x) B(x)^n / n!` with `B(x) = int_0^x M dS`, which gives a computable truncation bound.
//!
//! The recursion is evaluated by piecewise polynomial collocation in the scale variable
//! `s = S(y)`: `[0, x]` is cut into geometric cells near 0 and uniform cells further out, each
//! carrying 13 Chebyshev–Lobatto nodes in `s`. Both nested integrals then become fixed
//! matrix–vector products per cell, and the cell count is doubled until the coefficients at
//! `x` settle.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::bessel;
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::quad::{gauss_legendre, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EigenKind {
    /// `A(x; gamma)`, started from `A_0 = 1`.
    A,
    /// `C(x; gamma)`, started from `C_0 = S`.
    C,
}

/// Truncated coefficient sequence of `A(x; .)` or `C(x; .)` at a fixed point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSeries {
    pub x: f64,
    pub kind: EigenKind,
    pub coefficients: Vec<f64>,
    /// Absolute error estimate of each coefficient.
    pub coefficient_errors: Vec<f64>,
    /// `B(x) = int_0^x M dS`.
    pub bound_base: f64,
    /// `F_0(x)`: `S(x)` for `C`, 1 for `A`.
    pub leading: f64,
}

const CELL_NODES: usize = 13;
const GEOMETRIC_RATIO: f64 = 1.5;
const INNER_CUTOFF: f64 = 1e-7;
const REFINE_TOL: f64 = 1e-9;

impl EigenSeries {
    /// Series built from the Bessel closed-form coefficients.
    pub fn bessel(alpha: f64, x: f64, kind: EigenKind, n: usize) -> EigenSeries {
        let coefficients: Vec<f64> = (0..=n)
            .map(|k| match kind {
                EigenKind::A => bessel::coefficient_a(alpha, x, k),
                EigenKind::C => bessel::coefficient_c(alpha, x, k),
            })
            .collect();
        let coefficient_errors = coefficients.iter().map(|c| 1e-14 * c).collect();
        EigenSeries {
            x,
            kind,
            coefficients,
            coefficient_errors,
            bound_base: bessel::bound_base(alpha, x),
            leading: match kind {
                EigenKind::A => 1.0,
                EigenKind::C => bessel::scale(alpha, x),
            },
        }
    }

    pub fn terms(&self) -> usize {
        self.coefficients.len().saturating_sub(1)
    }

    /// `F_0(x) B(x)^n / n!`.
    pub fn bound(&self, n: usize) -> f64 {
        if self.bound_base == 0.0 {
            return if n == 0 { self.leading } else { 0.0 };
        }
        self.leading * (n as f64 * self.bound_base.ln() - ln_gamma(n as f64 + 1.0)).exp()
    }

    /// Bound on `sum_{n > big_n} |gamma|^n F_n(x)`.
    pub fn tail_bound(&self, gamma: f64, big_n: usize) -> f64 {
        let r = gamma.abs() * self.bound_base;
        if r == 0.0 || self.leading == 0.0 {
            return 0.0;
        }
        let next = (big_n + 1) as f64;
        let ratio = r / (next + 1.0);
        if ratio >= 1.0 {
            return f64::INFINITY;
        }
        let first = self.leading * (next * r.ln() - ln_gamma(next + 1.0)).exp();
        first / (1.0 - ratio)
    }

    /// Smallest `N` whose truncation bound at `gamma` is below `tol`.
    pub fn required_terms(&self, gamma: f64, tol: f64) -> usize {
        let mut n = 0;
        while self.tail_bound(gamma, n) >= tol {
            n += 1;
            if n > 100_000 {
                break;
            }
        }
        n
    }

    /// Plain partial sum `sum_{n <= N} (-gamma)^n F_n(x)`.
    pub fn partial_sum(&self, gamma: f64) -> f64 {
        let mut acc = 0.0;
        let mut power = 1.0;
        for c in &self.coefficients {
            acc += power * c;
            power *= -gamma;
        }
        acc
    }
}

impl EigenSeries {
    /// Partial sum at `gamma` with its error bound: truncation tail, coefficient errors and
    /// accumulated rounding.
    pub fn evaluate(&self, gamma: f64) -> Estimate {
        let big_n = self.terms();
        let tail = self.tail_bound(gamma, big_n);
        let mut value = 0.0;
        let mut magnitude = 0.0;
        let mut coefficient_error = 0.0;
        let mut power = 1.0;
        for (c, e) in self.coefficients.iter().zip(&self.coefficient_errors) {
            value += power * c;
            magnitude += (power * c).abs();
            coefficient_error += power.abs() * e;
            power *= -gamma;
        }
        let rounding = 4.0 * f64::EPSILON * magnitude * (big_n as f64 + 1.0).sqrt();
        Estimate::new(value, tail + rounding + coefficient_error)
    }
}

/// Evaluates the series at `gamma` with an absolute error guaranteed below `tol`.
pub fn eigen_value(series: &EigenSeries, gamma: f64, tol: f64) -> Result<Estimate> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tol must be > 0, got {tol}")));
    }
    let big_n = series.terms();
    if !(series.tail_bound(gamma, big_n) < tol) {
        return Err(Error::Truncation {
            terms: big_n,
            required: series.required_terms(gamma, tol),
            gamma,
            tol,
        });
    }
    let e = series.evaluate(gamma);
    if e.abs_err >= tol {
        return Err(Error::Tolerance {
            what: format!("eigenfunction series at gamma={gamma} (cancellation)"),
            estimate: e.abs_err,
            requested: tol,
        });
    }
    Ok(e)
}

/// `B(x) = int_0^x M dS = M(x) S(x) - int_0^x S dm`.
pub fn bound_base(spec: &DiffusionSpec, x: f64) -> Result<f64> {
    if let Some(alpha) = spec.alpha() {
        return Ok(bessel::bound_base(alpha, x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let q = spec.quadrature();
    let m = crate::diffusion::cumulative_speed(spec, x)?;
    let f = |z: f64| spec.scale(z) * spec.speed_density(z);
    let inner = q.integrate_from_zero(f, 0.5 * x)? + q.integrate(f, 0.5 * x, x)?;
    Ok(m * spec.scale(x) - inner.value)
}

struct Cell {
    nodes: Vec<f64>,
    /// `wm[k][j] = int_a^{y_k} l_j(S(z)) m'(z) dz`
    wm: Vec<Vec<f64>>,
    /// `ws[k][j] = int_{S(a)}^{s_k} l_j(s) ds`
    ws: Vec<Vec<f64>>,
}

fn barycentric_weights(q: usize) -> Vec<f64> {
    (0..q)
        .map(|j| {
            let w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == q - 1 {
                0.5 * w
            } else {
                w
            }
        })
        .collect()
}

fn lagrange_basis(nodes: &[f64], weights: &[f64], s: f64, out: &mut [f64]) {
    if let Some(hit) = nodes.iter().position(|&n| n == s) {
        out.iter_mut().for_each(|v| *v = 0.0);
        out[hit] = 1.0;
        return;
    }
    let mut denom = 0.0;
    for j in 0..nodes.len() {
        let v = weights[j] / (s - nodes[j]);
        out[j] = v;
        denom += v;
    }
    out.iter_mut().for_each(|v| *v /= denom);
}

fn invert_scale(spec: &DiffusionSpec, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if spec.scale(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn build_cell(spec: &DiffusionSpec, a: f64, b: f64, gl: &(Vec<f64>, Vec<f64>)) -> Cell {
    let q = CELL_NODES;
    let (sa, sb) = (spec.scale(a), spec.scale(b));
    let s_nodes: Vec<f64> = (0..q)
        .map(|j| {
            let c = (std::f64::consts::PI * j as f64 / (q - 1) as f64).cos();
            0.5 * (sa + sb) - 0.5 * (sb - sa) * c
        })
        .collect();
    let y_nodes: Vec<f64> = s_nodes
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            if j == 0 {
                a
            } else if j == q - 1 {
                b
            } else {
                invert_scale(spec, s, a, b)
            }
        })
        .collect();
    let bw = barycentric_weights(q);
    let mut basis = vec![0.0; q];
    let mut wm = vec![vec![0.0; q]; q];
    let mut ws = vec![vec![0.0; q]; q];
    for k in 1..q {
        let (lo, hi) = (a, y_nodes[k]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (xi, wi) in gl.0.iter().zip(&gl.1) {
            let z = mid + half * xi;
            lagrange_basis(&s_nodes, &bw, spec.scale(z), &mut basis);
            let md = spec.speed_density(z) * wi * half;
            for j in 0..q {
                wm[k][j] += basis[j] * md;
            }
        }
        let (lo, hi) = (sa, s_nodes[k]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (xi, wi) in gl.0.iter().zip(&gl.1) {
            lagrange_basis(&s_nodes, &bw, mid + half * xi, &mut basis);
            for j in 0..q {
                ws[k][j] += basis[j] * wi * half;
            }
        }
    }
    Cell {
        nodes: y_nodes,
        wm,
        ws,
    }
}

fn breakpoints(x: f64, uniform: usize) -> Vec<f64> {
    let h = x / uniform as f64;
    let mut points = vec![x * INNER_CUTOFF];
    while points.last().copied().unwrap_or(h) * GEOMETRIC_RATIO < h {
        let next = points.last().unwrap() * GEOMETRIC_RATIO;
        points.push(next);
    }
    for j in 1..=uniform {
        points.push(if j == uniform { x } else { h * j as f64 });
    }
    points
}

/// Runs the collocation recursion with `uniform` outer cells.
fn recursion(spec: &DiffusionSpec, x: f64, kind: EigenKind, n: usize, uniform: usize) -> Result<Vec<f64>> {
    let gl = gauss_legendre(24);
    let points = breakpoints(x, uniform);
    let cells: Vec<Cell> = points
        .windows(2)
        .map(|w| build_cell(spec, w[0], w[1], &gl))
        .collect();

    // Quantities on [0, y0] where y0 = x * 1e-7: exact for the first two orders, and
    // negligible (bounded by F_0 B^n / n! at y0) beyond.
    let y0 = points[0];
    let q = spec.quadrature();
    let s0 = spec.scale(y0);
    let m0 = crate::diffusion::cumulative_speed(spec, y0)?;
    let int_s_dm = q.integrate_from_zero(|z| spec.scale(z) * spec.speed_density(z), y0)?.value;
    let (i0_start, f1_start) = match kind {
        EigenKind::A => (m0, m0 * s0 - int_s_dm),
        EigenKind::C => {
            let int_s2_dm = q
                .integrate_from_zero(|z| spec.scale(z).powi(2) * spec.speed_density(z), y0)?
                .value;
            (int_s_dm, s0 * int_s_dm - int_s2_dm)
        }
    };

    let qn = CELL_NODES;
    let total_nodes = cells.len() * qn;
    // Current order values at every node.
    let mut f: Vec<f64> = cells
        .iter()
        .flat_map(|c| {
            c.nodes.iter().map(move |&y| match kind {
                EigenKind::A => 1.0,
                EigenKind::C => spec.scale(y),
            })
        })
        .collect();
    let mut out = Vec::with_capacity(n + 1);
    out.push(*f.last().unwrap());
    let mut inner = vec![0.0; total_nodes];
    let mut next = vec![0.0; total_nodes];
    for order in 0..n {
        let mut i_start = if order == 0 { i0_start } else { 0.0 };
        for (ci, cell) in cells.iter().enumerate() {
            let base = ci * qn;
            let fv = &f[base..base + qn];
            for k in 0..qn {
                inner[base + k] = i_start + dot(&cell.wm[k], fv);
            }
            i_start = inner[base + qn - 1];
        }
        let mut f_start = if order == 0 { f1_start } else { 0.0 };
        for (ci, cell) in cells.iter().enumerate() {
            let base = ci * qn;
            let iv = &inner[base..base + qn];
            for k in 0..qn {
                next[base + k] = f_start + dot(&cell.ws[k], iv);
            }
            f_start = next[base + qn - 1];
        }
        std::mem::swap(&mut f, &mut next);
        out.push(*f.last().unwrap());
    }
    Ok(out)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Coefficients `F_0(x), ..., F_N(x)` by the collocation recursion, refined until successive
/// grids agree to `1e-9` relative to the bound `F_0 B^n / n!`.
pub fn eigen_coefficients(spec: &DiffusionSpec, x: f64, kind: EigenKind, n: usize) -> Result<EigenSeries> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    let leading = match kind {
        EigenKind::A => 1.0,
        EigenKind::C => spec.scale(x),
    };
    let bb = bound_base(spec, x)?;
    if x == 0.0 {
        let mut coefficients = vec![0.0; n + 1];
        coefficients[0] = leading;
        return Ok(EigenSeries {
            x,
            kind,
            coefficients,
            coefficient_errors: vec![0.0; n + 1],
            bound_base: 0.0,
            leading,
        });
    }
    let mut series = EigenSeries {
        x,
        kind,
        coefficients: Vec::new(),
        coefficient_errors: Vec::new(),
        bound_base: bb,
        leading,
    };
    let mut uniform = 32;
    let mut previous = recursion(spec, x, kind, n, uniform)?;
    loop {
        uniform *= 2;
        let current = recursion(spec, x, kind, n, uniform)?;
        let mut worst = (0usize, 0.0f64);
        for k in 0..=n {
            let rel = (current[k] - previous[k]).abs() / series.bound(k).max(f64::MIN_POSITIVE);
            if rel > worst.1 {
                worst = (k, rel);
            }
        }
        if worst.1 < REFINE_TOL {
            series.coefficient_errors = current
                .iter()
                .zip(&previous)
                .map(|(c, p)| (c - p).abs() + 1e-14 * c.abs())
                .collect();
            series.coefficients = current;
            series.coefficients[0] = leading;
            return Ok(series);
        }
        if uniform >= 2048 {
            return Err(Error::Tolerance {
                what: format!("eigen coefficient recursion, n={}", worst.0),
                estimate: worst.1,
                requested: REFINE_TOL,
            });
        }
        previous = current;
    }
}

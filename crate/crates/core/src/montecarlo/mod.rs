//! Monte Carlo for Bessel presets.
//!
//! Every path `i` of a run with seed `s` draws from its own ChaCha8 stream `(s, i)`, and
//! results are reduced in path order, so output does not depend on the number of worker
//! threads. The worker count comes from [`set_threads`], else `LEVYKIT_THREADS`, else the
//! rayon default.

pub mod samplers;
mod path;

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bessel;
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};

pub use path::{simulate_path, simulate_path_with, LocalTimeMethod, PathSample};
pub use samplers::{BesselSampler, Step};

pub const DEFAULT_SEED: u64 = 12345;

static THREADS: AtomicUsize = AtomicUsize::new(0);

/// Overrides the worker count (`None` restores the default).
pub fn set_threads(n: Option<usize>) {
    THREADS.store(n.unwrap_or(0), Ordering::Relaxed);
}

fn worker_count() -> usize {
    match THREADS.load(Ordering::Relaxed) {
        0 => std::env::var("LEVYKIT_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n > 0)
            .unwrap_or_else(rayon::current_num_threads),
        n => n,
    }
}

/// RNG of path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f` once per path in parallel and returns the results in path order.
pub fn run_paths<T, F>(n: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut ChaCha8Rng) -> T + Sync + Send,
{
    let work = || {
        (0..n as u64)
            .into_par_iter()
            .map(|i| f(&mut path_rng(seed, i)))
            .collect()
    };
    match rayon::ThreadPoolBuilder::new().num_threads(worker_count()).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

/// Sample mean with its standard error `sample_std / sqrt(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl McEstimate {
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std_error: f64::NAN, n_paths: 0, seed };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n_paths: n, seed }
    }

    /// `|self - other| / sqrt(se1^2 + se2^2)` for independent estimates.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let joint = self.std_error.hypot(other.std_error);
        if joint == 0.0 {
            if self.mean == other.mean { 0.0 } else { f64::INFINITY }
        } else {
            (self.mean - other.mean).abs() / joint
        }
    }
}

/// A draw of the inverse local time at `level`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubordinatorSample {
    pub level: f64,
    pub value: f64,
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("n_paths must be positive".into()));
    }
    Ok(())
}

pub fn sample_tau(spec: &DiffusionSpec, level: f64, seed: u64) -> Result<SubordinatorSample> {
    let s = BesselSampler::for_spec(spec)?;
    if !(level > 0.0) {
        return Err(Error::Domain(format!("level must be > 0, got {level}")));
    }
    let value = s.tau(level, &mut path_rng(seed, 0));
    Ok(SubordinatorSample { level, value })
}

/// `n` independent draws of `tau_level`.
pub fn sample_tau_batch(spec: &DiffusionSpec, level: f64, n: usize, seed: u64) -> Result<Vec<f64>> {
    let s = BesselSampler::for_spec(spec)?;
    Ok(run_paths(n, seed, |rng| s.tau(level, rng)))
}

/// `P_x(H_0 > t)` from exact hitting-time draws.
pub fn estimate_hitting_tail(spec: &DiffusionSpec, x: f64, t: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    if !(x >= 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("need x >= 0 and t > 0, got x={x}, t={t}")));
    }
    let v = run_paths(n_paths, seed, |rng| (s.hitting_time(x, rng) > t) as u8 as f64);
    Ok(McEstimate::from_values(&v, seed))
}

/// `P_x(L_t <= ell) = P(H_0 + tau_ell >= t)` with `H_0` and `tau_ell` independent.
///
/// Each path draws `H_0` and the exponential input of `tau_ell`; the uniform input is
/// integrated out exactly, which removes most of the variance of the indicator.
pub fn estimate_localtime_tail(spec: &DiffusionSpec, x: f64, ell: f64, t: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    if !(x >= 0.0 && ell >= 0.0 && t > 0.0) {
        return Err(Error::Domain(format!("need x >= 0, ell >= 0, t > 0, got x={x}, ell={ell}, t={t}")));
    }
    let v = run_paths(n_paths, seed, |rng| {
        let h = s.hitting_time(x, rng);
        if h >= t {
            return 1.0;
        }
        if ell == 0.0 {
            return 0.0;
        }
        s.tau_tail_given(ell, t - h, rng.sample(Exp1))
    });
    Ok(McEstimate::from_values(&v, seed))
}

/// Same quantity from simulated grid paths: the indicator of `L_t <= ell`.
pub fn estimate_localtime_tail_paths(
    spec: &DiffusionSpec,
    x: f64,
    ell: f64,
    t: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    path::check_grid(t, dt)?;
    let steps = (t / dt).round() as usize;
    let v = run_paths(n_paths, seed, |rng| {
        let mut pos = x;
        let mut local = 0.0;
        for _ in 0..steps {
            let st = s.advance(pos, dt, rng);
            pos = st.x;
            local += st.dl;
        }
        (local <= ell) as u8 as f64
    });
    Ok(McEstimate::from_values(&v, seed))
}

/// `-ln E[e^{-lambda tau_ell}] / ell`, to be compared with `1/R_lambda(0,0)`. The standard
/// error comes from the delta method.
pub fn levy_exponent_mc(spec: &DiffusionSpec, lambda: f64, ell: f64, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let s = BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    if !(lambda >= 0.0 && ell > 0.0) {
        return Err(Error::Domain(format!("need lambda >= 0 and ell > 0, got {lambda}, {ell}")));
    }
    if lambda == 0.0 {
        return Ok(McEstimate { mean: 0.0, std_error: 0.0, n_paths, seed });
    }
    let v = run_paths(n_paths, seed, |rng| (-lambda * s.tau(ell, rng)).exp());
    let m = McEstimate::from_values(&v, seed);
    if !(m.mean > 0.0) {
        return Err(Error::DivisionGuard("empirical Laplace transform vanished".into()));
    }
    Ok(McEstimate {
        mean: -m.mean.ln() / ell,
        std_error: m.std_error / (m.mean * ell),
        n_paths,
        seed,
    })
}

/// Paired estimates of `E_0 S(X_t)` and `E_0 L_t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DoobMeyerReport {
    pub t: f64,
    pub scale_mean: McEstimate,
    pub local_time_mean: McEstimate,
    /// Standard error of the paired difference `S(X_t) - L_t`.
    pub difference_se: f64,
    pub gap: f64,
    pub pass: bool,
}

/// Checks `E_0 S(X_t) = E_0 L_t` from exact draws of `(X_t, L_t)`.
///
/// `dt` only has to divide the horizon: the transitions are exact, so the law of `(X_t, L_t)`
/// is the same for every grid and one step is taken.
pub fn doob_meyer_check(spec: &DiffusionSpec, t: f64, dt: f64, n_paths: usize, seed: u64) -> Result<DoobMeyerReport> {
    let s = BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    path::check_grid(t, dt)?;
    let alpha = s.alpha();
    let pairs = run_paths(n_paths, seed, |rng| {
        let st = s.from_zero(t, rng);
        (bessel::scale(alpha, st.x), st.dl)
    });
    let sx: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let lt: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let diff: Vec<f64> = pairs.iter().map(|p| p.0 - p.1).collect();
    let d = McEstimate::from_values(&diff, seed);
    Ok(DoobMeyerReport {
        t,
        scale_mean: McEstimate::from_values(&sx, seed),
        local_time_mean: McEstimate::from_values(&lt, seed),
        difference_se: d.std_error,
        gap: d.mean,
        pass: d.mean.abs() < 3.0 * d.std_error,
    })
}

/// `E_{x0}[L_t]` from grid paths with the given local-time method.
pub fn estimate_local_time_mean(
    spec: &DiffusionSpec,
    x0: f64,
    t: f64,
    dt: f64,
    method: LocalTimeMethod,
    n_paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    BesselSampler::for_spec(spec)?;
    check_n(n_paths)?;
    let paths = run_paths(n_paths, seed, |rng| {
        let path_seed: u64 = rng.random();
        simulate_path_with(spec, x0, t, dt, path_seed, method).map(|p| *p.local_time.last().unwrap())
    });
    let v = paths.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(McEstimate::from_values(&v, seed))
}

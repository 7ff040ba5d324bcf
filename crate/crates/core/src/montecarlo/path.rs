use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::path_rng;
use super::samplers::BesselSampler;
use crate::bessel;
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};

/// How the local time at 0 is obtained along a grid path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LocalTimeMethod {
    /// Exact joint transitions of `(X, L)`; no discretization error at grid times.
    Exact,
    /// Occupation of the band `[0, epsilon)` divided by `M(epsilon)`; positions follow
    /// `|W|` for Brownian motion and squared-Bessel transitions otherwise.
    Occupation { epsilon: Option<f64> },
}

/// A path on the grid `0, dt, 2 dt, ..., t_end` (the last step may be shorter).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub local_time: Vec<f64>,
    /// First grid index at or after the first visit to 0 (exact method), or the first index
    /// inside the band (occupation method).
    pub hit_zero_at: Option<usize>,
}

pub(crate) fn check_grid(t_end: f64, dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end >= dt) {
        return Err(Error::Domain(format!("t_end must be >= dt, got t_end={t_end}, dt={dt}")));
    }
    Ok(())
}

pub fn simulate_path(spec: &DiffusionSpec, x0: f64, t_end: f64, dt: f64, seed: u64) -> Result<PathSample> {
    simulate_path_with(spec, x0, t_end, dt, seed, LocalTimeMethod::Exact)
}

pub fn simulate_path_with(
    spec: &DiffusionSpec,
    x0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    method: LocalTimeMethod,
) -> Result<PathSample> {
    let s = BesselSampler::for_spec(spec)?;
    if !(x0 >= 0.0) {
        return Err(Error::Domain(format!("x0 must be >= 0, got {x0}")));
    }
    if t_end == 0.0 {
        return Ok(PathSample {
            times: vec![0.0],
            positions: vec![x0],
            local_time: vec![0.0],
            hit_zero_at: (x0 == 0.0).then_some(0),
        });
    }
    check_grid(t_end, dt)?;
    let mut times = vec![0.0];
    let mut t = 0.0;
    while t_end - t > 1e-9 * dt {
        t = (t + dt).min(t_end);
        if t_end - t < 1e-9 * dt {
            t = t_end;
        }
        times.push(t);
    }
    let mut rng = path_rng(seed, 0);
    match method {
        LocalTimeMethod::Exact => Ok(exact_path(&s, x0, times, &mut rng)),
        LocalTimeMethod::Occupation { epsilon } => {
            let eps = epsilon.unwrap_or(dt.sqrt());
            if !(eps > 0.0) || eps * eps < dt * (1.0 - 1e-12) {
                return Err(Error::Domain(format!(
                    "local-time band {eps} is finer than the time step allows (need eps^2 >= dt = {dt})"
                )));
            }
            Ok(occupation_path(&s, x0, times, eps, &mut rng))
        }
    }
}

fn exact_path<R: Rng>(s: &BesselSampler, x0: f64, times: Vec<f64>, rng: &mut R) -> PathSample {
    let mut positions = vec![x0];
    let mut local_time = vec![0.0];
    let mut hit = (x0 == 0.0).then_some(0);
    for i in 1..times.len() {
        let st = s.advance(positions[i - 1], times[i] - times[i - 1], rng);
        if hit.is_none() && st.first_zero.is_some() {
            hit = Some(i);
        }
        positions.push(st.x);
        local_time.push(local_time[i - 1] + st.dl);
    }
    PathSample { times, positions, local_time, hit_zero_at: hit }
}

fn occupation_path<R: Rng>(s: &BesselSampler, x0: f64, times: Vec<f64>, eps: f64, rng: &mut R) -> PathSample {
    let alpha = s.alpha();
    let norm = bessel::cumulative_speed(alpha, eps);
    let brownian = (alpha - 0.5).abs() < 1e-15;
    let mut w = x0;
    let mut positions = vec![x0];
    let mut local_time = vec![0.0];
    let mut hit = (x0 < eps).then_some(0);
    for i in 1..times.len() {
        let h = times[i] - times[i - 1];
        let prev = positions[i - 1];
        let next = if brownian {
            w += h.sqrt() * rng.sample::<f64, _>(StandardNormal);
            w.abs()
        } else {
            s.reflected_step(prev, h, rng)
        };
        let dl = if prev < eps { h / norm } else { 0.0 };
        if hit.is_none() && next < eps {
            hit = Some(i);
        }
        positions.push(next);
        local_time.push(local_time[i - 1] + dl);
    }
    PathSample { times, positions, local_time, hit_zero_at: hit }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{bessel_spec, brownian};

    #[test]
    fn trivial_path() {
        let p = simulate_path(&brownian(), 0.0, 0.0, 0.1, 1).unwrap();
        assert_eq!(p.positions, vec![0.0]);
        assert_eq!(p.local_time, vec![0.0]);
    }

    #[test]
    fn grid_shape_and_monotone_local_time() {
        let spec = bessel_spec(1.5).unwrap();
        let p = simulate_path(&spec, 0.3, 1.05, 0.1, 9).unwrap();
        assert_eq!(p.times.len(), 12);
        assert!((p.times[11] - 1.05).abs() < 1e-15);
        assert!(p.positions.iter().all(|&x| x >= 0.0));
        assert!(p.local_time.windows(2).all(|w| w[1] >= w[0]));
        for i in 1..p.times.len() {
            if p.local_time[i] > p.local_time[i - 1] {
                assert!(p.hit_zero_at.unwrap() <= i);
            }
        }
    }

    #[test]
    fn band_must_resolve_step() {
        let r = simulate_path_with(&brownian(), 0.0, 1.0, 0.01, 1, LocalTimeMethod::Occupation { epsilon: Some(0.01) });
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn general_specs_are_rejected() {
        let spec = DiffusionSpec::custom("c", |x| x, |_| 2.0).unwrap();
        assert!(matches!(simulate_path(&spec, 0.0, 1.0, 0.1, 1), Err(Error::Unsupported(_))));
    }
}

//! Exact samplers for Bessel presets: the stable inverse local time, hitting times, and the
//! joint law of `(X_r, L_r)` after a time step `r`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Beta, Distribution, Exp1, Gamma, Poisson};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::bessel;
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::special::bessel_i_scaled;

/// Uniform on the open interval `(0, 1)`.
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Outcome of advancing the process by one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// Position at the end of the step.
    pub x: f64,
    /// Local time accumulated during the step.
    pub dl: f64,
    /// Offset of the first zero within the step, if 0 was visited.
    pub first_zero: Option<f64>,
    /// Offset of the last zero within the step, if 0 was visited.
    pub last_zero: Option<f64>,
}

/// Samplers for the Bessel process of index `alpha` (Brownian motion at `alpha = 1/2`).
#[derive(Debug, Clone)]
pub struct BesselSampler {
    alpha: f64,
    kappa: f64,
    /// `kappa^(1/alpha)`, the scale of `tau_1`.
    tau_scale: f64,
    ln_a_min: f64,
    hit_gamma: Gamma<f64>,
    tilt_gamma: Gamma<f64>,
    last_zero: Beta<f64>,
    dim_half: f64,
}

impl BesselSampler {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let kappa = bessel::exponent_constant(alpha);
        let ln_a_min = (alpha * alpha.ln() + (1.0 - alpha) * (1.0 - alpha).ln()) / (1.0 - alpha);
        Ok(Self {
            alpha,
            kappa,
            tau_scale: kappa.powf(1.0 / alpha),
            ln_a_min,
            hit_gamma: Gamma::new(alpha, 1.0).unwrap(),
            tilt_gamma: Gamma::new(2.0 - alpha, 1.0).unwrap(),
            last_zero: Beta::new(alpha, 1.0 - alpha).unwrap(),
            dim_half: 1.0 - alpha,
        })
    }

    pub fn for_spec(spec: &DiffusionSpec) -> Result<Self> {
        Self::new(spec.require_alpha("exact simulation")?)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `ln A(u)` of Kanter's representation, increasing from `ln A(0+)` to `inf` on `(0, pi)`.
    fn ln_kanter(&self, u: f64) -> f64 {
        let a = self.alpha;
        (a * (a * u).sin().ln() + (1.0 - a) * ((1.0 - a) * u).sin().ln() - u.sin().ln()) / (1.0 - a)
    }

    fn kanter_inverse(&self, ln_v: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.ln_kanter(mid) < ln_v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Positive stable variable with `E e^{-lambda S} = e^{-lambda^alpha}`.
    pub fn stable<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u = PI * open01(rng);
        let e: f64 = rng.sample(Exp1);
        ((1.0 - self.alpha) / self.alpha * (self.ln_kanter(u) - e.ln())).exp()
    }

    /// `tau_level`, with `E e^{-lambda tau} = e^{-level kappa lambda^alpha}`.
    pub fn tau<R: Rng + ?Sized>(&self, level: f64, rng: &mut R) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        (level * self.kappa).powf(1.0 / self.alpha) * self.stable(rng)
    }

    /// `P(tau_level >= s)` given the exponential input `e` of the Kanter representation; the
    /// uniform input is integrated out exactly.
    pub fn tau_tail_given(&self, level: f64, s: f64, e: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        if level <= 0.0 {
            return 0.0;
        }
        let ratio = s / (level * self.kappa).powf(1.0 / self.alpha);
        let ln_v = e.ln() + self.alpha / (1.0 - self.alpha) * ratio.ln();
        if ln_v <= self.ln_a_min {
            return 1.0;
        }
        1.0 - self.kanter_inverse(ln_v) / PI
    }

    /// First hitting time of 0 from `x`, distributed as `x^2 / (2 G)` with `G ~ Gamma(alpha)`.
    pub fn hitting_time<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        x * x / (2.0 * self.hit_gamma.sample(rng))
    }

    /// Hitting time from `x` conditioned to be at most `r`.
    fn hitting_time_before<R: Rng + ?Sized>(&self, x: f64, r: f64, rng: &mut R) -> f64 {
        let c = x * x / (2.0 * r);
        let g = if c < 1.0 {
            loop {
                let g = self.hit_gamma.sample(rng);
                if g >= c {
                    break g;
                }
            }
        } else {
            // c + Exp(1) proposal, accepted with probability (g/c)^(alpha-1)
            loop {
                let g = c + rng.sample::<f64, _>(Exp1);
                if open01(rng) <= (g / c).powf(self.alpha - 1.0) {
                    break g;
                }
            }
        };
        (x * x / (2.0 * g)).min(r)
    }

    /// `tau_1`-scaled variable `W` with density proportional to `w^-alpha` times the density of
    /// `kappa^(1/alpha) S`.
    pub fn tilted<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        let u = loop {
            let u = PI * open01(rng);
            if open01(rng).ln() <= (1.0 - a) * (self.ln_a_min - self.ln_kanter(u)) {
                break u;
            }
        };
        let e = self.tilt_gamma.sample(rng);
        self.tau_scale * ((1.0 - a) / a * (self.ln_kanter(u) - e.ln())).exp()
    }

    /// Squared-Bessel transition of dimension `2 - 2 alpha` from `x^2` over `r`, returned as a
    /// position. This is the reflected process.
    pub fn reflected_step<R: Rng + ?Sized>(&self, x: f64, r: f64, rng: &mut R) -> f64 {
        let mean = x * x / (2.0 * r);
        let k = if mean > 0.0 {
            Poisson::new(mean).unwrap().sample(rng)
        } else {
            0.0
        };
        let z = 2.0 * r * Gamma::new(self.dim_half + k, 1.0).unwrap().sample(rng);
        z.sqrt()
    }

    /// Position after `r` from `x > 0` conditioned on not hitting 0.
    pub fn surviving_step<R: Rng + ?Sized>(&self, x: f64, r: f64, rng: &mut R) -> f64 {
        loop {
            let y = self.reflected_step(x, r, rng);
            let z = x * y / r;
            // killed / reflected density ratio I_alpha(z) / I_-alpha(z)
            let accept = if z > 700.0 {
                1.0
            } else if z < 1e-300 {
                0.0
            } else {
                bessel_i_scaled(self.alpha, z) / bessel_i_scaled(-self.alpha, z)
            };
            if open01(rng) <= accept {
                return y;
            }
        }
    }

    /// Position at age `v` of an excursion known to last at least `length`.
    pub fn meander_position<R: Rng + ?Sized>(&self, v: f64, length: f64, rng: &mut R) -> f64 {
        let rest = length - v;
        loop {
            let y = (2.0 * v * rng.sample::<f64, _>(Exp1)).sqrt();
            if rest <= 0.0 || open01(rng) <= gamma_lr(self.alpha, y * y / (2.0 * rest)) {
                return y;
            }
        }
    }

    /// `(X_r, L_r)` under `P_0`: last zero `g = r Beta(alpha, 1 - alpha)`, `L_r = (g / W)^alpha`
    /// with `W` tilted, and a Rayleigh position at age `r - g`.
    pub fn from_zero<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> Step {
        if r <= 0.0 {
            return Step { x: 0.0, dl: 0.0, first_zero: Some(0.0), last_zero: Some(0.0) };
        }
        let g = r * self.last_zero.sample(rng);
        self.finish_from_zero(r, g, rng)
    }

    fn finish_from_zero<R: Rng + ?Sized>(&self, r: f64, g: f64, rng: &mut R) -> Step {
        let w = self.tilted(rng);
        let dl = (g / w).powf(self.alpha);
        let x = (2.0 * (r - g) * rng.sample::<f64, _>(Exp1)).sqrt();
        Step { x, dl, first_zero: Some(0.0), last_zero: Some(g) }
    }

    /// `(X_r, L_r)` under `P_0` conditioned on `L_r < k`, together with `P_0(L_r < k | W)`,
    /// the factor that keeps expectations unbiased.
    pub fn from_zero_below<R: Rng + ?Sized>(&self, r: f64, k: f64, rng: &mut R) -> (Step, f64) {
        let a = self.alpha;
        let w = self.tilted(rng);
        // L < k  <=>  g < k^(1/alpha) W
        let cap = (k.powf(1.0 / a) * w / r).min(1.0);
        let weight = if cap >= 1.0 { 1.0 } else { beta_reg(a, 1.0 - a, cap) };
        let frac = if cap >= 0.5 {
            loop {
                let b = self.last_zero.sample(rng);
                if b < cap {
                    break b;
                }
            }
        } else {
            // cap * V^(1/alpha) proposal, accepted with ((1 - cap) / (1 - b))^alpha
            loop {
                let b = cap * open01(rng).powf(1.0 / a);
                if open01(rng) <= ((1.0 - cap) / (1.0 - b)).powf(a) {
                    break b;
                }
            }
        };
        let g = r * frac;
        let dl = (g / w).powf(a);
        let x = (2.0 * (r - g) * rng.sample::<f64, _>(Exp1)).sqrt();
        (Step { x, dl, first_zero: Some(0.0), last_zero: Some(g) }, weight)
    }

    /// Exact joint law of the position and the local-time increment after `r` from `x`.
    pub fn advance<R: Rng + ?Sized>(&self, x: f64, r: f64, rng: &mut R) -> Step {
        if r <= 0.0 {
            return Step { x, dl: 0.0, first_zero: None, last_zero: None };
        }
        if x <= 0.0 {
            return self.from_zero(r, rng);
        }
        let hit = gamma_ur(self.alpha, x * x / (2.0 * r));
        if open01(rng) < hit {
            let h = self.hitting_time_before(x, r, rng);
            let rest = self.from_zero(r - h, rng);
            Step {
                x: rest.x,
                dl: rest.dl,
                first_zero: Some(h),
                last_zero: rest.last_zero.map(|g| h + g),
            }
        } else {
            Step { x: self.surviving_step(x, r, rng), dl: 0.0, first_zero: None, last_zero: None }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mean<F: FnMut(&mut ChaCha8Rng) -> f64>(n: usize, mut f: F) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let v: Vec<f64> = (0..n).map(|_| f(&mut rng)).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        (m, (var / n as f64).sqrt())
    }

    #[test]
    fn stable_laplace_transform() {
        for alpha in [0.25, 0.5, 0.75] {
            let s = BesselSampler::new(alpha).unwrap();
            let (m, se) = mean(40_000, |r| (-s.stable(r)).exp());
            assert!((m - (-1.0f64).exp()).abs() < 4.0 * se, "{alpha}: {m} {se}");
        }
    }

    #[test]
    fn tau_tail_matches_sampling() {
        let s = BesselSampler::new(0.3).unwrap();
        let (level, t) = (0.7, 2.0);
        let (direct, se1) = mean(40_000, |r| (s.tau(level, r) >= t) as u8 as f64);
        let (cond, se2) = mean(40_000, |r| s.tau_tail_given(level, t, r.sample(Exp1)));
        assert!((direct - cond).abs() < 4.0 * (se1 * se1 + se2 * se2).sqrt());
    }

    #[test]
    fn brownian_tau_is_inverse_square_normal() {
        // tau_1 = 1/N^2, so P(tau_1 >= t) = P(|N| <= t^-1/2)
        let s = BesselSampler::new(0.5).unwrap();
        let t: f64 = 3.0;
        let exact = statrs::function::erf::erf((1.0 / t).sqrt() / 2f64.sqrt());
        let (m, se) = mean(40_000, |r| s.tau_tail_given(1.0, t, r.sample(Exp1)));
        assert!((m - exact).abs() < 4.0 * se);
    }

    #[test]
    fn local_time_mean_from_zero() {
        // E_0 L_r = int_0^r p(s; 0, 0) ds
        for alpha in [0.25, 0.5, 0.8] {
            let s = BesselSampler::new(alpha).unwrap();
            let r: f64 = 1.7;
            let exact = r.powf(alpha) / (alpha * 2f64.powf(1.0 - alpha) * statrs::function::gamma::gamma(1.0 - alpha));
            let (m, se) = mean(40_000, |g| s.from_zero(r, g).dl);
            assert!((m - exact).abs() < 4.0 * se, "{alpha}: {m} {exact} {se}");
            let (m, se) = mean(40_000, |g| bessel::scale(alpha, s.from_zero(r, g).x));
            assert!((m - exact).abs() < 4.0 * se, "{alpha}: {m} {exact} {se}");
        }
    }

    #[test]
    fn advance_preserves_scale_martingale() {
        // E_x[S(X_r) - L_r] = S(x)
        for alpha in [0.25, 0.7] {
            let s = BesselSampler::new(alpha).unwrap();
            let x = 0.8;
            let (m, se) = mean(40_000, |g| {
                let st = s.advance(x, 0.9, g);
                bessel::scale(alpha, st.x) - st.dl
            });
            assert!((m - bessel::scale(alpha, x)).abs() < 4.0 * se, "{alpha}: {m} {se}");
        }
    }

    #[test]
    fn surviving_probability() {
        let s = BesselSampler::new(0.25).unwrap();
        let (x, r) = (1.0, 2.0);
        let (m, se) = mean(40_000, |g| s.advance(x, r, g).first_zero.is_none() as u8 as f64);
        assert!((m - bessel::hitting_tail(0.25, x, r)).abs() < 4.0 * se);
    }

    #[test]
    fn conditioned_start_is_unbiased() {
        let s = BesselSampler::new(0.5).unwrap();
        let (r, k) = (10.0, 1.0);
        let (plain, se1) = mean(40_000, |g| {
            let st = s.from_zero(r, g);
            (st.dl < k) as u8 as f64 * (1.0 - st.dl)
        });
        let (cond, se2) = mean(40_000, |g| {
            let (st, w) = s.from_zero_below(r, k, g);
            assert!(st.dl < k);
            w * (1.0 - st.dl)
        });
        assert!((plain - cond).abs() < 4.0 * (se1 * se1 + se2 * se2).sqrt());
    }
}

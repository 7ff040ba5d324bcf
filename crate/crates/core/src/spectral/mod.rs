//! Spectral (Krein) representations of transition densities, hitting times and the Lévy
//! measure of the inverse local time.
//!
//! All quantities are Laplace-type integrals `int e^{-gamma t} g(gamma) rho(gamma) dgamma` of
//! eigenfunction products against a principal spectral measure `rho`. For Bessel presets the
//! eigenfunctions default to their closed forms; otherwise they are summed from the
//! coefficient recursion in [`eigen`], which limits custom specs to moderate `gamma B(x)`.

pub mod eigen;
pub mod measure;

use std::cell::Cell;

use serde::Serialize;
use statrs::function::gamma::gamma;

use crate::bessel;
use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::quad::{Estimate, Quadrature};

pub use eigen::{bound_base, eigen_coefficients, eigen_value, EigenKind, EigenSeries};
pub use measure::{laplace_integral, MeasureKind, SpectralMeasure};

/// Smallest admissible time; the `e^{-gamma t}` damping is what tames the oscillation of the
/// eigenfunctions, so `t` must stay away from 0.
pub const T_MIN: f64 = 1e-6;

/// How eigenfunctions are evaluated inside spectral integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EigenMethod {
    /// Closed forms for presets, the coefficient recursion otherwise.
    Auto,
    ClosedForm,
    Series,
}

/// A diffusion together with its spectral measures.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    spec: DiffusionSpec,
    reflected: Option<SpectralMeasure>,
    killed: Option<SpectralMeasure>,
    method: EigenMethod,
    tol: f64,
}

enum EigenFn {
    Closed { alpha: f64, x: f64, kind: EigenKind },
    Series { series: EigenSeries, gamma_ok: f64 },
}

impl EigenFn {
    fn eval(&self, g: f64, overflow: &Cell<bool>) -> f64 {
        match self {
            EigenFn::Closed { alpha, x, kind } => match kind {
                EigenKind::A => bessel::eigen_a(*alpha, *x, g),
                EigenKind::C => bessel::eigen_c(*alpha, *x, g),
            },
            EigenFn::Series { series, gamma_ok } => {
                if g > *gamma_ok {
                    overflow.set(true);
                    0.0
                } else {
                    series.partial_sum(g)
                }
            }
        }
    }

    /// Rough bound on `|F(x; gamma)|`, only used to place the integration cutoff.
    fn bound(&self, g: f64) -> f64 {
        match self {
            EigenFn::Closed { alpha, x, kind } => match kind {
                EigenKind::C => bessel::scale(*alpha, *x),
                EigenKind::A => {
                    if *alpha <= 0.5 {
                        1.0
                    } else {
                        let z = x * (2.0 * g).sqrt();
                        1.0 + gamma(1.0 - alpha) * (1.0 + z).powf(alpha - 0.5)
                    }
                }
            },
            EigenFn::Series { series, .. } => series.leading * (1.0 + g).sqrt(),
        }
    }
}

impl SpectralModel {
    /// Closed-form spectral measures of a Bessel/Brownian preset.
    pub fn preset(spec: &DiffusionSpec) -> Result<SpectralModel> {
        let alpha = spec.require_alpha("preset spectral measures")?;
        Ok(SpectralModel {
            spec: spec.clone(),
            reflected: Some(SpectralMeasure::bessel(alpha)?),
            killed: Some(SpectralMeasure::bessel_hat(alpha)?),
            method: EigenMethod::Auto,
            tol: 1e-9,
        })
    }

    /// A spec with user-supplied measures; either may be absent, disabling the operations
    /// that need it.
    pub fn new(spec: &DiffusionSpec, reflected: Option<SpectralMeasure>, killed: Option<SpectralMeasure>) -> Result<SpectralModel> {
        if let Some(m) = &reflected {
            if m.kind() != MeasureKind::Reflected {
                return Err(Error::Validation(format!("{} is not a reflected-process measure", m.label())));
            }
        }
        if let Some(m) = &killed {
            if m.kind() != MeasureKind::Killed {
                return Err(Error::Validation(format!("{} is not a killed-process measure", m.label())));
            }
        }
        Ok(SpectralModel {
            spec: spec.clone(),
            reflected,
            killed,
            method: EigenMethod::Auto,
            tol: 1e-9,
        })
    }

    pub fn with_method(mut self, method: EigenMethod) -> Self {
        self.method = method;
        self
    }

    /// Absolute tolerance of the spectral integrals.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn killed(&self) -> Result<&SpectralMeasure> {
        self.killed.as_ref().ok_or_else(|| {
            Error::Unsupported("no killed-process spectral measure attached".into())
        })
    }

    fn reflected(&self) -> Result<&SpectralMeasure> {
        self.reflected.as_ref().ok_or_else(|| {
            Error::Unsupported("no reflected-process spectral measure attached".into())
        })
    }

    fn check_t(t: f64) -> Result<()> {
        if !(t >= T_MIN) {
            return Err(Error::Domain(format!("t must be >= {T_MIN:e}, got {t}")));
        }
        Ok(())
    }

    fn check_x(x: f64) -> Result<()> {
        if !(x >= 0.0 && x.is_finite()) {
            return Err(Error::Domain(format!("state must be a finite x >= 0, got {x}")));
        }
        Ok(())
    }

    fn use_closed_form(&self) -> Result<Option<f64>> {
        match (self.method, self.spec.alpha()) {
            (EigenMethod::Series, _) => Ok(None),
            (_, Some(a)) => Ok(Some(a)),
            (EigenMethod::ClosedForm, None) => Err(Error::Unsupported(
                "closed-form eigenfunctions need a Bessel/Brownian preset".into(),
            )),
            (EigenMethod::Auto, None) => Ok(None),
        }
    }

    /// Prepares an eigenfunction good for `gamma` up to well past the damping cutoff at `t`.
    fn eigenfunction(&self, x: f64, kind: EigenKind, t: f64) -> Result<EigenFn> {
        if let Some(alpha) = self.use_closed_form()? {
            return Ok(EigenFn::Closed { alpha, x, kind });
        }
        // Series: cover gamma up to where e^{-gamma t} is far below the tolerance.
        let reach = (-(self.tol * 1e-3).ln() + 10.0) / t * 4.0;
        let probe = eigen_coefficients(&self.spec, x, kind, 0)?;
        let eig_tol = self.tol * 1e-3;
        let n = probe.required_terms(reach, eig_tol).min(400);
        let series = eigen_coefficients(&self.spec, x, kind, n)?;
        // Largest gamma where both truncation and cancellation stay below eig_tol.
        let mut lo = 0.0;
        let mut hi = reach;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if series.evaluate(mid).abs_err < eig_tol {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(EigenFn::Series {
            series,
            gamma_ok: lo,
        })
    }

    fn integrate<F>(&self, measure: &SpectralMeasure, g: F, g_bound: impl Fn(f64) -> f64, t: f64, overflow: &Cell<bool>) -> Result<Estimate>
    where
        F: Fn(f64) -> f64,
    {
        let r = measure.damped_integral(g, g_bound, t, self.tol)?;
        if overflow.get() {
            return Err(Error::Tolerance {
                what: format!(
                    "eigenfunction series cannot reach the spectral cutoff at t={t}; use larger t or a preset"
                ),
                estimate: f64::INFINITY,
                requested: self.tol,
            });
        }
        Ok(r)
    }

    /// `A(x; gamma)` or `C(x; gamma)` with absolute error below `tol`.
    pub fn eigen(&self, x: f64, g: f64, kind: EigenKind, tol: f64) -> Result<Estimate> {
        Self::check_x(x)?;
        if let Some(alpha) = self.use_closed_form()? {
            let v = match kind {
                EigenKind::A => bessel::eigen_a(alpha, x, g),
                EigenKind::C => bessel::eigen_c(alpha, x, g),
            };
            return Ok(Estimate::new(v, 1e-13 * (1.0 + v.abs())));
        }
        let probe = eigen_coefficients(&self.spec, x, kind, 0)?;
        let n = probe.required_terms(g, 0.5 * tol).min(400);
        let series = eigen_coefficients(&self.spec, x, kind, n)?;
        eigen_value(&series, g, tol)
    }

    /// Transition density w.r.t. `m` of the reflected (`killed = false`) or killed process.
    pub fn transition_density(&self, x: f64, y: f64, t: f64, killed: bool) -> Result<Estimate> {
        Self::check_t(t)?;
        Self::check_x(x)?;
        Self::check_x(y)?;
        let (measure, kind) = if killed {
            (self.killed()?, EigenKind::C)
        } else {
            (self.reflected()?, EigenKind::A)
        };
        let ex = self.eigenfunction(x, kind, t)?;
        let ey = self.eigenfunction(y, kind, t)?;
        let overflow = Cell::new(false);
        self.integrate(
            measure,
            |g| ex.eval(g, &overflow) * ey.eval(g, &overflow),
            |g| ex.bound(g) * ey.bound(g),
            t,
            &overflow,
        )
    }

    /// Density of `H_0` under `P_x`.
    pub fn hitting_density(&self, x: f64, t: f64) -> Result<Estimate> {
        Self::check_t(t)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be > 0, got {x}")));
        }
        let ex = self.eigenfunction(x, EigenKind::C, t)?;
        let overflow = Cell::new(false);
        self.integrate(self.killed()?, |g| ex.eval(g, &overflow), |g| ex.bound(g), t, &overflow)
    }

    /// Lévy density of the inverse local time.
    pub fn levy_density(&self, t: f64) -> Result<Estimate> {
        Self::check_t(t)?;
        let never = Cell::new(false);
        self.integrate(self.killed()?, |_| 1.0, |_| 1.0, t, &never)
    }

    /// `nu((t, inf))`.
    pub fn levy_tail(&self, t: f64) -> Result<Estimate> {
        Self::check_t(t)?;
        let never = Cell::new(false);
        self.integrate(self.killed()?, |g| 1.0 / g, |g| 1.0 / g.max(1e-300), t, &never)
    }

    /// `P_x(H_0 > t)`.
    pub fn hitting_tail(&self, x: f64, t: f64) -> Result<Estimate> {
        Self::check_t(t)?;
        if !(x > 0.0) {
            return Err(Error::Domain(format!("x must be > 0, got {x}")));
        }
        let ex = self.eigenfunction(x, EigenKind::C, t)?;
        let overflow = Cell::new(false);
        let r = self.integrate(
            self.killed()?,
            |g| ex.eval(g, &overflow) / g,
            |g| ex.bound(g) / g.max(1e-300),
            t,
            &overflow,
        )?;
        if r.value < -self.tol || r.value > 1.0 + self.tol {
            return Err(Error::Consistency(format!(
                "P_x(H_0 > t) evaluated to {} outside [0, 1]",
                r.value
            )));
        }
        Ok(r)
    }

    /// `R_lambda(0, 0)` from the spectral form of the Lévy exponent,
    /// `int lambda / (gamma (gamma + lambda)) Delta-hat(dgamma)`.
    pub fn resolvent_at_zero(&self, lambda: f64) -> Result<f64> {
        if !(lambda > 0.0) {
            return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
        }
        let m = self.killed()?;
        let q = Quadrature::with_tolerances(1e-12, 1e-10);
        let f = |g: f64| m.density(g) * lambda / (g * (g + lambda));
        let e = if m.gamma_cutoff_hint().is_finite() {
            q.integrate_from_zero(f, m.gamma_cutoff_hint())?
        } else {
            q.integrate_half_line(f, lambda)?
        };
        Ok(1.0 / e.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{bessel_spec, brownian};
    use std::f64::consts::PI;

    #[test]
    fn brownian_closed_forms() {
        let model = SpectralModel::preset(&brownian()).unwrap();
        let p = model.transition_density(0.5, 0.7, 1.0, false).unwrap().value;
        let want = ((-0.02f64).exp() + (-0.72f64).exp()) / (2.0 * (2.0 * PI).sqrt());
        assert!((p - want).abs() < 1e-8, "{p} vs {want}");
        let f = model.hitting_density(1.0, 1.0).unwrap().value;
        assert!((f - (-0.5f64).exp() / (2.0 * PI).sqrt()).abs() < 1e-8);
        let nu = model.levy_density(1.0).unwrap().value;
        assert!((nu - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-9);
        // P_1(H_0 > 1) = P(|N| < 1)
        let tail = model.hitting_tail(1.0, 1.0).unwrap().value;
        assert!((tail - statrs::function::erf::erf(1.0 / 2f64.sqrt())).abs() < 1e-8);
    }

    #[test]
    fn killed_below_reflected() {
        let model = SpectralModel::preset(&brownian()).unwrap();
        for x in [0.2, 1.0, 2.0] {
            let p = model.transition_density(x, x, 1.0, false).unwrap().value;
            let ph = model.transition_density(x, x, 1.0, true).unwrap().value;
            assert!(ph < p);
        }
    }

    #[test]
    fn levy_tail_and_resolvent() {
        let spec = bessel_spec(1.5).unwrap();
        let model = SpectralModel::preset(&spec).unwrap();
        for t in [0.1, 10.0, 1e3] {
            let got = model.levy_tail(t).unwrap().value;
            assert!((got - bessel::levy_tail(0.25, t)).abs() < 1e-8, "t={t}");
        }
        let r = model.resolvent_at_zero(2.0).unwrap();
        assert!((1.0 / r - bessel::laplace_exponent(0.25, 2.0)).abs() < 1e-8);
    }

    #[test]
    fn small_t_is_rejected() {
        let model = SpectralModel::preset(&brownian()).unwrap();
        assert!(matches!(model.levy_density(1e-7), Err(Error::Domain(_))));
        assert!(matches!(model.levy_density(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn series_route_matches_closed_form() {
        let spec = bessel_spec(1.5).unwrap();
        let closed = SpectralModel::preset(&spec).unwrap();
        let series = closed.clone().with_method(EigenMethod::Series).with_tol(1e-8);
        let a = closed.hitting_density(0.8, 2.0).unwrap().value;
        let b = series.hitting_density(0.8, 2.0).unwrap().value;
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        let a = closed.transition_density(0.5, 0.9, 3.0, true).unwrap().value;
        let b = series.transition_density(0.5, 0.9, 3.0, true).unwrap().value;
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

//! Spectral measures given by densities, and the damped integrals `int e^{-gamma t} g(gamma) rho(gamma) dgamma`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bessel;
use crate::diffusion::{parse_json, Fn1};
use crate::error::{Error, Result};
use crate::quad::{Estimate, Quadrature};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    /// `Delta`, diagonalizing the reflected semigroup with the `A` eigenfunctions.
    Reflected,
    /// `Delta-hat`, diagonalizing the killed semigroup with the `C` eigenfunctions.
    Killed,
}

/// Growth envelope `coef * gamma^power` used to pick the integration cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Envelope {
    coef: f64,
    power: f64,
}

/// Density of a principal spectral measure on `[0, inf)`.
#[derive(Clone)]
pub struct SpectralMeasure {
    kind: MeasureKind,
    density: Fn1,
    envelope: Envelope,
    /// Beyond this point the density is treated as 0 (tables) or only damped (presets).
    gamma_cutoff_hint: f64,
    label: String,
}

impl fmt::Debug for SpectralMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralMeasure")
            .field("kind", &self.kind)
            .field("label", &self.label)
            .field("gamma_cutoff_hint", &self.gamma_cutoff_hint)
            .finish()
    }
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum MeasureConfig {
    BesselHat {
        alpha: f64,
    },
    Bessel {
        alpha: f64,
    },
    Table {
        gammas: Vec<f64>,
        densities: Vec<f64>,
        #[serde(default = "default_table_kind")]
        measure: MeasureKind,
    },
}

fn default_table_kind() -> MeasureKind {
    MeasureKind::Killed
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

impl SpectralMeasure {
    /// `Delta-hat` of the Bessel process with index `alpha`.
    pub fn bessel_hat(alpha: f64) -> Result<SpectralMeasure> {
        check_alpha(alpha)?;
        let coef = bessel::killed_spectral_density(alpha, 1.0);
        let m = SpectralMeasure {
            kind: MeasureKind::Killed,
            density: Arc::new(move |g| bessel::killed_spectral_density(alpha, g)),
            envelope: Envelope { coef, power: alpha },
            gamma_cutoff_hint: f64::INFINITY,
            label: format!("bessel_hat(alpha={alpha})"),
        };
        m.check_integrability()?;
        Ok(m)
    }

    /// `Delta` of the Bessel process with index `alpha`.
    pub fn bessel(alpha: f64) -> Result<SpectralMeasure> {
        check_alpha(alpha)?;
        let coef = bessel::spectral_density(alpha, 1.0);
        let m = SpectralMeasure {
            kind: MeasureKind::Reflected,
            density: Arc::new(move |g| bessel::spectral_density(alpha, g)),
            envelope: Envelope {
                coef,
                power: -alpha,
            },
            gamma_cutoff_hint: f64::INFINITY,
            label: format!("bessel(alpha={alpha})"),
        };
        m.check_integrability()?;
        Ok(m)
    }

    /// Tabulated density, log-log interpolated between the given points and 0 outside them.
    pub fn table(kind: MeasureKind, gammas: Vec<f64>, densities: Vec<f64>) -> Result<SpectralMeasure> {
        if gammas.len() != densities.len() || gammas.len() < 2 {
            return Err(Error::Validation(
                "spectral table needs at least two (gamma, density) pairs of equal length".into(),
            ));
        }
        if gammas.windows(2).any(|w| !(w[1] > w[0])) || !(gammas[0] > 0.0) {
            return Err(Error::Validation(
                "table gammas must be positive and strictly increasing".into(),
            ));
        }
        if densities.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::Validation("table densities must be finite and >= 0".into()));
        }
        let gmax = *gammas.last().unwrap();
        let peak = densities.iter().cloned().fold(0.0, f64::max);
        let g = gammas.clone();
        let d = densities;
        let density = move |x: f64| -> f64 {
            if !(x >= g[0] && x <= gmax) {
                return 0.0;
            }
            let i = g.partition_point(|&v| v <= x).clamp(1, g.len() - 1);
            let (x0, x1, y0, y1) = (g[i - 1], g[i], d[i - 1], d[i]);
            if y0 > 0.0 && y1 > 0.0 {
                let w = (x / x0).ln() / (x1 / x0).ln();
                (y0.ln() + w * (y1.ln() - y0.ln())).exp()
            } else {
                y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            }
        };
        let m = SpectralMeasure {
            kind,
            density: Arc::new(density),
            envelope: Envelope {
                coef: peak,
                power: 0.0,
            },
            gamma_cutoff_hint: gmax,
            label: format!("table({} points)", gammas.len()),
        };
        m.check_integrability()?;
        Ok(m)
    }

    /// A custom density with a user-supplied envelope `coef * gamma^power` and cutoff hint.
    pub fn from_fn<F>(kind: MeasureKind, density: F, envelope_coef: f64, envelope_power: f64, gamma_cutoff_hint: f64) -> Result<SpectralMeasure>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let m = SpectralMeasure {
            kind,
            density: Arc::new(density),
            envelope: Envelope {
                coef: envelope_coef,
                power: envelope_power,
            },
            gamma_cutoff_hint,
            label: "custom".into(),
        };
        m.check_integrability()?;
        Ok(m)
    }

    pub fn from_json(text: &str) -> Result<SpectralMeasure> {
        let config: MeasureConfig = parse_json(text)?;
        match config {
            MeasureConfig::BesselHat { alpha } => Self::bessel_hat(alpha),
            MeasureConfig::Bessel { alpha } => Self::bessel(alpha),
            MeasureConfig::Table {
                gammas,
                densities,
                measure,
            } => Self::table(measure, gammas, densities),
        }
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn density(&self, gamma: f64) -> f64 {
        (self.density)(gamma)
    }

    pub fn gamma_cutoff_hint(&self) -> f64 {
        self.gamma_cutoff_hint
    }

    /// Numerical check that `int rho/(gamma+1)` (reflected) or `int rho/(gamma(gamma+1))`
    /// (killed) is finite.
    fn check_integrability(&self) -> Result<()> {
        let q = Quadrature::with_tolerances(1e-8, 1e-6);
        let kind = self.kind;
        let f = |g: f64| {
            let w = match kind {
                MeasureKind::Reflected => 1.0 / (g + 1.0),
                MeasureKind::Killed => 1.0 / (g * (g + 1.0)),
            };
            self.density(g) * w
        };
        let result = if self.gamma_cutoff_hint.is_finite() {
            q.integrate_from_zero(f, self.gamma_cutoff_hint)
        } else {
            q.integrate_half_line(f, 1.0)
        };
        match result {
            Ok(e) if e.value.is_finite() => Ok(()),
            Ok(_) | Err(_) => Err(Error::Integrability(format!(
                "spectral measure {} fails the integrability condition",
                self.label
            ))),
        }
    }

    /// `e^{-gamma t} * rho(gamma) * weight_bound(gamma)` envelope of the integrand at `gamma`.
    fn envelope_at(&self, gamma: f64) -> f64 {
        self.envelope.coef * gamma.powf(self.envelope.power)
    }

    /// `int_0^inf e^{-gamma t} g(gamma) rho(gamma) dgamma` with absolute tolerance `tol`.
    ///
    /// `g_bound(gamma)` must bound `|g(gamma)|` for large `gamma`; it only steers the cutoff,
    /// which is then confirmed by integrating over `[G, 2G]`.
    pub fn damped_integral<F, B>(&self, g: F, g_bound: B, t: f64, tol: f64) -> Result<Estimate>
    where
        F: Fn(f64) -> f64,
        B: Fn(f64) -> f64,
    {
        let integrand = |gamma: f64| {
            if gamma <= 0.0 {
                return 0.0;
            }
            (-gamma * t).exp() * g(gamma) * self.density(gamma)
        };
        let bound = |gamma: f64| self.envelope_at(gamma) * g_bound(gamma);
        laplace_integral(integrand, bound, t, self.gamma_cutoff_hint, tol)
    }
}

/// Shared engine behind the spectral integrals: `int_0^inf f(gamma) dgamma` where `f` already
/// contains the factor `e^{-gamma t}`, `bound` bounds `|f| e^{gamma t}`, and `cutoff` is a hard
/// upper limit of the support.
pub fn laplace_integral<F, B>(f: F, bound: B, t: f64, cutoff: f64, tol: f64) -> Result<Estimate>
where
    F: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be > 0, got {t}")));
    }
    let target = 0.1 * tol;
    let tail = |g: f64| (-g * t).exp() * bound(g) * (1.0 + g) / t;
    let mut gmax = (1.0 / t).max(1e-12);
    while tail(gmax) > target || tail(2.0 * gmax) > tail(gmax) {
        gmax *= 2.0;
        if gmax > 1e12 {
            return Err(Error::Integrability(
                "spectral integrand is not damped before gamma = 1e12".into(),
            ));
        }
    }
    gmax = gmax.min(cutoff);
    let q = Quadrature {
        abs_tol: 0.25 * tol,
        rel_tol: 1e-10,
        max_intervals: 20_000,
    };
    let split = (1.0 / t).min(gmax);
    let head = q.integrate_from_zero(&f, split)?;
    let mut total = head + q.integrate(&f, split, gmax)?;
    // A-posteriori check that the discarded range is negligible.
    if gmax < cutoff {
        for _ in 0..12 {
            let upper = (2.0 * gmax).min(cutoff);
            let extra = q.integrate(&f, gmax, upper)?;
            total = total + extra;
            gmax = upper;
            if extra.value.abs() + extra.abs_err < target || gmax >= cutoff {
                break;
            }
        }
    }
    Ok(total)
}

//! Diffusions on `[0, inf)` given by a scale function and a speed density, with 0 reflecting.

use std::fmt;
use std::sync::Arc;

use serde::Deserialize;

use crate::bessel;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quad::{Estimate, Quadrature};

pub type Fn1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type Fn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type Fn3 = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Known closed forms attached to a diffusion. Argument order: `(t, x, y)`, `(x, t)`, `(t)`.
#[derive(Clone, Default)]
pub struct ClosedFormOracles {
    pub transition_density: Option<Fn3>,
    pub killed_density: Option<Fn3>,
    pub hitting_density: Option<Fn2>,
    pub levy_density: Option<Fn1>,
    pub levy_tail: Option<Fn1>,
}

impl fmt::Debug for ClosedFormOracles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ClosedFormOracles")
            .field("transition_density", &self.transition_density.is_some())
            .field("killed_density", &self.killed_density.is_some())
            .field("hitting_density", &self.hitting_density.is_some())
            .field("levy_density", &self.levy_density.is_some())
            .field("levy_tail", &self.levy_tail.is_some())
            .finish()
    }
}

impl ClosedFormOracles {
    fn bessel(alpha: f64) -> Self {
        Self {
            transition_density: Some(Arc::new(move |t, x, y| {
                bessel::transition_density(alpha, t, x, y)
            })),
            killed_density: Some(Arc::new(move |t, x, y| {
                bessel::killed_density(alpha, t, x, y)
            })),
            hitting_density: Some(Arc::new(move |x, t| bessel::hitting_density(alpha, x, t))),
            levy_density: Some(Arc::new(move |t| bessel::levy_density(alpha, t))),
            levy_tail: Some(Arc::new(move |t| bessel::levy_tail(alpha, t))),
        }
    }
}

/// A recurrent diffusion on `[0, inf)` in natural coordinates `(S, m)`.
#[derive(Clone)]
pub struct DiffusionSpec {
    name: String,
    scale: Fn1,
    speed_density: Fn1,
    alpha: Option<f64>,
    oracles: ClosedFormOracles,
    quadrature: Quadrature,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("alpha", &self.alpha)
            .field("oracles", &self.oracles)
            .finish()
    }
}

/// Probe point and threshold used by the recurrence heuristic.
pub const RECURRENCE_PROBE: f64 = 1e6;
pub const RECURRENCE_THRESHOLD: f64 = 1e2;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum SpecConfig {
    Bessel {
        delta: f64,
    },
    Brownian,
    Custom {
        scale: String,
        speed_density: String,
        #[serde(default)]
        recurrence_threshold: Option<f64>,
    },
}

/// Bessel process of dimension `delta in (0, 2)` reflected at 0.
pub fn bessel_spec(delta: f64) -> Result<DiffusionSpec> {
    if !(delta > 0.0 && delta < 2.0) {
        return Err(Error::Domain(format!(
            "Bessel dimension must lie in (0, 2), got {delta}"
        )));
    }
    let alpha = (2.0 - delta) / 2.0;
    Ok(DiffusionSpec {
        name: format!("bessel:{delta}"),
        scale: Arc::new(move |x| bessel::scale(alpha, x)),
        speed_density: Arc::new(move |x| bessel::speed_density(alpha, x)),
        alpha: Some(alpha),
        oracles: ClosedFormOracles::bessel(alpha),
        quadrature: Quadrature::default(),
    })
}

/// Reflected Brownian motion, the `delta = 1` member of the Bessel family.
pub fn brownian() -> DiffusionSpec {
    let mut spec = bessel_spec(1.0).expect("delta = 1 is admissible");
    spec.name = "brownian".into();
    spec
}

impl DiffusionSpec {
    /// Builds a spec from arbitrary scale and speed-density functions and validates it.
    pub fn custom<S, M>(name: &str, scale: S, speed_density: M) -> Result<DiffusionSpec>
    where
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        M: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let spec = DiffusionSpec {
            name: name.to_string(),
            scale: Arc::new(scale),
            speed_density: Arc::new(speed_density),
            alpha: None,
            oracles: ClosedFormOracles::default(),
            quadrature: Quadrature::default(),
        };
        spec.validate(RECURRENCE_THRESHOLD)?;
        Ok(spec)
    }

    /// Parses either a shorthand (`bessel:<delta>`, `brownian`) or a JSON object.
    pub fn parse(text: &str) -> Result<DiffusionSpec> {
        let trimmed = text.trim();
        if trimmed.starts_with('{') {
            return Self::from_json(trimmed);
        }
        if trimmed == "brownian" {
            return Ok(brownian());
        }
        if let Some(rest) = trimmed.strip_prefix("bessel:") {
            let delta: f64 = rest.trim().parse().map_err(|_| Error::Parse {
                line: 1,
                column: 8,
                message: format!("invalid Bessel dimension '{rest}'"),
            })?;
            return bessel_spec(delta);
        }
        Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("unrecognized diffusion '{trimmed}' (expected bessel:<delta>, brownian or JSON)"),
        })
    }

    pub fn from_json(text: &str) -> Result<DiffusionSpec> {
        let config: SpecConfig = parse_json(text)?;
        match config {
            SpecConfig::Bessel { delta } => bessel_spec(delta),
            SpecConfig::Brownian => Ok(brownian()),
            SpecConfig::Custom {
                scale,
                speed_density,
                recurrence_threshold,
            } => {
                let s = Expr::parse(&scale)?;
                let m = Expr::parse(&speed_density)?;
                let spec = DiffusionSpec {
                    name: format!("custom(S={}, m'={})", s.source(), m.source()),
                    scale: Arc::new(move |x| s.eval(x)),
                    speed_density: Arc::new(move |x| m.eval(x)),
                    alpha: None,
                    oracles: ClosedFormOracles::default(),
                    quadrature: Quadrature::default(),
                };
                spec.validate(recurrence_threshold.unwrap_or(RECURRENCE_THRESHOLD))?;
                Ok(spec)
            }
        }
    }

    /// Checks `S(0) = 0`, strict monotonicity of `S`, positivity of `m'` on a sampling grid,
    /// and the heuristic `S(1e6) > threshold` for recurrence.
    pub fn validate(&self, recurrence_threshold: f64) -> Result<()> {
        let s0 = self.scale(0.0);
        if !(s0.abs() <= 1e-12) {
            return Err(Error::Validation(format!("S(0) must be 0, got {s0}")));
        }
        let grid: Vec<f64> = (0..=240)
            .map(|i| 10f64.powf(-6.0 + 12.0 * i as f64 / 240.0))
            .collect();
        let mut prev = s0;
        for &x in &grid {
            let s = self.scale(x);
            if !(s.is_finite() && s > prev) {
                return Err(Error::Validation(format!(
                    "scale function is not strictly increasing near x = {x:e} (S = {s})"
                )));
            }
            prev = s;
            let m = self.speed_density(x);
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Validation(format!(
                    "speed density must be positive and finite, got m'({x:e}) = {m}"
                )));
            }
        }
        let probe = self.scale(RECURRENCE_PROBE);
        if !(probe > recurrence_threshold) {
            return Err(Error::Validation(format!(
                "S({RECURRENCE_PROBE:e}) = {probe:e} does not exceed {recurrence_threshold:e}; the diffusion looks transient"
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scale(&self, x: f64) -> f64 {
        (self.scale)(x)
    }

    pub fn speed_density(&self, x: f64) -> f64 {
        (self.speed_density)(x)
    }

    /// Bessel index when the spec is a preset.
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn require_alpha(&self, what: &str) -> Result<f64> {
        self.alpha.ok_or_else(|| {
            Error::Unsupported(format!("{what} is only available for Bessel/Brownian presets"))
        })
    }

    pub fn oracles(&self) -> &ClosedFormOracles {
        &self.oracles
    }

    pub fn with_oracles(mut self, oracles: ClosedFormOracles) -> Self {
        self.oracles = oracles;
        self
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }
}

/// Parses a JSON config. Errors that serde reports without a position (unknown fields,
/// missing tags) are pinned to the first mention of the offending name, else to the start.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| {
        let full = e.to_string();
        let message = match full.rfind(" at line ") {
            Some(i) if e.line() > 0 => full[..i].to_string(),
            _ => full.clone(),
        };
        let (line, column) = if e.line() > 0 { (e.line(), e.column()) } else { locate(text, &full) };
        Error::Parse { line, column, message }
    })
}

fn locate(text: &str, message: &str) -> (usize, usize) {
    let offset = message
        .split('`')
        .nth(1)
        .and_then(|name| text.find(&format!("\"{name}\"")))
        .or_else(|| text.find(|c: char| !c.is_whitespace()))
        .unwrap_or(0);
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// `M(x) = int_0^x m'(z) dz` by quadrature.
pub fn cumulative_speed(spec: &DiffusionSpec, x: f64) -> Result<f64> {
    cumulative_speed_estimate(spec, x).map(|e| e.value)
}

pub fn cumulative_speed_estimate(spec: &DiffusionSpec, x: f64) -> Result<Estimate> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(Estimate::zero());
    }
    let q = spec.quadrature();
    let f = |z: f64| spec.speed_density(z);
    let left = q.integrate_from_zero(f, 0.5 * x)?;
    let right = q.integrate(f, 0.5 * x, x)?;
    Ok(left + right)
}

/// `R_lambda(0, 0)`, the reciprocal of `int_0^inf (1 - e^{-lambda v}) nu'(v) dv`.
///
/// Needs a Lévy density; presets carry one, custom specs must attach it via oracles.
pub fn resolvent_at_zero(spec: &DiffusionSpec, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
    }
    let nu = spec.oracles().levy_density.clone().ok_or_else(|| {
        Error::Unsupported("resolvent_at_zero needs a Lévy density; attach one or use the spectral module".into())
    })?;
    let q = spec.quadrature();
    let exponent = q.integrate_half_line(|v| -(-lambda * v).exp_m1() * nu(v), 1.0 / lambda)?;
    if !(exponent.value > 0.0) {
        return Err(Error::DivisionGuard(format!(
            "Lévy exponent at lambda={lambda} is not positive ({})",
            exponent.value
        )));
    }
    Ok(1.0 / exponent.value)
}

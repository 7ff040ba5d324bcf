//! Command-line front end for levykit.
//!
//! Output is CSV (a `# levykit v<version>` comment, then a header row) or JSON with the same
//! columns as fields. Exit codes: 0 on success, 2 for invalid input, 3 when a numerical
//! tolerance is not met or a Monte Carlo check fails.

use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levykit::montecarlo::{self, LocalTimeMethod, DEFAULT_SEED};
use levykit::penalization::{self, WeightFunction};
use levykit::spectral::{eigen_coefficients, eigen_value, EigenKind, EigenMethod, SpectralMeasure, SpectralModel};
use levykit::subexp::{self, TailDistribution};
use levykit::{DiffusionSpec, Error};
use serde_json::{Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "levykit", version, about = "Spectral densities, local-time tails and penalization for diffusions on [0, inf)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Diffusion: `bessel:<delta>`, `brownian`, inline JSON, or `@file.json`.
    #[arg(long, global = true, default_value = "brownian")]
    pub spec: String,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads for Monte Carlo (default: LEVYKIT_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Absolute tolerance of spectral integrals and eigenfunction sums.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Monte Carlo paths.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Auto,
    Closed,
    Series,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition density w.r.t. the speed measure. Columns: t,x,y,value,abs_err.
    Density {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<f64>,
        /// Density of the process killed at 0.
        #[arg(long)]
        killed: bool,
        #[command(flatten)]
        measures: MeasureArgs,
    },
    /// Lévy density and tail of the inverse local time, hitting density and tail from x.
    /// Columns: t,x,nu_dot,nu_dot_err,nu_tail,nu_tail_err,hitting_density,hitting_density_err,hitting_tail,hitting_tail_err.
    Tails {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        x: f64,
        #[command(flatten)]
        measures: MeasureArgs,
    },
    /// Eigenfunctions C(x; gamma) and A(x; gamma). Columns: x,gamma,C,C_err,A,A_err.
    Eigen {
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<f64>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        /// Series length for the coefficient recursion (default: enough for --tol).
        #[arg(long)]
        terms: Option<usize>,
    },
    /// Convolution tail and subexponential ratio. Columns: x,tail,conv_tail,ratio.
    SubexpCheck {
        /// `pareto:<alpha>`, `exp:<rate>` or `csv:<path>` with rows x,tail.
        #[arg(long, default_value = "pareto:0.5")]
        family: String,
        /// Second law for the mixed ratio: the same forms, or `scaled:<c>` for min(1, c F̄).
        #[arg(long)]
        other: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "10,100,1000,10000")]
        x: Vec<f64>,
    },
    /// Monte Carlo estimators (Bessel and Brownian presets).
    #[command(subcommand)]
    Mc(McCommand),
    /// Penalization by a weight function of the local time.
    Penalize {
        /// `{"kind":"indicator","ell0":1}`, `{"kind":"triangular","k":2}`, `{"kind":"table","xs":[..],"hs":[..]}` or `@file.json`.
        #[arg(long, global = true, default_value = r#"{"kind":"indicator","ell0":1.0}"#)]
        weight: String,
        #[command(subcommand)]
        command: PenalizeCommand,
    },
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    /// Spectral measure of the reflected process as JSON (default: preset).
    #[arg(long)]
    pub measure: Option<String>,
    /// Spectral measure of the killed process as JSON (default: preset).
    #[arg(long)]
    pub killed_measure: Option<String>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
}

#[derive(Debug, Subcommand)]
pub enum McCommand {
    /// P_x(H_0 > t). Columns: x,t,mean,std_error,n,seed,asymptote,ratio.
    HittingTail {
        #[arg(long)]
        x: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// P_x(L_t <= ell). Columns: x,ell,t,mean,std_error,n,seed,asymptote,ratio.
    LocaltimeTail {
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long)]
        ell: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        /// Simulate grid paths with this step instead of the H_0 + tau estimator.
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Draws of the inverse local time. Columns: index,level,value.
    Tau {
        #[arg(long)]
        ell: f64,
    },
    /// -ln E[exp(-lambda tau_ell)] / ell. Columns: lambda,ell,mean,std_error,n,seed,exact.
    Exponent {
        #[arg(long, value_delimiter = ',', required = true)]
        lambda: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        ell: f64,
    },
    /// E_0 S(X_t) against E_0 L_t. Columns: t,scale_mean,scale_se,local_time_mean,local_time_se,gap,difference_se,n,seed,pass.
    DoobMeyer {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
        #[arg(long, default_value_t = 1e-4)]
        dt: f64,
    },
    /// One grid path. Columns: time,position,local_time.
    Path {
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        dt: f64,
        /// Occupation-band local time instead of exact transitions.
        #[arg(long)]
        occupation: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum PenalizeCommand {
    /// S(x) h(ell) + 1 - H(ell). Columns: x,ell,value.
    Value {
        #[arg(long, value_delimiter = ',', required = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        ell: Vec<f64>,
    },
    /// E_0[M_u]. Columns: u,mean,std_error,n,seed.
    Mean {
        #[arg(long, value_delimiter = ',', required = true)]
        u: Vec<f64>,
    },
    /// E[M_t phi] against E[M_s phi]. Columns: phi,at_s,at_s_se,at_t,at_t_se,difference_se,pass.
    Martingale {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        t: f64,
    },
    /// Weighted CDF of L_u against H. Columns: level,weighted_cdf,std_error,target,gap.
    Linfty {
        /// Horizon; chosen adaptively when absent.
        #[arg(long)]
        u: Option<f64>,
    },
    /// Density of the process conditioned to avoid 0, w.r.t. S^2 m. Columns: t,x,y,value,abs_err.
    Uparrow {
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<f64>,
        #[arg(long)]
        t: f64,
    },
    /// int f_{y0}(t) S(y) m'(y) dy. Columns: t,value,abs_err.
    Normalization {
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
    /// Law of X a time v after the last zero. Columns: bin_lo,bin_hi,observed,expected.
    Lastzero {
        #[arg(long, default_value_t = 1.0)]
        v: f64,
        #[arg(long)]
        u: Option<f64>,
    },
    /// E_x[h(L_t)] / nu((t, inf)). Columns: x,t,mean,std_error,n,seed,limit.
    Numerator {
        #[arg(long, default_value_t = 0.0)]
        x: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        t: Vec<f64>,
    },
}

/// Failure of a run, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Io(std::io::Error),
    /// A Monte Carlo or tolerance check ran but did not pass.
    CheckFailed(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::CheckFailed(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(_) => 2,
            CliError::Io(_) => 2,
            CliError::CheckFailed(_) => 3,
        }
    }
}

/// A cell of the output table.
#[derive(Debug, Clone)]
enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

struct Table {
    command: String,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
    notes: Vec<String>,
}

impl Table {
    fn new(command: &str, columns: &[&'static str]) -> Self {
        Self {
            command: command.to_string(),
            columns: columns.to_vec(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn csv(&self) -> String {
        let mut s = format!("# levykit v{VERSION}\n# {}\n", self.command);
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format!("{v}"),
                    Cell::Int(v) => v.to_string(),
                    Cell::Text(t) if t.contains(',') || t.contains('"') => format!("\"{}\"", t.replace('"', "\"\"")),
                    Cell::Text(t) => t.clone(),
                    Cell::Bool(b) => b.to_string(),
                })
                .collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (name, c) in self.columns.iter().zip(row) {
                    let v = match c {
                        Cell::Num(v) => serde_json::Number::from_f64(*v).map(Value::Number).unwrap_or(Value::Null),
                        Cell::Int(v) => Value::from(*v),
                        Cell::Text(t) => Value::from(t.clone()),
                        Cell::Bool(b) => Value::from(*b),
                    };
                    m.insert(name.to_string(), v);
                }
                Value::Object(m)
            })
            .collect();
        let doc = serde_json::json!({
            "levykit": VERSION,
            "command": self.command,
            "notes": self.notes,
            "columns": self.columns,
            "rows": rows,
        });
        let mut s = serde_json::to_string_pretty(&doc).unwrap();
        s.push('\n');
        s
    }
}

fn read_arg(text: &str) -> Result<String, CliError> {
    match text.strip_prefix('@') {
        Some(path) => Ok(std::fs::read_to_string(path)?),
        None => Ok(text.to_string()),
    }
}

fn load_spec(text: &str) -> Result<DiffusionSpec, CliError> {
    Ok(DiffusionSpec::parse(&read_arg(text)?)?)
}

fn load_tail(text: &str, base: Option<&TailDistribution>) -> Result<TailDistribution, CliError> {
    let (kind, arg) = text
        .split_once(':')
        .ok_or_else(|| Error::Validation(format!("tail family {text:?} must look like kind:arg")))?;
    let number = || {
        arg.trim()
            .parse::<f64>()
            .map_err(|_| CliError::Lib(Error::Validation(format!("invalid number in {text:?}"))))
    };
    match kind {
        "pareto" => Ok(TailDistribution::pareto(number()?)?),
        "exp" => Ok(TailDistribution::exponential(number()?)?),
        "csv" => Ok(TailDistribution::from_csv(arg, &std::fs::read_to_string(arg)?)?),
        "scaled" => match base {
            Some(b) => Ok(b.scaled(number()?)?),
            None => Err(Error::Validation("scaled:<c> is only valid for --other".into()).into()),
        },
        _ => Err(Error::Validation(format!("unknown tail family {kind:?}")).into()),
    }
}

fn model(spec: &DiffusionSpec, m: &MeasureArgs, tol: f64) -> Result<SpectralModel, CliError> {
    let reflected = m.measure.as_deref().map(|t| read_arg(t).and_then(|t| Ok(SpectralMeasure::from_json(&t)?))).transpose()?;
    let killed = m.killed_measure.as_deref().map(|t| read_arg(t).and_then(|t| Ok(SpectralMeasure::from_json(&t)?))).transpose()?;
    let base = if reflected.is_none() && killed.is_none() && spec.alpha().is_some() {
        SpectralModel::preset(spec)?
    } else {
        SpectralModel::new(spec, reflected, killed)?
    };
    let method = match m.method {
        Method::Auto => EigenMethod::Auto,
        Method::Closed => EigenMethod::ClosedForm,
        Method::Series => EigenMethod::Series,
    };
    Ok(base.with_method(method).with_tol(tol))
}

fn check_pass(pass: bool, what: &str) -> Result<(), CliError> {
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(what.to_string()))
    }
}

/// Runs the command and writes its output. A failed check still writes the table first.
pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<(), CliError> {
    let c = &cli.common;
    if c.threads == Some(0) {
        return Err(Error::Validation("--threads must be positive".into()).into());
    }
    montecarlo::set_threads(c.threads);
    if !(c.tol > 0.0) {
        return Err(Error::Validation("--tol must be positive".into()).into());
    }
    let spec = load_spec(&c.spec)?;
    let (table, verdict) = build(cli, &spec)?;
    let text = match c.format {
        Format::Csv => table.csv(),
        Format::Json => table.json(),
    };
    out.write_all(text.as_bytes())?;
    out.flush()?;
    verdict
}

type Built = (Table, Result<(), CliError>);

fn build(cli: &Cli, spec: &DiffusionSpec) -> Result<Built, CliError> {
    let c = &cli.common;
    let ok = Ok(());
    match &cli.command {
        Command::Density { t, x, y, killed, measures } => {
            let m = model(spec, measures, c.tol)?;
            let mut tab = Table::new(if *killed { "density --killed" } else { "density" }, &["t", "x", "y", "value", "abs_err"]);
            for &tt in t {
                for &xx in x {
                    for &yy in y {
                        let e = m.transition_density(xx, yy, tt, *killed)?;
                        tab.push(vec![tt.into(), xx.into(), yy.into(), e.value.into(), e.abs_err.into()]);
                    }
                }
            }
            Ok((tab, ok))
        }
        Command::Tails { t, x, measures } => {
            let m = model(spec, measures, c.tol)?;
            let mut tab = Table::new(
                "tails",
                &["t", "x", "nu_dot", "nu_dot_err", "nu_tail", "nu_tail_err", "hitting_density", "hitting_density_err", "hitting_tail", "hitting_tail_err"],
            );
            for &tt in t {
                let d = m.levy_density(tt)?;
                let l = m.levy_tail(tt)?;
                let f = m.hitting_density(*x, tt)?;
                let h = m.hitting_tail(*x, tt)?;
                tab.push(vec![
                    tt.into(),
                    (*x).into(),
                    d.value.into(),
                    d.abs_err.into(),
                    l.value.into(),
                    l.abs_err.into(),
                    f.value.into(),
                    f.abs_err.into(),
                    h.value.into(),
                    h.abs_err.into(),
                ]);
            }
            Ok((tab, ok))
        }
        Command::Eigen { x, gamma, method, terms } => {
            let mut tab = Table::new("eigen", &["x", "gamma", "C", "C_err", "A", "A_err"]);
            let closed = match method {
                Method::Closed => true,
                Method::Series => false,
                Method::Auto => spec.alpha().is_some(),
            };
            for &xx in x {
                let series = if closed {
                    None
                } else {
                    Some((series_for(spec, xx, EigenKind::C, gamma, *terms, c.tol)?, series_for(spec, xx, EigenKind::A, gamma, *terms, c.tol)?))
                };
                for &g in gamma {
                    let (cv, av) = match &series {
                        Some((cs, as_)) => (eigen_value(cs, g, c.tol)?, eigen_value(as_, g, c.tol)?),
                        None => {
                            let m = SpectralModel::preset(spec)?.with_method(EigenMethod::ClosedForm);
                            (m.eigen(xx, g, EigenKind::C, c.tol)?, m.eigen(xx, g, EigenKind::A, c.tol)?)
                        }
                    };
                    tab.push(vec![xx.into(), g.into(), cv.value.into(), cv.abs_err.into(), av.value.into(), av.abs_err.into()]);
                }
            }
            Ok((tab, ok))
        }
        Command::SubexpCheck { family, other, x } => {
            let f = load_tail(family, None)?;
            let g = other.as_deref().map(|o| load_tail(o, Some(&f))).transpose()?;
            let mut tab = match &g {
                Some(_) => Table::new("subexp-check --other", &["x", "tail", "other_tail", "conv_tail", "mixed_ratio"]),
                None => Table::new("subexp-check", &["x", "tail", "conv_tail", "ratio"]),
            };
            tab.notes.push(format!("family {}", f.label()));
            for &xx in x {
                match &g {
                    Some(g) => {
                        let conv = subexp::conv_tail(&f, g, xx)?;
                        let r = subexp::mixed_ratio(&f, g, xx)?;
                        tab.push(vec![xx.into(), f.tail(xx)?.into(), g.tail(xx)?.into(), conv.into(), r.into()]);
                    }
                    None => {
                        let conv = subexp::conv_tail(&f, &f, xx)?;
                        let r = subexp::subexp_ratio(&f, xx)?;
                        tab.push(vec![xx.into(), f.tail(xx)?.into(), conv.into(), r.into()]);
                    }
                }
            }
            if g.is_none() {
                let d = subexp::limit_diagnostic(&f, |z| subexp::subexp_ratio(&f, z))?;
                tab.notes.push(format!("ratio at {:?}: {:?}, slope per decade {}", d.xs, d.values, d.slope));
            }
            Ok((tab, ok))
        }
        Command::Mc(mc) => build_mc(mc, spec, c),
        Command::Penalize { weight, command } => {
            let h = WeightFunction::from_json(&read_arg(weight)?)?;
            build_penalize(command, spec, &h, c)
        }
    }
}

fn series_for(spec: &DiffusionSpec, x: f64, kind: EigenKind, gammas: &[f64], terms: Option<usize>, tol: f64) -> Result<levykit::spectral::EigenSeries, CliError> {
    if let Some(n) = terms {
        return Ok(eigen_coefficients(spec, x, kind, n)?);
    }
    let mut n = 40;
    loop {
        let s = eigen_coefficients(spec, x, kind, n)?;
        let need = gammas.iter().map(|&g| s.required_terms(g, tol)).max().unwrap_or(0);
        if need <= n || n >= 400 {
            return Ok(s);
        }
        n = (need + 5).min(400);
    }
}

fn levy_tail(spec: &DiffusionSpec, t: f64) -> Result<f64, CliError> {
    match &spec.oracles().levy_tail {
        Some(f) => Ok(f(t)),
        None => Ok(SpectralModel::preset(spec)?.levy_tail(t)?.value),
    }
}

fn build_mc(mc: &McCommand, spec: &DiffusionSpec, c: &Common) -> Result<Built, CliError> {
    let (n, seed) = (c.n, c.seed);
    match mc {
        McCommand::HittingTail { x, t } => {
            let mut tab = Table::new("mc hitting-tail", &["x", "t", "mean", "std_error", "n", "seed", "asymptote", "ratio"]);
            for &tt in t {
                let e = montecarlo::estimate_hitting_tail(spec, *x, tt, n, seed)?;
                let a = spec.scale(*x) * levy_tail(spec, tt)?;
                tab.push(vec![(*x).into(), tt.into(), e.mean.into(), e.std_error.into(), e.n_paths.into(), e.seed.into(), a.into(), (e.mean / a).into()]);
            }
            Ok((tab, Ok(())))
        }
        McCommand::LocaltimeTail { x, ell, t, dt } => {
            let mut tab = Table::new("mc localtime-tail", &["x", "ell", "t", "mean", "std_error", "n", "seed", "asymptote", "ratio"]);
            for &tt in t {
                let e = match dt {
                    Some(dt) => montecarlo::estimate_localtime_tail_paths(spec, *x, *ell, tt, *dt, n, seed)?,
                    None => montecarlo::estimate_localtime_tail(spec, *x, *ell, tt, n, seed)?,
                };
                let a = (spec.scale(*x) + ell) * levy_tail(spec, tt)?;
                tab.push(vec![(*x).into(), (*ell).into(), tt.into(), e.mean.into(), e.std_error.into(), e.n_paths.into(), e.seed.into(), a.into(), (e.mean / a).into()]);
            }
            Ok((tab, Ok(())))
        }
        McCommand::Tau { ell } => {
            let v = montecarlo::sample_tau_batch(spec, *ell, n, seed)?;
            let mut tab = Table::new("mc tau", &["index", "level", "value"]);
            for (i, x) in v.into_iter().enumerate() {
                tab.push(vec![i.into(), (*ell).into(), x.into()]);
            }
            Ok((tab, Ok(())))
        }
        McCommand::Exponent { lambda, ell } => {
            let alpha = spec.require_alpha("mc exponent")?;
            let mut tab = Table::new("mc exponent", &["lambda", "ell", "mean", "std_error", "n", "seed", "exact"]);
            for &l in lambda {
                let e = montecarlo::levy_exponent_mc(spec, l, *ell, n, seed)?;
                let exact = levykit::bessel::laplace_exponent(alpha, l);
                tab.push(vec![l.into(), (*ell).into(), e.mean.into(), e.std_error.into(), e.n_paths.into(), e.seed.into(), exact.into()]);
            }
            Ok((tab, Ok(())))
        }
        McCommand::DoobMeyer { t, dt } => {
            let mut tab = Table::new(
                "mc doob-meyer",
                &["t", "scale_mean", "scale_se", "local_time_mean", "local_time_se", "gap", "difference_se", "n", "seed", "pass"],
            );
            let mut all = true;
            for &tt in t {
                let r = montecarlo::doob_meyer_check(spec, tt, *dt, n, seed)?;
                all &= r.pass;
                tab.push(vec![
                    tt.into(),
                    r.scale_mean.mean.into(),
                    r.scale_mean.std_error.into(),
                    r.local_time_mean.mean.into(),
                    r.local_time_mean.std_error.into(),
                    r.gap.into(),
                    r.difference_se.into(),
                    n.into(),
                    seed.into(),
                    r.pass.into(),
                ]);
            }
            Ok((tab, check_pass(all, "E S(X_t) and E L_t differ by more than 3 standard errors")))
        }
        McCommand::Path { x, t, dt, occupation } => {
            let method = if *occupation { LocalTimeMethod::Occupation { epsilon: None } } else { LocalTimeMethod::Exact };
            let p = montecarlo::simulate_path_with(spec, *x, *t, *dt, seed, method)?;
            let mut tab = Table::new("mc path", &["time", "position", "local_time"]);
            if let Some(i) = p.hit_zero_at {
                tab.notes.push(format!("hit_zero_at index {i}"));
            }
            for i in 0..p.times.len() {
                tab.push(vec![p.times[i].into(), p.positions[i].into(), p.local_time[i].into()]);
            }
            Ok((tab, Ok(())))
        }
    }
}

fn build_penalize(cmd: &PenalizeCommand, spec: &DiffusionSpec, h: &WeightFunction, c: &Common) -> Result<Built, CliError> {
    let (n, seed) = (c.n, c.seed);
    match cmd {
        PenalizeCommand::Value { x, ell } => {
            let mut tab = Table::new("penalize value", &["x", "ell", "value"]);
            for &xx in x {
                for &l in ell {
                    tab.push(vec![xx.into(), l.into(), penalization::martingale_value(spec, h, xx, l)?.into()]);
                }
            }
            Ok((tab, Ok(())))
        }
        PenalizeCommand::Mean { u } => {
            let mut tab = Table::new("penalize mean", &["u", "mean", "std_error", "n", "seed"]);
            for &uu in u {
                let e = penalization::martingale_mean_mc(spec, h, uu, n, seed)?;
                tab.push(vec![uu.into(), e.mean.into(), e.std_error.into(), e.n_paths.into(), e.seed.into()]);
            }
            Ok((tab, Ok(())))
        }
        PenalizeCommand::Martingale { s, t } => {
            let r = penalization::martingale_property_mc(spec, h, *s, *t, n, seed)?;
            let mut tab = Table::new("penalize martingale", &["phi", "at_s", "at_s_se", "at_t", "at_t_se", "difference_se", "pass"]);
            if let Some(d) = r.stopped_form_max_diff {
                tab.notes.push(format!("stopped-form max difference {d}"));
            }
            for row in r.rows {
                tab.push(vec![
                    row.phi.into(),
                    row.at_s.mean.into(),
                    row.at_s.std_error.into(),
                    row.at_t.mean.into(),
                    row.at_t.std_error.into(),
                    row.difference_se.into(),
                    row.pass.into(),
                ]);
            }
            Ok((tab, check_pass(r.pass, "martingale property")))
        }
        PenalizeCommand::Linfty { u } => {
            let r = penalization::linfty_law_check(spec, h, *u, n, seed)?;
            let mut tab = Table::new("penalize linfty", &["level", "weighted_cdf", "std_error", "target", "gap"]);
            tab.notes.push(format!("u {} residual {} (se {})", r.u, r.residual.mean, r.residual.std_error));
            tab.notes.push(format!("max gap {} threshold {} pass {}", r.max_gap, r.threshold, r.pass));
            for i in 0..r.levels.len() {
                tab.push(vec![
                    r.levels[i].into(),
                    r.weighted_cdf[i].into(),
                    r.cdf_std_error[i].into(),
                    r.target[i].into(),
                    (r.weighted_cdf[i] - r.target[i]).abs().into(),
                ]);
            }
            Ok((tab, check_pass(r.pass, "weighted CDF of L_u departs from H")))
        }
        PenalizeCommand::Uparrow { x, y, t } => {
            let m = SpectralModel::preset(spec)?.with_tol(c.tol);
            let mut tab = Table::new("penalize uparrow", &["t", "x", "y", "value", "abs_err"]);
            for &yy in y {
                let e = penalization::uparrow_density_spectral(&m, *x, yy, *t)?;
                tab.push(vec![(*t).into(), (*x).into(), yy.into(), e.value.into(), e.abs_err.into()]);
            }
            Ok((tab, Ok(())))
        }
        PenalizeCommand::Normalization { t } => {
            let m = SpectralModel::preset(spec)?;
            let mut tab = Table::new("penalize normalization", &["t", "value", "abs_err"]);
            for &tt in t {
                let e = penalization::uparrow_normalization(&m, tt)?;
                tab.push(vec![tt.into(), e.value.into(), e.abs_err.into()]);
            }
            Ok((tab, Ok(())))
        }
        PenalizeCommand::Lastzero { v, u } => {
            let r = penalization::post_lastzero_marginal_check(spec, h, *u, *v, n, seed)?;
            let mut tab = Table::new("penalize lastzero", &["bin_lo", "bin_hi", "observed", "expected"]);
            tab.notes.push(format!("horizon {} v {}", r.horizon, r.v));
            tab.notes.push(format!("distance {} threshold {} pass {}", r.distance, r.threshold, r.pass));
            tab.notes.push(format!("mean weight {} (se {}), effective sample size {}", r.mean_weight.mean, r.mean_weight.std_error, r.effective_sample_size));
            tab.notes.push(format!("correlation {} (se {})", r.correlation, r.correlation_se));
            for i in 0..r.observed.len() {
                tab.push(vec![r.edges[i].into(), r.edges[i + 1].into(), r.observed[i].into(), r.expected[i].into()]);
            }
            Ok((tab, check_pass(r.pass, "post-last-zero marginal")))
        }
        PenalizeCommand::Numerator { x, t } => {
            let mut tab = Table::new("penalize numerator", &["x", "t", "mean", "std_error", "n", "seed", "limit"]);
            let limit = spec.scale(*x) * h.h(0.0) + 1.0;
            for &tt in t {
                let e = penalization::numerator_ratio_mc(spec, h, *x, tt, n, seed)?;
                tab.push(vec![(*x).into(), tt.into(), e.mean.into(), e.std_error.into(), e.n_paths.into(), e.seed.into(), limit.into()]);
            }
            Ok((tab, Ok(())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut t = Table::new("demo", &["a", "b", "c"]);
        t.notes.push("note".into());
        t.push(vec![0.5.into(), 3usize.into(), "x,y".to_string().into()]);
        assert_eq!(t.csv(), "# levykit v0.1.0\n# demo\n# note\na,b,c\n0.5,3,\"x,y\"\n");
    }

    #[test]
    fn json_mirrors_columns() {
        let mut t = Table::new("demo", &["a", "ok"]);
        t.push(vec![f64::NAN.into(), true.into()]);
        let v: Value = serde_json::from_str(&t.json()).unwrap();
        assert_eq!(v["rows"][0]["a"], Value::Null);
        assert_eq!(v["rows"][0]["ok"], true);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::Validation("x".into())).exit_code(), 2);
        assert_eq!(CliError::CheckFailed("x".into()).exit_code(), 3);
    }
}

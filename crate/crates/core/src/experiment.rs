//! Experiment configuration and the `run`, `converge` and `mc` commands.
//!
//! A configuration is a TOML file with four sections:
//!
//! ```toml
//! [model]
//! kind = "model1"        # model1 | model2 | custom
//! sigma = 0.1
//! amplitude = 1.0
//! kappa = 1
//! period = 1.0
//! horizon = 3.0
//! gamma = [0.5, 0.2]     # model2 only
//! # problem_file = "problem.toml"   # custom only
//!
//! [method]
//! scheme = "B"
//! cutoff = 2
//! blowup_bound = 1e6
//!
//! [sweep]
//! h = [0.2, 0.1, 0.05, 0.02, 0.01]
//! runs = 4000
//! seed = 1
//! master_refinement = 10
//!
//! [output]
//! path = "errors.csv"
//! plot = false
//! ```
//!
//! Output is deterministic given the configuration: Monte Carlo runs draw from
//! per-run generator streams and are reduced in run order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{self, Method, MethodParams, DEFAULT_BLOWUP_BOUND};
use crate::metrics::{self, ErrorReport, OrderFit, TrajectorySample};
use crate::problems::{self, ModelParams, ProblemSpec};
use crate::spectral::SpectralField;
use crate::stochastic::{generate_path, WienerPath};

/// Environment variable holding the Monte Carlo worker count.
pub const WORKERS_ENV: &str = "LAYERFLOW_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const ERROR_CSV_HEADER: &str = "model,method,h,N,K,seed,err_v,halfwidth_v,err_p,halfwidth_p,denom_v,denom_p";
pub const TRAJECTORY_CSV_HEADER: &str = "k,t_k,field,component,n1,n2,re,im,div_residual,max_abs_v";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Model1,
    Model2,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_one")]
    pub amplitude: f64,
    #[serde(default = "default_kappa")]
    pub kappa: i64,
    #[serde(default = "default_one")]
    pub period: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_gamma")]
    pub gamma: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    pub scheme: Method,
    #[serde(default = "default_cutoff")]
    pub cutoff: usize,
    #[serde(default = "default_blowup")]
    pub blowup_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub h: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Master path step of fixed-trajectory sweeps is `min(h) / master_refinement`.
    #[serde(default = "default_refinement")]
    pub master_refinement: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub plot: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub method: MethodSection,
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_sigma() -> f64 {
    0.1
}
fn default_one() -> f64 {
    1.0
}
fn default_kappa() -> i64 {
    1
}
fn default_horizon() -> f64 {
    3.0
}
fn default_gamma() -> [f64; 2] {
    [0.5, 0.2]
}
fn default_cutoff() -> usize {
    2
}
fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_BOUND
}
fn default_runs() -> u64 {
    4000
}
fn default_seed() -> u64 {
    1
}
fn default_refinement() -> usize {
    10
}

/// Command-line replacements for configuration values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub h: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub runs: Option<u64>,
    pub method: Option<Method>,
    /// `model1`, `model2` (or `1`, `2`), `custom`, or a path to a problem file.
    pub model: Option<String>,
    pub out: Option<PathBuf>,
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::parse(&text)?;
        // relative problem files are resolved against the config's directory
        if let (Some(file), Some(dir)) = (&config.model.problem_file, path.parent()) {
            if file.is_relative() {
                config.model.problem_file = Some(dir.join(file));
            }
        }
        Ok(config)
    }

    pub fn emit(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(h) = &o.h {
            self.sweep.h = h.clone();
        }
        if let Some(seed) = o.seed {
            self.sweep.seed = seed;
        }
        if let Some(runs) = o.runs {
            self.sweep.runs = runs;
        }
        if let Some(method) = o.method {
            self.method.scheme = method;
        }
        if let Some(model) = &o.model {
            match model.as_str() {
                "1" | "model1" => self.model.kind = ModelKind::Model1,
                "2" | "model2" => self.model.kind = ModelKind::Model2,
                "custom" => self.model.kind = ModelKind::Custom,
                path => {
                    self.model.kind = ModelKind::Custom;
                    self.model.problem_file = Some(PathBuf::from(path));
                }
            }
        }
        if let Some(out) = &o.out {
            self.output.path = Some(out.clone());
        }
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if !(m.sigma.is_finite() && m.sigma > 0.0) {
            return Err(config_err("model.sigma", "must be positive"));
        }
        if !(m.period.is_finite() && m.period > 0.0) {
            return Err(config_err("model.period", "must be positive"));
        }
        if !(m.horizon.is_finite() && m.horizon >= 0.0) {
            return Err(config_err("model.horizon", "must be non-negative"));
        }
        if m.kind == ModelKind::Custom && m.problem_file.is_none() {
            return Err(config_err("model.problem_file", "required for kind = \"custom\""));
        }
        if self.method.cutoff == 0 {
            return Err(config_err("method.cutoff", "must be positive"));
        }
        if !(self.method.blowup_bound > 0.0) {
            return Err(config_err("method.blowup_bound", "must be positive"));
        }
        if self.sweep.h.is_empty() {
            return Err(config_err("sweep.h", "needs at least one step size"));
        }
        for &h in &self.sweep.h {
            if !(h.is_finite() && h > 0.0) {
                return Err(config_err("sweep.h", format!("step {h} must be positive")));
            }
            steps_for(m.horizon, h)?;
        }
        if self.sweep.master_refinement == 0 {
            return Err(config_err("sweep.master_refinement", "must be positive"));
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let m = &self.model;
        let params = ModelParams {
            sigma: m.sigma,
            amplitude: m.amplitude,
            kappa: m.kappa,
            period: m.period,
            horizon: m.horizon,
        };
        match m.kind {
            ModelKind::Model1 => problems::model1(params),
            ModelKind::Model2 => problems::model2(params, m.gamma),
            ModelKind::Custom => {
                let file = m
                    .problem_file
                    .as_ref()
                    .ok_or_else(|| config_err("model.problem_file", "missing"))?;
                let mut p = problems::load_custom_problem(file)?;
                // the config's sigma and horizon win, so one problem file serves many sweeps
                p.sigma = m.sigma;
                p.horizon = m.horizon;
                Ok(p)
            }
        }
    }

    pub fn method_params(&self, h: f64) -> Result<MethodParams> {
        Ok(MethodParams::new(self.model.sigma, h, self.method.cutoff, self.method.scheme)?
            .with_blowup_bound(self.method.blowup_bound))
    }
}

/// `N = T / h`, rejecting steps that do not divide the horizon.
pub fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    let n = (horizon / h).round();
    if (n * h - horizon).abs() > 1e-9 * horizon.max(h) {
        return Err(config_err("sweep.h", format!("step {h} does not divide T = {horizon}")));
    }
    Ok(n as usize)
}

fn fmt_f(x: f64) -> String {
    format!("{x:.9e}")
}

/// One row of the error CSV schema.
pub fn error_row(model: &str, method: Method, r: &ErrorReport) -> String {
    format!(
        "{model},{method},{},{},{},{},{},{},{},{},{},{}",
        fmt_f(r.h),
        r.steps,
        r.runs,
        r.seed,
        fmt_f(r.err_v),
        fmt_f(r.halfwidth_v),
        fmt_f(r.err_p),
        fmt_f(r.halfwidth_p),
        fmt_f(r.denom_v),
        fmt_f(r.denom_p)
    )
}

/// Result of a command: the main CSV plus optional side files.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub csv: String,
    pub side_files: Vec<(PathBuf, String)>,
    pub reports: Vec<ErrorReport>,
    /// Set when `run` stopped at a blow-up; the CSV holds the layers before it.
    pub blow_up: Option<String>,
}

impl Outcome {
    fn new(csv: String) -> Self {
        Self {
            csv,
            side_files: Vec::new(),
            reports: Vec::new(),
            blow_up: None,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.blow_up.is_some() {
            EXIT_BLOWUP
        } else {
            EXIT_OK
        }
    }

    /// Writes the CSV to `path` (or returns it for stdout) and every side file.
    pub fn write(&self, path: Option<&Path>) -> Result<()> {
        if let Some(p) = path {
            std::fs::write(p, &self.csv)?;
        }
        for (p, text) in &self.side_files {
            std::fs::write(p, text)?;
        }
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_blow_up() {
        EXIT_BLOWUP
    } else if matches!(err, Error::Io(_)) {
        EXIT_IO
    } else if let Error::RunFailed { source, .. } = err {
        exit_code(source)
    } else {
        EXIT_CONFIG
    }
}

/// Runs `f` on a pool sized by [`WORKERS_ENV`], or on the global pool.
pub fn with_workers<T, F>(f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match std::env::var(WORKERS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}

fn max_pointwise_speed(v: &SpectralField) -> Result<f64> {
    let grid = v.to_grid(4 * v.cutoff())?;
    Ok((0..grid[0].len())
        .map(|i| grid.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max))
}

fn write_coefficients(out: &mut String, k: usize, t: &str, name: &str, f: &SpectralField) {
    for mode in f.modes() {
        for c in 0..f.components() {
            let z = f.coeff(mode, c);
            if z.re != 0.0 || z.im != 0.0 {
                let _ = writeln!(
                    out,
                    "{k},{t},{name},{c},{},{},{},{},,",
                    mode.n1,
                    mode.n2,
                    fmt_f(z.re),
                    fmt_f(z.im)
                );
            }
        }
    }
}

/// Path for a single trajectory of `problem` with run index 0.
fn single_path(problem: &ProblemSpec, steps: usize, seed: u64) -> Result<WienerPath> {
    if steps == 0 {
        return Ok(WienerPath::empty(problem.noise_dim, problem.needs_integral));
    }
    generate_path(problem.noise_dim, problem.horizon, steps, seed, 0, problem.needs_integral)
}

/// Trajectory CSV: per layer one `layer` summary row followed by the nonzero
/// velocity and pressure coefficients, then a `# status=` footer.
pub fn cmd_run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    if config.sweep.h.len() != 1 {
        return Err(config_err("sweep.h", "`run` takes exactly one step size"));
    }
    let h = config.sweep.h[0];
    let problem = config.problem()?;
    let steps = steps_for(problem.horizon, h)?;
    let params = config.method_params(h)?;
    let path = single_path(&problem, steps, config.sweep.seed)?;

    let mut csv = String::new();
    csv.push_str(TRAJECTORY_CSV_HEADER);
    csv.push('\n');
    let result = layer::march(&problem, &params, &path, layer::PressureSchedule::EveryLayer, |s| {
        let t = fmt_f(s.t);
        let _ = writeln!(
            csv,
            "{},{t},layer,,,,,,{},{}",
            s.k,
            fmt_f(s.divergence_residual()?),
            fmt_f(max_pointwise_speed(&s.velocity)?)
        );
        write_coefficients(&mut csv, s.k, &t, "velocity", &s.velocity);
        if let Some(p) = &s.pressure {
            write_coefficients(&mut csv, s.k, &t, "pressure", p);
        }
        Ok(())
    });
    let mut blow_up = None;
    match result {
        Ok(_) => csv.push_str("# status=ok\n"),
        Err(Error::BlowUp { k, reason }) => {
            let _ = writeln!(csv, "# status=blow-up layer={k} reason={reason}");
            blow_up = Some(format!("layer {k}: {reason}"));
        }
        Err(e) => return Err(e),
    }
    let mut outcome = Outcome::new(csv);
    outcome.blow_up = blow_up;
    Ok(outcome)
}

fn sample_at_final(problem: &ProblemSpec, params: &MethodParams, path: &WienerPath) -> Result<TrajectorySample> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::Config(format!("problem `{}` has no exact solution", problem.name)))?;
    let last = layer::run_to_final(problem, params, path)?;
    let summary = path.final_summary();
    let pressure = last.pressure.as_ref().expect("final layer carries pressure");
    TrajectorySample::compare(
        &last.velocity,
        &exact.velocity_at(problem.horizon, &summary),
        pressure,
        &exact.pressure_at(problem.horizon, &summary),
    )
}

fn fit_footer(reports: &[ErrorReport]) -> Option<(OrderFit, OrderFit)> {
    if reports.len() < 3 {
        return None;
    }
    metrics::fit_reports(reports).ok()
}

fn finish_sweep(config: &ExperimentConfig, problem: &ProblemSpec, reports: Vec<ErrorReport>) -> Outcome {
    let mut csv = String::new();
    csv.push_str(ERROR_CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&error_row(&problem.name, config.method.scheme, r));
        csv.push('\n');
    }
    let fits = fit_footer(&reports);
    if let Some((v, p)) = &fits {
        let _ = writeln!(
            csv,
            "# fit order_v={} r2_v={} order_p={} r2_p={}",
            fmt_f(v.slope),
            fmt_f(v.r_squared),
            fmt_f(p.slope),
            fmt_f(p.r_squared)
        );
    }
    let mut outcome = Outcome::new(csv);
    if config.output.plot {
        let base = config.output.path.clone().unwrap_or_else(|| PathBuf::from("layerflow"));
        for (suffix, pick) in [("velocity", 0usize), ("pressure", 1)] {
            let mut text = String::from("# ln(h) ln(err)\n");
            for r in &reports {
                let e = if pick == 0 { r.err_v } else { r.err_p };
                if e > 0.0 {
                    let _ = writeln!(text, "{} {}", fmt_f(r.h.ln()), fmt_f(e.ln()));
                }
            }
            let mut name = base.clone().into_os_string();
            name.push(format!(".{suffix}.dat"));
            outcome.side_files.push((PathBuf::from(name), text));
        }
    }
    outcome.reports = reports;
    outcome
}

/// Fixed-trajectory sweep: one master path at `min(h) / master_refinement`,
/// coarsened to every `h`, errors against the exact solution at `T`.
pub fn cmd_converge(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let problem = config.problem()?;
    if problem.exact.is_none() {
        return Err(config_err("model.kind", "`converge` needs a model with an exact solution"));
    }
    if problem.horizon == 0.0 {
        return Err(config_err("model.horizon", "`converge` needs T > 0"));
    }
    let mut hs = config.sweep.h.clone();
    hs.sort_by(|a, b| b.total_cmp(a));
    let h_min = *hs.last().expect("validated non-empty");
    for &h in &hs {
        let ratio = (h / h_min).round();
        if (ratio * h_min - h).abs() > 1e-9 * h {
            return Err(config_err(
                "sweep.h",
                format!("step {h} is not an integer multiple of the smallest step {h_min}"),
            ));
        }
    }
    let master_h = h_min / config.sweep.master_refinement as f64;
    let master_steps = steps_for(problem.horizon, master_h)?;
    let master = generate_path(
        problem.noise_dim,
        problem.horizon,
        master_steps,
        config.sweep.seed,
        0,
        problem.needs_integral,
    )?;
    let mut reports = Vec::with_capacity(hs.len());
    for &h in &hs {
        let steps = steps_for(problem.horizon, h)?;
        let path = master.coarsen(master_steps / steps)?;
        let params = config.method_params(h)?;
        let sample = sample_at_final(&problem, &params, &path)?;
        reports.push(ErrorReport::single(h, steps, config.sweep.seed, &sample)?);
    }
    Ok(finish_sweep(config, &problem, reports))
}

/// Smallest step when every step is an integer multiple of it.
fn nested_base(hs: &[f64]) -> Option<f64> {
    let h_min = hs.iter().copied().fold(f64::INFINITY, f64::min);
    hs.iter()
        .all(|&h| {
            let ratio = (h / h_min).round();
            (ratio * h_min - h).abs() <= 1e-9 * h
        })
        .then_some(h_min)
}

/// Mean-square sweep over `K` independent paths. When the step sizes are
/// nested, run `i` draws one path at the smallest step and coarsens it for
/// every `h`, so all rows share the same realisations; otherwise each step
/// size draws its own paths.
pub fn cmd_mc(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    if config.sweep.runs < 2 {
        return Err(config_err("sweep.runs", "`mc` needs at least two runs"));
    }
    let problem = config.problem()?;
    if problem.exact.is_none() {
        return Err(config_err("model.kind", "`mc` needs a model with an exact solution"));
    }
    if problem.horizon == 0.0 {
        return Err(config_err("model.horizon", "`mc` needs T > 0"));
    }
    let seed = config.sweep.seed;
    let hs = &config.sweep.h;
    let levels: Vec<(f64, usize)> = hs
        .iter()
        .map(|&h| Ok((h, steps_for(problem.horizon, h)?)))
        .collect::<Result<_>>()?;
    let params: Vec<MethodParams> = hs.iter().map(|&h| config.method_params(h)).collect::<Result<_>>()?;
    let draw = |steps: usize, run: u64| {
        generate_path(problem.noise_dim, problem.horizon, steps, seed, run, problem.needs_integral)
    };
    let reports = match nested_base(hs) {
        Some(h_min) => {
            let fine_steps = steps_for(problem.horizon, h_min)?;
            with_workers(|| {
                metrics::mean_square_sweep(
                    |run| {
                        let fine = draw(fine_steps, run)?;
                        levels
                            .iter()
                            .zip(&params)
                            .map(|(&(_, steps), p)| sample_at_final(&problem, p, &fine.coarsen(fine_steps / steps)?))
                            .collect()
                    },
                    config.sweep.runs,
                    seed,
                    &levels,
                )
            })??
        }
        None => with_workers(|| -> Result<Vec<ErrorReport>> {
            levels
                .iter()
                .zip(&params)
                .map(|(&(h, steps), p)| {
                    metrics::mean_square_error(
                        |run| sample_at_final(&problem, p, &draw(steps, run)?),
                        config.sweep.runs,
                        seed,
                        h,
                        steps,
                    )
                })
                .collect()
        })??,
    };
    Ok(finish_sweep(config, &problem, reports))
}

//! Layer methods: one-step velocity updates, pressure recovery and the time
//! march.
//!
//! All three velocity methods average over the four Rademacher vectors
//! `xi in {+-1}^2` in closed form, so no randomness enters a step apart from
//! the Wiener increments.
//!
//! * Method A evaluates the velocity at the displaced points
//!   `x - v(x) h + sigma sqrt(h) xi` and projects the average.
//! * Method B replaces the displacement by the product `V(x) v(x)` of two
//!   partial sums and is fully spectral.
//! * Method C uses the exact advection term `(v, grad) v`.
//!
//! Products are formed on the doubled band `2M` and truncated back to `M`.
//! Pressures are kept on the doubled band: their modes are those of the
//! quadratic terms and do not fit into `M` in general.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::spectral::{Axis, SpectralField};
use crate::stochastic::WienerPath;

pub const DEFAULT_BLOWUP_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(alias = "a")]
    A,
    #[serde(alias = "b")]
    B,
    #[serde(alias = "c")]
    C,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::A, Method::B, Method::C];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::A => "A",
            Method::B => "B",
            Method::C => "C",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Method::A),
            "B" | "b" => Ok(Method::B),
            "C" | "c" => Ok(Method::C),
            other => Err(Error::Config(format!("unknown method `{other}` (expected A, B or C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodParams {
    pub sigma: f64,
    pub h: f64,
    pub cutoff: usize,
    pub method: Method,
    /// Largest admissible pointwise `|v|` before the march aborts.
    pub blowup_bound: f64,
}

impl MethodParams {
    pub fn new(sigma: f64, h: f64, cutoff: usize, method: Method) -> Result<Self> {
        let p = Self {
            sigma,
            h,
            cutoff,
            method,
            blowup_bound: DEFAULT_BLOWUP_BOUND,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_blowup_bound(mut self, bound: f64) -> Self {
        self.blowup_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid("time step h must be positive"));
        }
        if self.cutoff == 0 {
            return Err(Error::invalid("cut-off M must be positive"));
        }
        if !(self.blowup_bound > 0.0) {
            return Err(Error::invalid("blow-up bound must be positive"));
        }
        Ok(())
    }

    /// `a = 2 pi sigma sqrt(h) / L`.
    pub fn shift_phase(&self, period: f64) -> f64 {
        2.0 * PI * self.sigma * self.h.sqrt() / period
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub k: usize,
    pub t: f64,
    pub velocity: SpectralField,
    pub pressure: Option<SpectralField>,
}

impl LayerState {
    pub fn new(k: usize, t: f64, velocity: SpectralField) -> Self {
        Self {
            k,
            t,
            velocity,
            pressure: None,
        }
    }

    /// `||div v|| / ||v||`, zero for the zero field.
    pub fn divergence_residual(&self) -> Result<f64> {
        let norm = self.velocity.parseval_norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        Ok(self.velocity.divergence()?.parseval_norm() / norm)
    }
}

fn check_inputs(
    v: &SpectralField,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<()> {
    params.validate()?;
    v.require_vector()?;
    f.require_vector()?;
    if v.cutoff() != params.cutoff {
        return Err(Error::BandMismatch(params.cutoff, v.cutoff()));
    }
    v.check_compatible(f)?;
    if gamma.len() != dw.len() {
        return Err(Error::invalid(format!(
            "{} noise coefficients but {} increments",
            gamma.len(),
            dw.len()
        )));
    }
    for g in gamma {
        g.require_vector()?;
        v.check_compatible(g)?;
    }
    Ok(())
}

/// `base + h P f + sum_r gamma_r dw_r`.
fn add_forcing_and_noise(
    mut base: SpectralField,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    h: f64,
) -> Result<SpectralField> {
    base.axpy(h, &f.project()?)?;
    for (g, d) in gamma.iter().zip(dw) {
        base.axpy(*d, g)?;
    }
    Ok(base)
}

/// `breve v = V v` on band `2M`, where `V` has the matrix coefficients
/// `v_n (1/4) sum_j exp(i a (n, xi_j)) xi_j^T`.
pub fn breve_method_b(v: &SpectralField, a: f64) -> Result<SpectralField> {
    v.require_vector()?;
    let band = 2 * v.cutoff();
    let w1 = v.map_modes(|n| {
        Complex64::new(0.0, (a * n.n1 as f64).sin() * (a * n.n2 as f64).cos())
    });
    let w2 = v.map_modes(|n| {
        Complex64::new(0.0, (a * n.n1 as f64).cos() * (a * n.n2 as f64).sin())
    });
    let mut out = SpectralField::multiply(&v.component(0)?, &w1, band)?;
    out.axpy(1.0, &SpectralField::multiply(&v.component(1)?, &w2, band)?)?;
    Ok(out)
}

/// `(v, grad) v = sum_i v^i d_i v` on band `2M`.
pub fn advection(v: &SpectralField) -> Result<SpectralField> {
    v.require_vector()?;
    let band = 2 * v.cutoff();
    let mut out = SpectralField::vector_zeros(band, v.period());
    for axis in Axis::BOTH {
        let term = SpectralField::multiply(&v.component(axis.index())?, &v.derivative(axis), band)?;
        out.axpy(1.0, &term)?;
    }
    Ok(out)
}

/// Average of `v` over the displaced points `x - v(x) h + sigma sqrt(h) xi_j`
/// at every node of a `4M x 4M` grid, transformed back to band `M`.
pub fn breve_method_a(v: &SpectralField, params: &MethodParams) -> Result<SpectralField> {
    v.require_vector()?;
    let m = v.cutoff();
    let g = 4 * m;
    let period = v.period();
    let grid = v.to_grid(g)?;
    let s = params.sigma * params.h.sqrt();
    let xis = [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]];
    let mut points = Vec::with_capacity(4 * g * g);
    for idx in 0..g * g {
        let x = [
            (idx / g) as f64 * period / g as f64,
            (idx % g) as f64 * period / g as f64,
        ];
        let base = [x[0] - grid[0][idx] * params.h, x[1] - grid[1][idx] * params.h];
        for xi in &xis {
            points.push([base[0] + s * xi[0], base[1] + s * xi[1]]);
        }
    }
    let values = v.evaluate_complex(&points);
    let mut averaged = vec![vec![0.0; g * g]; 2];
    for idx in 0..g * g {
        for c in 0..2 {
            averaged[c][idx] = values[4 * idx..4 * idx + 4]
                .iter()
                .map(|p| p[c].re)
                .sum::<f64>()
                * 0.25;
        }
    }
    SpectralField::from_grid(&averaged, g, period, m)
}

/// Method B update from a precomputed `breve v(t_k)`.
fn step_b_with(
    state: &LayerState,
    breve: &SpectralField,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<LayerState> {
    let v = &state.velocity;
    let a = params.shift_phase(v.period());
    let mut next = v.diffusion_average(a);
    let nl = breve.truncate(params.cutoff).project()?;
    next.axpy(-params.h.sqrt() / params.sigma, &nl)?;
    let next = add_forcing_and_noise(next, f, gamma, dw, params.h)?;
    Ok(LayerState::new(state.k + 1, state.t + params.h, next))
}

pub fn step_method_b(
    state: &LayerState,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<LayerState> {
    check_inputs(&state.velocity, f, gamma, dw, params)?;
    let breve = breve_method_b(&state.velocity, params.shift_phase(state.velocity.period()))?;
    step_b_with(state, &breve, f, gamma, dw, params)
}

pub fn step_method_c(
    state: &LayerState,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<LayerState> {
    check_inputs(&state.velocity, f, gamma, dw, params)?;
    let v = &state.velocity;
    let mut next = v.diffusion_average(params.shift_phase(v.period()));
    let nl = advection(v)?.truncate(params.cutoff).project()?;
    next.axpy(-params.h, &nl)?;
    let next = add_forcing_and_noise(next, f, gamma, dw, params.h)?;
    Ok(LayerState::new(state.k + 1, state.t + params.h, next))
}

pub fn step_method_a(
    state: &LayerState,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<LayerState> {
    check_inputs(&state.velocity, f, gamma, dw, params)?;
    let next = breve_method_a(&state.velocity, params)?.project()?;
    let next = add_forcing_and_noise(next, f, gamma, dw, params.h)?;
    Ok(LayerState::new(state.k + 1, state.t + params.h, next))
}

pub fn step(
    state: &LayerState,
    f: &SpectralField,
    gamma: &[SpectralField],
    dw: &[f64],
    params: &MethodParams,
) -> Result<LayerState> {
    match params.method {
        Method::A => step_method_a(state, f, gamma, dw, params),
        Method::B => step_method_b(state, f, gamma, dw, params),
        Method::C => step_method_c(state, f, gamma, dw, params),
    }
}

/// `p_n = i (L / 2 pi) [breve_n . n / (sigma sqrt(h) |n|^2) - f_n . n / |n|^2]`.
fn pressure_from_breve(breve: &SpectralField, f: &SpectralField, params: &MethodParams) -> Result<SpectralField> {
    let mut g = f.truncate(breve.cutoff());
    g.axpy(-1.0 / (params.sigma * params.h.sqrt()), breve)?;
    Ok(g.potential_unchecked())
}

/// Pressure of method B at the updated layer, on band `2M`.
pub fn recover_pressure_b(
    velocity_next: &SpectralField,
    f_next: &SpectralField,
    params: &MethodParams,
) -> Result<SpectralField> {
    if !(params.h > 0.0) {
        return Err(Error::invalid("pressure recovery of method B needs h > 0"));
    }
    let breve = breve_method_b(velocity_next, params.shift_phase(velocity_next.period()))?;
    pressure_from_breve(&breve, f_next, params)
}

/// Pressure from `grad p = -P_perp[(v, grad) v] + P_perp f`, on band `2M`.
pub fn recover_pressure_c(velocity_next: &SpectralField, f_next: &SpectralField) -> Result<SpectralField> {
    velocity_next.check_compatible(f_next)?;
    let nl = advection(velocity_next)?;
    let mut g = f_next.truncate(nl.cutoff());
    g.axpy(-1.0, &nl)?;
    Ok(g.potential_unchecked())
}

/// Aborts when a coefficient is not finite or the pointwise speed on the
/// collocation grid exceeds `bound`.
pub fn check_blowup(v: &SpectralField, k: usize, bound: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::BlowUp {
            k,
            reason: "non-finite velocity coefficient".into(),
        });
    }
    // the coefficient sum bounds |v(x)| from above, so the grid is only
    // consulted when it is inconclusive
    if v.abs_sum() <= bound {
        return Ok(());
    }
    let grid = v.to_grid(4 * v.cutoff())?;
    let peak = (0..grid[0].len())
        .map(|i| grid.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if peak > bound {
        return Err(Error::BlowUp {
            k,
            reason: format!("max |v| = {peak:e} exceeds bound {bound:e}"),
        });
    }
    Ok(())
}

/// Which layers get a pressure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PressureSchedule {
    EveryLayer,
    FinalOnly,
}

/// Marches from `phi` over all steps of `path`, calling `visit` on every
/// layer (including the initial one) and returning the final layer. Pressure
/// is attached according to `schedule`.
pub fn march<F>(
    problem: &ProblemSpec,
    params: &MethodParams,
    path: &WienerPath,
    schedule: PressureSchedule,
    mut visit: F,
) -> Result<LayerState>
where
    F: FnMut(&LayerState) -> Result<()>,
{
    params.validate()?;
    if (params.sigma - problem.sigma).abs() > 1e-12 * problem.sigma {
        return Err(Error::invalid(format!(
            "method sigma {} differs from problem sigma {}",
            params.sigma, problem.sigma
        )));
    }
    if path.q() != problem.noise_dim {
        return Err(Error::invalid(format!(
            "path has {} noise components, problem needs {}",
            path.q(),
            problem.noise_dim
        )));
    }
    if problem.needs_integral && !path.has_integral() && path.steps() > 0 {
        return Err(Error::invalid("problem needs the path integral I(t)"));
    }
    let steps = path.steps();
    let horizon_gap = (steps as f64 * params.h - problem.horizon).abs();
    if horizon_gap > 1e-9 * problem.horizon.max(1.0) {
        return Err(Error::invalid(format!(
            "{steps} steps of h = {} do not reach T = {}",
            params.h, problem.horizon
        )));
    }
    if steps > 0 && (path.h() - params.h).abs() > 1e-9 * params.h {
        return Err(Error::invalid("path step differs from the method step"));
    }

    let m = params.cutoff;
    let period = problem.period;
    let forcing_at = |t: f64| (problem.forcing)(t).resample(m);
    let noise_at = |t: f64| -> Result<Vec<SpectralField>> {
        (problem.noise)(t).iter().map(|g| g.resample(m)).collect()
    };
    let mut state = LayerState::new(0, 0.0, problem.initial.resample(m)?);
    if state.velocity.period() != period {
        return Err(Error::PeriodMismatch(period, state.velocity.period()));
    }
    check_blowup(&state.velocity, 0, params.blowup_bound)?;

    let a = params.shift_phase(period);
    let needs_breve = params.method == Method::B;
    let mut breve = if needs_breve {
        Some(breve_method_b(&state.velocity, a)?)
    } else {
        None
    };
    let attach = |state: &mut LayerState, breve: Option<&SpectralField>, f: &SpectralField| -> Result<()> {
        state.pressure = Some(match (params.method, breve) {
            (Method::B, Some(b)) => pressure_from_breve(b, f, params)?,
            _ => recover_pressure_c(&state.velocity, f)?,
        });
        Ok(())
    };
    if schedule == PressureSchedule::EveryLayer || steps == 0 {
        attach(&mut state, breve.as_ref(), &forcing_at(0.0)?)?;
    }
    visit(&state)?;

    for k in 0..steps {
        let t_k = path.time(k);
        let f_k = forcing_at(t_k)?;
        let gamma_k = noise_at(t_k)?;
        let dw = path.increment(k);
        check_inputs(&state.velocity, &f_k, &gamma_k, dw, params)?;
        let mut next = match (&breve, params.method) {
            (Some(b), Method::B) => step_b_with(&state, b, &f_k, &gamma_k, dw, params)?,
            _ => step(&state, &f_k, &gamma_k, dw, params)?,
        };
        next.t = path.time(k + 1);
        check_blowup(&next.velocity, k + 1, params.blowup_bound)?;
        if needs_breve {
            breve = Some(breve_method_b(&next.velocity, a)?);
        }
        if schedule == PressureSchedule::EveryLayer || k + 1 == steps {
            let f_next = forcing_at(next.t)?;
            attach(&mut next, breve.as_ref(), &f_next)?;
        }
        visit(&next)?;
        state = next;
    }
    Ok(state)
}

/// Every layer, each with its pressure.
pub fn run_solver(problem: &ProblemSpec, params: &MethodParams, path: &WienerPath) -> Result<Vec<LayerState>> {
    let mut states = Vec::with_capacity(path.steps() + 1);
    march(problem, params, path, PressureSchedule::EveryLayer, |s| {
        states.push(s.clone());
        Ok(())
    })?;
    Ok(states)
}

/// Final layer only, with its pressure.
pub fn run_to_final(problem: &ProblemSpec, params: &MethodParams, path: &WienerPath) -> Result<LayerState> {
    march(problem, params, path, PressureSchedule::FinalOnly, |_| Ok(()))
}

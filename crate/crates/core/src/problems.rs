//! Problem descriptors and the two closed-form model problems.
//!
//! Model 1 has zero forcing and zero initial data, with a decaying Taylor-Green
//! shaped noise coefficient. Model 2 starts from the Taylor-Green vortex and is
//! driven by spatially constant noise, so its exact solution is the
//! deterministic vortex translated along `gamma * I(t)`.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::spectral::{ModeIndex, SpectralField};
use crate::stochastic::PathSummary;

pub type FieldFn = Arc<dyn Fn(f64) -> SpectralField + Send + Sync>;
pub type NoiseFn = Arc<dyn Fn(f64) -> Vec<SpectralField> + Send + Sync>;

/// Exact velocity and pressure as functions of time and the noise values.
pub trait ExactSolution: Send + Sync {
    fn velocity_at(&self, t: f64, path: &PathSummary) -> SpectralField;
    fn pressure_at(&self, t: f64, path: &PathSummary) -> SpectralField;
}

/// Data of one stochastic Navier-Stokes instance. Coefficients are sampled
/// only at layer times.
#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub sigma: f64,
    pub period: f64,
    pub horizon: f64,
    pub noise_dim: usize,
    pub initial: SpectralField,
    pub forcing: FieldFn,
    pub noise: NoiseFn,
    pub exact: Option<Arc<dyn ExactSolution>>,
    pub needs_integral: bool,
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("sigma", &self.sigma)
            .field("period", &self.period)
            .field("horizon", &self.horizon)
            .field("noise_dim", &self.noise_dim)
            .field("has_exact", &self.exact.is_some())
            .finish()
    }
}

impl ProblemSpec {
    /// Checks realness and incompressibility of `phi` and of every noise
    /// coefficient at `t = 0` and `t = T`.
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.period > 0.0 && self.horizon >= 0.0) {
            return Err(Error::Config("sigma, period and horizon must be positive".into()));
        }
        check_real_solenoidal("initial condition", &self.initial)?;
        for t in [0.0, self.horizon] {
            let f = (self.forcing)(t);
            f.require_vector()?;
            check_real("forcing", &f)?;
            let gammas = (self.noise)(t);
            if gammas.len() != self.noise_dim {
                return Err(Error::Config(format!(
                    "{} noise coefficients for noise dimension {}",
                    gammas.len(),
                    self.noise_dim
                )));
            }
            for g in &gammas {
                check_real_solenoidal("noise coefficient", g)?;
            }
        }
        Ok(())
    }

    /// Smallest cut-off that holds `phi`, `f` and every `gamma_r`.
    pub fn min_cutoff(&self) -> usize {
        let mut fields = vec![self.initial.clone(), (self.forcing)(0.0)];
        fields.extend((self.noise)(0.0));
        fields
            .iter()
            .flat_map(|f| f.support(0.0))
            .map(|n| n.n1.unsigned_abs().max(n.n2.unsigned_abs()) as usize + 1)
            .max()
            .unwrap_or(1)
    }
}

fn check_real(what: &str, f: &SpectralField) -> Result<()> {
    let defect = f.hermitian_defect();
    if defect > 1e-12 * f.parseval_norm().max(1.0) {
        return Err(Error::Config(format!("{what} is not real (Hermitian defect {defect:e})")));
    }
    Ok(())
}

fn check_real_solenoidal(what: &str, f: &SpectralField) -> Result<()> {
    check_real(what, f)?;
    let div = f.divergence()?.parseval_norm();
    if div > 1e-12 * f.parseval_norm().max(1.0) {
        return Err(Error::Config(format!("{what} is not divergence free (residual {div:e})")));
    }
    Ok(())
}

/// `lambda = sigma^2 (2 pi kappa / L)^2`.
fn decay_rate(sigma: f64, kappa: i64, period: f64) -> f64 {
    let k = 2.0 * PI * kappa as f64 / period;
    sigma * sigma * k * k
}

/// Band that holds the modes `(+-k, +-k)` and `(+-2k, 0)`.
fn band_for(kappa: i64, multiple: i64) -> usize {
    (multiple * kappa.abs()) as usize + 1
}

/// `(A sin(k x1) cos(k x2), -A cos(k x1) sin(k x2))` with `k = 2 pi kappa / L`.
pub fn taylor_green(amplitude: f64, kappa: i64, period: f64, cutoff: usize) -> SpectralField {
    let mut f = SpectralField::vector_zeros(cutoff, period);
    let q = amplitude / 4.0;
    for s1 in [-1i64, 1] {
        for s2 in [-1i64, 1] {
            let n = ModeIndex::new(s1 * kappa, s2 * kappa);
            f.add_to_coeff(n, 0, Complex64::new(0.0, -(s1 as f64) * q))
                .expect("Taylor-Green mode in band");
            f.add_to_coeff(n, 1, Complex64::new(0.0, s2 as f64 * q))
                .expect("Taylor-Green mode in band");
        }
    }
    f
}

/// `(A^2 / 4)(cos(2 k x1) + cos(2 k x2))` without its mean.
pub fn taylor_green_pressure(amplitude: f64, kappa: i64, period: f64, cutoff: usize) -> SpectralField {
    let mut p = SpectralField::scalar_zeros(cutoff, period);
    let c = Complex64::new(amplitude * amplitude / 8.0, 0.0);
    for n in [(2 * kappa, 0), (-2 * kappa, 0), (0, 2 * kappa), (0, -2 * kappa)] {
        p.add_to_coeff(n.into(), 0, c).expect("pressure mode in band");
    }
    // kappa = 0 collapses everything onto the mean, which pressure does not carry
    p.set_coeff(ModeIndex::ZERO, 0, Complex64::new(0.0, 0.0)).expect("zero mode");
    p
}

/// Coefficients of `x -> V(x - shift) + addend`.
pub fn translate_solution(v: &SpectralField, shift: [f64; 2], addend: &[f64]) -> Result<SpectralField> {
    if addend.len() != v.components() {
        return Err(Error::Components {
            expected: v.components(),
            found: addend.len(),
        });
    }
    let mut out = v.shifted_by([-shift[0], -shift[1]]);
    for (c, a) in addend.iter().enumerate() {
        out.add_to_coeff(ModeIndex::ZERO, c, Complex64::new(*a, 0.0))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub sigma: f64,
    pub amplitude: f64,
    pub kappa: i64,
    pub period: f64,
    pub horizon: f64,
}

impl ModelParams {
    /// Reference configuration on the unit torus.
    pub fn standard() -> Self {
        Self {
            sigma: 0.1,
            amplitude: 1.0,
            kappa: 1,
            period: 1.0,
            horizon: 3.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.period > 0.0 && self.horizon >= 0.0) {
            return Err(Error::Config("sigma, period and horizon must be positive".into()));
        }
        Ok(())
    }
}

struct Model1Exact {
    params: ModelParams,
    lambda: f64,
}

impl ExactSolution for Model1Exact {
    fn velocity_at(&self, t: f64, path: &PathSummary) -> SpectralField {
        let p = &self.params;
        taylor_green(p.amplitude, p.kappa, p.period, band_for(p.kappa, 1))
            .scaled((-self.lambda * t).exp() * path.w1())
    }

    fn pressure_at(&self, t: f64, path: &PathSummary) -> SpectralField {
        let p = &self.params;
        let w = path.w1();
        taylor_green_pressure(p.amplitude, p.kappa, p.period, band_for(p.kappa, 2))
            .scaled((-2.0 * self.lambda * t).exp() * w * w)
    }
}

/// Zero forcing and initial data, one noise term with the decaying
/// Taylor-Green shape; the exact velocity is that shape times `w(t)`.
pub fn model1(params: ModelParams) -> Result<ProblemSpec> {
    params.validate()?;
    let lambda = decay_rate(params.sigma, params.kappa, params.period);
    let band = band_for(params.kappa, 1);
    let shape = taylor_green(params.amplitude, params.kappa, params.period, band);
    let zero = SpectralField::vector_zeros(band, params.period);
    let forcing_zero = zero.clone();
    let problem = ProblemSpec {
        name: "model1".into(),
        sigma: params.sigma,
        period: params.period,
        horizon: params.horizon,
        noise_dim: 1,
        initial: zero,
        forcing: Arc::new(move |_| forcing_zero.clone()),
        noise: Arc::new(move |t| vec![shape.scaled((-lambda * t).exp())]),
        exact: Some(Arc::new(Model1Exact { params, lambda })),
        needs_integral: false,
    };
    problem.validate()?;
    Ok(problem)
}

struct Model2Exact {
    params: ModelParams,
    gamma: [f64; 2],
    lambda: f64,
}

impl Model2Exact {
    fn shift(&self, path: &PathSummary) -> [f64; 2] {
        [self.gamma[0] * path.integral, self.gamma[1] * path.integral]
    }
}

impl ExactSolution for Model2Exact {
    fn velocity_at(&self, t: f64, path: &PathSummary) -> SpectralField {
        let p = &self.params;
        let w = path.w1();
        let base = taylor_green(p.amplitude, p.kappa, p.period, band_for(p.kappa, 1))
            .scaled((-self.lambda * t).exp());
        translate_solution(&base, self.shift(path), &[self.gamma[0] * w, self.gamma[1] * w])
            .expect("vector addend")
    }

    fn pressure_at(&self, t: f64, path: &PathSummary) -> SpectralField {
        let p = &self.params;
        let base = taylor_green_pressure(p.amplitude, p.kappa, p.period, band_for(p.kappa, 2))
            .scaled((-2.0 * self.lambda * t).exp());
        translate_solution(&base, self.shift(path), &[0.0]).expect("scalar addend")
    }
}

/// Taylor-Green initial data driven by the constant noise `(gamma1, gamma2) dw`.
pub fn model2(params: ModelParams, gamma: [f64; 2]) -> Result<ProblemSpec> {
    params.validate()?;
    let lambda = decay_rate(params.sigma, params.kappa, params.period);
    let band = band_for(params.kappa, 1);
    let phi = taylor_green(params.amplitude, params.kappa, params.period, band);
    let zero = SpectralField::vector_zeros(band, params.period);
    let noise = SpectralField::constant(band, params.period, &gamma);
    let problem = ProblemSpec {
        name: "model2".into(),
        sigma: params.sigma,
        period: params.period,
        horizon: params.horizon,
        noise_dim: 1,
        initial: phi,
        forcing: Arc::new(move |_| zero.clone()),
        noise: Arc::new(move |_| vec![noise.clone()]),
        exact: Some(Arc::new(Model2Exact {
            params,
            gamma,
            lambda,
        })),
        needs_integral: true,
    };
    problem.validate()?;
    Ok(problem)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    sigma: f64,
    period: f64,
    horizon: f64,
    #[serde(default = "one")]
    noise_dim: usize,
    #[serde(default)]
    phi: Vec<ModeEntry>,
    #[serde(default)]
    forcing: Vec<ModeEntry>,
    #[serde(default)]
    noise: Vec<NoiseEntry>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeEntry {
    n: [i64; 2],
    re: [f64; 2],
    #[serde(default)]
    im: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseEntry {
    /// 1-based noise component.
    r: usize,
    n: [i64; 2],
    re: [f64; 2],
    #[serde(default)]
    im: [f64; 2],
}

fn field_from_entries<'a>(
    entries: impl Iterator<Item = (&'a [i64; 2], &'a [f64; 2], &'a [f64; 2])>,
    cutoff: usize,
    period: f64,
) -> Result<SpectralField> {
    let mut f = SpectralField::vector_zeros(cutoff, period);
    for (n, re, im) in entries {
        for c in 0..2 {
            f.add_to_coeff(ModeIndex::new(n[0], n[1]), c, Complex64::new(re[c], im[c]))?;
        }
    }
    Ok(f)
}

/// Time-independent problem from a TOML mode list, e.g.
///
/// ```toml
/// sigma = 0.1
/// period = 1.0
/// horizon = 1.0
/// noise_dim = 1
///
/// [[phi]]
/// n = [1, 0]
/// re = [0.0, 0.5]
///
/// [[phi]]
/// n = [-1, 0]
/// re = [0.0, 0.5]
///
/// [[noise]]
/// r = 1
/// n = [0, 0]
/// re = [0.3, 0.0]
/// ```
///
/// Both members of every Hermitian pair must be listed.
pub fn custom_problem_from_toml(text: &str) -> Result<ProblemSpec> {
    let file: ProblemFile = toml::from_str(text).map_err(|e| Error::Config(format!("problem file: {e}")))?;
    if file.noise_dim == 0 {
        return Err(Error::Config("noise_dim must be positive".into()));
    }
    let all_modes = file
        .phi
        .iter()
        .map(|e| e.n)
        .chain(file.forcing.iter().map(|e| e.n))
        .chain(file.noise.iter().map(|e| e.n));
    let cutoff = all_modes
        .map(|n| n[0].unsigned_abs().max(n[1].unsigned_abs()) as usize + 1)
        .max()
        .unwrap_or(1);
    if !(file.period > 0.0) {
        return Err(Error::Config("period must be positive".into()));
    }
    let phi = field_from_entries(file.phi.iter().map(|e| (&e.n, &e.re, &e.im)), cutoff, file.period)?;
    let forcing = field_from_entries(file.forcing.iter().map(|e| (&e.n, &e.re, &e.im)), cutoff, file.period)?;
    let mut gammas = Vec::with_capacity(file.noise_dim);
    for r in 1..=file.noise_dim {
        gammas.push(field_from_entries(
            file.noise.iter().filter(|e| e.r == r).map(|e| (&e.n, &e.re, &e.im)),
            cutoff,
            file.period,
        )?);
    }
    if let Some(e) = file.noise.iter().find(|e| e.r == 0 || e.r > file.noise_dim) {
        return Err(Error::Config(format!("noise entry with r = {} outside 1..={}", e.r, file.noise_dim)));
    }
    let problem = ProblemSpec {
        name: "custom".into(),
        sigma: file.sigma,
        period: file.period,
        horizon: file.horizon,
        noise_dim: file.noise_dim,
        initial: phi,
        forcing: Arc::new(move |_| forcing.clone()),
        noise: Arc::new(move |_| gammas.clone()),
        exact: None,
        needs_integral: false,
    };
    problem.validate()?;
    Ok(problem)
}

pub fn load_custom_problem(path: &Path) -> Result<ProblemSpec> {
    custom_problem_from_toml(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn summary(w: f64, i: f64) -> PathSummary {
        PathSummary::new(vec![w], i)
    }

    #[test]
    fn model1_velocity_examples() {
        let p = model1(ModelParams::standard()).unwrap();
        let exact = p.exact.clone().unwrap();
        assert_eq!(exact.velocity_at(0.0, &summary(0.0, 0.0)).parseval_norm(), 0.0);
        let norm = exact.velocity_at(3.0, &summary(3f64.sqrt(), 0.0)).parseval_norm();
        assert!((norm - 0.37470).abs() < 5e-6, "{norm}");
    }

    #[test]
    fn model1_pressure_norm() {
        let p = model1(ModelParams::standard()).unwrap();
        let exact = p.exact.clone().unwrap();
        let w = 3f64.sqrt();
        let lambda = 0.01 * (2.0 * PI).powi(2);
        let analytic = 0.25 * (-2.0 * lambda * 3.0).exp() * w * w;
        let norm = exact.pressure_at(3.0, &summary(w, 0.0)).parseval_norm();
        assert!((norm - analytic).abs() < 1e-15);
    }

    #[test]
    fn model1_noise_support_and_grid_oracle() {
        let params = ModelParams { kappa: 2, ..ModelParams::standard() };
        let p = model1(params).unwrap();
        let g = (p.noise)(0.0).remove(0);
        let expected: BTreeSet<ModeIndex> =
            [(2, 2), (2, -2), (-2, 2), (-2, -2)].into_iter().map(ModeIndex::from).collect();
        assert_eq!(g.support(1e-15), expected);
        for n in &expected {
            assert!((g.coeff(*n, 0).norm() - 0.25).abs() < 1e-15);
            assert!((g.coeff(*n, 1).norm() - 0.25).abs() < 1e-15);
        }
        // transform of point samples of the trigonometric formula
        let grid_n = 16;
        let k = 2.0 * PI * 2.0;
        let mut comps = vec![vec![0.0; grid_n * grid_n]; 2];
        for i in 0..grid_n {
            for j in 0..grid_n {
                let (x1, x2) = (i as f64 / grid_n as f64, j as f64 / grid_n as f64);
                comps[0][i * grid_n + j] = (k * x1).sin() * (k * x2).cos();
                comps[1][i * grid_n + j] = -(k * x1).cos() * (k * x2).sin();
            }
        }
        let sampled = SpectralField::from_grid(&comps, grid_n, 1.0, g.cutoff()).unwrap();
        assert!(sampled.sub(&g).unwrap().max_abs_coeff() < 1e-14);
        assert!(g.divergence().unwrap().parseval_norm() < 1e-14);
    }

    #[test]
    fn model2_examples() {
        let params = ModelParams::standard();
        let still = model2(params, [0.0, 0.0]).unwrap().exact.unwrap();
        let lambda = decay_rate(0.1, 1, 1.0);
        let tg = taylor_green(1.0, 1, 1.0, 2);
        let v = still.velocity_at(0.7, &summary(1.3, 0.4));
        assert!(v.sub(&tg.scaled((-lambda * 0.7).exp())).unwrap().max_abs_coeff() < 1e-16);

        let moving = model2(params, [0.5, 0.2]).unwrap().exact.unwrap();
        let v = moving.velocity_at(0.7, &summary(1.3, 0.0));
        let mut expected = tg.scaled((-lambda * 0.7).exp());
        expected.set_coeff(ModeIndex::ZERO, 0, Complex64::new(0.5 * 1.3, 0.0)).unwrap();
        expected.set_coeff(ModeIndex::ZERO, 1, Complex64::new(0.2 * 1.3, 0.0)).unwrap();
        assert!(v.sub(&expected).unwrap().max_abs_coeff() < 1e-16);

        // shift theorem
        let ihat = 0.37;
        let shifted = moving.velocity_at(0.7, &summary(1.3, ihat));
        for mode in v.modes().filter(|m| !m.is_zero()) {
            let phase = Complex64::from_polar(
                1.0,
                -2.0 * PI * (mode.n1 as f64 * 0.5 * ihat + mode.n2 as f64 * 0.2 * ihat),
            );
            for c in 0..2 {
                assert!((shifted.coeff(mode, c) - v.coeff(mode, c) * phase).norm() < 1e-15);
            }
        }
        assert_eq!(shifted.coeff_vec(ModeIndex::ZERO), v.coeff_vec(ModeIndex::ZERO));
    }

    #[test]
    fn translate_examples() {
        let tg = taylor_green(1.0, 1, 1.0, 3);
        assert_eq!(translate_solution(&tg, [0.0, 0.0], &[0.0, 0.0]).unwrap(), tg);
        let full = translate_solution(&tg, [1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(full.sub(&tg).unwrap().max_abs_coeff() < 1e-15);
        let mut single = SpectralField::scalar_zeros(2, 1.0);
        single.set_coeff((1, 0).into(), 0, Complex64::new(0.3, 0.1)).unwrap();
        let half = translate_solution(&single, [0.5, 0.0], &[0.0]).unwrap();
        assert!((half.coeff((1, 0).into(), 0) + Complex64::new(0.3, 0.1)).norm() < 1e-15);
        assert!(translate_solution(&single, [0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn exact_solutions_are_real_and_solenoidal() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m1 = model1(ModelParams::standard()).unwrap().exact.unwrap();
        let m2 = model2(ModelParams { kappa: 2, ..ModelParams::standard() }, [0.5, 0.2])
            .unwrap()
            .exact
            .unwrap();
        for _ in 0..20 {
            let t = rng.random_range(0.0..3.0);
            let s = summary(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            for exact in [&m1, &m2] {
                let v = exact.velocity_at(t, &s);
                let p = exact.pressure_at(t, &s);
                assert!(v.divergence().unwrap().parseval_norm() <= 1e-12 * v.parseval_norm().max(1.0));
                assert!(v.hermitian_defect() <= 1e-15);
                assert!(p.hermitian_defect() <= 1e-15);
            }
        }
    }

    /// Exact model-1 solution in the integral form over one step: the change in
    /// `v` minus the noise increment is `O(h)` relative to it.
    #[test]
    fn model1_weak_residual() {
        let p = model1(ModelParams::standard()).unwrap();
        let exact = p.exact.clone().unwrap();
        let sigma = p.sigma;
        let mut gaps = Vec::new();
        for h in [0.1, 0.05, 0.025] {
            let (t, w0, dw) = (0.5, 0.4, 0.3 * f64::sqrt(h / 0.1));
            let v0 = exact.velocity_at(t, &summary(w0, 0.0));
            let v1 = exact.velocity_at(t + h, &summary(w0 + dw, 0.0));
            // deterministic part over the step: (sigma^2 / 2) Laplacian of v0 times h
            let lap = v0
                .derivative(crate::spectral::Axis::First)
                .derivative(crate::spectral::Axis::First)
                .add(&v0.derivative(crate::spectral::Axis::Second).derivative(crate::spectral::Axis::Second))
                .unwrap()
                .scaled(0.5 * sigma * sigma * h);
            let noise = (p.noise)(t).remove(0).resample(v0.cutoff()).unwrap().scaled(dw);
            let residual = v1.sub(&v0).unwrap().sub(&lap).unwrap().sub(&noise).unwrap();
            gaps.push(residual.parseval_norm() / noise.parseval_norm());
        }
        assert!(gaps[1] < 0.6 * gaps[0] && gaps[2] < 0.6 * gaps[1], "{gaps:?}");
    }

    #[test]
    fn custom_problem_loader() {
        let text = r#"
sigma = 0.1
period = 1.0
horizon = 1.0
noise_dim = 1

[[phi]]
n = [1, 0]
re = [0.0, 0.5]

[[phi]]
n = [-1, 0]
re = [0.0, 0.5]

[[noise]]
r = 1
n = [0, 0]
re = [0.3, 0.0]
"#;
        let p = custom_problem_from_toml(text).unwrap();
        assert_eq!(p.min_cutoff(), 2);
        assert!(p.exact.is_none());
        assert_eq!((p.noise)(0.0).len(), 1);

        let compressive = text.replace("re = [0.0, 0.5]", "re = [0.5, 0.0]");
        assert!(matches!(custom_problem_from_toml(&compressive), Err(Error::Config(_))));
        let unpaired = "sigma = 0.1\nperiod = 1.0\nhorizon = 1.0\n[[phi]]\nn = [1, 0]\nre = [0.0, 0.5]\n";
        assert!(custom_problem_from_toml(unpaired).is_err());
        assert!(custom_problem_from_toml("sigma = 0.1").is_err());
    }
}

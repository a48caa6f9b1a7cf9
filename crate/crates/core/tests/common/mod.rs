#![allow(dead_code)]

use std::f64::consts::PI;

use layerflow::experiment::ExperimentConfig;
use layerflow::{Method, ModeIndex, SpectralField};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Prints one verdict line and returns `pass`.
pub fn verdict(criterion: u32, pass: bool, detail: &str) -> bool {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {criterion:>2} {tag}: {detail}");
    pass
}

/// Configuration on the unit torus with `sigma = 0.1`, `A = 1`, `kappa = 1`, `T = 3`.
pub fn config(model: &str, scheme: Method, hs: &[f64], runs: u64, seed: u64, gamma: [f64; 2]) -> ExperimentConfig {
    let h: Vec<String> = hs.iter().map(|h| format!("{h:e}")).collect();
    let text = format!(
        "[model]\nkind = \"{model}\"\ngamma = [{}, {}]\n\n[method]\nscheme = \"{scheme}\"\ncutoff = 2\n\n\
         [sweep]\nh = [{}]\nruns = {runs}\nseed = {seed}\n",
        gamma[0],
        gamma[1],
        h.join(", ")
    );
    ExperimentConfig::parse(&text).expect("acceptance config parses")
}

/// `lambda = sigma^2 (2 pi kappa / L)^2` for the standard configuration.
pub fn standard_lambda() -> f64 {
    let k = 2.0 * PI;
    0.01 * k * k
}

/// Pointwise Taylor-Green velocity `(A sin(k x1) cos(k x2), -A cos(k x1) sin(k x2))`, `k = 2 pi`.
pub fn taylor_green_at(x: [f64; 2], amplitude: f64) -> [f64; 2] {
    let k = 2.0 * PI;
    [
        amplitude * (k * x[0]).sin() * (k * x[1]).cos(),
        -amplitude * (k * x[0]).cos() * (k * x[1]).sin(),
    ]
}

/// Nodes of the uniform `g x g` grid on the unit torus.
pub fn grid(g: usize) -> Vec<[f64; 2]> {
    (0..g * g)
        .map(|i| [(i / g) as f64 / g as f64, (i % g) as f64 / g as f64])
        .collect()
}

/// Real field with modes `|n_i| < band` stored at `cutoff`; solenoidal when `project`.
pub fn random_field(seed: u64, cutoff: usize, band: usize, components: usize, project: bool) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = SpectralField::zeros(cutoff, 1.0, components);
    let b = band as i64;
    for n1 in (1 - b)..b {
        for n2 in (1 - b)..b {
            for c in 0..components {
                let v = Complex64::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                f.set_coeff(ModeIndex::new(n1, n2), c, v).unwrap();
            }
        }
    }
    let f = f.symmetrized();
    if project {
        f.project().unwrap()
    } else {
        f
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

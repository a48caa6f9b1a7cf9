//! Driving noise: Wiener paths with the pathwise integral `I(t) = int_0^t w_1 ds`,
//! coarse-graining for fixed-trajectory studies, and Rademacher enumeration.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One realisation of a `q`-dimensional Wiener process on the uniform grid
/// `t_k = k h`, `h = T / N`.
///
/// `increments[k] == values[k + 1] - values[k]` holds bitwise: the running
/// values are accumulated first and the increments are read off as their
/// differences.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath {
    q: usize,
    horizon: f64,
    steps: usize,
    h: f64,
    increments: Vec<f64>,
    values: Vec<f64>,
    i_values: Option<Vec<f64>>,
    seed: u64,
    run: u64,
}

/// Values of `w(t)` and `I(t)` at one time, the input of the exact solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub w: Vec<f64>,
    pub integral: f64,
}

impl PathSummary {
    pub fn new(w: Vec<f64>, integral: f64) -> Self {
        Self { w, integral }
    }

    pub fn w1(&self) -> f64 {
        self.w.first().copied().unwrap_or(0.0)
    }
}

/// Generator for run `run_index` of the family keyed by `seed`. Each run reads
/// its own ChaCha stream, so runs never overlap and can be produced in any
/// order on any thread.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// Samples a path with i.i.d. `N(0, h)` increments. Per step the generator
/// yields `q` increment normals followed by one normal for `I`; the latter is
/// drawn even when `with_integral` is false so `w` does not depend on the flag.
pub fn generate_path(
    q: usize,
    horizon: f64,
    steps: usize,
    seed: u64,
    run_index: u64,
    with_integral: bool,
) -> Result<WienerPath> {
    if q == 0 {
        return Err(Error::invalid("noise dimension must be positive"));
    }
    if steps == 0 {
        return Err(Error::invalid("a path needs at least one step"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("path horizon must be positive"));
    }
    let h = horizon / steps as f64;
    let sqrt_h = h.sqrt();
    let i_scale = h * sqrt_h / 12f64.sqrt();
    let mut rng = run_rng(seed, run_index);

    let mut values = vec![0.0; (steps + 1) * q];
    let mut integral = Vec::with_capacity(steps + 1);
    integral.push(0.0);
    let mut dw = vec![0.0; q];
    for k in 0..steps {
        for d in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *d = sqrt_h * z;
        }
        let eta: f64 = rng.sample(StandardNormal);
        for r in 0..q {
            values[(k + 1) * q + r] = values[k * q + r] + dw[r];
        }
        let w_k = values[k * q];
        let real_dw = values[(k + 1) * q] - w_k;
        integral.push(integral[k] + h * w_k + 0.5 * h * real_dw + i_scale * eta);
    }
    let increments = differences(&values, q);
    Ok(WienerPath {
        q,
        horizon,
        steps,
        h,
        increments,
        values,
        i_values: with_integral.then_some(integral),
        seed,
        run: run_index,
    })
}

fn differences(values: &[f64], q: usize) -> Vec<f64> {
    let rows = values.len() / q;
    let mut out = Vec::with_capacity((rows - 1) * q);
    for k in 0..rows - 1 {
        for r in 0..q {
            out.push(values[(k + 1) * q + r] - values[k * q + r]);
        }
    }
    out
}

impl WienerPath {
    /// Path with no steps, used for runs of zero length.
    pub fn empty(q: usize, with_integral: bool) -> Self {
        Self {
            q,
            horizon: 0.0,
            steps: 0,
            h: 0.0,
            increments: Vec::new(),
            values: vec![0.0; q],
            i_values: with_integral.then(|| vec![0.0]),
            seed: 0,
            run: 0,
        }
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn run_index(&self) -> u64 {
        self.run
    }

    pub fn has_integral(&self) -> bool {
        self.i_values.is_some()
    }

    /// `Delta_k w`, one entry per noise component.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.q..(k + 1) * self.q]
    }

    /// `w(t_k)`.
    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.q..(k + 1) * self.q]
    }

    /// `I(t_k)`, when the path carries the integral.
    pub fn integral(&self, k: usize) -> Option<f64> {
        self.i_values.as_ref().map(|v| v[k])
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn summary(&self, k: usize) -> PathSummary {
        PathSummary::new(self.value(k).to_vec(), self.integral(k).unwrap_or(0.0))
    }

    pub fn final_summary(&self) -> PathSummary {
        self.summary(self.steps)
    }

    /// Path on the grid of step `factor * h` sharing this realisation: values
    /// and `I` are subsampled, increments are differences of the subsampled
    /// values.
    pub fn coarsen(&self, factor: usize) -> Result<WienerPath> {
        if factor == 0 || self.steps % factor != 0 {
            return Err(Error::invalid(format!(
                "coarsening factor {factor} does not divide {} steps",
                self.steps
            )));
        }
        let steps = self.steps / factor;
        let q = self.q;
        let mut values = Vec::with_capacity((steps + 1) * q);
        for k in 0..=steps {
            values.extend_from_slice(self.value(k * factor));
        }
        let i_values = self
            .i_values
            .as_ref()
            .map(|iv| (0..=steps).map(|k| iv[k * factor]).collect());
        Ok(WienerPath {
            q,
            horizon: self.horizon,
            steps,
            h: self.horizon / steps as f64,
            increments: differences(&values, q),
            values,
            i_values,
            seed: self.seed,
            run: self.run,
        })
    }

    /// CSV with a `#` metadata line and columns `k,t_k,w_1..w_q,I`. Floats use
    /// the shortest representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# q={} horizon={} steps={} seed={} run={} integral={}",
            self.q,
            self.horizon,
            self.steps,
            self.seed,
            self.run,
            self.has_integral()
        );
        s.push_str("k,t_k");
        for r in 1..=self.q {
            let _ = write!(s, ",w_{r}");
        }
        s.push_str(",I\n");
        for k in 0..=self.steps {
            let _ = write!(s, "{k},{}", self.time(k));
            for w in self.value(k) {
                let _ = write!(s, ",{w}");
            }
            match self.integral(k) {
                Some(i) => {
                    let _ = writeln!(s, ",{i}");
                }
                None => s.push_str(",\n"),
            }
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<WienerPath> {
        let bad = |msg: &str| Error::Config(format!("path file: {msg}"));
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| bad("empty file"))?;
        let meta = meta.strip_prefix('#').ok_or_else(|| bad("missing metadata line"))?;
        let mut q = None;
        let mut horizon = None;
        let mut steps = None;
        let mut seed = 0;
        let mut run = 0;
        let mut with_integral = false;
        for field in meta.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| bad("malformed metadata"))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| bad("malformed number"));
            let int = |v: &str| v.parse::<u64>().map_err(|_| bad("malformed integer"));
            match key {
                "q" => q = Some(int(value)? as usize),
                "horizon" => horizon = Some(num(value)?),
                "steps" => steps = Some(int(value)? as usize),
                "seed" => seed = int(value)?,
                "run" => run = int(value)?,
                "integral" => with_integral = value == "true",
                _ => {}
            }
        }
        let q = q.ok_or_else(|| bad("missing q"))?;
        let horizon = horizon.ok_or_else(|| bad("missing horizon"))?;
        let steps = steps.ok_or_else(|| bad("missing steps"))?;
        if q == 0 {
            return Err(bad("q must be positive"));
        }
        lines.next().ok_or_else(|| bad("missing header"))?;
        let mut values = Vec::with_capacity((steps + 1) * q);
        let mut integral = Vec::with_capacity(steps + 1);
        for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != q + 3 {
                return Err(bad("wrong column count"));
            }
            if cols[0].parse::<usize>().ok() != Some(row) {
                return Err(bad("rows out of order"));
            }
            for c in &cols[2..2 + q] {
                values.push(c.parse::<f64>().map_err(|_| bad("malformed value"))?);
            }
            if with_integral {
                integral.push(cols[q + 2].parse::<f64>().map_err(|_| bad("malformed integral"))?);
            }
        }
        if values.len() != (steps + 1) * q {
            return Err(bad("row count does not match steps"));
        }
        Ok(WienerPath {
            q,
            horizon,
            steps,
            h: if steps == 0 { 0.0 } else { horizon / steps as f64 },
            increments: differences(&values, q),
            values,
            i_values: with_integral.then_some(integral),
            seed,
            run,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WienerPath> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// All `2^n` sign vectors. Bit `i` of the index selects `-1` in component
/// `i`, so the first vector is all ones and the last is all minus ones.
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl RademacherSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 || dim > 16 {
            return Err(Error::invalid("Rademacher dimension must be in 1..=16"));
        }
        let vectors = (0..1usize << dim)
            .map(|j| {
                (0..dim)
                    .map(|i| if j >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect()
            })
            .collect();
        Ok(Self { dim, vectors })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.vectors.len() as f64
    }
}

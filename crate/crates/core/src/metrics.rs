//! Error functionals, Monte Carlo aggregation and convergence-order fits.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectral::SpectralField;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// `(||approx - exact|| / ||exact||, ||exact||)` in coefficient space.
pub fn relative_l2_error(approx: &SpectralField, exact: &SpectralField) -> Result<(f64, f64)> {
    approx.check_compatible(exact)?;
    let denom = exact.parseval_norm();
    if denom == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let diff = approx.sub(exact)?;
    Ok((diff.parseval_norm() / denom, denom))
}

/// Squared distances entering one Monte Carlo sample:
/// `num = sum_n |approx_n - exact_n|^2`, `den = sum_n |exact_n|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectorySample {
    pub num_v: f64,
    pub den_v: f64,
    pub num_p: f64,
    pub den_p: f64,
}

fn squared_gap(approx: &SpectralField, exact: &SpectralField) -> Result<(f64, f64)> {
    let band = approx.cutoff().max(exact.cutoff());
    let a = approx.resample(band)?;
    let e = exact.resample(band)?;
    Ok((a.sub(&e)?.parseval_norm().powi(2), e.parseval_norm().powi(2)))
}

impl TrajectorySample {
    /// Compares approximate and exact fields, widening both to the larger band.
    pub fn compare(
        approx_v: &SpectralField,
        exact_v: &SpectralField,
        approx_p: &SpectralField,
        exact_p: &SpectralField,
    ) -> Result<Self> {
        let (num_v, den_v) = squared_gap(approx_v, exact_v)?;
        let (num_p, den_p) = squared_gap(approx_p, exact_p)?;
        Ok(Self {
            num_v,
            den_v,
            num_p,
            den_p,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub h: f64,
    pub steps: usize,
    pub err_v: f64,
    pub halfwidth_v: f64,
    pub err_p: f64,
    pub halfwidth_p: f64,
    pub denom_v: f64,
    pub denom_p: f64,
    /// 95% half-widths of the denominator estimates, zero for one trajectory.
    pub denom_halfwidth_v: f64,
    pub denom_halfwidth_p: f64,
    pub runs: u64,
    pub seed: u64,
}

impl ErrorReport {
    /// Report of a single trajectory, with zero half-widths.
    pub fn single(h: f64, steps: usize, seed: u64, sample: &TrajectorySample) -> Result<Self> {
        if sample.den_v == 0.0 || sample.den_p == 0.0 {
            return Err(Error::ZeroDenominator);
        }
        Ok(Self {
            h,
            steps,
            err_v: (sample.num_v / sample.den_v).sqrt(),
            halfwidth_v: 0.0,
            err_p: (sample.num_p / sample.den_p).sqrt(),
            halfwidth_p: 0.0,
            denom_v: sample.den_v.sqrt(),
            denom_p: sample.den_p.sqrt(),
            denom_halfwidth_v: 0.0,
            denom_halfwidth_p: 0.0,
            runs: 1,
            seed,
        })
    }
}

/// Sample mean and standard deviation (divisor `K - 1`).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Ratio `sqrt(E num) / sqrt(E den)` with the delta-method half-width of the
/// numerator, `Z95 std(num) / (2 sqrt(E num) sqrt(K))`, divided by `sqrt(E den)`.
/// Also returns `sqrt(E den)` and its own half-width.
fn ratio_estimate(num: &[f64], den: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let k = num.len() as f64;
    let (mn, sn) = mean_std(num);
    let (md, sd) = mean_std(den);
    if md == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    let root_n = mn.sqrt();
    let root_d = md.sqrt();
    let hw_num = if root_n > 0.0 { Z95 * sn / (2.0 * root_n * k.sqrt()) } else { 0.0 };
    let hw_den = Z95 * sd / (2.0 * root_d * k.sqrt());
    Ok((root_n / root_d, hw_num / root_d, root_d, hw_den))
}

/// Runs `runner(0..K)` in parallel and reduces in run order, so the report is
/// independent of the thread count. The first failing run aborts the estimate.
pub fn mean_square_error<F>(runner: F, runs: u64, base_seed: u64, h: f64, steps: usize) -> Result<ErrorReport>
where
    F: Fn(u64) -> Result<TrajectorySample> + Sync,
{
    let mut reports = mean_square_sweep(|run| Ok(vec![runner(run)?]), runs, base_seed, &[(h, steps)])?;
    Ok(reports.remove(0))
}

/// Like [`mean_square_error`] for several step sizes at once: `runner(run)`
/// returns one sample per entry of `levels`, all computed on the same noise
/// realisation.
pub fn mean_square_sweep<F>(runner: F, runs: u64, base_seed: u64, levels: &[(f64, usize)]) -> Result<Vec<ErrorReport>>
where
    F: Fn(u64) -> Result<Vec<TrajectorySample>> + Sync,
{
    if runs < 2 {
        return Err(Error::invalid("mean-square error needs at least two runs"));
    }
    let samples: Vec<Result<Vec<TrajectorySample>>> = (0..runs).into_par_iter().map(&runner).collect();
    let mut pulled = Vec::with_capacity(samples.len());
    for (run, s) in samples.into_iter().enumerate() {
        let s = s.map_err(|e| Error::RunFailed {
            run: run as u64,
            source: Box::new(e),
        })?;
        if s.len() != levels.len() {
            return Err(Error::invalid("runner returned the wrong number of samples"));
        }
        pulled.push(s);
    }
    levels
        .iter()
        .enumerate()
        .map(|(i, &(h, steps))| {
            let col = |f: fn(&TrajectorySample) -> f64| pulled.iter().map(|s| f(&s[i])).collect::<Vec<f64>>();
            let (err_v, halfwidth_v, denom_v, denom_halfwidth_v) = ratio_estimate(&col(|s| s.num_v), &col(|s| s.den_v))?;
            let (err_p, halfwidth_p, denom_p, denom_halfwidth_p) = ratio_estimate(&col(|s| s.num_p), &col(|s| s.den_p))?;
            Ok(ErrorReport {
                h,
                steps,
                err_v,
                halfwidth_v,
                err_p,
                halfwidth_p,
                denom_v,
                denom_p,
                denom_halfwidth_v,
                denom_halfwidth_p,
                runs,
                seed: base_seed,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(ln h, ln err)`.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares line through `(ln h, ln err)`.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit> {
    let mut hs: Vec<f64> = points.iter().map(|p| p.0).collect();
    hs.sort_by(f64::total_cmp);
    hs.dedup();
    if hs.len() < 3 {
        return Err(Error::invalid("an order fit needs at least three distinct step sizes"));
    }
    if let Some(p) = points.iter().find(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
        return Err(Error::invalid(format!(
            "cannot take logarithms of h = {}, err = {}",
            p.0, p.1
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(h, e)| (h.ln(), e.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(OrderFit {
        slope,
        intercept,
        r_squared,
        points: logs,
    })
}

/// Velocity and pressure fits over a sweep.
pub fn fit_reports(reports: &[ErrorReport]) -> Result<(OrderFit, OrderFit)> {
    let v: Vec<(f64, f64)> = reports.iter().map(|r| (r.h, r.err_v)).collect();
    let p: Vec<(f64, f64)> = reports.iter().map(|r| (r.h, r.err_p)).collect();
    Ok((fit_order(&v)?, fit_order(&p)?))
}

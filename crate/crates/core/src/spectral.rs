//! Truncated Fourier representation of real periodic fields on the square
//! torus `Q = (0, L)^2`.
//!
//! A field with cut-off `M` stores one complex coefficient per component for
//! every mode `n = (n1, n2)` with `-M <= n_i <= M - 1`, multiplying the basis
//! function `exp(i (2 pi / L) (n, x))`. Fields built from real data keep the
//! `-M` row and column at zero so that Hermitian symmetry `u_{-n} = conj(u_n)`
//! can hold for every stored mode.
//!
//! With this normalisation Parseval reads
//! `sum_n |u_n|^2 = (1 / L^2) * int_Q |u(x)|^2 dx`.

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Integer wave vector of a Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeIndex {
    pub n1: i64,
    pub n2: i64,
}

impl ModeIndex {
    pub const ZERO: ModeIndex = ModeIndex { n1: 0, n2: 0 };

    pub const fn new(n1: i64, n2: i64) -> Self {
        Self { n1, n2 }
    }

    pub fn neg(self) -> Self {
        Self::new(-self.n1, -self.n2)
    }

    pub fn norm_sq(self) -> i64 {
        self.n1 * self.n1 + self.n2 * self.n2
    }

    pub fn is_zero(self) -> bool {
        self.n1 == 0 && self.n2 == 0
    }

    /// `-M <= n_i <= M - 1` for both components.
    pub fn in_band(self, cutoff: usize) -> bool {
        let m = cutoff as i64;
        (-m..m).contains(&self.n1) && (-m..m).contains(&self.n2)
    }

    /// `|n_i| <= M - 1`, the part of the band where real fields live.
    pub fn in_symmetric_band(self, cutoff: usize) -> bool {
        let m = cutoff as i64;
        self.n1.abs() < m && self.n2.abs() < m
    }

    pub fn as_f64(self) -> [f64; 2] {
        [self.n1 as f64, self.n2 as f64]
    }

    pub fn component(self, axis: Axis) -> i64 {
        match axis {
            Axis::First => self.n1,
            Axis::Second => self.n2,
        }
    }
}

impl std::ops::Add for ModeIndex {
    type Output = ModeIndex;
    fn add(self, rhs: ModeIndex) -> ModeIndex {
        ModeIndex::new(self.n1 + rhs.n1, self.n2 + rhs.n2)
    }
}

impl From<(i64, i64)> for ModeIndex {
    fn from((n1, n2): (i64, i64)) -> Self {
        Self::new(n1, n2)
    }
}

/// Spatial direction of a partial derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::First, Axis::Second];

    pub fn index(self) -> usize {
        match self {
            Axis::First => 0,
            Axis::Second => 1,
        }
    }
}

/// Fourier coefficients of a periodic scalar (`components == 1`) or vector
/// (`components == 2`) field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    cutoff: usize,
    period: f64,
    components: usize,
    coeffs: Vec<Complex64>,
}

/// Helmholtz-Hodge-Leray split `u = Pu + P_perp u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LerayPair {
    pub solenoidal: SpectralField,
    pub gradient_part: SpectralField,
}

impl SpectralField {
    /// Zero field. Panics on a zero cut-off, zero components, or a
    /// non-positive period.
    pub fn zeros(cutoff: usize, period: f64, components: usize) -> Self {
        assert!(cutoff >= 1, "cut-off must be positive");
        assert!(components >= 1, "a field needs at least one component");
        assert!(
            period.is_finite() && period > 0.0,
            "period must be positive"
        );
        let side = 2 * cutoff;
        Self {
            cutoff,
            period,
            components,
            coeffs: vec![ZERO; components * side * side],
        }
    }

    pub fn scalar_zeros(cutoff: usize, period: f64) -> Self {
        Self::zeros(cutoff, period, 1)
    }

    pub fn vector_zeros(cutoff: usize, period: f64) -> Self {
        Self::zeros(cutoff, period, 2)
    }

    /// Builds a field from an explicit mode list. Repeated modes accumulate.
    pub fn from_modes(
        cutoff: usize,
        period: f64,
        components: usize,
        modes: &[(ModeIndex, Vec<Complex64>)],
    ) -> Result<Self> {
        if cutoff == 0 || components == 0 || !(period.is_finite() && period > 0.0) {
            return Err(Error::invalid(
                "cut-off, component count and period must be positive",
            ));
        }
        let mut field = Self::zeros(cutoff, period, components);
        for (mode, values) in modes {
            if values.len() != components {
                return Err(Error::Components {
                    expected: components,
                    found: values.len(),
                });
            }
            for (c, v) in values.iter().enumerate() {
                field.add_to_coeff(*mode, c, *v)?;
            }
        }
        Ok(field)
    }

    /// Constant vector (or scalar) field.
    pub fn constant(cutoff: usize, period: f64, value: &[f64]) -> Self {
        let mut field = Self::zeros(cutoff, period, value.len());
        for (c, v) in value.iter().enumerate() {
            let idx = field.flat(c, field.slot(ModeIndex::ZERO));
            field.coeffs[idx] = Complex64::new(*v, 0.0);
        }
        field
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    fn side(&self) -> usize {
        2 * self.cutoff
    }

    fn block(&self) -> usize {
        self.side() * self.side()
    }

    /// Position of an in-band mode inside one component block.
    fn slot(&self, mode: ModeIndex) -> usize {
        let m = self.cutoff as i64;
        ((mode.n1 + m) as usize) * self.side() + (mode.n2 + m) as usize
    }

    fn flat(&self, component: usize, slot: usize) -> usize {
        component * self.block() + slot
    }

    fn mode_of_slot(&self, slot: usize) -> ModeIndex {
        let m = self.cutoff as i64;
        let side = self.side();
        ModeIndex::new((slot / side) as i64 - m, (slot % side) as i64 - m)
    }

    /// Coefficient of `mode` in `component`; zero for out-of-band modes.
    pub fn coeff(&self, mode: ModeIndex, component: usize) -> Complex64 {
        if component >= self.components || !mode.in_band(self.cutoff) {
            return ZERO;
        }
        self.coeffs[self.flat(component, self.slot(mode))]
    }

    /// All components of one mode.
    pub fn coeff_vec(&self, mode: ModeIndex) -> Vec<Complex64> {
        (0..self.components).map(|c| self.coeff(mode, c)).collect()
    }

    pub fn set_coeff(&mut self, mode: ModeIndex, component: usize, value: Complex64) -> Result<()> {
        let idx = self.checked_index(mode, component)?;
        self.coeffs[idx] = value;
        Ok(())
    }

    pub fn add_to_coeff(&mut self, mode: ModeIndex, component: usize, value: Complex64) -> Result<()> {
        let idx = self.checked_index(mode, component)?;
        self.coeffs[idx] += value;
        Ok(())
    }

    fn checked_index(&self, mode: ModeIndex, component: usize) -> Result<usize> {
        if component >= self.components {
            return Err(Error::Components {
                expected: self.components,
                found: component + 1,
            });
        }
        if !mode.in_band(self.cutoff) {
            return Err(Error::OutOfBand {
                n1: mode.n1,
                n2: mode.n2,
                cutoff: self.cutoff,
            });
        }
        Ok(self.flat(component, self.slot(mode)))
    }

    /// Every mode of the band in lexicographic `(n1, n2)` order.
    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..self.block()).map(move |s| self.mode_of_slot(s))
    }

    /// One component as a scalar field.
    pub fn component(&self, component: usize) -> Result<SpectralField> {
        if component >= self.components {
            return Err(Error::Components {
                expected: self.components,
                found: component + 1,
            });
        }
        let block = self.block();
        let start = component * block;
        Ok(Self {
            cutoff: self.cutoff,
            period: self.period,
            components: 1,
            coeffs: self.coeffs[start..start + block].to_vec(),
        })
    }

    /// Concatenates scalar fields into one vector field.
    pub fn stack(parts: &[SpectralField]) -> Result<SpectralField> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero fields"))?;
        let mut coeffs = Vec::with_capacity(parts.len() * first.block());
        for p in parts {
            first.check_compatible(p)?;
            if !p.is_scalar() {
                return Err(Error::Components {
                    expected: 1,
                    found: p.components,
                });
            }
            coeffs.extend_from_slice(&p.coeffs);
        }
        Ok(Self {
            cutoff: first.cutoff,
            period: first.period,
            components: parts.len(),
            coeffs,
        })
    }

    /// Same period and cut-off.
    pub fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        self.check_period(other)?;
        if self.cutoff != other.cutoff {
            return Err(Error::BandMismatch(self.cutoff, other.cutoff));
        }
        Ok(())
    }

    fn check_period(&self, other: &SpectralField) -> Result<()> {
        if self.period != other.period {
            return Err(Error::PeriodMismatch(self.period, other.period));
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &SpectralField) -> Result<()> {
        self.check_compatible(other)?;
        if self.components != other.components {
            return Err(Error::Components {
                expected: self.components,
                found: other.components,
            });
        }
        Ok(())
    }

    pub fn require_vector(&self) -> Result<()> {
        if self.components != 2 {
            return Err(Error::Components {
                expected: 2,
                found: self.components,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(1.0, other)?;
        Ok(out)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        let mut out = self.clone();
        out.axpy(-1.0, other)?;
        Ok(out)
    }

    /// `self += alpha * x`.
    pub fn axpy(&mut self, alpha: f64, x: &SpectralField) -> Result<()> {
        self.check_same_shape(x)?;
        for (a, b) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *a += b * alpha;
        }
        Ok(())
    }

    pub fn scaled(&self, alpha: f64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out
    }

    pub fn scaled_complex(&self, alpha: Complex64) -> SpectralField {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= alpha);
        out
    }

    /// Multiplies every mode (all components) by `factor(n)`.
    pub fn map_modes<F>(&self, mut factor: F) -> SpectralField
    where
        F: FnMut(ModeIndex) -> Complex64,
    {
        let mut out = self.clone();
        let block = self.block();
        for s in 0..block {
            let f = factor(self.mode_of_slot(s));
            for c in 0..self.components {
                out.coeffs[c * block + s] *= f;
            }
        }
        out
    }

    /// Copy into cut-off `cutoff`, keeping only modes with `|n_i| <= cutoff - 1`.
    /// Works for shrinking and for enlarging the band.
    pub fn truncate(&self, cutoff: usize) -> SpectralField {
        let mut out = Self::zeros(cutoff, self.period, self.components);
        let block = self.block();
        for s in 0..block {
            let mode = self.mode_of_slot(s);
            if mode.in_symmetric_band(cutoff) {
                let dst = out.slot(mode);
                for c in 0..self.components {
                    let idx = out.flat(c, dst);
                    out.coeffs[idx] = self.coeffs[c * block + s];
                }
            }
        }
        out
    }

    /// Like [`truncate`](Self::truncate) but refuses to discard a nonzero
    /// coefficient.
    pub fn resample(&self, cutoff: usize) -> Result<SpectralField> {
        let block = self.block();
        for s in 0..block {
            let mode = self.mode_of_slot(s);
            if mode.in_symmetric_band(cutoff) {
                continue;
            }
            if (0..self.components).any(|c| self.coeffs[c * block + s] != ZERO) {
                return Err(Error::LossyResample {
                    n1: mode.n1,
                    n2: mode.n2,
                    cutoff,
                });
            }
        }
        Ok(self.truncate(cutoff))
    }

    /// Modes where some component has modulus above `tol`.
    pub fn support(&self, tol: f64) -> BTreeSet<ModeIndex> {
        let block = self.block();
        (0..block)
            .filter(|&s| (0..self.components).any(|c| self.coeffs[c * block + s].norm() > tol))
            .map(|s| self.mode_of_slot(s))
            .collect()
    }

    /// Largest coefficient modulus over the modes not in `allowed`.
    pub fn max_abs_outside(&self, allowed: &BTreeSet<ModeIndex>) -> f64 {
        let block = self.block();
        let mut worst = 0.0f64;
        for s in 0..block {
            if allowed.contains(&self.mode_of_slot(s)) {
                continue;
            }
            for c in 0..self.components {
                worst = worst.max(self.coeffs[c * block + s].norm());
            }
        }
        worst
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Sum of all coefficient moduli, an upper bound on `max_x |u(x)|` per component.
    pub(crate) fn abs_sum(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// Largest `|u_{-n} - conj(u_n)|` over the modes whose mirror is in band.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for mode in self.modes() {
            let mirror = mode.neg();
            if !mirror.in_band(self.cutoff) {
                continue;
            }
            for c in 0..self.components {
                let d = (self.coeff(mirror, c) - self.coeff(mode, c).conj()).norm();
                worst = worst.max(d);
            }
        }
        // the -M row has no in-band mirror; real data must leave it empty
        for mode in self.modes().filter(|m| !m.neg().in_band(self.cutoff)) {
            for c in 0..self.components {
                worst = worst.max(self.coeff(mode, c).norm());
            }
        }
        worst
    }

    /// Projects onto the Hermitian-symmetric fields of the same band.
    pub fn symmetrized(&self) -> SpectralField {
        let mut out = self.clone();
        for mode in self.modes() {
            let mirror = mode.neg();
            for c in 0..self.components {
                let value = if mirror.in_band(self.cutoff) {
                    (self.coeff(mode, c) + self.coeff(mirror, c).conj()) * 0.5
                } else {
                    ZERO
                };
                let idx = out.flat(c, out.slot(mode));
                out.coeffs[idx] = value;
            }
        }
        out
    }

    /// Root sum of squared coefficient moduli over all modes and components.
    pub fn parseval_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Leray projection and its complement, mode by mode. The zero mode is
    /// left entirely in the solenoidal part.
    pub fn leray_project(&self) -> Result<LerayPair> {
        self.require_vector()?;
        let mut solenoidal = self.clone();
        let mut gradient_part = Self::zeros(self.cutoff, self.period, 2);
        let block = self.block();
        for s in 0..block {
            let mode = self.mode_of_slot(s);
            if mode.is_zero() {
                continue;
            }
            let [k1, k2] = mode.as_f64();
            let u1 = self.coeffs[s];
            let u2 = self.coeffs[block + s];
            let dot = (u1 * k1 + u2 * k2) / (mode.norm_sq() as f64);
            let g1 = dot * k1;
            let g2 = dot * k2;
            gradient_part.coeffs[s] = g1;
            gradient_part.coeffs[block + s] = g2;
            solenoidal.coeffs[s] = u1 - g1;
            solenoidal.coeffs[block + s] = u2 - g2;
        }
        Ok(LerayPair {
            solenoidal,
            gradient_part,
        })
    }

    /// Solenoidal part only.
    pub fn project(&self) -> Result<SpectralField> {
        Ok(self.leray_project()?.solenoidal)
    }

    /// Scalar potential `g` with `grad g = self`, normalised by `g_0 = 0`.
    pub fn potential_of_gradient(&self) -> Result<SpectralField> {
        let pair = self.leray_project()?;
        let residue = pair.solenoidal.truncate_zero_mode().parseval_norm();
        let scale = self.parseval_norm();
        if residue > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotGradient { residue });
        }
        Ok(self.potential_unchecked())
    }

    /// `g_n = -i (L / 2 pi) (u_n . n) / |n|^2`, `g_0 = 0`, without checking
    /// that the input is a gradient.
    pub(crate) fn potential_unchecked(&self) -> SpectralField {
        let mut out = Self::zeros(self.cutoff, self.period, 1);
        let block = self.block();
        let scale = -I * (self.period / (2.0 * PI));
        for s in 0..block {
            let mode = self.mode_of_slot(s);
            if mode.is_zero() {
                continue;
            }
            let [k1, k2] = mode.as_f64();
            let dot = self.coeffs[s] * k1 + self.coeffs[block + s] * k2;
            out.coeffs[s] = scale * dot / (mode.norm_sq() as f64);
        }
        out
    }

    fn truncate_zero_mode(&self) -> SpectralField {
        let mut out = self.clone();
        let s = self.slot(ModeIndex::ZERO);
        for c in 0..self.components {
            let idx = out.flat(c, s);
            out.coeffs[idx] = ZERO;
        }
        out
    }

    /// Average of the four diagonal shifts `u(x + (L a / 2 pi) xi)`,
    /// `xi in {+-1}^2`; per mode this is the multiplier `cos(a n1) cos(a n2)`.
    pub fn diffusion_average(&self, a: f64) -> SpectralField {
        self.map_modes(|n| {
            Complex64::new((a * n.n1 as f64).cos() * (a * n.n2 as f64).cos(), 0.0)
        })
    }

    /// Coefficients of `x -> u(x + shift)`.
    pub fn shifted_by(&self, shift: [f64; 2]) -> SpectralField {
        let w = 2.0 * PI / self.period;
        self.map_modes(|n| {
            Complex64::from_polar(1.0, w * (n.n1 as f64 * shift[0] + n.n2 as f64 * shift[1]))
        })
    }

    /// Partial derivative: multiplier `i (2 pi / L) n_axis`.
    pub fn derivative(&self, axis: Axis) -> SpectralField {
        let w = 2.0 * PI / self.period;
        self.map_modes(|n| I * (w * n.component(axis) as f64))
    }

    /// Gradient of a scalar field.
    pub fn gradient(&self) -> Result<SpectralField> {
        if !self.is_scalar() {
            return Err(Error::Components {
                expected: 1,
                found: self.components,
            });
        }
        let mut out = Self::zeros(self.cutoff, self.period, 2);
        let d1 = self.derivative(Axis::First);
        let d2 = self.derivative(Axis::Second);
        let block = self.block();
        out.coeffs[..block].copy_from_slice(&d1.coeffs);
        out.coeffs[block..].copy_from_slice(&d2.coeffs);
        Ok(out)
    }

    /// Scalar field `i (2 pi / L) (n1 u^1_n + n2 u^2_n)`.
    pub fn divergence(&self) -> Result<SpectralField> {
        self.require_vector()?;
        let w = 2.0 * PI / self.period;
        let mut out = Self::zeros(self.cutoff, self.period, 1);
        let block = self.block();
        for s in 0..block {
            let [k1, k2] = self.mode_of_slot(s).as_f64();
            out.coeffs[s] = I * w * (self.coeffs[s] * k1 + self.coeffs[block + s] * k2);
        }
        Ok(out)
    }

    /// Direct summation of the partial sum at arbitrary points. Returns one
    /// real vector (length `components`) per point.
    pub fn evaluate_at(&self, points: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        let tol = 1e-10 * self.parseval_norm().max(f64::MIN_POSITIVE);
        let complex = self.evaluate_complex(points);
        let mut out = Vec::with_capacity(points.len());
        for value in complex {
            let residue = value.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
            if residue > tol {
                return Err(Error::NotReal { residue });
            }
            out.push(value.iter().map(|z| z.re).collect());
        }
        Ok(out)
    }

    pub(crate) fn evaluate_complex(&self, points: &[[f64; 2]]) -> Vec<Vec<Complex64>> {
        let m = self.cutoff as i64;
        let side = self.side();
        let block = self.block();
        let w = 2.0 * PI / self.period;
        let nonzero: Vec<usize> = (0..block)
            .filter(|&s| (0..self.components).any(|c| self.coeffs[c * block + s] != ZERO))
            .collect();
        let mut e1 = vec![ZERO; side];
        let mut e2 = vec![ZERO; side];
        points
            .iter()
            .map(|p| {
                for (j, n) in (-m..m).enumerate() {
                    e1[j] = Complex64::from_polar(1.0, w * n as f64 * p[0]);
                    e2[j] = Complex64::from_polar(1.0, w * n as f64 * p[1]);
                }
                let mut acc = vec![ZERO; self.components];
                for &s in &nonzero {
                    let basis = e1[s / side] * e2[s % side];
                    for (c, a) in acc.iter_mut().enumerate() {
                        *a += self.coeffs[c * block + s] * basis;
                    }
                }
                acc
            })
            .collect()
    }

    /// Values on the uniform `g x g` grid `x_{ij} = (i L / g, j L / g)`,
    /// one row-major array per component. Requires `g >= 2M`.
    pub fn to_grid(&self, g: usize) -> Result<Vec<Vec<f64>>> {
        if g < self.side() {
            return Err(Error::invalid(format!(
                "grid size {g} is smaller than the band width {}",
                self.side()
            )));
        }
        let block = self.block();
        let mut out = Vec::with_capacity(self.components);
        let mut buf = vec![ZERO; g * g];
        for c in 0..self.components {
            buf.iter_mut().for_each(|z| *z = ZERO);
            for s in 0..block {
                let v = self.coeffs[c * block + s];
                if v == ZERO {
                    continue;
                }
                let n = self.mode_of_slot(s);
                let i = n.n1.rem_euclid(g as i64) as usize;
                let j = n.n2.rem_euclid(g as i64) as usize;
                buf[i * g + j] += v;
            }
            fft2(&mut buf, g, Direction::Inverse);
            out.push(buf.iter().map(|z| z.re).collect());
        }
        Ok(out)
    }

    /// Discrete Fourier coefficients of grid samples, restricted to the
    /// symmetric band of `cutoff` and symmetrised. Requires `g >= 2 * cutoff`.
    pub fn from_grid(values: &[Vec<f64>], g: usize, period: f64, cutoff: usize) -> Result<SpectralField> {
        if values.is_empty() {
            return Err(Error::invalid("no grid components"));
        }
        if g < 2 * cutoff {
            return Err(Error::invalid(format!(
                "grid size {g} cannot resolve cut-off {cutoff}"
            )));
        }
        let mut out = Self::zeros(cutoff, period, values.len());
        let norm = 1.0 / (g * g) as f64;
        let mut buf = vec![ZERO; g * g];
        for (c, comp) in values.iter().enumerate() {
            if comp.len() != g * g {
                return Err(Error::invalid("grid component has the wrong length"));
            }
            for (b, v) in buf.iter_mut().zip(comp) {
                *b = Complex64::new(*v, 0.0);
            }
            fft2(&mut buf, g, Direction::Forward);
            let m = cutoff as i64;
            for n1 in (1 - m)..m {
                for n2 in (1 - m)..m {
                    let i = n1.rem_euclid(g as i64) as usize;
                    let j = n2.rem_euclid(g as i64) as usize;
                    let mode = ModeIndex::new(n1, n2);
                    let idx = out.flat(c, out.slot(mode));
                    out.coeffs[idx] = buf[i * g + j] * norm;
                }
            }
        }
        Ok(out.symmetrized())
    }

    /// Fourier coefficients of the pointwise product, kept on the full band
    /// of `out_cutoff`. Exact (no aliasing) for any `out_cutoff`; the result
    /// contains every product mode when `out_cutoff >= M_u + M_v`.
    ///
    /// Scalar times scalar, scalar times vector and vector times scalar are
    /// supported.
    pub fn multiply(u: &SpectralField, v: &SpectralField, out_cutoff: usize) -> Result<SpectralField> {
        let components = product_components(u, v)?;
        let mut out = Self::zeros(out_cutoff, u.period, components);
        let ub = u.block();
        let vb = v.block();
        let u_nz: Vec<usize> = (0..ub)
            .filter(|&s| (0..u.components).any(|c| u.coeffs[c * ub + s] != ZERO))
            .collect();
        let v_nz: Vec<usize> = (0..vb)
            .filter(|&s| (0..v.components).any(|c| v.coeffs[c * vb + s] != ZERO))
            .collect();
        let ob = out.block();
        for &su in &u_nz {
            let mu = u.mode_of_slot(su);
            for &sv in &v_nz {
                let n = mu + v.mode_of_slot(sv);
                if !n.in_band(out_cutoff) {
                    continue;
                }
                let so = out.slot(n);
                for c in 0..components {
                    let a = u.coeffs[(c % u.components) * ub + su];
                    let b = v.coeffs[(c % v.components) * vb + sv];
                    out.coeffs[c * ob + so] += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Same product computed through zero-padded FFTs.
    pub fn multiply_fft(u: &SpectralField, v: &SpectralField, out_cutoff: usize) -> Result<SpectralField> {
        let components = product_components(u, v)?;
        // every product mode lies in [-(Mu+Mv), Mu+Mv-2], so this grid is alias free
        let g = 2 * (u.cutoff + v.cutoff).max(out_cutoff);
        let lift = |f: &SpectralField, c: usize| -> Vec<Complex64> {
            let mut buf = vec![ZERO; g * g];
            let block = f.block();
            for s in 0..block {
                let val = f.coeffs[c * block + s];
                if val == ZERO {
                    continue;
                }
                let n = f.mode_of_slot(s);
                buf[n.n1.rem_euclid(g as i64) as usize * g + n.n2.rem_euclid(g as i64) as usize] = val;
            }
            fft2(&mut buf, g, Direction::Inverse);
            buf
        };
        let mut out = Self::zeros(out_cutoff, u.period, components);
        let norm = 1.0 / (g * g) as f64;
        for c in 0..components {
            let a = lift(u, c % u.components);
            let b = lift(v, c % v.components);
            let mut prod: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
            fft2(&mut prod, g, Direction::Forward);
            let ob = out.block();
            for s in 0..ob {
                let n = out.mode_of_slot(s);
                let i = n.n1.rem_euclid(g as i64) as usize;
                let j = n.n2.rem_euclid(g as i64) as usize;
                out.coeffs[c * ob + s] = prod[i * g + j] * norm;
            }
        }
        Ok(out)
    }
}

fn product_components(u: &SpectralField, v: &SpectralField) -> Result<usize> {
    u.check_period(v)?;
    match (u.components, v.components) {
        (1, k) | (k, 1) => Ok(k),
        (a, b) => Err(Error::invalid(format!(
            "cannot multiply a {a}-component field by a {b}-component field"
        ))),
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalised 2D DFT of a row-major `g x g` array. Forward uses
/// `exp(-2 pi i k n / g)`.
fn fft2(data: &mut [Complex64], g: usize, dir: Direction) {
    PLANNER.with(|planner| {
        let mut planner = planner.borrow_mut();
        let fft = match dir {
            Direction::Forward => planner.plan_fft_forward(g),
            Direction::Inverse => planner.plan_fft_inverse(g),
        };
        for row in data.chunks_exact_mut(g) {
            fft.process(row);
        }
        let mut column = vec![ZERO; g];
        for j in 0..g {
            for i in 0..g {
                column[i] = data[i * g + j];
            }
            fft.process(&mut column);
            for i in 0..g {
                data[i * g + j] = column[i];
            }
        }
    });
}

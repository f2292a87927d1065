//! Periodic spatial grid and the spectral calculus built on it.
//!
//! The real line is truncated to the box `[-L/2, L/2)` sampled at `n`
//! equispaced points. Derivatives, the antiderivative and Sobolev norms are
//! all Fourier multipliers; inner products use the rectangle rule, which is
//! spectrally accurate for smooth periodic data.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Origin, Result};

const MODULE: &str = "grid_core";

/// Relative threshold on `|mean(f)| / max|f|` accepted by [`antiderivative`].
pub const MEAN_TOL: f64 = 1e-8;
/// Highest derivative order supported by the spectral operators.
pub const MAX_ORDER: u32 = 6;
pub const DEFAULT_LENGTH: f64 = 80.0;
pub const DEFAULT_COUNT: usize = 2048;

/// Uniform periodic grid on `[-L/2, L/2)`.
#[derive(Clone)]
pub struct Grid {
    length: f64,
    count: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("length", &self.length)
            .field("count", &self.count)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.length == other.length && self.count == other.count
    }
}

impl Grid {
    pub fn new(length: f64, count: usize) -> Result<Self> {
        let origin = Origin::new(MODULE, "Grid::new");
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid(
                origin,
                format!("length must be positive, got {length}"),
            ));
        }
        if count < 16 || !count.is_multiple_of(2) {
            return Err(Error::invalid(
                origin,
                format!("count must be even and at least 16, got {count}"),
            ));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            length,
            count,
            forward: planner.plan_fft_forward(count),
            inverse: planner.plan_fft_inverse(count),
        })
    }

    /// The default box: `L = 80`, `n = 2048`.
    pub fn standard() -> Self {
        Self::new(DEFAULT_LENGTH, DEFAULT_COUNT).expect("default grid is valid")
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.count as f64
    }

    /// Coordinate of sample `m`.
    pub fn x(&self, m: usize) -> f64 {
        -0.5 * self.length + m as f64 * self.spacing()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.count).map(|m| self.x(m)).collect()
    }

    /// Angular wavenumbers in FFT order; the Nyquist mode carries `+pi n / L`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.count as i64;
        let base = 2.0 * PI / self.length;
        (0..n)
            .map(|k| {
                let k = if k <= n / 2 { k } else { k - n };
                base * k as f64
            })
            .collect()
    }

    pub fn max_wavenumber(&self) -> f64 {
        PI * self.count as f64 / self.length
    }

    /// Unnormalized forward DFT of real samples.
    pub fn forward(&self, samples: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse DFT (normalized by `1/n`), keeping the real part.
    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spectrum);
        let scale = 1.0 / self.count as f64;
        spectrum.into_iter().map(|z| z.re * scale).collect()
    }

    /// In-place complex transforms for callers that stay in Fourier space.
    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        let scale = 1.0 / self.count as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    pub(crate) fn ensure_same(&self, other: &Grid, origin: Origin) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::invalid(
                origin,
                format!(
                    "grid mismatch: (L={}, n={}) vs (L={}, n={})",
                    self.length, self.count, other.length, other.count
                ),
            ))
        }
    }
}

/// Real samples of a function on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    samples: Vec<f64>,
}

impl Field {
    pub fn new(grid: &Grid, samples: Vec<f64>) -> Result<Self> {
        let origin = Origin::new(MODULE, "Field::new");
        if samples.len() != grid.count() {
            return Err(Error::invalid(
                origin,
                format!(
                    "{} samples for a grid of {} points",
                    samples.len(),
                    grid.count()
                ),
            ));
        }
        if let Some(m) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                origin,
                format!("non-finite sample at index {m}"),
            ));
        }
        Ok(Self {
            grid: grid.clone(),
            samples,
        })
    }

    /// Samples `f(x_m)` at every grid coordinate.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.coordinates().into_iter().map(f).collect())
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::raw(grid, vec![0.0; grid.count()])
    }

    /// Construction without validation, for results of arithmetic on valid fields.
    pub(crate) fn raw(grid: &Grid, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), grid.count());
        Self {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::raw(&self.grid, self.samples.iter().map(|&v| f(v)).collect())
    }

    /// Pointwise combination; both fields must live on the same grid.
    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "zip_with across different grids");
        Field::raw(
            &self.grid,
            self.samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        )
    }

    pub fn add(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Field {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Field {
        self.map(|v| s * v)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Field) -> Field {
        self.zip_with(other, |a, b| a + s * b)
    }

    /// Multiply pointwise by the coordinate `x`.
    pub fn times_x(&self) -> Field {
        let g = &self.grid;
        Field::raw(
            g,
            self.samples
                .iter()
                .enumerate()
                .map(|(m, &v)| g.x(m) * v)
                .collect(),
        )
    }

    pub fn max_abs(&self) -> f64 {
        self.samples.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.grid.spacing()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.spacing() * self.samples.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    /// Index of the largest sample.
    pub fn argmax(&self) -> usize {
        self.samples
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (m, &v)| {
                if v > best.1 {
                    (m, v)
                } else {
                    best
                }
            })
            .0
    }

    /// The reflection `x -> -x` (exact on the grid: `m -> (n - m) mod n`).
    pub fn reflect(&self) -> Field {
        let n = self.samples.len();
        Field::raw(
            &self.grid,
            (0..n).map(|m| self.samples[(n - m) % n]).collect(),
        )
    }

    /// Translation by a whole number of grid points: `g(x) = f(x - shift*h)`.
    pub fn roll(&self, shift: isize) -> Field {
        let n = self.samples.len() as isize;
        Field::raw(
            &self.grid,
            (0..n)
                .map(|m| self.samples[(m - shift).rem_euclid(n) as usize])
                .collect(),
        )
    }

    /// Apply a Fourier multiplier `symbol(kappa, is_nyquist)`.
    pub(crate) fn fourier_multiplier(&self, symbol: impl Fn(f64, bool) -> Complex64) -> Field {
        let g = &self.grid;
        let mut spec = g.forward(&self.samples);
        let nyq = g.count() / 2;
        for (k, (z, kappa)) in spec.iter_mut().zip(g.wavenumbers()).enumerate() {
            *z *= symbol(kappa, k == nyq);
        }
        Field::raw(g, g.inverse_real(spec))
    }
}

/// Largest `|kappa|` among the modes of a spectrum exceeding `rel_tol` times
/// its peak amplitude.
fn resolved_cutoff(spec: &[Complex64], wavenumbers: &[f64], rel_tol: f64) -> f64 {
    let floor = rel_tol * spec.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    spec.iter()
        .zip(wavenumbers)
        .filter(|(z, _)| z.norm() > floor)
        .fold(0.0f64, |m, (_, kappa)| m.max(kappa.abs()))
}

/// Band of `f`: the largest `|kappa|` whose mode exceeds `rel_tol * max |f^|`.
/// Higher modes hold only round-off.
pub fn band_limit(f: &Field, rel_tol: f64) -> f64 {
    let g = f.grid();
    resolved_cutoff(&g.forward(f.samples()), &g.wavenumbers(), rel_tol)
}

/// Spectral derivative restricted to the modes with `|kappa| <= cutoff`.
pub(crate) fn band_derivative(f: &Field, order: u32, cutoff: f64) -> Field {
    let symbol = derivative_symbol(order);
    f.fourier_multiplier(|kappa, nyq| {
        if kappa.abs() <= cutoff {
            symbol(kappa, nyq)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn derivative_symbol(order: u32) -> impl Fn(f64, bool) -> Complex64 {
    move |kappa, nyquist| {
        if order % 2 == 1 && nyquist {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, kappa).powu(order)
        }
    }
}

/// `order`-th derivative by Fourier multiplication with `(i kappa)^order`.
///
/// The Nyquist mode is dropped for odd orders, which keeps the odd-order
/// differentiation matrices real and skew-symmetric.
pub fn spectral_derivative(f: &Field, order: u32) -> Result<Field> {
    let origin = Origin::new(MODULE, "spectral_derivative");
    if order == 0 || order > MAX_ORDER {
        return Err(Error::invalid(
            origin,
            format!("order must be in 1..={MAX_ORDER}, got {order}"),
        ));
    }
    if !f.is_finite() {
        return Err(Error::invalid(origin, "non-finite samples"));
    }
    Ok(derivative_unchecked(f, order))
}

/// Derivative of any order without the order cap, for internal composites.
pub(crate) fn derivative_unchecked(f: &Field, order: u32) -> Field {
    if order == 0 {
        return f.clone();
    }
    f.fourier_multiplier(derivative_symbol(order))
}

fn antiderivative_symbol(kappa: f64, nyquist: bool) -> Complex64 {
    if kappa == 0.0 || nyquist {
        Complex64::new(0.0, 0.0)
    } else {
        Complex64::new(0.0, -1.0 / kappa)
    }
}

/// Mean-zero antiderivative: `g' = f - mean(f)`, `mean(g) = 0`.
///
/// Rejects `f` whose mean is not negligible against `max|f|`; such data has
/// no decaying antiderivative and signals a misuse of the recursion.
pub fn antiderivative(f: &Field) -> Result<Field> {
    antiderivative_with_tol(f, MEAN_TOL)
}

pub fn antiderivative_with_tol(f: &Field, mean_tol: f64) -> Result<Field> {
    let origin = Origin::new(MODULE, "antiderivative");
    let mean = f.mean();
    let bound = mean_tol * f.max_abs();
    if mean.abs() > bound {
        return Err(Error::MeanViolation {
            origin,
            mean,
            tol: mean_tol,
            bound,
        });
    }
    Ok(antiderivative_projected(f))
}

/// Mean-zero antiderivative of `f - mean(f)` with no mean check.
pub(crate) fn antiderivative_projected(f: &Field) -> Field {
    f.fourier_multiplier(antiderivative_symbol)
}

/// Box realization of `(1/2)(int_{-inf}^x f - int_x^inf f)`.
///
/// On `[-L/2, L/2)` this is `P f(x) + mean(f) x - mean(x f)` with `P` the
/// mean-zero periodic antiderivative. Both parts are skew in the discrete
/// pairing, so the operator is exactly skew-adjoint. The mean of `f`
/// contributes the ramp `mean(f) x`, so the result is only smooth when it is
/// multiplied by a decaying weight, which is how the linearized operators use
/// it.
pub fn symmetric_antiderivative(f: &Field) -> Field {
    let mean = f.mean();
    let g = f.grid();
    let moment = f
        .samples
        .iter()
        .enumerate()
        .map(|(m, &v)| g.x(m) * v)
        .sum::<f64>()
        / g.count() as f64;
    let periodic = antiderivative_projected(f);
    Field::raw(
        g,
        periodic
            .samples
            .iter()
            .enumerate()
            .map(|(m, &v)| v + mean * g.x(m) - moment)
            .collect(),
    )
}

/// Rectangle-rule `L^2` pairing `h * sum f_m g_m`.
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.grid
        .ensure_same(&g.grid, Origin::new(MODULE, "inner_product"))?;
    Ok(dot(f, g))
}

pub(crate) fn dot(f: &Field, g: &Field) -> f64 {
    f.grid.spacing()
        * f.samples
            .iter()
            .zip(&g.samples)
            .map(|(a, b)| a * b)
            .sum::<f64>()
}

/// `H^k` norm `(sum_{j<=k} ||d^j f||^2)^{1/2}`, evaluated in Fourier space.
pub fn sobolev_norm(f: &Field, k: u32) -> Result<f64> {
    let origin = Origin::new(MODULE, "sobolev_norm");
    if k > MAX_ORDER {
        return Err(Error::invalid(
            origin,
            format!("index must be at most {MAX_ORDER}, got {k}"),
        ));
    }
    if !f.is_finite() {
        return Err(Error::invalid(origin, "non-finite samples"));
    }
    Ok(sobolev_norm_unchecked(f, k))
}

pub(crate) fn sobolev_norm_unchecked(f: &Field, k: u32) -> f64 {
    if k == 0 {
        return f.l2_norm();
    }
    let g = f.grid();
    let spec = g.forward(f.samples());
    let nyq = g.count() / 2;
    let weight = g.spacing() / g.count() as f64;
    let total: f64 = spec
        .iter()
        .zip(g.wavenumbers())
        .enumerate()
        .map(|(idx, (z, kappa))| {
            let k2 = kappa * kappa;
            let mut w = 0.0;
            let mut p = 1.0;
            for j in 0..=k {
                if !(j % 2 == 1 && idx == nyq) {
                    w += p;
                }
                p *= k2;
            }
            w * z.norm_sqr()
        })
        .sum();
    (weight * total).sqrt()
}

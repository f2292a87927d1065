//! Dense matrix realizations of the linearized operators around solitons.
//!
//! Every operator acts on sample vectors of a [`Grid`]. Because the inner
//! product is the rectangle rule `h * sum f_m g_m` with constant weight,
//! self-adjoint operators become symmetric matrices and Sylvester's law of
//! inertia applies to them directly.

use std::fmt;
use std::ops::Add;

use faer::{Mat, MatRef, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Origin, Result};
use crate::grid::{derivative_unchecked, symmetric_antiderivative, Field, Grid};
use crate::hierarchy::{action_gradient_with, FarField, MeanPolicy};
use crate::soliton::{check_decay, n_soliton, profile_q, PhaseSet, SpeedSet};

const MODULE: &str = "linops";

/// Default scale-relative zero threshold for [`inertia_of`].
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;
/// Number of random test fields used by the identity checks.
pub const TEST_FIELDS: usize = 20;
/// Fraction of the grid band free of aliasing in quadratic products.
const RESOLVED_FRACTION: f64 = 2.0 / 3.0;
/// An eigenvalue within this factor of the zero threshold makes the split ambiguous.
const AMBIGUITY_FACTOR: f64 = 10.0;

/// Dense real matrix acting on the samples of a grid.
#[derive(Clone)]
pub struct OperatorMatrix {
    grid: Grid,
    entries: Mat<f64>,
    asymmetry: Option<f64>,
}

impl fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("grid", &self.grid)
            .field("asymmetry", &self.asymmetry)
            .finish()
    }
}

impl OperatorMatrix {
    pub fn from_entries(grid: &Grid, entries: Mat<f64>) -> Result<Self> {
        let origin = Origin::new(MODULE, "OperatorMatrix::from_entries");
        let n = grid.count();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::invalid(
                origin,
                format!(
                    "{}x{} entries for a grid of {n} points",
                    entries.nrows(),
                    entries.ncols()
                ),
            ));
        }
        let m = Self {
            grid: grid.clone(),
            entries,
            asymmetry: None,
        };
        m.ensure_finite(origin)?;
        Ok(m)
    }

    /// Matrix of a linear map, assembled column by column from its action on
    /// the unit sample vectors.
    pub fn from_linear_map(grid: &Grid, map: impl Fn(&Field) -> Field + Sync) -> Self {
        let n = grid.count();
        let columns: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![0.0; n];
                e[j] = 1.0;
                map(&Field::raw(grid, e)).into_samples()
            })
            .collect();
        Self {
            grid: grid.clone(),
            entries: Mat::from_fn(n, n, |i, j| columns[j][i]),
            asymmetry: None,
        }
    }

    /// Circulant matrix of a Fourier multiplier, read off from its first column.
    fn circulant(grid: &Grid, column: &[f64]) -> Self {
        let n = grid.count();
        Self {
            grid: grid.clone(),
            entries: Mat::from_fn(n, n, |i, j| column[(i + n - j) % n]),
            asymmetry: None,
        }
    }

    fn unit(grid: &Grid) -> Field {
        let mut e = vec![0.0; grid.count()];
        e[0] = 1.0;
        Field::raw(grid, e)
    }

    /// Spectral differentiation matrix of the given order.
    pub fn derivative(grid: &Grid, order: u32) -> Self {
        let col = derivative_unchecked(&Self::unit(grid), order);
        Self::circulant(grid, col.samples())
    }

    /// Matrix of the real even Fourier multiplier `symbol(kappa)`.
    pub fn multiplier(grid: &Grid, symbol: impl Fn(f64) -> f64) -> Self {
        let e = Self::unit(grid);
        let col = e.fourier_multiplier(|kappa, _| symbol(kappa).into());
        Self::circulant(grid, col.samples())
    }

    pub fn identity(grid: &Grid) -> Self {
        let n = grid.count();
        Self {
            grid: grid.clone(),
            entries: Mat::identity(n, n),
            asymmetry: None,
        }
    }

    /// Multiplication by the samples of `f`.
    pub fn diagonal(f: &Field) -> Self {
        let n = f.grid().count();
        let v = f.samples();
        Self {
            grid: f.grid().clone(),
            entries: Mat::from_fn(n, n, |i, j| if i == j { v[i] } else { 0.0 }),
            asymmetry: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn entries(&self) -> &Mat<f64> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Resolved asymmetry removed by [`OperatorMatrix::symmetrized`], if it was applied.
    pub fn recorded_asymmetry(&self) -> Option<f64> {
        self.asymmetry
    }

    fn ensure_finite(&self, origin: Origin) -> Result<()> {
        let n = self.dim();
        for j in 0..n {
            for i in 0..n {
                if !self.entries[(i, j)].is_finite() {
                    return Err(Error::numerical(
                        origin,
                        format!("non-finite entry at ({i}, {j})"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn max_abs_entry(&self) -> f64 {
        self.entries.norm_max()
    }

    /// `max |A - A^T| / max |A|`.
    pub fn symmetry_defect(&self) -> f64 {
        symmetry_defect_of(self.entries.as_ref())
    }

    /// Projection onto the resolved band `|kappa| <= (2/3) kappa_max`.
    fn resolved_projection(grid: &Grid) -> Self {
        let cutoff = RESOLVED_FRACTION * grid.max_wavenumber();
        Self::multiplier(grid, |kappa| if kappa.abs() <= cutoff { 1.0 } else { 0.0 })
    }

    /// Asymmetry on the resolved band: `max |Pi (A - A^T) Pi| / max |A|`
    /// with `Pi` the projection onto `|kappa| <= (2/3) kappa_max`.
    ///
    /// A multiplication operator applied to modes near the grid cutoff
    /// aliases, so products of such factors are only symmetric up to that
    /// aliasing in the top third of the spectrum.
    pub fn resolved_asymmetry(&self) -> f64 {
        let scale = self.max_abs_entry();
        if scale == 0.0 {
            return 0.0;
        }
        let pi = Self::resolved_projection(&self.grid);
        let defect = self.sub(&self.transpose());
        pi.compose(&defect).compose(&pi).max_abs_entry() / scale
    }

    fn symmetric_part(&self) -> Mat<f64> {
        let a = &self.entries;
        Mat::from_fn(self.dim(), self.dim(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
    }

    /// Symmetric matrix that acts like `A` on the resolved band.
    ///
    /// With `S = (A + A^T) / 2`, `D = A - A^T` and `Pi` the resolved
    /// projection, returns `S + (D Pi + (D Pi)^T) / 2`. On resolved inputs
    /// this equals `A - Pi D Pi / 2`, so the aliasing asymmetry of the top
    /// modes does not leak into the image of smooth fields the way it does
    /// for plain `S`. [`OperatorMatrix::resolved_asymmetry`] of `A` is recorded.
    pub fn symmetrized(&self) -> Self {
        let pi = Self::resolved_projection(&self.grid);
        let d = self.sub(&self.transpose());
        let scale = self.max_abs_entry();
        let asymmetry = if scale == 0.0 {
            0.0
        } else {
            pi.compose(&d).compose(&pi).max_abs_entry() / scale
        };
        let dp = d.compose(&pi).entries;
        let s = self.symmetric_part();
        Self {
            grid: self.grid.clone(),
            entries: Mat::from_fn(self.dim(), self.dim(), |i, j| {
                s[(i, j)] + 0.5 * (dp[(i, j)] + dp[(j, i)])
            }),
            asymmetry: Some(asymmetry),
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            entries: self.entries.transpose().to_owned(),
            asymmetry: None,
        }
    }

    /// `self` after `other`, i.e. the matrix product `self * other`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(
            self.grid, other.grid,
            "composing operators on different grids"
        );
        Self {
            grid: self.grid.clone(),
            entries: &self.entries * &other.entries,
            asymmetry: None,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "adding operators on different grids");
        Self {
            grid: self.grid.clone(),
            entries: &self.entries + &other.entries,
            asymmetry: None,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(
            self.grid, other.grid,
            "subtracting operators on different grids"
        );
        Self {
            grid: self.grid.clone(),
            entries: &self.entries - &other.entries,
            asymmetry: None,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            entries: Mat::from_fn(self.dim(), self.dim(), |i, j| s * self.entries[(i, j)]),
            asymmetry: self.asymmetry,
        }
    }

    /// `self + s I`.
    pub fn shift(&self, s: f64) -> Self {
        let mut entries = self.entries.clone();
        for i in 0..self.dim() {
            entries[(i, i)] += s;
        }
        Self {
            grid: self.grid.clone(),
            entries,
            asymmetry: self.asymmetry,
        }
    }

    /// Scales row `i` by `f_i`: the operator `f * A`.
    fn left_multiply(&self, f: &Field) -> Self {
        let v = f.samples();
        Self {
            grid: self.grid.clone(),
            entries: Mat::from_fn(self.dim(), self.dim(), |i, j| v[i] * self.entries[(i, j)]),
            asymmetry: None,
        }
    }

    /// Replaces the action on the unit vector `e` by `sigma e`:
    /// `(I - e e^T) A (I - e e^T) + sigma e e^T`.
    fn with_free_mode(&self, e: &[f64], sigma: f64) -> Self {
        let n = self.dim();
        let a = &self.entries;
        let ae: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| a[(i, j)] * e[j]).sum())
            .collect();
        let ea: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| e[i] * a[(i, j)]).sum())
            .collect();
        let eae: f64 = (0..n).map(|i| e[i] * ae[i]).sum();
        Self {
            grid: self.grid.clone(),
            entries: Mat::from_fn(n, n, |i, j| {
                a[(i, j)] - ae[i] * e[j] - e[i] * ea[j] + (eae + sigma) * e[i] * e[j]
            }),
            asymmetry: None,
        }
    }

    pub fn apply(&self, f: &Field) -> Field {
        assert_eq!(
            &self.grid,
            f.grid(),
            "applying an operator on a different grid"
        );
        let v = f.samples();
        let n = self.dim();
        let out = (0..n)
            .map(|i| (0..n).map(|j| self.entries[(i, j)] * v[j]).sum())
            .collect();
        Field::raw(&self.grid, out)
    }

    /// Eigenvalues in nondecreasing order (symmetric path, lower triangle).
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.entries
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| {
                Error::numerical(
                    Origin::new(MODULE, "eigenvalues"),
                    format!("symmetric eigensolver failed: {e:?}"),
                )
            })
    }

    /// The `count` lowest eigenpairs; eigenvectors have unit Euclidean norm.
    pub fn lowest_eigenpairs(&self, count: usize) -> Result<(Vec<f64>, Vec<Field>)> {
        let evd = self.entries.self_adjoint_eigen(Side::Lower).map_err(|e| {
            Error::numerical(
                Origin::new(MODULE, "lowest_eigenpairs"),
                format!("symmetric eigensolver failed: {e:?}"),
            )
        })?;
        let s = evd.S().column_vector();
        let u = evd.U();
        let k = count.min(self.dim());
        let values = (0..k).map(|i| s[i]).collect();
        let vectors = (0..k)
            .map(|j| Field::raw(&self.grid, (0..self.dim()).map(|i| u[(i, j)]).collect()))
            .collect();
        Ok((values, vectors))
    }

    /// Congruence `P A P` with `P = (1 - d^2)^(-half_order / 2)`.
    ///
    /// `P` is symmetric positive definite, so the inertia is unchanged, while
    /// an operator of order `2 half_order` is brought to a bounded spectrum.
    /// A scale-relative zero threshold is then meaningful; on the raw matrix
    /// the largest eigenvalue grows like `kappa_max^(2 half_order)`.
    pub fn congruence_normalized(&self, half_order: u32) -> Self {
        let p = Self::multiplier(&self.grid, |kappa| {
            (1.0 + kappa * kappa).powf(-0.5 * half_order as f64)
        });
        let m = p.compose(self).compose(&p);
        Self {
            entries: m.symmetric_part(),
            asymmetry: self.asymmetry,
            ..m
        }
    }

    /// `max |A R - R A|` relative to `max |A|`, with `R` the reflection `x -> -x`.
    pub fn reflection_defect(&self) -> f64 {
        let n = self.dim();
        let r = |i: usize| (n - i) % n;
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                worst = worst.max((self.entries[(i, j)] - self.entries[(r(i), r(j))]).abs());
            }
        }
        worst / self.max_abs_entry()
    }
}

fn symmetry_defect_of(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let scale = a.norm_max();
    if scale == 0.0 {
        0.0
    } else {
        worst / scale
    }
}

/// Number of negative and of zero eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub negatives: usize,
    pub zeros: usize,
}

impl Inertia {
    pub fn new(negatives: usize, zeros: usize) -> Self {
        Self { negatives, zeros }
    }
}

impl Add for Inertia {
    type Output = Inertia;

    fn add(self, rhs: Inertia) -> Inertia {
        Inertia::new(self.negatives + rhs.negatives, self.zeros + rhs.zeros)
    }
}

impl std::iter::Sum for Inertia {
    fn sum<I: Iterator<Item = Inertia>>(iter: I) -> Inertia {
        iter.fold(Inertia::default(), Add::add)
    }
}

impl fmt::Display for Inertia {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.negatives, self.zeros)
    }
}

/// Inertia together with the data that certifies it.
#[derive(Debug, Clone)]
pub struct InertiaReport {
    pub inertia: Inertia,
    /// `max |lambda|`.
    pub scale: f64,
    /// `zero_tol * scale`.
    pub threshold: f64,
    /// Distance between the zero cluster and the nearest nonzero eigenvalue.
    pub gap: f64,
    /// Smallest `|lambda|` above the threshold.
    pub smallest_nonzero: f64,
    /// The eigenvalues nearest zero, in nondecreasing order (at most 12).
    pub near_zero: Vec<f64>,
}

/// Counts negative and zero eigenvalues of a symmetric matrix with the
/// scale-relative threshold `zero_tol * max |lambda|`.
pub fn inertia_of(m: &OperatorMatrix, zero_tol: f64) -> Result<InertiaReport> {
    inertia_of_entries(m.entries().as_ref(), zero_tol)
}

/// [`inertia_of`] for a bare symmetric matrix.
pub fn inertia_of_entries(a: MatRef<'_, f64>, zero_tol: f64) -> Result<InertiaReport> {
    let origin = Origin::new(MODULE, "inertia_of");
    if !(zero_tol.is_finite() && zero_tol > 0.0) {
        return Err(Error::invalid(
            origin,
            format!("zero_tol must be positive, got {zero_tol}"),
        ));
    }
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(origin, "matrix is not square"));
    }
    let defect = symmetry_defect_of(a);
    if defect > 1e-10 {
        return Err(Error::invalid(
            origin,
            format!("matrix is not symmetric (relative defect {defect:.2e})"),
        ));
    }
    let values = a
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::numerical(origin, format!("symmetric eigensolver failed: {e:?}")))?;
    inertia_from_eigenvalues(&values, zero_tol, origin)
}

fn inertia_from_eigenvalues(
    values: &[f64],
    zero_tol: f64,
    origin: Origin,
) -> Result<InertiaReport> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical(origin, "non-finite eigenvalue"));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = zero_tol * scale;
    if let Some(v) = values.iter().find(|v| {
        let a = v.abs();
        a > threshold / AMBIGUITY_FACTOR && a < threshold * AMBIGUITY_FACTOR
    }) {
        return Err(Error::Ambiguous {
            origin,
            msg: format!(
                "eigenvalue {v:.3e} lies within a factor {AMBIGUITY_FACTOR} of the zero threshold \
                 {threshold:.3e}; refine the grid or change zero_tol"
            ),
        });
    }
    let negatives = values.iter().filter(|&&v| v < -threshold).count();
    let zeros = values.iter().filter(|v| v.abs() <= threshold).count();
    let zero_edge = values
        .iter()
        .filter(|v| v.abs() <= threshold)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let smallest_nonzero = values
        .iter()
        .filter(|v| v.abs() > threshold)
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let mut by_size: Vec<f64> = values.to_vec();
    by_size.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let mut near_zero: Vec<f64> = by_size.into_iter().take(12).collect();
    near_zero.sort_by(f64::total_cmp);
    Ok(InertiaReport {
        inertia: Inertia::new(negatives, zeros),
        scale,
        threshold,
        gap: smallest_nonzero - zero_edge,
        smallest_nonzero,
        near_zero,
    })
}

/// `sqrt(c) tanh(sqrt(c) x)` made periodic: the kink where the box wraps
/// around is replaced by a mirrored `tanh` front centred on the box edge.
/// The two differ by `O(exp(-sqrt(c) L))` away from the edge, where every
/// profile has already decayed, and the smooth version keeps the error of
/// spectral differentiation next to the edge instead of spreading a Gibbs
/// tail over the whole box.
fn tanh_weight(c: f64, grid: &Grid) -> Field {
    let r = c.sqrt();
    let half = 0.5 * grid.length();
    Field::raw(
        grid,
        grid.coordinates()
            .iter()
            .map(|&x| r * ((r * x).tanh() - (r * (x - half)).tanh() - (r * (x + half)).tanh()))
            .collect(),
    )
}

/// `M_c = d/dx + sqrt(c) tanh(sqrt(c) x)`.
pub fn build_m(c: f64, grid: &Grid) -> Result<OperatorMatrix> {
    check_decay(c, grid, Origin::new(MODULE, "build_M"))?;
    Ok(OperatorMatrix::derivative(grid, 1).add(&OperatorMatrix::diagonal(&tanh_weight(c, grid))))
}

/// `M_c^t = -d/dx + sqrt(c) tanh(sqrt(c) x)`.
pub fn build_mt(c: f64, grid: &Grid) -> Result<OperatorMatrix> {
    check_decay(c, grid, Origin::new(MODULE, "build_Mt"))?;
    Ok(OperatorMatrix::diagonal(&tanh_weight(c, grid)).sub(&OperatorMatrix::derivative(grid, 1)))
}

fn apply_m(c: f64, z: &Field) -> Field {
    derivative_unchecked(z, 1).add(&tanh_weight(c, z.grid()).mul(z))
}

fn apply_mt(c: f64, z: &Field) -> Field {
    tanh_weight(c, z.grid())
        .mul(z)
        .sub(&derivative_unchecked(z, 1))
}

fn apply_r(q: &Field, z: &Field) -> Field {
    let inner = symmetric_antiderivative(&q.mul(&derivative_unchecked(z, 1)));
    derivative_unchecked(z, 2)
        .scale(-1.0)
        .axpy(-2.0, &q.mul(&inner))
}

/// Seeded random decaying wave packets: sums of three Gaussian-windowed
/// cosines with wavenumbers below 3, centred in `|x| < 8`.
pub fn random_test_fields(grid: &Grid, count: usize, seed: u64) -> Vec<Field> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let terms: Vec<[f64; 5]> = (0..3)
                .map(|_| {
                    [
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-8.0..8.0),
                        rng.gen_range(1.0..3.0),
                        rng.gen_range(0.0..3.0),
                        rng.gen_range(0.0..std::f64::consts::TAU),
                    ]
                })
                .collect();
            Field::raw(
                grid,
                grid.coordinates()
                    .iter()
                    .map(|&x| {
                        terms
                            .iter()
                            .map(|[a, x0, w, k, phi]| {
                                a * (-((x - x0) / w).powi(2) / 2.0).exp() * (k * x + phi).cos()
                            })
                            .sum()
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Residuals of the algebraic identities satisfied by `M_c`.
#[derive(Debug, Clone, Copy)]
pub struct MAlgebraReport {
    /// `M M^t = -d^2 + c`.
    pub m_mt: f64,
    /// `M^t M = -d^2 + c - Q^2`.
    pub mt_m: f64,
    /// `M R(Q) = (-d^2 - Q^2) M`.
    pub intertwining: f64,
    /// `(-d^2 - Q^2) M^t = M^t (-d^2)`.
    pub dual_intertwining: f64,
}

impl MAlgebraReport {
    pub fn worst(&self) -> f64 {
        self.m_mt
            .max(self.mt_m)
            .max(self.intertwining)
            .max(self.dual_intertwining)
    }
}

fn relative_gap(lhs: &Field, rhs: &Field) -> f64 {
    lhs.sub(rhs).l2_norm() / rhs.l2_norm().max(lhs.l2_norm())
}

/// Checks the identities of `M_c` on [`TEST_FIELDS`] random decaying fields;
/// each entry is the worst relative residual.
pub fn verify_m_algebra(c: f64, grid: &Grid) -> Result<MAlgebraReport> {
    check_decay(c, grid, Origin::new(MODULE, "verify_M_algebra"))?;
    let q = profile_q(c, grid)?;
    let q2 = q.mul(&q);
    let minus_dxx = |z: &Field| derivative_unchecked(z, 2).scale(-1.0);
    let mut report = MAlgebraReport {
        m_mt: 0.0,
        mt_m: 0.0,
        intertwining: 0.0,
        dual_intertwining: 0.0,
    };
    for z in random_test_fields(grid, TEST_FIELDS, 0x4d41) {
        let lhs = apply_m(c, &apply_mt(c, &z));
        let rhs = minus_dxx(&z).axpy(c, &z);
        report.m_mt = report.m_mt.max(relative_gap(&lhs, &rhs));

        let lhs = apply_mt(c, &apply_m(c, &z));
        let rhs = minus_dxx(&z).axpy(c, &z).sub(&q2.mul(&z));
        report.mt_m = report.mt_m.max(relative_gap(&lhs, &rhs));

        let lhs = apply_m(c, &apply_r(&q, &z));
        let mz = apply_m(c, &z);
        let rhs = minus_dxx(&mz).sub(&q2.mul(&mz));
        report.intertwining = report.intertwining.max(relative_gap(&lhs, &rhs));

        let mtz = apply_mt(c, &z);
        let lhs = minus_dxx(&mtz).sub(&q2.mul(&mtz));
        let rhs = apply_mt(c, &minus_dxx(&z));
        report.dual_intertwining = report.dual_intertwining.max(relative_gap(&lhs, &rhs));
    }
    Ok(report)
}

/// `L_1 = -d^2 + c - 3 Q_c^2`.
pub fn build_l1(c: f64, grid: &Grid) -> Result<OperatorMatrix> {
    check_decay(c, grid, Origin::new(MODULE, "build_L1"))?;
    let q = profile_q(c, grid)?;
    Ok(l1_from_profile(c, &q))
}

fn l1_from_profile(c: f64, q: &Field) -> OperatorMatrix {
    let grid = q.grid();
    OperatorMatrix::derivative(grid, 2)
        .scale(-1.0)
        .shift(c)
        .sub(&OperatorMatrix::diagonal(&q.map(|v| 3.0 * v * v)))
}

/// `R(q) = -d^2 - 2 q d^{-1}(q d/dx .)` with the skew-adjoint `d^{-1}`.
pub fn recursion_operator_r(q: &Field) -> OperatorMatrix {
    let grid = q.grid();
    let s = OperatorMatrix::from_linear_map(grid, symmetric_antiderivative);
    let q_d = OperatorMatrix::derivative(grid, 1).left_multiply(q);
    let nonlocal = s.compose(&q_d).left_multiply(q).scale(-2.0);
    OperatorMatrix::derivative(grid, 2)
        .scale(-1.0)
        .add(&nonlocal)
}

fn check_index(speeds: &SpeedSet, j: usize, origin: Origin) -> Result<()> {
    if (1..=speeds.len()).contains(&j) {
        Ok(())
    } else {
        Err(Error::invalid(
            origin,
            format!("index j must be in 1..={}, got {j}", speeds.len()),
        ))
    }
}

/// `L_{N,j} = prod_{k != j} (R(Q_{c_j}) + c_k) (-d^2 + c_j - 3 Q_{c_j}^2)`,
/// symmetrized with the removed asymmetry recorded.
pub fn build_l_nj(speeds: &SpeedSet, j: usize, grid: &Grid) -> Result<OperatorMatrix> {
    let origin = Origin::new(MODULE, "build_L_Nj");
    check_index(speeds, j, origin)?;
    let cj = speeds.get(j - 1);
    check_decay(cj, grid, origin)?;
    let q = profile_q(cj, grid)?;
    let mut out = l1_from_profile(cj, &q);
    if speeds.len() > 1 {
        let r = recursion_operator_r(&q);
        for (k, ck) in speeds.iter().enumerate() {
            if k + 1 != j {
                out = r.shift(ck).compose(&out);
            }
        }
    }
    let out = out.symmetrized();
    out.ensure_finite(origin)?;
    Ok(out)
}

/// `S_N''(u)` as the symmetrized central-difference Jacobian of `S_N'`.
///
/// Column `i` is `(S_N'(u + eps e_i) - S_N'(u - eps e_i)) / (2 eps)`; the
/// default step is `1e-5 (1 + max|u|)`.
pub fn gateaux_hessian(speeds: &SpeedSet, u: &Field, step: Option<f64>) -> Result<OperatorMatrix> {
    let origin = Origin::new(MODULE, "gateaux_hessian");
    if speeds.len() + 1 > crate::hierarchy::N_MAX {
        return Err(Error::invalid(
            origin,
            format!("N = {} exceeds the supported hierarchy depth", speeds.len()),
        ));
    }
    let eps = step.unwrap_or(1e-5 * (1.0 + u.max_abs()));
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(
            origin,
            format!("step must be positive, got {eps}"),
        ));
    }
    let grid = u.grid();
    let n = grid.count();
    let far = FarField::of(u);
    let columns: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let probe = |s: f64| {
                let mut v = u.samples().to_vec();
                v[i] += s;
                action_gradient_with(speeds, &Field::raw(grid, v), MeanPolicy::Project, &far)
            };
            let plus = probe(eps)?;
            let minus = probe(-eps)?;
            Ok(plus
                .samples()
                .iter()
                .zip(minus.samples())
                .map(|(a, b)| (a - b) / (2.0 * eps))
                .collect())
        })
        .collect();
    let columns: Vec<Vec<f64>> = columns.into_iter().collect::<Result<_>>()?;
    let raw = OperatorMatrix {
        grid: grid.clone(),
        entries: Mat::from_fn(n, n, |i, j| columns[j][i]),
        asymmetry: None,
    };
    raw.ensure_finite(origin)?;
    let symbol = |kappa: f64| speeds.iter().map(|ck| kappa * kappa + ck).product::<f64>();
    let kappa_nyquist = grid.max_wavenumber();
    let h = if n.is_multiple_of(2) {
        raw.with_free_mode(&nyquist_mode(grid), symbol(kappa_nyquist))
    } else {
        raw
    };
    Ok(h.symmetrized())
}

fn nyquist_mode(grid: &Grid) -> Vec<f64> {
    let n = grid.count();
    let a = 1.0 / (n as f64).sqrt();
    (0..n).map(|m| if m % 2 == 0 { a } else { -a }).collect()
}

/// Worst relative residual of `M L_{N,j} M^t = M^t prod_k(-d^2 + c_k) M`
/// over [`TEST_FIELDS`] random decaying fields, with `M = M_{c_j}`.
pub fn factorization_residual(speeds: &SpeedSet, j: usize, grid: &Grid) -> Result<f64> {
    let l = build_l_nj(speeds, j, grid)?;
    let cj = speeds.get(j - 1);
    let mut worst = 0.0f64;
    for z in random_test_fields(grid, TEST_FIELDS, 0x4641) {
        let lhs = apply_m(cj, &l.apply(&apply_mt(cj, &z)));
        let mz = apply_m(cj, &z);
        let product = mz.fourier_multiplier(|kappa, _| {
            speeds
                .iter()
                .map(|ck| kappa * kappa + ck)
                .product::<f64>()
                .into()
        });
        let rhs = apply_mt(cj, &product);
        worst = worst.max(lhs.sub(&rhs).l2_norm() / rhs.l2_norm());
    }
    Ok(worst)
}

/// `Lambda Q_c = (Q_c + x Q_c') / (2c)`, the derivative of `Q_c` in `c`.
pub fn scaling_derivative(c: f64, grid: &Grid) -> Result<Field> {
    check_decay(c, grid, Origin::new(MODULE, "scaling_derivative"))?;
    let q = profile_q(c, grid)?;
    let xq = derivative_unchecked(&q, 1).times_x();
    Ok(q.add(&xq).scale(0.5 / c))
}

/// Inertia of `S_N''` along the N-soliton flow and of the asymptotic pieces.
#[derive(Debug, Clone)]
pub struct IsoInertiaScan {
    pub times: Vec<f64>,
    /// Inertia of the normalized Gateaux Hessian at each time.
    pub snapshots: Vec<InertiaReport>,
    /// Inertia of the normalized `L_{N,j}`, `j = 1..N`.
    pub parts: Vec<InertiaReport>,
    /// Asymmetry removed from each snapshot Hessian.
    pub asymmetry: Vec<f64>,
}

impl IsoInertiaScan {
    pub fn sum_of_parts(&self) -> Inertia {
        self.parts.iter().map(|p| p.inertia).sum()
    }

    /// Whether every snapshot has the same inertia.
    pub fn is_constant(&self) -> bool {
        self.snapshots
            .windows(2)
            .all(|w| w[0].inertia == w[1].inertia)
    }

    /// Whether every snapshot equals the sum over the decoupled solitons.
    pub fn sum_rule_holds(&self) -> bool {
        let total = self.sum_of_parts();
        self.snapshots.iter().all(|s| s.inertia == total)
    }

    /// Smallest nonzero `|lambda|` over the snapshots, in units of the threshold.
    pub fn margin(&self) -> f64 {
        self.snapshots
            .iter()
            .map(|s| s.smallest_nonzero / s.threshold)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Computes the inertia of `S_N''(U(t))` at each time and of each
/// `L_{N,j}`. All operators are congruence-normalized with
/// `(1 - d^2)^(-N/2)` before counting, which preserves inertia.
pub fn iso_inertia_scan(
    speeds: &SpeedSet,
    phases: &PhaseSet,
    times: &[f64],
    grid: &Grid,
    zero_tol: f64,
) -> Result<IsoInertiaScan> {
    let half_order = speeds.len() as u32;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut asymmetry = Vec::with_capacity(times.len());
    for &t in times {
        let u = n_soliton(speeds, phases, t, grid)?;
        let hessian = gateaux_hessian(speeds, &u, None)?;
        asymmetry.push(hessian.recorded_asymmetry().unwrap_or(0.0));
        snapshots.push(inertia_of(
            &hessian.congruence_normalized(half_order),
            zero_tol,
        )?);
    }
    let parts = (1..=speeds.len())
        .map(|j| {
            let l = build_l_nj(speeds, j, grid)?;
            inertia_of(&l.congruence_normalized(half_order), zero_tol)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IsoInertiaScan {
        times: times.to_vec(),
        snapshots,
        parts,
        asymmetry,
    })
}

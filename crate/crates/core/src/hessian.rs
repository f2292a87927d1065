//! The finite-dimensional side of the stability criterion.
//!
//! `D = {d^2 S_N / d lambda_i d lambda_j}` is assembled from closed forms:
//! `B_iq` is the derivative in `c_i` of a conserved quantity at the
//! N-soliton, `A^{-1}` holds elementary symmetric polynomials of the other
//! speeds, and `D = A B`. The congruence `A^{-1} D A^{-T} = B A^{-T}` is
//! diagonal, which gives the number of positive eigenvalues `p(D)` directly.

use faer::linalg::solvers::DenseSolveCore;
use faer::{Mat, Side};

use crate::error::{Error, Origin, Result};
use crate::grid::Grid;
use crate::hierarchy::{elementary_symmetric, value_h};
use crate::linops::{gateaux_hessian, inertia_of, InertiaReport, DEFAULT_ZERO_TOL};
use crate::soliton::{n_soliton, profile_sum, PhaseSet, SpeedSet};

const MODULE: &str = "hessian";

/// Off-diagonal part of `B A^{-T}` allowed, relative to its largest entry.
pub const DIAGONALITY_TOL: f64 = 1e-9;
/// Beyond this the closed forms are inconsistent with each other.
const CONSTRUCTION_TOL: f64 = 1e-6;
/// Largest accepted condition number of `A^{-1}`.
pub const MAX_CONDITION: f64 = 1e12;
/// Speeds closer than this fraction of the largest one are refused.
pub const MIN_RELATIVE_GAP: f64 = 1e-6;

/// `B_iq = d H_{N+1-q}(U) / d c_i` where `H_j(Q_c) = (-1)^(j-1) 2 c^((2j-1)/2) / (2j-1)`.
///
/// Columns run over `H_N, ..., H_1`, the order in which the Lagrange
/// multipliers appear in the columns of `A^{-1}`.
pub fn build_b(speeds: &SpeedSet) -> Mat<f64> {
    let n = speeds.len();
    Mat::from_fn(n, n, |i, q| {
        let j = n - q;
        let c = speeds.get(i);
        let sign = if (j - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
        sign * c.powf(j as f64 - 1.5)
    })
}

/// Row `i` is `(1, e_1, ..., e_{N-1})` of the speeds other than `c_i`.
pub fn build_ainv(speeds: &SpeedSet) -> Mat<f64> {
    let n = speeds.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let others: Vec<f64> = speeds
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, c)| c)
                .collect();
            elementary_symmetric(&others)
        })
        .collect();
    Mat::from_fn(n, n, |i, j| rows[i][j])
}

/// Closed-form diagonal of `B A^{-T}`:
/// `(-1)^(N-1) c_j^(-1/2) prod_{k != j} (c_j - c_k)`.
pub fn diagonal_entries(speeds: &SpeedSet) -> Vec<f64> {
    let n = speeds.len();
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    speeds
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            let product: f64 = speeds
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, ck)| cj - ck)
                .product();
            sign * product / cj.sqrt()
        })
        .collect()
}

/// `floor((N + 1) / 2)`.
pub fn expected_count(n: usize) -> usize {
    n.div_ceil(2)
}

#[derive(Debug, Clone)]
pub struct HessianReport {
    /// `A B`, symmetrized.
    pub d: Mat<f64>,
    /// Diagonal of `B A^{-T}`.
    pub diagonal_form: Vec<f64>,
    /// Number of positive entries of `diagonal_form`.
    pub p: usize,
    /// Largest off-diagonal entry of `B A^{-T}` relative to its largest entry.
    pub diagonality: f64,
    /// Asymmetry of `A B` removed by symmetrization, relative.
    pub asymmetry: f64,
    /// 2-norm condition number of `A^{-1}`.
    pub condition: f64,
}

impl HessianReport {
    /// Eigenvalues of `D`, nondecreasing.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.d.self_adjoint_eigenvalues(Side::Lower).map_err(|e| {
            Error::numerical(
                Origin::new(MODULE, "HessianReport::eigenvalues"),
                format!("symmetric eigensolver failed: {e:?}"),
            )
        })
    }

    /// Number of positive eigenvalues of `D`; equals `p` by Sylvester's law.
    pub fn positive_eigenvalues(&self) -> Result<usize> {
        Ok(self.eigenvalues()?.iter().filter(|&&v| v > 0.0).count())
    }
}

fn check_separation(speeds: &SpeedSet, origin: Origin) -> Result<()> {
    let top = speeds.iter().fold(0.0f64, f64::max);
    if let Some(w) = speeds
        .as_slice()
        .windows(2)
        .find(|w| w[1] - w[0] < MIN_RELATIVE_GAP * top)
    {
        return Err(Error::invalid(
            origin,
            format!(
                "speeds {} and {} are closer than {MIN_RELATIVE_GAP:.0e} * max c",
                w[0], w[1]
            ),
        ));
    }
    Ok(())
}

fn relative_offdiagonal(m: &Mat<f64>) -> f64 {
    let n = m.nrows();
    let scale = m.norm_max();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                worst = worst.max(m[(i, j)].abs());
            }
        }
    }
    worst / scale
}

pub fn build_report(speeds: &SpeedSet) -> Result<HessianReport> {
    let origin = Origin::new(MODULE, "build_report");
    check_separation(speeds, origin)?;
    let n = speeds.len();
    let ainv = build_ainv(speeds);
    let b = build_b(speeds);

    let sv = ainv
        .singular_values()
        .map_err(|e| Error::numerical(origin, format!("singular values failed: {e:?}")))?;
    let condition = sv[0] / sv[n - 1];
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        return Err(Error::numerical(
            origin,
            format!("A^-1 is ill-conditioned (cond = {condition:.3e} > {MAX_CONDITION:.0e})"),
        ));
    }
    let a = ainv.partial_piv_lu().inverse();

    let form = &b * ainv.transpose();
    let diagonality = relative_offdiagonal(&form);
    if diagonality > CONSTRUCTION_TOL {
        return Err(Error::numerical(
            origin,
            format!("B A^-T is not diagonal (relative off-diagonal {diagonality:.3e})"),
        ));
    }
    let diagonal_form: Vec<f64> = (0..n).map(|j| form[(j, j)]).collect();
    let p = diagonal_form.iter().filter(|&&v| v > 0.0).count();

    let raw = &a * &b;
    let scale = raw.norm_max();
    let mut asym = 0.0f64;
    for j in 0..n {
        for i in 0..j {
            asym = asym.max((raw[(i, j)] - raw[(j, i)]).abs());
        }
    }
    let d = Mat::from_fn(n, n, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)]));
    Ok(HessianReport {
        d,
        diagonal_form,
        p,
        diagonality,
        asymmetry: asym / scale,
        condition,
    })
}

/// Finite-difference oracle for [`build_b`]: column `q` differentiates
/// `H_{N+1-q}` of well-separated profiles `sum_k Q_{c_k}(x - z_k)` in `c_i`
/// by central differences of relative step `rel_step`.
pub fn finite_difference_b(
    speeds: &SpeedSet,
    centers: &[f64],
    grid: &Grid,
    rel_step: f64,
) -> Result<Mat<f64>> {
    let n = speeds.len();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        let h = rel_step * speeds.get(i);
        let shifted = |s: f64| {
            let mut v = speeds.as_slice().to_vec();
            v[i] += s;
            SpeedSet::new(v).and_then(|sp| profile_sum(&sp, centers, grid))
        };
        let (plus, minus) = (shifted(h)?, shifted(-h)?);
        for q in 0..n {
            let j = n - q;
            out[(i, q)] = (value_h(j, &plus)? - value_h(j, &minus)?) / (2.0 * h);
        }
    }
    Ok(out)
}

/// Outcome of comparing `n(L_N)` with `p(D)`.
#[derive(Debug, Clone)]
pub struct CriterionCheck {
    /// Number of negative eigenvalues of `S_N''` at the N-soliton.
    pub negatives: usize,
    pub p: usize,
    pub holds: bool,
    pub inertia: InertiaReport,
    pub report: HessianReport,
}

/// Computes `n(L_N)` at time `t` from the Gateaux Hessian (normalized by
/// `(1 - d^2)^(-N/2)`, which keeps the inertia) and compares it with `p(D)`.
pub fn criterion_check(
    speeds: &SpeedSet,
    phases: &PhaseSet,
    t: f64,
    grid: &Grid,
) -> Result<CriterionCheck> {
    let report = build_report(speeds)?;
    let u = n_soliton(speeds, phases, t, grid)?;
    let hessian = gateaux_hessian(speeds, &u, None)?;
    let inertia = inertia_of(
        &hessian.congruence_normalized(speeds.len() as u32),
        DEFAULT_ZERO_TOL,
    )?;
    let negatives = inertia.inertia.negatives;
    Ok(CriterionCheck {
        negatives,
        p: report.p,
        holds: negatives == report.p,
        inertia,
        report,
    })
}

//! Exact mKdV solitons and multi-solitons.
//!
//! With `s_j = sqrt(c_j) (x - c_j t) + x_j`, the N-soliton is
//! `2 sqrt(2) d/dx atan(g / f)` where `f` sums `a(sigma) exp(sum_{j in sigma} s_j)`
//! over even-sized index sets and `g` over odd-sized ones. The x-derivative is
//! taken analytically: `(g' f - g f') / (f^2 + g^2)`, which is homogeneous of
//! degree zero in `(f, g)`, so every term is rescaled by `exp(-max exponent)`
//! before summation and large `|t|` never overflows.

use std::f64::consts::SQRT_2;

use crate::error::{Error, Origin, Result};
use crate::grid::{Field, Grid};

const MODULE: &str = "soliton_factory";

/// Largest supported N (each of `f`, `g` has `2^(N-1)` terms).
pub const MAX_SOLITONS: usize = 8;
/// Amplitude a profile may keep at the box edge.
pub const DECAY_TOL: f64 = 1e-12;

/// Strictly increasing positive speeds `0 < c_1 < ... < c_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSet(Vec<f64>);

impl SpeedSet {
    pub fn new(speeds: Vec<f64>) -> Result<Self> {
        let origin = Origin::new(MODULE, "SpeedSet::new");
        if speeds.is_empty() {
            return Err(Error::invalid(origin, "at least one speed is required"));
        }
        if let Some(c) = speeds.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid(
                origin,
                format!("speeds must be positive and finite, got {c}"),
            ));
        }
        if let Some(w) = speeds.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                origin,
                format!(
                    "speeds must be strictly increasing, got {} before {}",
                    w[0], w[1]
                ),
            ));
        }
        Ok(Self(speeds))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }

    /// Every speed multiplied by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|c| alpha * c).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet(Vec<f64>);

impl PhaseSet {
    pub fn new(phases: Vec<f64>) -> Result<Self> {
        if let Some(p) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(
                Origin::new(MODULE, "PhaseSet::new"),
                format!("phases must be finite, got {p}"),
            ));
        }
        Ok(Self(phases))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Phases of the same solution re-based at time `t`:
    /// `U(t, .; x) = U(0, .; x - sqrt(c) c t)` since `s_j` only sees that combination.
    pub fn advanced(&self, speeds: &SpeedSet, t: f64) -> PhaseSet {
        PhaseSet(
            self.0
                .iter()
                .zip(speeds.iter())
                .map(|(x, c)| x - c.sqrt() * c * t)
                .collect(),
        )
    }
}

fn sech(x: f64) -> f64 {
    // cosh overflows to inf for |x| > ~710, giving the correct limit 0
    1.0 / x.cosh()
}

/// `Q_c(x) = sqrt(2c) sech(sqrt(c) x)`.
pub fn q_value(c: f64, x: f64) -> f64 {
    (2.0 * c).sqrt() * sech(c.sqrt() * x)
}

fn check_speed(c: f64, origin: Origin) -> Result<()> {
    if c.is_finite() && c > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            origin,
            format!("speed must be positive, got {c}"),
        ))
    }
}

/// Whether `Q_c` has decayed below [`DECAY_TOL`] at the box edge.
pub fn decays_on(c: f64, grid: &Grid) -> bool {
    q_value(c, 0.5 * grid.length()) < DECAY_TOL
}

pub(crate) fn check_decay(c: f64, grid: &Grid, origin: Origin) -> Result<()> {
    check_speed(c, origin)?;
    if decays_on(c, grid) {
        Ok(())
    } else {
        Err(Error::invalid(
            origin,
            format!(
                "box too small for c = {c}: Q_c(L/2) = {:.2e} >= {DECAY_TOL:.0e}",
                q_value(c, 0.5 * grid.length())
            ),
        ))
    }
}

fn check_center(c: f64, center: f64, grid: &Grid, origin: Origin) -> Result<()> {
    let limit = 0.5 * grid.length() - 10.0 / c.sqrt();
    if center.abs() < limit {
        Ok(())
    } else {
        Err(Error::invalid(
            origin,
            format!(
                "soliton centre {center:.3} (c = {c}) outside the safe region |x| < {limit:.3}"
            ),
        ))
    }
}

/// The soliton profile `Q_c` sampled on the grid.
pub fn profile_q(c: f64, grid: &Grid) -> Result<Field> {
    check_decay(c, grid, Origin::new(MODULE, "profile_Q"))?;
    Field::from_fn(grid, |x| q_value(c, x))
}

/// `Q_c(x - c t - x0)`: the soliton centred at `x0 + c t`.
pub fn one_soliton(c: f64, x0: f64, t: f64, grid: &Grid) -> Result<Field> {
    let origin = Origin::new(MODULE, "one_soliton");
    check_speed(c, origin)?;
    let center = x0 + c * t;
    check_center(c, center, grid, origin)?;
    Field::from_fn(grid, |x| q_value(c, x - center))
}

/// Sum of translated profiles `sum_j Q_{c_j}(x - z_j)`.
pub fn profile_sum(speeds: &SpeedSet, centers: &[f64], grid: &Grid) -> Result<Field> {
    let origin = Origin::new(MODULE, "profile_sum");
    if centers.len() != speeds.len() {
        return Err(Error::invalid(origin, "one centre per speed is required"));
    }
    Field::from_fn(grid, |x| {
        speeds
            .iter()
            .zip(centers)
            .map(|(c, z)| q_value(c, x - z))
            .sum()
    })
}

/// Asymptotic centre `(c t - x_j / sqrt(c))` of soliton `j` ignoring collision shifts.
pub fn nominal_center(c: f64, phase: f64, t: f64) -> f64 {
    c * t - phase / c.sqrt()
}

fn check_pair(speeds: &SpeedSet, phases: &PhaseSet, origin: Origin) -> Result<()> {
    if speeds.len() != phases.len() {
        return Err(Error::invalid(
            origin,
            format!("{} speeds but {} phases", speeds.len(), phases.len()),
        ));
    }
    Ok(())
}

/// The 2-soliton `2 sqrt(2) d/dx atan((e^{s1} + e^{s2}) / (1 - rho^2 e^{s1+s2}))`.
pub fn two_soliton(speeds: &SpeedSet, phases: &PhaseSet, t: f64, grid: &Grid) -> Result<Field> {
    let origin = Origin::new(MODULE, "two_soliton");
    check_pair(speeds, phases, origin)?;
    if speeds.len() != 2 {
        return Err(Error::invalid(
            origin,
            format!("expected 2 speeds, got {}", speeds.len()),
        ));
    }
    for (c, x) in speeds.iter().zip(phases.as_slice()) {
        check_center(c, nominal_center(c, *x, t), grid, origin)?;
    }
    let (c1, c2) = (speeds.get(0), speeds.get(1));
    let (r1, r2) = (c1.sqrt(), c2.sqrt());
    let rho2 = ((r1 - r2) / (r1 + r2)).powi(2);
    let (x1, x2) = (phases.as_slice()[0], phases.as_slice()[1]);
    let field = Field::from_fn(grid, |x| {
        let s1 = r1 * (x - c1 * t) + x1;
        let s2 = r2 * (x - c2 * t) + x2;
        let m = 0f64.max(s1).max(s2).max(s1 + s2);
        let (e0, e1, e2, e12) = (
            (-m).exp(),
            (s1 - m).exp(),
            (s2 - m).exp(),
            (s1 + s2 - m).exp(),
        );
        let g = e1 + e2;
        let gx = r1 * e1 + r2 * e2;
        let f = e0 - rho2 * e12;
        let fx = -rho2 * (r1 + r2) * e12;
        2.0 * SQRT_2 * (gx * f - g * fx) / (f * f + g * g)
    });
    field.map_err(|_| Error::numerical(origin, "non-finite value in the 2-soliton formula"))
}

/// Precomputed index-set data for the N-soliton sums.
struct Expansion {
    roots: Vec<f64>,
    /// (bitmask, coefficient a(sigma), sum of sqrt(c) over sigma, odd size?)
    terms: Vec<(u32, f64, f64, bool)>,
}

impl Expansion {
    fn new(speeds: &SpeedSet) -> Self {
        let roots: Vec<f64> = speeds.iter().map(f64::sqrt).collect();
        let n = roots.len();
        // interaction table a~(k, l) = -((sqrt c_l - sqrt c_k)/(sqrt c_l + sqrt c_k))^2
        let mut pair = vec![vec![0.0; n]; n];
        for k in 0..n {
            for l in 0..n {
                pair[k][l] = -((roots[l] - roots[k]) / (roots[l] + roots[k])).powi(2);
            }
        }
        let terms = (0u32..1 << n)
            .map(|mask| {
                let members: Vec<usize> = (0..n).filter(|j| mask >> j & 1 == 1).collect();
                let mut coeff = 1.0;
                for (a, &k) in members.iter().enumerate() {
                    for &l in &members[a + 1..] {
                        coeff *= pair[k][l];
                    }
                }
                let weight = members.iter().map(|&j| roots[j]).sum();
                (mask, coeff, weight, members.len() % 2 == 1)
            })
            .collect();
        Self { roots, terms }
    }

    fn evaluate(&self, s: &[f64]) -> f64 {
        let exponent = |mask: u32| -> f64 {
            (0..self.roots.len())
                .filter(|j| mask >> j & 1 == 1)
                .map(|j| s[j])
                .sum()
        };
        let exps: Vec<f64> = self.terms.iter().map(|t| exponent(t.0)).collect();
        let m = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut f, mut fx, mut g, mut gx) = (0.0, 0.0, 0.0, 0.0);
        for (&(_, coeff, weight, odd), e) in self.terms.iter().zip(&exps) {
            let v = coeff * (e - m).exp();
            if odd {
                g += v;
                gx += weight * v;
            } else {
                f += v;
                fx += weight * v;
            }
        }
        2.0 * SQRT_2 * (gx * f - g * fx) / (f * f + g * g)
    }
}

/// General N-soliton at time `t`.
pub fn n_soliton(speeds: &SpeedSet, phases: &PhaseSet, t: f64, grid: &Grid) -> Result<Field> {
    let origin = Origin::new(MODULE, "n_soliton");
    check_pair(speeds, phases, origin)?;
    if speeds.len() > MAX_SOLITONS {
        return Err(Error::invalid(
            origin,
            format!(
                "at most {MAX_SOLITONS} solitons are supported, got {}",
                speeds.len()
            ),
        ));
    }
    let expansion = Expansion::new(speeds);
    let cs = speeds.as_slice();
    let xs = phases.as_slice();
    let mut s = vec![0.0; cs.len()];
    let samples: Vec<f64> = grid
        .coordinates()
        .into_iter()
        .map(|x| {
            for (j, sj) in s.iter_mut().enumerate() {
                *sj = expansion.roots[j] * (x - cs[j] * t) + xs[j];
            }
            expansion.evaluate(&s)
        })
        .collect();
    Field::new(grid, samples).map_err(|_| {
        Error::numerical(
            origin,
            "non-finite value in the N-soliton formula (exponent overflow)",
        )
    })
}

/// Per-soliton `(speed, centre)` recovered from local maxima.
///
/// Peaks above `sqrt(2 c_1) / 2` are matched to speeds by height (a soliton
/// of speed `c` peaks at `sqrt(2c)`), and each centre is refined by a
/// three-point parabola through `log u`. Returned in increasing speed.
pub fn fitted_decomposition(u: &Field, speeds: &SpeedSet) -> Result<Vec<(f64, f64)>> {
    let origin = Origin::new(MODULE, "fitted_decomposition");
    let grid = u.grid();
    let v = u.samples();
    let n = v.len();
    let threshold = (2.0 * speeds.get(0)).sqrt() / 2.0;
    let h = grid.spacing();
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    for m in 0..n {
        let (a, b, c) = (v[(m + n - 1) % n], v[m], v[(m + 1) % n]);
        if b > threshold && b > a && b >= c {
            let (la, lb, lc) = (
                a.max(f64::MIN_POSITIVE).ln(),
                b.ln(),
                c.max(f64::MIN_POSITIVE).ln(),
            );
            let curvature = la - 2.0 * lb + lc;
            let offset = if curvature < 0.0 {
                0.5 * (la - lc) / curvature
            } else {
                0.0
            };
            let height = lb - 0.25 * (la - lc) * offset;
            peaks.push((grid.x(m) + offset * h, height.exp()));
        }
    }
    if peaks.len() != speeds.len() {
        return Err(Error::invalid(
            origin,
            format!(
                "found {} peaks above {threshold:.3} but expected {}; solitons are not separated",
                peaks.len(),
                speeds.len()
            ),
        ));
    }
    peaks.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(speeds.iter().zip(peaks).map(|(c, (z, _))| (c, z)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::spectral_derivative;

    fn speeds(v: &[f64]) -> SpeedSet {
        SpeedSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn speed_set_validation() {
        assert!(SpeedSet::new(vec![]).is_err());
        assert!(SpeedSet::new(vec![2.0, 1.0]).is_err());
        assert!(SpeedSet::new(vec![1.0, 1.0]).is_err());
        assert!(SpeedSet::new(vec![-1.0]).is_err());
        assert!(PhaseSet::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn profile_peak_values() {
        let g = Grid::standard();
        let q1 = profile_q(1.0, &g).unwrap();
        let q4 = profile_q(4.0, &g).unwrap();
        let mid = g.count() / 2;
        assert_eq!(g.x(mid), 0.0);
        assert!((q1.samples()[mid] - SQRT_2).abs() < 1e-14);
        assert!((q4.samples()[mid] - 2.0 * SQRT_2).abs() < 1e-14);
    }

    #[test]
    fn profile_requires_decay() {
        let small = Grid::new(20.0, 256).unwrap();
        assert!(profile_q(1.0, &small).is_err());
        assert!(profile_q(0.0, &Grid::standard()).is_err());
    }

    #[test]
    fn profile_solves_stationary_equation() {
        let g = Grid::standard();
        let q = profile_q(1.0, &g).unwrap();
        let qxx = spectral_derivative(&q, 2).unwrap();
        let residual = q.zip_with(&qxx, |a, b| -b + a - a * a * a);
        assert!(residual.max_abs() < 1e-9);
    }

    #[test]
    fn one_soliton_translates() {
        let g = Grid::standard();
        let base = one_soliton(1.0, 0.0, 0.0, &g).unwrap();
        assert_eq!(base, profile_q(1.0, &g).unwrap());
        let moved = one_soliton(1.0, 0.0, 2.0, &g).unwrap();
        assert!((g.x(moved.argmax()) - 2.0).abs() <= g.spacing());
        assert!((moved.l2_norm() - base.l2_norm()).abs() < 1e-12);
        assert!(one_soliton(1.0, 0.0, 35.0, &g).is_err());
    }

    #[test]
    fn n_soliton_reduces_to_one_soliton() {
        let g = Grid::standard();
        let c: f64 = 1.7;
        for (x0, t) in [(0.0, 0.0), (3.0, -2.0), (-5.0, 4.0)] {
            let phase = PhaseSet::new(vec![-c.sqrt() * x0]).unwrap();
            let u = n_soliton(&speeds(&[c]), &phase, t, &g).unwrap();
            let v = one_soliton(c, x0, t, &g).unwrap();
            assert!(u.sub(&v).max_abs() < 1e-13);
        }
    }

    #[test]
    fn two_soliton_formulas_agree() {
        let g = Grid::standard();
        let c = speeds(&[1.0, 2.0]);
        let x = PhaseSet::zeros(2);
        for t in [-3.0, 0.0, 3.0] {
            let a = two_soliton(&c, &x, t, &g).unwrap();
            let b = n_soliton(&c, &x, t, &g).unwrap();
            assert!(a.sub(&b).max_abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn large_times_do_not_overflow() {
        let g = Grid::new(400.0, 4096).unwrap();
        let c = speeds(&[0.5, 1.0, 1.5]);
        let u = n_soliton(&c, &PhaseSet::zeros(3), 80.0, &g).unwrap();
        assert!(u.is_finite());
        assert!(u.max_abs() > 1.0);
    }

    #[test]
    fn too_many_solitons() {
        let g = Grid::standard();
        let c = speeds(&(1..=9).map(|k| k as f64).collect::<Vec<_>>());
        assert!(n_soliton(&c, &PhaseSet::zeros(9), 0.0, &g).is_err());
        assert!(n_soliton(&speeds(&[1.0]), &PhaseSet::zeros(2), 0.0, &g).is_err());
    }

    #[test]
    fn decomposition_of_constructed_sum() {
        let g = Grid::new(100.0, 4096).unwrap();
        let c = speeds(&[1.0, 2.0, 3.0]);
        let z = [-20.0, 0.0, 20.0];
        let u = profile_sum(&c, &z, &g).unwrap();
        let fit = fitted_decomposition(&u, &c).unwrap();
        for ((speed, center), (cj, zj)) in fit.iter().zip(c.iter().zip(z)) {
            assert_eq!(*speed, cj);
            assert!((center - zj).abs() < 1e-3, "{center} vs {zj}");
        }
    }

    #[test]
    fn decomposition_of_travelling_soliton() {
        let g = Grid::standard();
        let u = one_soliton(1.0, 0.0, 3.3, &g).unwrap();
        let fit = fitted_decomposition(&u, &speeds(&[1.0])).unwrap();
        assert!((fit[0].1 - 3.3).abs() <= g.spacing());
    }

    #[test]
    fn decomposition_rejects_wrong_peak_count() {
        let g = Grid::standard();
        let u = one_soliton(1.0, 0.0, 0.0, &g).unwrap();
        let err = fitted_decomposition(&u, &speeds(&[1.0, 2.0])).unwrap_err();
        assert_eq!(err.origin().op, "fitted_decomposition");
    }
}

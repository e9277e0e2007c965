//! Feasible descent on the Stiefel manifold `St(D, r) = {U : UᵀU = I}`.
//!
//! Iterates move along the Cayley curve
//! `Y(τ) = (I + τ/2·A)⁻¹(I − τ/2·A)U` with the skew matrix `A = G·Uᵀ − U·Gᵀ`,
//! which stays on the manifold for every `τ`. Trial steps come from
//! alternating Barzilai–Borwein formulas and are accepted by monotone Armijo
//! backtracking.
//!
//! This module also holds the Tucker factor subproblem: the `β/2‖⟦G;U⟧ − L‖²`
//! fit plus the augmented terms coupling `Uᵢ` to its difference split `Yᵢ`.

use nalgebra::linalg::QR;

use crate::error::{Error, Result};
use crate::tensor::{toeplitz_diff, toeplitz_diff_adjoint, tucker_reconstruct, Matrix, Mode, Tensor3};

/// Orthonormality tolerance for [`StiefelPoint`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;
const DRIFT_TOL: f64 = 1e-10;

/// `‖UᵀU − I‖_F`.
pub fn orthonormality_error(u: &Matrix) -> f64 {
    let gram = u.tr_mul(u);
    (gram - Matrix::identity(u.ncols(), u.ncols())).norm()
}

/// Thin QR orthonormalization with a nonnegative `R` diagonal.
pub fn orthonormalize(u: &Matrix) -> Matrix {
    let qr = QR::new(u.clone());
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..q.ncols().min(r.nrows()) {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

/// A matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint(Matrix);

impl StiefelPoint {
    pub fn new(u: Matrix) -> Result<Self> {
        if u.nrows() < u.ncols() || u.ncols() == 0 {
            return Err(Error::dims(format!("Stiefel point needs rows ≥ cols ≥ 1, got {:?}", u.shape())));
        }
        let err = orthonormality_error(&u);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::arg(format!("columns are not orthonormal (‖UᵀU − I‖ = {err:.3e})")));
        }
        Ok(Self(u))
    }

    /// Orthonormalizes an arbitrary full-column-rank matrix.
    pub fn from_qr(u: &Matrix) -> Result<Self> {
        Self::new(orthonormalize(u))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// A smooth function of a `D × r` matrix with its Euclidean gradient.
pub trait SmoothObjective {
    fn value(&self, u: &Matrix) -> f64;
    fn gradient(&self, u: &Matrix) -> Matrix;
}

#[derive(Clone, Debug)]
pub struct StiefelOutcome {
    pub point: StiefelPoint,
    pub iterations: usize,
    pub initial_value: f64,
    pub final_value: f64,
    /// Stationarity reached (as opposed to iteration or backtracking limits).
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct CurvilinearSearch {
    pub max_iters: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub min_step: f64,
    pub max_step: f64,
}

impl CurvilinearSearch {
    pub fn new(max_iters: usize) -> Self {
        Self { max_iters, armijo: 1e-4, backtrack: 0.5, max_backtracks: 60, min_step: 1e-10, max_step: 1e10 }
    }

    pub fn minimize<O: SmoothObjective + ?Sized>(&self, obj: &O, start: &StiefelPoint) -> Result<StiefelOutcome> {
        if self.max_iters == 0 {
            return Err(Error::arg("max_iters must be at least 1"));
        }
        let mut u = start.matrix().clone();
        let tol = 1e-8 * (1.0 + u.norm());
        let mut f = checked_value(obj, &u)?;
        let initial_value = f;
        let mut g = checked_gradient(obj, &u)?;
        let mut dir = skew_direction(&u, &g);
        let mut tau = 1e-2 / (1.0 + g.norm());
        let mut iterations = 0;
        let mut converged = dir.norm() <= tol;

        while !converged && iterations < self.max_iters {
            // F'(0) along the curve is −⟨G, A·U⟩.
            let slope = -g.dot(&dir);
            let mut accepted = None;
            for _ in 0..=self.max_backtracks {
                let cand = cayley_step(&u, &g, tau);
                let fc = obj.value(&cand);
                if !fc.is_finite() {
                    return Err(Error::NonFinite("Stiefel objective".into()));
                }
                if fc <= f + self.armijo * tau * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                tau *= self.backtrack;
            }
            let Some((mut cand, fc)) = accepted else { break };
            if orthonormality_error(&cand) > DRIFT_TOL {
                cand = orthonormalize(&cand);
            }
            iterations += 1;

            let g_new = checked_gradient(obj, &cand)?;
            let dir_new = skew_direction(&cand, &g_new);
            let s = &cand - &u;
            let y = &dir_new - &dir;
            let sy = s.dot(&y).abs();
            tau = if sy > 0.0 {
                if iterations % 2 == 1 {
                    s.norm_squared() / sy
                } else {
                    sy / y.norm_squared()
                }
            } else {
                self.max_step
            };
            tau = tau.clamp(self.min_step, self.max_step);

            u = cand;
            f = fc;
            g = g_new;
            dir = dir_new;
            converged = dir.norm() <= tol;
        }

        Ok(StiefelOutcome { point: StiefelPoint(u), iterations, initial_value, final_value: f, converged })
    }
}

pub fn minimize_on_stiefel<O: SmoothObjective + ?Sized>(
    obj: &O,
    start: &StiefelPoint,
    max_iters: usize,
) -> Result<StiefelOutcome> {
    CurvilinearSearch::new(max_iters).minimize(obj, start)
}

fn checked_value<O: SmoothObjective + ?Sized>(obj: &O, u: &Matrix) -> Result<f64> {
    let v = obj.value(u);
    if !v.is_finite() {
        return Err(Error::NonFinite("Stiefel objective".into()));
    }
    Ok(v)
}

fn checked_gradient<O: SmoothObjective + ?Sized>(obj: &O, u: &Matrix) -> Result<Matrix> {
    let g = obj.gradient(u);
    if g.shape() != u.shape() {
        return Err(Error::dims(format!("gradient shape {:?} vs point {:?}", g.shape(), u.shape())));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Stiefel gradient".into()));
    }
    Ok(g)
}

/// `A·U = G − U·GᵀU` for orthonormal `U`.
fn skew_direction(u: &Matrix, g: &Matrix) -> Matrix {
    g - u * g.tr_mul(u)
}

/// Point on the Cayley curve through `u` at step `tau`.
pub fn cayley_step(u: &Matrix, g: &Matrix, tau: f64) -> Matrix {
    let (d, r) = u.shape();
    if 2 * r < d {
        cayley_low_rank(u, g, tau)
    } else {
        cayley_dense(u, g, tau)
    }
}

/// Sherman–Morrison–Woodbury form with `A = [G, U]·[U, −G]ᵀ`:
/// `Y = U − τ·W_L (I + τ/2·W_Rᵀ W_L)⁻¹ W_Rᵀ U`.
pub fn cayley_low_rank(u: &Matrix, g: &Matrix, tau: f64) -> Matrix {
    let (d, r) = u.shape();
    let mut left = Matrix::zeros(d, 2 * r);
    left.columns_mut(0, r).copy_from(g);
    left.columns_mut(r, r).copy_from(u);
    let mut right = Matrix::zeros(d, 2 * r);
    right.columns_mut(0, r).copy_from(u);
    right.columns_mut(r, r).copy_from(&(-g));

    let mut system = right.tr_mul(&left) * (0.5 * tau);
    for i in 0..2 * r {
        system[(i, i)] += 1.0;
    }
    let rhs = right.tr_mul(u);
    match system.lu().solve(&rhs) {
        Some(x) => u - (left * x) * tau,
        None => cayley_dense(u, g, tau),
    }
}

/// Direct solve of `(I + τ/2·A) Y = (I − τ/2·A) U`.
pub fn cayley_dense(u: &Matrix, g: &Matrix, tau: f64) -> Matrix {
    let d = u.nrows();
    let a = g * u.transpose() - u * g.transpose();
    let half = a * (0.5 * tau);
    let lhs = Matrix::identity(d, d) + &half;
    let rhs = u - &half * u;
    // I + skew is always invertible.
    lhs.lu().solve(&rhs).expect("I + skew-symmetric matrix is nonsingular")
}

fn check_factor_shapes(core: &Tensor3, factors: [&Matrix; 3], target: &Tensor3) -> Result<()> {
    for mode in Mode::ALL {
        let u = factors[mode.axis()];
        if u.ncols() != core.dim(mode) || u.nrows() != target.dim(mode) {
            return Err(Error::dims(format!(
                "factor {} is {:?}, expected {}×{}",
                mode.number(),
                u.shape(),
                target.dim(mode),
                core.dim(mode)
            )));
        }
    }
    Ok(())
}

/// `f_β = β/2·‖⟦G; U1, U2, U3⟧ − L‖²_F`.
pub fn tucker_fit_value(core: &Tensor3, factors: [&Matrix; 3], target: &Tensor3, beta: f64) -> Result<f64> {
    check_factor_shapes(core, factors, target)?;
    let resid = tucker_reconstruct(core, factors)?.sub(target)?;
    Ok(0.5 * beta * resid.frobenius_norm().powi(2))
}

/// Gradient of `f_β` with respect to the factor of `mode`, e.g. for mode 1
/// `β·(⟦G;U⟧ − L)_[1]·(U3 ⊗ U2)·G_[1]ᵀ`. The Kronecker factor is applied as
/// two mode products.
pub fn grad_fbeta_u(core: &Tensor3, factors: [&Matrix; 3], target: &Tensor3, beta: f64, mode: Mode) -> Result<Matrix> {
    check_factor_shapes(core, factors, target)?;
    let resid = tucker_reconstruct(core, factors)?.sub(target)?;
    let (a, b) = mode.others();
    let projected =
        resid.mode_product_transposed(factors[a.axis()], a)?.mode_product_transposed(factors[b.axis()], b)?;
    Ok(projected.unfold(mode) * core.unfold(mode).transpose() * beta)
}

/// The augmented terms `⟨Y − T·U, V⟩ + α/2·‖Y − T·U‖²_F` tying a factor to
/// its difference split.
#[derive(Clone, Copy, Debug)]
pub struct DifferenceCoupling<'a> {
    pub split: &'a Matrix,
    pub multiplier: &'a Matrix,
    pub penalty: f64,
}

impl DifferenceCoupling<'_> {
    fn check(&self, u: &Matrix) -> Result<()> {
        let want = (u.nrows().saturating_sub(1), u.ncols());
        if self.split.shape() != want || self.multiplier.shape() != want {
            return Err(Error::dims(format!(
                "difference split {:?} / multiplier {:?}, expected {want:?}",
                self.split.shape(),
                self.multiplier.shape()
            )));
        }
        Ok(())
    }

    /// `Y − T·U`.
    fn residual(&self, u: &Matrix) -> Matrix {
        self.split - toeplitz_diff(u).expect("factor has at least two rows")
    }

    pub fn value(&self, u: &Matrix) -> f64 {
        let r = self.residual(u);
        r.dot(self.multiplier) + 0.5 * self.penalty * r.norm_squared()
    }

    /// `−Tᵀ(V + α(Y − T·U))`.
    pub fn gradient(&self, u: &Matrix) -> Matrix {
        let r = self.residual(u);
        -toeplitz_diff_adjoint(&(self.multiplier + r * self.penalty))
    }
}

/// Full gradient of a factor subproblem: `∇f_β − Tᵀ(V + α(Y − T·U))`.
pub fn grad_u_subproblem(
    core: &Tensor3,
    factors: [&Matrix; 3],
    target: &Tensor3,
    beta: f64,
    mode: Mode,
    coupling: DifferenceCoupling<'_>,
) -> Result<Matrix> {
    let u = factors[mode.axis()];
    coupling.check(u)?;
    Ok(grad_fbeta_u(core, factors, target, beta, mode)? + coupling.gradient(u))
}

/// Value of a factor subproblem objective (without the manifold indicator).
pub fn u_subproblem_value(
    core: &Tensor3,
    factors: [&Matrix; 3],
    target: &Tensor3,
    beta: f64,
    mode: Mode,
    coupling: DifferenceCoupling<'_>,
) -> Result<f64> {
    coupling.check(factors[mode.axis()])?;
    Ok(tucker_fit_value(core, factors, target, beta)? + coupling.value(factors[mode.axis()]))
}

/// A factor subproblem with the tensor-sized work done once.
///
/// With the other two factors fixed, `f_β(U) = β/2·(tr(U·H·Uᵀ) − 2⟨U, M⟩ + ‖L‖²)`
/// where `H = G_(n)(Gram_b ⊗ Gram_a)G_(n)ᵀ` and `M = (L ×_a U_aᵀ ×_b U_bᵀ)_(n)·G_(n)ᵀ`,
/// so each evaluation costs `O(D·r²)` instead of a full reconstruction.
#[derive(Clone, Debug)]
pub struct FactorSubproblem {
    beta: f64,
    gram: Matrix,
    cross: Matrix,
    target_sq: f64,
    split: Matrix,
    multiplier: Matrix,
    penalty: f64,
}

impl FactorSubproblem {
    pub fn new(
        core: &Tensor3,
        factors: [&Matrix; 3],
        target: &Tensor3,
        beta: f64,
        mode: Mode,
        coupling: DifferenceCoupling<'_>,
    ) -> Result<Self> {
        check_factor_shapes(core, factors, target)?;
        coupling.check(factors[mode.axis()])?;
        let (a, b) = mode.others();
        let (ua, ub) = (factors[a.axis()], factors[b.axis()]);
        let core_n = core.unfold(mode);
        let weighted = core.mode_product(&ua.tr_mul(ua), a)?.mode_product(&ub.tr_mul(ub), b)?;
        let gram = weighted.unfold(mode) * core_n.transpose();
        let cross =
            target.mode_product_transposed(ua, a)?.mode_product_transposed(ub, b)?.unfold(mode) * core_n.transpose();
        Ok(Self {
            beta,
            gram,
            cross,
            target_sq: target.frobenius_norm().powi(2),
            split: coupling.split.clone(),
            multiplier: coupling.multiplier.clone(),
            penalty: coupling.penalty,
        })
    }

    fn coupling(&self) -> DifferenceCoupling<'_> {
        DifferenceCoupling { split: &self.split, multiplier: &self.multiplier, penalty: self.penalty }
    }

    /// The constant `β/2·‖L‖²` left out of [`SmoothObjective::value`].
    pub fn offset(&self) -> f64 {
        0.5 * self.beta * self.target_sq
    }

    pub fn full_value(&self, u: &Matrix) -> f64 {
        self.value(u) + self.offset()
    }
}

impl SmoothObjective for FactorSubproblem {
    /// Objective value up to the constant [`FactorSubproblem::offset`].
    fn value(&self, u: &Matrix) -> f64 {
        let uh = u * &self.gram;
        0.5 * self.beta * (uh.dot(u) - 2.0 * u.dot(&self.cross)) + self.coupling().value(u)
    }

    fn gradient(&self, u: &Matrix) -> Matrix {
        (u * &self.gram - &self.cross) * self.beta + self.coupling().gradient(u)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant;
    impl SmoothObjective for Constant {
        fn value(&self, _: &Matrix) -> f64 {
            1.5
        }
        fn gradient(&self, u: &Matrix) -> Matrix {
            Matrix::zeros(u.nrows(), u.ncols())
        }
    }

    /// ½‖U − Q‖².
    struct Distance(Matrix);
    impl SmoothObjective for Distance {
        fn value(&self, u: &Matrix) -> f64 {
            0.5 * (u - &self.0).norm_squared()
        }
        fn gradient(&self, u: &Matrix) -> Matrix {
            u - &self.0
        }
    }

    /// −u₁ on the unit circle.
    struct Linear;
    impl SmoothObjective for Linear {
        fn value(&self, u: &Matrix) -> f64 {
            -u[(0, 0)]
        }
        fn gradient(&self, u: &Matrix) -> Matrix {
            let mut g = Matrix::zeros(u.nrows(), u.ncols());
            g[(0, 0)] = -1.0;
            g
        }
    }

    fn pseudo_random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        Matrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn constant_objective_returns_start() {
        let u0 = StiefelPoint::from_qr(&pseudo_random(5, 2, 1)).unwrap();
        let out = minimize_on_stiefel(&Constant, &u0, 60).unwrap();
        assert_eq!(out.point, u0);
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn distance_to_orthonormal_target() {
        let q = orthonormalize(&pseudo_random(8, 3, 2));
        let u0 = StiefelPoint::from_qr(&pseudo_random(8, 3, 3)).unwrap();
        let obj = Distance(q.clone());
        let out = minimize_on_stiefel(&obj, &u0, 500).unwrap();
        let u = out.point.matrix();
        assert!(orthonormality_error(u) <= 1e-8);
        assert!(out.final_value <= out.initial_value);
        assert!(out.final_value >= 0.0);
        assert!(out.final_value < 1e-10, "final {}", out.final_value);
        assert!((u - q).norm() < 1e-5);
    }

    #[test]
    fn circle_minimizer() {
        let u0 = StiefelPoint::new(Matrix::from_column_slice(2, 1, &[0.6, -0.8])).unwrap();
        let out = minimize_on_stiefel(&Linear, &u0, 200).unwrap();
        let u = out.point.matrix();
        assert!((u[(0, 0)] - 1.0).abs() < 1e-8, "{u}");
        assert!(u[(1, 0)].abs() < 1e-4);
    }

    #[test]
    fn low_rank_and_dense_cayley_agree() {
        let u = orthonormalize(&pseudo_random(9, 2, 4));
        let g = pseudo_random(9, 2, 5);
        for tau in [1e-3, 0.1, 2.0] {
            let a = cayley_low_rank(&u, &g, tau);
            let b = cayley_dense(&u, &g, tau);
            assert!((a - &b).norm() < 1e-12);
            assert!(orthonormality_error(&b) < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_points() {
        assert!(StiefelPoint::new(Matrix::from_element(3, 1, 1.0)).is_err());
        assert!(StiefelPoint::new(Matrix::identity(2, 3)).is_err());
        let u0 = StiefelPoint::from_qr(&pseudo_random(4, 2, 6)).unwrap();
        assert!(minimize_on_stiefel(&Constant, &u0, 0).is_err());
    }

    struct NanObjective;
    impl SmoothObjective for NanObjective {
        fn value(&self, _: &Matrix) -> f64 {
            f64::NAN
        }
        fn gradient(&self, u: &Matrix) -> Matrix {
            Matrix::zeros(u.nrows(), u.ncols())
        }
    }

    #[test]
    fn non_finite_objective_is_an_error() {
        let u0 = StiefelPoint::from_qr(&pseudo_random(4, 2, 7)).unwrap();
        assert!(matches!(minimize_on_stiefel(&NanObjective, &u0, 5), Err(Error::NonFinite(_))));
    }

    #[test]
    fn zero_residual_gradient_vanishes() {
        let core = Tensor3::from_fn([2, 2, 2], |i, j, k| (i + 2 * j + 3 * k) as f64 + 1.0).unwrap();
        let us: Vec<Matrix> = (0..3).map(|s| orthonormalize(&pseudo_random(4, 2, 10 + s))).collect();
        let f = [&us[0], &us[1], &us[2]];
        let target = tucker_reconstruct(&core, f).unwrap();
        for mode in Mode::ALL {
            assert!(grad_fbeta_u(&core, f, &target, 3.0, mode).unwrap().norm() < 1e-10);
            let noisy = target.map(|v| v + 0.1);
            assert_eq!(grad_fbeta_u(&core, f, &noisy, 0.0, mode).unwrap().norm(), 0.0);
        }
    }

    #[test]
    fn coupling_vanishes_when_split_is_exact() {
        let core = Tensor3::from_fn([2, 2, 2], |i, j, k| (i * j + k) as f64 - 0.3).unwrap();
        let us: Vec<Matrix> = (0..3).map(|s| orthonormalize(&pseudo_random(5, 2, 20 + s))).collect();
        let f = [&us[0], &us[1], &us[2]];
        let target = Tensor3::from_fn([5, 5, 5], |i, j, k| ((i + j * k) % 4) as f64).unwrap();
        for mode in Mode::ALL {
            let u = f[mode.axis()];
            let base = grad_fbeta_u(&core, f, &target, 2.0, mode).unwrap();
            let zero = Matrix::zeros(4, 2);
            let y = toeplitz_diff(u).unwrap();
            let any = pseudo_random(4, 2, 30);
            let c1 = DifferenceCoupling { split: &any, multiplier: &zero, penalty: 0.0 };
            let c2 = DifferenceCoupling { split: &y, multiplier: &zero, penalty: 7.0 };
            for c in [c1, c2] {
                let full = grad_u_subproblem(&core, f, &target, 2.0, mode, c).unwrap();
                assert!((full - &base).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn precomputed_subproblem_matches_direct_formulas() {
        let core = Tensor3::from_fn([2, 3, 2], |i, j, k| ((i * 5 + j * 3 + k * 7) % 9) as f64 - 4.0).unwrap();
        let target = Tensor3::from_fn([6, 5, 4], |i, j, k| ((i * 3 + j * 5 + k * 2) % 7) as f64 * 0.5).unwrap();
        let u1 = pseudo_random(6, 2, 40);
        let u2 = pseudo_random(5, 3, 41);
        let u3 = pseudo_random(4, 2, 42);
        let f = [&u1, &u2, &u3];
        for mode in Mode::ALL {
            let d = target.dim(mode);
            let r = core.dim(mode);
            let y = pseudo_random(d - 1, r, 50);
            let v = pseudo_random(d - 1, r, 51);
            let c = DifferenceCoupling { split: &y, multiplier: &v, penalty: 3.0 };
            let sub = FactorSubproblem::new(&core, f, &target, 1.7, mode, c).unwrap();
            let u = f[mode.axis()];
            let direct_value = u_subproblem_value(&core, f, &target, 1.7, mode, c).unwrap();
            let direct_grad = grad_u_subproblem(&core, f, &target, 1.7, mode, c).unwrap();
            assert!((sub.full_value(u) - direct_value).abs() <= 1e-9 * direct_value.abs().max(1.0));
            assert!((sub.gradient(u) - &direct_grad).norm() <= 1e-9 * direct_grad.norm().max(1.0));
        }
    }
}

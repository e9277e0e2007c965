//! Tucker factors and truncated higher-order SVD.

use nalgebra::linalg::SVD;

use crate::error::{Error, Result};
use crate::tensor::{project_onto_factors, tucker_reconstruct, Matrix, Mode, Tensor3};

/// Core tensor plus one factor matrix per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct TuckerFactors {
    pub core: Tensor3,
    pub factors: [Matrix; 3],
}

impl TuckerFactors {
    pub fn ranks(&self) -> [usize; 3] {
        self.core.dims()
    }

    pub fn factor_refs(&self) -> [&Matrix; 3] {
        [&self.factors[0], &self.factors[1], &self.factors[2]]
    }

    pub fn reconstruct(&self) -> Result<Tensor3> {
        tucker_reconstruct(&self.core, self.factor_refs())
    }
}

pub fn check_ranks(dims: [usize; 3], ranks: [usize; 3]) -> Result<()> {
    for mode in Mode::ALL {
        let (rank, dim) = (ranks[mode.axis()], dims[mode.axis()]);
        if rank == 0 {
            return Err(Error::arg(format!("rank in mode {} must be positive", mode.number())));
        }
        if rank > dim {
            return Err(Error::RankExceedsDimension { mode: mode.number(), rank, dim });
        }
    }
    Ok(())
}

/// Left singular vectors and singular values, sorted by decreasing value.
pub fn sorted_left_singular(m: &Matrix) -> (Matrix, Vec<f64>) {
    let svd = SVD::new(m.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let values = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut sorted = Matrix::zeros(u.nrows(), order.len());
    for (dst, &src) in order.iter().enumerate() {
        sorted.set_column(dst, &u.column(src));
    }
    (sorted, values)
}

/// Top-`r` left singular vectors of `m`, completed to an orthonormal set
/// when `m` has fewer than `r` singular values.
pub fn leading_left_singular_vectors(m: &Matrix, r: usize) -> Matrix {
    let (u, _) = sorted_left_singular(m);
    if u.ncols() >= r {
        return u.columns(0, r).into_owned();
    }
    // A wide identity block completes the basis before orthonormalizing.
    let mut padded = Matrix::zeros(m.nrows(), r);
    padded.columns_mut(0, u.ncols()).copy_from(&u);
    for c in u.ncols()..r {
        padded[(c, c)] = 1.0;
    }
    crate::stiefel::orthonormalize(&padded)
}

/// Squared singular values of the mode-`n` unfolding, decreasing.
pub fn mode_spectrum(x: &Tensor3, mode: Mode) -> Vec<f64> {
    let (_, s) = sorted_left_singular(&x.unfold(mode));
    s.into_iter().map(|v| v * v).collect()
}

/// Truncated HOSVD: factors from the leading left singular vectors of each
/// unfolding, core by projection.
pub fn hosvd(x: &Tensor3, ranks: [usize; 3]) -> Result<TuckerFactors> {
    check_ranks(x.dims(), ranks)?;
    let factors = Mode::ALL.map(|mode| leading_left_singular_vectors(&x.unfold(mode), ranks[mode.axis()]));
    let core = project_onto_factors(x, [&factors[0], &factors[1], &factors[2]])?;
    Ok(TuckerFactors { core, factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stiefel::orthonormality_error;

    #[test]
    fn hosvd_reproduces_exact_rank_tensor() {
        let core = Tensor3::from_fn([2, 2, 1], |i, j, _| 1.0 + i as f64 * 2.0 - j as f64 * 0.7).unwrap();
        let u1 = Matrix::from_fn(5, 2, |i, j| ((i + 1) * (j + 2)) as f64 % 3.0 + 0.1 * i as f64);
        let u2 = Matrix::from_fn(4, 2, |i, j| (i as f64 - j as f64).powi(2) + 0.3);
        let u3 = Matrix::from_fn(3, 1, |i, _| 1.0 + i as f64);
        let x = tucker_reconstruct(&core, [&u1, &u2, &u3]).unwrap();
        let t = hosvd(&x, [2, 2, 1]).unwrap();
        let err = t.reconstruct().unwrap().sub(&x).unwrap().frobenius_norm();
        assert!(err <= 1e-10 * x.frobenius_norm());
        for f in &t.factors {
            assert!(orthonormality_error(f) < 1e-12);
        }
    }

    #[test]
    fn rank_checks() {
        let x = Tensor3::zeros([3, 3, 3]).unwrap();
        assert!(matches!(hosvd(&x, [4, 1, 1]), Err(Error::RankExceedsDimension { mode: 1, .. })));
        assert!(hosvd(&x, [0, 1, 1]).is_err());
        // Zero tensor still yields orthonormal factors.
        let t = hosvd(&x, [2, 2, 2]).unwrap();
        assert!(t.factors.iter().all(|f| orthonormality_error(f) < 1e-12));
        assert_eq!(t.core.frobenius_norm(), 0.0);
    }

    #[test]
    fn basis_completion_when_unfolding_is_short() {
        // A 4×1 unfolding has a single singular value.
        let m = Matrix::from_column_slice(4, 1, &[1.0, 2.0, 0.0, -1.0]);
        let u = leading_left_singular_vectors(&m, 3);
        assert_eq!(u.shape(), (4, 3));
        assert!(orthonormality_error(&u) < 1e-12);
    }
}

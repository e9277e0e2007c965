//! Real-data preparation: Tucker-rank selection, Tucker smoothing, and the
//! invertible shift-and-scale transform applied before solving.

use crate::error::{Error, Result};
use crate::tensor::{Mode, ObservationMask, Tensor3};
use crate::tucker::{hosvd, mode_spectrum};

/// Energy share `θ ∈ (0, 1]` that the kept singular values must reach.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankCriterion(f64);

impl RankCriterion {
    pub fn new(theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::arg(format!("θ must lie in (0, 1], got {theta}")));
        }
        Ok(Self(theta))
    }

    pub fn theta(self) -> f64 {
        self.0
    }
}

impl Default for RankCriterion {
    fn default() -> Self {
        Self(0.95)
    }
}

/// Smallest `l` whose leading `l` entries of a decreasing spectrum reach
/// `θ` of its total.
pub fn rank_for_share(spectrum: &[f64], theta: f64) -> usize {
    let total: f64 = spectrum.iter().sum();
    let target = theta * total;
    let mut acc = 0.0;
    for (l, v) in spectrum.iter().enumerate() {
        acc += v;
        if acc >= target {
            return l + 1;
        }
    }
    spectrum.len()
}

/// Per-mode rank from the squared singular values of each unfolding.
pub fn select_rank(x: &Tensor3, criterion: RankCriterion) -> Result<[usize; 3]> {
    if x.frobenius_norm() == 0.0 {
        return Err(Error::arg("rank selection needs a nonzero tensor"));
    }
    Ok(Mode::ALL.map(|mode| rank_for_share(&mode_spectrum(x, mode), criterion.theta())))
}

/// Truncated HOSVD reconstruction at `ranks`.
pub fn tucker_smooth(x: &Tensor3, ranks: [usize; 3]) -> Result<Tensor3> {
    hosvd(x, ranks)?.reconstruct()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleTransform {
    pub shift: f64,
    pub core_scale: f64,
    pub ranks: [usize; 3],
}

impl Default for ScaleTransform {
    fn default() -> Self {
        Self { shift: 20.0, core_scale: 0.14, ranks: [2, 5, 6] }
    }
}

impl ScaleTransform {
    pub fn validate(&self) -> Result<()> {
        if self.core_scale == 0.0 || !self.core_scale.is_finite() || !self.shift.is_finite() {
            return Err(Error::arg("core_scale must be finite and nonzero, shift finite"));
        }
        Ok(())
    }

    /// HOSVD of `x − shift`, core scaled by `core_scale`, reconstructed.
    pub fn transform(&self, x: &Tensor3) -> Result<Tensor3> {
        self.validate()?;
        let shifted = x.map(|v| v - self.shift);
        scaled_core(&shifted, self.ranks, self.core_scale)
    }

    /// HOSVD of `x`, core scaled by `1/core_scale`, reconstructed, then shifted back.
    pub fn revert(&self, x: &Tensor3) -> Result<Tensor3> {
        self.validate()?;
        let y = scaled_core(x, self.ranks, 1.0 / self.core_scale)?;
        Ok(y.map(|v| v + self.shift))
    }
}

fn scaled_core(x: &Tensor3, ranks: [usize; 3], factor: f64) -> Result<Tensor3> {
    let mut t = hosvd(x, ranks)?;
    t.core = t.core.scale(factor);
    t.reconstruct()
}

/// Treats exact zeros as missing: returns the data and its observation mask.
pub fn ingest_zero_missing(x: Tensor3) -> Result<(Tensor3, ObservationMask)> {
    let mask = ObservationMask::from_nonzero(&x);
    if mask.is_empty() {
        return Err(Error::EmptyObservation);
    }
    Ok((x, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{tucker_reconstruct, Matrix};

    fn exact(ranks: [usize; 3], dims: [usize; 3]) -> Tensor3 {
        let core = Tensor3::from_fn(ranks, |i, j, k| 1.0 + ((i * 7 + j * 3 + k * 5 + 1) as f64 * 0.9).sin()).unwrap();
        let f = |d: usize, r: usize, seed: usize| {
            Matrix::from_fn(d, r, |i, j| (((i + 1) * (j + seed + 2)) as f64 * 0.37).sin())
        };
        let (a, b, c) = (f(dims[0], ranks[0], 1), f(dims[1], ranks[1], 2), f(dims[2], ranks[2], 3));
        tucker_reconstruct(&core, [&a, &b, &c]).unwrap()
    }

    #[test]
    fn exact_rank_is_recovered() {
        let x = exact([2, 3, 2], [6, 7, 5]);
        let crit = RankCriterion::new(1.0 - 1e-12).unwrap();
        assert_eq!(select_rank(&x, crit).unwrap(), [2, 3, 2]);
        assert_eq!(select_rank(&x, RankCriterion::new(1e-9).unwrap()).unwrap(), [1, 1, 1]);
        assert!(select_rank(&Tensor3::zeros([2, 2, 2]).unwrap(), crit).is_err());
        assert!(RankCriterion::new(0.0).is_err());
        assert!(RankCriterion::new(1.5).is_err());
    }

    #[test]
    fn smoothing_is_exact_on_rank_exact_input() {
        let x = exact([2, 2, 2], [5, 4, 6]);
        let y = tucker_smooth(&x, [2, 2, 2]).unwrap();
        assert!(y.sub(&x).unwrap().frobenius_norm() <= 1e-8 * x.frobenius_norm());
        let full = tucker_smooth(&x, [5, 4, 6]).unwrap();
        assert!(full.sub(&x).unwrap().frobenius_norm() <= 1e-10 * x.frobenius_norm());
    }

    #[test]
    fn transform_roundtrip() {
        let base = exact([2, 3, 2], [6, 7, 5]);
        let t = ScaleTransform { shift: 20.0, core_scale: 0.14, ranks: [2, 3, 2] };
        let x = base.map(|v| v + t.shift);
        let back = t.revert(&t.transform(&x).unwrap()).unwrap();
        assert!(back.sub(&x).unwrap().frobenius_norm() <= 1e-8 * x.frobenius_norm());
        assert!(ScaleTransform { core_scale: 0.0, ..t }.transform(&x).is_err());
    }

    #[test]
    fn zeros_mean_missing() {
        let x = Tensor3::from_vec([2, 2, 1], vec![0.0, 1.0, 2.0, 0.0]).unwrap();
        let (_, mask) = ingest_zero_missing(x).unwrap();
        assert_eq!(mask.count(), 2);
        assert!(ingest_zero_missing(Tensor3::zeros([2, 1, 1]).unwrap()).is_err());
    }
}

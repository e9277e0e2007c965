//! Closed-form proximal maps of the ℓ0 and ℓ2,0 penalties.
//!
//! Both maps choose, per entry or per row, the cheaper of two candidates:
//! keep the input or set it to zero. Ties go to zero.

use crate::error::{Error, Result};
use crate::tensor::{Entries, Matrix};

/// Nonnegative penalty weight `t` of a proximal map.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct ProxWeight(f64);

impl ProxWeight {
    pub fn new(t: f64) -> Result<Self> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::arg(format!("proximal weight must be finite and nonnegative, got {t}")));
        }
        Ok(Self(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Squared magnitude at or below which the zero candidate wins.
    pub fn cutoff(self) -> f64 {
        2.0 * self.0
    }
}

/// `argmin_z t‖z‖₀ + ½‖z − x‖²_F`, applied in place.
pub fn hard_threshold_l0_in_place<E: Entries + ?Sized>(x: &mut E, t: ProxWeight) {
    let cutoff = t.cutoff();
    for v in x.entries_mut() {
        if *v * *v <= cutoff {
            *v = 0.0;
        }
    }
}

pub fn hard_threshold_l0<E: Entries + Clone>(x: &E, t: ProxWeight) -> E {
    let mut out = x.clone();
    hard_threshold_l0_in_place(&mut out, t);
    out
}

/// `argmin_Y t‖Y‖₂,₀ + ½‖Y − M‖²_F`: rows with `‖row‖² ≤ 2t` are zeroed.
pub fn group_hard_threshold_l20(m: &Matrix, t: ProxWeight) -> Matrix {
    let cutoff = t.cutoff();
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        if row.norm_squared() <= cutoff {
            row.fill(0.0);
        }
    }
    out
}

//! Synthetic low-rank plus block-sparse tensors with a uniform missing mask.
//!
//! Random numbers come from ChaCha8 seeded through `seed_from_u64`, which is
//! platform independent. Draws happen in a fixed order: core entries (storage
//! order), factors 1..3 (segment rows, distinctive row indices, distinctive
//! rows), anomaly blocks (corner, then values in storage order within the
//! block), and finally one uniform per tensor entry for the mask.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{l20_count, toeplitz_diff, tucker_reconstruct, Matrix, Mode, ObservationMask, Tensor3};
use crate::tucker::check_ranks;

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub dims: [usize; 3],
    pub core_ranks: [usize; 3],
    pub core_low: f64,
    pub core_high: f64,
    pub distinctive_rows: usize,
    pub anomaly_mean: f64,
    pub anomaly_variance: f64,
    pub block_count: usize,
    /// Block extent in the mode-1 unfolding: (rows, columns).
    pub block_shape: (usize, usize),
    pub missing_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            dims: [50, 50, 50],
            core_ranks: [3, 3, 3],
            core_low: 0.0,
            core_high: 100.0,
            distinctive_rows: 2,
            anomaly_mean: 4.0,
            anomaly_variance: 0.01,
            block_count: 50,
            block_shape: (2, 125),
            missing_rate: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn block_area(&self) -> usize {
        self.block_shape.0 * self.block_shape.1
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::arg(format!("dims must be at least 2, got {:?}", self.dims)));
        }
        check_ranks(self.dims, self.core_ranks)?;
        if !(self.core_low <= self.core_high) || !self.core_low.is_finite() || !self.core_high.is_finite() {
            return Err(Error::arg("core range must satisfy low ≤ high"));
        }
        if self.dims.iter().any(|&d| self.distinctive_rows > d) {
            return Err(Error::arg("more distinctive rows than factor rows"));
        }
        if !(self.anomaly_variance >= 0.0) || !self.anomaly_mean.is_finite() {
            return Err(Error::arg("anomaly distribution parameters are invalid"));
        }
        let (rows, cols) = self.block_shape;
        let total: usize = self.dims.iter().product();
        if self.block_count > 0 {
            if rows == 0 || cols == 0 {
                return Err(Error::arg("block shape must be positive"));
            }
            if rows > self.dims[0] || cols > self.dims[1] * self.dims[2] {
                return Err(Error::arg(format!(
                    "block {rows}×{cols} does not fit a {}×{} unfolding",
                    self.dims[0],
                    self.dims[1] * self.dims[2]
                )));
            }
        }
        if self.block_count * self.block_area() > total {
            return Err(Error::arg("anomaly blocks cover more than the whole tensor"));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::arg(format!("missing rate must lie in [0, 1), got {}", self.missing_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticInstance {
    pub full: Tensor3,
    pub lowrank: Tensor3,
    pub anomaly: Tensor3,
    pub observed: ObservationMask,
    pub anomaly_truth: ObservationMask,
    pub core: Tensor3,
    pub factors: [Matrix; 3],
    /// Top-left corners (row, column) of the blocks in the mode-1 unfolding.
    pub blocks: Vec<(usize, usize)>,
}

/// Piecewise-constant factor: `rank` contiguous row segments share one random
/// row each, `distinctive` random rows get fresh values, columns are then
/// scaled to unit norm.
pub fn piecewise_factor(rows: usize, rank: usize, distinctive: usize, rng: &mut Rng64) -> Matrix {
    let mut u = Matrix::zeros(rows, rank);
    let base = rows / rank;
    let extra = rows % rank;
    let mut start = 0;
    for seg in 0..rank {
        let len = base + usize::from(seg < extra);
        let values: Vec<f64> = (0..rank).map(|_| rng.random::<f64>()).collect();
        for r in start..start + len {
            for (c, v) in values.iter().enumerate() {
                u[(r, c)] = *v;
            }
        }
        start += len;
    }
    let mut picks = sample(rng, rows, distinctive).into_vec();
    picks.sort_unstable();
    for r in picks {
        for c in 0..rank {
            u[(r, c)] = rng.random::<f64>();
        }
    }
    for mut col in u.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    u
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacedBlocks {
    pub values: Tensor3,
    pub support: ObservationMask,
    pub corners: Vec<(usize, usize)>,
}

/// Places `count` disjoint `rows × cols` blocks in the mode-1 unfolding of a
/// tensor with `dims` and fills them with normal draws.
pub fn place_blocks(
    dims: [usize; 3],
    count: usize,
    (rows, cols): (usize, usize),
    mean: f64,
    variance: f64,
    rng: &mut Rng64,
) -> Result<PlacedBlocks> {
    let mut anomaly = Tensor3::zeros(dims)?;
    let unfold_cols = dims[1] * dims[2];
    let mut taken = vec![false; anomaly.len()];
    let mut corners = Vec::with_capacity(count);
    if count == 0 {
        let support = ObservationMask::empty(dims)?;
        return Ok(PlacedBlocks { values: anomaly, support, corners });
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|e| Error::arg(e.to_string()))?;
    let attempts = 10 * count;
    let mut tries = 0;
    while corners.len() < count {
        if tries == attempts {
            return Err(Error::BlockPlacement { wanted: count, attempts });
        }
        tries += 1;
        let top = rng.random_range(0..=dims[0] - rows);
        let left = rng.random_range(0..=unfold_cols - cols);
        let overlaps = (left..left + cols).any(|c| (top..top + rows).any(|r| taken[r + dims[0] * c]));
        if overlaps {
            continue;
        }
        for c in left..left + cols {
            for r in top..top + rows {
                let idx = r + dims[0] * c;
                taken[idx] = true;
                anomaly.as_mut_slice()[idx] = normal.sample(rng);
            }
        }
        corners.push((top, left));
    }
    let support = ObservationMask::from_flags(dims, taken)?;
    Ok(PlacedBlocks { values: anomaly, support, corners })
}

/// Each entry is missing independently with probability `missing_rate`.
pub fn uniform_mask(dims: [usize; 3], missing_rate: f64, rng: &mut Rng64) -> Result<ObservationMask> {
    let n: usize = dims.iter().product();
    let flags = (0..n).map(|_| rng.random::<f64>() >= missing_rate).collect();
    ObservationMask::from_flags(dims, flags)
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let core = Tensor3::from_fn(spec.core_ranks, |_, _, _| rng.random_range(spec.core_low..=spec.core_high))?;
    let factors = Mode::ALL
        .map(|m| piecewise_factor(spec.dims[m.axis()], spec.core_ranks[m.axis()], spec.distinctive_rows, &mut rng));
    let lowrank = tucker_reconstruct(&core, [&factors[0], &factors[1], &factors[2]])?;
    let placed = place_blocks(
        spec.dims,
        spec.block_count,
        spec.block_shape,
        spec.anomaly_mean,
        spec.anomaly_variance,
        &mut rng,
    )?;
    let full = lowrank.add(&placed.values)?;
    let observed = uniform_mask(spec.dims, spec.missing_rate, &mut rng)?;
    Ok(SyntheticInstance {
        full,
        lowrank,
        anomaly: placed.values,
        observed,
        anomaly_truth: placed.support,
        core,
        factors,
        blocks: placed.corners,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsityReport {
    /// `‖Tᵢ·Uᵢ‖₂,₀` per factor.
    pub difference_rows: [usize; 3],
    pub anomaly_entries: usize,
    pub anomaly_fraction: f64,
    pub observed_fraction: f64,
}

pub fn sparsity_report(instance: &SyntheticInstance) -> Result<SparsityReport> {
    let mut difference_rows = [0; 3];
    for (i, u) in instance.factors.iter().enumerate() {
        difference_rows[i] = l20_count(&toeplitz_diff(u)?);
    }
    let anomaly_entries = instance.anomaly_truth.count();
    Ok(SparsityReport {
        difference_rows,
        anomaly_entries,
        anomaly_fraction: anomaly_entries as f64 / instance.full.len() as f64,
        observed_fraction: instance.observed.fraction(),
    })
}

//! ADMM for the sparse low-rank Tucker model
//!
//! ```text
//! min  β/2‖⟦G;U1,U2,U3⟧ − L‖² + Σ λᵢ‖Yᵢ‖₂,₀ + μ1‖R‖₀ + μ2‖Z‖₀
//! s.t. Yᵢ = Tᵢ·Uᵢ,  Z = T_l·R_[1]·T_rᵀ,  UᵢᵀUᵢ = I,  X = L + R,  (X)_Ω = (Y)_Ω
//! ```
//!
//! One outer iteration updates the blocks in the fixed order
//! X, G, U1, U2, U3, R, L, Y1..Y3, Z, then the multipliers V1..V3, W, P,
//! and finally grows the penalties α, γ, s by a constant factor up to a cap.

use crate::error::{Error, Result};
use crate::prox::{group_hard_threshold_l20, hard_threshold_l0, hard_threshold_l0_in_place, ProxWeight};
use crate::stiefel::{CurvilinearSearch, DifferenceCoupling, FactorSubproblem, StiefelPoint};
use crate::tensor::{
    mixed_difference, mixed_difference_adjoint, project_observed, toeplitz_diff, tucker_reconstruct, Matrix, Mode,
    ObservationMask, Tensor3,
};
use crate::tucker::{check_ranks, hosvd};

/// Reductions allowed in the anomaly-update line search before giving up.
pub const MAX_PROX_REDUCTIONS: usize = 50;

/// All model weights, penalties and iteration controls.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Tucker fit weight.
    pub beta: f64,
    /// Row-sparsity weights on the factor differences.
    pub lambda: [f64; 3],
    /// Entrywise sparsity weight on the anomaly tensor.
    pub mu1: f64,
    /// Sparsity weight on the mixed difference of the anomaly unfolding.
    pub mu2: f64,
    /// Initial penalties for `Yᵢ = Tᵢ·Uᵢ`.
    pub alpha: [f64; 3],
    /// Initial penalty for `Z = T_l·R_[1]·T_rᵀ`.
    pub gamma: f64,
    /// Initial penalty for `X = L + R`.
    pub s: f64,
    /// Per-iteration penalty growth factor.
    pub growth: f64,
    pub penalty_cap: f64,
    /// Relative-change stopping tolerance.
    pub tolerance: f64,
    pub ranks: [usize; 3],
    pub max_outer: usize,
    /// Curvilinear-search iterations per factor update.
    pub max_inner: usize,
    /// Initial proximal-gradient step for the anomaly update; `None` means `1/s`.
    pub prox_step0: Option<f64>,
    /// Step reduction factor of the anomaly line search, in (0, 1).
    pub prox_shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 450.0,
            lambda: [1.2; 3],
            mu1: 5.0,
            mu2: 20.0,
            alpha: [100.0; 3],
            gamma: 10.0,
            s: 0.1,
            growth: 1.15,
            penalty_cap: 1e8,
            tolerance: 1e-4,
            ranks: [3, 3, 3],
            max_outer: 200_000,
            max_inner: 60,
            prox_step0: None,
            prox_shrink: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.beta, self.mu1, self.mu2, self.lambda[0], self.lambda[1], self.lambda[2]];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::arg("weights β, λᵢ, μ1, μ2 must be finite and nonnegative"));
        }
        let penalties = [self.alpha[0], self.alpha[1], self.alpha[2], self.gamma, self.s];
        if penalties.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::arg("penalties αᵢ, γ, s must be finite and positive"));
        }
        if !(self.growth >= 1.0) || !self.growth.is_finite() {
            return Err(Error::arg("growth must be at least 1"));
        }
        if !(self.penalty_cap > 0.0) {
            return Err(Error::arg("penalty cap must be positive"));
        }
        if !(self.prox_shrink > 0.0 && self.prox_shrink < 1.0) {
            return Err(Error::arg("prox_shrink must lie in (0, 1)"));
        }
        if let Some(step) = self.prox_step0 {
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::arg("prox_step0 must be positive"));
            }
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::arg("tolerance must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::arg("iteration limits must be at least 1"));
        }
        Ok(())
    }
}

/// Current values of the growing penalties.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Penalties {
    pub alpha: [f64; 3],
    pub gamma: f64,
    pub s: f64,
}

impl Penalties {
    fn grow(&mut self, factor: f64, cap: f64) {
        for a in &mut self.alpha {
            *a = (*a * factor).min(cap);
        }
        self.gamma = (self.gamma * factor).min(cap);
        self.s = (self.s * factor).min(cap);
    }
}

/// Feasibility gaps of the three splitting constraints.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    /// `‖Yᵢ − Tᵢ·Uᵢ‖_F`.
    pub split: [f64; 3],
    /// `‖Z − T_l·R_[1]·T_rᵀ‖_F`.
    pub difference: f64,
    /// `‖X − L − R‖_F`.
    pub coupling: f64,
}

/// Relative changes of X, G, L, R between consecutive iterations.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Changes {
    pub x: f64,
    pub core: f64,
    pub lowrank: f64,
    pub anomaly: f64,
}

impl Changes {
    pub fn max(&self) -> f64 {
        self.x.max(self.core).max(self.lowrank).max(self.anomaly)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub residuals: Residuals,
    pub changes: Changes,
    pub anomaly_support: usize,
}

/// Primal variables, multipliers and current penalties.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: Tensor3,
    pub core: Tensor3,
    pub factors: [Matrix; 3],
    pub anomaly: Tensor3,
    pub lowrank: Tensor3,
    /// `Yᵢ`, the split copies of `Tᵢ·Uᵢ`.
    pub splits: [Matrix; 3],
    /// `Z`, the split copy of the anomaly mixed difference.
    pub difference: Matrix,
    /// `Vᵢ`.
    pub split_multipliers: [Matrix; 3],
    /// `W`.
    pub difference_multiplier: Matrix,
    /// `P`.
    pub coupling_multiplier: Tensor3,
    pub penalties: Penalties,
    /// Last accepted step of the anomaly line search.
    pub prox_step: f64,
    pub iter: usize,
}

fn finite_or(t: &Tensor3, what: &str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Relative Frobenius change, absolute when the previous block is zero.
pub fn relative_change(prev: &Tensor3, cur: &Tensor3) -> f64 {
    let diff = prev.as_slice().iter().zip(cur.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base = prev.frobenius_norm();
    if base > 0.0 {
        diff / base
    } else {
        diff
    }
}

/// The blocks compared by the stopping rule.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub x: Tensor3,
    pub core: Tensor3,
    pub lowrank: Tensor3,
    pub anomaly: Tensor3,
}

impl Snapshot {
    pub fn of(state: &SolverState) -> Self {
        Self {
            x: state.x.clone(),
            core: state.core.clone(),
            lowrank: state.lowrank.clone(),
            anomaly: state.anomaly.clone(),
        }
    }

    pub fn changes_to(&self, cur: &SolverState) -> Changes {
        Changes {
            x: relative_change(&self.x, &cur.x),
            core: relative_change(&self.core, &cur.core),
            lowrank: relative_change(&self.lowrank, &cur.lowrank),
            anomaly: relative_change(&self.anomaly, &cur.anomaly),
        }
    }
}

/// True when all four relative changes are below `tolerance`.
pub fn check_convergence(prev: &Snapshot, cur: &SolverState, tolerance: f64) -> bool {
    prev.changes_to(cur).max() < tolerance
}

impl SolverState {
    /// HOSVD start from the zero-filled observations.
    pub fn init(observed: &Tensor3, mask: &ObservationMask, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let dims = observed.dims();
        if mask.dims() != dims {
            return Err(Error::dims(format!("data {dims:?} vs mask {:?}", mask.dims())));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::dims(format!("every dimension must be at least 2, got {dims:?}")));
        }
        check_ranks(dims, cfg.ranks)?;
        if mask.is_empty() {
            return Err(Error::EmptyObservation);
        }
        finite_or(observed, "observed data")?;

        let x = project_observed(observed, mask)?;
        let lowrank = x.clone();
        let tucker = hosvd(&lowrank, cfg.ranks)?;
        let splits = tucker.factors.clone().map(|u| toeplitz_diff(&u).expect("dims ≥ 2"));
        let split_multipliers = splits.clone().map(|y| Matrix::zeros(y.nrows(), y.ncols()));
        let zero = Tensor3::zeros(dims)?;
        let difference = mixed_difference(&zero)?;
        Ok(Self {
            x,
            core: tucker.core,
            factors: tucker.factors,
            anomaly: zero.clone(),
            lowrank,
            splits,
            difference_multiplier: difference.clone(),
            difference,
            split_multipliers,
            coupling_multiplier: zero,
            penalties: Penalties { alpha: cfg.alpha, gamma: cfg.gamma, s: cfg.s },
            prox_step: cfg.prox_step0.unwrap_or(1.0 / cfg.s),
            iter: 0,
        })
    }

    pub fn factor_refs(&self) -> [&Matrix; 3] {
        [&self.factors[0], &self.factors[1], &self.factors[2]]
    }

    pub fn reconstruction(&self) -> Result<Tensor3> {
        tucker_reconstruct(&self.core, self.factor_refs())
    }

    /// `X = (Y)_Ω + (L + R − P/s)_Ω̄`.
    pub fn update_x(&mut self, observed: &Tensor3, mask: &ObservationMask) -> Result<()> {
        self.x.same_dims(observed)?;
        if mask.dims() != observed.dims() {
            return Err(Error::dims("mask does not match data"));
        }
        let inv_s = 1.0 / self.penalties.s;
        let flags = mask.flags();
        let (l, r, p) = (self.lowrank.as_slice(), self.anomaly.as_slice(), self.coupling_multiplier.as_slice());
        for (idx, x) in self.x.as_mut_slice().iter_mut().enumerate() {
            *x = if flags[idx] { observed.as_slice()[idx] } else { l[idx] + r[idx] - inv_s * p[idx] };
        }
        Ok(())
    }

    /// `G = L ×1 U1ᵀ ×2 U2ᵀ ×3 U3ᵀ`.
    pub fn update_core(&mut self) -> Result<()> {
        self.core = crate::tensor::project_onto_factors(&self.lowrank, self.factor_refs())?;
        Ok(())
    }

    /// The factor subproblem of `mode` at the current state.
    pub fn factor_subproblem(&self, cfg: &SolverConfig, mode: Mode) -> Result<FactorSubproblem> {
        let i = mode.axis();
        let coupling = DifferenceCoupling {
            split: &self.splits[i],
            multiplier: &self.split_multipliers[i],
            penalty: self.penalties.alpha[i],
        };
        FactorSubproblem::new(&self.core, self.factor_refs(), &self.lowrank, cfg.beta, mode, coupling)
    }

    /// Gauss–Seidel sweep over U1, U2, U3, each by curvilinear search.
    pub fn update_factors(&mut self, cfg: &SolverConfig) -> Result<()> {
        let search = CurvilinearSearch::new(cfg.max_inner);
        for mode in Mode::ALL {
            let sub = self.factor_subproblem(cfg, mode)?;
            let current = &self.factors[mode.axis()];
            let start = StiefelPoint::new(current.clone()).or_else(|_| StiefelPoint::from_qr(current))?;
            let out = search.minimize(&sub, &start)?;
            self.factors[mode.axis()] = out.point.into_matrix();
        }
        Ok(())
    }

    /// Gradient of the smooth part of the anomaly subproblem,
    /// `−D*(W) − γ·D*(Z − D(R)) − P − s(X − L − R)` with `D` the mixed difference.
    pub fn anomaly_gradient(&self, anomaly: &Tensor3) -> Result<Tensor3> {
        let gamma = self.penalties.gamma;
        let s = self.penalties.s;
        let mut zres = self.difference.clone();
        zres -= mixed_difference(anomaly)?;
        let dual = &self.difference_multiplier + zres * gamma;
        let mut grad = mixed_difference_adjoint(&dual, anomaly.dims())?;
        let (x, l, r, p) =
            (self.x.as_slice(), self.lowrank.as_slice(), anomaly.as_slice(), self.coupling_multiplier.as_slice());
        for (idx, g) in grad.as_mut_slice().iter_mut().enumerate() {
            *g = -*g - p[idx] - s * (x[idx] - l[idx] - r[idx]);
        }
        Ok(grad)
    }

    /// Smooth part of the anomaly subproblem,
    /// `⟨Z − D(R), W⟩ + γ/2‖Z − D(R)‖² + ⟨X − L − R, P⟩ + s/2‖X − L − R‖²`.
    pub fn anomaly_smooth_value(&self, anomaly: &Tensor3) -> Result<f64> {
        let zres = &self.difference - mixed_difference(anomaly)?;
        let mut value = zres.dot(&self.difference_multiplier) + 0.5 * self.penalties.gamma * zres.norm_squared();
        let s = self.penalties.s;
        let (x, l, r, p) =
            (self.x.as_slice(), self.lowrank.as_slice(), anomaly.as_slice(), self.coupling_multiplier.as_slice());
        for idx in 0..x.len() {
            let c = x[idx] - l[idx] - r[idx];
            value += c * p[idx] + 0.5 * s * c * c;
        }
        Ok(value)
    }

    /// One backtracking proximal-gradient step on R, warm-started from the
    /// previous accepted step.
    pub fn update_anomaly(&mut self, cfg: &SolverConfig) -> Result<()> {
        let grad = self.anomaly_gradient(&self.anomaly)?;
        let mut step = self.prox_step;
        for _ in 0..=MAX_PROX_REDUCTIONS {
            let mut cand = self.anomaly.clone();
            cand.axpy(-step, &grad)?;
            hard_threshold_l0_in_place(&mut cand, ProxWeight::new(step * cfg.mu1)?);
            // The smooth part is quadratic, so the sufficient-decrease test
            // f(B) ≤ f(R) + ⟨∇f, B − R⟩ + ‖B − R‖²/(2λ) is exactly
            // γ‖D(B − R)‖² + s‖B − R‖² ≤ ‖B − R‖²/λ.
            let delta = cand.sub(&self.anomaly)?;
            let dd = delta.frobenius_norm().powi(2);
            let curvature = self.penalties.gamma * mixed_difference(&delta)?.norm_squared() + self.penalties.s * dd;
            if curvature <= dd / step {
                finite_or(&cand, "anomaly update")?;
                self.anomaly = cand;
                self.prox_step = step;
                return Ok(());
            }
            step *= cfg.prox_shrink;
        }
        Err(Error::LineSearchExhausted(MAX_PROX_REDUCTIONS))
    }

    /// `L = (β⟦G;U⟧ + s(X − R) + P)/(β + s)`.
    pub fn update_lowrank(&mut self, cfg: &SolverConfig) -> Result<Tensor3> {
        let recon = self.reconstruction()?;
        let s = self.penalties.s;
        let denom = cfg.beta + s;
        let (x, r, p, t) =
            (self.x.as_slice(), self.anomaly.as_slice(), self.coupling_multiplier.as_slice(), recon.as_slice());
        for (idx, l) in self.lowrank.as_mut_slice().iter_mut().enumerate() {
            *l = (cfg.beta * t[idx] + s * (x[idx] - r[idx]) + p[idx]) / denom;
        }
        finite_or(&self.lowrank, "low-rank update")?;
        Ok(recon)
    }

    /// `Yᵢ = prox_{λᵢ/αᵢ‖·‖₂,₀}(Tᵢ·Uᵢ − Vᵢ/αᵢ)`.
    pub fn update_splits(&mut self, cfg: &SolverConfig) -> Result<()> {
        for i in 0..3 {
            let alpha = self.penalties.alpha[i];
            let point = toeplitz_diff(&self.factors[i])? - &self.split_multipliers[i] / alpha;
            self.splits[i] = group_hard_threshold_l20(&point, ProxWeight::new(cfg.lambda[i] / alpha)?);
        }
        Ok(())
    }

    /// `Z = prox_{μ2/γ‖·‖₀}(T_l·R_[1]·T_rᵀ − W/γ)`.
    pub fn update_difference(&mut self, cfg: &SolverConfig) -> Result<()> {
        let gamma = self.penalties.gamma;
        let point = mixed_difference(&self.anomaly)? - &self.difference_multiplier / gamma;
        self.difference = hard_threshold_l0(&point, ProxWeight::new(cfg.mu2 / gamma)?);
        Ok(())
    }

    /// Dual ascent on V1..V3, W and P.
    pub fn update_multipliers(&mut self) -> Result<()> {
        for i in 0..3 {
            let gap = &self.splits[i] - toeplitz_diff(&self.factors[i])?;
            self.split_multipliers[i] += gap * self.penalties.alpha[i];
        }
        let gap = &self.difference - mixed_difference(&self.anomaly)?;
        self.difference_multiplier += gap * self.penalties.gamma;
        let s = self.penalties.s;
        let (x, l, r) = (self.x.as_slice(), self.lowrank.as_slice(), self.anomaly.as_slice());
        for (idx, p) in self.coupling_multiplier.as_mut_slice().iter_mut().enumerate() {
            *p += s * (x[idx] - l[idx] - r[idx]);
        }
        finite_or(&self.coupling_multiplier, "multiplier update")
    }

    pub fn residuals(&self) -> Result<Residuals> {
        let mut split = [0.0; 3];
        for (i, out) in split.iter_mut().enumerate() {
            *out = (&self.splits[i] - toeplitz_diff(&self.factors[i])?).norm();
        }
        let difference = (&self.difference - mixed_difference(&self.anomaly)?).norm();
        let coupling = self.x.sub(&self.lowrank)?.sub(&self.anomaly)?.frobenius_norm();
        Ok(Residuals { split, difference, coupling })
    }

    /// Model objective `β/2‖⟦G;U⟧ − L‖² + Σλᵢ‖Yᵢ‖₂,₀ + μ1‖R‖₀ + μ2‖Z‖₀`.
    pub fn objective(&self, cfg: &SolverConfig, recon: &Tensor3) -> Result<f64> {
        let fit = 0.5 * cfg.beta * recon.sub(&self.lowrank)?.frobenius_norm().powi(2);
        let rows: f64 = (0..3).map(|i| cfg.lambda[i] * crate::tensor::l20_count(&self.splits[i]) as f64).sum();
        Ok(fit
            + rows
            + cfg.mu1 * crate::tensor::l0_count(&self.anomaly) as f64
            + cfg.mu2 * crate::tensor::l0_count(&self.difference) as f64)
    }
}

/// Output of [`solve`].
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub recovered: Tensor3,
    pub lowrank: Tensor3,
    pub anomaly: Tensor3,
    pub core: Tensor3,
    pub factors: [Matrix; 3],
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Residuals,
    pub trace: Vec<TraceRow>,
}

/// Step-by-step driver; [`solve`] runs it to completion.
pub struct Solver<'a> {
    observed: &'a Tensor3,
    mask: &'a ObservationMask,
    cfg: SolverConfig,
    state: SolverState,
    trace: Vec<TraceRow>,
    converged: bool,
}

impl<'a> Solver<'a> {
    pub fn new(observed: &'a Tensor3, mask: &'a ObservationMask, cfg: SolverConfig) -> Result<Self> {
        let state = SolverState::init(observed, mask, &cfg)?;
        Ok(Self { observed, mask, cfg, state, trace: Vec::new(), converged: false })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    /// Mutable access for warm starts and instrumentation.
    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    /// Runs one outer iteration; returns true once the stopping rule fires.
    pub fn step(&mut self) -> Result<bool> {
        let prev = Snapshot::of(&self.state);
        let cfg = &self.cfg;
        let st = &mut self.state;
        st.iter += 1;

        st.update_x(self.observed, self.mask)?;
        st.update_core()?;
        st.update_factors(cfg)?;
        st.update_anomaly(cfg)?;
        let recon = st.update_lowrank(cfg)?;
        st.update_splits(cfg)?;
        st.update_difference(cfg)?;
        st.update_multipliers()?;
        for (t, what) in [(&st.x, "X"), (&st.core, "G"), (&st.lowrank, "L"), (&st.anomaly, "R")] {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("{what} at iteration {}", st.iter)));
            }
        }

        let changes = prev.changes_to(st);
        self.trace.push(TraceRow {
            iter: st.iter,
            objective: st.objective(cfg, &recon)?,
            residuals: st.residuals()?,
            changes,
            anomaly_support: crate::tensor::l0_count(&st.anomaly),
        });
        if st.iter > 1 && changes.max() < cfg.tolerance {
            self.converged = true;
            return Ok(true);
        }
        st.penalties.grow(cfg.growth, cfg.penalty_cap);
        Ok(false)
    }

    pub fn run(mut self) -> Result<SolveResult> {
        while self.state.iter < self.cfg.max_outer {
            if self.step()? {
                break;
            }
        }
        self.finish()
    }

    pub fn finish(self) -> Result<SolveResult> {
        let residuals = self.state.residuals()?;
        let st = self.state;
        Ok(SolveResult {
            recovered: st.x,
            lowrank: st.lowrank,
            anomaly: st.anomaly,
            core: st.core,
            factors: st.factors,
            iterations: st.iter,
            converged: self.converged,
            residuals,
            trace: self.trace,
        })
    }
}

pub fn solve(observed: &Tensor3, mask: &ObservationMask, cfg: &SolverConfig) -> Result<SolveResult> {
    Solver::new(observed, mask, cfg.clone())?.run()
}

//! WebAssembly bindings for the browser demo in `www/`.

use tslto::datagen::{generate, SyntheticInstance, SyntheticSpec};
use tslto::experiment::{solve_and_evaluate, Evaluation};
use tslto::metrics::{DetectionRule, EvalScope};
use tslto::prox::{hard_threshold_l0, ProxWeight};
use tslto::solver::{SolveResult, SolverConfig};
use tslto::Tensor3;
use wasm_bindgen::prelude::*;

pub const DEMO_DIMS: [usize; 3] = [30, 30, 12];
pub const DEMO_BLOCK: (usize, usize) = (2, 40);

fn js(e: tslto::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major `D1 × D2` frontal slice `k`.
pub fn slice(t: &Tensor3, k: usize) -> Vec<f64> {
    let [d1, d2, d3] = t.dims();
    let k = k.min(d3 - 1);
    (0..d1).flat_map(|i| (0..d2).map(move |j| t.get(i, j, k))).collect()
}

pub fn demo_spec(seed: u64, missing_rate: f64, blocks: usize) -> SyntheticSpec {
    SyntheticSpec {
        dims: DEMO_DIMS,
        block_count: blocks,
        block_shape: DEMO_BLOCK,
        missing_rate,
        seed,
        ..SyntheticSpec::default()
    }
}

/// A small synthetic instance and, once solved, its recovery.
#[wasm_bindgen]
pub struct Demo {
    inst: SyntheticInstance,
    solved: Option<(SolveResult, Evaluation)>,
}

impl Demo {
    pub fn create(seed: u64, missing_rate: f64, blocks: usize) -> tslto::Result<Demo> {
        Ok(Demo { inst: generate(&demo_spec(seed, missing_rate, blocks))?, solved: None })
    }

    pub fn run(&mut self, max_outer: usize) -> tslto::Result<()> {
        let cfg = SolverConfig { max_outer, ..SolverConfig::default() };
        let scope = if self.inst.observed.count() == self.inst.observed.len() {
            EvalScope::All
        } else {
            EvalScope::MissingOnly
        };
        self.solved = Some(solve_and_evaluate(&self.inst, &cfg, scope, DetectionRule::default())?);
        Ok(())
    }
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, missing_rate: f64, blocks: u32) -> Result<Demo, JsError> {
        Demo::create(seed.into(), missing_rate, blocks as usize).map_err(js)
    }

    pub fn rows(&self) -> usize {
        DEMO_DIMS[0]
    }

    pub fn cols(&self) -> usize {
        DEMO_DIMS[1]
    }

    pub fn slices(&self) -> usize {
        DEMO_DIMS[2]
    }

    /// Observed data of slice `k`; missing entries are NaN.
    pub fn observed_slice(&self, k: usize) -> Vec<f64> {
        let masked = Tensor3::from_fn(DEMO_DIMS, |i, j, l| {
            if self.inst.observed.contains(i, j, l) {
                self.inst.full.get(i, j, l)
            } else {
                f64::NAN
            }
        })
        .expect("demo dims are valid");
        slice(&masked, k)
    }

    pub fn truth_anomaly_slice(&self, k: usize) -> Vec<f64> {
        slice(&self.inst.anomaly, k)
    }

    pub fn solve(&mut self, max_outer: u32) -> Result<(), JsError> {
        self.run(max_outer as usize).map_err(js)
    }

    pub fn is_solved(&self) -> bool {
        self.solved.is_some()
    }

    /// Recovered slice `k`; empty before solving.
    pub fn recovered_slice(&self, k: usize) -> Vec<f64> {
        self.solved.as_ref().map_or_else(Vec::new, |(r, _)| slice(&r.recovered, k))
    }

    pub fn anomaly_slice(&self, k: usize) -> Vec<f64> {
        self.solved.as_ref().map_or_else(Vec::new, |(r, _)| slice(&r.anomaly, k))
    }

    /// `[rmse, mape, mae, precision, recall, f1, iterations]`; empty before solving.
    pub fn metrics(&self) -> Vec<f64> {
        self.solved.as_ref().map_or_else(Vec::new, |(r, e)| {
            let (i, d) = (&e.imputation, &e.detection);
            vec![i.rmse, i.mape.unwrap_or(f64::NAN), i.mae, d.precision, d.recall, d.f1, r.iterations as f64]
        })
    }
}

/// Samples the ℓ0 proximal map at `n` evenly spaced inputs in `[lo, hi]`.
pub fn threshold_curve(weight: f64, lo: f64, hi: f64, n: usize) -> tslto::Result<Vec<f64>> {
    let w = ProxWeight::new(weight)?;
    let n = n.max(2);
    let xs: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let t = Tensor3::from_vec([n, 1, 1], xs)?;
    Ok(hard_threshold_l0(&t, w).into_vec())
}

#[wasm_bindgen]
pub fn prox_curve(weight: f64, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>, JsError> {
    threshold_curve(weight, lo, hi, n).map_err(js)
}

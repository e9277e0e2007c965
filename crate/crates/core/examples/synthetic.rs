//! Solves one synthetic instance and prints accuracy and timing.
//!
//! Usage: `cargo run --release -p tslto --example synthetic -- [key=value ...]`
//! Keys: missing, seed, blocks, s, growth, cap, tol, beta, mu1, mu2, gamma,
//! alpha, lambda, every, max.

use std::collections::HashMap;
use std::time::Instant;

use tslto::datagen::{generate, SyntheticSpec};
use tslto::metrics::{detection_metrics, imputation_metrics, DetectionRule, EvalScope};
use tslto::solver::{Solver, SolverConfig};

fn main() -> tslto::Result<()> {
    let args: HashMap<String, f64> = std::env::args()
        .skip(1)
        .filter_map(|a| {
            let (k, v) = a.split_once('=')?;
            Some((k.to_string(), v.parse().ok()?))
        })
        .collect();
    let get = |k: &str, d: f64| args.get(k).copied().unwrap_or(d);
    let spec = SyntheticSpec {
        missing_rate: get("missing", 0.3),
        seed: get("seed", 0.0) as u64,
        block_count: get("blocks", 50.0) as usize,
        ..SyntheticSpec::default()
    };
    let d = SolverConfig::default();
    let cfg = SolverConfig {
        s: get("s", d.s),
        growth: get("growth", d.growth),
        penalty_cap: get("cap", d.penalty_cap),
        tolerance: get("tol", d.tolerance),
        beta: get("beta", d.beta),
        mu1: get("mu1", d.mu1),
        mu2: get("mu2", d.mu2),
        gamma: get("gamma", d.gamma),
        alpha: [get("alpha", d.alpha[0]); 3],
        lambda: [get("lambda", d.lambda[0]); 3],
        max_outer: get("max", d.max_outer as f64) as usize,
        ..d
    };
    let every = get("every", 25.0) as usize;
    let inst = generate(&spec)?;
    let start = Instant::now();
    let mut solver = Solver::new(&inst.full, &inst.observed, cfg)?;
    loop {
        let done = solver.step()?;
        let st = solver.state();
        let last = done || st.iter >= solver.config().max_outer;
        if st.iter % every == 0 || last {
            let row = solver.trace().last().unwrap();
            let scope = if spec.missing_rate == 0.0 { EvalScope::All } else { EvalScope::MissingOnly };
            let imp = imputation_metrics(&inst.full, &st.x, scope, &inst.observed, None)?;
            let det = detection_metrics(&inst.anomaly_truth, &st.anomaly, DetectionRule::default())?;
            println!(
                "iter {:5} s={:8.2e} chg={:8.2e} supp={:6} rmse={:.4} mape={:.3} mae={:.4} P={:.3} R={:.3} F1={:.3} t={:.1}s",
                st.iter,
                st.penalties.s,
                row.changes.max(),
                row.anomaly_support,
                imp.rmse,
                imp.mape.unwrap_or(f64::NAN),
                imp.mae,
                det.precision,
                det.recall,
                det.f1,
                start.elapsed().as_secs_f64()
            );
        }
        if last {
            break;
        }
    }
    Ok(())
}

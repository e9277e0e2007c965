//! Evaluation, ablation variants and parameter grids over synthetic data.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::RunConfig;
use crate::datagen::{generate, SyntheticInstance};
use crate::error::{Error, Result};
use crate::metrics::{
    detection_metrics, imputation_metrics, DetectionMetrics, DetectionRule, EvalScope, ImputationMetrics,
};
use crate::solver::{solve, SolveResult, SolverConfig};
use crate::tensor::{ObservationMask, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub imputation: ImputationMetrics,
    pub detection: DetectionMetrics,
}

pub const METRICS_HEADER: [&str; 11] =
    ["rmse", "mape", "mae", "count", "mape_skipped", "precision", "recall", "f1", "tp", "fp", "fn"];

impl Evaluation {
    /// Values in [`METRICS_HEADER`] order; an absent MAPE is empty.
    pub fn row(&self) -> Vec<String> {
        let (i, d) = (&self.imputation, &self.detection);
        vec![
            i.rmse.to_string(),
            i.mape.map(|m| m.to_string()).unwrap_or_default(),
            i.mae.to_string(),
            i.count.to_string(),
            i.mape_skipped.to_string(),
            d.precision.to_string(),
            d.recall.to_string(),
            d.f1.to_string(),
            d.true_positives.to_string(),
            d.false_positives.to_string(),
            d.false_negatives.to_string(),
        ]
    }

    /// `(name, value)` pairs for the numeric metrics.
    pub fn named(&self) -> Vec<(&'static str, Option<f64>)> {
        let (i, d) = (&self.imputation, &self.detection);
        vec![
            ("rmse", Some(i.rmse)),
            ("mape", i.mape),
            ("mae", Some(i.mae)),
            ("precision", Some(d.precision)),
            ("recall", Some(d.recall)),
            ("f1", Some(d.f1)),
        ]
    }
}

/// Everything needed to score a solution.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub truth: &'a Tensor3,
    pub observed: &'a ObservationMask,
    pub anomaly_truth: &'a ObservationMask,
}

impl<'a> Reference<'a> {
    pub fn of(inst: &'a SyntheticInstance) -> Self {
        Self { truth: &inst.full, observed: &inst.observed, anomaly_truth: &inst.anomaly_truth }
    }
}

pub fn evaluate(
    reference: Reference<'_>,
    estimate: &Tensor3,
    anomaly: &Tensor3,
    scope: EvalScope,
    rule: DetectionRule,
) -> Result<Evaluation> {
    let imputation =
        imputation_metrics(reference.truth, estimate, scope, reference.observed, Some(reference.anomaly_truth))?;
    let detection = detection_metrics(reference.anomaly_truth, anomaly, rule)?;
    Ok(Evaluation { imputation, detection })
}

pub fn solve_and_evaluate(
    inst: &SyntheticInstance,
    cfg: &SolverConfig,
    scope: EvalScope,
    rule: DetectionRule,
) -> Result<(SolveResult, Evaluation)> {
    let result = solve(&inst.full, &inst.observed, cfg)?;
    let eval = evaluate(Reference::of(inst), &result.recovered, &result.anomaly, scope, rule)?;
    Ok((result, eval))
}

/// A model with some regularizers switched off.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub label: &'static str,
    pub drop_lambda: bool,
    pub drop_mu1: bool,
    pub drop_mu2: bool,
}

const fn variant(label: &'static str, drop_lambda: bool, drop_mu1: bool, drop_mu2: bool) -> Variant {
    Variant { label, drop_lambda, drop_mu1, drop_mu2 }
}

/// Variants a–g followed by the full model.
pub const VARIANTS: [Variant; 8] = [
    variant("a", true, false, false),
    variant("b", false, true, false),
    variant("c", false, false, true),
    variant("d", true, true, false),
    variant("e", true, false, true),
    variant("f", false, true, true),
    variant("g", true, true, true),
    variant("full", false, false, false),
];

impl Variant {
    pub fn apply(&self, base: &SolverConfig) -> SolverConfig {
        let mut cfg = base.clone();
        if self.drop_lambda {
            cfg.lambda = [0.0; 3];
        }
        if self.drop_mu1 {
            cfg.mu1 = 0.0;
        }
        if self.drop_mu2 {
            cfg.mu2 = 0.0;
        }
        cfg
    }

    pub fn description(&self) -> String {
        let dropped: Vec<&str> = [(self.drop_lambda, "lambda"), (self.drop_mu1, "mu1"), (self.drop_mu2, "mu2")]
            .iter()
            .filter(|(d, _)| *d)
            .map(|(_, n)| *n)
            .collect();
        if dropped.is_empty() {
            "all terms".into()
        } else {
            format!("without {}", dropped.join("+"))
        }
    }
}

/// Runs `f` over `items` on at most `jobs` threads; output order follows input.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().expect("result slot lock")[i] = Some(r);
            });
        }
    });
    out.into_inner().expect("result slot lock").into_iter().map(|r| r.expect("every item ran")).collect()
}

pub fn run_ablation(
    inst: &SyntheticInstance,
    base: &SolverConfig,
    scope: EvalScope,
    rule: DetectionRule,
    jobs: usize,
) -> Vec<(Variant, Result<Evaluation>)> {
    let evals = parallel_map(&VARIANTS, jobs, |v| solve_and_evaluate(inst, &v.apply(base), scope, rule).map(|r| r.1));
    VARIANTS.into_iter().zip(evals).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridCell {
    pub index: usize,
    pub x: f64,
    pub y: f64,
    pub missing_rate: f64,
    pub seed: u64,
}

/// Cells of the grid in x, y, missing-rate order with seeds `base ^ index`.
pub fn grid_cells(cfg: &RunConfig) -> Result<Vec<GridCell>> {
    let g = &cfg.grid;
    if g.x_values.is_empty() || g.y_values.is_empty() || g.missing_rates.is_empty() {
        return Err(Error::arg("grid needs at least one value per axis"));
    }
    let total = g.x_values.len() * g.y_values.len() * g.missing_rates.len();
    if total > g.cap {
        return Err(Error::arg(format!("grid has {total} cells, above the cap of {}", g.cap)));
    }
    for key in [&g.x_key, &g.y_key] {
        if key == "missing_rate" || key == "seed" {
            return Err(Error::arg(format!("`{key}` cannot be a grid axis")));
        }
        cfg.clone().set(key, &g.x_values[0].to_string())?;
    }
    let mut cells = Vec::with_capacity(total);
    for &x in &g.x_values {
        for &y in &g.y_values {
            for &m in &g.missing_rates {
                let index = cells.len();
                cells.push(GridCell { index, x, y, missing_rate: m, seed: cfg.data.seed ^ index as u64 });
            }
        }
    }
    Ok(cells)
}

/// Fully resolved configuration of one cell.
pub fn cell_config(base: &RunConfig, cell: &GridCell) -> Result<RunConfig> {
    let mut cfg = base.clone();
    cfg.set(&base.grid.x_key, &cell.x.to_string())?;
    cfg.set(&base.grid.y_key, &cell.y.to_string())?;
    cfg.data.missing_rate = cell.missing_rate;
    cfg.data.seed = cell.seed;
    Ok(cfg)
}

pub fn run_cell(base: &RunConfig, cell: &GridCell) -> Result<Evaluation> {
    let cfg = cell_config(base, cell)?;
    cfg.validate()?;
    let inst = generate(&cfg.data)?;
    solve_and_evaluate(&inst, &cfg.solver, cfg.scope, cfg.detection).map(|r| r.1)
}

pub fn run_grid(base: &RunConfig, jobs: usize) -> Result<Vec<(GridCell, Result<Evaluation>)>> {
    let cells = grid_cells(base)?;
    let evals = parallel_map(&cells, jobs, |c| run_cell(base, c));
    Ok(cells.into_iter().zip(evals).collect())
}

pub const GRID_HEADER: [&str; 10] =
    ["cell", "x_key", "x", "y_key", "y", "missing_rate", "seed", "metric", "value", "status"];

/// Long format: one row per cell and metric, or one `error` row for a failed cell.
pub fn grid_rows(base: &RunConfig, results: &[(GridCell, Result<Evaluation>)]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for (c, r) in results {
        let head = vec![
            c.index.to_string(),
            base.grid.x_key.clone(),
            c.x.to_string(),
            base.grid.y_key.clone(),
            c.y.to_string(),
            c.missing_rate.to_string(),
            c.seed.to_string(),
        ];
        match r {
            Ok(e) => {
                for (name, v) in e.named() {
                    let mut row = head.clone();
                    row.extend([name.to_string(), v.map(|v| v.to_string()).unwrap_or_default(), "ok".into()]);
                    rows.push(row);
                }
            }
            Err(err) => {
                let mut row = head;
                row.extend(["error".into(), String::new(), err.to_string().replace(['\n', '\r'], " ")]);
                rows.push(row);
            }
        }
    }
    rows
}

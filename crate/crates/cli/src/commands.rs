use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use tslto::config::RunConfig;
use tslto::datagen::{generate as generate_instance, place_blocks, rng_from_seed, sparsity_report, uniform_mask};
use tslto::experiment::{
    cell_config, evaluate as score, grid_rows, run_ablation, run_grid, Reference, GRID_HEADER, METRICS_HEADER,
};
use tslto::io::{load_mask, load_tensor, load_triples, save_mask, save_tsr3, write_csv, write_trace_csv, KeyValues};
use tslto::preprocess::{ingest_zero_missing, select_rank, tucker_smooth};
use tslto::solver::solve as run_solver;
use tslto::{ObservationMask, Tensor3};

pub const FULL: &str = "full.tsr3";
pub const LOWRANK: &str = "lowrank.tsr3";
pub const ANOMALY: &str = "anomaly.tsr3";
pub const MASK: &str = "mask.tsr3";
pub const ANOMALY_MASK: &str = "anomaly_mask.tsr3";
pub const SMOOTHED: &str = "smoothed.tsr3";
pub const MANIFEST: &str = "manifest.txt";
pub const CONFIG: &str = "config.txt";

pub enum CliError {
    Usage(String),
    Runtime(tslto::Error),
}

impl From<tslto::Error> for CliError {
    fn from(e: tslto::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub jobs: usize,
}

type Outcome = Result<(), CliError>;

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.paths.out_dir.clone().ok_or_else(|| CliError::Usage("out_dir is required".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// An explicit path, else `name` inside data_dir.
fn resolved(explicit: &Option<PathBuf>, cfg: &RunConfig, name: &str) -> Option<PathBuf> {
    explicit.clone().or_else(|| cfg.paths.data_dir.as_ref().map(|d| d.join(name)))
}

fn required(explicit: &Option<PathBuf>, cfg: &RunConfig, name: &str, key: &str) -> Result<PathBuf, CliError> {
    resolved(explicit, cfg, name).ok_or_else(|| CliError::Usage(format!("{key} (or data_dir) is required")))
}

fn validated(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn generate(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    validated(cfg)?;
    let dir = out_dir(cfg)?;
    let inst = generate_instance(&cfg.data)?;
    save_tsr3(dir.join(FULL), &inst.full)?;
    save_tsr3(dir.join(LOWRANK), &inst.lowrank)?;
    save_tsr3(dir.join(ANOMALY), &inst.anomaly)?;
    save_mask(dir.join(MASK), &inst.observed)?;
    save_mask(dir.join(ANOMALY_MASK), &inst.anomaly_truth)?;

    let report = sparsity_report(&inst)?;
    let mut manifest = KeyValues::default();
    for key in [
        "seed",
        "dims",
        "core_ranks",
        "core_low",
        "core_high",
        "distinctive_rows",
        "anomaly_mean",
        "anomaly_variance",
        "block_count",
        "block_shape",
        "missing_rate",
    ] {
        let value = cfg.entries().into_iter().find(|(k, _)| *k == key).expect("known key").1;
        manifest.push(key, value);
    }
    manifest.push("anomaly_ratio", report.anomaly_fraction);
    manifest.push("observed_fraction", report.observed_fraction);
    manifest.push("difference_rows", report.difference_rows.map(|r| r.to_string()).join(","));
    for (key, name) in
        [("full", FULL), ("lowrank", LOWRANK), ("anomaly", ANOMALY), ("mask", MASK), ("anomaly_mask", ANOMALY_MASK)]
    {
        manifest.push(format!("file_{key}"), name);
    }
    manifest.save(dir.join(MANIFEST))?;
    cfg.save(dir.join(CONFIG))?;
    println!(
        "wrote {} (anomaly ratio {:.4}, observed fraction {:.4})",
        dir.display(),
        report.anomaly_fraction,
        report.observed_fraction
    );
    Ok(())
}

fn load_observation(cfg: &RunConfig) -> Result<(Tensor3, ObservationMask, PathBuf, Option<PathBuf>), CliError> {
    let input = required(&cfg.paths.input, cfg, FULL, "input")?;
    let mask_path = resolved(&cfg.paths.mask, cfg, MASK);
    let is_csv = input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let (x, listed) = if is_csv {
        let (x, m) = load_triples(&input, None)?;
        (x, Some(m))
    } else {
        (load_tensor(&input)?, None)
    };
    let mask = match (&mask_path, listed) {
        (Some(p), _) => load_mask(p)?,
        (None, Some(m)) => m,
        (None, None) => ObservationMask::full(x.dims())?,
    };
    Ok((x, mask, input, mask_path))
}

pub fn solve(ctx: &Context) -> Outcome {
    let mut cfg = ctx.cfg.clone();
    cfg.solver.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let dir = out_dir(&cfg)?;
    let (x, mask, input, mask_path) = load_observation(&cfg)?;
    let result = run_solver(&x, &mask, &cfg.solver)?;
    save_tsr3(dir.join("X.tsr3"), &result.recovered)?;
    save_tsr3(dir.join("L.tsr3"), &result.lowrank)?;
    save_tsr3(dir.join("R.tsr3"), &result.anomaly)?;
    write_trace_csv(fs::File::create(dir.join("trace.csv"))?, &result.trace)?;
    cfg.paths.input = Some(input);
    cfg.paths.mask = mask_path;
    cfg.save(dir.join(CONFIG))?;
    println!(
        "iterations={} converged={} anomaly_support={}",
        result.iterations,
        result.converged,
        result.trace.last().map_or(0, |t| t.anomaly_support)
    );
    Ok(())
}

pub fn evaluate(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let dir = cfg.paths.out_dir.clone().ok_or_else(|| CliError::Usage("out_dir is required".into()))?;
    let truth_name = if cfg.use_transform { SMOOTHED } else { FULL };
    let truth = load_tensor(required(&cfg.paths.truth, cfg, truth_name, "truth")?)?;
    let observed = load_mask(required(&cfg.paths.mask, cfg, MASK, "mask")?)?;
    let anomaly_truth = load_mask(required(&cfg.paths.anomaly_truth, cfg, ANOMALY_MASK, "anomaly_truth")?)?;
    let mut estimate = load_tensor(dir.join("X.tsr3"))?;
    let anomaly = load_tensor(dir.join("R.tsr3"))?;
    if cfg.use_transform {
        estimate = cfg.transform.revert(&estimate)?;
    }
    let reference = Reference { truth: &truth, observed: &observed, anomaly_truth: &anomaly_truth };
    let eval = score(reference, &estimate, &anomaly, cfg.scope, cfg.detection)?;
    let mut header = vec!["scope", "detect_mode"];
    header.extend(METRICS_HEADER);
    let mut row = vec![cfg.scope.to_string(), cfg.detection.mode.to_string()];
    row.extend(eval.row());
    write_csv(fs::File::create(dir.join("metrics.csv"))?, &header, &[row.clone()])?;
    write_csv(std::io::stdout().lock(), &header, &[row])?;
    Ok(())
}

pub fn preprocess(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    cfg.transform.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let input = cfg.paths.input.clone().ok_or_else(|| CliError::Usage("input is required".into()))?;
    let dir = out_dir(cfg)?;
    let (raw, present) = ingest_zero_missing(load_tensor(&input)?)?;
    let ranks = match cfg.smooth_ranks {
        Some(r) => r,
        None => select_rank(&raw, cfg.rank_criterion)?,
    };
    let smoothed = tucker_smooth(&raw, ranks)?;
    let base = if cfg.use_transform { cfg.transform.transform(&smoothed)? } else { smoothed.clone() };
    let dims = base.dims();
    let d = &cfg.data;
    let mut rng = rng_from_seed(d.seed);
    let placed = place_blocks(dims, d.block_count, d.block_shape, d.anomaly_mean, d.anomaly_variance, &mut rng)?;
    let observed = uniform_mask(dims, d.missing_rate, &mut rng)?.intersect(&present)?;
    let full = base.add(&placed.values)?;

    save_tsr3(dir.join(SMOOTHED), &smoothed)?;
    save_tsr3(dir.join(LOWRANK), &base)?;
    save_tsr3(dir.join(ANOMALY), &placed.values)?;
    save_tsr3(dir.join(FULL), &full)?;
    save_mask(dir.join(MASK), &observed)?;
    save_mask(dir.join(ANOMALY_MASK), &placed.support)?;
    let mut manifest = KeyValues::default();
    manifest.push("input", input.display());
    manifest.push("dims", dims.map(|v| v.to_string()).join(","));
    manifest.push("smooth_ranks", ranks.map(|v| v.to_string()).join(","));
    manifest.push("use_transform", cfg.use_transform);
    manifest.push("present_fraction", present.fraction());
    manifest.push("observed_fraction", observed.fraction());
    manifest.push("anomaly_ratio", placed.support.fraction());
    manifest.save(dir.join(MANIFEST))?;
    let mut resolved_cfg = cfg.clone();
    resolved_cfg.smooth_ranks = Some(ranks);
    resolved_cfg.save(dir.join(CONFIG))?;
    println!("ranks={ranks:?} observed_fraction={:.4}", observed.fraction());
    Ok(())
}

fn report_dir(cfg: &RunConfig) -> Result<Option<PathBuf>, CliError> {
    cfg.paths.out_dir.as_ref().map(|_| out_dir(cfg)).transpose()
}

fn emit(dir: Option<&Path>, file: &str, header: &[&str], rows: &[Vec<String>]) -> Outcome {
    match dir {
        Some(d) => write_csv(fs::File::create(d.join(file))?, header, rows)?,
        None => write_csv(std::io::stdout().lock(), header, rows)?,
    }
    Ok(())
}

pub fn ablate(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    validated(cfg)?;
    let dir = report_dir(cfg)?;
    let inst = generate_instance(&cfg.data)?;
    let results = run_ablation(&inst, &cfg.solver, cfg.scope, cfg.detection, ctx.jobs);
    let mut header = vec!["variant", "description", "status"];
    header.extend(METRICS_HEADER);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|(v, r)| {
            let mut row = vec![v.label.to_string(), v.description()];
            match r {
                Ok(e) => {
                    row.push("ok".into());
                    row.extend(e.row());
                }
                Err(e) => {
                    row.push(e.to_string());
                    row.extend(METRICS_HEADER.iter().map(|_| String::new()));
                }
            }
            row
        })
        .collect();
    if let Some(d) = &dir {
        cfg.save(d.join(CONFIG))?;
    }
    emit(dir.as_deref(), "ablation.csv", &header, &rows)
}

pub fn grid(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let dir = report_dir(cfg)?;
    let results = match run_grid(cfg, ctx.jobs) {
        Ok(r) => r,
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    if let Some(d) = &dir {
        cfg.save(d.join(CONFIG))?;
        for (cell, _) in &results {
            let cell_dir = d.join("cells").join(format!("{:04}", cell.index));
            fs::create_dir_all(&cell_dir)?;
            cell_config(cfg, cell)?.save(cell_dir.join(CONFIG))?;
        }
    }
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    emit(dir.as_deref(), "grid.csv", &GRID_HEADER, &grid_rows(cfg, &results))?;
    if failed > 0 {
        let _ = writeln!(std::io::stderr(), "{failed} of {} cells failed", results.len());
    }
    Ok(())
}

//! Flat `key=value` run configuration covering solver, generator,
//! evaluation, preprocessing, grid and path settings.

use std::path::{Path, PathBuf};

use crate::datagen::SyntheticSpec;
use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::metrics::{DetectionRule, EvalScope};
use crate::preprocess::{RankCriterion, ScaleTransform};
use crate::solver::SolverConfig;

/// Two swept keys and a list of missing rates.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub x_key: String,
    pub x_values: Vec<f64>,
    pub y_key: String,
    pub y_values: Vec<f64>,
    pub missing_rates: Vec<f64>,
    /// Largest allowed number of cells.
    pub cap: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_key: "mu1".into(),
            x_values: vec![5.0],
            y_key: "mu2".into(),
            y_values: vec![20.0],
            missing_rates: vec![0.3],
            cap: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Paths {
    /// Directory holding a generated or preprocessed instance.
    pub data_dir: Option<PathBuf>,
    /// Observed tensor; `.csv` selects the triple format.
    pub input: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub anomaly_truth: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub data: SyntheticSpec,
    pub scope: EvalScope,
    pub detection: DetectionRule,
    pub rank_criterion: RankCriterion,
    /// Smoothing ranks; `None` selects them with `rank_criterion`.
    pub smooth_ranks: Option<[usize; 3]>,
    pub transform: ScaleTransform,
    /// Apply the scale transform during preprocessing and undo it before evaluation.
    pub use_transform: bool,
    pub grid: GridSpec,
    pub paths: Paths,
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::arg(format!("{key}: cannot parse `{value}` as {want}"))
}

fn num<T: std::str::FromStr>(key: &str, v: &str, want: &str) -> Result<T> {
    v.trim().parse().map_err(|_| bad(key, v, want))
}

fn list<T: std::str::FromStr>(key: &str, v: &str, want: &str) -> Result<Vec<T>> {
    v.split(',').map(|x| num(key, x, want)).collect()
}

/// Three comma-separated values, or one value for all modes.
fn triple<T: std::str::FromStr + Copy>(key: &str, v: &str, want: &str) -> Result<[T; 3]> {
    match list::<T>(key, v, want)?.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(bad(key, v, &format!("one or three {want} values"))),
    }
}

fn path(v: &str) -> Option<PathBuf> {
    let v = v.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad(key, v, "a boolean")),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        const F: &str = "a number";
        const U: &str = "a nonnegative integer";
        let s = &mut self.solver;
        let d = &mut self.data;
        match key {
            "beta" => s.beta = num(key, v, F)?,
            "lambda" => s.lambda = triple(key, v, F)?,
            "mu1" => s.mu1 = num(key, v, F)?,
            "mu2" => s.mu2 = num(key, v, F)?,
            "alpha" => s.alpha = triple(key, v, F)?,
            "gamma" => s.gamma = num(key, v, F)?,
            "s" => s.s = num(key, v, F)?,
            "growth" => s.growth = num(key, v, F)?,
            "penalty_cap" => s.penalty_cap = num(key, v, F)?,
            "tolerance" => s.tolerance = num(key, v, F)?,
            "ranks" => s.ranks = triple(key, v, U)?,
            "max_outer" => s.max_outer = num(key, v, U)?,
            "max_inner" => s.max_inner = num(key, v, U)?,
            "prox_step0" => s.prox_step0 = if v.trim() == "auto" { None } else { Some(num(key, v, F)?) },
            "prox_shrink" => s.prox_shrink = num(key, v, F)?,
            "dims" => d.dims = triple(key, v, U)?,
            "core_ranks" => d.core_ranks = triple(key, v, U)?,
            "core_low" => d.core_low = num(key, v, F)?,
            "core_high" => d.core_high = num(key, v, F)?,
            "distinctive_rows" => d.distinctive_rows = num(key, v, U)?,
            "anomaly_mean" => d.anomaly_mean = num(key, v, F)?,
            "anomaly_variance" => d.anomaly_variance = num(key, v, F)?,
            "block_count" => d.block_count = num(key, v, U)?,
            "block_shape" => {
                let (r, c) = v.split_once('x').ok_or_else(|| bad(key, v, "ROWSxCOLS"))?;
                d.block_shape = (num(key, r, U)?, num(key, c, U)?);
            }
            "missing_rate" => d.missing_rate = num(key, v, F)?,
            "seed" => d.seed = num(key, v, U)?,
            "scope" => self.scope = v.trim().parse()?,
            "detect_mode" => self.detection = DetectionRule::new(v.trim().parse()?, self.detection.threshold)?,
            "detect_threshold" => self.detection = DetectionRule::new(self.detection.mode, num(key, v, F)?)?,
            "theta" => self.rank_criterion = RankCriterion::new(num(key, v, F)?)?,
            "smooth_ranks" => self.smooth_ranks = if v.trim() == "auto" { None } else { Some(triple(key, v, U)?) },
            "shift" => self.transform.shift = num(key, v, F)?,
            "core_scale" => self.transform.core_scale = num(key, v, F)?,
            "transform_ranks" => self.transform.ranks = triple(key, v, U)?,
            "use_transform" => self.use_transform = boolean(key, v)?,
            "grid_x" => self.grid.x_key = v.trim().to_string(),
            "grid_x_values" => self.grid.x_values = list(key, v, F)?,
            "grid_y" => self.grid.y_key = v.trim().to_string(),
            "grid_y_values" => self.grid.y_values = list(key, v, F)?,
            "grid_missing" => self.grid.missing_rates = list(key, v, F)?,
            "grid_cap" => self.grid.cap = num(key, v, U)?,
            "data_dir" => self.paths.data_dir = path(v),
            "input" => self.paths.input = path(v),
            "mask" => self.paths.mask = path(v),
            "truth" => self.paths.truth = path(v),
            "anomaly_truth" => self.paths.anomaly_truth = path(v),
            "out_dir" => self.paths.out_dir = path(v),
            _ => return Err(Error::arg(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let s = &self.solver;
        let d = &self.data;
        let p = &self.paths;
        vec![
            ("beta", s.beta.to_string()),
            ("lambda", join(&s.lambda)),
            ("mu1", s.mu1.to_string()),
            ("mu2", s.mu2.to_string()),
            ("alpha", join(&s.alpha)),
            ("gamma", s.gamma.to_string()),
            ("s", s.s.to_string()),
            ("growth", s.growth.to_string()),
            ("penalty_cap", s.penalty_cap.to_string()),
            ("tolerance", s.tolerance.to_string()),
            ("ranks", join(&s.ranks)),
            ("max_outer", s.max_outer.to_string()),
            ("max_inner", s.max_inner.to_string()),
            ("prox_step0", s.prox_step0.map_or("auto".into(), |v| v.to_string())),
            ("prox_shrink", s.prox_shrink.to_string()),
            ("dims", join(&d.dims)),
            ("core_ranks", join(&d.core_ranks)),
            ("core_low", d.core_low.to_string()),
            ("core_high", d.core_high.to_string()),
            ("distinctive_rows", d.distinctive_rows.to_string()),
            ("anomaly_mean", d.anomaly_mean.to_string()),
            ("anomaly_variance", d.anomaly_variance.to_string()),
            ("block_count", d.block_count.to_string()),
            ("block_shape", format!("{}x{}", d.block_shape.0, d.block_shape.1)),
            ("missing_rate", d.missing_rate.to_string()),
            ("seed", d.seed.to_string()),
            ("scope", self.scope.to_string()),
            ("detect_mode", self.detection.mode.to_string()),
            ("detect_threshold", self.detection.threshold.to_string()),
            ("theta", self.rank_criterion.theta().to_string()),
            ("smooth_ranks", self.smooth_ranks.map_or("auto".into(), |r| join(&r))),
            ("shift", self.transform.shift.to_string()),
            ("core_scale", self.transform.core_scale.to_string()),
            ("transform_ranks", join(&self.transform.ranks)),
            ("use_transform", self.use_transform.to_string()),
            ("grid_x", self.grid.x_key.clone()),
            ("grid_x_values", join(&self.grid.x_values)),
            ("grid_y", self.grid.y_key.clone()),
            ("grid_y_values", join(&self.grid.y_values)),
            ("grid_missing", join(&self.grid.missing_rates)),
            ("grid_cap", self.grid.cap.to_string()),
            ("data_dir", show_path(&p.data_dir)),
            ("input", show_path(&p.input)),
            ("mask", show_path(&p.mask)),
            ("truth", show_path(&p.truth)),
            ("anomaly_truth", show_path(&p.anomaly_truth)),
            ("out_dir", show_path(&p.out_dir)),
        ]
    }

    /// All recognized keys.
    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    /// Applies every pair on top of the current values.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        for (k, v) in &kv.0 {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(&KeyValues::parse(text)?)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn render(&self) -> String {
        let mut kv = KeyValues::default();
        for (k, v) in self.entries() {
            kv.push(k, v);
        }
        kv.render()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.data.validate()?;
        self.transform.validate()
    }
}

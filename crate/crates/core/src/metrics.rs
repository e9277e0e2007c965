//! Imputation accuracy (RMSE, MAPE, MAE) and detection quality
//! (precision, recall, F1).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::{ObservationMask, Tensor3};

/// Truth magnitudes below this are skipped by MAPE.
pub const MAPE_ZERO_TOL: f64 = 1e-12;

/// Which entries an imputation score covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalScope {
    /// Entries outside the observation mask.
    #[default]
    MissingOnly,
    All,
    /// Entries outside the anomaly support.
    NonAnomalous,
}

impl EvalScope {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalScope::MissingOnly => "missing",
            EvalScope::All => "all",
            EvalScope::NonAnomalous => "non-anomalous",
        }
    }
}

impl fmt::Display for EvalScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "missing" | "missing-only" => Ok(EvalScope::MissingOnly),
            "all" => Ok(EvalScope::All),
            "non-anomalous" | "nonanomalous" => Ok(EvalScope::NonAnomalous),
            _ => Err(Error::arg(format!("unknown scope `{s}` (expected missing, all or non-anomalous)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImputationMetrics {
    pub rmse: f64,
    /// Percent; `None` when every scored truth entry is zero.
    pub mape: Option<f64>,
    pub mae: f64,
    /// Number of scored entries.
    pub count: usize,
    /// Entries left out of MAPE because their truth is zero.
    pub mape_skipped: usize,
}

/// Scores `estimate` against `truth` over the entries selected by `scope`.
/// `observed` defines the missing set; `anomalies` is required for
/// [`EvalScope::NonAnomalous`].
pub fn imputation_metrics(
    truth: &Tensor3,
    estimate: &Tensor3,
    scope: EvalScope,
    observed: &ObservationMask,
    anomalies: Option<&ObservationMask>,
) -> Result<ImputationMetrics> {
    truth.same_dims(estimate)?;
    if observed.dims() != truth.dims() {
        return Err(Error::dims("observation mask does not match the tensors"));
    }
    let excluded: Option<&[bool]> = match scope {
        EvalScope::All => None,
        EvalScope::MissingOnly => Some(observed.flags()),
        EvalScope::NonAnomalous => {
            let a = anomalies.ok_or_else(|| Error::arg("non-anomalous scope needs the anomaly mask"))?;
            if a.dims() != truth.dims() {
                return Err(Error::dims("anomaly mask does not match the tensors"));
            }
            Some(a.flags())
        }
    };
    let (mut sq, mut abs, mut pct) = (0.0, 0.0, 0.0);
    let (mut count, mut pct_count) = (0usize, 0usize);
    for (idx, (&t, &e)) in truth.as_slice().iter().zip(estimate.as_slice()).enumerate() {
        if excluded.is_some_and(|x| x[idx]) {
            continue;
        }
        let d = (t - e).abs();
        sq += d * d;
        abs += d;
        count += 1;
        if t.abs() >= MAPE_ZERO_TOL {
            pct += d / t.abs();
            pct_count += 1;
        }
    }
    if count == 0 {
        return Err(Error::arg(format!("scope `{scope}` selects no entries")));
    }
    let n = count as f64;
    Ok(ImputationMetrics {
        rmse: (sq / n).sqrt(),
        mape: (pct_count > 0).then(|| 100.0 * pct / pct_count as f64),
        mae: abs / n,
        count,
        mape_skipped: count - pct_count,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DetectionMode {
    #[default]
    Entry,
    /// Connected components of the detected set in the mode-1 unfolding.
    BlockOverlap,
}

impl DetectionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectionMode::Entry => "entry",
            DetectionMode::BlockOverlap => "block",
        }
    }
}

impl fmt::Display for DetectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entry" => Ok(DetectionMode::Entry),
            "block" | "block-overlap" => Ok(DetectionMode::BlockOverlap),
            _ => Err(Error::arg(format!("unknown detection mode `{s}` (expected entry or block)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRule {
    pub mode: DetectionMode,
    /// Entries with `|R| > threshold` count as detected.
    pub threshold: f64,
}

impl Default for DetectionRule {
    fn default() -> Self {
        Self { mode: DetectionMode::Entry, threshold: 0.0 }
    }
}

impl DetectionRule {
    pub fn new(mode: DetectionMode, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) {
            return Err(Error::arg(format!("detection threshold must be nonnegative, got {threshold}")));
        }
        Ok(Self { mode, threshold })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Precision is 1 with no detections, recall is 1 with no truth, and F1 is 0
/// when both vanish.
pub fn scores(tp: usize, fp: usize, fn_: usize) -> DetectionMetrics {
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    DetectionMetrics { precision, recall, f1, true_positives: tp, false_positives: fp, false_negatives: fn_ }
}

/// Detected set of `r` under `threshold`.
pub fn detected_support(r: &Tensor3, threshold: f64) -> Result<ObservationMask> {
    ObservationMask::from_flags(r.dims(), r.as_slice().iter().map(|v| v.abs() > threshold).collect())
}

pub fn detection_metrics(truth: &ObservationMask, r: &Tensor3, rule: DetectionRule) -> Result<DetectionMetrics> {
    if truth.dims() != r.dims() {
        return Err(Error::dims(format!("truth {:?} vs anomaly {:?}", truth.dims(), r.dims())));
    }
    DetectionRule::new(rule.mode, rule.threshold)?;
    let detected = detected_support(r, rule.threshold)?;
    Ok(match rule.mode {
        DetectionMode::Entry => {
            let (t, d) = (truth.flags(), detected.flags());
            let tp = t.iter().zip(d).filter(|(a, b)| **a && **b).count();
            let fp = d.iter().filter(|b| **b).count() - tp;
            let fn_ = t.iter().filter(|a| **a).count() - tp;
            scores(tp, fp, fn_)
        }
        DetectionMode::BlockOverlap => {
            let det = components(&detected);
            let tru = components(truth);
            let mut tp = 0;
            let mut fp = 0;
            for comp in &det {
                if comp.iter().any(|&i| truth.flags()[i]) {
                    tp += 1;
                } else {
                    fp += 1;
                }
            }
            let fn_ = tru.iter().filter(|comp| !comp.iter().any(|&i| detected.flags()[i])).count();
            scores(tp, fp, fn_)
        }
    })
}

/// Maximal 4-connected components of a mask viewed as its mode-1 unfolding
/// (`D1` rows by `D2·D3` columns). Each component lists storage indices.
pub fn components(mask: &ObservationMask) -> Vec<Vec<usize>> {
    let rows = mask.dims()[0];
    let n = mask.len();
    let cols = n / rows;
    let flags = mask.flags();
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if !flags[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut comp = Vec::new();
        while let Some(idx) = stack.pop() {
            comp.push(idx);
            let (r, c) = (idx % rows, idx / rows);
            let mut visit = |j: usize| {
                if flags[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if r > 0 {
                visit(idx - 1);
            }
            if r + 1 < rows {
                visit(idx + 1);
            }
            if c > 0 {
                visit(idx - rows);
            }
            if c + 1 < cols {
                visit(idx + rows);
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

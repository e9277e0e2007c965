//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Failures exit nonzero only when `TSLTO_ACCEPTANCE_STRICT=1`, so the rest of
//! `cargo test --workspace` still runs and the verdict lines stay visible.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::Rng;
use tempfile::TempDir;
use tslto::datagen::{generate, rng_from_seed, Rng64, SyntheticSpec};
use tslto::experiment::{solve_and_evaluate, Evaluation, VARIANTS};
use tslto::metrics::{detection_metrics, imputation_metrics, scores, DetectionRule, EvalScope};
use tslto::preprocess::{select_rank, RankCriterion};
use tslto::prox::{group_hard_threshold_l20, hard_threshold_l0, ProxWeight};
use tslto::solver::{Solver, SolverConfig};
use tslto::stiefel::{
    grad_fbeta_u, grad_u_subproblem, orthonormality_error, tucker_fit_value, u_subproblem_value, DifferenceCoupling,
};
use tslto::tensor::{
    mixed_difference, mixed_difference_adjoint, toeplitz_diff, toeplitz_diff_adjoint, tucker_reconstruct,
};
use tslto::{Matrix, Mode, ObservationMask, Tensor3};

type Verdict = Result<String, String>;

const SEEDS: [u64; 3] = [0, 1, 2];

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn column_params(missing: f64) -> SolverConfig {
    let (mu2, beta, gamma) = [(0.1, (10.0, 300.0, 10.0)), (0.3, (20.0, 450.0, 10.0)), (0.8, (60.0, 370.0, 10.0))]
        .into_iter()
        .find_map(|(m, p)| (m == missing).then_some(p))
        .unwrap_or_else(|| panic!("no parameter column for missing rate {missing}"));
    SolverConfig { mu1: 5.0, mu2, beta, gamma, lambda: [1.2; 3], alpha: [100.0; 3], ..SolverConfig::default() }
}

fn synthetic_run(missing: f64, seed: u64, cfg: &SolverConfig) -> Result<(Evaluation, Duration), String> {
    let spec = SyntheticSpec { missing_rate: missing, seed, ..SyntheticSpec::default() };
    let inst = generate(&spec).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let (_, eval) =
        solve_and_evaluate(&inst, cfg, EvalScope::MissingOnly, DetectionRule::default()).map_err(|e| e.to_string())?;
    Ok((eval, start.elapsed()))
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criterion_1() -> Verdict {
    let cfg = column_params(0.3);
    let runs: Vec<(Evaluation, Duration)> =
        SEEDS.iter().map(|&s| synthetic_run(0.3, s, &cfg)).collect::<Result<_, _>>()?;
    let f1 = mean(runs.iter().map(|r| r.0.detection.f1));
    let mape = mean(runs.iter().map(|r| r.0.imputation.mape.unwrap_or(f64::INFINITY)));
    let rmse = mean(runs.iter().map(|r| r.0.imputation.rmse));
    let mae = mean(runs.iter().map(|r| r.0.imputation.mae));
    let slowest = runs.iter().map(|r| r.1).max().unwrap_or_default();
    let ok = f1 >= 0.75 && mape <= 12.0 && rmse <= 0.6 && mae <= 0.07 && slowest <= Duration::from_secs(900);
    check(
        ok,
        format!(
            "F1 {f1:.3} (≥0.75), MAPE {mape:.2}% (≤12), RMSE {rmse:.3} (≤0.6), MAE {mae:.3} (≤0.07), slowest run {:.1}s",
            slowest.as_secs_f64()
        ),
    )
}

fn criterion_2() -> Verdict {
    let recall = |m: f64| -> Result<f64, String> {
        let cfg = column_params(m);
        let runs: Vec<(Evaluation, Duration)> =
            SEEDS.iter().map(|&s| synthetic_run(m, s, &cfg)).collect::<Result<_, _>>()?;
        Ok(mean(runs.iter().map(|r| r.0.detection.recall)))
    };
    let (low, high) = (recall(0.1)?, recall(0.8)?);
    check(low - high >= 0.15, format!("recall {low:.3} at 0.1 vs {high:.3} at 0.8, drop {:.3} (≥0.15)", low - high))
}

fn criterion_3() -> Verdict {
    let g = VARIANTS.iter().find(|v| v.label == "g").expect("variant g");
    let spec = SyntheticSpec { missing_rate: 0.3, seed: 0, ..SyntheticSpec::default() };
    let inst = generate(&spec).map_err(|e| e.to_string())?;
    let cfg = SolverConfig { max_outer: 500, ..g.apply(&column_params(0.3)) };
    let (_, eval) =
        solve_and_evaluate(&inst, &cfg, EvalScope::MissingOnly, DetectionRule::default()).map_err(|e| e.to_string())?;
    let f1 = eval.detection.f1;
    let ratio = inst.anomaly_truth.fraction();
    check((0.15..=0.21).contains(&f1), format!("variant g entry F1 {f1:.4} in [0.15, 0.21], contamination {ratio:.3}"))
}

fn criterion_4() -> Verdict {
    let mut cases = 0usize;
    let mut mismatches = 0usize;
    let weights: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
    for &t in &weights {
        let w = ProxWeight::new(t).unwrap();
        for i in 0..=200 {
            let x = -5.0 + 0.05 * i as f64;
            let out = hard_threshold_l0(&Tensor3::from_vec([1, 1, 1], vec![x]).unwrap(), w).as_slice()[0];
            let keep = t;
            let zero = 0.5 * x * x;
            let best = if zero <= keep { 0.0 } else { x };
            cases += 1;
            mismatches += usize::from(out != best);
        }
        for a in 0..=20 {
            for b in 0..=20 {
                let row = [-3.0 + 0.3 * a as f64, -3.0 + 0.3 * b as f64];
                let m = Matrix::from_row_slice(2, 2, &[row[0], row[1], 1.0, 1.0]);
                let out = group_hard_threshold_l20(&m, w);
                let zero = 0.5 * (row[0] * row[0] + row[1] * row[1]);
                let best = if zero <= t { [0.0, 0.0] } else { row };
                cases += 1;
                mismatches += usize::from(out[(0, 0)] != best[0] || out[(0, 1)] != best[1]);
            }
        }
    }
    check(cases >= 10_000 && mismatches == 0, format!("{cases} cases, {mismatches} mismatches"))
}

fn random_matrix(rng: &mut Rng64, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn finite_difference(u: &Matrix, f: impl Fn(&Matrix) -> f64) -> Matrix {
    let h = 1e-6;
    Matrix::from_fn(u.nrows(), u.ncols(), |i, j| {
        let (mut up, mut down) = (u.clone(), u.clone());
        up[(i, j)] += h;
        down[(i, j)] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    })
}

fn criterion_5() -> Verdict {
    let dims = [5, 4, 6];
    let ranks = [2, 3, 2];
    let mut worst = 0.0f64;
    let mut probes = 0;
    let mut rng = rng_from_seed(7);
    for mode in Mode::ALL {
        for _ in 0..10 {
            let core = Tensor3::from_fn(ranks, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
            let factors: Vec<Matrix> = (0..3).map(|i| random_matrix(&mut rng, dims[i], ranks[i])).collect();
            let target = Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
            let beta = rng.random_range(0.5..5.0);
            let i = mode.axis();
            let split = random_matrix(&mut rng, dims[i] - 1, ranks[i]);
            let multiplier = random_matrix(&mut rng, dims[i] - 1, ranks[i]);
            let coupling =
                DifferenceCoupling { split: &split, multiplier: &multiplier, penalty: rng.random_range(0.5..5.0) };
            let with = |u: &Matrix| {
                let mut f = factors.clone();
                f[i] = u.clone();
                f
            };

            let fd = finite_difference(&factors[i], |u| {
                let f = with(u);
                tucker_fit_value(&core, [&f[0], &f[1], &f[2]], &target, beta).unwrap()
            });
            let g = grad_fbeta_u(&core, [&factors[0], &factors[1], &factors[2]], &target, beta, mode).unwrap();
            worst = worst.max((g - &fd).norm() / fd.norm());

            let fd = finite_difference(&factors[i], |u| {
                let f = with(u);
                u_subproblem_value(&core, [&f[0], &f[1], &f[2]], &target, beta, mode, coupling).unwrap()
            });
            let g = grad_u_subproblem(&core, [&factors[0], &factors[1], &factors[2]], &target, beta, mode, coupling)
                .unwrap();
            worst = worst.max((g - &fd).norm() / fd.norm());
            probes += 2;
        }
    }
    check(worst <= 1e-5, format!("{probes} probes, worst relative error {worst:.2e} (≤1e-5)"))
}

fn naive_tucker(core: &Tensor3, f: [&Matrix; 3]) -> Tensor3 {
    let dims = [f[0].nrows(), f[1].nrows(), f[2].nrows()];
    let [r1, r2, r3] = core.dims();
    Tensor3::from_fn(dims, |i, j, k| {
        let mut s = 0.0;
        for a in 0..r1 {
            for b in 0..r2 {
                for c in 0..r3 {
                    s += core.get(a, b, c) * f[0][(i, a)] * f[1][(j, b)] * f[2][(k, c)];
                }
            }
        }
        s
    })
    .unwrap()
}

fn prop(cases: u32) -> TestRunner {
    TestRunner::new(PropConfig { cases, failure_persistence: None, ..PropConfig::default() })
}

fn tensor_strategy() -> impl Strategy<Value = Tensor3> {
    (2usize..6, 2usize..6, 2usize..6).prop_flat_map(|(a, b, c)| {
        prop::collection::vec(-10.0f64..10.0, a * b * c).prop_map(move |v| Tensor3::from_vec([a, b, c], v).unwrap())
    })
}

fn criterion_6() -> Verdict {
    let mut notes = Vec::new();
    let fold = prop(200).run(&tensor_strategy(), |t| {
        for mode in Mode::ALL {
            let back = Tensor3::fold(&t.unfold(mode), mode, t.dims()).unwrap();
            prop_assert_eq!(&back, &t);
        }
        Ok(())
    });
    notes.push(format!("fold/unfold {}", if fold.is_ok() { "exact" } else { "MISMATCH" }));

    let mut rng = rng_from_seed(11);
    let mut tucker_err = 0.0f64;
    for _ in 0..50 {
        let ranks = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4)];
        let dims = [rng.random_range(3..7), rng.random_range(3..7), rng.random_range(3..7)];
        let core = Tensor3::from_fn(ranks, |_, _, _| rng.random_range(-2.0..2.0)).unwrap();
        let f: Vec<Matrix> = (0..3).map(|i| random_matrix(&mut rng, dims[i], ranks[i])).collect();
        let fast = tucker_reconstruct(&core, [&f[0], &f[1], &f[2]]).unwrap();
        let slow = naive_tucker(&core, [&f[0], &f[1], &f[2]]);
        tucker_err = tucker_err.max(fast.sub(&slow).unwrap().frobenius_norm() / slow.frobenius_norm().max(1e-300));
    }
    notes.push(format!("tucker {tucker_err:.1e}"));

    let spec = SyntheticSpec {
        dims: [14, 12, 10],
        block_count: 3,
        block_shape: (2, 12),
        missing_rate: 0.3,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let inst = generate(&spec).unwrap();
    let cfg = SolverConfig { max_outer: 60, ..SolverConfig::default() };
    let mut solver = Solver::new(&inst.full, &inst.observed, cfg).unwrap();
    let mut stiefel_err = 0.0f64;
    let mut omega_exact = true;
    for _ in 0..60 {
        let done = solver.step().unwrap();
        let st = solver.state();
        for u in &st.factors {
            stiefel_err = stiefel_err.max(orthonormality_error(u));
        }
        for (idx, &seen) in inst.observed.flags().iter().enumerate() {
            omega_exact &= !seen || st.x.as_slice()[idx] == inst.full.as_slice()[idx];
        }
        if done {
            break;
        }
    }
    notes.push(format!("stiefel {stiefel_err:.1e}"));
    notes.push(format!("X on Ω {}", if omega_exact { "exact" } else { "MISMATCH" }));

    let mut adj_err = 0.0f64;
    for _ in 0..50 {
        let (n, c) = (rng.random_range(2..9), rng.random_range(1..5));
        let a = random_matrix(&mut rng, n, c);
        let b = random_matrix(&mut rng, n - 1, c);
        let lhs = toeplitz_diff(&a).unwrap().dot(&b);
        let rhs = a.dot(&toeplitz_diff_adjoint(&b));
        adj_err = adj_err.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        let dims = [rng.random_range(2..5), rng.random_range(2..5), rng.random_range(2..5)];
        let r = Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let w = random_matrix(&mut rng, dims[0] - 1, dims[1] * dims[2] - 1);
        let lhs = mixed_difference(&r).unwrap().dot(&w);
        let rhs = r.inner(&mixed_difference_adjoint(&w, dims).unwrap()).unwrap();
        adj_err = adj_err.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }
    notes.push(format!("adjoint {adj_err:.1e}"));
    let ok = fold.is_ok() && tucker_err <= 1e-10 && stiefel_err <= 1e-8 && omega_exact && adj_err <= 1e-12;
    check(ok, notes.join(", "))
}

fn criterion_7() -> Verdict {
    let spec = SyntheticSpec { block_count: 0, missing_rate: 0.0, seed: 3, ..SyntheticSpec::default() };
    let inst = generate(&spec).map_err(|e| e.to_string())?;
    let cfg = SolverConfig { max_outer: 2000, ..SolverConfig::default() };
    let res = Solver::new(&inst.full, &inst.observed, cfg).and_then(|s| s.run()).map_err(|e| e.to_string())?;
    let y = inst.full.frobenius_norm();
    let rel = res.lowrank.sub(&inst.full).unwrap().frobenius_norm() / y;
    let r = res.anomaly.frobenius_norm() / y;
    check(
        rel <= 1e-3 && r <= 1e-6 && res.iterations <= 2000,
        format!("relative error {rel:.2e} (≤1e-3), ‖R‖/‖Y‖ {r:.1e} (≤1e-6), {} iterations", res.iterations),
    )
}

fn criterion_8() -> Verdict {
    let truth = Tensor3::from_vec([2, 1, 1], vec![2.0, 4.0]).unwrap();
    let est = Tensor3::from_vec([2, 1, 1], vec![3.0, 3.0]).unwrap();
    let all = ObservationMask::full([2, 1, 1]).unwrap();
    let m = imputation_metrics(&truth, &est, EvalScope::All, &all, None).map_err(|e| e.to_string())?;
    let hand_imputation = m.rmse == 1.0 && m.mape == Some(37.5) && m.mae == 1.0;

    let perfect = detection_metrics(&all, &truth, DetectionRule::default()).map_err(|e| e.to_string())?;
    let none = scores(0, 0, 5);
    let hand_detection = (perfect.precision, perfect.recall, perfect.f1) == (1.0, 1.0, 1.0)
        && (none.precision, none.recall, none.f1) == (1.0, 0.0, 0.0);
    let flag_all = scores(98, 902, 0);
    let flag_ok = (flag_all.f1 - 2.0 * 0.098 / 1.098).abs() < 1e-12;

    let strategy = (1usize..200)
        .prop_flat_map(|n| (prop::collection::vec(-100.0f64..100.0, n), prop::collection::vec(-100.0f64..100.0, n)));
    let power_mean = prop(100).run(&strategy, |(a, b)| {
        let n = a.len();
        let t = Tensor3::from_vec([n, 1, 1], a).unwrap();
        let e = Tensor3::from_vec([n, 1, 1], b).unwrap();
        let m = imputation_metrics(&t, &e, EvalScope::All, &ObservationMask::full([n, 1, 1]).unwrap(), None)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(m.rmse >= m.mae * (1.0 - 1e-12));
        Ok(())
    });
    check(
        hand_imputation && hand_detection && flag_ok && power_mean.is_ok(),
        format!(
            "hand imputation {hand_imputation}, hand detection {hand_detection}, flag-all F1 {:.6}, RMSE ≥ MAE on 100 cases {}",
            flag_all.f1,
            power_mean.is_ok()
        ),
    )
}

fn exact_tucker(rng: &mut Rng64, dims: [usize; 3], ranks: [usize; 3]) -> Tensor3 {
    let core = Tensor3::from_fn(ranks, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
    let f: Vec<Matrix> = (0..3).map(|i| random_matrix(rng, dims[i], ranks[i])).collect();
    tucker_reconstruct(&core, [&f[0], &f[1], &f[2]]).unwrap()
}

fn criterion_9() -> Verdict {
    let mut rng = rng_from_seed(21);
    let crit = RankCriterion::new(1.0 - 1e-12).unwrap();
    let mut exact_hits = 0;
    let trials = 20;
    for _ in 0..trials {
        let dims = [rng.random_range(6..10), rng.random_range(6..10), rng.random_range(6..10)];
        let r = [rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4)];
        // A Tucker tensor has mode rank rᵢ only when rᵢ ≤ r_j·r_k.
        let r = [r[0].min(r[1] * r[2]), r[1].min(r[0] * r[2]), r[2].min(r[0] * r[1])];
        let x = exact_tucker(&mut rng, dims, r);
        exact_hits += usize::from(select_rank(&x, crit).map_err(|e| e.to_string())? == r);
    }
    let thetas = [0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 0.99, 0.999, 1.0];
    let mut monotone = true;
    for _ in 0..20 {
        let dims = [rng.random_range(4..8), rng.random_range(4..8), rng.random_range(4..8)];
        let x = Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        let ranks: Vec<[usize; 3]> =
            thetas.iter().map(|&t| select_rank(&x, RankCriterion::new(t).unwrap()).unwrap()).collect();
        monotone &= ranks.windows(2).all(|w| (0..3).all(|i| w[0][i] <= w[1][i]));
    }
    check(
        exact_hits == trials && monotone,
        format!("exact rank on {exact_hits}/{trials} tensors, monotone in θ on 20 tensors: {monotone}"),
    )
}

fn tslto(cwd: &Path, args: &[&str]) -> Result<(), String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_tslto")).current_dir(cwd).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn same_files(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).map_err(|e| e.to_string())?.map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for name in &names {
        if fs::read(a.join(name)).map_err(|e| e.to_string())? != fs::read(b.join(name)).map_err(|e| e.to_string())? {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
    }
    Ok(names.len())
}

fn criterion_10() -> Verdict {
    let roots = [TempDir::new().map_err(|e| e.to_string())?, TempDir::new().map_err(|e| e.to_string())?];
    for root in &roots {
        tslto(root.path(), &["generate", "--seed", "42", "--missing_rate", "0.3", "--out_dir", "data"])?;
        tslto(root.path(), &["solve", "--data_dir", "data", "--out_dir", "run", "--jobs", "1", "--max_outer", "300"])?;
    }
    let [a, b] = [roots[0].path(), roots[1].path()];
    let g = same_files(&a.join("data"), &b.join("data")).map_err(|e| format!("generate: {e}"))?;
    let s = same_files(&a.join("run"), &b.join("run")).map_err(|e| format!("solve: {e}"))?;
    Ok(format!("{g} generate files and {s} solve files byte-identical"))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 10] = [
        ("synthetic reproduction at 30% missing", criterion_1),
        ("recall drop from 10% to 80% missing", criterion_2),
        ("ablation variant g forced F1", criterion_3),
        ("prox oracle equivalence", criterion_4),
        ("gradient finite differences", criterion_5),
        ("structural invariants", criterion_6),
        ("exact recovery", criterion_7),
        ("metrics unit checks", criterion_8),
        ("rank selection", criterion_9),
        ("determinism", criterion_10),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, (name, run)) in criteria.iter().enumerate().map(|(i, c)| (i + 1, c)) {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("criterion {n:2} PASS  {name}: {d} [{secs:.1}s]"),
            Err(d) => {
                println!("criterion {n:2} FAIL  {name}: {d} [{secs:.1}s]");
                failed.push(n);
            }
        }
    }
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        if std::env::var("TSLTO_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
        return;
    }
    println!("acceptance: all criteria passed");
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::time::Instant;

use cpsdre_cli::commands::{ControlRecord, DecomposeSummary, TensorSidecar};
use cpsdre_cli::report::ComparisonReport;
use cpsdre_core::cp::{als, pgs, AlsConfig, PgsConfig};
use cpsdre_core::sdre::*;
use cpsdre_core::tensor::relative_error;
use cpsdre_core::{khatri_rao, seeded_rng, CpFactors, Matrix, Tensor3, Vector};
use rand::RngExt;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

fn tensor_algebra() -> Outcome {
    let start = Instant::now();
    let mut rng = seeded_rng(1);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for ni in 1..=7 {
        for nj in 1..=6 {
            for nk in 1..=5 {
                let d = [ni, nj, nk];
                let t = Tensor3::from_fn(d, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
                for mode in 1..=3 {
                    let u = t.unfold(mode).unwrap();
                    let back = Tensor3::fold(&u, mode, d).unwrap();
                    let diff = back.sub(&t).unwrap().frob_norm() / t.frob_norm();
                    worst = worst.max(diff);
                    // loop oracle for the unfolding
                    for r in 0..u.nrows() {
                        for c in 0..u.ncols() {
                            let e = match mode {
                                1 => t.get(r, c % nj, c / nj),
                                2 => t.get(c % ni, r, c / ni),
                                _ => t.get(c % ni, c / ni, r),
                            };
                            worst = worst.max((u[(r, c)] - e).abs() / t.frob_norm());
                        }
                    }
                }
                let rank = 1 + (ni + nj + nk) % 4;
                let f = CpFactors::random(d, rank, &mut rng).unwrap();
                let kr = khatri_rao(&f.z, &f.y).unwrap();
                for c in 0..rank {
                    for p in 0..nk {
                        for q in 0..nj {
                            let e = f.z[(p, c)] * f.y[(q, c)];
                            worst = worst.max((kr[(p * nj + q, c)] - e).abs() / kr.norm());
                        }
                    }
                }
                let t = f.reconstruct();
                let d_mat = Matrix::from_diagonal(&f.alpha);
                let m1 = &f.x * &d_mat * kr.transpose();
                let m2 = &f.y * &d_mat * khatri_rao(&f.z, &f.x).unwrap().transpose();
                let m3 = &f.z * &d_mat * khatri_rao(&f.y, &f.x).unwrap().transpose();
                worst = worst
                    .max(rel(&t.unfold(1).unwrap(), &m1))
                    .max(rel(&t.unfold(2).unwrap(), &m2))
                    .max(rel(&t.unfold(3).unwrap(), &m3));
                cases += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 5.0,
        format!("{cases} shapes up to 7x6x5, worst relative deviation {worst:.2e} (tol 1e-12), {secs:.2} s (limit 5 s)"),
    )
}

fn synthetic() -> Tensor3 {
    let mut rng = seeded_rng(2024);
    CpFactors::random([20, 20, 20], 3, &mut rng).unwrap().reconstruct()
}

fn als_recovery() -> Outcome {
    let t = synthetic();
    let start = Instant::now();
    let (f, trace) = als(&t, &AlsConfig { rank: 3, max_iters: 500, ..Default::default() }, None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = relative_error(&t, &f).unwrap();
    outcome(
        err < 1e-6 && trace.iterations() <= 500 && secs < 10.0,
        format!("20x20x20 rank 3: error {err:.2e} (tol 1e-6) after {} iterations, {secs:.2} s (limit 10 s)", trace.iterations()),
    )
}

fn pgs_rank() -> Outcome {
    let t = synthetic();
    let start = Instant::now();
    let mut ranks = Vec::new();
    for seed in 0..5 {
        let r = pgs(&t, &PgsConfig { rank_upper: 10, seed, ..Default::default() }, None).unwrap();
        ranks.push(r.rank_estimate);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        ranks.iter().all(|&r| r == 3) && secs < 60.0,
        format!("rank_upper 10, seeds 0..5: ranks {ranks:?} (expected all 3), {secs:.2} s (limit 60 s)"),
    )
}

fn care() -> Outcome {
    let start = Instant::now();
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let s = solve_care(&CareProblem::new(one(1.0), one(1.0), one(1.0), one(1.0)).unwrap()).unwrap();
    let scalar_err = (s.pi[(0, 0)] - (1.0 + 2f64.sqrt())).abs();
    let n = 4;
    let lyap = solve_care(&CareProblem::new(-Matrix::identity(n, n), Matrix::zeros(n, 1), Matrix::identity(n, n), one(1.0)).unwrap()).unwrap();
    let lyap_err = (lyap.pi - Matrix::identity(n, n) * 0.5).amax();
    let mut rng = seeded_rng(4);
    let mut worst_res = 0.0f64;
    for _ in 0..50 {
        let a = Matrix::from_fn(4, 4, |_, _| rng.random_range(-2.0..2.0));
        let b = Matrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
        let q = c.transpose() * c + Matrix::identity(4, 4);
        let p = CareProblem::new(a, b, q.clone(), Matrix::identity(2, 2)).unwrap();
        let s = solve_care(&p).unwrap();
        worst_res = worst_res.max(p.residual(&s.pi) / q.norm());
    }
    let mut agree = 0;
    for _ in 0..100 {
        let a = Matrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let b = Matrix::from_fn(2, 1, |_, _| rng.random_range(-1.0..1.0));
        let k = Matrix::from_fn(1, 2, |_, _| rng.random_range(-2.0..2.0));
        let m = &a + &b * &k;
        let oracle = m.trace() < 0.0 && m.determinant() > 0.0;
        let verdict = stability_margin(&a, &b, &k).unwrap().verdict;
        let expected = if oracle { Verdict::Stable } else { Verdict::Unstable };
        agree += (verdict == expected) as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        scalar_err < 1e-12 && lyap_err < 1e-12 && worst_res < 1e-9 && agree == 100 && secs < 5.0,
        format!(
            "scalar |pi - (1+sqrt 2)| = {scalar_err:.1e}, Lyapunov {lyap_err:.1e} (tol 1e-12); 4x4 residual/||Q|| max {worst_res:.1e} (tol 1e-9); Routh-Hurwitz agreement {agree}/100; {secs:.2} s (limit 5 s)"
        ),
    )
}

struct PipelineRun {
    dir: tempfile::TempDir,
    secs: f64,
    ok: bool,
    stderr: String,
}

fn run_pipeline(config: serde_json::Value) -> PipelineRun {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = common::write_config(dir.path(), config, &out);
    let start = Instant::now();
    let o = common::cpsdre(&["pipeline", "--config", cfg.to_str().unwrap(), "--seed", "42"]);
    PipelineRun {
        secs: start.elapsed().as_secs_f64(),
        ok: o.status.success(),
        stderr: String::from_utf8_lossy(&o.stderr).into_owned(),
        dir,
    }
}

fn read<T: for<'de> serde::Deserialize<'de>>(run: &PipelineRun, name: &str) -> T {
    let p = run.dir.path().join("out").join(name);
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn default_pipeline(run: &PipelineRun) -> Outcome {
    if !run.ok {
        return outcome(false, format!("pipeline failed: {}", run.stderr.trim()));
    }
    let tensor: TensorSidecar = read(run, "snapshots.json");
    let dec: DecomposeSummary = read(run, "decompose.json");
    let t_star: Vec<(String, Option<f64>)> = ["pgs", "pgs_als1", "pgs_als2"]
        .iter()
        .map(|v| (v.to_string(), read::<ControlRecord>(run, &format!("control_{v}.json")).summary.converged_at))
        .collect();
    let converged = t_star.iter().all(|(_, t)| matches!(t, Some(t) if *t < 1.0));
    let ordered = converged && t_star.windows(2).all(|w| w[0].1.unwrap() <= w[1].1.unwrap());
    let rank_ok = (1..=3).contains(&dec.rank_estimate);
    let dims_ok = tensor.dims == [101, 550, 50];
    let times: Vec<String> = t_star
        .iter()
        .map(|(n, t)| format!("{n} {}", t.map(|t| format!("{t:.4}")).unwrap_or_else(|| "none".into())))
        .collect();
    outcome(
        dims_ok && rank_ok && converged && ordered && run.secs < 600.0,
        format!(
            "tensor {:?}; PGS rank {} (accepted 1..=3, 2 expected); t* {} (ordering {}); total {:.0} s (limit 600 s)",
            tensor.dims,
            dec.rank_estimate,
            times.join(", "),
            if ordered { "holds" } else { "violated" },
            run.secs
        ),
    )
}

fn cost_reduction(run: &PipelineRun) -> Outcome {
    if !run.ok {
        return outcome(false, "pipeline failed");
    }
    let rep: ComparisonReport = read(run, "report.json");
    let full = rep.rows.iter().find(|r| r.model == "full").unwrap();
    let Some(r2) = rep.rows.iter().find(|r| r.model == "reduced" && r.r_used == 2) else {
        return outcome(false, "no reduced run with r = 2");
    };
    let reduced: Vec<_> = rep.rows.iter().filter(|r| r.model == "reduced").collect();
    let cost_ok = reduced.iter().all(|r| r.j < full.j);
    let ratio = r2.care_ms_mean / full.care_ms_mean;
    let costs: Vec<String> = reduced.iter().map(|r| format!("{} {:.4e}", r.method, r.j)).collect();
    outcome(
        ratio < 1e-3 && cost_ok,
        format!(
            "per-step Riccati time r=2 ({}) {:.4} ms vs full n=101 {:.2} ms, ratio {ratio:.2e} (limit 1e-3); J_full {:.4e} vs {}",
            r2.method,
            r2.care_ms_mean,
            full.care_ms_mean,
            full.j,
            costs.join(", ")
        ),
    )
}

fn determinism(a: &PipelineRun, b: &PipelineRun) -> Outcome {
    if !a.ok || !b.ok {
        return outcome(false, "pipeline failed");
    }
    let (pa, pb) = (a.dir.path().join("out"), b.dir.path().join("out"));
    let files = common::normalized_artifacts(&pa).len();
    let diff = common::differing(&pa, &pb);
    outcome(
        diff.is_empty() && files > 0,
        format!("{files} artifacts compared with timing fields removed; differing: {diff:?}"),
    )
}

fn scaling_invariance() -> Outcome {
    let one = |v: f64| Matrix::from_element(1, 1, v);
    let a = |x: &Vector| Ok(one(x[0] * x[0]));
    let x0 = Vector::from_element(1, 0.5);
    let opts = SdreOptions { nt: 21, t_span: (0.0, 1.0), record_gains: true, ..Default::default() };
    let base = sdre_trajectory(&a, &one(1.0), &one(1.0), &one(1.0), &x0, &opts).unwrap();
    let scaled = sdre_trajectory(&a, &one(1.0), &one(10.0), &one(10.0), &x0, &opts).unwrap();
    let (g1, g2) = (base.gains.unwrap(), scaled.gains.unwrap());
    let worst = g1.iter().zip(&g2).map(|(p, q)| (p - q).amax()).fold(0.0, f64::max);
    outcome(
        g1.len() == 20 && worst < 1e-10,
        format!("{} steps, max |K - K_scaled| = {worst:.1e} (tol 1e-10)", g1.len()),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("tensor algebra oracles", tensor_algebra()));
    results.push(("ALS recovery", als_recovery()));
    results.push(("PGS rank discovery", pgs_rank()));
    results.push(("CARE correctness", care()));
    let config = common::shipped_config("default.json");
    let first = run_pipeline(config.clone());
    results.push(("default pipeline (qualitative)", default_pipeline(&first)));
    results.push(("cost reduction", cost_reduction(&first)));
    let second = run_pipeline(config);
    results.push(("determinism", determinism(&first, &second)));
    results.push(("scaling invariance", scaling_invariance()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += (!o.pass) as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cpsdre_core::ac::{assemble_a, build_snapshot_tensor, laplacian, simulate_from, SnapshotMeta};
use cpsdre_core::cp::{als, pgs, pgs_alsk_from, PgsResult};
use cpsdre_core::rom::{projection_basis, reduce_dynamics, BasisSource};
use cpsdre_core::sdre::{sdre_trajectory, Propagation, SdreOptions, SdreRun, SdreSummary};
use cpsdre_core::tensor::{read_t3b, relative_error, write_t3b};
use cpsdre_core::{CpFactors, Error, Matrix, Tensor3, Vector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ActuationSpec, FullIntegrator, Method, PipelineConfig, WeightSpec};
use crate::{CliError, Result};

pub const SNAPSHOTS: &str = "snapshots.t3b";
pub const SNAPSHOTS_META: &str = "snapshots.json";
pub const DECOMPOSE_SUMMARY: &str = "decompose.json";
/// Name of the full-order control run.
pub const FULL: &str = "full";

fn out_path(cfg: &PipelineConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn ensure_output_dir(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::Core(Error::io(&cfg.output_dir, e)))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Core(Error::io(path, e)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Core(Error::io(path, e)))?;
    serde_json::from_str(&text).map_err(|e| CliError::Core(Error::format(path, e.to_string())))
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Grid-by-time CSV: first column `x`, one column per time point.
fn write_field_csv(path: &Path, grid: &[f64], times: &[f64], states: &Matrix) -> Result<()> {
    let mut out = String::from("x");
    for t in times {
        out.push(',');
        out.push_str(&fmt(*t));
    }
    out.push('\n');
    for (i, x) in grid.iter().enumerate() {
        out.push_str(&fmt(*x));
        for v in states.row(i).iter() {
            out.push(',');
            out.push_str(&fmt(*v));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub nx: usize,
    pub nt: usize,
    pub integrator: cpsdre_core::ac::Integrator,
    pub max_abs: f64,
    pub wall_ms: f64,
}

/// Uncontrolled trajectory: `trajectory.csv` and `trajectory.t3b`
/// (dims `nx x nt x 1`).
pub fn simulate(cfg: &PipelineConfig, nt: Option<usize>) -> Result<SimulateSummary> {
    let mut ac = cfg.snapshot.ac.clone();
    if let Some(nt) = nt {
        ac.nt = nt;
    }
    ac.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let v0 = ac.initial_condition()?;
    ensure_output_dir(cfg)?;
    let start = Instant::now();
    let traj = simulate_from(&ac, &v0, None)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let grid = ac.grid();
    let times = ac.times();
    write_field_csv(&out_path(cfg, "trajectory.csv"), grid.as_slice(), times.as_slice(), &traj)?;
    let t = Tensor3::new([ac.nx, ac.nt, 1], traj.as_slice().to_vec())?;
    write_t3b(&out_path(cfg, "trajectory.t3b"), &t)?;
    let summary = SimulateSummary {
        nx: ac.nx,
        nt: ac.nt,
        integrator: ac.integrator,
        max_abs: traj.amax(),
        wall_ms,
    };
    write_json(&out_path(cfg, "simulate.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorSidecar {
    pub dims: [usize; 3],
    pub file: String,
    pub meta: SnapshotMeta,
    pub wall_ms: f64,
}

/// Snapshot tensor `snapshots.t3b` with its provenance in `snapshots.json`.
pub fn build_tensor(cfg: &PipelineConfig) -> Result<TensorSidecar> {
    ensure_output_dir(cfg)?;
    let start = Instant::now();
    let (t, meta) = build_snapshot_tensor(&cfg.snapshot)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    write_t3b(&out_path(cfg, SNAPSHOTS), &t)?;
    let sidecar = TensorSidecar {
        dims: t.dims(),
        file: SNAPSHOTS.into(),
        meta,
        wall_ms,
    };
    write_json(&out_path(cfg, SNAPSHOTS_META), &sidecar)?;
    Ok(sidecar)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantRecord {
    pub name: String,
    pub rank: usize,
    pub rel_error: f64,
    pub iterations: usize,
    pub factor_file: String,
    pub trace_file: String,
    pub factor_hash: String,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecomposeSummary {
    pub method: Method,
    pub tensor_dims: [usize; 3],
    /// Rank found by the sparse solver, or the fixed ALS rank.
    pub rank_estimate: usize,
    pub variants: Vec<VariantRecord>,
    pub notes: Vec<String>,
    pub warnings: Vec<String>,
}

fn load_snapshots(cfg: &PipelineConfig) -> Result<Tensor3> {
    let path = out_path(cfg, SNAPSHOTS);
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "{} not found; run build-tensor first",
            path.display()
        )));
    }
    Ok(read_t3b(&path)?)
}

/// Factorizations of the snapshot tensor: `factors_<variant>.bin`,
/// `trace_<variant>.csv` and `decompose.json`.
pub fn decompose(cfg: &PipelineConfig) -> Result<DecomposeSummary> {
    let t = load_snapshots(cfg)?;
    ensure_output_dir(cfg)?;
    let dc = &cfg.decomposition;
    let mut results: Vec<(String, CpFactors, cpsdre_core::cp::SolveTrace, f64)> = Vec::new();
    let rank_estimate;
    match dc.method {
        Method::Als => {
            let start = Instant::now();
            let (f, trace) = als(&t, &dc.als, None)?;
            rank_estimate = dc.als.rank;
            results.push(("als".into(), f, trace, start.elapsed().as_secs_f64() * 1e3));
        }
        Method::Pgs | Method::PgsAlsk => {
            let start = Instant::now();
            let p: PgsResult = pgs(&t, &dc.pgs, None)?;
            let pgs_ms = start.elapsed().as_secs_f64() * 1e3;
            rank_estimate = p.rank_estimate;
            if rank_estimate == 0 {
                return Err(CliError::Core(Error::Numerical(
                    "sparse decomposition removed every term (rank 0)".into(),
                )));
            }
            results.push(("pgs".into(), p.truncated()?, p.trace.clone(), pgs_ms));
            if dc.method == Method::PgsAlsk {
                for k in 1..=dc.k {
                    let start = Instant::now();
                    let r = pgs_alsk_from(&t, p.clone(), k, &dc.als)?;
                    let ms = pgs_ms + start.elapsed().as_secs_f64() * 1e3;
                    results.push((format!("pgs_als{k}"), r.factors, r.trace, ms));
                }
            }
        }
    }
    let mut variants = Vec::new();
    let mut notes = Vec::new();
    let mut warnings = Vec::new();
    for (name, f, trace, wall_ms) in results {
        let factor_file = format!("factors_{name}.bin");
        let trace_file = format!("trace_{name}.csv");
        f.write(&out_path(cfg, &factor_file))?;
        trace.write_csv(&out_path(cfg, &trace_file))?;
        notes.extend(trace.notes.iter().map(|n| format!("{name}: {n}")));
        warnings.extend(trace.warnings.iter().map(|w| format!("{name}: {w}")));
        variants.push(VariantRecord {
            rank: f.rank(),
            rel_error: relative_error(&t, &f)?,
            iterations: trace.iterations(),
            factor_hash: f.content_hash(),
            name,
            factor_file,
            trace_file,
            wall_ms,
        });
    }
    let summary = DecomposeSummary {
        method: dc.method,
        tensor_dims: t.dims(),
        rank_estimate,
        variants,
        notes,
        warnings,
    };
    write_json(&out_path(cfg, DECOMPOSE_SUMMARY), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlRecord {
    pub name: String,
    /// `"full"` or `"reduced"`.
    pub model: String,
    /// State dimension of the controlled model.
    pub n: usize,
    pub m: usize,
    pub nx: usize,
    pub q: WeightSpec,
    pub r: WeightSpec,
    pub b: ActuationSpec,
    pub propagation: String,
    pub nt: usize,
    pub t_span: [f64; 2],
    pub stop_tol: f64,
    pub basis_file: Option<String>,
    pub basis_singular_values: Option<Vec<f64>>,
    pub max_care_residual: f64,
    pub run_file: String,
    pub states_file: String,
    pub summary: SdreSummary,
}

impl ControlRecord {
    pub fn path(cfg: &PipelineConfig, name: &str) -> PathBuf {
        out_path(cfg, &format!("control_{name}.json"))
    }
}

struct ControlJob {
    name: String,
    factors: Option<CpFactors>,
    source: Option<BasisSource>,
}

/// Closed-loop SDRE runs for the full model and every reduced variant.
/// Runs fan out over the rayon pool; results keep the job order.
pub fn control(cfg: &PipelineConfig) -> Result<Vec<ControlRecord>> {
    let summary_path = out_path(cfg, DECOMPOSE_SUMMARY);
    if !summary_path.is_file() {
        return Err(CliError::Config(format!("{} not found; run decompose first", summary_path.display())));
    }
    let dec: DecomposeSummary = read_json(&summary_path)?;
    ensure_output_dir(cfg)?;
    let mut jobs = Vec::new();
    if cfg.control.run_full {
        jobs.push(ControlJob {
            name: FULL.into(),
            factors: None,
            source: None,
        });
    }
    for v in &dec.variants {
        let f = CpFactors::read(&out_path(cfg, &v.factor_file))?;
        jobs.push(ControlJob {
            name: v.name.clone(),
            source: Some(BasisSource {
                solver: v.name.clone(),
                rank_estimate: dec.rank_estimate,
                factor_hash: f.content_hash(),
            }),
            factors: Some(f),
        });
    }
    jobs.par_iter().map(|job| run_control_job(cfg, job)).collect()
}

fn run_control_job(cfg: &PipelineConfig, job: &ControlJob) -> Result<ControlRecord> {
    let ac = &cfg.snapshot.ac;
    let cc = &cfg.control;
    let v0 = ac.initial_condition()?;
    let grid = ac.grid();
    let b = cc.b.build(&grid);
    let m = b.ncols();
    let r_mat = cc.r.build(m);
    let assemble = |v: &Vector| assemble_a(v, ac);
    let context = |e: Error| CliError::Core(Error::Numerical(format!("control run {}: {e}", job.name)));
    let (run, n, propagation, basis): (SdreRun, usize, String, Option<_>) = match &job.factors {
        None => {
            let (propagation, label) = match cc.full_integrator {
                FullIntegrator::Explicit => (Propagation::Explicit, "explicit"),
                FullIntegrator::SemiImplicitClosedLoop => (
                    Propagation::SemiImplicit {
                        stiff: laplacian(ac.nx, ac.dx())? * ac.nu,
                    },
                    "semi_implicit_closed_loop",
                ),
            };
            let opts = SdreOptions {
                nt: cc.nt,
                t_span: (cc.t_span[0], cc.t_span[1]),
                stop_tol: cc.stop_tol,
                propagation,
                record_gains: false,
            };
            let q = cc.q.build(ac.nx);
            let run = sdre_trajectory(&assemble, &b, &q, &r_mat, &v0, &opts).map_err(context)?;
            (run, ac.nx, label.to_string(), None)
        }
        Some(f) => {
            let rm = projection_basis(f, f.rank())?.with_source(job.source.clone().unwrap_or_default());
            let rd = reduce_dynamics(&rm, assemble, &b)?;
            let w0 = rm.restrict(&v0)?;
            let q = cc.q.build(rm.r());
            let opts = SdreOptions {
                nt: cc.nt,
                t_span: (cc.t_span[0], cc.t_span[1]),
                stop_tol: cc.stop_tol,
                propagation: Propagation::Explicit,
                record_gains: false,
            };
            let run = sdre_trajectory(&|w| rd.a_red(w), &rd.b_red, &q, &r_mat, &w0, &opts).map_err(context)?;
            let basis_file = format!("basis_{}.bin", job.name);
            rm.write(&out_path(cfg, &basis_file))?;
            let lifted = rm.lift_columns(&run.states)?;
            let r = rm.r();
            (run, r, "explicit".to_string(), Some((basis_file, rm.singular_values.clone(), lifted)))
        }
    };
    let q = cc.q.build(n);
    let run_file = format!("control_{}.csv", job.name);
    write_text(&out_path(cfg, &run_file), &run.to_csv(&q, &r_mat)?)?;
    let states_file = format!("states_{}.csv", job.name);
    let states = basis.as_ref().map(|b| &b.2).unwrap_or(&run.states);
    write_field_csv(&out_path(cfg, &states_file), grid.as_slice(), &run.times, states)?;
    let record = ControlRecord {
        name: job.name.clone(),
        model: if job.factors.is_some() { "reduced" } else { "full" }.into(),
        n,
        m,
        nx: ac.nx,
        q: cc.q,
        r: cc.r,
        b: cc.b,
        propagation,
        nt: cc.nt,
        t_span: cc.t_span,
        stop_tol: cc.stop_tol,
        basis_file: basis.as_ref().map(|b| b.0.clone()),
        basis_singular_values: basis.map(|b| b.1),
        max_care_residual: run.residuals.iter().cloned().fold(0.0, f64::max),
        run_file,
        states_file,
        summary: run.summary(),
    };
    write_json(&ControlRecord::path(cfg, &job.name), &record)?;
    Ok(record)
}

/// Runs every step in order.
pub fn pipeline(cfg: &PipelineConfig, mut log: impl Write) -> Result<crate::report::ComparisonReport> {
    let s = simulate(cfg, None)?;
    writeln!(log, "simulate: {} x {} trajectory, max |v| = {:.4}", s.nx, s.nt, s.max_abs).ok();
    let t = build_tensor(cfg)?;
    writeln!(log, "build-tensor: dims {:?}", t.dims).ok();
    let d = decompose(cfg)?;
    writeln!(log, "decompose: rank estimate {}", d.rank_estimate).ok();
    let c = control(cfg)?;
    for r in &c {
        writeln!(log, "control {}: J = {:.6e}, converged_at = {:?}", r.name, r.summary.j_quadrature, r.summary.converged_at).ok();
    }
    let rep = crate::report::report(cfg)?;
    writeln!(log, "report: {} rows", rep.rows.len()).ok();
    Ok(rep)
}

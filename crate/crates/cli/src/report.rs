//! Cost and timing comparison of the control runs against the full model.

use serde::{Deserialize, Serialize};

use crate::commands::{read_json, ControlRecord, DecomposeSummary, DECOMPOSE_SUMMARY, FULL};
use crate::config::PipelineConfig;
use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub model: String,
    /// State dimension of the controlled model.
    pub r_used: usize,
    pub j: f64,
    pub j_terminal: f64,
    pub j_over_j_full: f64,
    /// `(J_full - J) / J_full`
    pub cost_gap_ratio: f64,
    pub converged_at: Option<f64>,
    /// Wall time of the whole closed-loop run (single-threaded).
    pub cpu_ms: f64,
    pub cpu_ratio: f64,
    pub care_ms_mean: f64,
    /// Per-step Riccati time relative to the full model.
    pub care_ratio: f64,
    pub steps: usize,
    /// `O(N_t N_x^3)` or `O(n_t R^3)` with the recorded counts.
    pub complexity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub threads: usize,
    pub q: String,
    pub r: String,
    pub b: String,
    pub full_integrator: String,
    pub reduced_integrator: String,
    pub rank_estimate: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ReportRow>,
    pub environment: Environment,
    /// Timing columns are measurements and differ between runs.
    pub timing_note: String,
}

fn complexity(model: &str, steps: usize, n: usize) -> String {
    let count = steps as f64 * (n as f64).powi(3);
    if model == FULL {
        format!("O(N_t N_x^3), N_t={steps}, N_x={n}: {count:.3e}")
    } else {
        format!("O(n_t R^3), n_t={steps}, R={n}: {count:.3e}")
    }
}

/// Builds the comparison from recorded runs; `full` must be among them.
pub fn build_report(records: &[ControlRecord], rank_estimate: Option<usize>) -> Result<ComparisonReport> {
    let full = records
        .iter()
        .find(|r| r.model == FULL)
        .ok_or_else(|| CliError::Config("report needs the full-order baseline run (control.run_full)".into()))?;
    let jf = full.summary.j_quadrature;
    let rows = records
        .iter()
        .map(|r| {
            let s = &r.summary;
            ReportRow {
                method: r.name.clone(),
                model: r.model.clone(),
                r_used: r.n,
                j: s.j_quadrature,
                j_terminal: s.j_terminal,
                j_over_j_full: s.j_quadrature / jf,
                cost_gap_ratio: (jf - s.j_quadrature) / jf,
                converged_at: s.converged_at,
                cpu_ms: s.wall_ms,
                cpu_ratio: s.wall_ms / full.summary.wall_ms,
                care_ms_mean: s.care_ms_mean,
                care_ratio: s.care_ms_mean / full.summary.care_ms_mean,
                steps: s.steps,
                complexity: complexity(&r.model, s.steps, r.n),
            }
        })
        .collect();
    let environment = Environment {
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
        threads: rayon::current_num_threads(),
        q: format!("{:?}", full.q),
        r: format!("{:?}", full.r),
        b: format!("{:?}", full.b),
        full_integrator: full.propagation.clone(),
        reduced_integrator: records
            .iter()
            .find(|r| r.model != FULL)
            .map(|r| r.propagation.clone())
            .unwrap_or_default(),
        rank_estimate,
    };
    Ok(ComparisonReport {
        rows,
        environment,
        timing_note: "cpu_ms, cpu_ratio, care_ms_mean and care_ratio are wall-clock measurements (nondeterministic timing)"
            .into(),
    })
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "method,model,r_used,J,J_terminal,J_over_J_full,cost_gap_ratio,converged_at,cpu_ms,cpu_ratio,care_ms_mean,care_ratio,steps,complexity\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:e},{:e},{:e},{:e},{},{:.3},{:e},{:.6},{:e},{},\"{}\"\n",
                r.method,
                r.model,
                r.r_used,
                r.j,
                r.j_terminal,
                r.j_over_j_full,
                r.cost_gap_ratio,
                r.converged_at.map(|t| format!("{t:e}")).unwrap_or_default(),
                r.cpu_ms,
                r.cpu_ratio,
                r.care_ms_mean,
                r.care_ratio,
                r.steps,
                r.complexity
            ));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let e = &self.environment;
        let mut out = String::from("# Closed-loop cost comparison\n\n");
        out.push_str(&format!(
            "Q = {}, R = {}, B = {}; full model `{}`, reduced models `{}`; {} thread(s), {}/{}.\n\n",
            e.q, e.r, e.b, e.full_integrator, e.reduced_integrator, e.threads, e.os, e.arch
        ));
        out.push_str("| method | r_used | J | J / J_full | cost_gap_ratio | converged_at | cpu_ms | cpu_ratio | care_ms_mean | care_ratio | complexity |\n");
        out.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {:.6e} | {:.6e} | {:.6e} | {} | {:.1} | {:.3e} | {:.4} | {:.3e} | {} |\n",
                r.method,
                r.r_used,
                r.j,
                r.j_over_j_full,
                r.cost_gap_ratio,
                r.converged_at.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into()),
                r.cpu_ms,
                r.cpu_ratio,
                r.care_ms_mean,
                r.care_ratio,
                r.complexity
            ));
        }
        out.push_str(&format!("\n{}.\n", self.timing_note));
        out
    }
}

/// Reads `control_*.json` for the full model and every variant and writes
/// `report.json`, `report.csv` and `report.md`.
pub fn report(cfg: &PipelineConfig) -> Result<ComparisonReport> {
    let dec_path = cfg.output_dir.join(DECOMPOSE_SUMMARY);
    let dec: Option<DecomposeSummary> = if dec_path.is_file() { Some(read_json(&dec_path)?) } else { None };
    let mut names = vec![FULL.to_string()];
    match &dec {
        Some(d) => names.extend(d.variants.iter().map(|v| v.name.clone())),
        None => names.extend(cfg.decomposition.variants()),
    }
    let mut records = Vec::new();
    for name in names {
        let path = ControlRecord::path(cfg, &name);
        if path.is_file() {
            records.push(read_json::<ControlRecord>(&path)?);
        } else if name == FULL {
            return Err(CliError::Config(format!("{} not found; run control with run_full first", path.display())));
        }
    }
    let rep = build_report(&records, dec.map(|d| d.rank_estimate))?;
    let dir = &cfg.output_dir;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::Core(cpsdre_core::Error::io(p, e)))
    };
    write("report.json", serde_json::to_string_pretty(&rep).expect("serializable") + "\n")?;
    write("report.csv", rep.to_csv())?;
    write("report.md", rep.to_markdown())?;
    Ok(rep)
}

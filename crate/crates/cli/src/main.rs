use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cpsdre_cli::{commands, report, CliError, PipelineConfig};

#[derive(Parser)]
#[command(name = "cpsdre", version, about = "Sparse CP reduced-order SDRE control of the Allen-Cahn equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads (default: logical cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled trajectory.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of time points.
        #[arg(long)]
        nt: Option<usize>,
    },
    /// Snapshot tensor over sampled control strengths.
    BuildTensor {
        #[command(flatten)]
        common: Common,
    },
    /// CP factorizations of the snapshot tensor.
    Decompose {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-loop SDRE runs, full and reduced.
    Control {
        #[command(flatten)]
        common: Common,
    },
    /// Cost and timing comparison table.
    Report {
        #[command(flatten)]
        common: Common,
    },
    /// All of the above in order.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
}

fn setup(common: &Common) -> Result<PipelineConfig, CliError> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = PipelineConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.apply_seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, nt } => {
            let cfg = setup(&common)?;
            let s = commands::simulate(&cfg, nt)?;
            println!("trajectory {} x {} written to {}", s.nx, s.nt, cfg.output_dir.display());
        }
        Command::BuildTensor { common } => {
            let cfg = setup(&common)?;
            let s = commands::build_tensor(&cfg)?;
            println!("snapshot tensor {:?} written to {}", s.dims, cfg.output_dir.join(commands::SNAPSHOTS).display());
        }
        Command::Decompose { common } => {
            let cfg = setup(&common)?;
            let s = commands::decompose(&cfg)?;
            println!("rank estimate: {}", s.rank_estimate);
            for v in &s.variants {
                println!("  {}: {} terms, relative error {:.3e}", v.name, v.rank, v.rel_error);
            }
        }
        Command::Control { common } => {
            let cfg = setup(&common)?;
            for r in commands::control(&cfg)? {
                println!(
                    "{} ({} n={}): J = {:.6e}, converged_at = {}, {:.4} ms per Riccati solve",
                    r.name,
                    r.model,
                    r.n,
                    r.summary.j_quadrature,
                    r.summary.converged_at.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into()),
                    r.summary.care_ms_mean
                );
            }
        }
        Command::Report { common } => {
            let cfg = setup(&common)?;
            print!("{}", report::report(&cfg)?.to_markdown());
        }
        Command::Pipeline { common } => {
            let cfg = setup(&common)?;
            let rep = commands::pipeline(&cfg, std::io::stdout())?;
            print!("{}", rep.to_markdown());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use auctionlab::cli::{
    run_allocate, run_calibrate, run_optimize_weights, run_simulate, AllocateOpts, CalibrateOpts,
    OptimizeOpts, SimulateOpts,
};

#[derive(Parser)]
#[command(
    name = "auctionlab",
    version,
    about = "Compare slot-allocation mechanisms, calibrate seeker weights, and plan weight policies"
)]
struct Cli {
    /// Suppress non-error output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print extra per-step detail.
    #[arg(long, global = true)]
    verbose: bool,
    /// Override the config seed (consumed by seeded commands).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Monte Carlo depth sweep and write summary CSVs.
    Simulate {
        /// Simulation config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write per-seeker rows.
        #[arg(long)]
        per_seeker: bool,
    },
    /// Allocate a single instance under both mechanisms.
    Allocate {
        /// Instance JSON (bids, matrices, seeker weight).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the relevance power law from experiment observations.
    Calibrate {
        /// Observations CSV: segment_id,seeker_weight,relevance[,arm].
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Targets CSV: segment_id,target_relevance.
        #[arg(long)]
        targets: Option<PathBuf>,
    },
    /// Solve for the weight policy via value iteration.
    OptimizeWeights {
        /// Model JSON, or episodes + skeleton config.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: &Cli) -> auctionlab::Result<()> {
    match &cli.command {
        Command::Simulate { config, out, per_seeker } => {
            let outputs = run_simulate(&SimulateOpts {
                config: config.clone(),
                out_dir: out.clone(),
                seed_override: cli.seed,
                per_seeker: *per_seeker,
            })?;
            if !cli.quiet {
                println!("wrote {}", outputs.summary_csv.display());
                if let Some(path) = &outputs.per_seeker_csv {
                    println!("wrote {}", path.display());
                }
                println!("wrote {}", outputs.manifest.display());
            }
            if cli.verbose {
                for d in &outputs.report.depths {
                    println!(
                        "n={}: rev gfp {:.4} vcg {:.4} | rel gfp {:.4} vcg {:.4}",
                        d.n,
                        d.summary.rev_gfp,
                        d.summary.rev_vcg,
                        d.summary.rel_gfp,
                        d.summary.rel_vcg
                    );
                }
            }
        }
        Command::Allocate { config, out } => {
            let outputs = run_allocate(&AllocateOpts {
                config: config.clone(),
                out_dir: out.clone(),
            })?;
            if !cli.quiet {
                let r = &outputs.report;
                println!("instance {} (n = {})", r.seeker_id, r.n);
                for (name, m) in [("gfp", &r.gfp), ("vcg", &r.vcg)] {
                    println!(
                        "{name}: assignment={:?} total={} revenue={} relevance={}",
                        m.assignment.as_slice(),
                        m.total_position_aware_score,
                        m.revenue,
                        m.relevance
                    );
                }
                println!("wrote {}", outputs.allocation_json.display());
            }
        }
        Command::Calibrate { config, out, targets } => {
            let outputs = run_calibrate(&CalibrateOpts {
                config: config.clone(),
                out_dir: out.clone(),
                targets: targets.clone(),
            })?;
            if !cli.quiet {
                let fit = &outputs.fit;
                println!(
                    "alpha = {:.6} (se {:.6}), r^2 = {:.6}, segments = {}, obs = {}",
                    fit.alpha,
                    fit.alpha_se,
                    fit.r_squared,
                    fit.z.len(),
                    fit.n_obs
                );
                if !fit.alpha_in_domain {
                    eprintln!("warning: fitted elasticity {} is outside (0, 1)", fit.alpha);
                }
                println!("wrote {}", outputs.fit_json.display());
                if let Some(path) = &outputs.required_weights_csv {
                    println!("wrote {}", path.display());
                }
                if let Some(path) = &outputs.dispersion_csv {
                    println!("wrote {}", path.display());
                }
            }
        }
        Command::OptimizeWeights { config, out } => {
            let outputs = run_optimize_weights(&OptimizeOpts {
                config: config.clone(),
                out_dir: out.clone(),
            })?;
            if !cli.quiet {
                let p = &outputs.policy;
                println!(
                    "converged in {} iterations (residual {:.3e})",
                    p.iterations, p.residual
                );
                if !p.unvisited.is_empty() {
                    eprintln!(
                        "warning: {} (state, action) pairs had no transition data; \
                         their kernel rows are uniform",
                        p.unvisited.len()
                    );
                }
                if cli.verbose {
                    for (x, state) in p.states.iter().enumerate() {
                        println!(
                            "{state}: weight {} (value {:.4})",
                            p.policy_weights[x], p.values[x]
                        );
                    }
                }
                println!("wrote {}", outputs.policy_json.display());
            }
        }
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hfwave::harness::{emit_reports, load_config, refit_csv, run_rows, run_sweep, summarize, LoadedConfig, SweepResult};
use hfwave::solvers::Variant;

#[derive(Parser)]
#[command(name = "hfwave", version, about = "Multi-harmonic envelope approximation versus a resolving reference solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural assumptions and the non-resonance condition.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the reference and envelope solvers at one epsilon.
    Run {
        #[command(flatten)]
        common: RunArgs,
        #[arg(long)]
        eps: f64,
    },
    /// Run an epsilon sweep and fit convergence rates.
    Sweep {
        #[command(flatten)]
        common: RunArgs,
        /// Overrides `sweep.epsilons`; comma separated.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
    },
    /// Re-fit rates from an existing sweep.csv.
    Fit {
        csv: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides `solver.variants`; repeat or comma separate.
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    /// Overrides `solver.snapshots`.
    #[arg(long)]
    snapshots: Option<usize>,
}

enum Failure {
    Assumptions,
    Runtime(String),
}

impl From<hfwave::Error> for Failure {
    fn from(e: hfwave::Error) -> Failure {
        Failure::Runtime(e.to_string())
    }
}

fn load(args: &RunArgs) -> Result<LoadedConfig, Failure> {
    let cfg = load_config(&args.config)?;
    if args.variant.is_empty() && args.snapshots.is_none() {
        return Ok(cfg);
    }
    let mut raw = cfg.raw;
    if !args.variant.is_empty() {
        raw.solver.variants = args.variant.clone();
    }
    if let Some(s) = args.snapshots {
        raw.solver.snapshots = s;
    }
    Ok(LoadedConfig::from_raw(raw)?)
}

fn check(cfg: &LoadedConfig) -> Result<(), Failure> {
    let r = summarize(cfg, Vec::new(), &[]);
    let a = &r.assumptions;
    println!("kernel dimension        {} ({})", a.kernel_dim, ok(a.kernel_ok));
    println!("kernel singular values  {:?}", a.kernel_singular_values);
    println!("sigma_min L(3w, 3k)     {:.6e} ({})", a.sigma_min_3, ok(a.invertible_3));
    println!("sigma_min L(5w, 5k)     {:.6e} ({})", a.sigma_min_5, ok(a.invertible_5));
    println!("lipschitz estimate      {:.6e} (bound {:.6e}, {})", a.lipschitz_estimate, a.lipschitz_bound, ok(a.lipschitz_ok));
    let n = &r.nonresonance;
    println!("non-resonance gap       {:.9} (tolerance {:.3e}, {})", n.min_gap, n.tolerance, ok(n.passed));
    if a.passed && n.passed {
        Ok(())
    } else {
        Err(Failure::Assumptions)
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILED"
    }
}

fn finish(cfg: &LoadedConfig, result: &SweepResult, out: &Path) -> Result<(), Failure> {
    for p in emit_reports(&cfg.raw, result, out)? {
        log::info!("wrote {}", p.display());
    }
    for rate in &result.rates {
        println!("{:6} {:8} slope {:+.4} (rms residual {:.2e}, {} points)", rate.variant.name(), rate.metric, rate.fit.slope, rate.fit.residual, rate.fit.points);
    }
    for row in &result.rows {
        if let Some(b) = &row.bounds {
            println!("{:6} eps {:.6e}  err_W {:.4e}  err_Linf {:.4e}", row.variant.name(), row.epsilon, b.err_w_max, b.err_linf_max);
        }
    }
    let failed: Vec<String> = result.failures().map(|r| format!("{} at eps {}: {}", r.variant.name(), r.epsilon, r.failure.as_deref().unwrap_or(""))).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(failed.join("; ")))
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Check { config } => check(&load_config(&config)?),
        Command::Run { common, eps } => {
            let cfg = load(&common)?;
            check(&cfg)?;
            let eps = cfg.snap(eps)?;
            let variants = cfg.raw.solver.variants.clone();
            let result = summarize(&cfg, run_rows(&cfg, &[eps], &variants), &variants);
            finish(&cfg, &result, &common.out)
        }
        Command::Sweep { common, eps } => {
            let cfg = load(&common)?;
            check(&cfg)?;
            let eps = eps.unwrap_or_else(|| cfg.raw.sweep.epsilons.clone());
            let variants = cfg.raw.solver.variants.clone();
            let result = run_sweep(&cfg, &eps, &variants)?;
            finish(&cfg, &result, &common.out)
        }
        Command::Fit { csv } => {
            for rate in refit_csv(&csv)? {
                println!("{:6} {:8} slope {:+.4} intercept {:+.4} (rms residual {:.2e})", rate.variant.name(), rate.metric, rate.fit.slope, rate.fit.intercept, rate.fit.residual);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assumptions) => {
            eprintln!("assumption check failed");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

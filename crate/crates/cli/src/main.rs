use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use relu_lab_core::optimizer;
use relu_sgd_lab::config::HarnessConfig;
use relu_sgd_lab::{output, repro, thread_pool, verify, CliError, CliResult};

#[derive(Parser)]
#[command(name = "relu-sgd-lab", version, about = "GD/SGD laboratory for shallow ReLU networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the reference generalized-gradient listing.
    ReproListing {
        /// Target value.
        #[arg(long, default_value_t = repro::LISTING_XI, allow_negative_numbers = true)]
        xi: f64,
        /// Input sample.
        #[arg(long, default_value_t = repro::LISTING_X, allow_negative_numbers = true)]
        x: f64,
        /// Also write the report as `listing.json` here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a GD/SGD trajectory from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of trajectories, seeds `seed, seed+1, …`, each in `seed-<s>/`.
        #[arg(long, default_value_t = 1)]
        trials: u64,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run randomized property suites (identities, bounds, limits, all).
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Directory for falsifying inputs.
        #[arg(long, default_value = "verify-failures")]
        out: PathBuf,
        /// Re-check a stored falsifying input instead of sampling.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
}

fn cmd_repro(x: f64, xi: f64, out: Option<PathBuf>) -> CliResult<()> {
    let rep = repro::reproduce(x, xi)?;
    print!("{}", rep.render());
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        let text = serde_json::to_string_pretty(&rep).map_err(std::io::Error::from)?;
        std::fs::write(dir.join("listing.json"), text + "\n")?;
    }
    if rep.golden_input && !rep.matches_golden() {
        return Err(CliError::Failure("listing does not match the reference values".into()));
    }
    Ok(())
}

fn run_one(cfg: &HarnessConfig, dir: &Path) -> CliResult<output::Summary> {
    let rec = optimizer::run(&cfg.run)?;
    output::write_run(dir, cfg, &rec)
}

fn cmd_run(config: &Path, seed: Option<u64>, trials: u64, out: Option<PathBuf>) -> CliResult<()> {
    let mut cfg = HarnessConfig::load(config)?;
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    let dir = out
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if trials <= 1 {
        let s = run_one(&cfg, &dir)?;
        println!(
            "{}: {} steps, final true risk {:e}, max norm {:e}, V monotone {}",
            dir.display(),
            s.steps,
            s.final_true_risk,
            s.max_norm,
            s.v_monotone
        );
        return Ok(());
    }
    let base = cfg.run.seed;
    let pool = thread_pool()?;
    let results: Vec<(u64, CliResult<output::Summary>)> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|k| {
                let s = base.wrapping_add(k);
                let c = cfg.clone().with_seed(s);
                (s, run_one(&c, &dir.join(format!("seed-{s}"))))
            })
            .collect()
    });
    let mut first_err = None;
    for (s, r) in results {
        match r {
            Ok(sum) => println!("seed {s}: final true risk {:e}, V monotone {}", sum.final_true_risk, sum.v_monotone),
            Err(e) => {
                eprintln!("seed {s}: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn cmd_verify(suite: &str, seed: u64, trials: u64, out: &Path, replay: Option<PathBuf>) -> CliResult<()> {
    if let Some(path) = replay {
        let f = verify::load_falsifier(&path)?;
        return match verify::replay(&f)? {
            Ok(()) => {
                println!("{}/{}: instance passes", f.suite, f.property);
                Ok(())
            }
            Err(msg) => Err(CliError::Failure(format!("{}/{}: reproduced failure: {msg}", f.suite, f.property))),
        };
    }
    let pool = thread_pool()?;
    let reports = pool.install(|| verify::run_suites(suite, seed, trials))?;
    let mut failed = 0;
    for rep in &reports {
        println!("{}/{}: {}/{} pass", rep.suite, rep.property, rep.passed, rep.trials);
        if let Some(f) = &rep.failure {
            failed += 1;
            let path = verify::write_falsifier(out, f)?;
            eprintln!("  trial {} failed: {}\n  falsifying input written to {}", f.trial, f.message, path.display());
        }
    }
    if failed > 0 {
        return Err(CliError::Failure(format!("{failed} propert{} failed", if failed == 1 { "y" } else { "ies" })));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::ReproListing { xi, x, out } => cmd_repro(x, xi, out),
        Command::Run { config, seed, trials, out } => cmd_run(&config, seed, trials, out),
        Command::Verify {
            suite,
            seed,
            trials,
            out,
            replay,
        } => cmd_verify(&suite, seed, trials, &out, replay),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

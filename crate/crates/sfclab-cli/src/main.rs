//! `sfclab` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfclab::runner::{self, Command, Overrides, RunOutput};

#[derive(Parser)]
#[command(name = "sfclab", version, about = "Run sfclab scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Full identification pipeline
    Run(Common),
    /// Series, integration-by-parts and trace oracles
    OracleCheck(Common),
    /// Calibration table of the LIL functional on Brownian paths
    LilCalibrate(Common),
    /// Basis-condition sweep and universality spread
    BasisDiagnose(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::Run(c) => (Command::Run, c),
        Sub::OracleCheck(c) => (Command::OracleCheck, c),
        Sub::LilCalibrate(c) => (Command::LilCalibrate, c),
        Sub::BasisDiagnose(c) => (Command::BasisDiagnose, c),
    };
    let overrides = Overrides { replicates: common.replicates, seed: common.seed, out: common.out, threads: common.threads };
    let result = runner::load_config(&common.config).and_then(|mut config| {
        overrides.apply(&mut config);
        let dir = PathBuf::from(&config.outputs.directory);
        runner::run(config, command, &Overrides::default()).map(|out| (out, dir))
    });
    match result {
        Ok((out, dir)) => {
            report(&out, &dir);
            if out.summary.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn report(out: &RunOutput, dir: &std::path::Path) {
    let s = &out.summary;
    println!("{} {} ({} replicates, {:.2}s)", s.command, s.scenario, s.replicates, out.timing.wall_seconds);
    for (name, m) in &s.metrics {
        println!("  {name:<44} mean {:>12.4e}  q50 {:>12.4e}  max|.| {:>12.4e}", m.mean, m.q50, m.max_abs);
    }
    for c in &s.checks {
        let verdict = if c.pass { "ok" } else { "FAILED" };
        println!("  check {} {:?} = {:.6e} [{:?}, {:?}] {verdict}", c.metric, c.stat, c.value, c.min, c.max);
    }
    for f in &s.failures {
        println!("  replicate {} (seed {}) failed: {}", f.replicate, f.seed, f.message);
    }
    println!("outputs in {}", dir.display());
}

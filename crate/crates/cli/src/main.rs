use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use laminate_cli::artifacts::write_failure;
use laminate_cli::config::ExperimentConfig;
use laminate_cli::error::RunError;
use laminate_cli::{cone_table, k_vs_l, run, verify};

#[derive(Parser)]
#[command(name = "laminate", version, about = "p-harmonic limits, conjugate fields and laminations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write the artifact tree.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-check every invariant suite against an artifact tree.
    Verify { dir: PathBuf },
    /// Print hyperbolic cone profiles as CSV.
    ConeTable {
        #[arg(long)]
        n: u32,
        #[arg(long, value_delimiter = ',', required = true)]
        p_list: Vec<f64>,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
    },
    /// Print the K / L comparison of a run.
    KVsL { dir: PathBuf },
}

fn init_threads() -> Result<(), RunError> {
    let Ok(v) = std::env::var("LAMINATE_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| RunError::Config {
        field: "LAMINATE_THREADS".into(),
        reason: format!("expected a positive integer, got {v:?}"),
    })?;
    if n == 0 {
        return Err(RunError::Config {
            field: "LAMINATE_THREADS".into(),
            reason: "must be at least 1".into(),
        });
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Failed(e.to_string()))
}

fn dispatch(cli: Cli) -> Result<(), RunError> {
    init_threads()?;
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let root = run::output_dir(&cfg, out.as_deref());
            let outcome = run::run(&cfg, &root);
            if let Err(RunError::Invariant { .. }) = &outcome {
                // the table explains which suite failed
                if let Ok(report) = verify::verify(&root) {
                    print!("{}", report.table());
                }
            }
            let outcome = outcome?;
            print!("{}", outcome.verify.table());
            println!("wrote {} files to {}", outcome.manifest.files.len() + 1, outcome.root.display());
            Ok(())
        }
        Command::Verify { dir } => {
            let report = verify::verify(&dir)?;
            print!("{}", report.table());
            match report.first_failure() {
                Some(s) => Err(RunError::Invariant {
                    name: s.name.clone(),
                    detail: s.failure_summary(),
                }),
                None => Ok(()),
            }
        }
        Command::ConeTable { n, p_list, t_max, steps } => {
            print!("{}", cone_table(n, &p_list, t_max, steps)?);
            Ok(())
        }
        Command::KVsL { dir } => {
            print!("{}", k_vs_l(&dir)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verify_dir = match &cli.command {
        Command::Verify { dir } => Some(dir.clone()),
        _ => None,
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let (Some(dir), RunError::Invariant { .. }) = (&verify_dir, &e) {
                let _ = write_failure(dir, &e);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

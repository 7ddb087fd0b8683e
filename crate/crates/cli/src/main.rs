use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use zul_core::evaluation::{validate_report_json, write_pca_csv, write_report};
use zul_core::experiment::{
    edit_dir, eval_dir, generate_to_dir, pca_from_dir, run_sweep, run_to_dir, sweep_csv, ExperimentConfig,
};
use zul_core::verify::{run_verify, Fault};
use zul_core::Error;

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Null-space unlearning experiments on a synthetic associative memory.
#[derive(Parser)]
#[command(name = "zul", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a memory, its facts and knowledge sets.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Edit a generated directory with the configured method.
    Edit {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate an edited directory into a report.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, edit and evaluate in one directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the invariant suite on random instances.
    Verify {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Corrupt the forget projector so that the suite must fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// One run per forget-set size.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Before/after PCA coordinates of an edited directory.
    Pca {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Core(Error),
    Verify(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    let cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Generate { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let layers = generate_to_dir(&cfg, &out)?;
            println!("generated {} layer(s) in {}", layers.len(), out.display());
        }
        Command::Edit { config, input, out } => {
            let cfg = load_config(config.as_deref())?;
            for (i, e) in edit_dir(&cfg, &input, &out)?.iter().enumerate() {
                println!(
                    "layer {i}: {} objective {:.6e} -> {:.6e}",
                    e.report.method.as_str(),
                    e.report.before.total(),
                    e.report.after.total()
                );
            }
        }
        Command::Eval { input, out } => {
            let (report, _) = eval_dir(&input)?;
            write_report(&report, &out)?;
            print_metrics(&report.metrics);
        }
        Command::Run { config, out } => {
            let cfg = load_config(config.as_deref())?;
            let output = run_to_dir(&cfg, &out)?;
            let doc = serde_json::to_value(&output.report).expect("report serializes");
            validate_report_json(&doc)?;
            if let Some(gd) = output.report.edit.gd {
                if !gd.converged {
                    log::warn!("gradient descent did not converge; report marks converged=false");
                }
            }
            print_metrics(&output.report.metrics);
        }
        Command::Verify {
            trials,
            seed,
            out,
            inject_fault,
        } => {
            let fault = inject_fault.then_some(Fault::CorruptProjector);
            let report = run_verify(trials, seed, fault)?;
            report.write(&out)?;
            for c in &report.checks {
                println!(
                    "{} {} (worst {:.3e}, tolerance {:.1e}, {} samples)",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.tolerance,
                    c.trials
                );
            }
            if !report.passed {
                return Err(Failure::Verify(
                    report.failed_checks().iter().map(|s| s.to_string()).collect(),
                ));
            }
        }
        Command::Sweep {
            config,
            sizes,
            jobs,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            let rows = run_sweep(&cfg, &sizes, jobs)?;
            write_text(&out, &sweep_csv(&rows))?;
            let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
            println!("{} row(s) written to {}, {failed} failed", rows.len(), out.display());
        }
        Command::Pca { input, out } => {
            let shift = pca_from_dir(&input)?;
            write_pca_csv(&shift, &out)?;
            println!(
                "centroid distance {:.6e}, mean spread {:.6e}",
                shift.centroid_distance, shift.spread
            );
        }
    }
    Ok(())
}

fn print_metrics(m: &zul_core::evaluation::MetricsReport) {
    println!("efficacy        {:.4} -> {:.4}", m.efficacy_before, m.efficacy_after);
    println!(
        "generalization  {:.4} -> {:.4}",
        m.generalization_before, m.generalization_after
    );
    println!(
        "specificity     {:.4} -> {:.4}",
        m.specificity_before, m.specificity_after
    );
    println!(
        "pseudo-ppl      {:.4} -> {:.4}",
        m.pseudo_ppl_before, m.pseudo_ppl_after
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ZUL_LOG", "warn")).init();
    // clap exits with 2 on usage errors, which is reserved for numerical failures here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(names)) => {
            eprintln!("error: verification failed: {}", names.join(", "));
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT })
        }
    }
}

//! Command-line front end: train ensembles, build reference posteriors,
//! evaluate saved ensembles against saved references, and aggregate runs.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sae_core::ensemble::load_ensemble;
use sae_core::error::{Error, Result};
use sae_core::harness::{self, compare_runs, run_experiment, ExperimentConfig, Method, ReferenceKind};
use sae_core::metrics::{self, MetricsReport, PredictiveDensity};
use sae_core::nn::Task;
use sae_core::rng::{stream, substream};

#[derive(Parser)]
#[command(
    name = "sae",
    about = "Sequential anchored ensembles: train, evaluate and compare Bayesian \
             neural-network posterior approximations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train an anchored ensemble (independent members) and report metrics.
    TrainAe(CommonArgs),
    /// Train a sequential anchored ensemble and report metrics.
    TrainSae(CommonArgs),
    /// Build the reference posterior and export its predictive density.
    Oracle(CommonArgs),
    /// Compare a saved ensemble against a saved reference predictive.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Ensemble file written by a train run.
        #[arg(long)]
        ensemble: PathBuf,
        /// Reference predictive CSV written by `oracle` or a train run.
        #[arg(long)]
        reference: PathBuf,
    },
    /// Aggregate metric reports into a median/min/max comparison table.
    Compare {
        /// Metric report files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Directory for comparison.txt / comparison.json (defaults to stdout only).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(args: &CommonArgs, forced_method: Option<Method>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(method) = forced_method {
        let resolved = cfg.resolve_method(Some(method))?;
        cfg.method = Some(resolved);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &args.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn cmd_train(args: &CommonArgs, method: Method) -> Result<()> {
    let cfg = load_config(args, Some(method))?;
    let artifacts = run_experiment(&cfg)?;
    println!(
        "trained {} members over {} epochs ({})",
        artifacts.ensemble.len(),
        artifacts.ensemble.total_epochs(),
        method.as_str()
    );
    for key in ["agreement", "total_variation", "w2"] {
        if let Some(v) = artifacts.report.get(key) {
            println!("{key}: {v}");
        }
    }
    println!("report: {}", artifacts.report_path.display());
    println!("trace: {}", artifacts.trace_path.display());
    println!("ensemble: {}", artifacts.ensemble_path.display());
    Ok(())
}

fn cmd_oracle(args: &CommonArgs) -> Result<()> {
    let cfg = load_config(args, None)?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("out_dir is required (use --out)".into()))?;
    std::fs::create_dir_all(&out_dir)?;

    if cfg.reference == ReferenceKind::None {
        return Err(Error::InvalidConfig(
            "oracle subcommand needs a reference kind other than \"none\"".into(),
        ));
    }
    let arch = cfg.arch.build()?;
    let prior = cfg.prior.build(&arch)?;
    let data = harness::build_dataset(&cfg)?;
    data.check_compatible(&arch)?;
    let inputs = harness::eval_inputs(&cfg, &data)?;
    let reference = harness::build_reference(&cfg, &arch, &prior, &data)?
        .expect("reference kind checked above");
    let predictive = harness::reference_predictive_for(&cfg, &arch, &reference, &inputs)?;

    let pred_path = out_dir.join("reference.csv");
    let mut bytes = Vec::new();
    predictive.write_csv(&mut bytes)?;
    std::fs::write(&pred_path, &bytes)?;

    let summary_path = out_dir.join("posterior.txt");
    let mut summary = Vec::new();
    harness::write_posterior_summary(&mut summary, &reference)?;
    std::fs::write(&summary_path, &summary)?;

    println!("reference predictive: {}", pred_path.display());
    println!("posterior summary: {}", summary_path.display());
    Ok(())
}

fn cmd_evaluate(common: &CommonArgs, ensemble_path: &Path, reference_path: &Path) -> Result<()> {
    let cfg = load_config(common, None)?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("out_dir is required (use --out)".into()))?;
    std::fs::create_dir_all(&out_dir)?;

    let ensemble = load_ensemble(ensemble_path)?;
    let file = std::fs::File::open(reference_path)?;
    let reference = PredictiveDensity::read_csv(std::io::BufReader::new(file))?;

    let data = harness::build_dataset(&cfg)?;
    let inputs = harness::eval_inputs(&cfg, &data)?;
    if inputs.rows() != reference.n() {
        return Err(Error::DimensionMismatch {
            what: "reference predictive rows",
            expected: inputs.rows(),
            actual: reference.n(),
        });
    }

    let samples_per_member = if cfg.eval.samples_per_member > 0 {
        cfg.eval.samples_per_member
    } else {
        cfg.eval.reference_samples.max(1).div_ceil(ensemble.len())
    };
    let mut rng = substream(cfg.seed, &[stream::PREDICTIVE, 1]);
    let approx = metrics::ensemble_predictive(&ensemble, &inputs, samples_per_member, &mut rng)?;

    let mut report = MetricsReport::new();
    match ensemble.arch().task() {
        Task::Classification => {
            let p = reference.classification_probs()?;
            let q = approx.classification_probs()?;
            report.push_metric("agreement", metrics::agreement(p, q)?);
            report.push_metric("total_variation", metrics::total_variation(p, q)?);
        }
        Task::Regression => {
            report.push_metric("w2", metrics::regression_report(&reference, &approx)?);
        }
    }
    report.push_int("n_members", ensemble.len() as u64);
    report.push_int("total_epochs", ensemble.total_epochs() as u64);
    report.push_int("seed", cfg.seed);
    report.push_text("method", cfg.method.map(|m| m.as_str()).unwrap_or("unknown"));
    report.push_int("budget", cfg.budget.total_epochs as u64);
    report.push_text("dataset", &data.name);

    let report_path = out_dir.join("report.txt");
    let mut bytes = Vec::new();
    report.write(&mut bytes)?;
    std::fs::write(&report_path, &bytes)?;
    print!("{}", String::from_utf8_lossy(&bytes));
    println!("report: {}", report_path.display());
    Ok(())
}

fn cmd_compare(reports: &[PathBuf], out: Option<&PathBuf>) -> Result<()> {
    let table = compare_runs(reports)?;
    print!("{}", table.plain_text());
    if let Some(out_dir) = out {
        std::fs::create_dir_all(out_dir)?;
        let text_path = out_dir.join("comparison.txt");
        std::fs::write(&text_path, table.plain_text())?;
        let json_path = out_dir.join("comparison.json");
        std::fs::write(&json_path, table.to_json()?)?;
        println!("written: {} and {}", text_path.display(), json_path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainAe(args) => cmd_train(args, Method::Ae),
        Command::TrainSae(args) => cmd_train(args, Method::Sae),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Evaluate {
            common,
            ensemble,
            reference,
        } => cmd_evaluate(common, ensemble, reference),
        Command::Compare { reports, out } => cmd_compare(reports, out.as_ref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg = err.to_string().replace('\n', " ");
            let mut stderr = std::io::stderr();
            let _ = writeln!(stderr, "error code={} kind={} msg={}", err.exit_code(), err.kind(), msg);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

//! End-to-end experiment orchestration and the loss-trace format.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::ensemble::{
    allocate_budget, train_anchored_ensemble, train_sequential_anchored_ensemble, Ensemble,
    EnsembleRun,
};
use crate::error::{Error, Result};
use crate::harness::config::{DatasetConfig, ExperimentConfig, Method, ReferenceKind};
use crate::harness::data::{generate_synthetic, load_csv, SyntheticSpec};
use crate::metrics::{self, MetricsReport, PredictiveDensity};
use crate::nn::{Dataset, Matrix, MlpArchitecture, Targets, Task};
use crate::objectives::GaussianPrior;
use crate::oracle::{self, ReferencePosterior};
use crate::rng::{stream, substream};

/// One row of a run's loss trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTraceEntry {
    /// 1-based count of epochs run so far within this chain.
    pub cumulative_epoch: usize,
    pub chain: usize,
    /// Member index within the chain.
    pub member: usize,
    pub loss: f64,
}

/// Per-epoch anchored-loss trace of a whole run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossTrace {
    entries: Vec<LossTraceEntry>,
}

pub(crate) const TRACE_HEADER: &str = "cumulative_epoch,chain,member,loss";

impl LossTrace {
    pub fn from_run(run: &EnsembleRun) -> Self {
        let mut entries = Vec::new();
        let mut cursor: std::collections::BTreeMap<usize, usize> = Default::default();
        for trace in &run.member_traces {
            let counter = cursor.entry(trace.chain).or_insert(0);
            for &loss in &trace.losses {
                *counter += 1;
                entries.push(LossTraceEntry {
                    cumulative_epoch: *counter,
                    chain: trace.chain,
                    member: trace.index_in_chain,
                    loss,
                });
            }
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[LossTraceEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total epochs across all chains (one trace row per epoch).
    pub fn total_epochs(&self) -> usize {
        self.entries.len()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        for e in &self.entries {
            writeln!(w, "{},{},{},{}", e.cumulative_epoch, e.chain, e.member, e.loss)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty trace file".into()))??;
        if header != TRACE_HEADER {
            return Err(Error::Format(format!(
                "bad trace header {header:?}, expected {TRACE_HEADER:?}"
            )));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 4 {
                return Err(Error::Parse {
                    row: i + 1,
                    col: parts.len(),
                    message: "expected 4 columns".into(),
                });
            }
            let parse_err = |col: usize, cell: &str| Error::Parse {
                row: i + 1,
                col,
                message: format!("cannot parse {cell:?}"),
            };
            entries.push(LossTraceEntry {
                cumulative_epoch: parts[0].parse().map_err(|_| parse_err(1, parts[0]))?,
                chain: parts[1].parse().map_err(|_| parse_err(2, parts[1]))?,
                member: parts[2].parse().map_err(|_| parse_err(3, parts[2]))?,
                loss: parts[3].parse().map_err(|_| parse_err(4, parts[3]))?,
            });
        }
        let trace = Self { entries };
        trace.validate()?;
        Ok(trace)
    }

    /// Cumulative epochs must be strictly increasing within every chain.
    pub fn validate(&self) -> Result<()> {
        let mut last: std::collections::BTreeMap<usize, usize> = Default::default();
        for e in &self.entries {
            if let Some(&prev) = last.get(&e.chain) {
                if e.cumulative_epoch <= prev {
                    return Err(Error::Format(format!(
                        "trace not strictly increasing in chain {}: {} after {prev}",
                        e.chain, e.cumulative_epoch
                    )));
                }
            }
            last.insert(e.chain, e.cumulative_epoch);
        }
        Ok(())
    }
}

/// Everything a run produced, in memory and on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub out_dir: PathBuf,
    pub report: MetricsReport,
    pub trace: LossTrace,
    pub ensemble: Ensemble,
    pub report_path: PathBuf,
    pub trace_path: PathBuf,
    pub ensemble_path: PathBuf,
    pub config_path: PathBuf,
    pub reference_path: Option<PathBuf>,
}

pub fn build_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        DatasetConfig::Synthetic {
            name,
            n,
            noise,
            slope,
            intercept,
            separation,
        } => {
            let spec = SyntheticSpec {
                name: name.parse()?,
                n: *n,
                noise: *noise,
                slope: *slope,
                intercept: *intercept,
                separation: *separation,
            };
            generate_synthetic(&spec, cfg.seed)
        }
        DatasetConfig::Csv { path, task } => load_csv(path, *task),
    }
}

/// Deterministic evaluation inputs: an equispaced grid padded around the data
/// range for 1-D and 2-D synthetic tasks, the dataset inputs otherwise.
pub fn eval_inputs(cfg: &ExperimentConfig, data: &Dataset) -> Result<Matrix> {
    let d = data.inputs.cols();
    let from_grid = matches!(cfg.dataset, DatasetConfig::Synthetic { .. }) && d <= 2;
    if !from_grid {
        return Ok(data.inputs.clone());
    }

    let pad = cfg.eval.pad_fraction;
    let mut ranges = Vec::with_capacity(d);
    for j in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..data.len() {
            lo = lo.min(data.inputs.row(i)[j]);
            hi = hi.max(data.inputs.row(i)[j]);
        }
        let range = if hi > lo { hi - lo } else { 1.0 };
        ranges.push((lo - pad * range, hi + pad * range));
    }

    let linspace = |lo: f64, hi: f64, count: usize| -> Vec<f64> {
        if count == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect()
    };

    if d == 1 {
        let xs = linspace(ranges[0].0, ranges[0].1, cfg.eval.grid_points.max(1));
        Matrix::from_rows(&xs.into_iter().map(|x| vec![x]).collect::<Vec<_>>())
    } else {
        let side = (cfg.eval.grid_points as f64).sqrt().floor().max(1.0) as usize;
        let xs = linspace(ranges[0].0, ranges[0].1, side);
        let ys = linspace(ranges[1].0, ranges[1].1, side);
        let mut rows = Vec::with_capacity(side * side);
        for &x in &xs {
            for &y in &ys {
                rows.push(vec![x, y]);
            }
        }
        Matrix::from_rows(&rows)
    }
}

fn is_linear_regression(arch: &MlpArchitecture) -> bool {
    arch.task() == Task::Regression && arch.num_layers() == 1
}

fn linear_design(arch: &MlpArchitecture, inputs: &Matrix) -> Result<Matrix> {
    let n = inputs.rows();
    let d = inputs.cols();
    let cols = d + usize::from(arch.use_bias());
    let mut data = Vec::with_capacity(n * cols);
    for i in 0..n {
        data.extend_from_slice(inputs.row(i));
        if arch.use_bias() {
            data.push(1.0);
        }
    }
    Matrix::new(data, n, cols)
}

fn auto_points_per_axis(param_count: usize) -> usize {
    if param_count <= 2 {
        oracle::GRID_DEFAULT_POINTS
    } else {
        41
    }
}

/// Builds the configured reference posterior, or `None` when the config says
/// to skip the comparison.
pub fn build_reference(
    cfg: &ExperimentConfig,
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    data: &Dataset,
) -> Result<Option<ReferencePosterior>> {
    let kind = match cfg.reference {
        ReferenceKind::None => return Ok(None),
        ReferenceKind::Auto => {
            if is_linear_regression(arch) {
                ReferenceKind::Linear
            } else if arch.parameter_count() <= oracle::GRID_MAX_PARAMS {
                ReferenceKind::Grid
            } else {
                return Err(Error::InvalidConfig(format!(
                    "no tractable reference posterior: the model has {} parameters and is not \
                     single-layer linear regression; set \"reference\": \"none\" to run without \
                     comparison metrics",
                    arch.parameter_count()
                )));
            }
        }
        other => other,
    };

    match kind {
        ReferenceKind::Linear => {
            if !is_linear_regression(arch) {
                return Err(Error::InvalidConfig(
                    "the linear reference requires a single-layer regression architecture".into(),
                ));
            }
            let design = linear_design(arch, &data.inputs)?;
            let Targets::Values(ys) = &data.targets else {
                return Err(Error::TaskMismatch(
                    "linear reference requires regression targets".into(),
                ));
            };
            let posterior =
                oracle::linear_posterior(&design, ys, arch.noise_sigma(), prior)?;
            Ok(Some(ReferencePosterior::Gaussian(posterior)))
        }
        ReferenceKind::Grid => {
            let points = if cfg.eval.points_per_axis > 0 {
                cfg.eval.points_per_axis
            } else {
                auto_points_per_axis(arch.parameter_count())
            };
            let grid = oracle::grid_posterior(arch, data, prior, points)?;
            Ok(Some(ReferencePosterior::Grid(grid)))
        }
        ReferenceKind::Auto | ReferenceKind::None => unreachable!("resolved above"),
    }
}

/// Reference predictive on the evaluation inputs, drawn from the run's
/// dedicated substream. The linear oracle's parameter order matches the
/// network packing, so the generic path applies to both oracle kinds.
pub fn reference_predictive_for(
    cfg: &ExperimentConfig,
    arch: &MlpArchitecture,
    reference: &ReferencePosterior,
    inputs: &Matrix,
) -> Result<PredictiveDensity> {
    let mut rng = substream(cfg.seed, &[stream::PREDICTIVE, 0]);
    oracle::reference_predictive(
        reference,
        inputs,
        arch,
        cfg.eval.reference_samples.max(1),
        &mut rng,
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes per-parameter posterior mean and variance lines for either oracle.
pub fn write_posterior_summary<W: Write>(mut w: W, posterior: &ReferencePosterior) -> Result<()> {
    match posterior {
        ReferencePosterior::Gaussian(post) => {
            writeln!(w, "kind: gaussian")?;
            for j in 0..post.dim() {
                writeln!(w, "param_{j}: mean {:.6} variance {:.6}", post.mean()[j], post.variance(j))?;
            }
        }
        ReferencePosterior::Grid(grid) => {
            writeln!(w, "kind: grid")?;
            let mean = grid.mean();
            let var = grid.variance();
            for j in 0..grid.dim() {
                writeln!(w, "param_{j}: mean {:.6} variance {:.6}", mean[j], var[j])?;
            }
        }
    }
    Ok(())
}

/// Runs one configured experiment end to end and writes its artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let method = cfg.resolve_method(None)?;
    let out_dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidConfig("out_dir is required to run an experiment".into()))?;
    std::fs::create_dir_all(&out_dir)?;

    let arch = cfg.arch.build()?;
    let prior = cfg.prior.build(&arch)?;
    let data = build_dataset(cfg)?;
    data.check_compatible(&arch)?;

    // Resolved config travels inline with every artifact.
    let mut resolved = cfg.clone();
    resolved.method = Some(method);
    resolved.out_dir = Some(out_dir.clone());
    let resolved_json = resolved.to_json()?;
    let resolved_line = serde_json::to_string(&resolved)
        .map_err(|e| Error::InvalidConfig(format!("config serialization: {e}")))?;

    // Train the ensemble under the budget.
    let b = cfg.budget.total_epochs;
    let e0 = cfg.budget.initial_epochs;
    let run = match method {
        Method::Ae => {
            let n_members = b / e0;
            if n_members == 0 {
                return Err(Error::BudgetTooSmall(format!(
                    "budget of {b} epochs cannot fund one member of {e0} epochs"
                )));
            }
            let member_cfg = cfg.train.to_train_config(e0);
            train_anchored_ensemble(&arch, &prior, &data, n_members, &member_cfg, cfg.seed)?
        }
        Method::Sae => {
            let plan = allocate_budget(b, cfg.budget.chains, e0, cfg.budget.sequential_epochs)?;
            let init_cfg = cfg.train.to_train_config(plan.initial_epochs);
            let seq_cfg = cfg.train.to_train_config(plan.sequential_epochs);
            let chain_cfg = cfg.chain.to_chain_config(cfg.seed)?;
            train_sequential_anchored_ensemble(
                &arch, &prior, &data, &plan, &init_cfg, &seq_cfg, &chain_cfg, cfg.seed,
            )?
        }
    };
    let trace = LossTrace::from_run(&run);
    let mut ensemble = run.ensemble;
    ensemble.set_meta(resolved_line.clone());

    // Reference posterior and both predictives on the deterministic grid.
    let inputs = eval_inputs(cfg, &data)?;
    let reference = build_reference(cfg, &arch, &prior, &data)?;

    let mut report = MetricsReport::new();
    let mut reference_pred = None;
    if let Some(reference) = &reference {
        let ref_pred = reference_predictive_for(cfg, &arch, reference, &inputs)?;
        let samples_per_member = if cfg.eval.samples_per_member > 0 {
            cfg.eval.samples_per_member
        } else {
            cfg.eval.reference_samples.max(1).div_ceil(ensemble.len())
        };
        let mut pred_rng = substream(cfg.seed, &[stream::PREDICTIVE, 1]);
        let ens_pred =
            metrics::ensemble_predictive(&ensemble, &inputs, samples_per_member, &mut pred_rng)?;

        match arch.task() {
            Task::Classification => {
                let p = ref_pred.classification_probs()?;
                let q = ens_pred.classification_probs()?;
                if cfg.wants_metric("agreement") {
                    report.push_metric("agreement", metrics::agreement(p, q)?);
                }
                if cfg.wants_metric("total_variation") {
                    report.push_metric("total_variation", metrics::total_variation(p, q)?);
                }
            }
            Task::Regression => {
                if cfg.wants_metric("w2") {
                    report.push_metric("w2", metrics::regression_report(&ref_pred, &ens_pred)?);
                }
            }
        }
        reference_pred = Some(ref_pred);
    }
    report.push_int("n_members", ensemble.len() as u64);
    report.push_int("total_epochs", ensemble.total_epochs() as u64);
    report.push_int("seed", cfg.seed);
    report.push_text("method", method.as_str());
    report.push_int("budget", b as u64);
    report.push_text("dataset", &data.name);
    report.push_text(
        "objective",
        "anchored loss; likelihood summed over the dataset, minibatch gradients scaled by n/batch",
    );
    report.push_text("config", &resolved_line);

    // All writes happen once, at the end.
    let report_path = out_dir.join("report.txt");
    let trace_path = out_dir.join("trace.csv");
    let ensemble_path = out_dir.join("ensemble.bin");
    let config_path = out_dir.join("resolved_config.json");

    let mut report_bytes = Vec::new();
    report.write(&mut report_bytes)?;
    write_file(&report_path, &report_bytes)?;

    let mut trace_bytes = Vec::new();
    trace.write_csv(&mut trace_bytes)?;
    write_file(&trace_path, &trace_bytes)?;

    crate::ensemble::save_ensemble(&ensemble, &ensemble_path)?;
    write_file(&config_path, resolved_json.as_bytes())?;

    let reference_path = if let Some(ref_pred) = &reference_pred {
        let path = out_dir.join("reference.csv");
        let mut bytes = Vec::new();
        ref_pred.write_csv(&mut bytes)?;
        write_file(&path, &bytes)?;
        Some(path)
    } else {
        None
    };

    Ok(RunArtifacts {
        out_dir,
        report,
        trace,
        ensemble,
        report_path,
        trace_path,
        ensemble_path,
        config_path,
        reference_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::{ArchConfig, BudgetConfig, EvalSettings, TrainSettings};
    use crate::nn::Activation;

    fn sae_line_config(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            schema_version: 1,
            dataset: DatasetConfig::Synthetic {
                name: "line1d".into(),
                n: 12,
                noise: 0.2,
                slope: 1.2,
                intercept: -0.4,
                separation: 2.0,
            },
            arch: ArchConfig {
                layer_sizes: vec![1, 1],
                activation: Activation::Tanh,
                task: Task::Regression,
                noise_sigma: 0.5,
                use_bias: true,
            },
            prior: Default::default(),
            method: Some(Method::Sae),
            budget: BudgetConfig {
                total_epochs: 120,
                chains: 1,
                initial_epochs: 60,
                sequential_epochs: 6,
            },
            train: TrainSettings {
                learning_rate: 0.05,
                ..Default::default()
            },
            chain: Default::default(),
            eval: EvalSettings {
                grid_points: 16,
                reference_samples: 64,
                ..Default::default()
            },
            reference: ReferenceKind::Auto,
            metrics: None,
            seed: 3,
            out_dir: Some(out.to_path_buf()),
        }
    }

    #[test]
    fn run_experiment_writes_consistent_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = sae_line_config(&dir.path().join("run"));
        let artifacts = run_experiment(&cfg).unwrap();

        assert!(artifacts.report_path.exists());
        assert!(artifacts.trace_path.exists());
        assert!(artifacts.ensemble_path.exists());
        assert!(artifacts.config_path.exists());
        assert!(artifacts.reference_path.as_ref().unwrap().exists());

        // Budget honesty: one trace row per trained epoch.
        assert_eq!(
            artifacts.trace.total_epochs(),
            artifacts.ensemble.total_epochs()
        );
        let reported: u64 = artifacts.report.get_f64("total_epochs").unwrap() as u64;
        assert_eq!(reported as usize, artifacts.ensemble.total_epochs());
        // 60 + 10 * 6 = 120 epochs, 11 members.
        assert_eq!(artifacts.ensemble.len(), 11);
        assert_eq!(artifacts.ensemble.total_epochs(), 120);
        assert!(artifacts.report.get_f64("w2").unwrap() >= 0.0);

        // The saved ensemble reloads to the same members.
        let loaded = crate::ensemble::load_ensemble(&artifacts.ensemble_path).unwrap();
        assert_eq!(loaded.len(), artifacts.ensemble.len());
        for (a, b) in loaded.members().iter().zip(artifacts.ensemble.members()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }

    #[test]
    fn reruns_are_byte_identical() {
        // Same config, same seed, same out_dir: byte-identical artifacts.
        let dir = tempfile::tempdir().unwrap();
        let cfg = sae_line_config(&dir.path().join("run"));
        let a = run_experiment(&cfg).unwrap();
        let first: Vec<Vec<u8>> = [&a.report_path, &a.trace_path, &a.ensemble_path]
            .iter()
            .map(|p| std::fs::read(p).unwrap())
            .collect();
        let b = run_experiment(&cfg).unwrap();
        for (path, bytes) in [&b.report_path, &b.trace_path, &b.ensemble_path]
            .iter()
            .zip(first.iter())
        {
            assert_eq!(&std::fs::read(path).unwrap(), bytes, "{} differs", path.display());
        }
    }

    #[test]
    fn ae_member_arithmetic() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sae_line_config(&dir.path().join("ae"));
        cfg.method = Some(Method::Ae);
        let artifacts = run_experiment(&cfg).unwrap();
        // 120 / 60 = 2 members of 60 epochs.
        assert_eq!(artifacts.ensemble.len(), 2);
        assert_eq!(artifacts.ensemble.total_epochs(), 120);
    }

    #[test]
    fn trace_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = sae_line_config(&dir.path().join("t"));
        let artifacts = run_experiment(&cfg).unwrap();
        let text = std::fs::read(&artifacts.trace_path).unwrap();
        assert!(text.starts_with(TRACE_HEADER.as_bytes()));
        let trace = LossTrace::read_csv(&text[..]).unwrap();
        assert_eq!(trace, artifacts.trace);

        let bad = b"cumulative_epoch,chain,member,loss\n2,0,0,1.0\n1,0,1,0.5\n";
        assert!(LossTrace::read_csv(&bad[..]).is_err());
    }

    #[test]
    fn canonical_split_yields_51_members_for_200_epochs() {
        // One chain, a 100-epoch initial training plus fifty 2-epoch
        // sequential trainings; the uniform-split baseline gets 2 members.
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sae_line_config(&dir.path().join("sae"));
        cfg.dataset = DatasetConfig::Synthetic {
            name: "twoclass2d".into(),
            n: 16,
            noise: 0.8,
            slope: 1.0,
            intercept: 0.0,
            separation: 1.6,
        };
        cfg.arch = ArchConfig {
            layer_sizes: vec![2, 2],
            activation: Activation::Tanh,
            task: Task::Classification,
            noise_sigma: 1.0,
            use_bias: false,
        };
        cfg.budget = BudgetConfig {
            total_epochs: 200,
            chains: 1,
            initial_epochs: 100,
            sequential_epochs: 2,
        };
        // Skip the quadrature reference: this test is about budget accounting.
        cfg.reference = ReferenceKind::None;

        let sae = run_experiment(&cfg).unwrap();
        assert_eq!(sae.report.get("n_members").unwrap(), "51");
        assert_eq!(sae.report.get("total_epochs").unwrap(), "200");
        assert_eq!(sae.report.get("method").unwrap(), "sae");
        assert_eq!(sae.trace.total_epochs(), 200);

        cfg.method = Some(Method::Ae);
        cfg.out_dir = Some(dir.path().join("ae"));
        let ae = run_experiment(&cfg).unwrap();
        assert_eq!(ae.report.get("n_members").unwrap(), "2");
        assert_eq!(ae.report.get("total_epochs").unwrap(), "200");
    }

    #[test]
    fn missing_out_dir_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sae_line_config(dir.path());
        cfg.out_dir = None;
        assert!(matches!(
            run_experiment(&cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn intractable_reference_is_rejected_with_guidance() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = sae_line_config(&dir.path().join("big"));
        cfg.arch.layer_sizes = vec![1, 8, 1];
        cfg.train.learning_rate = 0.05;
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("reference"));

        // reference = none runs without metrics.
        cfg.reference = ReferenceKind::None;
        cfg.out_dir = Some(dir.path().join("none"));
        let artifacts = run_experiment(&cfg).unwrap();
        assert!(artifacts.report.get("w2").is_none());
        assert!(artifacts.reference_path.is_none());
        assert_eq!(artifacts.report.get("method").unwrap(), "sae");
    }
}

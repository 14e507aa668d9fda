//! Training single members to anchored-loss optima and assembling ensembles.
//!
//! Two builders share one chain worker:
//!
//! - [`train_anchored_ensemble`]: every member gets a fresh prior anchor, a
//!   fresh initialization and a full training run.
//! - [`train_sequential_anchored_ensemble`]: per chain, one long training from
//!   scratch, then a sequence of short trainings; each sequential member's
//!   anchor is one guided-walk update of the previous anchor and its
//!   optimization warm-starts at the previous optimum.
//!
//! Chains share no mutable state and draw from disjoint substreams of the
//! master seed, so they are independent units of parallelism; members are
//! concatenated in (chain id, member index) order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{initial_anchor, mh_update, ChainConfig, ChainStreams};
use crate::error::{Error, Result};
use crate::nn::{self, Dataset, Matrix, MlpArchitecture, ParamVector, Targets};
use crate::objectives::{self, GaussianPrior};
use crate::rng::{derive_seed, stream, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Configuration of one training run.
///
/// `batch_size` 0 (or anything at least the dataset size) means full batch.
/// The likelihood term is a sum over the full dataset; minibatch gradients
/// scale the batch likelihood by `n / batch_len` so every step estimates the
/// same objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub adam_betas: (f64, f64),
    pub seed: u64,
    /// Keep optimizer moment estimates across sequential members of a chain.
    pub carry_optimizer_state: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 0,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam_betas: (0.9, 0.999),
            seed: 0,
            carry_optimizer_state: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be a positive real, got {}",
                self.learning_rate
            )));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::InvalidConfig(format!(
                "adam betas must lie in [0, 1), got ({b1}, {b2})"
            )));
        }
        Ok(())
    }
}

/// Decomposition of an epoch budget into chains of one long training plus `m`
/// short trainings each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub total_epochs: usize,
    pub chains: usize,
    pub initial_epochs: usize,
    pub sequential_epochs: usize,
    pub members_per_chain_after_first: usize,
    pub total_members: usize,
}

impl BudgetPlan {
    /// Epochs the plan actually spends: `C * (E0 + m * Es)`, never above the budget.
    pub fn spent_epochs(&self) -> usize {
        self.chains
            * (self.initial_epochs + self.members_per_chain_after_first * self.sequential_epochs)
    }
}

/// Splits a total epoch budget `B` into `C` chains of an `E0`-epoch initial
/// training plus `m = floor((B/C - E0)/Es)` sequential trainings of `Es`
/// epochs, for `C * (1 + m)` members in total.
pub fn allocate_budget(
    total_epochs: usize,
    chains: usize,
    initial_epochs: usize,
    sequential_epochs: usize,
) -> Result<BudgetPlan> {
    if chains == 0 || initial_epochs == 0 || sequential_epochs == 0 || total_epochs == 0 {
        return Err(Error::InvalidConfig(
            "budget, chains, initial and sequential epochs must all be >= 1".into(),
        ));
    }
    if chains * initial_epochs > total_epochs {
        return Err(Error::BudgetTooSmall(format!(
            "budget of {total_epochs} epochs cannot fund {chains} initial trainings of \
             {initial_epochs} epochs"
        )));
    }
    // Integer form of floor((B/C - E0)/Es); exact, no float rounding.
    let m = (total_epochs - chains * initial_epochs) / (chains * sequential_epochs);
    Ok(BudgetPlan {
        total_epochs,
        chains,
        initial_epochs,
        sequential_epochs,
        members_per_chain_after_first: m,
        total_members: chains * (1 + m),
    })
}

#[derive(Debug, Clone)]
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[derive(Debug, Clone)]
pub(crate) enum OptimizerState {
    Sgd,
    Adam(AdamState),
}

impl OptimizerState {
    fn fresh(cfg: &TrainConfig, dim: usize) -> Self {
        match cfg.optimizer {
            OptimizerKind::Sgd => OptimizerState::Sgd,
            OptimizerKind::Adam => OptimizerState::Adam(AdamState {
                m: vec![0.0; dim],
                v: vec![0.0; dim],
                t: 0,
            }),
        }
    }

    fn step(&mut self, theta: &mut ParamVector, grad: &[f64], cfg: &TrainConfig) {
        match self {
            OptimizerState::Sgd => {
                for (t, g) in theta.as_mut_slice().iter_mut().zip(grad) {
                    *t -= cfg.learning_rate * g;
                }
            }
            OptimizerState::Adam(state) => {
                const EPS: f64 = 1e-8;
                let (b1, b2) = cfg.adam_betas;
                state.t += 1;
                let bc1 = 1.0 - b1.powi(state.t as i32);
                let bc2 = 1.0 - b2.powi(state.t as i32);
                for (j, g) in grad.iter().enumerate() {
                    state.m[j] = b1 * state.m[j] + (1.0 - b1) * g;
                    state.v[j] = b2 * state.v[j] + (1.0 - b2) * g * g;
                    let m_hat = state.m[j] / bc1;
                    let v_hat = state.v[j] / bc2;
                    theta[j] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

pub(crate) struct TrainRun {
    pub theta: ParamVector,
    pub trace: Vec<f64>,
    pub final_loss: f64,
    pub state: OptimizerState,
}

fn non_finite_to_loss_error(err: Error, epoch: usize) -> Error {
    match err {
        Error::NonFinite(_) => Error::NonFiniteLoss {
            epoch,
            chain: None,
            member: None,
        },
        other => other,
    }
}

fn subset_dataset(data: &Dataset, idx: &[usize]) -> Dataset {
    let d = data.inputs.cols();
    let mut inputs = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        inputs.extend_from_slice(data.inputs.row(i));
    }
    let targets = match &data.targets {
        Targets::Classes(c) => Targets::Classes(idx.iter().map(|&i| c[i]).collect()),
        Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
    };
    Dataset {
        inputs: Matrix::new(inputs, idx.len(), d).expect("subset shape"),
        targets,
        name: data.name.clone(),
    }
}

pub(crate) fn train_impl(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    anchor: &ParamVector,
    init: &ParamVector,
    data: &Dataset,
    cfg: &TrainConfig,
    state_in: Option<OptimizerState>,
) -> Result<TrainRun> {
    cfg.validate()?;
    init.check_len(arch, "initial parameters")?;
    anchor.check_len(arch, "anchor parameters")?;
    prior.check_len(arch.parameter_count(), "prior length")?;
    data.check_compatible(arch)?;

    let n = data.len();
    let batch = if cfg.batch_size == 0 || cfg.batch_size >= n {
        n
    } else {
        cfg.batch_size
    };
    let full_batch = batch == n;

    let mut theta = init.clone();
    let mut state = state_in.unwrap_or_else(|| OptimizerState::fresh(cfg, theta.len()));
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut shuffle_rng = substream(cfg.seed, &[stream::SHUFFLE]);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        if full_batch {
            let grad = objectives::grad_anchored_loss(arch, prior, anchor, &theta, data)
                .map_err(|e| non_finite_to_loss_error(e, epoch))?;
            state.step(&mut theta, grad.as_slice(), cfg);
        } else {
            use rand::seq::SliceRandom;
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(batch) {
                let sub = subset_dataset(data, chunk);
                let ll_grad = nn::grad_log_likelihood(arch, &theta, &sub)
                    .map_err(|e| non_finite_to_loss_error(e, epoch))?;
                let scale = n as f64 / chunk.len() as f64;
                let grad: Vec<f64> = (0..theta.len())
                    .map(|j| {
                        let s = prior.std()[j];
                        -ll_grad[j] * scale + (theta[j] - anchor[j]) / (s * s)
                    })
                    .collect();
                state.step(&mut theta, &grad, cfg);
            }
        }

        // One trace entry per epoch: the end-of-epoch full-dataset anchored
        // loss, so each member's last entry is its final loss and a new
        // training start shows up as a rise at the member boundary.
        let loss = objectives::anchored_loss(arch, prior, anchor, &theta, data)
            .map_err(|e| non_finite_to_loss_error(e, epoch))?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                chain: None,
                member: None,
            });
        }
        trace.push(loss);
    }

    let final_loss = *trace.last().expect("epochs >= 1");
    Ok(TrainRun {
        theta,
        trace,
        final_loss,
        state,
    })
}

/// Minimizes the anchored loss from `init` for `cfg.epochs` epochs.
///
/// Returns the final parameters and one full-dataset anchored-loss value per
/// epoch (evaluated at the parameters the epoch starts from).
pub fn train(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    anchor: &ParamVector,
    init: &ParamVector,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<(ParamVector, Vec<f64>)> {
    let run = train_impl(arch, prior, anchor, init, data, cfg, None)?;
    Ok((run.theta, run.trace))
}

/// Per-member training record kept alongside the member parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberProvenance {
    pub chain: usize,
    pub index_in_chain: usize,
    pub epochs: usize,
    pub final_loss: f64,
    pub carried_optimizer_state: bool,
}

/// An ordered collection of trained optima with full provenance.
///
/// `anchors()[i]` is the anchor member `i` was trained against; provenance and
/// members are index-aligned.
#[derive(Debug, Clone)]
pub struct Ensemble {
    arch: MlpArchitecture,
    prior: GaussianPrior,
    members: Vec<ParamVector>,
    anchors: Vec<ParamVector>,
    provenance: Vec<MemberProvenance>,
    /// Free-form JSON carried through persistence (resolved run config).
    meta: String,
}

impl Ensemble {
    pub fn new(
        arch: MlpArchitecture,
        prior: GaussianPrior,
        members: Vec<ParamVector>,
        anchors: Vec<ParamVector>,
        provenance: Vec<MemberProvenance>,
    ) -> Result<Self> {
        let p = arch.parameter_count();
        if members.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if anchors.len() != members.len() || provenance.len() != members.len() {
            return Err(Error::DimensionMismatch {
                what: "ensemble provenance",
                expected: members.len(),
                actual: provenance.len().min(anchors.len()),
            });
        }
        for v in members.iter().chain(anchors.iter()) {
            if v.len() != p {
                return Err(Error::DimensionMismatch {
                    what: "ensemble member length",
                    expected: p,
                    actual: v.len(),
                });
            }
        }
        prior.check_len(p, "ensemble prior")?;
        Ok(Self {
            arch,
            prior,
            members,
            anchors,
            provenance,
            meta: "{}".into(),
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn members(&self) -> &[ParamVector] {
        &self.members
    }

    pub fn anchors(&self) -> &[ParamVector] {
        &self.anchors
    }

    pub fn provenance(&self) -> &[MemberProvenance] {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Total epochs spent training this ensemble.
    pub fn total_epochs(&self) -> usize {
        self.provenance.iter().map(|p| p.epochs).sum()
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn set_meta(&mut self, meta: impl Into<String>) {
        self.meta = meta.into();
    }
}

/// Per-epoch losses of one trained member, for assembling run traces.
#[derive(Debug, Clone)]
pub struct MemberTrace {
    pub chain: usize,
    pub index_in_chain: usize,
    pub losses: Vec<f64>,
}

/// An ensemble plus the loss traces recorded while building it.
#[derive(Debug)]
pub struct EnsembleRun {
    pub ensemble: Ensemble,
    pub member_traces: Vec<MemberTrace>,
}

struct ChainOutput {
    members: Vec<ParamVector>,
    anchors: Vec<ParamVector>,
    provenance: Vec<MemberProvenance>,
    traces: Vec<MemberTrace>,
}

fn tag_member_error(err: Error, chain: usize, member: usize) -> Error {
    match err {
        Error::NonFiniteLoss { epoch, .. } => Error::NonFiniteLoss {
            epoch,
            chain: Some(chain),
            member: Some(member),
        },
        other => other,
    }
}

/// Runs one chain: a long initial training on a fresh prior anchor, then `m`
/// guided-walk updates each followed by a short warm-started training.
#[allow(clippy::too_many_arguments)]
fn run_one_chain(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    data: &Dataset,
    chain_id: usize,
    sequential_members: usize,
    init_cfg: &TrainConfig,
    seq_cfg: &TrainConfig,
    chain_cfg: &ChainConfig,
    master_seed: u64,
) -> Result<ChainOutput> {
    let p = arch.parameter_count();
    let mut streams = ChainStreams::new(
        derive_seed(master_seed, &[stream::ANCHOR, chain_id as u64]),
        p,
    );
    let mut anchor = initial_anchor(prior, &mut streams);

    let mut init_rng = substream(master_seed, &[stream::INIT, chain_id as u64, 0]);
    let init = nn::init_params(arch, &mut init_rng);
    let mut cfg0 = *init_cfg;
    cfg0.seed = derive_seed(master_seed, &[stream::SHUFFLE, chain_id as u64, 0]);

    let first = train_impl(arch, prior, anchor.theta(), &init, data, &cfg0, None)
        .map_err(|e| tag_member_error(e, chain_id, 0))?;

    let mut out = ChainOutput {
        members: vec![first.theta.clone()],
        anchors: vec![anchor.theta().clone()],
        provenance: vec![MemberProvenance {
            chain: chain_id,
            index_in_chain: 0,
            epochs: cfg0.epochs,
            final_loss: first.final_loss,
            carried_optimizer_state: false,
        }],
        traces: vec![MemberTrace {
            chain: chain_id,
            index_in_chain: 0,
            losses: first.trace,
        }],
    };

    let mut prev_theta = first.theta;
    let mut prev_state = first.state;
    for k in 1..=sequential_members {
        anchor = mh_update(prior, &anchor, chain_cfg, &mut streams);
        let mut cfg_k = *seq_cfg;
        cfg_k.seed = derive_seed(master_seed, &[stream::SHUFFLE, chain_id as u64, k as u64]);
        let carry = seq_cfg.carry_optimizer_state;
        let state_in = if carry { Some(prev_state.clone()) } else { None };
        let run = train_impl(arch, prior, anchor.theta(), &prev_theta, data, &cfg_k, state_in)
            .map_err(|e| tag_member_error(e, chain_id, k))?;

        out.members.push(run.theta.clone());
        out.anchors.push(anchor.theta().clone());
        out.provenance.push(MemberProvenance {
            chain: chain_id,
            index_in_chain: k,
            epochs: cfg_k.epochs,
            final_loss: run.final_loss,
            carried_optimizer_state: carry,
        });
        out.traces.push(MemberTrace {
            chain: chain_id,
            index_in_chain: k,
            losses: run.trace,
        });
        prev_theta = run.theta;
        prev_state = run.state;
    }
    Ok(out)
}

fn assemble(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    chains: Vec<ChainOutput>,
) -> Result<EnsembleRun> {
    let mut members = Vec::new();
    let mut anchors = Vec::new();
    let mut provenance = Vec::new();
    let mut traces = Vec::new();
    for chain in chains {
        members.extend(chain.members);
        anchors.extend(chain.anchors);
        provenance.extend(chain.provenance);
        traces.extend(chain.traces);
    }
    Ok(EnsembleRun {
        ensemble: Ensemble::new(arch.clone(), prior.clone(), members, anchors, provenance)?,
        member_traces: traces,
    })
}

/// Classic anchored ensembling: `n_members` independent trainings, each on a
/// fresh prior anchor from a fresh initialization.
pub fn train_anchored_ensemble(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    data: &Dataset,
    n_members: usize,
    per_member_cfg: &TrainConfig,
    master_seed: u64,
) -> Result<EnsembleRun> {
    if n_members == 0 {
        return Err(Error::InvalidConfig("n_members must be >= 1".into()));
    }
    per_member_cfg.validate()?;
    let chain_cfg = ChainConfig::default();
    let mut chains = Vec::with_capacity(n_members);
    for i in 0..n_members {
        chains.push(run_one_chain(
            arch,
            prior,
            data,
            i,
            0,
            per_member_cfg,
            per_member_cfg,
            &chain_cfg,
            master_seed,
        )?);
    }
    assemble(arch, prior, chains)
}

/// Sequential anchored ensembling under a [`BudgetPlan`].
///
/// Each of `plan.chains` chains interleaves anchor updates and short
/// trainings, warm-starting every member at the previous optimum. With
/// `members_per_chain_after_first = 0` this reduces member-for-member to
/// [`train_anchored_ensemble`] with `n_members = plan.chains`.
#[allow(clippy::too_many_arguments)]
pub fn train_sequential_anchored_ensemble(
    arch: &MlpArchitecture,
    prior: &GaussianPrior,
    data: &Dataset,
    plan: &BudgetPlan,
    init_cfg: &TrainConfig,
    seq_cfg: &TrainConfig,
    chain_cfg: &ChainConfig,
    master_seed: u64,
) -> Result<EnsembleRun> {
    if plan.chains == 0 {
        return Err(Error::InvalidConfig("plan must have at least one chain".into()));
    }
    if init_cfg.epochs != plan.initial_epochs {
        return Err(Error::InvalidConfig(format!(
            "init_cfg.epochs ({}) must equal plan.initial_epochs ({})",
            init_cfg.epochs, plan.initial_epochs
        )));
    }
    if seq_cfg.epochs != plan.sequential_epochs {
        return Err(Error::InvalidConfig(format!(
            "seq_cfg.epochs ({}) must equal plan.sequential_epochs ({})",
            seq_cfg.epochs, plan.sequential_epochs
        )));
    }
    init_cfg.validate()?;
    seq_cfg.validate()?;

    let mut chains = Vec::with_capacity(plan.chains);
    for c in 0..plan.chains {
        chains.push(run_one_chain(
            arch,
            prior,
            data,
            c,
            plan.members_per_chain_after_first,
            init_cfg,
            seq_cfg,
            chain_cfg,
            master_seed,
        )?);
    }
    assemble(arch, prior, chains)
}

const ENSEMBLE_MAGIC: &str = "SAE-ENSEMBLE v1";

/// Writes an ensemble: human-readable header (counts, architecture, meta,
/// provenance), then a raw payload of 64-bit little-endian reals laid out as
/// prior mean, prior std, all member vectors, all anchor vectors.
pub fn save_ensemble(ensemble: &Ensemble, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let p = ensemble.arch().parameter_count();
    let n = ensemble.len();
    let arch_json = serde_json::to_string(ensemble.arch())
        .map_err(|e| Error::Format(format!("architecture serialization: {e}")))?;
    let prov_json = serde_json::to_string(ensemble.provenance())
        .map_err(|e| Error::Format(format!("provenance serialization: {e}")))?;
    // Header lines must stay lines.
    let meta_line = ensemble.meta().replace(['\r', '\n'], " ");

    writeln!(file, "{ENSEMBLE_MAGIC}")?;
    writeln!(file, "arch: {arch_json}")?;
    writeln!(file, "param_count: {p}")?;
    writeln!(file, "members: {n}")?;
    writeln!(file, "total_epochs: {}", ensemble.total_epochs())?;
    writeln!(file, "meta: {meta_line}")?;
    writeln!(file, "provenance: {prov_json}")?;
    writeln!(file, "payload: prior_mean prior_std members anchors (f64-le)")?;
    writeln!(file, "---")?;

    let mut payload = Vec::with_capacity(8 * p * (2 + 2 * n));
    let mut push = |values: &[f64]| {
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    };
    push(ensemble.prior().mean().as_slice());
    push(ensemble.prior().std().as_slice());
    for m in ensemble.members() {
        push(m.as_slice());
    }
    for a in ensemble.anchors() {
        push(a.as_slice());
    }
    file.write_all(&payload)?;
    Ok(())
}

/// Reads an ensemble written by [`save_ensemble`].
pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    let sep = b"\n---\n";
    let split = bytes
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or_else(|| Error::Format("missing header terminator '---'".into()))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let payload = &bytes[split + sep.len()..];

    let mut lines = header.lines();
    if lines.next() != Some(ENSEMBLE_MAGIC) {
        return Err(Error::Format(format!("expected magic line '{ENSEMBLE_MAGIC}'")));
    }
    let mut arch: Option<MlpArchitecture> = None;
    let mut param_count = None;
    let mut members_count = None;
    let mut meta = String::from("{}");
    let mut provenance: Option<Vec<MemberProvenance>> = None;
    for line in lines {
        let Some((key, value)) = line.split_once(": ") else {
            continue;
        };
        match key {
            "arch" => {
                arch = Some(
                    serde_json::from_str(value)
                        .map_err(|e| Error::Format(format!("bad arch json: {e}")))?,
                )
            }
            "param_count" => {
                param_count = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| Error::Format(format!("bad param_count: {e}")))?,
                )
            }
            "members" => {
                members_count = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| Error::Format(format!("bad members count: {e}")))?,
                )
            }
            "meta" => meta = value.to_string(),
            "provenance" => {
                provenance = Some(
                    serde_json::from_str(value)
                        .map_err(|e| Error::Format(format!("bad provenance json: {e}")))?,
                )
            }
            _ => {}
        }
    }
    let arch = arch.ok_or_else(|| Error::Format("missing arch header".into()))?;
    let p = param_count.ok_or_else(|| Error::Format("missing param_count header".into()))?;
    let n = members_count.ok_or_else(|| Error::Format("missing members header".into()))?;
    let provenance = provenance.ok_or_else(|| Error::Format("missing provenance header".into()))?;
    if p != arch.parameter_count() {
        return Err(Error::Format(format!(
            "param_count {p} does not match architecture ({})",
            arch.parameter_count()
        )));
    }

    let expected = 8 * p * (2 + 2 * n);
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |count: usize| -> Vec<f64> { values.by_ref().take(count).collect() };

    let prior_mean = ParamVector::new(take(p));
    let prior_std = ParamVector::new(take(p));
    let members: Vec<ParamVector> = (0..n).map(|_| ParamVector::new(take(p))).collect();
    let anchors: Vec<ParamVector> = (0..n).map(|_| ParamVector::new(take(p))).collect();

    let prior = GaussianPrior::new(prior_mean, prior_std)?;
    let mut ensemble = Ensemble::new(arch, prior, members, anchors, provenance)?;
    ensemble.set_meta(meta);
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use crate::nn::Task;
    use crate::oracle;

    fn lin_arch() -> MlpArchitecture {
        MlpArchitecture::new(vec![1, 1], Activation::Tanh, Task::Regression, 1.0).unwrap()
    }

    fn line_data(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(
            Matrix::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>()).unwrap(),
            Targets::Values(ys.to_vec()),
            "line",
        )
        .unwrap()
    }

    #[test]
    fn budget_tables_exact() {
        // Dense-task settings (E0 = 100, Es = 2).
        let cases = [
            (200, 1, 50, 51),
            (500, 2, 75, 152),
            (1000, 3, 116, 351),
            (10_000, 10, 450, 4510),
        ];
        for (b, c, m, total) in cases {
            let plan = allocate_budget(b, c, 100, 2).unwrap();
            assert_eq!(plan.members_per_chain_after_first, m, "B={b}");
            assert_eq!(plan.total_members, total, "B={b}");
            assert!(plan.spent_epochs() <= b);
        }
        // Wide-task settings (E0 = 100, Es = 10).
        let cases10 = [
            (200, 1, 10, 11),
            (500, 2, 15, 32),
            (1000, 3, 23, 72),
            (10_000, 10, 90, 910),
        ];
        for (b, c, m, total) in cases10 {
            let plan = allocate_budget(b, c, 100, 10).unwrap();
            assert_eq!(plan.members_per_chain_after_first, m, "B={b}");
            assert_eq!(plan.total_members, total, "B={b}");
        }
    }

    #[test]
    fn budget_too_small_errors() {
        assert!(matches!(
            allocate_budget(150, 2, 100, 2),
            Err(Error::BudgetTooSmall(_))
        ));
        assert!(allocate_budget(0, 1, 1, 1).is_err());
        assert!(allocate_budget(100, 0, 1, 1).is_err());
    }

    #[test]
    fn flat_trace_when_starting_at_optimum_with_zero_gradient() {
        // Zero residuals and anchor at the current point: gradient is zero,
        // so training stays put and the trace is flat.
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let zeros = ParamVector::zeros(2);
        let data = line_data(&[0.5, -1.0, 2.0], &[0.0, 0.0, 0.0]);
        let cfg = TrainConfig {
            epochs: 20,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let (theta, trace) = train(&arch, &prior, &zeros, &zeros, &data, &cfg).unwrap();
        assert_eq!(theta.as_slice(), zeros.as_slice());
        for w in trace.windows(2) {
            assert_eq!(w[0], w[1]);
        }
    }

    #[test]
    fn full_batch_training_reaches_closed_form_optimum() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let xs = [0.3, 1.2, -0.8, 0.9];
        let ys = [0.8, 2.3, -1.1, 1.8];
        let data = line_data(&xs, &ys);
        let anchor = ParamVector::new(vec![0.4, -0.6]);

        // The anchored optimum is the posterior mean with the prior recentered
        // at the anchor.
        let design =
            Matrix::from_rows(&xs.iter().map(|&x| vec![x, 1.0]).collect::<Vec<_>>()).unwrap();
        let anchored_prior =
            GaussianPrior::new(anchor.clone(), prior.std().clone()).unwrap();
        let exact = oracle::linear_posterior(&design, &ys, 1.0, &anchored_prior).unwrap();

        let cfg = TrainConfig {
            epochs: 4000,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 0.05,
            ..TrainConfig::default()
        };
        let init = ParamVector::zeros(2);
        let (theta, trace) = train(&arch, &prior, &anchor, &init, &data, &cfg).unwrap();
        // Convex quadratic: full convergence lands on the closed form.
        for j in 0..2 {
            assert!(
                (theta[j] - exact.mean()[j]).abs() < 1e-6,
                "param {j}: trained {} vs exact {}",
                theta[j],
                exact.mean()[j]
            );
        }
        // Full-batch gradient descent on a convex quadratic with a small
        // learning rate descends monotonically.
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let data = line_data(&[1.0, 2.0], &[1.0, 3.0]);
        let cfg = TrainConfig {
            epochs: 50,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        let err = train(
            &arch,
            &prior,
            &ParamVector::zeros(2),
            &ParamVector::new(vec![0.1, 0.1]),
            &data,
            &cfg,
        )
        .unwrap_err();
        match err {
            Error::NonFiniteLoss { epoch, .. } => assert!(epoch < 50),
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    fn quick_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.05,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn ae_is_deterministic_in_master_seed() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let data = line_data(&[0.1, 0.7, -0.4], &[0.3, 1.2, -0.2]);
        let a = train_anchored_ensemble(&arch, &prior, &data, 3, &quick_cfg(30), 99).unwrap();
        let b = train_anchored_ensemble(&arch, &prior, &data, 3, &quick_cfg(30), 99).unwrap();
        for (x, y) in a.ensemble.members().iter().zip(b.ensemble.members()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        let c = train_anchored_ensemble(&arch, &prior, &data, 3, &quick_cfg(30), 100).unwrap();
        assert_ne!(
            a.ensemble.members()[0].as_slice(),
            c.ensemble.members()[0].as_slice()
        );
    }

    #[test]
    fn degenerate_sae_plan_equals_ae() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let data = line_data(&[0.1, 0.7, -0.4], &[0.3, 1.2, -0.2]);
        let plan = allocate_budget(3 * 40, 3, 40, 5).unwrap();
        assert_eq!(plan.members_per_chain_after_first, 0);

        let cfg = quick_cfg(40);
        let sae = train_sequential_anchored_ensemble(
            &arch,
            &prior,
            &data,
            &plan,
            &cfg,
            &TrainConfig { epochs: 5, ..cfg },
            &ChainConfig::default(),
            7,
        )
        .unwrap();
        let ae = train_anchored_ensemble(&arch, &prior, &data, 3, &cfg, 7).unwrap();
        assert_eq!(sae.ensemble.len(), ae.ensemble.len());
        for (x, y) in sae.ensemble.members().iter().zip(ae.ensemble.members()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
        for (x, y) in sae.ensemble.anchors().iter().zip(ae.ensemble.anchors()) {
            assert_eq!(x.as_slice(), y.as_slice());
        }
    }

    #[test]
    fn sae_epoch_bookkeeping_is_exact() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let data = line_data(&[0.4, -0.9], &[0.6, -1.0]);
        let plan = allocate_budget(100, 2, 20, 5).unwrap();
        assert_eq!(plan.members_per_chain_after_first, 6);
        let run = train_sequential_anchored_ensemble(
            &arch,
            &prior,
            &data,
            &plan,
            &quick_cfg(20),
            &quick_cfg(5),
            &ChainConfig::default(),
            11,
        )
        .unwrap();
        assert_eq!(run.ensemble.len(), plan.total_members);
        assert_eq!(run.ensemble.total_epochs(), plan.spent_epochs());
        assert_eq!(run.ensemble.total_epochs(), 2 * (20 + 6 * 5));
        // Members are ordered by (chain, index within chain).
        let prov = run.ensemble.provenance();
        for w in prov.windows(2) {
            assert!(
                (w[1].chain, w[1].index_in_chain) > (w[0].chain, w[0].index_in_chain)
            );
        }
        // Trace lengths match the per-member epoch counts.
        for (t, p) in run.member_traces.iter().zip(prov.iter()) {
            assert_eq!(t.losses.len(), p.epochs);
        }
    }

    #[test]
    fn single_member_matches_direct_training() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let data = line_data(&[0.2, 0.8], &[0.1, 0.9]);
        let cfg = quick_cfg(25);
        let run = train_anchored_ensemble(&arch, &prior, &data, 1, &cfg, 31).unwrap();
        assert_eq!(run.ensemble.len(), 1);

        // Rebuild the same substreams by hand and train directly.
        let mut streams = ChainStreams::new(derive_seed(31, &[stream::ANCHOR, 0]), 2);
        let anchor = initial_anchor(&prior, &mut streams);
        let mut init_rng = substream(31, &[stream::INIT, 0, 0]);
        let init = nn::init_params(&arch, &mut init_rng);
        let mut cfg0 = cfg;
        cfg0.seed = derive_seed(31, &[stream::SHUFFLE, 0, 0]);
        let (theta, _) = train(&arch, &prior, anchor.theta(), &init, &data, &cfg0).unwrap();
        assert_eq!(run.ensemble.members()[0].as_slice(), theta.as_slice());
    }

    #[test]
    fn warm_start_lowers_first_epoch_loss() {
        let arch = MlpArchitecture::new(vec![1, 4, 1], Activation::Tanh, Task::Regression, 0.3)
            .unwrap();
        let p = arch.parameter_count();
        let prior = GaussianPrior::standard(p);
        let xs: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
        let data = line_data(&xs, &ys);

        let plan = allocate_budget(200, 1, 100, 2).unwrap();
        let run = train_sequential_anchored_ensemble(
            &arch,
            &prior,
            &data,
            &plan,
            &TrainConfig { epochs: 100, learning_rate: 0.05, ..TrainConfig::default() },
            &TrainConfig { epochs: 2, learning_rate: 0.05, ..TrainConfig::default() },
            &ChainConfig::default(),
            5,
        )
        .unwrap();
        let cold_start = run.member_traces[0].losses[0];
        let mut warmer = 0usize;
        for t in &run.member_traces[1..] {
            if t.losses[0] < cold_start {
                warmer += 1;
            }
        }
        // Warm starts sit far below the fresh-initialization peak.
        assert!(warmer * 10 >= (run.member_traces.len() - 1) * 9);
    }

    #[test]
    fn minibatch_paths_are_deterministic_and_converge() {
        let arch = lin_arch();
        let prior = GaussianPrior::standard(2);
        let xs = [0.3, 1.2, -0.8, 0.9, 0.0, 2.0];
        let ys = [0.9, 2.8, -1.3, 2.0, 0.4, 4.1];
        let data = line_data(&xs, &ys);
        let cfg = TrainConfig {
            epochs: 800,
            batch_size: 2,
            learning_rate: 0.02,
            optimizer: OptimizerKind::Adam,
            seed: 3,
            ..TrainConfig::default()
        };
        let anchor = ParamVector::zeros(2);
        let init = ParamVector::zeros(2);
        let (a, _) = train(&arch, &prior, &anchor, &init, &data, &cfg).unwrap();
        let (b, _) = train(&arch, &prior, &anchor, &init, &data, &cfg).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());

        let design =
            Matrix::from_rows(&xs.iter().map(|&x| vec![x, 1.0]).collect::<Vec<_>>()).unwrap();
        let exact = oracle::linear_posterior(&design, &ys, 1.0, &prior).unwrap();
        for j in 0..2 {
            assert!(
                (a[j] - exact.mean()[j]).abs() < 0.05,
                "param {j}: {} vs {}",
                a[j],
                exact.mean()[j]
            );
        }
    }

    #[test]
    fn ensemble_round_trips_through_file() {
        let arch = lin_arch();
        let prior = GaussianPrior::isotropic(2, 0.1, 1.3).unwrap();
        let data = line_data(&[0.5, -0.2], &[0.4, 0.0]);
        let mut run = train_anchored_ensemble(&arch, &prior, &data, 2, &quick_cfg(10), 17)
            .unwrap();
        run.ensemble.set_meta(r#"{"note":"round-trip"}"#);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ensemble.bin");
        save_ensemble(&run.ensemble, &path).unwrap();
        let loaded = load_ensemble(&path).unwrap();

        assert_eq!(loaded.len(), run.ensemble.len());
        assert_eq!(loaded.arch(), run.ensemble.arch());
        assert_eq!(loaded.meta(), run.ensemble.meta());
        assert_eq!(loaded.provenance(), run.ensemble.provenance());
        for (a, b) in loaded.members().iter().zip(run.ensemble.members()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        for (a, b) in loaded.anchors().iter().zip(run.ensemble.anchors()) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        assert_eq!(loaded.prior().mean().as_slice(), run.ensemble.prior().mean().as_slice());
        assert_eq!(loaded.prior().std().as_slice(), run.ensemble.prior().std().as_slice());
    }

    #[test]
    fn load_rejects_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"not an ensemble").unwrap();
        assert!(matches!(load_ensemble(&path), Err(Error::Format(_))));
    }
}

//! Training protocols and their evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::build::{build_case1_dataset, UplinkSpec};
use super::dataset::{mix, Dataset, Reference};
use crate::error::{Error, Result};
use crate::netsim::{sample_uplink_scenario, UplinkScenario};
use crate::nn::{fine_tune, relative_mse, train, Loss, MlpModel, OutputActivation, TrainConfig, TrainReport};
use crate::numeric::dbm_to_watts;
use crate::oracles::{full_power, gee, DinkelbachConfig, PowerAllocation};
use crate::rng::{derive_seed, stream};

/// Relative MSE of physical-scale predictions against a labeled set.
pub fn test_error(model: &MlpModel, test_set: &Dataset) -> Result<f64> {
    relative_mse(&model.predict(&test_set.features)?, &test_set.targets)
}

fn architecture(n_in: usize, hidden: &[usize], n_out: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(n_in);
    sizes.extend_from_slice(hidden);
    sizes.push(n_out);
    sizes
}

const INIT_ATTEMPTS: u64 = 100;

/// He-initialized network in which no hidden layer is inactive on every row of `x`.
///
/// With low-dimensional inputs and zero biases a narrow layer is often dead for
/// all inputs at initialization, which pins the network to a constant. Such draws
/// are replaced by the next seed in a deterministic sequence.
pub fn init_alive(sizes: &[usize], activation: OutputActivation, seed: u64, x: &crate::nn::Matrix) -> Result<MlpModel> {
    for attempt in 0..INIT_ATTEMPTS {
        let s = if attempt == 0 { seed } else { derive_seed(seed, 0, attempt) };
        let model = MlpModel::init(sizes, activation, s)?;
        let dead = model.dead_units(x);
        if dead.iter().zip(&sizes[1..]).all(|(d, n)| d < n) {
            return Ok(model);
        }
    }
    Err(Error::NonConvergence(format!("no live initialization for {sizes:?} in {INIT_ATTEMPTS} draws")))
}

/// Fresh network for `data`, trained with statistics fitted on `data` itself.
fn train_from_scratch(
    data: &Dataset,
    hidden: &[usize],
    activation: OutputActivation,
    init_seed: u64,
    cfg: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let norm = data.normalize(Reference::Own)?;
    let sizes = architecture(data.features.cols(), hidden, data.targets.cols());
    let model = init_alive(&sizes, activation, init_seed, &norm.x)?.with_scaling(norm.scaling)?;
    train(&model, &norm.x, &norm.y, cfg)
}

/// Learning to optimize a model: the uplink power-control study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UplinkExperiment {
    pub uplink: UplinkSpec,
    pub n_train: usize,
    pub n_test: usize,
    /// Evaluation points in dBm.
    pub pmax_sweep_dbm: Vec<f64>,
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for UplinkExperiment {
    fn default() -> Self {
        UplinkExperiment {
            uplink: UplinkSpec::default(),
            n_train: 2000,
            n_test: 500,
            pmax_sweep_dbm: (0..8).map(|i| -10.0 + 20.0 * i as f64 / 7.0).collect(),
            hidden: vec![18, 18, 16, 16, 14, 14, 12, 12],
            train: TrainConfig { epochs: 200, batch_size: 32, loss: Loss::Mse, ..TrainConfig::default() },
        }
    }
}

/// Per-drop GEE of the network, the solver and full power at one `pmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeePoint {
    pub pmax_dbm: f64,
    pub ann: Vec<f64>,
    pub oracle: Vec<f64>,
    pub full_power: Vec<f64>,
    /// Drops dropped because the reference solver did not converge.
    pub excluded: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl GeePoint {
    pub fn mean_ann(&self) -> f64 {
        mean(&self.ann)
    }

    pub fn mean_oracle(&self) -> f64 {
        mean(&self.oracle)
    }

    pub fn mean_full_power(&self) -> f64 {
        mean(&self.full_power)
    }

    /// Mean network GEE over mean optimal GEE.
    pub fn ann_ratio(&self) -> f64 {
        self.mean_ann() / self.mean_oracle()
    }
}

#[derive(Debug, Clone)]
pub struct UplinkResult {
    pub model: MlpModel,
    pub report: TrainReport,
    pub train_rejected: usize,
    pub points: Vec<GeePoint>,
}

/// Power allocation predicted by a Case-1 network for one scenario.
pub fn predict_allocation(model: &MlpModel, scenario: &UplinkScenario, pmax_dbm: f64) -> Result<PowerAllocation> {
    let mut row = scenario.gains.clone();
    row.push(pmax_dbm);
    let x = crate::nn::Matrix::new(1, row.len(), row)?;
    let ratios = model.predict(&x)?;
    let p = ratios.row(0).iter().map(|r| r.clamp(0.0, 1.0) * scenario.pmax).collect();
    PowerAllocation::new(p, scenario)
}

/// Test drops, independent of every training drop.
pub fn uplink_test_drops(spec: &UplinkSpec, n: usize, master_seed: u64) -> Result<Vec<UplinkScenario>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample_uplink_scenario(spec.n_users, spec.radius_m, 1.0, &spec.link, derive_seed(master_seed, stream::CASE1_TEST, i)))
        .collect()
}

/// GEE of network, solver and full power on every drop at every `pmax`.
pub fn evaluate_uplink(
    model: &MlpModel,
    drops: &[UplinkScenario],
    sweep_dbm: &[f64],
    solver: &DinkelbachConfig,
) -> Result<Vec<GeePoint>> {
    sweep_dbm
        .iter()
        .map(|&pmax_dbm| {
            let rows: Vec<Option<[f64; 3]>> = drops
                .par_iter()
                .enumerate()
                .map(|(i, d)| {
                    let s = d.with_pmax(dbm_to_watts(pmax_dbm))?;
                    let sol = DinkelbachConfig { seed: derive_seed(solver.seed, stream::SOLVER, i as u64), ..*solver }.solve(&s)?;
                    if !sol.converged() {
                        return Ok(None);
                    }
                    let ann = gee(&s, &predict_allocation(model, &s, pmax_dbm)?)?;
                    Ok(Some([ann, sol.gee, gee(&s, &full_power(&s))?]))
                })
                .collect::<Result<_>>()?;
            let mut point = GeePoint { pmax_dbm, ann: vec![], oracle: vec![], full_power: vec![], excluded: 0 };
            for r in rows {
                match r {
                    Some([a, o, f]) => {
                        point.ann.push(a);
                        point.oracle.push(o);
                        point.full_power.push(f);
                    }
                    None => point.excluded += 1,
                }
            }
            if point.ann.is_empty() {
                return Err(Error::NonConvergence(format!("no test drop converged at {pmax_dbm} dBm")));
            }
            Ok(point)
        })
        .collect()
}

/// Builds the solver-labeled training set, trains a network on it and evaluates
/// the achieved GEE on independent drops.
pub fn run_protocol_a(exp: &UplinkExperiment, master_seed: u64) -> Result<UplinkResult> {
    if exp.pmax_sweep_dbm.is_empty() {
        return Err(Error::invalid("empty pmax sweep"));
    }
    let generated = build_case1_dataset(exp.n_train, &exp.uplink, derive_seed(master_seed, stream::CASE1_TRAIN, 0))?;
    let cfg = TrainConfig { seed: derive_seed(master_seed, stream::TRAINING, 0), ..exp.train };
    let (model, report) = train_from_scratch(
        &generated.dataset,
        &exp.hidden,
        OutputActivation::ClampedUnit,
        derive_seed(master_seed, stream::TRAINING, 1),
        &cfg,
    )?;
    let points = evaluate_protocol_a(&model, exp, master_seed)?;
    Ok(UplinkResult { model, report, train_rejected: generated.rejected, points })
}

/// The evaluation step of [`run_protocol_a`] for an already trained network.
pub fn evaluate_protocol_a(model: &MlpModel, exp: &UplinkExperiment, master_seed: u64) -> Result<Vec<GeePoint>> {
    let drops = uplink_test_drops(&exp.uplink, exp.n_test, master_seed)?;
    let solver = DinkelbachConfig { seed: derive_seed(master_seed, stream::SOLVER, 0), ..exp.uplink.solver };
    evaluate_uplink(model, &drops, &exp.pmax_sweep_dbm, &solver)
}

/// Data for the pre-train / fine-tune study.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferData {
    /// Model-generated pool; arm runs use its first `n_total - x` rows.
    pub model_pool: Dataset,
    /// One empirical pool per replicate; arm runs use its first `x` rows.
    pub empirical_pools: Vec<Dataset>,
    /// Held-out empirical test set.
    pub test: Dataset,
}

/// Target statistics used when fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinetuneTargets {
    /// Keep the pre-training target statistics.
    Pretrain,
    /// Refit target statistics on the fine-tuning set, as the pure-empirical arm does.
    /// Feature statistics always stay those of the pre-training set.
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferExperiment {
    pub n_total: usize,
    pub x_values: Vec<usize>,
    pub replicates: usize,
    pub hidden: Vec<usize>,
    /// Used for pre-training and for single-stage mixed training.
    pub pretrain: TrainConfig,
    /// Used for fine-tuning and for pure-empirical training.
    pub finetune: TrainConfig,
    pub finetune_targets: FinetuneTargets,
}

impl Default for TransferExperiment {
    fn default() -> Self {
        TransferExperiment {
            n_total: 6000,
            x_values: vec![60, 120, 300],
            replicates: 11,
            hidden: vec![8, 8, 2],
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
            finetune_targets: FinetuneTargets::Empirical,
        }
    }
}

impl TransferExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("at least one replicate is required"));
        }
        if self.x_values.is_empty() {
            return Err(Error::invalid("no empirical budgets given"));
        }
        for &x in &self.x_values {
            if x > self.n_total {
                return Err(Error::invalid(format!("x = {x} exceeds n_total = {}", self.n_total)));
            }
            if x == 1 {
                return Err(Error::invalid("x = 1 leaves nothing to validate on; use 0 or at least 2"));
            }
        }
        self.pretrain.validate()?;
        self.finetune.validate()
    }

    pub fn max_x(&self) -> usize {
        self.x_values.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    /// Pre-train on model data, fine-tune on `x` empirical samples.
    Transfer,
    /// Train from scratch on the `x` empirical samples only.
    Empirical,
    /// The pre-trained network without fine-tuning.
    Model,
    /// Single-stage training on the concatenated sets.
    Mixed,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::Transfer, Arm::Empirical, Arm::Model, Arm::Mixed];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Transfer => "transfer",
            Arm::Empirical => "empirical",
            Arm::Model => "model",
            Arm::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
    Train,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
            Phase::Train => "train",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phase: Phase,
    /// Epoch within the phase, starting at 1.
    pub epoch: usize,
    /// Epoch counted from the start of the first phase.
    pub cumulative_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

fn curve(phases: &[(Phase, &TrainReport)]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    let mut total = 0;
    for (phase, rep) in phases {
        for (e, (t, v)) in rep.train_loss.iter().zip(&rep.validation_loss).enumerate() {
            total += 1;
            out.push(CurvePoint { phase: *phase, epoch: e + 1, cumulative_epoch: total, train_loss: *t, validation_loss: *v });
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct ArmRun {
    pub arm: Arm,
    pub x: usize,
    pub replicate: usize,
    /// Empirical rows consumed by this arm.
    pub empirical_used: usize,
    pub test_error: f64,
    /// Validation loss at the end of the arm's last phase.
    pub final_validation: f64,
    pub final_train: f64,
    pub curve: Vec<CurvePoint>,
    pub model: MlpModel,
}

struct Seeds {
    init: u64,
    pretrain: u64,
    finetune: u64,
    mixed: u64,
}

fn job_seeds(master: u64, x: usize, replicate: usize) -> Seeds {
    let base = derive_seed(master, stream::TRAINING, replicate as u64);
    Seeds {
        init: derive_seed(base, 0, 0),
        pretrain: derive_seed(base, 1, x as u64),
        finetune: derive_seed(base, 2, x as u64),
        mixed: derive_seed(base, 3, x as u64),
    }
}

fn check_data(data: &TransferData, exp: &TransferExperiment) -> Result<()> {
    exp.validate()?;
    if data.model_pool.len() < exp.n_total {
        return Err(Error::invalid(format!("model pool has {} rows, need {}", data.model_pool.len(), exp.n_total)));
    }
    if data.empirical_pools.len() < exp.replicates {
        return Err(Error::invalid("fewer empirical pools than replicates"));
    }
    if data.empirical_pools.iter().any(|p| p.len() < exp.max_x()) {
        return Err(Error::invalid(format!("every empirical pool needs at least {} rows", exp.max_x())));
    }
    if data.test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    Ok(())
}

/// Pre-trains on `n_total - x` model rows and fine-tunes on `x` empirical rows.
fn transfer_arm(
    data: &TransferData,
    exp: &TransferExperiment,
    hidden: &[usize],
    x: usize,
    replicate: usize,
    seeds: &Seeds,
) -> Result<(ArmRun, ArmRun)> {
    let model_set = data.model_pool.head(exp.n_total - x)?;
    let empirical = data.empirical_pools[replicate].head(x)?;
    // With no model rows left (x = n_total) the starting point is the untrained
    // network scaled to the empirical rows.
    let (pretrain_set, pretrain_cfg) = if model_set.is_empty() {
        (&empirical, TrainConfig { seed: seeds.pretrain, epochs: 0, ..exp.pretrain })
    } else {
        (&model_set, TrainConfig { seed: seeds.pretrain, ..exp.pretrain })
    };
    let (pretrained, pre_report) =
        train_from_scratch(pretrain_set, hidden, OutputActivation::Linear, seeds.init, &pretrain_cfg)?;
    let model_arm = ArmRun {
        arm: Arm::Model,
        x,
        replicate,
        empirical_used: 0,
        test_error: test_error(&pretrained, &data.test)?,
        final_validation: pre_report.final_validation_loss(),
        final_train: pre_report.final_train_loss(),
        curve: curve(&[(Phase::Pretrain, &pre_report)]),
        model: pretrained.clone(),
    };
    if x == 0 {
        let mut transfer = model_arm.clone();
        transfer.arm = Arm::Transfer;
        return Ok((transfer, model_arm));
    }
    let reference = match exp.finetune_targets {
        FinetuneTargets::Pretrain => Reference::External(pretrained.scaling()),
        FinetuneTargets::Empirical => Reference::ExternalFeatures(pretrained.scaling()),
    };
    let norm = empirical.normalize(reference)?;
    let start = pretrained.clone().with_scaling(norm.scaling)?;
    let (tuned, ft_report) = fine_tune(&start, &norm.x, &norm.y, &TrainConfig { seed: seeds.finetune, ..exp.finetune })?;
    let transfer = ArmRun {
        arm: Arm::Transfer,
        x,
        replicate,
        empirical_used: empirical.empirical_count(),
        test_error: test_error(&tuned, &data.test)?,
        final_validation: ft_report.final_validation_loss(),
        final_train: ft_report.final_train_loss(),
        curve: curve(&[(Phase::Pretrain, &pre_report), (Phase::Finetune, &ft_report)]),
        model: tuned,
    };
    Ok((transfer, model_arm))
}

fn single_stage(
    arm: Arm,
    set: &Dataset,
    data: &TransferData,
    hidden: &[usize],
    x: usize,
    replicate: usize,
    init: u64,
    cfg: &TrainConfig,
) -> Result<ArmRun> {
    let (model, report) = train_from_scratch(set, hidden, OutputActivation::Linear, init, cfg)?;
    Ok(ArmRun {
        arm,
        x,
        replicate,
        empirical_used: set.empirical_count(),
        test_error: test_error(&model, &data.test)?,
        final_validation: report.final_validation_loss(),
        final_train: report.final_train_loss(),
        curve: curve(&[(Phase::Train, &report)]),
        model,
    })
}

fn run_job(data: &TransferData, exp: &TransferExperiment, master: u64, x: usize, replicate: usize) -> Result<Vec<ArmRun>> {
    let seeds = job_seeds(master, x, replicate);
    let (transfer, model_arm) = transfer_arm(data, exp, &exp.hidden, x, replicate, &seeds)?;
    let mut runs = vec![transfer];
    let model_set = data.model_pool.head(exp.n_total - x)?;
    let empirical = data.empirical_pools[replicate].head(x)?;
    if x > 0 {
        let cfg = TrainConfig { seed: seeds.finetune, ..exp.finetune };
        runs.push(single_stage(Arm::Empirical, &empirical, data, &exp.hidden, x, replicate, seeds.init, &cfg)?);
    }
    runs.push(model_arm);
    let mixed = mix(&model_set, &empirical)?;
    let cfg = TrainConfig { seed: seeds.mixed, ..exp.pretrain };
    runs.push(single_stage(Arm::Mixed, &mixed, data, &exp.hidden, x, replicate, seeds.init, &cfg)?);
    Ok(runs)
}

/// The pure-model arm on the full model pool, with the seeds of replicate 0.
pub fn train_model_only(data: &TransferData, exp: &TransferExperiment, master_seed: u64) -> Result<ArmRun> {
    let exp = TransferExperiment { x_values: vec![0], replicates: 1, ..exp.clone() };
    check_data(data, &exp)?;
    let (_, model) = transfer_arm(data, &exp, &exp.hidden, 0, 0, &job_seeds(master_seed, 0, 0))?;
    Ok(model)
}

/// Runs every arm for every `(x, replicate)` pair.
///
/// Jobs are independent and may run in parallel; the output order is fixed.
pub fn run_protocol_b(data: &TransferData, exp: &TransferExperiment, master_seed: u64) -> Result<Vec<ArmRun>> {
    check_data(data, exp)?;
    let jobs: Vec<(usize, usize)> =
        exp.x_values.iter().flat_map(|&x| (0..exp.replicates).map(move |r| (x, r))).collect();
    let runs: Vec<Vec<ArmRun>> = jobs
        .par_iter()
        .map(|&(x, r)| {
            let out = run_job(data, exp, master_seed, x, r);
            if let Ok(runs) = &out {
                for run in runs {
                    log::info!("arm={} x={x} replicate={r} test_error={:.6e}", run.arm.name(), run.test_error);
                }
            }
            out
        })
        .collect::<Result<_>>()?;
    Ok(runs.into_iter().flatten().collect())
}

/// Transfer-arm runs for one candidate architecture.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub hidden: Vec<usize>,
    pub runs: Vec<ArmRun>,
}

/// Runs the pre-train / fine-tune arm at a fixed `x` for each hidden-layer list.
/// Duplicate candidates are run once.
pub fn architecture_sweep(
    data: &TransferData,
    exp: &TransferExperiment,
    x: usize,
    candidates: &[Vec<usize>],
    master_seed: u64,
) -> Result<Vec<SweepResult>> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate architectures"));
    }
    let mut unique: Vec<Vec<usize>> = Vec::new();
    for c in candidates {
        if c.is_empty() || c.contains(&0) {
            return Err(Error::invalid(format!("invalid hidden layers {c:?}")));
        }
        if unique.contains(c) {
            log::warn!("duplicate candidate architecture {c:?} ignored");
        } else {
            unique.push(c.clone());
        }
    }
    let exp = TransferExperiment { x_values: vec![x], ..exp.clone() };
    check_data(data, &exp)?;
    unique
        .into_iter()
        .map(|hidden| {
            let runs = (0..exp.replicates)
                .into_par_iter()
                .map(|r| transfer_arm(data, &exp, &hidden, x, r, &job_seeds(master_seed, x, r)).map(|(t, _)| t))
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepResult { hidden, runs })
        })
        .collect()
}

/// Median of a non-empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median test error of `arm` at budget `x`, if any run matches.
pub fn median_test_error(runs: &[ArmRun], arm: Arm, x: usize) -> Option<f64> {
    let v: Vec<f64> = runs.iter().filter(|r| r.arm == arm && r.x == x).map(|r| r.test_error).collect();
    (!v.is_empty()).then(|| median(&v))
}

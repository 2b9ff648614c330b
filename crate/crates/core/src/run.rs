//! The command-line commands as library calls.
//!
//! Each command writes its results under `cfg.out` and finishes with
//! `manifest_<command>.json`: every written file with its size and SHA-256 digest,
//! the derived seeds, dataset provenance, headline metrics and the resolved
//! configuration. The manifest leaves out the output directory and the worker
//! count and carries no timestamps, so identical configurations give identical
//! manifests. `content_hash` is the SHA-256 of the manifest serialized with an
//! empty `content_hash`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::atomic;
use crate::config::{Case, RunConfig, SweepSpec};
use crate::error::{Error, Result};
use crate::nn::{self, MlpModel};
use crate::pipeline::output::{
    fmt_f64, layers_label, write_csv, write_dataset, write_gee, write_protocol_b, write_report_curve, write_run_curve,
    write_sweep,
};
use crate::pipeline::{
    architecture_sweep, build_case1_dataset, case2_model_pool, case2_test_set, case2_transfer_data, case3_model_pool,
    case3_test_set, case3_transfer_data, evaluate_protocol_a, median, median_test_error, run_protocol_a,
    run_protocol_b, test_error, train_model_only, Arm, Dataset, GeePoint, GridOracle, Provenance, TransferData,
    TransferExperiment,
};
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Gen,
    Train,
    Transfer,
    Eval,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Gen => "gen",
            Command::Train => "train",
            Command::Transfer => "transfer",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetRecord {
    pub name: String,
    pub rows: usize,
    pub empirical_rows: usize,
    pub provenance: Provenance,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    /// Path relative to the output directory.
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: Command,
    pub case: Case,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub datasets: Vec<DatasetRecord>,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<FileRecord>,
    pub config: serde_json::Value,
    pub content_hash: String,
}

impl Manifest {
    pub fn file_name(command: Command) -> String {
        format!("manifest_{}.json", command.name())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn json_err(e: serde_json::Error) -> Error {
    Error::Format(format!("json: {e}"))
}

/// Collects what a command produced.
struct Recorder {
    dir: PathBuf,
    files: Vec<PathBuf>,
    seeds: BTreeMap<String, u64>,
    datasets: Vec<DatasetRecord>,
    metrics: BTreeMap<String, f64>,
}

impl Recorder {
    fn new(cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
        Ok(Recorder {
            dir: cfg.out.clone(),
            files: Vec::new(),
            seeds: BTreeMap::new(),
            datasets: Vec::new(),
            metrics: BTreeMap::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn dataset(&mut self, name: &str, data: &Dataset, seed: u64) {
        log::info!("event=dataset name={name} rows={} empirical_rows={}", data.len(), data.empirical_count());
        self.seeds.insert(format!("data.{name}"), seed);
        self.datasets.push(DatasetRecord {
            name: name.to_string(),
            rows: data.len(),
            empirical_rows: data.empirical_count(),
            provenance: data.provenance,
            seed,
        });
    }

    fn metric(&mut self, key: String, value: f64) {
        log::info!("event=metric {key}={value:e}");
        self.metrics.insert(key, value);
    }

    fn save_model(&mut self, name: &str, model: &MlpModel) -> Result<()> {
        let path = self.path(name);
        nn::save(model, &path)?;
        self.files.push(path);
        Ok(())
    }

    /// Test-set seeds must differ from every training seed.
    fn check_held_out(&self) -> Result<()> {
        let (test, train): (Vec<_>, Vec<_>) = self.seeds.iter().partition(|(k, _)| k.contains("test"));
        for (tk, tv) in &test {
            if let Some((k, _)) = train.iter().find(|(_, v)| v == tv) {
                return Err(Error::invalid(format!("held-out seed {tk} collides with {k}")));
            }
        }
        Ok(())
    }

    fn finish(self, command: Command, cfg: &RunConfig) -> Result<Manifest> {
        self.check_held_out()?;
        let mut files = Vec::with_capacity(self.files.len());
        for path in &self.files {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let name = path.strip_prefix(&self.dir).unwrap_or(path).to_string_lossy().replace('\\', "/");
            files.push(FileRecord { name, bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) });
        }
        files.sort_by(|a, b| a.name.cmp(&b.name));
        files.dedup();
        let mut config = serde_json::to_value(cfg).map_err(json_err)?;
        if let Some(obj) = config.as_object_mut() {
            obj.remove("out");
            obj.remove("workers");
        }
        let mut manifest = Manifest {
            command,
            case: cfg.case,
            master_seed: cfg.seed,
            seeds: self.seeds,
            datasets: self.datasets,
            metrics: self.metrics,
            files,
            config,
            content_hash: String::new(),
        };
        manifest.content_hash = sha256_hex(&serde_json::to_vec(&manifest).map_err(json_err)?);
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(json_err)?;
        bytes.push(b'\n');
        atomic::write(&self.dir.join(Manifest::file_name(command)), &bytes)?;
        log::info!("event=done command={} files={} content_hash={}", command.name(), manifest.files.len(), manifest.content_hash);
        Ok(manifest)
    }
}

fn case_settings(cfg: &RunConfig) -> Result<(&TransferExperiment, &SweepSpec, usize)> {
    cfg.transfer().ok_or_else(|| Error::Config("this command needs case = \"case2\" or \"case3\"".into()))
}

/// Empirical pools hold enough rows for every listed budget and the sweep.
fn pool_size(exp: &TransferExperiment, sweep: &SweepSpec) -> usize {
    exp.max_x().max(sweep.x)
}

fn grid_oracle(cfg: &RunConfig, rec: &mut Recorder) -> Result<GridOracle> {
    let c = &cfg.case2;
    let seed = derive_seed(cfg.seed, stream::GRID_ORACLE, 0);
    rec.seeds.insert("grid_oracle".into(), seed);
    log::info!("event=grid_oracle n_mc={} n_lambda={}", c.n_mc, c.grid.n_lambda);
    GridOracle::new(&c.density, c.n_mc, &c.grid, seed)
}

fn record_transfer_data(rec: &mut Recorder, case: &str, data: &TransferData, master: u64) {
    rec.dataset(&format!("{case}_model"), &data.model_pool, derive_seed(master, stream::MODEL_DATA, 0));
    for (r, pool) in data.empirical_pools.iter().enumerate() {
        rec.dataset(&format!("{case}_empirical_{r}"), pool, derive_seed(master, stream::EMPIRICAL_DATA, r as u64));
    }
    rec.dataset(&format!("{case}_test"), &data.test, derive_seed(master, stream::TEST_DATA, 0));
}

fn transfer_data(cfg: &RunConfig, rec: &mut Recorder) -> Result<TransferData> {
    let (exp, sweep, n_test) = case_settings(cfg)?;
    let pool = pool_size(exp, sweep);
    let data = match cfg.case {
        Case::Case2 => {
            let oracle = grid_oracle(cfg, rec)?;
            case2_transfer_data(&cfg.case2.density, &oracle, exp.n_total, pool, exp.replicates, n_test, cfg.seed)?
        }
        Case::Case3 => case3_transfer_data(&cfg.case3.consumption, exp.n_total, pool, exp.replicates, n_test, cfg.seed)?,
        Case::Case1 => unreachable!("rejected by case_settings"),
    };
    record_transfer_data(rec, cfg.case.name(), &data, cfg.seed);
    Ok(data)
}

fn held_out_set(cfg: &RunConfig, rec: &mut Recorder) -> Result<Dataset> {
    let (_, _, n_test) = case_settings(cfg)?;
    let test = match cfg.case {
        Case::Case2 => case2_test_set(&grid_oracle(cfg, rec)?, n_test, cfg.seed)?,
        Case::Case3 => case3_test_set(&cfg.case3.consumption, n_test, cfg.seed)?,
        Case::Case1 => unreachable!("rejected by case_settings"),
    };
    rec.dataset(&format!("{}_test", cfg.case.name()), &test, derive_seed(cfg.seed, stream::TEST_DATA, 0));
    Ok(test)
}

/// Materializes the datasets of the selected case as CSV files.
pub fn gen(cfg: &RunConfig) -> Result<Manifest> {
    let mut rec = Recorder::new(cfg)?;
    match cfg.case {
        Case::Case1 => {
            let exp = &cfg.case1;
            let seed = derive_seed(cfg.seed, stream::CASE1_TRAIN, 0);
            let g = build_case1_dataset(exp.n_train, &exp.uplink, seed)?;
            rec.dataset("case1_train", &g.dataset, seed);
            rec.metric("case1_train.rejected".into(), g.rejected as f64);
            rec.files.extend(write_dataset(&rec.dir, "case1_train", &g.dataset)?);
        }
        Case::Case2 | Case::Case3 => {
            let case = cfg.case.name();
            let data = transfer_data(cfg, &mut rec)?;
            rec.files.extend(write_dataset(&rec.dir, &format!("{case}_model"), &data.model_pool)?);
            for (r, pool) in data.empirical_pools.iter().enumerate() {
                rec.files.extend(write_dataset(&rec.dir, &format!("{case}_empirical_{r}"), pool)?);
            }
            rec.files.extend(write_dataset(&rec.dir, &format!("{case}_test"), &data.test)?);
        }
    }
    rec.finish(Command::Gen, cfg)
}

fn gee_metrics(rec: &mut Recorder, points: &[GeePoint]) {
    for p in points {
        rec.metric(format!("ann_over_oracle.{:.2}dBm", p.pmax_dbm), p.ann_ratio());
        rec.metric(format!("fullpower_over_oracle.{:.2}dBm", p.pmax_dbm), p.mean_full_power() / p.mean_oracle());
    }
}

/// Case 1: protocol A. Cases 2 and 3: the network trained on the full model pool.
pub fn train(cfg: &RunConfig) -> Result<Manifest> {
    let mut rec = Recorder::new(cfg)?;
    match cfg.case {
        Case::Case1 => {
            let exp = &cfg.case1;
            let res = run_protocol_a(exp, cfg.seed)?;
            rec.seeds.insert("data.case1_train".into(), derive_seed(cfg.seed, stream::CASE1_TRAIN, 0));
            rec.seeds.insert("case1_test_drops".into(), derive_seed(cfg.seed, stream::CASE1_TEST, 0));
            rec.metric("case1_train.rejected".into(), res.train_rejected as f64);
            rec.metric("final_validation_loss".into(), res.report.final_validation_loss());
            gee_metrics(&mut rec, &res.points);
            rec.save_model("model_case1.mlp", &res.model)?;
            let curve = rec.path(&format!("curves_case1_train_{}_0.csv", exp.n_train));
            write_report_curve(&curve, &res.report)?;
            rec.files.push(curve);
            rec.files.extend(write_gee(&rec.dir, &res.points)?);
        }
        Case::Case2 | Case::Case3 => {
            let case = cfg.case.name();
            let (exp, _, _) = case_settings(cfg)?;
            let model_pool = match cfg.case {
                Case::Case2 => case2_model_pool(&cfg.case2.density, exp.n_total, cfg.seed)?,
                _ => case3_model_pool(&cfg.case3.consumption, exp.n_total, cfg.seed)?,
            };
            rec.dataset(&format!("{case}_model"), &model_pool, derive_seed(cfg.seed, stream::MODEL_DATA, 0));
            let test = held_out_set(cfg, &mut rec)?;
            let data = TransferData { empirical_pools: vec![model_pool.empty_like(Provenance::Empirical)], model_pool, test };
            let run = train_model_only(&data, exp, cfg.seed)?;
            rec.metric("test_error".into(), run.test_error);
            rec.save_model(&format!("model_{case}_model.mlp"), &run.model)?;
            let curve = rec.path(&format!("curves_{case}_model_0_0.csv"));
            write_run_curve(&curve, &run)?;
            rec.files.push(curve);
            let path = rec.path(&format!("testerr_{case}_model.csv"));
            write_csv(
                &path,
                &["x", "arm", "seed", "empirical_used", "test_error"],
                &[vec!["0".into(), "model".into(), "0".into(), "0".into(), fmt_f64(run.test_error)]],
            )?;
            rec.files.push(path);
        }
    }
    rec.finish(Command::Train, cfg)
}

/// Protocol B: every arm for every budget and replicate.
pub fn transfer(cfg: &RunConfig) -> Result<Manifest> {
    let (exp, _, _) = case_settings(cfg)?;
    let mut rec = Recorder::new(cfg)?;
    let case = cfg.case.name();
    let data = transfer_data(cfg, &mut rec)?;
    let runs = run_protocol_b(&data, exp, cfg.seed)?;
    for &x in &exp.x_values {
        for arm in Arm::ALL {
            if let Some(m) = median_test_error(&runs, arm, x) {
                rec.metric(format!("median_test_error.{}.{x}", arm.name()), m);
            }
        }
    }
    for run in &runs {
        rec.save_model(&format!("model_{case}_{}_{}_{}.mlp", run.arm.name(), run.x, run.replicate), &run.model)?;
    }
    rec.files.extend(write_protocol_b(&rec.dir, case, &runs)?);
    rec.finish(Command::Transfer, cfg)
}

/// Re-evaluates a saved network on the held-out data of the selected case.
///
/// Writes `eval_<model stem>.csv`: the test error for cases 2 and 3, the GEE
/// sweep for case 1.
pub fn eval(cfg: &RunConfig, model_path: &Path) -> Result<Manifest> {
    let model = nn::load(model_path)?;
    let mut rec = Recorder::new(cfg)?;
    let stem = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
    let path = rec.path(&format!("eval_{stem}.csv"));
    match cfg.case {
        Case::Case1 => {
            rec.seeds.insert("case1_test_drops".into(), derive_seed(cfg.seed, stream::CASE1_TEST, 0));
            let points = evaluate_protocol_a(&model, &cfg.case1, cfg.seed)?;
            gee_metrics(&mut rec, &points);
            let rows: Vec<Vec<String>> = points
                .iter()
                .map(|p| {
                    vec![
                        fmt_f64(p.pmax_dbm),
                        fmt_f64(p.mean_ann()),
                        fmt_f64(p.mean_oracle()),
                        fmt_f64(p.mean_full_power()),
                        fmt_f64(p.ann_ratio()),
                        p.excluded.to_string(),
                    ]
                })
                .collect();
            write_csv(&path, &["pmax_dBm", "ann_gee", "oracle_gee", "fullpower_gee", "ann_over_oracle", "excluded"], &rows)?;
        }
        Case::Case2 | Case::Case3 => {
            let test = held_out_set(cfg, &mut rec)?;
            let err = test_error(&model, &test)?;
            rec.metric("test_error".into(), err);
            write_csv(&path, &["model", "n_test", "test_error"], &[vec![stem.clone(), test.len().to_string(), fmt_f64(err)]])?;
        }
    }
    rec.files.push(path);
    rec.finish(Command::Eval, cfg)
}

/// Pre-train / fine-tune runs for every candidate architecture at the sweep budget.
pub fn sweep(cfg: &RunConfig) -> Result<Manifest> {
    let (exp, spec, _) = case_settings(cfg)?;
    let mut rec = Recorder::new(cfg)?;
    let data = transfer_data(cfg, &mut rec)?;
    let results = architecture_sweep(&data, exp, spec.x, &spec.candidates, cfg.seed)?;
    for r in &results {
        let label = layers_label(&r.hidden);
        let val: Vec<f64> = r.runs.iter().map(|run| run.final_validation).collect();
        let test: Vec<f64> = r.runs.iter().map(|run| run.test_error).collect();
        rec.metric(format!("median_final_validation.{label}"), median(&val));
        rec.metric(format!("median_test_error.{label}"), median(&test));
    }
    rec.files.extend(write_sweep(&rec.dir, cfg.case.name(), &results)?);
    rec.finish(Command::Sweep, cfg)
}

/// Dispatches `command`; `eval` requires `model`.
pub fn execute(command: Command, cfg: &RunConfig, model: Option<&Path>) -> Result<Manifest> {
    log::info!("event=start command={} case={} seed={}", command.name(), cfg.case.name(), cfg.seed);
    match command {
        Command::Gen => gen(cfg),
        Command::Train => train(cfg),
        Command::Transfer => transfer(cfg),
        Command::Sweep => sweep(cfg),
        Command::Eval => {
            let model = model.ok_or_else(|| Error::Config("eval needs a model file".into()))?;
            eval(cfg, model)
        }
    }
}

/// Sizes the global worker pool; `0` keeps one thread per core.
///
/// Results do not depend on the pool size.
pub fn configure_workers(workers: usize) -> Result<()> {
    if workers == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

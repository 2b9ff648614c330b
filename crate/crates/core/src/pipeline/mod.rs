//! Dataset construction and the two training protocols.
//!
//! Protocol A trains a network on oracle-labeled data and measures how close its
//! decisions come to the oracle. Protocol B pre-trains on plentiful model-generated
//! data, fine-tunes on a small empirical set, and compares against training on the
//! empirical set alone, on the model alone, and on the concatenation of both.

mod build;
mod dataset;
pub mod output;
mod protocol;

pub use build::{
    build_case1_dataset, build_case2_empirical_dataset, build_case2_model_dataset, build_case3_datasets,
    build_case3_empirical, build_case3_model, ConsumptionSpec, DensitySpec, Generated, GridOracle, UplinkSpec,
};
pub use dataset::{mix, ColumnSpec, Dataset, Normalized, Provenance, Reference};
pub use protocol::{
    architecture_sweep, evaluate_protocol_a, evaluate_uplink, FinetuneTargets, median, median_test_error, predict_allocation, run_protocol_a,
    run_protocol_b, test_error, train_model_only, uplink_test_drops, Arm, ArmRun, CurvePoint, GeePoint, Phase, SweepResult,
    TransferData, TransferExperiment, UplinkExperiment, UplinkResult,
};

use crate::error::Result;
use crate::rng::{derive_seed, stream};

fn log_rejected(what: &str, g: &Generated) {
    if g.rejected > 0 {
        log::info!("{what}: {} draws rejected at a bracket endpoint", g.rejected);
    }
}

/// Poisson-model pool, per-replicate grid pools of `pool_size` rows and a grid test set.
pub fn case2_transfer_data(
    spec: &DensitySpec,
    oracle: &GridOracle,
    n_total: usize,
    pool_size: usize,
    replicates: usize,
    n_test: usize,
    master_seed: u64,
) -> Result<TransferData> {
    let model_pool = case2_model_pool(spec, n_total, master_seed)?;
    let empirical_pools = (0..replicates)
        .map(|r| {
            let g = build_case2_empirical_dataset(pool_size, oracle, derive_seed(master_seed, stream::EMPIRICAL_DATA, r as u64))?;
            log_rejected("empirical pool", &g);
            Ok(g.dataset)
        })
        .collect::<Result<_>>()?;
    let test = case2_test_set(oracle, n_test, master_seed)?;
    Ok(TransferData { model_pool, empirical_pools, test })
}

/// Uniform-consumption pool, per-replicate Gaussian pools and a Gaussian test set.
pub fn case3_transfer_data(
    spec: &ConsumptionSpec,
    n_total: usize,
    pool_size: usize,
    replicates: usize,
    n_test: usize,
    master_seed: u64,
) -> Result<TransferData> {
    let model_pool = case3_model_pool(spec, n_total, master_seed)?;
    let empirical_pools = (0..replicates)
        .map(|r| {
            let g = build_case3_empirical(pool_size, spec, derive_seed(master_seed, stream::EMPIRICAL_DATA, r as u64))?;
            log_rejected("empirical pool", &g);
            Ok(g.dataset)
        })
        .collect::<Result<_>>()?;
    let test = case3_test_set(spec, n_test, master_seed)?;
    Ok(TransferData { model_pool, empirical_pools, test })
}

/// Held-out square-grid samples; the same rows [`case2_transfer_data`] tests on.
pub fn case2_test_set(oracle: &GridOracle, n_test: usize, master_seed: u64) -> Result<Dataset> {
    let test = build_case2_empirical_dataset(n_test, oracle, derive_seed(master_seed, stream::TEST_DATA, 0))?;
    log_rejected("test set", &test);
    Ok(test.dataset)
}

/// Held-out Gaussian-consumption samples; the same rows [`case3_transfer_data`] tests on.
pub fn case3_test_set(spec: &ConsumptionSpec, n_test: usize, master_seed: u64) -> Result<Dataset> {
    let test = build_case3_empirical(n_test, spec, derive_seed(master_seed, stream::TEST_DATA, 0))?;
    log_rejected("test set", &test);
    Ok(test.dataset)
}

/// Poisson-model rows for pre-training.
pub fn case2_model_pool(spec: &DensitySpec, n_total: usize, master_seed: u64) -> Result<Dataset> {
    let model = build_case2_model_dataset(n_total, spec, derive_seed(master_seed, stream::MODEL_DATA, 0))?;
    log_rejected("model pool", &model);
    Ok(model.dataset)
}

/// Uniform-consumption rows for pre-training.
pub fn case3_model_pool(spec: &ConsumptionSpec, n_total: usize, master_seed: u64) -> Result<Dataset> {
    let model = build_case3_model(n_total, spec, derive_seed(master_seed, stream::MODEL_DATA, 0))?;
    log_rejected("model pool", &model);
    Ok(model.dataset)
}

//! Labeled dataset generators for the three studies.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::{ColumnSpec, Dataset, Provenance};
use crate::error::{Error, Result};
use crate::netsim::{sample_uplink_scenario, CellularParams, DeploymentKind, LinkBudget, UplinkScenario};
use crate::nn::{Matrix, Transform};
use crate::numeric::dbm_to_watts;
use crate::oracles::{
    consumption_model_oracle, optimal_density_analytic, ConsumptionLaw, ConsumptionModel, CoverageBank,
    DensityBracket, DinkelbachConfig, GridDensitySolution, GridMcConfig, NOISE_LIMIT,
};
use crate::rng::{derive_seed, rng_from_seed};

/// Samples are drawn in chunks so rejected draws can be replaced without
/// making the result depend on thread scheduling.
fn collect_rows<F>(n: usize, seed: u64, draw: F) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, usize)>
where
    F: Fn(u64) -> Result<Option<(Vec<f64>, Vec<f64>)>> + Sync,
{
    let mut rows = Vec::with_capacity(n);
    let mut rejected = 0usize;
    let mut next = 0u64;
    while rows.len() < n {
        if rejected > 10 * n.max(10) {
            return Err(Error::NonConvergence(format!(
                "{rejected} of {next} draws were rejected while collecting {n} samples"
            )));
        }
        let want = (n - rows.len()) as u64;
        let chunk: Vec<Option<(Vec<f64>, Vec<f64>)>> =
            (next..next + want).into_par_iter().map(|i| draw(derive_seed(seed, 0, i))).collect::<Result<_>>()?;
        next += want;
        for r in chunk {
            match r {
                Some(row) => rows.push(row),
                None => rejected += 1,
            }
        }
    }
    Ok((rows, rejected))
}

fn to_dataset(
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    provenance: Provenance,
    feature_columns: Vec<ColumnSpec>,
    target_columns: Vec<ColumnSpec>,
) -> Result<Dataset> {
    let mut x = Matrix::empty(feature_columns.len());
    let mut y = Matrix::empty(target_columns.len());
    for (f, t) in rows {
        x.push_row(&f)?;
        y.push_row(&t)?;
    }
    Dataset::new(x, y, provenance, feature_columns, target_columns)
}

/// A generated dataset and the number of draws that were discarded.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub dataset: Dataset,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UplinkSpec {
    pub n_users: usize,
    pub radius_m: f64,
    /// `pmax` is drawn uniformly in dBm over this range.
    pub pmax_dbm: [f64; 2],
    pub link: LinkBudget,
    pub solver: DinkelbachConfig,
}

impl Default for UplinkSpec {
    fn default() -> Self {
        UplinkSpec {
            n_users: 5,
            radius_m: 500.0,
            pmax_dbm: [-10.0, 10.0],
            link: LinkBudget::default(),
            solver: DinkelbachConfig::default(),
        }
    }
}

impl UplinkSpec {
    pub fn feature_columns(&self) -> Vec<ColumnSpec> {
        let mut c: Vec<ColumnSpec> = (0..self.n_users)
            .map(|k| ColumnSpec::new(&format!("gain_{k}"), "linear", Transform::Log10, true))
            .collect();
        c.push(ColumnSpec::new("pmax", "dBm", Transform::Identity, true));
        c
    }

    pub fn target_columns(&self) -> Vec<ColumnSpec> {
        (0..self.n_users).map(|k| ColumnSpec::new(&format!("p_{k}_over_pmax"), "ratio", Transform::Identity, false)).collect()
    }

    /// Rebuilds the scenario a Case-1 feature row describes.
    pub fn scenario_from_row(&self, row: &[f64]) -> Result<UplinkScenario> {
        if row.len() != self.n_users + 1 {
            return Err(Error::Shape(format!("{} features for {} users", row.len(), self.n_users)));
        }
        UplinkScenario::from_gains(
            row[..self.n_users].to_vec(),
            dbm_to_watts(self.link.noise_power_dbm),
            dbm_to_watts(row[self.n_users]),
            self.link.circuit_power,
            self.link.amplifier_inefficiency,
            self.link.bandwidth_hz,
        )
    }
}

/// Uplink drops labeled with the Dinkelbach power allocation.
///
/// Features are the user gains and `pmax` in dBm; targets are `p_k / pmax`.
/// Drops whose solver did not converge are excluded and counted.
pub fn build_case1_dataset(n: usize, spec: &UplinkSpec, seed: u64) -> Result<Generated> {
    if !(spec.pmax_dbm[0] <= spec.pmax_dbm[1]) {
        return Err(Error::invalid("empty pmax range"));
    }
    let (rows, rejected) = collect_rows(n, seed, |s| {
        let mut rng = rng_from_seed(derive_seed(s, 1, 0));
        let pmax_dbm = spec.pmax_dbm[0] + (spec.pmax_dbm[1] - spec.pmax_dbm[0]) * rng.random::<f64>();
        let scenario = sample_uplink_scenario(spec.n_users, spec.radius_m, dbm_to_watts(pmax_dbm), &spec.link, s)?;
        let solver = DinkelbachConfig { seed: derive_seed(s, 2, 0), ..spec.solver };
        let sol = solver.solve(&scenario)?;
        if !sol.converged() {
            return Ok(None);
        }
        let mut features = scenario.gains.clone();
        features.push(pmax_dbm);
        let targets = sol.power.0.iter().map(|p| (p / scenario.pmax).clamp(0.0, 1.0)).collect();
        Ok(Some((features, targets)))
    })?;
    if rejected > 0 {
        log::warn!("excluded {rejected} uplink drops whose solver did not converge");
    }
    Ok(Generated {
        dataset: to_dataset(rows, Provenance::Model, spec.feature_columns(), spec.target_columns())?,
        rejected,
    })
}

/// Density-optimization setup shared by the model and empirical generators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub params: CellularParams,
    /// Transmit power is drawn uniformly in dBm (log-uniformly in watts).
    pub tx_power_dbm: [f64; 2],
    pub bracket: DensityBracket,
    /// Golden-section tolerance in `ln λ`.
    pub tol: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        DensitySpec {
            params: CellularParams::default(),
            tx_power_dbm: [30.0, 46.0],
            bracket: DensityBracket::default(),
            tol: 1e-6,
        }
    }
}

impl DensitySpec {
    fn draw_power(&self, seed: u64) -> f64 {
        let mut rng = rng_from_seed(seed);
        dbm_to_watts(self.tx_power_dbm[0] + (self.tx_power_dbm[1] - self.tx_power_dbm[0]) * rng.random::<f64>())
    }

    fn columns() -> (Vec<ColumnSpec>, Vec<ColumnSpec>) {
        (
            vec![ColumnSpec::new("tx_power", "W", Transform::Log10, true)],
            vec![ColumnSpec::new("lambda_star", "1/m2", Transform::Log10, true)],
        )
    }
}

/// Transmit powers labeled with the analytic Poisson-deployment optimal density.
/// Maximizers on a bracket endpoint are rejected.
pub fn build_case2_model_dataset(n: usize, spec: &DensitySpec, seed: u64) -> Result<Generated> {
    spec.params.validate()?;
    let (rows, rejected) = collect_rows(n, seed, |s| {
        let p = spec.draw_power(s);
        let params = CellularParams { tx_power: p, ..spec.params };
        let sol = optimal_density_analytic(&params, spec.bracket, spec.tol)?;
        Ok((!sol.at_boundary).then(|| (vec![p], vec![sol.lambda_star])))
    })?;
    let (f, t) = DensitySpec::columns();
    Ok(Generated { dataset: to_dataset(rows, Provenance::Model, f, t)?, rejected })
}

/// Ground-truth optimal density for square-grid deployments.
///
/// The Monte-Carlo geometry is sampled once from `oracle_seed`, so every label in
/// a run is drawn from the same estimated EE surface.
#[derive(Debug, Clone)]
pub struct GridOracle {
    bank: CoverageBank,
    spec: DensitySpec,
}

impl GridOracle {
    pub fn new(spec: &DensitySpec, n_mc: usize, mc: &GridMcConfig, oracle_seed: u64) -> Result<Self> {
        Ok(GridOracle { bank: CoverageBank::build(&spec.params, spec.bracket, n_mc, mc, oracle_seed)?, spec: *spec })
    }

    pub fn kind(&self) -> DeploymentKind {
        self.bank.kind()
    }

    /// Maximizer for a transmit power in watts.
    pub fn optimal_density(&self, tx_power: f64) -> Result<GridDensitySolution> {
        self.bank.optimal_density(&CellularParams { tx_power, ..self.spec.params })
    }
}

/// `x` transmit powers labeled by the grid Monte-Carlo oracle.
pub fn build_case2_empirical_dataset(x: usize, oracle: &GridOracle, seed: u64) -> Result<Generated> {
    let noisy = AtomicUsize::new(0);
    let (rows, rejected) = collect_rows(x, seed, |s| {
        let p = oracle.spec.draw_power(s);
        let sol = oracle.optimal_density(p)?;
        if sol.noisy {
            noisy.fetch_add(1, Ordering::Relaxed);
        }
        Ok((!sol.solution.at_boundary).then(|| (vec![p], vec![sol.solution.lambda_star])))
    })?;
    let noisy = noisy.into_inner();
    if noisy > 0 {
        log::warn!(
            "{noisy} of {} grid labels have a Monte-Carlo standard error above {:.0}% of the EE spread; increase n_mc",
            x + rejected,
            100.0 * NOISE_LIMIT
        );
    }
    let (f, t) = DensitySpec::columns();
    Ok(Generated { dataset: to_dataset(rows, Provenance::Empirical, f, t)?, rejected })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumptionSpec {
    pub density: DensitySpec,
    pub consumption: ConsumptionModel,
}

impl Default for ConsumptionSpec {
    fn default() -> Self {
        let density = DensitySpec::default();
        ConsumptionSpec {
            consumption: ConsumptionModel { tx_power_dbm: density.tx_power_dbm, ..ConsumptionModel::default() },
            density,
        }
    }
}

fn build_consumption(n: usize, spec: &ConsumptionSpec, law: ConsumptionLaw, seed: u64) -> Result<Generated> {
    let d = &spec.density;
    let (rows, rejected) = collect_rows(n, seed, |s| {
        let sample = consumption_model_oracle(&d.params, &spec.consumption, law, d.bracket, d.tol, s)?;
        Ok((!sample.at_boundary).then(|| (sample.inputs.to_vec(), vec![sample.lambda_star])))
    })?;
    let features = vec![
        ColumnSpec::new("tx_power", "W", Transform::Log10, true),
        ColumnSpec::new("static_power", "W", Transform::Identity, true),
        ColumnSpec::new("idle_power", "W", Transform::Identity, true),
    ];
    let targets = vec![ColumnSpec::new("lambda_star", "1/m2", Transform::Log10, true)];
    let provenance = match law {
        ConsumptionLaw::Uniform => Provenance::Model,
        ConsumptionLaw::Gaussian => Provenance::Empirical,
    };
    Ok(Generated { dataset: to_dataset(rows, provenance, features, targets)?, rejected })
}

/// Model set from the uniform consumption law and empirical set from the Gaussian law.
pub fn build_case3_datasets(
    n_model: usize,
    x_real: usize,
    spec: &ConsumptionSpec,
    seed: u64,
) -> Result<(Generated, Generated)> {
    Ok((
        build_consumption(n_model, spec, ConsumptionLaw::Uniform, derive_seed(seed, 0, 0))?,
        build_consumption(x_real, spec, ConsumptionLaw::Gaussian, derive_seed(seed, 0, 1))?,
    ))
}

/// Empirical samples only, for test sets and per-replicate pools.
pub fn build_case3_empirical(x: usize, spec: &ConsumptionSpec, seed: u64) -> Result<Generated> {
    build_consumption(x, spec, ConsumptionLaw::Gaussian, seed)
}

pub fn build_case3_model(n: usize, spec: &ConsumptionSpec, seed: u64) -> Result<Generated> {
    build_consumption(n, spec, ConsumptionLaw::Uniform, seed)
}


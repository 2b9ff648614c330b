//! Labeled samples for the unknown power-consumption study.
//!
//! The static and idle powers are drawn either from independent uniforms (the
//! tractable model used for pre-training) or from independent Gaussians truncated at
//! zero (the "true" hardware), and the optimal density is computed analytically.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cellular::{optimal_density_analytic, DensityBracket};
use crate::error::{Error, Result};
use crate::netsim::CellularParams;
use crate::numeric::dbm_to_watts;
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsumptionLaw {
    Uniform,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsumptionModel {
    /// Transmit power range in dBm, sampled uniformly in dB.
    pub tx_power_dbm: [f64; 2],
    pub static_uniform: [f64; 2],
    pub idle_uniform: [f64; 2],
    /// `[mean, std]`.
    pub static_gaussian: [f64; 2],
    pub idle_gaussian: [f64; 2],
}

impl Default for ConsumptionModel {
    fn default() -> Self {
        ConsumptionModel {
            tx_power_dbm: [30.0, 46.0],
            static_uniform: [5.0, 15.0],
            idle_uniform: [2.5, 7.5],
            static_gaussian: [11.0, 1.0],
            idle_gaussian: [5.5, 0.5],
        }
    }
}

impl ConsumptionModel {
    pub fn validate(&self) -> Result<()> {
        for r in [self.tx_power_dbm, self.static_uniform, self.idle_uniform] {
            if !(r[0] <= r[1]) {
                return Err(Error::invalid(format!("empty range [{}, {}]", r[0], r[1])));
            }
        }
        if self.static_uniform[0] < 0.0 || self.idle_uniform[0] < 0.0 {
            return Err(Error::invalid("uniform power ranges must be non-negative"));
        }
        for g in [self.static_gaussian, self.idle_gaussian] {
            if !(g[1] >= 0.0) || !(g[0] > 0.0) {
                return Err(Error::invalid("gaussian powers need positive mean and non-negative std"));
            }
        }
        Ok(())
    }

    fn uniform(rng: &mut Rng, range: [f64; 2]) -> f64 {
        range[0] + (range[1] - range[0]) * rng.random::<f64>()
    }

    fn truncated_normal(rng: &mut Rng, ms: [f64; 2]) -> Result<f64> {
        if ms[1] == 0.0 {
            return Ok(ms[0]);
        }
        let normal = Normal::new(ms[0], ms[1]).map_err(|e| Error::invalid(e.to_string()))?;
        for _ in 0..10_000 {
            let v = normal.sample(rng);
            if v >= 0.0 {
                return Ok(v);
            }
        }
        Err(Error::invalid("truncated gaussian rejection sampling failed"))
    }

    /// Draws `(P, Pc, P_idle)` in watts.
    pub fn draw(&self, law: ConsumptionLaw, rng: &mut Rng) -> Result<[f64; 3]> {
        let tx = dbm_to_watts(Self::uniform(rng, self.tx_power_dbm));
        let (pc, pidle) = match law {
            ConsumptionLaw::Uniform => (
                Self::uniform(rng, self.static_uniform),
                Self::uniform(rng, self.idle_uniform),
            ),
            ConsumptionLaw::Gaussian => (
                Self::truncated_normal(rng, self.static_gaussian)?,
                Self::truncated_normal(rng, self.idle_gaussian)?,
            ),
        };
        Ok([tx, pc, pidle])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConsumptionSample {
    /// `(P, Pc, P_idle)` in watts.
    pub inputs: [f64; 3],
    pub lambda_star: f64,
    pub at_boundary: bool,
}

/// One labeled sample: draws powers under `law` and solves for the optimal density.
pub fn consumption_model_oracle(
    base: &CellularParams,
    model: &ConsumptionModel,
    law: ConsumptionLaw,
    bracket: DensityBracket,
    tol: f64,
    rng_seed: u64,
) -> Result<ConsumptionSample> {
    model.validate()?;
    let mut rng = rng_from_seed(rng_seed);
    let inputs = model.draw(law, &mut rng)?;
    let params = CellularParams {
        tx_power: inputs[0],
        static_power: inputs[1],
        idle_power: inputs[2],
        ..*base
    };
    let sol = optimal_density_analytic(&params, bracket, tol)?;
    Ok(ConsumptionSample {
        inputs,
        lambda_star: sol.lambda_star,
        at_boundary: sol.at_boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_draws_stay_in_support() {
        let m = ConsumptionModel::default();
        let mut rng = rng_from_seed(1);
        for _ in 0..10_000 {
            let [tx, pc, pi] = m.draw(ConsumptionLaw::Uniform, &mut rng).unwrap();
            assert!((5.0..=15.0).contains(&pc));
            assert!((2.5..=7.5).contains(&pi));
            assert!((1.0..=dbm_to_watts(46.0)).contains(&tx));
        }
    }

    #[test]
    fn gaussian_sample_mean_within_three_standard_errors() {
        let m = ConsumptionModel::default();
        let mut rng = rng_from_seed(2);
        let n = 10_000;
        let (mut pc, mut pi) = (0.0, 0.0);
        for _ in 0..n {
            let d = m.draw(ConsumptionLaw::Gaussian, &mut rng).unwrap();
            pc += d[1];
            pi += d[2];
        }
        let se = |std: f64| 3.0 * std / (n as f64).sqrt();
        assert!((pc / n as f64 - 11.0).abs() < se(1.0));
        assert!((pi / n as f64 - 5.5).abs() < se(0.5));
    }

    #[test]
    fn degenerate_laws_coincide() {
        let m = ConsumptionModel {
            static_uniform: [9.0, 9.0],
            idle_uniform: [4.0, 4.0],
            static_gaussian: [9.0, 0.0],
            idle_gaussian: [4.0, 0.0],
            ..ConsumptionModel::default()
        };
        let base = CellularParams::default();
        let u = consumption_model_oracle(&base, &m, ConsumptionLaw::Uniform, DensityBracket::default(), 1e-6, 5).unwrap();
        let g = consumption_model_oracle(&base, &m, ConsumptionLaw::Gaussian, DensityBracket::default(), 1e-6, 5).unwrap();
        assert_eq!(u.inputs, g.inputs);
        assert_eq!(u.lambda_star, g.lambda_star);
    }
}

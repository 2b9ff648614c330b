//! Random network realizations.
//!
//! Two families are generated here: multi-user uplink drops in a disk around a common
//! receiver, and base-station deployments on a square window drawn either from a
//! homogeneous Poisson point process or from a randomly shifted square lattice.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dbm_to_watts, db_to_linear};
use crate::rng::rng_from_seed;

/// Distance-dependent path loss `PL(d) = intercept + slope * log10(d / 1 km)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
    /// Distances below this are clamped, in meters.
    pub min_distance_m: f64,
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss {
            intercept_db: 128.1,
            slope_db: 37.6,
            min_distance_m: 10.0,
        }
    }
}

impl PathLoss {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        let d = distance_m.max(self.min_distance_m);
        self.intercept_db + self.slope_db * (d / 1000.0).log10()
    }

    /// Linear power gain without fading.
    pub fn gain(&self, distance_m: f64) -> f64 {
        db_to_linear(-self.loss_db(distance_m))
    }
}

/// Link-level constants shared by every user of an uplink drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudget {
    pub noise_power_dbm: f64,
    /// Static circuit power per user, watts.
    pub circuit_power: f64,
    /// `1 / η` for the transmit amplifier.
    pub amplifier_inefficiency: f64,
    pub bandwidth_hz: f64,
    pub path_loss: PathLoss,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            noise_power_dbm: -104.0,
            circuit_power: 1.0,
            amplifier_inefficiency: 1.0 / 0.35,
            bandwidth_hz: 180e3,
            path_loss: PathLoss::default(),
        }
    }
}

/// One multi-user uplink realization towards a single receiver at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UplinkScenario {
    pub user_positions: Vec<[f64; 2]>,
    pub gains: Vec<f64>,
    pub noise_power: f64,
    pub pmax: f64,
    pub circuit_power: f64,
    pub amplifier_inefficiency: f64,
    pub bandwidth: f64,
}

impl UplinkScenario {
    /// Builds a scenario from explicit values, checking its invariants.
    pub fn new(
        user_positions: Vec<[f64; 2]>,
        gains: Vec<f64>,
        noise_power: f64,
        pmax: f64,
        circuit_power: f64,
        amplifier_inefficiency: f64,
        bandwidth: f64,
    ) -> Result<Self> {
        let s = UplinkScenario {
            user_positions,
            gains,
            noise_power,
            pmax,
            circuit_power,
            amplifier_inefficiency,
            bandwidth,
        };
        s.validate()?;
        Ok(s)
    }

    /// Scenario with unit-free placeholder positions, handy for hand-built cases.
    pub fn from_gains(gains: Vec<f64>, noise_power: f64, pmax: f64, circuit_power: f64, amplifier_inefficiency: f64, bandwidth: f64) -> Result<Self> {
        let positions = vec![[0.0, 0.0]; gains.len()];
        Self::new(positions, gains, noise_power, pmax, circuit_power, amplifier_inefficiency, bandwidth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() {
            return Err(Error::invalid("scenario has no users"));
        }
        if self.gains.len() != self.user_positions.len() {
            return Err(Error::invalid("gain count differs from position count"));
        }
        if let Some(g) = self.gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(Error::invalid(format!("channel gain {g} must be positive and finite")));
        }
        if !(self.pmax > 0.0 && self.pmax.is_finite()) {
            return Err(Error::invalid("pmax must be positive"));
        }
        if !(self.noise_power > 0.0) {
            return Err(Error::invalid("noise power must be positive"));
        }
        if !(self.amplifier_inefficiency >= 1.0) {
            return Err(Error::invalid("amplifier inefficiency must be at least 1"));
        }
        if !(self.circuit_power >= 0.0 && self.bandwidth > 0.0) {
            return Err(Error::invalid("circuit power must be >= 0 and bandwidth > 0"));
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.gains.len()
    }

    /// Same channel realization evaluated under a different power budget.
    pub fn with_pmax(&self, pmax: f64) -> Result<Self> {
        let mut s = self.clone();
        s.pmax = pmax;
        s.validate()?;
        Ok(s)
    }

    /// Per-user SINR at a single common receiver, treating interference as noise.
    pub fn sinr(&self, p: &[f64]) -> Vec<f64> {
        let received: Vec<f64> = p.iter().zip(&self.gains).map(|(p, g)| p * g).collect();
        let total: f64 = received.iter().sum();
        received
            .iter()
            .map(|&r| r / (self.noise_power + (total - r).max(0.0)))
            .collect()
    }
}

/// `|h|²` for `h` a standard circularly-symmetric complex Gaussian.
pub fn rayleigh_power(rng: &mut impl rand::Rng) -> f64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    0.5 * (re * re + im * im)
}

/// Drops `n_users` uniformly in a disk of `radius` meters around the receiver.
pub fn sample_uplink_scenario(
    n_users: usize,
    radius: f64,
    pmax: f64,
    budget: &LinkBudget,
    seed: u64,
) -> Result<UplinkScenario> {
    if n_users == 0 {
        return Err(Error::invalid("n_users must be at least 1"));
    }
    if !(radius > 0.0) || !(pmax > 0.0) {
        return Err(Error::invalid("radius and pmax must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let user_positions: Vec<[f64; 2]> = (0..n_users)
        .map(|_| {
            let r = radius * rng.random::<f64>().sqrt();
            let phi = std::f64::consts::TAU * rng.random::<f64>();
            [r * phi.cos(), r * phi.sin()]
        })
        .collect();
    let gains = user_positions
        .iter()
        .map(|pos| {
            let d = pos[0].hypot(pos[1]);
            // Zero-probability exact zero fading would break the positivity invariant.
            rayleigh_power(&mut rng).max(f64::MIN_POSITIVE) * budget.path_loss.gain(d)
        })
        .collect();
    UplinkScenario::new(
        user_positions,
        gains,
        dbm_to_watts(budget.noise_power_dbm),
        pmax,
        budget.circuit_power,
        budget.amplifier_inefficiency,
        budget.bandwidth_hz,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeploymentKind {
    Poisson,
    SquareGrid,
}

/// Base-station locations inside the square window `[-w/2, w/2)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub kind: DeploymentKind,
    pub points: Vec<[f64; 2]>,
    pub window: f64,
    pub density: f64,
}

/// Samples a deployment of the given density (points per m²) on a `window × window` square.
///
/// The square grid has spacing `1/√density` and a single uniform offset per realization.
pub fn sample_deployment(kind: DeploymentKind, density: f64, window: f64, seed: u64) -> Result<Deployment> {
    if !(density > 0.0) || !(window > 0.0) {
        return Err(Error::invalid("density and window must be positive"));
    }
    let mut rng = rng_from_seed(seed);
    let half = 0.5 * window;
    let points = match kind {
        DeploymentKind::Poisson => {
            let mean = density * window * window;
            let count = Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng) as usize;
            (0..count)
                .map(|_| {
                    [
                        window * rng.random::<f64>() - half,
                        window * rng.random::<f64>() - half,
                    ]
                })
                .collect()
        }
        DeploymentKind::SquareGrid => {
            let spacing = 1.0 / density.sqrt();
            let ox = spacing * rng.random::<f64>();
            let oy = spacing * rng.random::<f64>();
            let axis = |offset: f64| -> Vec<f64> {
                (0..)
                    .map(|i| -half + offset + i as f64 * spacing)
                    .take_while(|&c| c < half)
                    .collect()
            };
            let xs = axis(ox);
            let ys = axis(oy);
            xs.iter()
                .flat_map(|&x| ys.iter().map(move |&y| [x, y]))
                .collect()
        }
    };
    Ok(Deployment {
        kind,
        points,
        window,
        density,
    })
}

/// Stochastic-geometry parameters of a cellular downlink.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellularParams {
    pub path_loss_exponent: f64,
    /// Base-station transmit power, watts.
    pub tx_power: f64,
    /// Users per m².
    pub user_density: f64,
    pub static_power: f64,
    pub idle_power: f64,
    pub amplifier_inefficiency: f64,
    pub noise_power: f64,
    pub sinr_threshold: f64,
    pub bandwidth: f64,
}

impl Default for CellularParams {
    fn default() -> Self {
        CellularParams {
            path_loss_exponent: 4.0,
            tx_power: dbm_to_watts(38.0),
            user_density: 100e-6,
            static_power: 10.0,
            idle_power: 5.0,
            amplifier_inefficiency: 1.0 / 0.35,
            noise_power: dbm_to_watts(-104.0),
            sinr_threshold: 1.0,
            bandwidth: 180e3,
        }
    }
}

impl CellularParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.path_loss_exponent > 2.0) {
            return Err(Error::invalid(format!(
                "path-loss exponent must exceed 2, got {}",
                self.path_loss_exponent
            )));
        }
        let powers = [self.tx_power, self.static_power, self.idle_power, self.noise_power];
        if powers.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::invalid("powers must be non-negative"));
        }
        if !(self.user_density > 0.0) || !(self.sinr_threshold > 0.0) || !(self.bandwidth > 0.0) {
            return Err(Error::invalid("user density, SINR threshold and bandwidth must be positive"));
        }
        if !(self.amplifier_inefficiency >= 1.0) {
            return Err(Error::invalid("amplifier inefficiency must be at least 1"));
        }
        Ok(())
    }
}

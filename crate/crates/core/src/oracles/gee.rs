//! Global energy efficiency (sum rate over total consumed power) of an uplink drop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::UplinkScenario;

/// Transmit powers in watts, one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation(pub Vec<f64>);

impl PowerAllocation {
    /// Checks `0 <= p_k <= pmax` for every user.
    pub fn new(p: Vec<f64>, scenario: &UplinkScenario) -> Result<Self> {
        let alloc = PowerAllocation(p);
        alloc.check(scenario)?;
        Ok(alloc)
    }

    pub fn check(&self, scenario: &UplinkScenario) -> Result<()> {
        if self.0.len() != scenario.n_users() {
            return Err(Error::Infeasible(format!(
                "{} powers for {} users",
                self.0.len(),
                scenario.n_users()
            )));
        }
        let cap = scenario.pmax * (1.0 + 1e-12);
        if let Some(p) = self.0.iter().find(|p| !(**p >= 0.0 && **p <= cap)) {
            return Err(Error::Infeasible(format!("power {p} outside [0, {}]", scenario.pmax)));
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// `B Σ log2(1 + SINR_k)` in bits per second. Does not validate `p`.
pub fn sum_rate(scenario: &UplinkScenario, p: &[f64]) -> f64 {
    scenario.bandwidth * scenario.sinr(p).iter().map(|g| g.ln_1p()).sum::<f64>() / std::f64::consts::LN_2
}

/// `Σ (μ p_k + Pc)` in watts.
pub fn consumed_power(scenario: &UplinkScenario, p: &[f64]) -> f64 {
    scenario.amplifier_inefficiency * p.iter().sum::<f64>() + scenario.circuit_power * p.len() as f64
}

/// GEE without feasibility checks; used on solver hot paths.
pub(crate) fn gee_unchecked(scenario: &UplinkScenario, p: &[f64]) -> f64 {
    sum_rate(scenario, p) / consumed_power(scenario, p)
}

/// Global energy efficiency in bits per joule.
pub fn gee(scenario: &UplinkScenario, p: &PowerAllocation) -> Result<f64> {
    p.check(scenario)?;
    let denom = consumed_power(scenario, &p.0);
    if denom <= 0.0 {
        return Err(Error::Infeasible(
            "zero circuit power with all-zero transmit power gives 0/0".into(),
        ));
    }
    Ok(sum_rate(scenario, &p.0) / denom)
}

pub fn full_power(scenario: &UplinkScenario) -> PowerAllocation {
    PowerAllocation(vec![scenario.pmax; scenario.n_users()])
}

/// Largest user count accepted by [`brute_force_max_gee`].
pub const BRUTE_FORCE_MAX_USERS: usize = 3;

/// Exhaustive GEE maximizer over the grid `{0, pmax/(G-1), ..., pmax}^n`.
pub fn brute_force_max_gee(scenario: &UplinkScenario, grid_points_per_user: usize) -> Result<PowerAllocation> {
    let n = scenario.n_users();
    if n > BRUTE_FORCE_MAX_USERS {
        return Err(Error::invalid(format!(
            "brute force supports at most {BRUTE_FORCE_MAX_USERS} users, got {n}"
        )));
    }
    if grid_points_per_user < 2 {
        return Err(Error::invalid("the power grid needs at least the two endpoints"));
    }
    let levels: Vec<f64> = (0..grid_points_per_user)
        .map(|i| {
            if i == grid_points_per_user - 1 {
                scenario.pmax
            } else {
                scenario.pmax * i as f64 / (grid_points_per_user - 1) as f64
            }
        })
        .collect();
    let total = grid_points_per_user.pow(n as u32);
    let mut p = vec![0.0; n];
    let mut best = (f64::NEG_INFINITY, p.clone());
    for code in 0..total {
        let mut c = code;
        for slot in p.iter_mut() {
            *slot = levels[c % grid_points_per_user];
            c /= grid_points_per_user;
        }
        let denom = consumed_power(scenario, &p);
        let value = if denom > 0.0 { sum_rate(scenario, &p) / denom } else { 0.0 };
        if value > best.0 {
            best = (value, p.clone());
        }
    }
    Ok(PowerAllocation(best.1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_user() -> UplinkScenario {
        UplinkScenario::from_gains(vec![1.0], 1.0, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn single_user_closed_form() {
        let s = unit_user();
        let v = gee(&s, &PowerAllocation(vec![1.0])).unwrap();
        assert_eq!(v, 0.5);
    }

    #[test]
    fn zero_power_gives_zero() {
        let s = UplinkScenario::from_gains(vec![2.0, 0.3, 1e-3], 0.1, 2.0, 0.5, 2.0, 10.0).unwrap();
        assert_eq!(gee(&s, &PowerAllocation(vec![0.0; 3])).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_pair_matches_scalar_evaluation() {
        let (g, sigma2, p, mu, pc, b) = (0.7, 0.2, 0.9, 1.5, 0.4, 3.0);
        let s = UplinkScenario::from_gains(vec![g, g], sigma2, 1.0, pc, mu, b).unwrap();
        let sinr = s.sinr(&[p, p]);
        assert_eq!(sinr[0], sinr[1]);
        // Scalar re-derivation: each user sees the other as interference.
        let gamma: f64 = p * g / (sigma2 + p * g);
        let expected = 2.0 * b * (1.0 + gamma).log2() / (2.0 * (mu * p + pc));
        let v = gee(&s, &PowerAllocation(vec![p, p])).unwrap();
        assert!((v - expected).abs() <= 1e-14 * expected);
    }

    #[test]
    fn rejects_infeasible_and_undefined() {
        let s = unit_user();
        assert!(matches!(gee(&s, &PowerAllocation(vec![1.5])), Err(Error::Infeasible(_))));
        assert!(gee(&s, &PowerAllocation(vec![-0.1])).is_err());
        assert!(gee(&s, &PowerAllocation(vec![0.5, 0.5])).is_err());
        let no_circuit = UplinkScenario::from_gains(vec![1.0], 1.0, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(gee(&no_circuit, &PowerAllocation(vec![0.0])).is_err());
    }

    #[test]
    fn full_power_fills_every_user() {
        let s = UplinkScenario::from_gains(vec![1.0, 2.0, 3.0], 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(full_power(&s).0, vec![1.0, 1.0, 1.0]);
        let s = UplinkScenario::from_gains(vec![1.0], 1.0, 0.1, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(full_power(&s).0, vec![0.1]);
    }

    #[test]
    fn brute_force_single_user_noise_limited_picks_pmax() {
        // GEE = log2(1 + p g / σ²) / (p + Pc) is increasing on [0, pmax] here.
        let s = UplinkScenario::from_gains(vec![1e-3], 1.0, 1.0, 10.0, 1.0, 1.0).unwrap();
        let p = brute_force_max_gee(&s, 101).unwrap();
        assert_eq!(p.0, vec![1.0]);
    }

    #[test]
    fn finer_grid_never_worse() {
        let s = UplinkScenario::from_gains(vec![5.0, 2.0], 0.1, 2.0, 0.3, 1.2, 1.0).unwrap();
        let coarse = gee(&s, &brute_force_max_gee(&s, 11).unwrap()).unwrap();
        let fine = gee(&s, &brute_force_max_gee(&s, 101).unwrap()).unwrap();
        assert!(fine >= coarse);
    }

    #[test]
    fn brute_force_rejects_many_users() {
        let s = UplinkScenario::from_gains(vec![1.0; 4], 1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(brute_force_max_gee(&s, 3).is_err());
    }
}

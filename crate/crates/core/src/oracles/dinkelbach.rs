//! Dinkelbach's method for uplink GEE maximization.
//!
//! Outer loop: for the current ratio `λ`, approximately solve
//! `max_p R(p) - λ P(p)` over the power box and set `λ ← R(p*) / P(p*)`.
//!
//! Inner loop: successive concave approximation. At the iterate `p̄` each rate term is
//! bounded below by `log2(1 + γ) >= a log2 γ + b` with `a = γ̄ / (1 + γ̄)` and
//! `b = log2(1 + γ̄) - a log2 γ̄`, which is tight at `γ̄`. In log-power variables
//! `q = ln p` the bound is concave, and it is maximized by projected gradient ascent with
//! backtracking. Each inner problem is started from the previous iterate, from full
//! power and from a few random points, and the best result is kept; because the warm
//! start is always a candidate the `λ` sequence never decreases.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gee::{consumed_power, gee_unchecked, sum_rate, PowerAllocation};
use crate::error::{Error, Result};
use crate::netsim::UplinkScenario;
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DinkelbachConfig {
    /// Relative tolerance on `GEE(p*) - λ`.
    pub tol: f64,
    pub max_outer: usize,
    /// Random starts per inner problem, on top of the warm start and full power.
    pub random_starts: usize,
    pub sca_max_iter: usize,
    pub pga_max_iter: usize,
    /// Powers are kept above `pmax * min_power_ratio` so `ln p` stays finite.
    pub min_power_ratio: f64,
    pub seed: u64,
}

impl Default for DinkelbachConfig {
    fn default() -> Self {
        DinkelbachConfig {
            tol: 1e-9,
            max_outer: 50,
            random_starts: 3,
            sca_max_iter: 200,
            pga_max_iter: 400,
            min_power_ratio: 1e-12,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DinkelbachSolution {
    pub power: PowerAllocation,
    pub gee: f64,
    /// `λ_0, λ_1, ...`; non-decreasing.
    pub lambdas: Vec<f64>,
    pub outer_iterations: usize,
    pub sca_iterations: usize,
    pub status: SolverStatus,
}

impl DinkelbachSolution {
    pub fn converged(&self) -> bool {
        self.status == SolverStatus::Converged
    }
}

/// Maximizes GEE with the default inner-solver settings.
pub fn dinkelbach_max_gee(scenario: &UplinkScenario, tol: f64, max_outer: usize) -> Result<DinkelbachSolution> {
    let cfg = DinkelbachConfig {
        tol,
        max_outer,
        ..DinkelbachConfig::default()
    };
    Solver::new(scenario, &cfg)?.run()
}

impl DinkelbachConfig {
    pub fn solve(&self, scenario: &UplinkScenario) -> Result<DinkelbachSolution> {
        Solver::new(scenario, self)?.run()
    }
}

struct Solver<'a> {
    s: &'a UplinkScenario,
    cfg: &'a DinkelbachConfig,
    /// Natural-log rate scale `B / ln 2`.
    rate_scale: f64,
    q_lo: f64,
    q_hi: f64,
    sca_iterations: usize,
}

impl<'a> Solver<'a> {
    fn new(s: &'a UplinkScenario, cfg: &'a DinkelbachConfig) -> Result<Self> {
        s.validate()?;
        if !(cfg.tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        if !(cfg.min_power_ratio > 0.0 && cfg.min_power_ratio < 1.0) {
            return Err(Error::invalid("min_power_ratio must lie in (0, 1)"));
        }
        if s.circuit_power <= 0.0 {
            return Err(Error::invalid("circuit power must be positive for a finite GEE"));
        }
        Ok(Solver {
            s,
            cfg,
            rate_scale: s.bandwidth / std::f64::consts::LN_2,
            q_lo: (s.pmax * cfg.min_power_ratio).ln(),
            q_hi: s.pmax.ln(),
            sca_iterations: 0,
        })
    }

    fn parametric(&self, p: &[f64], lambda: f64) -> f64 {
        sum_rate(self.s, p) - lambda * consumed_power(self.s, p)
    }

    fn run(mut self) -> Result<DinkelbachSolution> {
        let n = self.s.n_users();
        let mut rng = rng_from_seed(self.cfg.seed);
        let full = vec![self.s.pmax; n];
        let mut p = full.clone();
        let mut lambda = gee_unchecked(self.s, &p);
        let mut lambdas = vec![lambda];
        let mut status = SolverStatus::MaxIterations;
        let mut outer = 0;
        while outer < self.cfg.max_outer {
            outer += 1;
            let mut starts = vec![p.clone(), full.clone()];
            for _ in 0..self.cfg.random_starts {
                starts.push(
                    (0..n)
                        .map(|_| (self.q_hi + (self.q_lo * 0.5 - self.q_hi) * rng.random::<f64>()).exp())
                        .collect(),
                );
            }
            let (mut best, mut best_f) = (p.clone(), self.parametric(&p, lambda));
            for start in starts {
                let cand = self.sca(start, lambda);
                let f = self.parametric(&cand, lambda);
                if f > best_f {
                    best = cand;
                    best_f = f;
                }
            }
            let best_gee = gee_unchecked(self.s, &best);
            if best_gee <= lambda {
                status = SolverStatus::Converged;
                break;
            }
            let gap = best_gee - lambda;
            p = best;
            lambda = best_gee;
            lambdas.push(lambda);
            if gap <= self.cfg.tol * lambda {
                status = SolverStatus::Converged;
                break;
            }
        }
        Ok(DinkelbachSolution {
            power: PowerAllocation(p),
            gee: lambda,
            lambdas,
            outer_iterations: outer,
            sca_iterations: self.sca_iterations,
            status,
        })
    }

    /// Successive concave approximation of `max R(p) - λ P(p)` from `p`.
    fn sca(&mut self, p: Vec<f64>, lambda: f64) -> Vec<f64> {
        let mut q: Vec<f64> = p.iter().map(|v| v.ln().clamp(self.q_lo, self.q_hi)).collect();
        let mut p: Vec<f64> = q.iter().map(|v| v.exp()).collect();
        let mut f = self.parametric(&p, lambda);
        let mut step = 1.0 / self.rate_scale;
        for _ in 0..self.cfg.sca_max_iter {
            self.sca_iterations += 1;
            let weights: Vec<f64> = self.s.sinr(&p).iter().map(|g| g / (1.0 + g)).collect();
            let q_new = match self.fixed_point(&q, &weights, lambda) {
                Some(q_new) => q_new,
                None => self.ascend(&q, &weights, lambda, &mut step),
            };
            let p_new: Vec<f64> = q_new.iter().map(|v| v.exp()).collect();
            let f_new = self.parametric(&p_new, lambda);
            if !(f_new >= f) {
                break;
            }
            let done = f_new - f <= 1e-13 * f.abs().max(self.rate_scale * 1e-12);
            q = q_new;
            p = p_new;
            f = f_new;
            if done {
                break;
            }
        }
        p
    }

    /// Surrogate value without the constant terms.
    fn surrogate(&self, q: &[f64], weights: &[f64], lambda: f64) -> f64 {
        let g = &self.s.gains;
        let rx: Vec<f64> = q.iter().zip(g).map(|(q, g)| g * q.exp()).collect();
        let total: f64 = rx.iter().sum();
        let mut rate = 0.0;
        let mut power = 0.0;
        for k in 0..q.len() {
            let interference = (total - rx[k]).max(0.0);
            rate += weights[k] * (q[k] + g[k].ln() - (self.s.noise_power + interference).ln());
            power += q[k].exp();
        }
        self.rate_scale * rate - lambda * self.s.amplifier_inefficiency * power
    }

    fn surrogate_grad(&self, q: &[f64], weights: &[f64], lambda: f64) -> Vec<f64> {
        let g = &self.s.gains;
        let rx: Vec<f64> = q.iter().zip(g).map(|(q, g)| g * q.exp()).collect();
        let total: f64 = rx.iter().sum();
        // Σ_k a_k / (σ² + I_k), then remove the own term for each m.
        let per_user: Vec<f64> = (0..q.len())
            .map(|k| weights[k] / (self.s.noise_power + (total - rx[k]).max(0.0)))
            .collect();
        let sum_all: f64 = per_user.iter().sum();
        (0..q.len())
            .map(|m| {
                let cross = sum_all - per_user[m];
                self.rate_scale * (weights[m] - rx[m] * cross)
                    - lambda * self.s.amplifier_inefficiency * q[m].exp()
            })
            .collect()
    }

    /// Maximizes the surrogate by iterating its stationarity condition
    /// `p_m = c a_m / (λ μ + c g_m Σ_{k≠m} a_k / (σ² + I_k))`, `c = B / ln 2`.
    /// Returns `None` if an iterate ever lowers the surrogate.
    fn fixed_point(&self, q0: &[f64], weights: &[f64], lambda: f64) -> Option<Vec<f64>> {
        let g = &self.s.gains;
        let price = lambda * self.s.amplifier_inefficiency;
        let mut q = q0.to_vec();
        let mut value = self.surrogate(&q, weights, lambda);
        for _ in 0..self.cfg.pga_max_iter {
            let rx: Vec<f64> = q.iter().zip(g).map(|(q, g)| g * q.exp()).collect();
            let total: f64 = rx.iter().sum();
            let per_user: Vec<f64> = (0..q.len())
                .map(|k| weights[k] / (self.s.noise_power + (total - rx[k]).max(0.0)))
                .collect();
            let sum_all: f64 = per_user.iter().sum();
            let next: Vec<f64> = (0..q.len())
                .map(|m| {
                    let denom = price + self.rate_scale * g[m] * (sum_all - per_user[m]);
                    let p = self.rate_scale * weights[m] / denom;
                    if p > 0.0 { p.ln().clamp(self.q_lo, self.q_hi) } else { self.q_lo }
                })
                .collect();
            let next_value = self.surrogate(&next, weights, lambda);
            if next_value + 1e-13 * value.abs().max(1.0) < value {
                return None;
            }
            let moved = next.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            q = next;
            value = next_value;
            if moved < 1e-10 {
                break;
            }
        }
        Some(q)
    }

    /// Projected gradient ascent with backtracking on the concave surrogate.
    fn ascend(&self, q0: &[f64], weights: &[f64], lambda: f64, step: &mut f64) -> Vec<f64> {
        let mut q = q0.to_vec();
        let mut value = self.surrogate(&q, weights, lambda);
        for _ in 0..self.cfg.pga_max_iter {
            let grad = self.surrogate_grad(&q, weights, lambda);
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<f64> = q
                    .iter()
                    .zip(&grad)
                    .map(|(q, g)| (q + *step * g).clamp(self.q_lo, self.q_hi))
                    .collect();
                let mut lin = 0.0;
                let mut sq = 0.0;
                for ((c, q), g) in cand.iter().zip(&q).zip(&grad) {
                    lin += g * (c - q);
                    sq += (c - q) * (c - q);
                }
                let cand_value = self.surrogate(&cand, weights, lambda);
                let slack = 1e-13 * value.abs().max(1.0);
                if cand_value + slack >= value + lin - sq / (2.0 * *step) {
                    accepted = Some((cand, cand_value, sq));
                    break;
                }
                *step *= 0.5;
            }
            let Some((cand, cand_value, sq)) = accepted else {
                break;
            };
            let moved = sq.sqrt();
            if cand_value < value {
                break;
            }
            q = cand;
            value = cand_value;
            *step *= 2.0;
            if moved < 1e-11 {
                break;
            }
        }
        q
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netsim::{sample_uplink_scenario, LinkBudget};
    use crate::numeric::golden_section_max;
    use crate::oracles::gee::{brute_force_max_gee, full_power, gee};

    #[test]
    fn lambda_sequence_is_non_decreasing() {
        let budget = LinkBudget::default();
        for seed in 0..30 {
            let s = sample_uplink_scenario(4, 500.0, 0.1, &budget, seed).unwrap();
            let sol = dinkelbach_max_gee(&s, 1e-9, 50).unwrap();
            assert!(sol.lambdas.windows(2).all(|w| w[1] >= w[0]), "{:?}", sol.lambdas);
            assert!(sol.converged());
        }
    }

    #[test]
    fn single_user_matches_golden_section() {
        let budget = LinkBudget::default();
        for (seed, pmax) in [(1, 1.0), (2, 0.01), (3, 10.0), (4, 0.2)] {
            let s = sample_uplink_scenario(1, 500.0, pmax, &budget, seed).unwrap();
            let sol = dinkelbach_max_gee(&s, 1e-12, 100).unwrap();
            let oracle = golden_section_max(
                |p| gee(&s, &PowerAllocation(vec![p])).unwrap(),
                0.0,
                pmax,
                1e-12 * pmax,
            );
            let rel = (sol.gee - oracle.value).abs() / oracle.value;
            assert!(rel < 1e-6, "seed {seed}: gee {} vs {}", sol.gee, oracle.value);
            let p = sol.power.0[0];
            assert!(
                (p - oracle.x).abs() <= 1e-6 * oracle.x.max(1e-3 * pmax) + 1e-9 * pmax,
                "seed {seed}: p {p} vs {}",
                oracle.x
            );
        }
    }

    #[test]
    fn dominates_full_power_and_zero() {
        let budget = LinkBudget::default();
        for seed in 0..20 {
            let s = sample_uplink_scenario(5, 500.0, 1.0, &budget, 100 + seed).unwrap();
            let sol = dinkelbach_max_gee(&s, 1e-9, 50).unwrap();
            assert!(sol.gee >= gee(&s, &full_power(&s)).unwrap());
            assert!(sol.gee > 0.0);
            sol.power.check(&s).unwrap();
        }
    }

    #[test]
    fn two_users_match_brute_force() {
        let budget = LinkBudget::default();
        for seed in 0..10 {
            let s = sample_uplink_scenario(2, 500.0, 0.5, &budget, 1000 + seed).unwrap();
            let sol = dinkelbach_max_gee(&s, 1e-9, 50).unwrap();
            let brute = gee(&s, &brute_force_max_gee(&s, 200).unwrap()).unwrap();
            assert!(sol.gee / brute >= 0.999, "seed {seed}: {} vs {brute}", sol.gee);
        }
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let s = sample_uplink_scenario(2, 500.0, 0.5, &LinkBudget::default(), 1).unwrap();
        assert!(dinkelbach_max_gee(&s, 0.0, 10).is_err());
    }
}

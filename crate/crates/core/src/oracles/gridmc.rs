//! Monte-Carlo energy efficiency for deployments without a tractable model.
//!
//! The estimator samples the deployment geometry only. For a realization with base
//! stations sorted by distance `s_0 < s_1 < ...` from the typical user (in units where
//! the deployment has unit density) and activity probability `p`, the coverage
//! probability conditional on the geometry is computed exactly by summing over which
//! station is the nearest active one:
//!
//! ```text
//! P(cov | geometry) = Σ_k (1-p)^k p · exp(-θ σ² s_k^α / (P λ^{α/2}))
//!                          · Π_{i>k} (1 - p θ x_i / (1 + θ x_i)) · tail_k,   x_i = (s_k / s_i)^α
//! ```
//!
//! Rayleigh fading and Bernoulli activity are therefore integrated analytically and
//! only the geometry is random. Stations beyond the simulated disk of radius `R` enter
//! through the mean-field factor `tail_k = exp(-2π p ∫_R^∞ r θ s_k^α / (r^α + θ s_k^α) dr)`.
//!
//! Everything except the noise term is independent of the transmit power, so the
//! per-realization weights are computed once per density grid point and reused for
//! every `(P, σ², P_c, P_idle)` query. Reusing the same geometries across the grid
//! (common random numbers) keeps the estimated EE curve smooth in `λ`.
//!
//! For fast queries the `(weight, s_k^α)` pairs of each density are pooled into
//! narrow logarithmic bins of `s^α`, each represented by its weighted mean. This
//! is exact without noise and otherwise off by a second-order term far below the
//! Monte-Carlo error; the exact per-realization sum is still used for the
//! standard error.

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cellular::{activity_prob, DensityBracket, DensitySolution};
use crate::error::{Error, Result};
use crate::netsim::{CellularParams, DeploymentKind};
use crate::numeric::{integrate, log_space, QUAD_ABS_TOL};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridMcConfig {
    pub kind: DeploymentKind,
    /// Log-spaced densities on the search grid.
    pub n_lambda: usize,
    /// Simulated disk radius in units of the mean inter-site distance.
    pub radius: f64,
    /// Weights below this are dropped from the nearest-active sum.
    pub weight_floor: f64,
}

impl Default for GridMcConfig {
    fn default() -> Self {
        GridMcConfig {
            kind: DeploymentKind::SquareGrid,
            n_lambda: 240,
            radius: 8.0,
            weight_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDensitySolution {
    pub solution: DensitySolution,
    /// Monte-Carlo standard error of the EE estimate at the maximizer.
    pub std_error: f64,
    /// `max EE - min EE` over the searched grid.
    pub ee_spread: f64,
    /// The standard error exceeds 5% of the spread.
    pub noisy: bool,
}

/// A solution is flagged noisy when the standard error of the EE at the maximizer
/// exceeds this fraction of the EE spread across the density grid.
pub const NOISE_LIMIT: f64 = 0.05;

/// Per-realization, per-density weights for the nearest-active coverage sum.
#[derive(Debug, Clone)]
pub struct CoverageBank {
    kind: DeploymentKind,
    alpha: f64,
    theta: f64,
    user_density: f64,
    lambdas: Vec<f64>,
    n_mc: usize,
    /// `s_k^α` per realization, nearest first.
    dist_pow: Vec<Vec<f64>>,
    /// Flattened weights; entry `j * n_mc + r` of `spans` indexes realization `r` at density `j`.
    weights: Vec<f64>,
    spans: Vec<(usize, usize)>,
    /// Per density: `(pooled weight / n_mc, weighted mean s^α)` of each occupied bin.
    pooled: Vec<Vec<(f64, f64)>>,
}

const BIN_LOG_LO: f64 = -30.0;
const BIN_LOG_HI: f64 = 15.0;
const BINS: usize = 4500;

fn pool(pairs: impl Iterator<Item = (f64, f64)>, n_mc: usize) -> Vec<(f64, f64)> {
    let mut w = vec![0.0; BINS];
    let mut wd = vec![0.0; BINS];
    let width = (BIN_LOG_HI - BIN_LOG_LO) / BINS as f64;
    for (weight, d) in pairs {
        let b = (((d.ln() - BIN_LOG_LO) / width).floor().max(0.0) as usize).min(BINS - 1);
        w[b] += weight;
        wd[b] += weight * d;
    }
    w.iter()
        .zip(&wd)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, wd)| (w / n_mc as f64, wd / w))
        .collect()
}

fn sorted_distances(kind: DeploymentKind, radius: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(seed);
    let mut d = match kind {
        DeploymentKind::SquareGrid => {
            let (ox, oy) = (rng.random::<f64>(), rng.random::<f64>());
            let m = radius.ceil() as i64 + 1;
            let mut v = Vec::with_capacity(((2 * m + 1) * (2 * m + 1)) as usize);
            for i in -m..=m {
                for j in -m..=m {
                    let r = (i as f64 + ox - 0.5).hypot(j as f64 + oy - 0.5);
                    if r < radius {
                        v.push(r);
                    }
                }
            }
            v
        }
        DeploymentKind::Poisson => {
            let mean = std::f64::consts::PI * radius * radius;
            let n = Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
                .sample(&mut rng) as usize;
            (0..n).map(|_| radius * rng.random::<f64>().sqrt()).collect()
        }
    };
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// `∫_R^∞ r a / (r^α + a) dr`.
fn tail_integral(a: f64, radius: f64, alpha: f64) -> f64 {
    let z = a / radius.powf(alpha);
    if z < 0.5 {
        let mut sum = 0.0;
        let mut zn = 1.0;
        for n in 1..200 {
            zn *= -z;
            let term = -zn / (n as f64 * alpha - 2.0);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        radius * radius * sum
    } else {
        // Substituting r = R / u maps the tail onto (0, 1].
        integrate(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let r = radius / u;
                r * a / (r.powf(alpha) + a) * radius / (u * u)
            },
            0.0,
            1.0,
            QUAD_ABS_TOL,
        )
        .value
    }
}

impl CoverageBank {
    pub fn build(
        params: &CellularParams,
        bracket: DensityBracket,
        n_mc: usize,
        cfg: &GridMcConfig,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        bracket.validate()?;
        if n_mc < 2 {
            return Err(Error::invalid("n_mc must be at least 2"));
        }
        if cfg.n_lambda < 2 || !(cfg.radius > 2.0) {
            return Err(Error::invalid("need at least two densities and a radius above 2"));
        }
        let alpha = params.path_loss_exponent;
        let theta = params.sinr_threshold;
        let lambdas = log_space(bracket.lo, bracket.hi, cfg.n_lambda);
        let dist: Vec<Vec<f64>> = (0..n_mc)
            .into_par_iter()
            .map(|r| sorted_distances(cfg.kind, cfg.radius, derive_seed(seed, stream::GRID_ORACLE, r as u64)))
            .collect::<Result<_>>()?;

        let per_density: Vec<Vec<Vec<f64>>> = lambdas
            .par_iter()
            .map(|&lambda| {
                let p = activity_prob(lambda, params.user_density);
                dist.iter()
                    .map(|d| nearest_active_weights(d, p, theta, alpha, cfg.radius, cfg.weight_floor))
                    .collect()
            })
            .collect();

        let mut weights = Vec::new();
        let mut spans = Vec::with_capacity(lambdas.len() * n_mc);
        let mut used = vec![0usize; n_mc];
        for per_real in &per_density {
            for (r, w) in per_real.iter().enumerate() {
                spans.push((weights.len(), w.len()));
                used[r] = used[r].max(w.len());
                weights.extend_from_slice(w);
            }
        }
        let dist_pow: Vec<Vec<f64>> = dist
            .iter()
            .zip(&used)
            .map(|(d, &k)| d[..k].iter().map(|s| s.powf(alpha)).collect())
            .collect();
        let pooled = (0..lambdas.len())
            .into_par_iter()
            .map(|j| {
                let pairs = (0..n_mc).flat_map(|r| {
                    let (start, len) = spans[j * n_mc + r];
                    weights[start..start + len].iter().copied().zip(dist_pow[r].iter().copied())
                });
                pool(pairs, n_mc)
            })
            .collect();
        Ok(CoverageBank {
            kind: cfg.kind,
            alpha,
            theta,
            user_density: params.user_density,
            lambdas,
            n_mc,
            dist_pow,
            weights,
            spans,
            pooled,
        })
    }

    pub fn kind(&self) -> DeploymentKind {
        self.kind
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    fn check_compatible(&self, params: &CellularParams) -> Result<()> {
        if params.path_loss_exponent != self.alpha
            || params.sinr_threshold != self.theta
            || params.user_density != self.user_density
        {
            return Err(Error::invalid(
                "coverage bank was built for a different path-loss exponent, threshold or user density",
            ));
        }
        params.validate()
    }

    fn noise_rate(&self, j: usize, tx_power: f64, noise_power: f64) -> f64 {
        if noise_power == 0.0 {
            0.0
        } else {
            self.theta * noise_power / (tx_power * self.lambdas[j].powf(self.alpha / 2.0))
        }
    }

    /// Coverage probability at grid index `j` from the pooled bins.
    pub fn coverage_pooled(&self, j: usize, tx_power: f64, noise_power: f64) -> f64 {
        let c = self.noise_rate(j, tx_power, noise_power);
        self.pooled[j].iter().map(|(w, d)| w * (-c * d).exp()).sum()
    }

    /// Mean and standard error of the coverage probability at grid index `j`,
    /// summed realization by realization.
    pub fn coverage(&self, j: usize, tx_power: f64, noise_power: f64) -> (f64, f64) {
        let c = self.noise_rate(j, tx_power, noise_power);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..self.n_mc {
            let (start, len) = self.spans[j * self.n_mc + r];
            let w = &self.weights[start..start + len];
            let dp = &self.dist_pow[r];
            let v: f64 = w.iter().zip(dp).map(|(w, d)| w * (-c * d).exp()).sum();
            sum += v;
            sum_sq += v * v;
        }
        let n = self.n_mc as f64;
        let mean = sum / n;
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }

    /// EE per unit coverage at grid index `j`.
    fn ee_scale(&self, j: usize, params: &CellularParams) -> f64 {
        let rate = params.bandwidth * (1.0 + params.sinr_threshold).log2();
        let pa = activity_prob(self.lambdas[j], params.user_density);
        let power = pa * (params.tx_power * params.amplifier_inefficiency + params.static_power)
            + (1.0 - pa) * params.idle_power;
        pa * rate / power
    }

    /// Estimated EE on every grid density.
    pub fn ee_curve(&self, params: &CellularParams) -> Result<Vec<f64>> {
        self.check_compatible(params)?;
        Ok((0..self.lambdas.len())
            .map(|j| self.ee_scale(j, params) * self.coverage_pooled(j, params.tx_power, params.noise_power))
            .collect())
    }

    /// Maximizer of the estimated EE: the best grid density, refined by the vertex of
    /// the parabola in `ln λ` through it and its two neighbors.
    pub fn optimal_density(&self, params: &CellularParams) -> Result<GridDensitySolution> {
        let curve = self.ee_curve(params)?;
        let (best, ee) = curve
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
        let se = self.ee_scale(best, params) * self.coverage(best, params.tx_power, params.noise_power).1;
        let lowest = curve.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = ee - lowest;
        let at_boundary = best == 0 || best + 1 == self.lambdas.len();
        let (lambda_star, ee_star) = if at_boundary {
            (self.lambdas[best], ee)
        } else {
            let (x0, x1, x2) = (self.lambdas[best - 1].ln(), self.lambdas[best].ln(), self.lambdas[best + 1].ln());
            parabola_vertex([x0, x1, x2], [curve[best - 1], ee, curve[best + 1]])
                .map_or((self.lambdas[best], ee), |(x, v)| (x.exp(), v.max(ee)))
        };
        Ok(GridDensitySolution {
            solution: DensitySolution { lambda_star, ee_star, at_boundary },
            std_error: se,
            ee_spread: spread,
            noisy: se > NOISE_LIMIT * spread,
        })
    }
}

/// Vertex of the parabola through three points with `x0 < x1 < x2` and `y1` the
/// largest, clamped to `[x0, x2]`.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<(f64, f64)> {
    let (d0, d2) = (x[0] - x[1], x[2] - x[1]);
    let (e0, e2) = (y[0] - y[1], y[2] - y[1]);
    // y - y1 = a t² + b t with t = x - x1.
    let det = d0 * d2 * (d0 - d2);
    let a = (e0 * d2 - e2 * d0) / det;
    let b = (e2 * d0 * d0 - e0 * d2 * d2) / det;
    if !(a < 0.0) {
        return None;
    }
    let t = (-b / (2.0 * a)).clamp(d0, d2);
    Some((x[1] + t, y[1] + a * t * t + b * t))
}

fn nearest_active_weights(d: &[f64], p: f64, theta: f64, alpha: f64, radius: f64, floor: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut none_closer = 1.0; // (1 - p)^k
    for k in 0..d.len() {
        if none_closer * p < floor {
            break;
        }
        let sk = d[k];
        let mut interference = 1.0;
        for &si in &d[k + 1..] {
            let x = (sk / si).powf(alpha);
            interference *= 1.0 - p * theta * x / (1.0 + theta * x);
        }
        let tail = (-std::f64::consts::TAU * p * tail_integral(theta * sk.powf(alpha), radius, alpha)).exp();
        out.push(none_closer * p * interference * tail);
        none_closer *= 1.0 - p;
    }
    out
}

/// Optimal density for a square-grid deployment: Monte-Carlo grid search with parabolic refinement.
pub fn optimal_density_grid_mc(
    params: &CellularParams,
    bracket: DensityBracket,
    n_mc: usize,
    rng_seed: u64,
) -> Result<GridDensitySolution> {
    let bank = CoverageBank::build(params, bracket, n_mc, &GridMcConfig::default(), rng_seed)?;
    let sol = bank.optimal_density(params)?;
    if sol.noisy {
        log::warn!(
            "grid Monte-Carlo standard error {:.3e} exceeds 5% of the EE spread {:.3e}; increase n_mc",
            sol.std_error,
            sol.ee_spread
        );
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex_recovers_a_quadratic() {
        let f = |x: f64| 3.0 - 2.0 * (x - 0.37).powi(2);
        let x = [0.0, 0.5, 1.2];
        let (xv, yv) = parabola_vertex(x, x.map(f)).unwrap();
        assert!((xv - 0.37).abs() < 1e-12 && (yv - 3.0).abs() < 1e-12);
        assert!(parabola_vertex([0.0, 1.0, 2.0], [1.0, 1.0, 1.0]).is_none());
    }

    #[test]
    fn tail_series_matches_quadrature() {
        for (a, r, alpha) in [(0.3, 8.0, 4.0), (2.0, 6.0, 3.5), (0.01, 5.0, 2.5)] {
            let series = tail_integral(a, r, alpha);
            // r = R / u² keeps the integrand bounded at u = 0 for every α > 2.
            let direct = integrate(
                |u: f64| {
                    if u <= 0.0 {
                        return 0.0;
                    }
                    let x = r / (u * u);
                    x * a / (x.powf(alpha) + a) * 2.0 * r / (u * u * u)
                },
                0.0,
                1.0,
                1e-15,
            )
            .value;
            assert!((series - direct).abs() < 1e-10 * direct.max(1e-6), "{series} vs {direct}");
        }
    }

    #[test]
    fn grid_realization_has_unit_density() {
        let d = sorted_distances(DeploymentKind::SquareGrid, 8.0, 3).unwrap();
        let expected = std::f64::consts::PI * 64.0;
        assert!((d.len() as f64 - expected).abs() < 0.1 * expected);
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn weights_sum_to_at_most_one() {
        let d = sorted_distances(DeploymentKind::Poisson, 8.0, 5).unwrap();
        let w = nearest_active_weights(&d, 0.7, 1.0, 4.0, 8.0, 1e-12);
        let s: f64 = w.iter().sum();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn pooled_coverage_matches_exact_sum() {
        let p = CellularParams::default();
        let bank = CoverageBank::build(&p, DensityBracket::default(), 50, &GridMcConfig { n_lambda: 30, ..GridMcConfig::default() }, 4).unwrap();
        for j in 0..30 {
            for tx in [0.01, 1.0, 40.0] {
                let exact = bank.coverage(j, tx, p.noise_power).0;
                let pooled = bank.coverage_pooled(j, tx, p.noise_power);
                assert!((exact - pooled).abs() <= 1e-6 * exact.max(1e-12), "{j} {tx}: {exact} vs {pooled}");
            }
        }
    }

    #[test]
    fn seed_determinism() {
        let p = CellularParams::default();
        let a = optimal_density_grid_mc(&p, DensityBracket::default(), 40, 9).unwrap();
        let b = optimal_density_grid_mc(&p, DensityBracket::default(), 40, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bank_rejects_mismatched_parameters() {
        let p = CellularParams::default();
        let bank = CoverageBank::build(&p, DensityBracket::default(), 10, &GridMcConfig::default(), 1).unwrap();
        let mut q = p;
        q.path_loss_exponent = 3.5;
        assert!(bank.optimal_density(&q).is_err());
    }
}

//! Analytic energy efficiency of a Poisson cellular downlink.
//!
//! A typical user is served by its nearest active base station; base stations are
//! active with the load-dependent probability `p_a` and all other active ones
//! interfere under Rayleigh fading and `r^-α` path loss:
//!
//! ```text
//! p_a   = 1 - (1 + λ_u / (3.5 λ_b))^-3.5
//! ρ     = θ^{2/α} ∫_{θ^{-2/α}}^∞ du / (1 + u^{α/2})
//! Pcov  = π λ_a ∫_0^∞ exp(-π λ_a v (1 + ρ) - θ σ² v^{α/2} / P) dv,   λ_a = p_a λ_b
//! EE    = λ_a B log2(1 + θ) Pcov / (λ_b (p_a (P/η + Pc) + (1 - p_a) P_idle))
//! ```
//!
//! Both integrals use adaptive Gauss-Kronrod quadrature at absolute tolerance
//! [`QUAD_ABS_TOL`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netsim::CellularParams;
use crate::numeric::{golden_section_max, integrate_to_infinity, log_space, QUAD_ABS_TOL};

/// Shape parameter of the cell-load model.
const LOAD_SHAPE: f64 = 3.5;

/// Probability that a base station has at least one user.
pub fn activity_prob(bs_density: f64, user_density: f64) -> f64 {
    let ratio = user_density / (LOAD_SHAPE * bs_density);
    // -expm1(-3.5 ln(1 + r)) keeps precision when r is tiny.
    -(-LOAD_SHAPE * ratio.ln_1p()).exp_m1()
}

/// `ρ(θ, α)`, the interference term of the coverage integral.
pub fn interference_factor(sinr_threshold: f64, path_loss_exponent: f64) -> Result<f64> {
    if !(path_loss_exponent > 2.0) {
        return Err(Error::invalid(format!(
            "path-loss exponent must exceed 2, got {path_loss_exponent}"
        )));
    }
    if !(sinr_threshold > 0.0) {
        return Err(Error::invalid("SINR threshold must be positive"));
    }
    let half = path_loss_exponent / 2.0;
    let lower = sinr_threshold.powf(-1.0 / half);
    let q = integrate_to_infinity(|u| 1.0 / (1.0 + u.powf(half)), lower, QUAD_ABS_TOL * 1e-3);
    Ok(sinr_threshold.powf(1.0 / half) * q.value)
}

/// Search interval for the base-station density, in points per m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityBracket {
    pub lo: f64,
    pub hi: f64,
}

impl Default for DensityBracket {
    /// 0.1 to 100 base stations per km².
    fn default() -> Self {
        DensityBracket { lo: 1e-7, hi: 1e-4 }
    }
}

impl DensityBracket {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(Error::invalid(format!("bad density bracket [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySolution {
    /// Base stations per m².
    pub lambda_star: f64,
    /// Energy efficiency at `lambda_star`, bits per joule.
    pub ee_star: f64,
    /// The maximizer sits at (or within tolerance of) a bracket endpoint.
    pub at_boundary: bool,
}

/// Coverage and energy efficiency for a fixed parameter set, with `ρ` computed once.
#[derive(Debug, Clone, Copy)]
pub struct CoverageModel {
    params: CellularParams,
    rho: f64,
}

impl CoverageModel {
    pub fn new(params: &CellularParams) -> Result<Self> {
        params.validate()?;
        Ok(CoverageModel {
            params: *params,
            rho: interference_factor(params.sinr_threshold, params.path_loss_exponent)?,
        })
    }

    pub fn params(&self) -> &CellularParams {
        &self.params
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn coverage(&self, bs_density: f64) -> f64 {
        let p = &self.params;
        let active = activity_prob(bs_density, p.user_density) * bs_density;
        if p.noise_power == 0.0 {
            return 1.0 / (1.0 + self.rho);
        }
        if p.tx_power == 0.0 || active == 0.0 {
            return 0.0;
        }
        // Substituting t = π λ_a v removes the density from the exponential rate.
        let half = p.path_loss_exponent / 2.0;
        let noise = p.sinr_threshold * p.noise_power
            / (p.tx_power * (std::f64::consts::PI * active).powf(half));
        let decay = 1.0 + self.rho;
        integrate_to_infinity(|t| (-decay * t - noise * t.powf(half)).exp(), 0.0, QUAD_ABS_TOL).value
    }

    /// Energy efficiency for a given coverage probability.
    pub fn ee_from_coverage(&self, bs_density: f64, coverage: f64) -> f64 {
        let p = &self.params;
        let pa = activity_prob(bs_density, p.user_density);
        let rate = pa * bs_density * p.bandwidth * (1.0 + p.sinr_threshold).log2() * coverage;
        let power = bs_density
            * (pa * (p.tx_power * p.amplifier_inefficiency + p.static_power) + (1.0 - pa) * p.idle_power);
        rate / power
    }

    pub fn area_ee(&self, bs_density: f64) -> f64 {
        self.ee_from_coverage(bs_density, self.coverage(bs_density))
    }

    /// Golden-section search over `ln λ`; `tol` is the final bracket width in `ln λ`.
    pub fn optimal_density(&self, bracket: DensityBracket, tol: f64) -> Result<DensitySolution> {
        bracket.validate()?;
        if !(tol > 0.0) {
            return Err(Error::invalid("tolerance must be positive"));
        }
        let (a, b) = (bracket.lo.ln(), bracket.hi.ln());
        let r = golden_section_max(|x| self.area_ee(x.exp()), a, b, tol);
        let at_boundary = r.x - a <= 2.0 * tol || b - r.x <= 2.0 * tol;
        Ok(DensitySolution {
            lambda_star: r.x.exp(),
            ee_star: r.value,
            at_boundary,
        })
    }

    /// Exhaustive maximizer over `n` log-spaced densities.
    pub fn optimal_density_grid(&self, bracket: DensityBracket, n: usize) -> Result<DensitySolution> {
        bracket.validate()?;
        let grid = log_space(bracket.lo, bracket.hi, n);
        let (i, ee) = grid
            .iter()
            .map(|&l| self.area_ee(l))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        Ok(DensitySolution {
            lambda_star: grid[i],
            ee_star: ee,
            at_boundary: i == 0 || i + 1 == grid.len(),
        })
    }
}

pub fn coverage_prob(bs_density: f64, params: &CellularParams) -> Result<f64> {
    if !(bs_density > 0.0) {
        return Err(Error::invalid("base-station density must be positive"));
    }
    Ok(CoverageModel::new(params)?.coverage(bs_density))
}

/// Area energy efficiency in bits per joule.
pub fn area_ee(bs_density: f64, params: &CellularParams) -> Result<f64> {
    if !(bs_density > 0.0) {
        return Err(Error::invalid("base-station density must be positive"));
    }
    let p = params;
    if p.tx_power * p.amplifier_inefficiency + p.static_power == 0.0 && p.idle_power == 0.0 {
        return Err(Error::invalid("all power terms are zero"));
    }
    Ok(CoverageModel::new(params)?.area_ee(bs_density))
}

pub fn optimal_density_analytic(params: &CellularParams, bracket: DensityBracket, tol: f64) -> Result<DensitySolution> {
    CoverageModel::new(params)?.optimal_density(bracket, tol)
}

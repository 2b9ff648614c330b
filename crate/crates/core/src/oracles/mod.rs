//! Optimization oracles that label training data.
//!
//! - [`gee`] and [`dinkelbach`]: global energy efficiency of a multi-user uplink and
//!   its maximization by fractional programming.
//! - [`cellular`]: analytic coverage and area energy efficiency of a Poisson network
//!   and the optimal base-station density.
//! - [`gridmc`]: Monte-Carlo ground truth for square-grid (or Poisson) deployments.
//! - [`consumption`]: labeled samples under uniform or Gaussian hardware power draws.

pub mod cellular;
pub mod consumption;
pub mod dinkelbach;
pub mod gee;
pub mod gridmc;

pub use cellular::{
    activity_prob, area_ee, coverage_prob, optimal_density_analytic, CoverageModel, DensityBracket,
    DensitySolution,
};
pub use consumption::{consumption_model_oracle, ConsumptionLaw, ConsumptionModel, ConsumptionSample};
pub use dinkelbach::{dinkelbach_max_gee, DinkelbachConfig, DinkelbachSolution, SolverStatus};
pub use gee::{brute_force_max_gee, full_power, gee, PowerAllocation};
pub use gridmc::{optimal_density_grid_mc, CoverageBank, GridDensitySolution, GridMcConfig, NOISE_LIMIT};

use modelaid::netsim::{rayleigh_power, sample_deployment, sample_uplink_scenario, CellularParams, DeploymentKind, LinkBudget};
use modelaid::numeric::{dbm_to_watts, log_space};
use modelaid::oracles::{
    activity_prob, area_ee, coverage_prob, full_power, gee, optimal_density_analytic, CoverageBank, CoverageModel,
    DensityBracket, DinkelbachConfig, GridMcConfig, PowerAllocation,
};
use modelaid::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

/// Coverage of the origin user from explicit deployments: nearest active base
/// station serves, every other active one interferes, Rayleigh fading on all links.
fn simulated_coverage(kind: DeploymentKind, density: f64, window: f64, params: &CellularParams, n: usize, seed: u64) -> (f64, f64) {
    let pa = activity_prob(density, params.user_density);
    let mut covered = 0usize;
    for r in 0..n {
        let d = sample_deployment(kind, density, window, seed.wrapping_add(r as u64)).unwrap();
        let mut rng = rng_from_seed(seed ^ (r as u64).wrapping_mul(0x9E37_79B9));
        let active: Vec<f64> = d
            .points
            .iter()
            .filter(|_| rng.random::<f64>() < pa)
            .map(|p| p[0].hypot(p[1]))
            .collect();
        let Some((serving, _)) = active.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)) else {
            continue;
        };
        let mut signal = 0.0;
        let mut interference = 0.0;
        for (i, dist) in active.iter().enumerate() {
            let rx = params.tx_power * rayleigh_power(&mut rng) * dist.powf(-params.path_loss_exponent);
            if i == serving {
                signal = rx;
            } else {
                interference += rx;
            }
        }
        if signal > params.sinr_threshold * (params.noise_power + interference) {
            covered += 1;
        }
    }
    let p = covered as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn analytic_coverage_matches_poisson_simulation() {
    let params = CellularParams::default();
    for (density, window) in [(1e-4, 2500.0), (3e-6, 12_000.0)] {
        let analytic = coverage_prob(density, &params).unwrap();
        let n = if density > 1e-5 { 40_000 } else { 20_000 };
        let (sim, se) = simulated_coverage(DeploymentKind::Poisson, density, window, &params, n, 17);
        assert!((sim - analytic).abs() < 3.0 * se, "λ={density}: simulated {sim} ± {se}, analytic {analytic}");
    }
}

#[test]
fn grid_bank_matches_direct_grid_simulation() {
    let params = CellularParams::default();
    let bracket = DensityBracket::default();
    let bank = CoverageBank::build(&params, bracket, 4000, &GridMcConfig::default(), 5).unwrap();
    for j in [60, 120, 200] {
        let density = bank.lambdas()[j];
        let spacing = density.powf(-0.5);
        let (sim, se_sim) = simulated_coverage(DeploymentKind::SquareGrid, density, 40.0 * spacing, &params, 20_000, 23);
        let (est, se_bank) = bank.coverage(j, params.tx_power, params.noise_power);
        let tol = 3.0 * (se_sim * se_sim + se_bank * se_bank).sqrt();
        assert!((sim - est).abs() < tol, "λ={density}: simulated {sim}, bank {est}, tol {tol}");
    }
}

#[test]
fn poisson_bank_agrees_with_the_analytic_optimum() {
    let params = CellularParams::default();
    let bracket = DensityBracket::default();
    let cfg = GridMcConfig { kind: DeploymentKind::Poisson, ..GridMcConfig::default() };
    let bank = CoverageBank::build(&params, bracket, 2000, &cfg, 9).unwrap();
    for dbm in [30.0, 38.0, 46.0] {
        let p = CellularParams { tx_power: dbm_to_watts(dbm), ..params };
        let mc = bank.optimal_density(&p).unwrap();
        let analytic = CoverageModel::new(&p).unwrap().optimal_density(bracket, 1e-8).unwrap();
        // The Monte-Carlo maximizer must be statistically indistinguishable from the
        // analytic one on the analytic curve.
        let at_mc = CoverageModel::new(&p).unwrap().area_ee(mc.solution.lambda_star);
        assert!(analytic.ee_star - at_mc <= 3.0 * mc.std_error, "{dbm} dBm: {} vs {at_mc} (se {})", analytic.ee_star, mc.std_error);
    }
}

#[test]
fn grid_optimum_sits_below_the_poisson_optimum() {
    let params = CellularParams::default();
    let bracket = DensityBracket::default();
    let bank = CoverageBank::build(&params, bracket, 2000, &GridMcConfig::default(), 3).unwrap();
    let mut gaps: Vec<f64> = [30.0, 32.0, 34.0, 36.0, 38.0, 40.0, 42.0, 44.0, 46.0]
        .iter()
        .map(|&dbm| {
            let p = CellularParams { tx_power: dbm_to_watts(dbm), ..params };
            let ppp = optimal_density_analytic(&p, bracket, 1e-8).unwrap().lambda_star;
            let grid = bank.optimal_density(&p).unwrap().solution.lambda_star;
            (ppp - grid) / ppp
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    assert!(gaps[gaps.len() / 2] > 0.1, "median relative gap {:?}", gaps);
}

/// Dense grid over the bracket, refined by a second dense grid around the coarse winner.
fn grid_search(model: &CoverageModel, bracket: DensityBracket, n: usize) -> f64 {
    let argmax = |grid: &[f64]| {
        grid.iter()
            .enumerate()
            .map(|(i, &l)| (i, model.area_ee(l)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
            .0
    };
    let coarse = log_space(bracket.lo, bracket.hi, n);
    let i = argmax(&coarse);
    let fine = log_space(coarse[i.saturating_sub(1)], coarse[(i + 1).min(n - 1)], n);
    fine[argmax(&fine)]
}

#[test]
fn golden_section_agrees_with_dense_grid() {
    let bracket = DensityBracket::default();
    for dbm in [30.0, 35.0, 40.0, 46.0] {
        let params = CellularParams { tx_power: dbm_to_watts(dbm), ..CellularParams::default() };
        let model = CoverageModel::new(&params).unwrap();
        let grid = grid_search(&model, bracket, 2000);
        let mut last = f64::INFINITY;
        for tol in [1e-2, 1e-4, 1e-6] {
            let golden = model.optimal_density(bracket, tol).unwrap().lambda_star;
            let err = (golden - grid).abs() / grid;
            assert!(err <= last + 1e-6, "{dbm} dBm tol {tol}: error grew from {last} to {err}");
            last = err;
        }
        assert!(last < 1e-3, "{dbm} dBm: relative gap {last}");
    }
}

#[test]
fn optimal_density_depends_on_transmit_power() {
    let bracket = DensityBracket::default();
    let at = |dbm: f64| {
        let params = CellularParams { tx_power: dbm_to_watts(dbm), ..CellularParams::default() };
        optimal_density_analytic(&params, bracket, 1e-8).unwrap()
    };
    let (lo, hi) = (at(30.0), at(46.0));
    assert!(!lo.at_boundary && !hi.at_boundary);
    assert!((lo.lambda_star - hi.lambda_star).abs() / lo.lambda_star > 0.05);
}

#[test]
fn area_ee_has_an_interior_maximum() {
    let params = CellularParams::default();
    let bracket = DensityBracket::default();
    let sweep = log_space(bracket.lo, bracket.hi, 200);
    let ee: Vec<f64> = sweep.iter().map(|&l| area_ee(l, &params).unwrap()).collect();
    assert!(ee.iter().all(|&v| v >= 0.0));
    let best = ee.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert!(ee[0] < best && ee[199] < best);
}

#[test]
fn doubling_bandwidth_doubles_ee_and_keeps_the_maximizer() {
    let bracket = DensityBracket::default();
    for dbm in [30.0, 41.0] {
        let p = CellularParams { tx_power: dbm_to_watts(dbm), ..CellularParams::default() };
        let q = CellularParams { bandwidth: 2.0 * p.bandwidth, ..p };
        let a = optimal_density_analytic(&p, bracket, 1e-6).unwrap();
        let b = optimal_density_analytic(&q, bracket, 1e-6).unwrap();
        assert_eq!(a.lambda_star, b.lambda_star);
        assert!((b.ee_star - 2.0 * a.ee_star).abs() <= 1e-12 * b.ee_star);
    }
}

#[test]
fn dinkelbach_dominates_full_power_on_1000_scenarios() {
    let link = LinkBudget::default();
    for seed in 0..1000u64 {
        let mut rng = rng_from_seed(seed);
        let pmax = dbm_to_watts(-10.0 + 20.0 * rng.random::<f64>());
        let s = sample_uplink_scenario(5, 500.0, pmax, &link, seed).unwrap();
        let sol = DinkelbachConfig { seed, ..DinkelbachConfig::default() }.solve(&s).unwrap();
        assert!(sol.converged(), "seed {seed}: {:?}", sol.status);
        assert!(sol.lambdas.windows(2).all(|w| w[1] >= w[0]), "seed {seed}: λ decreased");
        let fp = gee(&s, &full_power(&s)).unwrap();
        let zero = gee(&s, &PowerAllocation(vec![0.0; 5])).unwrap();
        assert!(sol.gee >= fp * (1.0 - 1e-12), "seed {seed}: {} < full power {fp}", sol.gee);
        assert!(sol.gee >= zero);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gee_is_finite_and_non_negative(n in 1usize..6, seed: u64, fractions in prop::collection::vec(0.0f64..=1.0, 6)) {
        let s = sample_uplink_scenario(n, 500.0, dbm_to_watts(0.0), &LinkBudget::default(), seed).unwrap();
        let p = PowerAllocation::new(fractions[..n].iter().map(|f| f * s.pmax).collect(), &s).unwrap();
        let v = gee(&s, &p).unwrap();
        prop_assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn activity_probability_is_a_decreasing_probability(lb in 1e-8f64..1e-2, ratio in 1.0001f64..100.0) {
        let a = activity_prob(lb, 1e-4);
        let b = activity_prob(lb * ratio, 1e-4);
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(b <= a);
    }

    #[test]
    fn coverage_is_a_probability(lb in 1e-7f64..1e-4, theta_db in -10.0f64..20.0) {
        let params = CellularParams { sinr_threshold: 10f64.powf(theta_db / 10.0), ..CellularParams::default() };
        let v = coverage_prob(lb, &params).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }
}

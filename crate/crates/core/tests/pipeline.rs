//! End-to-end use of the public API: simulate a target, calibrate against it,
//! and regenerate the best candidate.

use fmcal_core::objectives::Objective;
use fmcal_core::{
    calibrate, ks_statistic, random_search, simulate, NcsConfig, ObjectiveKind, PgpsParams, SimConfig,
    SimulationObjective,
};

fn sim() -> SimConfig {
    SimConfig { horizon: 150, n_agents: 40, msd_samples: 2_000, ..SimConfig::default() }
}

fn truth() -> PgpsParams {
    PgpsParams { alpha: 0.12, mu: 0.025, delta: 0.02, delta_s: 0.001, lambda0: 160.0, c_lambda: 15.0 }
}

#[test]
fn simulation_is_a_pure_function_of_its_seed() {
    let a = simulate(&truth(), &sim(), 8).unwrap();
    assert_eq!(a, simulate(&truth(), &sim(), 8).unwrap());
    assert_eq!(a.len(), 150);
    assert!(a.values.iter().all(|v| *v > 0.0 && (v * 2.0).fract() == 0.0));
    assert_ne!(a.values, simulate(&truth(), &sim(), 9).unwrap().values);
}

#[test]
fn calibrated_best_regenerates_exactly() {
    let target = simulate(&truth(), &sim(), 1).unwrap();
    let objective = SimulationObjective::new(ObjectiveKind::Ks, &target, sim()).unwrap();
    let config = NcsConfig { budget_evals: 60, ..NcsConfig::default() };
    let result = calibrate(&objective, &config, 4).unwrap();
    assert!(result.evals_used <= 60);
    assert_eq!(objective.evaluate(&result.best_x, result.best_seed).unwrap(), result.best_value);

    let params = PgpsParams::from_slice(&result.best_x).unwrap();
    let series = simulate(&params, &sim(), result.best_seed).unwrap();
    assert_eq!(ks_statistic(&series.values, &target.values).unwrap(), result.best_value);

    // best-so-far never increases along the trace
    assert!(result.trace.windows(2).all(|w| w[1].best_f <= w[0].best_f));
}

#[test]
fn random_search_spends_its_budget() {
    let target = simulate(&truth(), &sim(), 2).unwrap();
    let objective = SimulationObjective::new(ObjectiveKind::Msm, &target, sim()).unwrap();
    let result = random_search(&objective, &PgpsParams::synthetic_bounds(), 25, 3).unwrap();
    assert_eq!(result.evals_used, 25);
    assert!(result.best_value.is_finite());
    assert_eq!(result, random_search(&objective, &PgpsParams::synthetic_bounds(), 25, 3).unwrap());
}

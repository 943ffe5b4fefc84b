mod common;

use stochmatch::chain::{Model, SimConfig};
use stochmatch::stationary::{
    finite_stationary, solve_finite_model, tv_against_product_form, tv_distance,
};
use stochmatch::{Execution, PolicySpec, ProbMeasure, ProductForm};

#[test]
fn replicas_are_deterministic_and_executor_independent() {
    let fx = common::load("ex3");
    let model = Model::new(&fx.graph, &fx.mu, &fx.policy).unwrap();
    let cfg = SimConfig {
        track_max_len: Some(6),
        ..SimConfig::new(20_000, 7)
    };
    let par = model.simulate_replicas(&cfg, 4, Execution::Parallel);
    let seq = model.simulate_replicas(&cfg, 4, Execution::Sequential);
    assert_eq!(par, seq);
    assert_eq!(par[0], model.simulate(&cfg));
    assert_ne!(par[0].visits, par[1].visits);
    for r in &par {
        assert_eq!(r.visits.values().sum::<u64>() + r.overflow, r.recorded);
    }
}

#[test]
fn fcfm_linear_solve_matches_product_form() {
    let fx = common::load("square");
    for weights in [[0.25, 0.25, 0.25, 0.25], [0.1, 0.2, 0.3, 0.4]] {
        let mu = ProbMeasure::from_f64(&fx.graph, &weights).unwrap();
        let model = Model::new(&fx.graph, &mu, &PolicySpec::Fcfm).unwrap();
        let solved = solve_finite_model(&model).unwrap();
        let formula = finite_stationary(&fx.graph, &mu).unwrap();
        assert!(solved.max_abs_diff(&formula) < 1e-12);
    }
}

#[test]
fn match_longest_has_no_product_form() {
    // Finite square: exact, but the gap stays small since every class holds at most one item.
    let fx = common::load("square");
    let mu = ProbMeasure::from_f64(&fx.graph, &[0.1, 0.2, 0.3, 0.4]).unwrap();
    let formula = finite_stationary(&fx.graph, &mu).unwrap();
    let ml = Model::new(&fx.graph, &mu, &PolicySpec::match_longest()).unwrap();
    let tv = tv_distance(&solve_finite_model(&ml).unwrap(), &formula);
    assert!(tv > 1e-3 && tv < 0.02, "tv = {tv}");

    let fx = common::load("ex2");
    let pf = ProductForm::new(&fx.graph, &fx.mu).unwrap();
    let ml = Model::new(&fx.graph, &fx.mu, &PolicySpec::match_longest()).unwrap();
    let cfg = SimConfig {
        burn_in: Some(10_000),
        track_max_len: Some(4),
        ..SimConfig::new(1_000_000, 0)
    };
    let report = tv_against_product_form(&pf, &ml.simulate(&cfg), 4);
    assert!(report.tv > 0.04, "{report:?}");
}

#[test]
fn simulated_fcfm_is_close_to_product_form() {
    let fx = common::load("k3");
    let model = Model::new(&fx.graph, &fx.mu, &PolicySpec::Fcfm).unwrap();
    let cfg = SimConfig {
        burn_in: Some(1_000),
        track_max_len: Some(6),
        ..SimConfig::new(200_000, 0)
    };
    let sim = model.simulate(&cfg);
    let pf = ProductForm::new(&fx.graph, &fx.mu).unwrap();
    let report = tv_against_product_form(&pf, &sim, 4);
    assert!(
        (report.tail_model - 3.0 / 64.0).abs() < 1e-15,
        "{}",
        report.tail_model
    );
    assert!(report.tv < 0.02, "{report:?}");
}

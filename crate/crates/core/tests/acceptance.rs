//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//! Tolerances and budgets are pinned below.

mod common;

use std::time::{Duration, Instant};

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochmatch::chain::{enumerate_states, SimConfig};
use stochmatch::detailed::{
    block_sum, excursion_decompose, excursion_report, verify_local_balance_empirical, Trajectory,
};
use stochmatch::drift::{identity_scan, ppartite_scan, random_state, IdentityChecker};
use stochmatch::measures::{mu_deg, ncond_check, ncond_equivalence_check, parse_rational};
use stochmatch::stationary::{
    alpha_inverse, balance_residual, finite_stationary, solve_finite_model, tv_against_product_form,
};
use stochmatch::{Execution, Model, Multigraph, PolicySpec, ProbMeasure, ProductForm, QueueWord};

const EXACT_TOL: f64 = 1e-12;
const TV_TOL: f64 = 0.02;
const FREQ_SIGMAS: f64 = 4.0;
const UNSTABLE_SLOPE: f64 = 0.05;
const STABLE_SLOPE: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn q(s: &str) -> BigRational {
    parse_rational(s).unwrap()
}

fn normalized(w: Vec<BigRational>) -> Vec<BigRational> {
    let total: BigRational = w.iter().cloned().sum();
    w.into_iter().map(|x| x / &total).collect()
}

fn timed(budget: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = f();
    let took = start.elapsed();
    out.detail = format!(
        "{}; {:.2}s (budget {}s)",
        out.detail,
        took.as_secs_f64(),
        budget.as_secs()
    );
    out.pass &= took < budget;
    out
}

fn square_golden() -> Outcome {
    let fx = common::load("square");
    let g = &fx.graph;
    let fs = finite_stationary(g, &fx.mu).unwrap();
    let exact = fs.exact.as_ref().unwrap();
    let mut pass = true;
    for w in enumerate_states(g, g.len()) {
        let want = match w.len() {
            0 => q("3/8"),
            1 => q("1/8"),
            2 => q("1/32"),
            _ => q("0"),
        };
        pass &= exact.get(&w).cloned().unwrap_or_else(|| q("0")) == want;
    }
    for (word, value) in fx.expected["pi"].as_object().unwrap() {
        let w = QueueWord::parse(g, word).unwrap();
        pass &= exact[&w] == q(value.as_str().unwrap());
    }
    let model = Model::new(g, &fx.mu, &PolicySpec::Fcfm).unwrap();
    let solved = solve_finite_model(&model).unwrap();
    let diff = fs.max_abs_diff(&solved);
    pass &= diff < EXACT_TOL;
    Outcome {
        pass,
        detail: format!(
            "{} states, max |formula − linear solve| = {diff:.2e}",
            fs.table.len()
        ),
    }
}

/// A measure on Ex2 drawn from small integer weights until it lies in NCOND.
fn sampled_ex2_measure(g: &Multigraph) -> ProbMeasure {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    loop {
        let w: Vec<BigRational> = (0..g.len())
            .map(|_| BigRational::from_integer(rng.random_range(1..=20).into()))
            .collect();
        let mu = ProbMeasure::from_rationals(g, normalized(w)).unwrap();
        if ncond_check(g, &mu).unwrap().satisfied {
            return mu;
        }
    }
}

fn balance() -> Outcome {
    let ex3 = common::load("ex3");
    let k3 = common::load("k3");
    let ex2 = common::load("ex2");
    let ex2_mu = sampled_ex2_measure(&ex2.graph);
    let cases = [
        (&ex3.graph, &ex3.mu, 8, "ex3"),
        (&k3.graph, &k3.mu, 10, "k3"),
        (&ex2.graph, &ex2_mu, 6, "ex2"),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (g, mu, len, name) in cases {
        let start = Instant::now();
        let pf = ProductForm::new(g, mu).unwrap();
        let r = balance_residual(&pf, len, Execution::Parallel).unwrap();
        let ok = r.max_residual < EXACT_TOL && start.elapsed() < Duration::from_secs(10);
        pass &= ok;
        parts.push(format!(
            "{name} |w|≤{len}: {:.1e} over {}",
            r.max_residual, r.states_checked
        ));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn alpha_cross() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in common::ALL {
        let fx = common::load(name);
        let w = fx.mu.exact_weights().unwrap();
        let direct = alpha_inverse(&fx.graph, w, Execution::Parallel).unwrap();
        let blocks = block_sum(&fx.graph, w, Execution::Parallel).unwrap();
        pass &= direct == blocks;
        if let Some(a) = fx.expected.get("alpha") {
            pass &= BigRational::from_integer(1.into()) / &direct == q(a.as_str().unwrap());
        }
        parts.push(format!(
            "{name}: α⁻¹ = {}",
            stochmatch::measures::format_rational(&direct)
        ));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut reach = 1u32;
    loop {
        let mut next = reach;
        for &(i, j) in edges {
            if reach >> i & 1 == 1 || reach >> j & 1 == 1 {
                next |= 1 << i | 1 << j;
            }
        }
        if next == reach {
            return reach == (1 << n) - 1;
        }
        reach = next;
    }
}

fn build(n: usize, edges: &[(usize, usize)], loops: u32) -> Multigraph {
    const NAMES: [&str; 6] = ["1", "2", "3", "4", "5", "6"];
    let e: Vec<(&str, &str)> = edges.iter().map(|&(i, j)| (NAMES[i], NAMES[j])).collect();
    let l: Vec<&str> = (0..n)
        .filter(|i| loops >> i & 1 == 1)
        .map(|i| NAMES[i])
        .collect();
    Multigraph::new(&NAMES[..n], &e, &l).unwrap()
}

/// Returns whether `μ_deg` behaves as claimed on `g`.
fn check_mu_deg(g: &Multigraph) -> bool {
    let r = ncond_check(g, &mu_deg(g)).unwrap();
    match g.bipartition().filter(|_| g.self_loops().is_empty()) {
        Some((a, b)) => !r.satisfied && r.witness.is_some_and(|w| w == a || w == b),
        None => r.satisfied,
    }
}

fn ncond_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut graphs = 0usize;
    let mut bipartite = 0usize;
    let mut failures = 0usize;
    for n in 2..=6usize {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        for mask in 0u32..1 << pairs.len() {
            let edges: Vec<(usize, usize)> = pairs
                .iter()
                .enumerate()
                .filter(|(k, _)| mask >> k & 1 == 1)
                .map(|(_, &e)| e)
                .collect();
            if !connected(n, &edges) {
                continue;
            }
            // Every loop pattern up to five nodes; at six, none plus one random pattern.
            let loop_sets: Vec<u32> = if n <= 5 {
                (0..1u32 << n).collect()
            } else {
                vec![0, rng.random_range(1..1u32 << n)]
            };
            for loops in loop_sets {
                let g = build(n, &edges, loops);
                graphs += 1;
                if g.is_bipartite_graph() {
                    bipartite += 1;
                }
                if !check_mu_deg(&g) {
                    failures += 1;
                }
            }
        }
    }
    let mut equiv_fail = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..=6);
        let g = loop {
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .collect();
            let edges: Vec<(usize, usize)> =
                pairs.into_iter().filter(|_| rng.random_bool(0.5)).collect();
            if connected(n, &edges) {
                let loops = (0..n)
                    .filter(|_| rng.random_bool(0.4))
                    .fold(0u32, |m, i| m | 1 << i);
                break build(n, &edges, loops);
            }
        };
        let w: Vec<BigRational> = (0..n)
            .map(|_| BigRational::from_integer(rng.random_range(1..=30).into()))
            .collect();
        let mu = ProbMeasure::from_rationals(&g, normalized(w)).unwrap();
        if !ncond_equivalence_check(&g, &mu).unwrap() {
            equiv_fail += 1;
        }
    }
    Outcome {
        pass: failures == 0 && equiv_fail == 0,
        detail: format!(
            "{graphs} multigraphs ({bipartite} bipartite graphs), {failures} μ_deg failures; {equiv_fail}/1000 equivalence failures"
        ),
    }
}

fn drift_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for name in ["ex2", "ex3", "ex4"] {
        let fx = common::load(name);
        let g = &fx.graph;
        let mut states = enumerate_states(g, 4);
        let mut extra = 0;
        while extra < 200 {
            if let Some(w) = random_state(g, rng.random_range(5..=12), &mut rng) {
                states.push(w);
                extra += 1;
            }
        }
        let policies = [
            PolicySpec::Fcfm,
            common::descending_priority(g),
            PolicySpec::match_longest(),
            PolicySpec::match_shortest(),
        ];
        for spec in &policies {
            let c = IdentityChecker::new(g, &fx.mu, spec, None).unwrap();
            let scan = identity_scan(&c, &states, Execution::Parallel).unwrap();
            pass &= scan.passed();
            worst = worst.max(scan.max_residual());
            checked += scan.states;
        }
    }
    Outcome {
        pass,
        detail: format!("{checked} (policy, state) pairs, max residual {worst:.1e}"),
    }
}

fn ldelta_bound() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["ex3", "ex4"] {
        let fx = common::load(name);
        let model = Model::new(&fx.graph, &fx.mu, &fx.policy).unwrap();
        let r = ppartite_scan(&model, None, 6, Execution::Parallel).unwrap();
        pass &= r.passed && r.checked > 0;
        parts.push(format!(
            "{name}: δ = {:.3}, {} states, max drift {:.4} vs bound {:.4}",
            r.delta, r.checked, r.max_drift, r.bound
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn simulation_tv() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["square", "ex3"] {
        let fx = common::load(name);
        let model = Model::new(&fx.graph, &fx.mu, &PolicySpec::Fcfm).unwrap();
        let pf = ProductForm::new(&fx.graph, &fx.mu).unwrap();
        let cfg = SimConfig {
            steps: 1_000_000,
            burn_in: Some(10_000),
            seed: 0,
            track_max_len: Some(4),
        };
        let runs = model.simulate_replicas(&cfg, 3, Execution::Parallel);
        let tvs: Vec<f64> = runs
            .iter()
            .map(|r| tv_against_product_form(&pf, r, 4).tv)
            .collect();
        pass &= tvs.iter().all(|&t| t < TV_TOL);
        parts.push(format!(
            "{name}: TV {}",
            tvs.iter()
                .map(|t| format!("{t:.4}"))
                .collect::<Vec<_>>()
                .join("/")
        ));
    }
    Outcome {
        pass,
        detail: format!("{} (seeds 0,1,2)", parts.join(", ")),
    }
}

fn reversibility() -> Outcome {
    let fx = common::load("square");
    let s = verify_local_balance_empirical(&fx.graph, &fx.mu, 1_000_000, 0).unwrap();
    Outcome {
        pass: s.passed(),
        detail: format!(
            "{} pairs, max z {:.2}, {:.1}% within 2 SE, {} undetermined forward words",
            s.pairs_tested,
            s.max_z,
            100.0 * s.frac_within_2se,
            s.undetermined
        ),
    }
}

fn matched_letters() -> Outcome {
    let fx = common::load("ex3");
    let traj = Trajectory::sample(&fx.graph, &fx.mu, 200_000, 0).unwrap();
    let ex = excursion_decompose(&fx.graph, traj.arrivals()).unwrap();
    let r = excursion_report(&fx.graph, &fx.mu, &ex);
    Outcome {
        pass: r.matched_letters >= 100_000 && r.max_z() <= FREQ_SIGMAS && r.all_permutation_valid(),
        detail: format!(
            "{} letters in {} excursions, max class z {:.2}, permutation-valid {}/{}, g∘f = id on {}",
            r.matched_letters,
            r.excursions,
            r.max_z(),
            r.permutation_valid,
            r.excursions,
            r.inverse_ok
        ),
    }
}

fn stability_direction() -> Outcome {
    let fx = common::load("ex3");
    let g = &fx.graph;
    let unstable = ProbMeasure::parse(g, &["0.35", "0.25", "0.4"]).unwrap();
    let up = Model::new(g, &unstable, &PolicySpec::Fcfm)
        .unwrap()
        .stability_slope(200_000, 0);
    let flat = Model::new(g, &fx.mu, &PolicySpec::Fcfm)
        .unwrap()
        .stability_slope(200_000, 0);
    Outcome {
        pass: up > UNSTABLE_SLOPE && flat.abs() < STABLE_SLOPE,
        detail: format!("slope outside NCOND {up:.4}, inside {flat:.2e}"),
    }
}

fn main() {
    let secs = Duration::from_secs;
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        (
            "square-with-loops golden values",
            Box::new(|| timed(secs(1), square_golden)),
        ),
        (
            "product-form balance residual",
            Box::new(|| timed(secs(30), balance)),
        ),
        (
            "alpha via blocks equals subset sum",
            Box::new(|| timed(secs(1), alpha_cross)),
        ),
        (
            "NCOND degree measure and equivalence",
            Box::new(|| timed(secs(60), ncond_properties)),
        ),
        (
            "drift identities on G, blow-up and reduction",
            Box::new(|| timed(secs(30), drift_identities)),
        ),
        (
            "L_delta drift bound",
            Box::new(|| timed(secs(30), ldelta_bound)),
        ),
        (
            "simulation vs product form",
            Box::new(|| timed(secs(30), simulation_tv)),
        ),
        (
            "backward/forward local balance",
            Box::new(|| timed(secs(120), reversibility)),
        ),
        (
            "matched letters i.i.d.",
            Box::new(|| timed(secs(30), matched_letters)),
        ),
        (
            "stability slope direction",
            Box::new(|| timed(secs(30), stability_direction)),
        ),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.into_iter().enumerate() {
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} C{:<2} {name}: {}",
            if out.pass { "PASS" } else { "FAIL" },
            k + 1,
            out.detail
        );
    }
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}

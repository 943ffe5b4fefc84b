use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};
use stochmatch::chain::{enumerate_states, Model, QueueWord, SimConfig, SimulationResult};
use stochmatch::detailed::{
    excursion_decompose, excursion_report, verify_local_balance_empirical, Trajectory,
};
use stochmatch::drift::{identity_scan, ppartite_scan, scan_drift};
use stochmatch::measures::{
    self, extend_measure_half, format_rational, mu_deg, ncond_check, NcondReport,
};
use stochmatch::stationary::{balance_residual, tv_against_product_form};
use stochmatch::{
    Execution, IdentityChecker, LyapunovFn, Multigraph, NodeSet, PolicySpec, ProductForm,
};

use crate::output::Sink;
use crate::{input, Common, DriftFn, Failure, Measure, Run};

type Outcome = Result<(), Failure>;

fn names(g: &Multigraph, s: NodeSet) -> Vec<String> {
    s.iter().map(|i| g.name(i).to_string()).collect()
}

fn margin_text(r: &NcondReport) -> String {
    match &r.margin_exact {
        Some(m) => format_rational(m),
        None if r.margin.is_infinite() => "inf".into(),
        None => r.margin.to_string(),
    }
}

fn ncond_json(g: &Multigraph, r: &NcondReport) -> Value {
    json!({
        "satisfied": r.satisfied,
        "margin": margin_text(r),
        "witness": r.witness.map(|w| names(g, w)),
    })
}

fn parts_json(g: &Multigraph) -> Option<Vec<Vec<String>>> {
    g.maximal_subgraph()
        .complete_multipartite_decomposition()
        .map(|parts| parts.into_iter().map(|p| names(g, p)).collect())
}

fn verify(ok: bool, msg: impl FnOnce() -> String) -> Outcome {
    if ok {
        Ok(())
    } else {
        Err(Failure::Verification(msg()))
    }
}

pub fn info(common: &Common) -> Outcome {
    let g = input::graph(&common.graph)?;
    let check = g.maximal_subgraph();
    let map = g.minimal_blowup()?;
    let degrees: BTreeMap<&str, usize> = (0..g.len()).map(|i| (g.name(i), g.degree(i))).collect();
    let summary = json!({
        "nodes": g.names(),
        "edges": g.edges().iter().map(|&(i, j)| [g.name(i), g.name(j)]).collect::<Vec<_>>(),
        "self_loops": names(&g, g.self_loops()),
        "unlooped": names(&g, g.v2()),
        "degrees": degrees,
        "degree_total": g.edge_total(),
        "bipartite": g.is_bipartite_graph(),
        "bipartition": g.bipartition().map(|(a, b)| [names(&g, a), names(&g, b)]),
        "independent_sets": g.independent_sets().count(),
        "maximal_subgraph": { "nodes": check.len(), "edges": check.edges().len() },
        "blowup": { "nodes": map.blown.len(), "edges": map.blown.edges().len() },
        "multipartite_parts": parts_json(&g),
    });
    Sink::new(common.out.clone())?.json("summary.json", &summary)?;
    Ok(())
}

pub fn ncond(common: &Common, mu: Option<&str>) -> Outcome {
    let g = input::graph(&common.graph)?;
    let bipartite = g.is_bipartite_graph();
    let report = mu
        .map(|m| input::measure(&g, m))
        .transpose()?
        .map(|m| ncond_check(&g, &m))
        .transpose()?;
    let summary = json!({
        "region": if bipartite { "empty" } else { "nonempty" },
        "bipartite": bipartite,
        "bipartition": g.bipartition().map(|(a, b)| [names(&g, a), names(&g, b)]),
        "measure": report.as_ref().map(|r| ncond_json(&g, r)),
    });
    Sink::new(common.out.clone())?.json("summary.json", &summary)?;
    match report {
        Some(r) if !bipartite => verify(r.satisfied, || {
            format!(
                "measure outside the stability region (margin {})",
                margin_text(&r)
            )
        }),
        _ => Ok(()),
    }
}

pub fn mudeg(common: &Common) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = mu_deg(&g);
    let report = ncond_check(&g, &mu)?;
    let mut sink = Sink::new(common.out.clone())?;
    sink.artifact("mu.json", &mu.to_json())?;
    sink.json("summary.json", &json!({ "ncond": ncond_json(&g, &report) }))?;
    Ok(())
}

#[derive(Serialize)]
struct PiRow {
    word: String,
    probability: f64,
    exact: String,
}

pub fn stationary_fcfm(common: &Common, measure: &Measure, max_len: usize) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let pf = ProductForm::new(&g, &mu)?;
    let mut rows = Vec::new();
    for (w, p) in pf.table(max_len) {
        let exact = pf
            .pi_w_exact(&w)?
            .map(|q| format_rational(&q))
            .unwrap_or_default();
        rows.push(PiRow {
            word: w.display(&g),
            probability: p,
            exact,
        });
    }
    let mass_exact = pf.truncated_mass_exact(max_len);
    let summary = json!({
        "alpha": pf.alpha(),
        "alpha_exact": pf.alpha_exact().map(format_rational),
        "max_len": max_len,
        "words": rows.len(),
        "truncated_mass": pf.truncated_mass(max_len),
        "tail_mass_exact": mass_exact.map(|m| format_rational(&(BigRational::from_integer(1.into()) - m))),
    });
    let mut sink = Sink::new(common.out.clone())?;
    sink.json("summary.json", &summary)?;
    sink.csv("stationary.csv", &rows)?;
    Ok(())
}

pub fn verify_balance(common: &Common, measure: &Measure, max_len: usize, tol: f64) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let pf = ProductForm::new(&g, &mu)?;
    let rep = balance_residual(&pf, max_len, Execution::Parallel)?;
    let passed = rep.max_residual < tol;
    let summary = json!({
        "max_len": max_len,
        "states_checked": rep.states_checked,
        "max_residual": rep.max_residual,
        "argmax": rep.argmax.display(&g),
        "tol": tol,
        "passed": passed,
    });
    Sink::new(common.out.clone())?.json("summary.json", &summary)?;
    verify(passed, || {
        format!(
            "balance residual {:e} at `{}` exceeds {tol:e}",
            rep.max_residual,
            rep.argmax.display(&g)
        )
    })
}

fn sim_config(run: &Run, max_len: usize) -> SimConfig {
    SimConfig {
        steps: run.steps,
        burn_in: run.burn_in,
        seed: run.seed,
        track_max_len: Some(max_len),
    }
}

/// Pools replicas into one result: visit counts and recorded steps add up,
/// averages are weighted by recorded steps.
fn merge(results: &[SimulationResult]) -> SimulationResult {
    let first = &results[0];
    let mut visits: BTreeMap<QueueWord, u64> = BTreeMap::new();
    let mut occupancy = vec![0.0; first.occupancy.len()];
    let (mut recorded, mut overflow, mut len_sum) = (0u64, 0u64, 0.0);
    for r in results {
        for (w, c) in &r.visits {
            *visits.entry(w.clone()).or_default() += c;
        }
        recorded += r.recorded;
        overflow += r.overflow;
        len_sum += r.mean_len * r.recorded as f64;
        for (o, x) in occupancy.iter_mut().zip(&r.occupancy) {
            *o += x * r.recorded as f64;
        }
    }
    let denom = recorded.max(1) as f64;
    SimulationResult {
        visits,
        overflow,
        recorded,
        steps: results.iter().map(|r| r.steps).sum(),
        burn_in: results.iter().map(|r| r.burn_in).sum(),
        max_len: results.iter().map(|r| r.max_len).max().unwrap_or(0),
        mean_len: len_sum / denom,
        occupancy: occupancy.into_iter().map(|o| o / denom).collect(),
        seed: first.seed,
    }
}

fn replicas(
    common: &Common,
    measure: &Measure,
    policy: &str,
    run: &Run,
    max_len: usize,
) -> Result<(Model, Vec<SimulationResult>), Failure> {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let spec = input::policy(policy)?;
    let model = Model::new(&g, &mu, &spec)?;
    if run.replicas == 0 {
        return Err(Failure::Input(anyhow::anyhow!(
            "--replicas must be at least 1"
        )));
    }
    let results =
        model.simulate_replicas(&sim_config(run, max_len), run.replicas, Execution::Parallel);
    Ok((model, results))
}

#[derive(Serialize)]
struct FreqRow {
    word: String,
    visits: u64,
    frequency: f64,
}

pub fn simulate(
    common: &Common,
    measure: &Measure,
    policy: &str,
    run: &Run,
    max_len: usize,
) -> Outcome {
    let (model, results) = replicas(common, measure, policy, run, max_len)?;
    let g = &model.graph;
    let pooled = merge(&results);
    let rows: Vec<FreqRow> = pooled
        .visits
        .iter()
        .map(|(w, &c)| FreqRow {
            word: w.display(g),
            visits: c,
            frequency: pooled.frequency(w),
        })
        .collect();
    let occupancy: BTreeMap<&str, f64> = (0..g.len())
        .map(|i| (g.name(i), pooled.occupancy[i]))
        .collect();
    let summary = json!({
        "policy": model.policy.spec(),
        "steps": run.steps,
        "burn_in": results[0].burn_in,
        "seed": run.seed,
        "replicas": run.replicas,
        "recorded": pooled.recorded,
        "beyond_max_len": pooled.overflow,
        "mean_len": pooled.mean_len,
        "mean_len_by_replica": results.iter().map(|r| r.mean_len).collect::<Vec<_>>(),
        "max_len_seen": pooled.max_len,
        "occupancy": occupancy,
    });
    let mut sink = Sink::new(common.out.clone())?;
    sink.json("summary.json", &summary)?;
    sink.csv("frequencies.csv", &rows)?;
    Ok(())
}

pub fn tv_compare(
    common: &Common,
    measure: &Measure,
    policy: &str,
    run: &Run,
    max_len: usize,
    tol: f64,
) -> Outcome {
    let (model, results) = replicas(common, measure, policy, run, max_len)?;
    let pf = ProductForm::new(&model.graph, &model.mu)?;
    let per: Vec<_> = results
        .iter()
        .map(|r| tv_against_product_form(&pf, r, max_len))
        .collect();
    let pooled = tv_against_product_form(&pf, &merge(&results), max_len);
    let worst = per.iter().map(|r| r.tv).fold(0.0, f64::max);
    let passed = worst < tol;
    let tail_exact = pf
        .truncated_mass_exact(max_len)
        .map(|m| format_rational(&(BigRational::from_integer(1.into()) - m)));
    let summary = json!({
        "policy": model.policy.spec(),
        "steps": run.steps,
        "seed": run.seed,
        "replicas": run.replicas,
        "max_len": max_len,
        "words": pooled.words,
        "tail_mass_model": pooled.tail_model,
        "tail_mass_exact": tail_exact,
        "tv_by_replica": per.iter().map(|r| r.tv).collect::<Vec<_>>(),
        "tv_pooled": pooled.tv,
        "tol": tol,
        "passed": passed,
    });
    Sink::new(common.out.clone())?.json("summary.json", &summary)?;
    verify(passed, || {
        format!("total variation {worst:.4} is not below {tol}")
    })
}

pub fn reversibility(common: &Common, measure: &Measure, steps: usize, seed: u64) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let stats = verify_local_balance_empirical(&g, &mu, steps, seed)?;
    let passed = stats.passed();
    let summary = json!({
        "steps": stats.steps,
        "seed": stats.seed,
        "min_visits": stats.min_visits,
        "pairs_tested": stats.pairs_tested,
        "max_normalized_discrepancy": stats.max_z,
        "max_abs_discrepancy": stats.max_abs_diff,
        "fraction_within_2se": stats.frac_within_2se,
        "all_within_3se": stats.all_within_3se,
        "undetermined_forward": stats.undetermined,
        "final_horizon": stats.final_horizon,
        "backward_states": stats.backward_states,
        "forward_states": stats.forward_states,
        "passed": passed,
    });
    let mut sink = Sink::new(common.out.clone())?;
    sink.json("summary.json", &summary)?;
    if common.out.is_some() {
        sink.csv("pairs.csv", &stats.pairs)?;
    }
    verify(passed, || {
        format!(
            "{} pairs, max z {:.2}, {:.1}% within 2 SE",
            stats.pairs_tested,
            stats.max_z,
            100.0 * stats.frac_within_2se
        )
    })
}

#[derive(Serialize)]
struct LengthRow {
    length: usize,
    count: u64,
}

#[derive(Serialize)]
struct LetterRow<'a> {
    class: &'a str,
    count: u64,
    frequency: f64,
    mu: f64,
    z: f64,
}

pub fn excursions(
    common: &Common,
    measure: &Measure,
    steps: usize,
    seed: u64,
    tol: f64,
) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let traj = Trajectory::sample(&g, &mu, steps, seed)?;
    let exc = excursion_decompose(&g, traj.arrivals())?;
    let rep = excursion_report(&g, &mu, &exc);
    let lengths: Vec<LengthRow> = rep
        .length_histogram
        .iter()
        .map(|(&length, &count)| LengthRow { length, count })
        .collect();
    let letters: Vec<LetterRow> = (0..g.len())
        .map(|i| LetterRow {
            class: g.name(i),
            count: rep.class_counts[i],
            frequency: rep.class_frequencies[i],
            mu: mu.get(i),
            z: rep.class_z[i],
        })
        .collect();
    let passed = rep.all_permutation_valid() && rep.max_z() <= tol;
    let summary = json!({
        "steps": steps,
        "seed": seed,
        "excursions": rep.excursions,
        "matched_letters": rep.matched_letters,
        "permutation_valid": rep.permutation_valid,
        "inverse_ok": rep.inverse_ok,
        "max_z": rep.max_z(),
        "tol": tol,
        "passed": passed,
    });
    let mut sink = Sink::new(common.out.clone())?;
    sink.json("summary.json", &summary)?;
    sink.csv("excursion_lengths.csv", &lengths)?;
    sink.csv("matched_letters.csv", &letters)?;
    verify(passed, || {
        format!(
            "{}/{} excursions permutation-valid, max class z {:.2}",
            rep.permutation_valid,
            rep.excursions,
            rep.max_z()
        )
    })
}

#[derive(Serialize)]
struct DriftRow {
    word: String,
    drift: f64,
    quadratic_residual: f64,
    linear_left_residual: f64,
    linear_right_residual: f64,
}

pub fn drift(
    common: &Common,
    measure: &Measure,
    policy: &str,
    function: DriftFn,
    delta: Option<f64>,
    max_len: usize,
    tol: f64,
) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let spec = input::policy(policy)?;
    let checker = IdentityChecker::new(&g, &mu, &spec, None)?;
    let model = &checker.model;
    let f = match function {
        DriftFn::Quadratic => LyapunovFn::Quadratic,
        DriftFn::Linear => LyapunovFn::Linear,
        DriftFn::Ldelta => {
            let d = match delta {
                Some(d) => d,
                None => ncond_check(&g, &mu)?.margin,
            };
            LyapunovFn::l_delta(&g, &mu, d)?
        }
    };
    let mut rows = Vec::new();
    let mut worst_identity = 0.0f64;
    for w in enumerate_states(&g, max_len) {
        let q = checker.quadratic(&w)?;
        let l = checker.linear(&w)?;
        worst_identity = worst_identity
            .max(q.residual)
            .max(l.residual_left)
            .max(l.residual_right);
        rows.push(DriftRow {
            word: w.display(&g),
            drift: stochmatch::drift::exact_drift(model, &w, f).drift,
            quadratic_residual: q.residual,
            linear_left_residual: l.residual_left,
            linear_right_residual: l.residual_right,
        });
    }
    let scan = scan_drift(model, f, max_len, Execution::Parallel);
    let bound = match (f, parts_json(&g)) {
        (LyapunovFn::LDelta { delta, .. }, Some(_)) if ncond_check(&g, &mu)?.satisfied => Some(
            ppartite_scan(model, Some(delta), max_len, Execution::Parallel)?,
        ),
        _ => None,
    };
    let identities_ok = worst_identity < tol;
    let bound_ok = bound.as_ref().is_none_or(|b| b.passed);
    let verdict = match (scan.threshold, scan.eta) {
        (Some(t), Some(eta)) => {
            format!("drift below -{eta:.6} for every word of length {t}..={max_len}")
        }
        _ => format!("no negative-drift threshold up to length {max_len}"),
    };
    let summary = json!({
        "function": f.name(),
        "policy": model.policy.spec(),
        "states": rows.len(),
        "max_by_length": scan.max_by_length,
        "threshold": scan.threshold,
        "eta": scan.eta,
        "max_identity_residual": worst_identity,
        "identities_passed": identities_ok,
        "ldelta_bound": bound,
        "verdict": verdict,
    });
    let mut sink = Sink::new(common.out.clone())?;
    sink.csv("drift.csv", &rows)?;
    sink.json("summary.json", &summary)?;
    eprintln!("{verdict}");
    verify(identities_ok && bound_ok, || match &bound {
        Some(b) if !b.passed => format!(
            "L_delta drift {} at `{}` above {}",
            b.max_drift,
            b.worst.as_deref().unwrap_or(""),
            b.bound
        ),
        _ => format!("identity residual {worst_identity:e} exceeds {tol:e}"),
    })
}

pub fn transform(common: &Common, check: bool, mu: Option<&str>) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mut sink = Sink::new(common.out.clone())?;
    if check {
        sink.artifact("graph.json", &g.maximal_subgraph().to_json())?;
        return Ok(());
    }
    let map = g.minimal_blowup()?;
    sink.artifact("graph.json", &map.blown.to_json())?;
    let copies: BTreeMap<&str, &str> = map
        .copies()
        .iter()
        .map(|c| (map.blown.name(c), g.name(map.original_of(c))))
        .collect();
    sink.json("copies.json", &copies)?;
    if let Some(m) = mu {
        let mu = input::measure(&g, m)?;
        sink.artifact("mu.json", &extend_measure_half(&mu, &map)?.to_json())?;
    }
    Ok(())
}

pub fn extend_measure(common: &Common, measure: &Measure, split: Option<&str>) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let map = g.minimal_blowup()?;
    let hat = match split {
        Some(s) => measures::extend_measure(&mu, &map, &input::split(s)?)?,
        None => extend_measure_half(&mu, &map)?,
    };
    let left = ncond_check(&g, &mu)?;
    let right = ncond_check(&map.blown, &hat)?;
    let mut sink = Sink::new(common.out.clone())?;
    sink.artifact("mu.json", &hat.to_json())?;
    if common.out.is_some() {
        sink.artifact("graph.json", &map.blown.to_json())?;
    }
    sink.json(
        "summary.json",
        &json!({
            "ncond_graph": ncond_json(&g, &left),
            "ncond_blowup": ncond_json(&map.blown, &right),
            "agree": left.satisfied == right.satisfied,
        }),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct IdentityRow {
    policy: String,
    states: usize,
    max_quadratic: f64,
    max_linear_left: f64,
    max_linear_right: f64,
    chain_ordered: bool,
    passed: bool,
}

pub fn verify_identities(
    common: &Common,
    measure: &Measure,
    policies: &[String],
    max_len: usize,
    tol: f64,
) -> Outcome {
    let g = input::graph(&common.graph)?;
    let mu = input::measure(&g, &measure.mu)?;
    let defaults = ["fcfm", "ml", "ms", "uniform"].map(String::from);
    let policies = if policies.is_empty() {
        &defaults[..]
    } else {
        policies
    };
    let states = enumerate_states(&g, max_len);
    let mut rows = Vec::new();
    for p in policies {
        let spec: PolicySpec = input::policy(p)?;
        let checker = IdentityChecker::new(&g, &mu, &spec, None)?;
        let scan = identity_scan(&checker, &states, Execution::Parallel)?;
        rows.push(IdentityRow {
            policy: p.clone(),
            states: scan.states,
            max_quadratic: scan.max_quadratic,
            max_linear_left: scan.max_linear_left,
            max_linear_right: scan.max_linear_right,
            chain_ordered: scan.chain_ordered,
            passed: scan.chain_ordered && scan.max_residual() < tol,
        });
    }
    let failed: Vec<&str> = rows
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.policy.as_str())
        .collect();
    let mut sink = Sink::new(common.out.clone())?;
    sink.csv("identities.csv", &rows)?;
    sink.json(
        "summary.json",
        &json!({ "max_len": max_len, "tol": tol, "passed": failed.is_empty() }),
    )?;
    verify(failed.is_empty(), || {
        format!("identities fail for {}", failed.join(", "))
    })
}

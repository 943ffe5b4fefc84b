#![allow(dead_code)]

use std::path::PathBuf;

use stochmatch::{Multigraph, PolicySpec, ProbMeasure};

pub struct Fixture {
    pub graph: Multigraph,
    pub mu: ProbMeasure,
    pub policy: PolicySpec,
    pub expected: serde_json::Value,
}

pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn load(name: &str) -> Fixture {
    let dir = fixture_dir(name);
    let read = |f: &str| {
        std::fs::read_to_string(dir.join(f)).unwrap_or_else(|e| panic!("{name}/{f}: {e}"))
    };
    let graph = Multigraph::from_json(&read("graph.json")).unwrap();
    let mu = ProbMeasure::from_json(&graph, &read("mu.json")).unwrap();
    let policy = PolicySpec::parse(&read("policy.json")).unwrap();
    let expected = serde_json::from_str(&read("expected.json")).unwrap();
    Fixture {
        graph,
        mu,
        policy,
        expected,
    }
}

pub const ALL: [&str; 5] = ["square", "k3", "ex2", "ex3", "ex4"];

/// Priority policy where every class prefers its neighbours in decreasing
/// name order.
pub fn descending_priority(g: &Multigraph) -> PolicySpec {
    let orders: Vec<(String, Vec<String>)> = (0..g.len())
        .map(|v| {
            let mut o: Vec<String> = g
                .neighbors(v)
                .iter()
                .map(|j| g.name(j).to_string())
                .collect();
            o.reverse();
            (g.name(v).to_string(), o)
        })
        .collect();
    let refs: Vec<(&str, Vec<&str>)> = orders
        .iter()
        .map(|(v, o)| (v.as_str(), o.iter().map(String::as_str).collect()))
        .collect();
    let pairs: Vec<(&str, &[&str])> = refs.iter().map(|(v, o)| (*v, o.as_slice())).collect();
    PolicySpec::priority(&pairs)
}

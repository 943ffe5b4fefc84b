mod common;

use stochmatch::chain::{Model, QueueWord};
use stochmatch::drift::{exact_drift, LyapunovFn};
use stochmatch::measures::{mu_deg, ncond_check, parse_rational};
use stochmatch::stationary::{alpha_inverse, ProductForm};
use stochmatch::Execution;

fn text<'a>(v: &'a serde_json::Value, key: &str) -> Option<&'a str> {
    v.get(key).and_then(|x| x.as_str())
}

#[test]
fn ncond_margins_match() {
    for name in common::ALL {
        let fx = common::load(name);
        let report = ncond_check(&fx.graph, &fx.mu).unwrap();
        let want = &fx.expected["ncond"];
        assert_eq!(
            report.satisfied,
            want["satisfied"].as_bool().unwrap(),
            "{name}"
        );
        match text(want, "margin").unwrap() {
            "inf" => assert!(report.margin.is_infinite(), "{name}"),
            m => {
                let m = parse_rational(m).unwrap();
                assert_eq!(report.margin_exact.as_ref(), Some(&m), "{name}");
            }
        }
    }
}

#[test]
fn alpha_and_product_form_match() {
    for name in common::ALL {
        let fx = common::load(name);
        let Some(alpha) = text(&fx.expected, "alpha") else {
            continue;
        };
        let alpha = parse_rational(alpha).unwrap();
        let pf = ProductForm::new(&fx.graph, &fx.mu).unwrap();
        assert_eq!(pf.alpha_exact(), Some(&alpha), "{name}");
        let inv = alpha_inverse(
            &fx.graph,
            fx.mu.exact_weights().unwrap(),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(inv * &alpha, parse_rational("1").unwrap(), "{name}");
        if let Some(pi) = fx.expected.get("pi").and_then(|p| p.as_object()) {
            for (word, p) in pi {
                let w = QueueWord::parse(&fx.graph, word).unwrap();
                let want = parse_rational(p.as_str().unwrap()).unwrap();
                assert_eq!(pf.pi_w_exact(&w).unwrap(), Some(want), "{name} {word}");
            }
        }
    }
}

#[test]
fn degree_measure_matches() {
    let fx = common::load("ex2");
    let deg = mu_deg(&fx.graph);
    for (node, p) in fx.expected["mu_deg"].as_object().unwrap() {
        let i = fx.graph.node(node).unwrap();
        assert_eq!(
            deg.exact_weights().unwrap()[i],
            parse_rational(p.as_str().unwrap()).unwrap()
        );
    }
    assert!(ncond_check(&fx.graph, &deg).unwrap().satisfied);
}

#[test]
fn multipartite_parts_match() {
    for name in ["ex3", "ex4"] {
        let fx = common::load(name);
        let parts = fx
            .graph
            .maximal_subgraph()
            .complete_multipartite_decomposition()
            .unwrap();
        let mut got: Vec<Vec<String>> = parts
            .iter()
            .map(|p| p.iter().map(|i| fx.graph.name(i).to_string()).collect())
            .collect();
        got.sort();
        let want: Vec<Vec<String>> = serde_json::from_value(fx.expected["parts"].clone()).unwrap();
        assert_eq!(got, want, "{name}");
    }
}

#[test]
fn ldelta_drift_at_fixture_states() {
    let fx = common::load("ex3");
    let delta = ncond_check(&fx.graph, &fx.mu).unwrap().margin;
    let model = Model::new(&fx.graph, &fx.mu, &fx.policy).unwrap();
    let f = LyapunovFn::l_delta(&fx.graph, &fx.mu, delta).unwrap();
    for (word, d) in fx.expected["ldelta_drift"].as_object().unwrap() {
        let w = QueueWord::parse(&fx.graph, word).unwrap();
        let want: f64 = d.as_str().unwrap().parse().unwrap();
        let got = exact_drift(&model, &w, f).drift;
        assert!((got - want).abs() < 1e-12, "{word}: {got} vs {want}");
    }
}

#[test]
fn fixture_files_round_trip() {
    for name in common::ALL {
        let fx = common::load(name);
        let g2 = stochmatch::Multigraph::from_json(&fx.graph.to_json()).unwrap();
        assert_eq!(g2, fx.graph);
        let mu2 = stochmatch::ProbMeasure::from_json(&g2, &fx.mu.to_json()).unwrap();
        assert_eq!(mu2.weights(), fx.mu.weights());
        let p2 = stochmatch::PolicySpec::parse(&fx.policy.to_json()).unwrap();
        assert_eq!(p2, fx.policy);
    }
}

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use num_rational::BigRational;
use stochmatch::measures::{mu_deg, parse_rational};
use stochmatch::{Multigraph, PolicySpec, ProbMeasure};

pub fn graph(path: &Path) -> Result<Multigraph> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading graph {}", path.display()))?;
    Multigraph::from_json(&text).with_context(|| format!("parsing graph {}", path.display()))
}

/// A measure file, or one of the keywords `uniform` and `deg`.
pub fn measure(g: &Multigraph, arg: &str) -> Result<ProbMeasure> {
    match arg {
        "uniform" => Ok(ProbMeasure::uniform(g)),
        "deg" => Ok(mu_deg(g)),
        path => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading measure {path}"))?;
            ProbMeasure::from_json(g, &text).with_context(|| format!("parsing measure {path}"))
        }
    }
}

/// A policy file, inline JSON, or a shorthand such as `fcfm` or `ml`.
pub fn policy(arg: &str) -> Result<PolicySpec> {
    let text = if Path::new(arg).is_file() {
        fs::read_to_string(arg).with_context(|| format!("reading policy {arg}"))?
    } else {
        arg.to_string()
    };
    PolicySpec::parse(&text).with_context(|| format!("parsing policy `{arg}`"))
}

/// Split fractions keyed by self-looped node, from a file or inline JSON.
pub fn split(arg: &str) -> Result<BTreeMap<String, BigRational>> {
    let text = if Path::new(arg).is_file() {
        fs::read_to_string(arg).with_context(|| format!("reading split {arg}"))?
    } else {
        arg.to_string()
    };
    let raw: BTreeMap<String, serde_json::Value> =
        serde_json::from_str(&text).with_context(|| format!("parsing split `{arg}`"))?;
    raw.into_iter()
        .map(|(k, v)| {
            let s = match &v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                _ => bail!("split value for `{k}` must be a number or a string"),
            };
            let q = parse_rational(&s).with_context(|| format!("split value `{s}` for `{k}`"))?;
            Ok((k, q))
        })
        .collect()
}

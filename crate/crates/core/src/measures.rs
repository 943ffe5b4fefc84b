//! Arrival measures, the stability condition NCOND and measure transport
//! between `G` and its blow-up `Ĝ`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::multigraph::{BlowupMap, Multigraph, NodeSet};

/// Absolute tolerance for the normalisation of float measures and for
/// float NCOND ties.
pub const SUM_TOL: f64 = 1e-12;

/// Numbers the exact formulas can be evaluated in.
pub trait Scalar:
    num_traits::Num + Clone + PartialOrd + Send + Sync + fmt::Debug + 'static
{
    fn approx(&self) -> f64;
    /// The weights of `mu` in this number type, if available.
    fn weights(mu: &ProbMeasure) -> Option<Vec<Self>>;
}

impl Scalar for f64 {
    fn approx(&self) -> f64 {
        *self
    }
    fn weights(mu: &ProbMeasure) -> Option<Vec<f64>> {
        Some(mu.approx.clone())
    }
}

impl Scalar for BigRational {
    fn approx(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
    fn weights(mu: &ProbMeasure) -> Option<Vec<BigRational>> {
        mu.exact.clone()
    }
}

/// Parses `"0.25"`, `"1e-3"`, `"-2"` or `"3/8"` into an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().ok()?;
        let d: BigInt = d.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(k) => (&s[..k], s[k + 1..].parse::<i32>().ok()?),
        None => (s, 0),
    };
    let (neg, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int, frac) = digits.split_once('.').unwrap_or((digits, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut n: BigInt = format!("0{int}{frac}").parse().ok()?;
    if neg {
        n = -n;
    }
    let scale = exp - frac.len() as i32;
    let ten = BigInt::from(10u8);
    let value = if scale >= 0 {
        BigRational::from_integer(n * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(n, num_traits::pow(ten, (-scale) as usize))
    };
    Some(value)
}

/// A full-support probability measure on the nodes of a multigraph. Exact
/// rational weights are kept when the measure was given exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMeasure {
    names: Vec<String>,
    exact: Option<Vec<BigRational>>,
    approx: Vec<f64>,
}

impl ProbMeasure {
    /// Exact measure. The weights must be positive and sum to 1 within
    /// [`SUM_TOL`]; they are then renormalised exactly.
    pub fn from_rationals(g: &Multigraph, weights: Vec<BigRational>) -> Result<Self> {
        if weights.len() != g.len() {
            return Err(Error::SupportMismatch);
        }
        if let Some(k) = weights.iter().position(|w| !w.is_positive()) {
            return Err(Error::InvalidMeasure(format!(
                "weight of `{}` is not positive",
                g.name(k)
            )));
        }
        let total: BigRational = weights.iter().cloned().sum();
        if (total.approx() - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {}",
                total.approx()
            )));
        }
        let exact: Vec<BigRational> = weights.into_iter().map(|w| w / &total).collect();
        Ok(ProbMeasure {
            names: g.names().to_vec(),
            approx: exact.iter().map(Scalar::approx).collect(),
            exact: Some(exact),
        })
    }

    /// Float measure; validated but not renormalised.
    pub fn from_f64(g: &Multigraph, weights: &[f64]) -> Result<Self> {
        if weights.len() != g.len() {
            return Err(Error::SupportMismatch);
        }
        if let Some(k) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidMeasure(format!(
                "weight of `{}` is not positive",
                g.name(k)
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(ProbMeasure {
            names: g.names().to_vec(),
            exact: None,
            approx: weights.to_vec(),
        })
    }

    /// Parses weights given in node order as decimal or fraction strings.
    pub fn parse(g: &Multigraph, weights: &[&str]) -> Result<Self> {
        let w = weights
            .iter()
            .map(|s| {
                parse_rational(s)
                    .ok_or_else(|| Error::InvalidMeasure(format!("cannot parse `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        ProbMeasure::from_rationals(g, w)
    }

    /// Parses a `name -> value` map; every node must appear exactly once.
    pub fn from_map(g: &Multigraph, map: &BTreeMap<String, String>) -> Result<Self> {
        if map.len() != g.len() {
            return Err(Error::SupportMismatch);
        }
        let mut w = vec![BigRational::zero(); g.len()];
        for (k, v) in map {
            let i = g.node(k)?;
            w[i] = parse_rational(v)
                .ok_or_else(|| Error::InvalidMeasure(format!("cannot parse `{v}`")))?;
        }
        ProbMeasure::from_rationals(g, w)
    }

    /// Reads the JSON measure format: an object mapping node names to decimal
    /// strings (plain JSON numbers are read from their literal text).
    pub fn from_json(g: &Multigraph, s: &str) -> Result<Self> {
        let raw: BTreeMap<String, serde_json::Value> = serde_json::from_str(s)?;
        let mut map = BTreeMap::new();
        for (k, v) in raw {
            let text = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Number(n) => n.to_string(),
                other => {
                    return Err(Error::InvalidMeasure(format!(
                        "bad value for `{k}`: {other}"
                    )))
                }
            };
            map.insert(k, text);
        }
        ProbMeasure::from_map(g, &map)
    }

    pub fn uniform(g: &Multigraph) -> Self {
        let n = g.len();
        ProbMeasure::from_rationals(g, vec![BigRational::new(1.into(), (n as i64).into()); n])
            .expect("uniform measure is valid")
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.approx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.approx.is_empty()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    pub fn weights(&self) -> &[f64] {
        &self.approx
    }

    pub fn exact_weights(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.approx[i]
    }

    pub fn mass(&self, s: NodeSet) -> f64 {
        s.iter().map(|i| self.approx[i]).sum()
    }

    pub fn mass_exact(&self, s: NodeSet) -> Option<BigRational> {
        self.exact
            .as_ref()
            .map(|w| s.iter().map(|i| w[i].clone()).sum())
    }

    /// Errors unless this measure lives on the nodes of `g`.
    pub fn check_support(&self, g: &Multigraph) -> Result<()> {
        if self.names == g.names() {
            Ok(())
        } else {
            Err(Error::SupportMismatch)
        }
    }

    /// JSON measure file with exact values where available.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, String> = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let v = match &self.exact {
                    Some(w) => format_rational(&w[i]),
                    None => format!("{}", self.approx[i]),
                };
                (n.as_str(), v)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&map).expect("measure serializes");
        s.push('\n');
        s
    }
}

/// Decimal text when the expansion terminates, `p/q` otherwise.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        return r.numer().to_string();
    }
    let mut d = r.denom().clone();
    let (two, five) = (BigInt::from(2u8), BigInt::from(5u8));
    let mut digits = 0usize;
    let (mut twos, mut fives) = (0usize, 0usize);
    while (&d % &two).is_zero() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", r.numer(), r.denom());
    }
    digits += twos.max(fives);
    let scaled = r * BigRational::from_integer(num_traits::pow(BigInt::from(10u8), digits));
    let n = scaled.to_integer();
    let neg = n.is_negative();
    let s = n.abs().to_string();
    let s = format!("{:0>width$}", s, width = digits + 1);
    let (int, frac) = s.split_at(s.len() - digits);
    format!("{}{}.{}", if neg { "-" } else { "" }, int, frac)
}

/// Result of checking `μ(I) < μ(E(I))` over all independent sets.
#[derive(Debug, Clone, PartialEq)]
pub struct NcondReport {
    pub satisfied: bool,
    /// `δ = min_I μ(E(I)) − μ(I)`; `+∞` when there is no independent set.
    pub margin: f64,
    pub margin_exact: Option<BigRational>,
    /// A minimising independent set; for bipartite graphs, the bipartition
    /// side that violates the condition.
    pub witness: Option<NodeSet>,
}

/// Exhaustive NCOND check. Exact when `mu` is exact; in floating point a
/// margin within [`SUM_TOL`] of zero counts as a violation.
pub fn ncond_check(g: &Multigraph, mu: &ProbMeasure) -> Result<NcondReport> {
    mu.check_support(g)?;
    let mut best: Option<(f64, Option<BigRational>, NodeSet)> = None;
    for set in g.independent_sets() {
        let e = g.neighborhood(set);
        let (m, m_exact) = match (mu.mass_exact(e), mu.mass_exact(set)) {
            (Some(a), Some(b)) => {
                let d = a - b;
                (d.approx(), Some(d))
            }
            _ => (mu.mass(e) - mu.mass(set), None),
        };
        let better = match &best {
            None => true,
            Some((bm, Some(be), _)) => m_exact.as_ref().map_or(m < *bm, |x| x < be),
            Some((bm, None, _)) => m < *bm,
        };
        if better {
            best = Some((m, m_exact, set));
        }
    }
    let Some((margin, margin_exact, argmin)) = best else {
        return Ok(NcondReport {
            satisfied: true,
            margin: f64::INFINITY,
            margin_exact: None,
            witness: None,
        });
    };
    let satisfied = match &margin_exact {
        Some(x) => x.is_positive(),
        None => margin > SUM_TOL,
    };
    let witness = match g.bipartition() {
        Some((a, b)) => {
            let heavier = match (mu.mass_exact(a), mu.mass_exact(b)) {
                (Some(x), Some(y)) => x >= y,
                _ => mu.mass(a) >= mu.mass(b),
            };
            Some(if heavier { a } else { b })
        }
        None => Some(argmin),
    };
    Ok(NcondReport {
        satisfied,
        margin,
        margin_exact,
        witness,
    })
}

/// `μ_deg(i) = deg(i)/|E|`.
pub fn mu_deg(g: &Multigraph) -> ProbMeasure {
    let total = BigInt::from(g.edge_total());
    let w = (0..g.len())
        .map(|i| BigRational::new(BigInt::from(g.degree(i)), total.clone()))
        .collect();
    ProbMeasure::from_rationals(g, w).expect("degree measure is valid")
}

/// `μ̂` on `Ĝ`: `μ̂(i) = s_i μ(i)` and `μ̂(i̲) = (1 − s_i) μ(i)` for
/// `i ∈ V₁`, unchanged on `V₂`. `split` is keyed by the names of `V₁`.
pub fn extend_measure(
    mu: &ProbMeasure,
    map: &BlowupMap,
    split: &BTreeMap<String, BigRational>,
) -> Result<ProbMeasure> {
    let g = &map.original;
    mu.check_support(g)?;
    let v1 = g.self_loops();
    if split.len() != v1.len() {
        return Err(Error::InvalidMeasure(
            "split must be keyed exactly by the self-looped nodes".into(),
        ));
    }
    let mut s = vec![None; g.len()];
    for (name, value) in split {
        let i = g.node(name)?;
        if !v1.contains(i) {
            return Err(Error::InvalidMeasure(format!("`{name}` has no self-loop")));
        }
        if !(value.is_positive() && *value < BigRational::one()) {
            return Err(Error::InvalidSplit {
                node: name.clone(),
                value: format_rational(value),
            });
        }
        s[i] = Some(value.clone());
    }
    let b = &map.blown;
    match mu.exact_weights() {
        Some(w) => {
            let mut out = vec![BigRational::zero(); b.len()];
            for i in 0..g.len() {
                match &s[i] {
                    Some(f) => {
                        out[map.to_blown(i)] = &w[i] * f;
                        out[map.copy_of(i).unwrap()] = &w[i] * (BigRational::one() - f);
                    }
                    None => out[map.to_blown(i)] = w[i].clone(),
                }
            }
            ProbMeasure::from_rationals(b, out)
        }
        None => {
            let w = mu.weights();
            let mut out = vec![0.0; b.len()];
            for i in 0..g.len() {
                match &s[i] {
                    Some(f) => {
                        let f = f.approx();
                        out[map.to_blown(i)] = w[i] * f;
                        out[map.copy_of(i).unwrap()] = w[i] * (1.0 - f);
                    }
                    None => out[map.to_blown(i)] = w[i],
                }
            }
            ProbMeasure::from_f64(b, &out)
        }
    }
}

/// `μ̂₁/₂`: every self-looped class split evenly with its copy.
pub fn extend_measure_half(mu: &ProbMeasure, map: &BlowupMap) -> Result<ProbMeasure> {
    let half = BigRational::new(1.into(), 2.into());
    let split = map
        .original
        .self_loops()
        .iter()
        .map(|i| (map.original.name(i).to_string(), half.clone()))
        .collect();
    extend_measure(mu, map, &split)
}

/// `μ(i) = μ̂(i) + μ̂(i̲)` on `V₁`, `μ(i) = μ̂(i)` on `V₂`.
pub fn reduce_measure(mu_hat: &ProbMeasure, map: &BlowupMap) -> Result<ProbMeasure> {
    mu_hat.check_support(&map.blown)?;
    let g = &map.original;
    match mu_hat.exact_weights() {
        Some(w) => {
            let out = (0..g.len())
                .map(|i| {
                    let base = w[map.to_blown(i)].clone();
                    match map.copy_of(i) {
                        Some(c) => base + &w[c],
                        None => base,
                    }
                })
                .collect();
            ProbMeasure::from_rationals(g, out)
        }
        None => {
            let w = mu_hat.weights();
            let out: Vec<f64> = (0..g.len())
                .map(|i| w[map.to_blown(i)] + map.copy_of(i).map_or(0.0, |c| w[c]))
                .collect();
            ProbMeasure::from_f64(g, &out)
        }
    }
}

/// Checks that `μ ∈ NCOND(G)` and `μ̂₁/₂ ∈ NCOND(Ĝ)` agree.
pub fn ncond_equivalence_check(g: &Multigraph, mu: &ProbMeasure) -> Result<bool> {
    let left = ncond_check(g, mu)?.satisfied;
    let map = g.minimal_blowup()?;
    let right = ncond_check(&map.blown, &extend_measure_half(mu, &map)?)?.satisfied;
    Ok(left == right)
}

//! Matching policies.
//!
//! A [`PolicySpec`] is the declarative (serde) form; [`Policy`] is the same
//! policy compiled against a multigraph. Decisions are made on any
//! [`QueueView`], so the exact word-level kernel and the simulator share one
//! implementation. Within a class the oldest item is always the one matched,
//! except under LCFM which takes the most recent compatible item.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multigraph::{BlowupMap, Multigraph, NodeSet};

/// Relative tolerance under which two Max-Weight scores are tied.
pub const TIE_TOL: f64 = 1e-12;

/// One priority level: a single class or a set of classes tied uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tier {
    One(String),
    Tied(Vec<String>),
}

impl Tier {
    fn members(&self) -> Vec<&str> {
        match self {
            Tier::One(s) => vec![s.as_str()],
            Tier::Tied(v) => v.iter().map(String::as_str).collect(),
        }
    }

    fn from_members(mut v: Vec<String>) -> Tier {
        if v.len() == 1 {
            Tier::One(v.pop().unwrap())
        } else {
            Tier::Tied(v)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedOrder {
    pub prob: f64,
    pub order: Vec<Tier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicySpec {
    Fcfm,
    Lcfm,
    /// Uniformly random preference order, i.e. a uniform choice among the
    /// compatible classes present.
    Uniform,
    /// Per arrival class, a distribution over preference orders.
    Random {
        orders: BTreeMap<String, Vec<WeightedOrder>>,
    },
    /// Per arrival class, a fixed preference order over its neighbours.
    Priority {
        orders: BTreeMap<String, Vec<Tier>>,
    },
    /// Argmax of `beta * x(j) + w(v,j)`, ties broken uniformly. An empty
    /// reward map means all rewards are zero.
    MaxWeight {
        beta: f64,
        #[serde(default)]
        rewards: BTreeMap<String, f64>,
    },
    /// Restricts the candidates to `preferred` classes when one is present,
    /// then applies `inner`. `preferred` defaults to the classes without a
    /// self-loop.
    V2Favorable {
        inner: Box<PolicySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        preferred: Option<Vec<String>>,
    },
}

impl PolicySpec {
    /// Match the Longest: Max-Weight with `beta = 1` and zero rewards.
    pub fn match_longest() -> PolicySpec {
        PolicySpec::MaxWeight {
            beta: 1.0,
            rewards: BTreeMap::new(),
        }
    }

    /// Match the Shortest: Max-Weight with `beta = -1` and zero rewards.
    pub fn match_shortest() -> PolicySpec {
        PolicySpec::MaxWeight {
            beta: -1.0,
            rewards: BTreeMap::new(),
        }
    }

    /// Accepts inline JSON or one of the shorthands `fcfm`, `lcfm`, `u`,
    /// `uniform`, `ml`, `ms`.
    pub fn parse(s: &str) -> Result<PolicySpec> {
        let t = s.trim();
        if t.starts_with('{') {
            return Ok(serde_json::from_str(t)?);
        }
        match t.to_ascii_lowercase().as_str() {
            "fcfm" => Ok(PolicySpec::Fcfm),
            "lcfm" => Ok(PolicySpec::Lcfm),
            "u" | "uniform" => Ok(PolicySpec::Uniform),
            "ml" => Ok(PolicySpec::match_longest()),
            "ms" => Ok(PolicySpec::match_shortest()),
            _ => Err(Error::InvalidPolicy(format!("unknown policy `{t}`"))),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    /// Priority policy from orders given as plain class lists.
    pub fn priority<S: AsRef<str>>(orders: &[(S, &[S])]) -> PolicySpec {
        PolicySpec::Priority {
            orders: orders
                .iter()
                .map(|(v, o)| {
                    (
                        v.as_ref().to_string(),
                        o.iter()
                            .map(|s| Tier::One(s.as_ref().to_string()))
                            .collect(),
                    )
                })
                .collect(),
        }
    }
}

/// What an arrival does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchDecision {
    NoMatch,
    /// `position` is a 0-based index into the queue word.
    Match {
        position: usize,
        class: usize,
    },
}

/// Which stored item is removed: the oldest or the newest of `class`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pick {
    pub class: usize,
    pub newest: bool,
}

/// Read access to a buffer, enough to apply any policy.
pub trait QueueView {
    /// Classes with at least one stored item.
    fn present(&self) -> NodeSet;
    fn count(&self, class: usize) -> usize;
    /// Ordering key (smaller is older) of the oldest item of `class`.
    fn oldest(&self, class: usize) -> u64;
    /// Ordering key of the newest item of `class`.
    fn newest(&self, class: usize) -> u64;
}

#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Fcfm,
    Lcfm,
    Uniform,
    Priority(Vec<Vec<NodeSet>>),
    Random(Vec<Vec<(f64, Vec<NodeSet>)>>),
    MaxWeight {
        beta: f64,
        rewards: Vec<Vec<f64>>,
    },
    V2Favorable {
        inner: Box<Rule>,
        preferred: NodeSet,
    },
}

impl Rule {
    fn class_admissible(&self) -> bool {
        match self {
            Rule::Fcfm | Rule::Lcfm => false,
            Rule::V2Favorable { inner, .. } => inner.class_admissible(),
            _ => true,
        }
    }
}

/// A policy compiled against a multigraph.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    g: Multigraph,
    spec: PolicySpec,
    rule: Rule,
}

impl Policy {
    pub fn compile(spec: &PolicySpec, g: &Multigraph) -> Result<Policy> {
        Ok(Policy {
            g: g.clone(),
            spec: spec.clone(),
            rule: compile_rule(spec, g)?,
        })
    }

    pub fn graph(&self) -> &Multigraph {
        &self.g
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    /// Whether decisions depend on the class counts only.
    pub fn is_class_admissible(&self) -> bool {
        self.rule.class_admissible()
    }

    /// `P(x, v)`: compatible classes with a stored item.
    pub fn candidates<Q: QueueView + ?Sized>(&self, q: &Q, v: usize) -> NodeSet {
        self.g.neighbors(v) & q.present()
    }

    /// Exact distribution of the pick, `None` meaning no match.
    pub fn pick_outcomes<Q: QueueView + ?Sized>(
        &self,
        q: &Q,
        v: usize,
    ) -> Vec<(Option<Pick>, f64)> {
        let cand = self.candidates(q, v);
        if cand.is_empty() {
            return vec![(None, 1.0)];
        }
        let mut merged: BTreeMap<Pick, f64> = BTreeMap::new();
        outcomes(&self.rule, q, v, cand, 1.0, &mut merged);
        merged.into_iter().map(|(p, w)| (Some(p), w)).collect()
    }

    /// Draws a pick. Random orders are drawn before any tie-break.
    pub fn pick<Q: QueueView + ?Sized, R: Rng + ?Sized>(
        &self,
        q: &Q,
        v: usize,
        rng: &mut R,
    ) -> Option<Pick> {
        let cand = self.candidates(q, v);
        if cand.is_empty() {
            return None;
        }
        Some(sample(&self.rule, q, v, cand, rng))
    }

    /// Distribution over the matched class for a class-admissible policy.
    pub fn class_outcomes<Q: QueueView + ?Sized>(
        &self,
        q: &Q,
        v: usize,
    ) -> Result<Vec<(Option<usize>, f64)>> {
        if !self.is_class_admissible() {
            return Err(Error::NotClassAdmissible);
        }
        Ok(self
            .pick_outcomes(q, v)
            .into_iter()
            .map(|(p, w)| (p.map(|p| p.class), w))
            .collect())
    }
}

fn node_of(g: &Multigraph, s: &str) -> Result<usize> {
    g.node(s)
        .map_err(|_| Error::InvalidPolicy(format!("unknown class `{s}`")))
}

fn compile_order(g: &Multigraph, v: usize, order: &[Tier]) -> Result<Vec<NodeSet>> {
    let mut seen = NodeSet::EMPTY;
    let mut tiers = Vec::new();
    for t in order {
        let mut set = NodeSet::EMPTY;
        for name in t.members() {
            let j = node_of(g, name)?;
            if !g.adjacent(v, j) {
                return Err(Error::InvalidPolicy(format!(
                    "`{}` is not compatible with `{}`",
                    name,
                    g.name(v)
                )));
            }
            if seen.contains(j) {
                return Err(Error::InvalidPolicy(format!(
                    "`{}` repeated in the order of `{}`",
                    name,
                    g.name(v)
                )));
            }
            seen.insert(j);
            set.insert(j);
        }
        if !set.is_empty() {
            tiers.push(set);
        }
    }
    if seen != g.neighbors(v) {
        return Err(Error::InvalidPolicy(format!(
            "order of `{}` must cover its neighbourhood {}",
            g.name(v),
            g.format_set(g.neighbors(v))
        )));
    }
    Ok(tiers)
}

fn per_class<T, F>(g: &Multigraph, map: &BTreeMap<String, T>, mut f: F) -> Result<Vec<Vec<NodeSet>>>
where
    F: FnMut(usize, &T) -> Result<Vec<NodeSet>>,
{
    let mut out = vec![None; g.len()];
    for (k, val) in map {
        let v = node_of(g, k)?;
        out[v] = Some(f(v, val)?);
    }
    out.into_iter()
        .enumerate()
        .map(|(v, o)| {
            o.ok_or_else(|| Error::InvalidPolicy(format!("no order for class `{}`", g.name(v))))
        })
        .collect()
}

fn compile_rule(spec: &PolicySpec, g: &Multigraph) -> Result<Rule> {
    Ok(match spec {
        PolicySpec::Fcfm => Rule::Fcfm,
        PolicySpec::Lcfm => Rule::Lcfm,
        PolicySpec::Uniform => Rule::Uniform,
        PolicySpec::Priority { orders } => {
            Rule::Priority(per_class(g, orders, |v, o| compile_order(g, v, o))?)
        }
        PolicySpec::Random { orders } => {
            let mut out = vec![None; g.len()];
            for (k, list) in orders {
                let v = node_of(g, k)?;
                if list.is_empty() {
                    return Err(Error::InvalidPolicy(format!("empty order list for `{k}`")));
                }
                let mut total = 0.0;
                let mut compiled = Vec::new();
                for wo in list {
                    if !(wo.prob.is_finite() && wo.prob > 0.0) {
                        return Err(Error::InvalidPolicy(format!("bad probability for `{k}`")));
                    }
                    total += wo.prob;
                    compiled.push((wo.prob, compile_order(g, v, &wo.order)?));
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidPolicy(format!(
                        "order probabilities of `{k}` sum to {total}"
                    )));
                }
                out[v] = Some(compiled);
            }
            Rule::Random(
                out.into_iter()
                    .enumerate()
                    .map(|(v, o)| {
                        o.ok_or_else(|| {
                            Error::InvalidPolicy(format!("no orders for class `{}`", g.name(v)))
                        })
                    })
                    .collect::<Result<_>>()?,
            )
        }
        PolicySpec::MaxWeight { beta, rewards } => {
            if !beta.is_finite() {
                return Err(Error::InvalidPolicy("beta must be finite".into()));
            }
            let n = g.len();
            let mut w = vec![vec![0.0; n]; n];
            if !rewards.is_empty() {
                let mut seen = vec![NodeSet::EMPTY; n];
                for (key, val) in rewards {
                    let (a, b) = key.split_once(',').ok_or_else(|| {
                        Error::InvalidPolicy(format!("reward key `{key}` is not `v,j`"))
                    })?;
                    let (v, j) = (node_of(g, a.trim())?, node_of(g, b.trim())?);
                    if !g.adjacent(v, j) {
                        return Err(Error::InvalidPolicy(format!(
                            "reward `{key}` on a non-edge"
                        )));
                    }
                    if !val.is_finite() {
                        return Err(Error::InvalidPolicy(format!(
                            "reward `{key}` is not finite"
                        )));
                    }
                    w[v][j] = *val;
                    seen[v].insert(j);
                }
                for v in 0..n {
                    if seen[v] != g.neighbors(v) {
                        return Err(Error::InvalidPolicy(format!(
                            "rewards must be given for every compatible pair of `{}`",
                            g.name(v)
                        )));
                    }
                }
            }
            Rule::MaxWeight {
                beta: *beta,
                rewards: w,
            }
        }
        PolicySpec::V2Favorable { inner, preferred } => {
            let inner = compile_rule(inner, g)?;
            if !inner.class_admissible() {
                return Err(Error::InvalidPolicy(
                    "the inner policy must be class-admissible".into(),
                ));
            }
            let preferred = match preferred {
                Some(names) => names
                    .iter()
                    .map(|s| node_of(g, s))
                    .collect::<Result<NodeSet>>()?,
                None => g.v2(),
            };
            Rule::V2Favorable {
                inner: Box::new(inner),
                preferred,
            }
        }
    })
}

fn first_tier(tiers: &[NodeSet], cand: NodeSet) -> NodeSet {
    tiers
        .iter()
        .map(|&t| t & cand)
        .find(|t| !t.is_empty())
        .expect("an order covers every candidate")
}

fn best_scores<Q: QueueView + ?Sized>(
    q: &Q,
    v: usize,
    cand: NodeSet,
    beta: f64,
    rewards: &[Vec<f64>],
) -> NodeSet {
    let scores: Vec<(usize, f64)> = cand
        .iter()
        .map(|j| (j, beta * q.count(j) as f64 + rewards[v][j]))
        .collect();
    let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOL * max.abs().max(1.0);
    scores
        .iter()
        .filter(|s| s.1 >= max - tol)
        .map(|s| s.0)
        .collect()
}

fn oldest_class<Q: QueueView + ?Sized>(q: &Q, cand: NodeSet) -> usize {
    cand.iter().min_by_key(|&c| q.oldest(c)).unwrap()
}

fn newest_class<Q: QueueView + ?Sized>(q: &Q, cand: NodeSet) -> usize {
    cand.iter().max_by_key(|&c| q.newest(c)).unwrap()
}

fn spread(set: NodeSet, mass: f64, out: &mut BTreeMap<Pick, f64>) {
    let share = mass / set.len() as f64;
    for class in set {
        *out.entry(Pick {
            class,
            newest: false,
        })
        .or_insert(0.0) += share;
    }
}

fn outcomes<Q: QueueView + ?Sized>(
    rule: &Rule,
    q: &Q,
    v: usize,
    cand: NodeSet,
    mass: f64,
    out: &mut BTreeMap<Pick, f64>,
) {
    match rule {
        Rule::Fcfm => {
            *out.entry(Pick {
                class: oldest_class(q, cand),
                newest: false,
            })
            .or_insert(0.0) += mass;
        }
        Rule::Lcfm => {
            *out.entry(Pick {
                class: newest_class(q, cand),
                newest: true,
            })
            .or_insert(0.0) += mass;
        }
        Rule::Uniform => spread(cand, mass, out),
        Rule::Priority(orders) => spread(first_tier(&orders[v], cand), mass, out),
        Rule::Random(orders) => {
            for (p, tiers) in &orders[v] {
                spread(first_tier(tiers, cand), mass * p, out);
            }
        }
        Rule::MaxWeight { beta, rewards } => {
            spread(best_scores(q, v, cand, *beta, rewards), mass, out)
        }
        Rule::V2Favorable { inner, preferred } => {
            let restricted = cand & *preferred;
            let cand = if restricted.is_empty() {
                cand
            } else {
                restricted
            };
            outcomes(inner, q, v, cand, mass, out);
        }
    }
}

fn uniform_member<R: Rng + ?Sized>(set: NodeSet, rng: &mut R) -> usize {
    if set.len() == 1 {
        return set.first().unwrap();
    }
    set.iter().nth(rng.random_range(0..set.len())).unwrap()
}

fn sample<Q: QueueView + ?Sized, R: Rng + ?Sized>(
    rule: &Rule,
    q: &Q,
    v: usize,
    cand: NodeSet,
    rng: &mut R,
) -> Pick {
    let oldest = |class| Pick {
        class,
        newest: false,
    };
    match rule {
        Rule::Fcfm => oldest(oldest_class(q, cand)),
        Rule::Lcfm => Pick {
            class: newest_class(q, cand),
            newest: true,
        },
        Rule::Uniform => oldest(uniform_member(cand, rng)),
        Rule::Priority(orders) => oldest(uniform_member(first_tier(&orders[v], cand), rng)),
        Rule::Random(orders) => {
            let list = &orders[v];
            let tiers = if list.len() == 1 {
                &list[0].1
            } else {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &list[list.len() - 1].1;
                for (p, t) in list {
                    acc += p;
                    if u < acc {
                        chosen = t;
                        break;
                    }
                }
                chosen
            };
            oldest(uniform_member(first_tier(tiers, cand), rng))
        }
        Rule::MaxWeight { beta, rewards } => {
            oldest(uniform_member(best_scores(q, v, cand, *beta, rewards), rng))
        }
        Rule::V2Favorable { inner, preferred } => {
            let restricted = cand & *preferred;
            let cand = if restricted.is_empty() {
                cand
            } else {
                restricted
            };
            sample(inner, q, v, cand, rng)
        }
    }
}

fn remap_tiers(g: &Multigraph, map: &BlowupMap, u: usize, order: &[Tier]) -> Result<Vec<Tier>> {
    let b = &map.blown;
    let mut out = Vec::new();
    for t in order {
        let origs: NodeSet = t
            .members()
            .iter()
            .map(|s| node_of(g, s))
            .collect::<Result<_>>()?;
        let members: Vec<String> = b
            .neighbors(u)
            .iter()
            .filter(|&x| origs.contains(map.original_of(x)))
            .map(|x| b.name(x).to_string())
            .collect();
        if !members.is_empty() {
            out.push(Tier::from_members(members));
        }
    }
    Ok(out)
}

/// Canonical extension to `Ĝ`. A node of `Ĝ` inherits the preferences of
/// the original class it stands for, and each preference entry `e` becomes
/// the tier of neighbours standing for `e`, so a class and its copy are tied
/// uniformly. On states of `G` the decisions are unchanged.
pub fn extend_policy(spec: &PolicySpec, map: &BlowupMap) -> Result<PolicySpec> {
    let g = &map.original;
    let b = &map.blown;
    Ok(match spec {
        PolicySpec::Fcfm | PolicySpec::Lcfm | PolicySpec::Uniform => spec.clone(),
        PolicySpec::Priority { orders } => {
            let mut out = BTreeMap::new();
            for u in 0..b.len() {
                let o = map.original_of(u);
                let order = orders.get(g.name(o)).ok_or_else(|| {
                    Error::InvalidPolicy(format!("no order for class `{}`", g.name(o)))
                })?;
                out.insert(b.name(u).to_string(), remap_tiers(g, map, u, order)?);
            }
            PolicySpec::Priority { orders: out }
        }
        PolicySpec::Random { orders } => {
            let mut out = BTreeMap::new();
            for u in 0..b.len() {
                let o = map.original_of(u);
                let list = orders.get(g.name(o)).ok_or_else(|| {
                    Error::InvalidPolicy(format!("no orders for class `{}`", g.name(o)))
                })?;
                let mapped = list
                    .iter()
                    .map(|wo| {
                        Ok(WeightedOrder {
                            prob: wo.prob,
                            order: remap_tiers(g, map, u, &wo.order)?,
                        })
                    })
                    .collect::<Result<_>>()?;
                out.insert(b.name(u).to_string(), mapped);
            }
            PolicySpec::Random { orders: out }
        }
        PolicySpec::MaxWeight { beta, rewards } => {
            let mut out = BTreeMap::new();
            if !rewards.is_empty() {
                for u in 0..b.len() {
                    for x in b.neighbors(u) {
                        let key = format!(
                            "{},{}",
                            g.name(map.original_of(u)),
                            g.name(map.original_of(x))
                        );
                        let val = rewards.get(&key).ok_or_else(|| {
                            Error::InvalidPolicy(format!("missing reward `{key}`"))
                        })?;
                        out.insert(format!("{},{}", b.name(u), b.name(x)), *val);
                    }
                }
            }
            PolicySpec::MaxWeight {
                beta: *beta,
                rewards: out,
            }
        }
        PolicySpec::V2Favorable { inner, preferred } => PolicySpec::V2Favorable {
            inner: Box::new(extend_policy(inner, map)?),
            preferred: Some(match preferred {
                Some(p) => p.clone(),
                None => g.v2().iter().map(|i| g.name(i).to_string()).collect(),
            }),
        },
    })
}

/// Reduction to `Ǧ`: self-matches disappear from every preference list and
/// reward table; everything else is kept.
pub fn reduce_policy(spec: &PolicySpec, g: &Multigraph) -> Result<PolicySpec> {
    let strip = |v: &str, order: &[Tier]| -> Vec<Tier> {
        order
            .iter()
            .filter_map(|t| {
                let m: Vec<String> = t
                    .members()
                    .into_iter()
                    .filter(|s| *s != v)
                    .map(String::from)
                    .collect();
                (!m.is_empty()).then(|| Tier::from_members(m))
            })
            .collect()
    };
    Ok(match spec {
        PolicySpec::Fcfm | PolicySpec::Lcfm | PolicySpec::Uniform => spec.clone(),
        PolicySpec::Priority { orders } => PolicySpec::Priority {
            orders: orders
                .iter()
                .map(|(v, o)| (v.clone(), strip(v, o)))
                .collect(),
        },
        PolicySpec::Random { orders } => PolicySpec::Random {
            orders: orders
                .iter()
                .map(|(v, list)| {
                    (
                        v.clone(),
                        list.iter()
                            .map(|wo| WeightedOrder {
                                prob: wo.prob,
                                order: strip(v, &wo.order),
                            })
                            .collect(),
                    )
                })
                .collect(),
        },
        PolicySpec::MaxWeight { beta, rewards } => PolicySpec::MaxWeight {
            beta: *beta,
            rewards: rewards
                .iter()
                .filter(|(k, _)| k.split_once(',').is_none_or(|(a, b)| a.trim() != b.trim()))
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
        },
        PolicySpec::V2Favorable { inner, preferred } => PolicySpec::V2Favorable {
            inner: Box::new(reduce_policy(inner, g)?),
            preferred: Some(match preferred {
                Some(p) => p.clone(),
                None => g.v2().iter().map(|i| g.name(i).to_string()).collect(),
            }),
        },
    })
}

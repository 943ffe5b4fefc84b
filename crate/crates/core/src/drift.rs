//! Exact one-step drifts of Lyapunov functions, and the drift identities
//! linking a model on `G` to its models on `Ĝ` and `Ǧ`.

use std::collections::BTreeMap;

use num_rational::BigRational;
use rand::Rng;

use crate::chain::{apply, decision_outcomes, enumerate_states, Model, QueueWord};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{extend_measure, extend_measure_half, ncond_check, ProbMeasure};
use crate::multigraph::{BlowupMap, Multigraph, NodeSet};
use crate::policies::{extend_policy, reduce_policy, PolicySpec};

/// Tolerance for the exact drift identities.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub enum LyapunovFn {
    /// `Σ_i |w|_i²`.
    Quadratic,
    /// `|w|`.
    Linear,
    /// `Σ_{V₁} v1_weight·|w|_i + Σ_{V₂} |w|_i` with `v1_weight = δ/(2μ(V₁))`.
    LDelta { delta: f64, v1_weight: f64 },
}

impl LyapunovFn {
    pub fn l_delta(g: &Multigraph, mu: &ProbMeasure, delta: f64) -> Result<LyapunovFn> {
        let v1 = g.self_loops();
        if v1.is_empty() {
            return Err(Error::Unsupported("L_δ needs a self-looped class".into()));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Unsupported(format!(
                "δ must be positive, got {delta}"
            )));
        }
        Ok(LyapunovFn::LDelta {
            delta,
            v1_weight: delta / (2.0 * mu.mass(v1)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LyapunovFn::Quadratic => "Q",
            LyapunovFn::Linear => "L",
            LyapunovFn::LDelta { .. } => "Ldelta",
        }
    }

    pub fn eval(&self, g: &Multigraph, w: &QueueWord) -> f64 {
        let counts = w.counts();
        match *self {
            LyapunovFn::Quadratic => counts.iter().map(|&c| (c as f64) * (c as f64)).sum(),
            LyapunovFn::Linear => counts.iter().map(|&c| c as f64).sum(),
            LyapunovFn::LDelta { v1_weight, .. } => counts
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    if g.has_loop(i) {
                        v1_weight * c as f64
                    } else {
                        c as f64
                    }
                })
                .sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DriftReport {
    pub state: String,
    pub function: &'static str,
    pub drift: f64,
    /// `μ(v)·E[ΔF | arrival v]`, indexed by class.
    pub per_class: Vec<f64>,
}

/// `E[F(W_{n+1}) − F(W_n) | W_n = w]`, exact over arrivals and policy
/// randomness.
pub fn exact_drift(model: &Model, w: &QueueWord, f: LyapunovFn) -> DriftReport {
    let g = &model.graph;
    let base = f.eval(g, w);
    let per_class: Vec<f64> = (0..g.len())
        .map(|v| {
            let inner: f64 = decision_outcomes(&model.policy, w, v)
                .into_iter()
                .map(|(d, p)| p * (f.eval(g, &apply(w, v, d)) - base))
                .sum();
            model.mu.get(v) * inner
        })
        .collect();
    DriftReport {
        state: w.display(g),
        function: f.name(),
        drift: per_class.iter().sum(),
        per_class,
    }
}

/// `O_w`, `Z_w` and `P_w` for a word of `𝕎(G)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecialSets {
    /// Self-looped classes stored exactly once.
    pub once: NodeSet,
    /// Self-looped classes absent together with all their neighbours.
    pub free: NodeSet,
    /// Self-looped classes present.
    pub present: NodeSet,
}

pub fn special_sets(g: &Multigraph, w: &QueueWord) -> SpecialSets {
    let counts = w.counts();
    let v1 = g.self_loops();
    let mut out = SpecialSets {
        once: NodeSet::EMPTY,
        free: NodeSet::EMPTY,
        present: NodeSet::EMPTY,
    };
    for i in v1 {
        match counts[i] {
            0 if g.neighbors(i).iter().all(|j| counts[j] == 0) => out.free.insert(i),
            0 => {}
            1 => {
                out.once.insert(i);
                out.present.insert(i);
            }
            _ => out.present.insert(i),
        }
    }
    debug_assert_eq!(out.once, out.present);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct QuadraticIdentity {
    pub drift: f64,
    pub drift_hat: f64,
    /// `4 μ̂(O_w)`.
    pub gap: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LinearChain {
    pub drift: f64,
    pub drift_hat: f64,
    pub drift_check: f64,
    /// `|ΔL − (Δ̂L − 2μ̂(O_w))|`.
    pub residual_left: f64,
    /// `|Δ̂L − (Δ̌L − 2μ̂(P̲_w))|`.
    pub residual_right: f64,
}

impl LinearChain {
    pub fn ordered(&self) -> bool {
        self.drift <= self.drift_hat + IDENTITY_TOL
            && self.drift_hat <= self.drift_check + IDENTITY_TOL
    }
}

/// A model on `G` together with its canonical extension on `Ĝ` and its
/// reduction on `Ǧ`.
#[derive(Clone, Debug)]
pub struct IdentityChecker {
    pub model: Model,
    pub blown: Model,
    pub check: Model,
    pub map: BlowupMap,
}

impl IdentityChecker {
    /// `split` defaults to an even split of every self-looped class.
    pub fn new(
        g: &Multigraph,
        mu: &ProbMeasure,
        spec: &PolicySpec,
        split: Option<&BTreeMap<String, BigRational>>,
    ) -> Result<IdentityChecker> {
        let map = g.minimal_blowup()?;
        let mu_hat = match split {
            Some(s) => extend_measure(mu, &map, s)?,
            None => extend_measure_half(mu, &map)?,
        };
        let model = Model::new(g, mu, spec)?;
        let blown = Model::new(&map.blown, &mu_hat, &extend_policy(spec, &map)?)?;
        let check = Model::new(&g.maximal_subgraph(), mu, &reduce_policy(spec, g)?)?;
        Ok(IdentityChecker {
            model,
            blown,
            check,
            map,
        })
    }

    fn lift(&self, w: &QueueWord) -> Result<QueueWord> {
        let letters: Vec<usize> = w.letters().iter().map(|&c| self.map.to_blown(c)).collect();
        QueueWord::new(&self.map.blown, &letters)
    }

    fn mu_hat(&self, s: NodeSet) -> f64 {
        s.iter().map(|i| self.blown.mu.get(i)).sum()
    }

    pub fn quadratic(&self, w: &QueueWord) -> Result<QuadraticIdentity> {
        let g = &self.model.graph;
        QueueWord::new(g, w.letters())?;
        let sets = special_sets(g, w);
        let drift = exact_drift(&self.model, w, LyapunovFn::Quadratic).drift;
        let drift_hat = exact_drift(&self.blown, &self.lift(w)?, LyapunovFn::Quadratic).drift;
        let gap = 4.0 * self.mu_hat(self.map.lift(sets.once));
        Ok(QuadraticIdentity {
            drift,
            drift_hat,
            gap,
            residual: (drift - (drift_hat - gap)).abs(),
        })
    }

    pub fn linear(&self, w: &QueueWord) -> Result<LinearChain> {
        let g = &self.model.graph;
        QueueWord::new(g, w.letters())?;
        let sets = special_sets(g, w);
        let drift = exact_drift(&self.model, w, LyapunovFn::Linear).drift;
        let drift_hat = exact_drift(&self.blown, &self.lift(w)?, LyapunovFn::Linear).drift;
        let w_check = QueueWord::new(&self.check.graph, w.letters())?;
        let drift_check = exact_drift(&self.check, &w_check, LyapunovFn::Linear).drift;
        let left = drift_hat - 2.0 * self.mu_hat(self.map.lift(sets.once));
        let right = drift_check - 2.0 * self.mu_hat(self.map.copies_of(sets.present));
        Ok(LinearChain {
            drift,
            drift_hat,
            drift_check,
            residual_left: (drift - left).abs(),
            residual_right: (drift_hat - right).abs(),
        })
    }
}

/// A uniformly grown random word of `𝕎(G)`: letters are appended one at a
/// time, each uniform among the admissible ones. `None` if growth gets stuck
/// before `len`.
pub fn random_state<R: Rng + ?Sized>(g: &Multigraph, len: usize, rng: &mut R) -> Option<QueueWord> {
    let mut w = QueueWord::empty(g.len());
    for _ in 0..len {
        let options: Vec<usize> = (0..g.len()).filter(|&c| w.can_append(g, c)).collect();
        if options.is_empty() {
            return None;
        }
        w.push(options[rng.random_range(0..options.len())]);
    }
    Some(w)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct IdentityScan {
    pub states: usize,
    pub max_quadratic: f64,
    pub max_linear_left: f64,
    pub max_linear_right: f64,
    pub chain_ordered: bool,
}

impl IdentityScan {
    pub fn max_residual(&self) -> f64 {
        self.max_quadratic
            .max(self.max_linear_left)
            .max(self.max_linear_right)
    }

    pub fn passed(&self) -> bool {
        self.chain_ordered && self.max_residual() < IDENTITY_TOL
    }
}

/// All three identities on the given states.
pub fn identity_scan(
    checker: &IdentityChecker,
    states: &[QueueWord],
    exec: Execution,
) -> Result<IdentityScan> {
    let rows = exec::map(
        exec,
        states,
        |w| -> Result<(QuadraticIdentity, LinearChain)> {
            Ok((checker.quadratic(w)?, checker.linear(w)?))
        },
    );
    let mut out = IdentityScan {
        states: states.len(),
        max_quadratic: 0.0,
        max_linear_left: 0.0,
        max_linear_right: 0.0,
        chain_ordered: true,
    };
    for row in rows {
        let (q, l) = row?;
        out.max_quadratic = out.max_quadratic.max(q.residual);
        out.max_linear_left = out.max_linear_left.max(l.residual_left);
        out.max_linear_right = out.max_linear_right.max(l.residual_right);
        out.chain_ordered &= l.ordered();
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PpartiteReport {
    pub parts: usize,
    pub delta: f64,
    pub bound: f64,
    pub checked: usize,
    /// States without a `V₂` letter, outside the claim.
    pub excluded: usize,
    pub max_drift: f64,
    pub worst: Option<String>,
    pub passed: bool,
}

/// Whether `ΔL_δ(w) ≤ −δ/2` (up to [`IDENTITY_TOL`]).
pub fn verify_ppartite_bound(model: &Model, delta: f64, w: &QueueWord) -> Result<bool> {
    let f = LyapunovFn::l_delta(&model.graph, &model.mu, delta)?;
    Ok(exact_drift(model, w, f).drift <= -delta / 2.0 + IDENTITY_TOL)
}

/// Exhaustive `L_δ` bound check on a complete multipartite `Ǧ`, over words
/// up to `max_len` holding some class of `V₂`. `δ` defaults to the NCOND
/// margin.
pub fn ppartite_scan(
    model: &Model,
    delta: Option<f64>,
    max_len: usize,
    exec: Execution,
) -> Result<PpartiteReport> {
    let g = &model.graph;
    let parts = g
        .maximal_subgraph()
        .complete_multipartite_decomposition()
        .ok_or(Error::NotMultipartite)?;
    let ncond = ncond_check(g, &model.mu)?;
    if !ncond.satisfied {
        return Err(Error::NcondViolated {
            margin: ncond.margin,
        });
    }
    let delta = delta.unwrap_or(ncond.margin);
    let f = LyapunovFn::l_delta(g, &model.mu, delta)?;
    let v2 = g.v2();
    let states = enumerate_states(g, max_len);
    let (claimed, excluded): (Vec<QueueWord>, Vec<QueueWord>) = states
        .into_iter()
        .partition(|w| w.letters().iter().any(|&c| v2.contains(c)));
    let drifts = exec::map(exec, &claimed, |w| exact_drift(model, w, f).drift);
    let bound = -delta / 2.0;
    let (max_drift, worst) = drifts
        .iter()
        .zip(&claimed)
        .max_by(|a, b| a.0.total_cmp(b.0))
        .map_or((f64::NEG_INFINITY, None), |(d, w)| (*d, Some(w.display(g))));
    Ok(PpartiteReport {
        parts: parts.len(),
        delta,
        bound,
        checked: claimed.len(),
        excluded: excluded.len(),
        max_drift,
        worst,
        passed: max_drift <= bound + IDENTITY_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DriftScan {
    pub function: &'static str,
    /// Largest drift among words of each length `0..=max_len`.
    pub max_by_length: Vec<f64>,
    /// Smallest length from which every scanned word has negative drift.
    pub threshold: Option<usize>,
    /// `−max drift` over words at or beyond the threshold.
    pub eta: Option<f64>,
}

pub fn scan_drift(model: &Model, f: LyapunovFn, max_len: usize, exec: Execution) -> DriftScan {
    let states = enumerate_states(&model.graph, max_len);
    let drifts = exec::map(exec, &states, |w| exact_drift(model, w, f).drift);
    let mut max_by_length = vec![f64::NEG_INFINITY; max_len + 1];
    for (w, d) in states.iter().zip(&drifts) {
        max_by_length[w.len()] = max_by_length[w.len()].max(*d);
    }
    let mut threshold = None;
    let mut tail_max = f64::NEG_INFINITY;
    for l in (0..=max_len).rev() {
        if max_by_length[l] == f64::NEG_INFINITY {
            continue;
        }
        if max_by_length[l].max(tail_max) >= 0.0 {
            break;
        }
        tail_max = tail_max.max(max_by_length[l]);
        threshold = Some(l);
    }
    DriftScan {
        function: f.name(),
        max_by_length,
        threshold,
        eta: threshold.map(|_| -tail_max),
    }
}

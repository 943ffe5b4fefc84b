//! FCFM product-form stationary distribution, its normalising constant and
//! independent numerical oracles (dense linear solve, balance residuals).

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::One;

use crate::chain::{enumerate_states, KernelRow, Model, QueueWord, SimulationResult};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{ncond_check, ProbMeasure, Scalar};
use crate::multigraph::{Multigraph, NodeSet};
use crate::policies::PolicySpec;

/// `α⁻¹` as the sum over independent sets `I` of `Ǧ` and orderings of `I`
/// of `Π μ(e_σ(i)) / (μ(E(S_i)) − μ(S_i ∩ V₂))`, where `S_i` is the set of
/// the first `i` elements. Evaluated by dynamic programming over subsets:
/// `f(S) = Σ_{e∈S} μ(e) f(S∖e) / D(S)`, `f(∅) = 1`, `α⁻¹ = Σ_S f(S)`.
pub fn alpha_inverse<S: Scalar>(g: &Multigraph, mu: &[S], exec: Execution) -> Result<S> {
    let check = g.maximal_subgraph();
    let mut by_size: Vec<Vec<NodeSet>> = Vec::new();
    for set in check.independent_sets() {
        let k = set.len();
        if by_size.len() < k {
            by_size.resize(k, Vec::new());
        }
        by_size[k - 1].push(set);
    }
    let mass = |s: NodeSet| s.iter().fold(S::zero(), |acc, i| acc + mu[i].clone());
    let v2 = g.v2();
    let mut f: HashMap<NodeSet, S> = HashMap::new();
    f.insert(NodeSet::EMPTY, S::one());
    let mut total = S::one();
    for level in &by_size {
        let values = exec::map(exec, level, |&set| {
            let d = mass(g.neighborhood(set)) - mass(set & v2);
            if d <= S::zero() {
                return Err(Error::NcondViolated { margin: d.approx() });
            }
            let num = set.iter().fold(S::zero(), |acc, e| {
                acc + mu[e].clone() * f[&set.without(e)].clone()
            });
            Ok(num / d)
        });
        for (set, val) in level.iter().zip(values) {
            let val = val?;
            total = total + val.clone();
            f.insert(*set, val);
        }
    }
    Ok(total)
}

/// `Π_W(w) = α Π_l μ(w_l) / μ(E({w_1..w_l}))`.
fn product_weight<S: Scalar>(g: &Multigraph, mu: &[S], letters: &[usize]) -> S {
    let mut seen = NodeSet::EMPTY;
    let mut e = NodeSet::EMPTY;
    let mut acc = S::one();
    for &c in letters {
        if !seen.contains(c) {
            seen.insert(c);
            e = e | g.neighbors(c);
        }
        let denom = e.iter().fold(S::zero(), |a, i| a + mu[i].clone());
        acc = acc * mu[c].clone() / denom;
    }
    acc
}

/// The FCFM stationary law of a stable model on a non-bipartite multigraph.
#[derive(Debug, Clone)]
pub struct ProductForm {
    graph: Multigraph,
    mu: ProbMeasure,
    alpha: f64,
    alpha_exact: Option<BigRational>,
}

impl ProductForm {
    pub fn new(g: &Multigraph, mu: &ProbMeasure) -> Result<ProductForm> {
        ProductForm::new_with(g, mu, Execution::default())
    }

    pub fn new_with(g: &Multigraph, mu: &ProbMeasure, exec: Execution) -> Result<ProductForm> {
        if g.is_bipartite_graph() {
            return Err(Error::BipartiteGraph);
        }
        let report = ncond_check(g, mu)?;
        if !report.satisfied {
            return Err(Error::NcondViolated {
                margin: report.margin,
            });
        }
        let alpha_exact = match mu.exact_weights() {
            Some(w) => Some(BigRational::from_integer(1.into()) / alpha_inverse(g, w, exec)?),
            None => None,
        };
        let alpha = match &alpha_exact {
            Some(a) => a.approx(),
            None => 1.0 / alpha_inverse(g, mu.weights(), exec)?,
        };
        Ok(ProductForm {
            graph: g.clone(),
            mu: mu.clone(),
            alpha,
            alpha_exact,
        })
    }

    pub fn graph(&self) -> &Multigraph {
        &self.graph
    }

    pub fn measure(&self) -> &ProbMeasure {
        &self.mu
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alpha_exact(&self) -> Option<&BigRational> {
        self.alpha_exact.as_ref()
    }

    fn check_word(&self, w: &QueueWord) -> Result<()> {
        QueueWord::new(&self.graph, w.letters()).map(|_| ())
    }

    pub fn pi_w(&self, w: &QueueWord) -> Result<f64> {
        self.check_word(w)?;
        Ok(self.alpha * product_weight(&self.graph, self.mu.weights(), w.letters()))
    }

    pub fn pi_w_exact(&self, w: &QueueWord) -> Result<Option<BigRational>> {
        self.check_word(w)?;
        Ok(match (&self.alpha_exact, self.mu.exact_weights()) {
            (Some(a), Some(mu)) => Some(a * product_weight(&self.graph, mu, w.letters())),
            _ => None,
        })
    }

    /// `Σ_{|w| ≤ max_len} Π_W(w)`.
    pub fn truncated_mass(&self, max_len: usize) -> f64 {
        enumerate_states(&self.graph, max_len)
            .iter()
            .map(|w| self.alpha * product_weight(&self.graph, self.mu.weights(), w.letters()))
            .sum()
    }

    pub fn truncated_mass_exact(&self, max_len: usize) -> Option<BigRational> {
        let (a, mu) = (self.alpha_exact.as_ref()?, self.mu.exact_weights()?);
        let sum = enumerate_states(&self.graph, max_len)
            .iter()
            .fold(BigRational::from_integer(0.into()), |acc, w| {
                acc + product_weight(&self.graph, mu, w.letters())
            });
        Some(a * sum)
    }

    /// `(word, Π_W(word))` for all words up to `max_len`.
    pub fn table(&self, max_len: usize) -> Vec<(QueueWord, f64)> {
        enumerate_states(&self.graph, max_len)
            .into_iter()
            .map(|w| {
                let p = self.alpha * product_weight(&self.graph, self.mu.weights(), w.letters());
                (w, p)
            })
            .collect()
    }
}

/// A stationary law on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteStationary {
    pub table: BTreeMap<QueueWord, f64>,
    pub exact: Option<BTreeMap<QueueWord, BigRational>>,
}

impl FiniteStationary {
    pub fn prob(&self, w: &QueueWord) -> f64 {
        self.table.get(w).copied().unwrap_or(0.0)
    }

    pub fn max_abs_diff(&self, other: &FiniteStationary) -> f64 {
        self.table
            .keys()
            .chain(other.table.keys())
            .map(|w| (self.prob(w) - other.prob(w)).abs())
            .fold(0.0, f64::max)
    }
}

/// Stationary law of FCFM on a multigraph where every node has a self-loop:
/// the product weights over the finite state space, normalised.
pub fn finite_stationary(g: &Multigraph, mu: &ProbMeasure) -> Result<FiniteStationary> {
    mu.check_support(g)?;
    if !g.v2().is_empty() {
        return Err(Error::NotFinite);
    }
    let states = enumerate_states(g, g.len());
    let weights: Vec<f64> = states
        .iter()
        .map(|w| product_weight(g, mu.weights(), w.letters()))
        .collect();
    let z: f64 = weights.iter().sum();
    let table = states
        .iter()
        .cloned()
        .zip(weights.iter().map(|x| x / z))
        .collect();
    let exact = mu.exact_weights().map(|w| {
        let ws: Vec<BigRational> = states
            .iter()
            .map(|s| product_weight(g, w, s.letters()))
            .collect();
        let z: BigRational = ws.iter().cloned().sum();
        states
            .iter()
            .cloned()
            .zip(ws.into_iter().map(|x| x / &z))
            .collect()
    });
    Ok(FiniteStationary { table, exact })
}

/// Solves `πP = π`, `Σπ = 1` on a closed finite state set by LU.
pub fn linear_solve_stationary(
    states: &[QueueWord],
    rows: &[KernelRow],
) -> Result<FiniteStationary> {
    let n = states.len();
    let index: HashMap<&QueueWord, usize> =
        states.iter().enumerate().map(|(i, w)| (w, i)).collect();
    // a[j][i] = P(i, j) − δ_ij, last equation replaced by normalisation.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        for (to, p) in &row.entries {
            let j = *index
                .get(to)
                .ok_or_else(|| Error::NotClosed(to.to_string()))?;
            a[(j, i)] += p;
        }
        a[(i, i)] -= 1.0;
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(Error::Singular)?;
    Ok(FiniteStationary {
        table: states.iter().cloned().zip(x.iter().copied()).collect(),
        exact: None,
    })
}

/// Linear-solve oracle for any policy on a model with a finite state space.
pub fn solve_finite_model(model: &Model) -> Result<FiniteStationary> {
    if !model.graph.v2().is_empty() {
        return Err(Error::NotFinite);
    }
    let states = enumerate_states(&model.graph, model.graph.len());
    let rows: Vec<KernelRow> = states.iter().map(|w| model.kernel_row(w)).collect();
    linear_solve_stationary(&states, &rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport {
    pub max_residual: f64,
    pub argmax: QueueWord,
    pub states_checked: usize,
}

/// Max over `|w| ≤ max_len` of `|Π(w) − Σ_u Π(u) P(u, w)|` under FCFM. Each
/// balance equation is a finite sum over the exact predecessors of `w`.
pub fn balance_residual(
    pf: &ProductForm,
    max_len: usize,
    exec: Execution,
) -> Result<BalanceReport> {
    let g = pf.graph();
    let model = Model::new(g, pf.measure(), &PolicySpec::Fcfm)?;
    let states = enumerate_states(g, max_len);
    let mu = pf.measure().weights();
    let pi = |w: &QueueWord| pf.alpha * product_weight(g, mu, w.letters());
    let residuals = exec::map(exec, &states, |w| {
        let inflow: f64 = model.predecessors(w).iter().map(|(u, p)| pi(u) * p).sum();
        (pi(w) - inflow).abs()
    });
    let (k, &max_residual) = residuals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("at least the empty word");
    Ok(BalanceReport {
        max_residual,
        argmax: states[k].clone(),
        states_checked: states.len(),
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TvReport {
    pub max_len: usize,
    pub words: usize,
    /// `½ Σ_{|w| ≤ k} |freq − Π| + ½ |tail_freq − tail_model|`.
    pub tv: f64,
    pub tail_model: f64,
    pub tail_empirical: f64,
}

/// Total variation between empirical word frequencies and `Π_W`, with all
/// words longer than `max_len` lumped into one tail atom whose model mass
/// is `1 − Σ_{|w| ≤ max_len} Π_W(w)`, computed in exact arithmetic when `μ`
/// is rational.
pub fn tv_against_product_form(
    pf: &ProductForm,
    sim: &SimulationResult,
    max_len: usize,
) -> TvReport {
    let table = pf.table(max_len);
    let mut sum = 0.0;
    let mut model_mass = 0.0;
    let mut emp_mass = 0.0;
    for (w, p) in &table {
        let f = sim.frequency(w);
        sum += (f - p).abs();
        model_mass += p;
        emp_mass += f;
    }
    let tail_model = match pf.truncated_mass_exact(max_len) {
        Some(m) => (BigRational::one() - m).approx(),
        None => (1.0 - model_mass).max(0.0),
    };
    let tail_empirical = (1.0 - emp_mass).max(0.0);
    TvReport {
        max_len,
        words: table.len(),
        tv: 0.5 * (sum + (tail_empirical - tail_model).abs()),
        tail_model,
        tail_empirical,
    }
}

/// Total variation between two laws on a finite state space.
pub fn tv_distance(a: &FiniteStationary, b: &FiniteStationary) -> f64 {
    let keys: std::collections::BTreeSet<&QueueWord> =
        a.table.keys().chain(b.table.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|w| (a.prob(w) - b.prob(w)).abs())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::parse_rational;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    fn square() -> Multigraph {
        Multigraph::new(
            &["1", "2", "3", "4"],
            &[("1", "2"), ("2", "3"), ("3", "4"), ("4", "1")],
            &["1", "2", "3", "4"],
        )
        .unwrap()
    }

    fn k3() -> Multigraph {
        Multigraph::new(&["1", "2", "3"], &[("1", "2"), ("2", "3"), ("1", "3")], &[]).unwrap()
    }

    #[test]
    fn square_golden_values() {
        let g = square();
        let pf = ProductForm::new(&g, &ProbMeasure::uniform(&g)).unwrap();
        assert_eq!(pf.alpha_exact().unwrap(), &q("3/8"));
        let w = |s| QueueWord::parse(&g, s).unwrap();
        assert_eq!(pf.pi_w_exact(&w("1")).unwrap().unwrap(), q("1/8"));
        assert_eq!(pf.pi_w_exact(&w("1 3")).unwrap().unwrap(), q("1/32"));
        assert_eq!(pf.truncated_mass_exact(4).unwrap(), q("1"));
        assert_eq!(pf.truncated_mass_exact(0).unwrap(), q("3/8"));
    }

    #[test]
    fn k3_alpha() {
        let g = k3();
        let pf = ProductForm::new(&g, &ProbMeasure::uniform(&g)).unwrap();
        assert_eq!(pf.alpha_exact().unwrap(), &q("1/4"));
        // Queue length is birth-death: up 1 from 0, then up 1/3, down 2/3.
        let mut pi = vec![1.0, 1.5];
        for _ in 0..60 {
            pi.push(pi.last().unwrap() / 2.0);
        }
        let z: f64 = pi.iter().sum();
        assert!((pf.alpha() - 1.0 / z).abs() < 1e-12);
    }

    #[test]
    fn rejects_bipartite_and_unstable() {
        let p = Multigraph::new(&["1", "2", "3"], &[("1", "2"), ("2", "3")], &[]).unwrap();
        assert!(matches!(
            ProductForm::new(&p, &ProbMeasure::uniform(&p)),
            Err(Error::BipartiteGraph)
        ));
        let g = Multigraph::new(&["1", "2", "3"], &[("1", "2"), ("2", "3")], &["3"]).unwrap();
        let mu = ProbMeasure::parse(&g, &["0.3", "0.2", "0.5"]).unwrap();
        assert!(matches!(
            ProductForm::new(&g, &mu),
            Err(Error::NcondViolated { .. })
        ));
    }

    #[test]
    fn two_looped_nodes() {
        let g = Multigraph::new(&["1", "2"], &[("1", "2")], &["1", "2"]).unwrap();
        let mu = ProbMeasure::parse(&g, &["0.3", "0.7"]).unwrap();
        let fs = finite_stationary(&g, &mu).unwrap();
        let ex = fs.exact.unwrap();
        let w = |s| QueueWord::parse(&g, s).unwrap();
        assert_eq!(ex[&w("")], q("1/2"));
        assert_eq!(ex[&w("1")], q("0.15"));
        assert_eq!(ex[&w("2")], q("0.35"));
        let m = Model::new(&g, &mu, &PolicySpec::Fcfm).unwrap();
        let ls = solve_finite_model(&m).unwrap();
        assert!(
            ls.max_abs_diff(&FiniteStationary {
                table: fs.table,
                exact: None
            }) < 1e-12
        );
    }

    #[test]
    fn finite_requires_all_loops() {
        let g = k3();
        assert!(matches!(
            finite_stationary(&g, &ProbMeasure::uniform(&g)),
            Err(Error::NotFinite)
        ));
    }

    #[test]
    fn non_closed_state_set() {
        let g = k3();
        let m = Model::new(&g, &ProbMeasure::uniform(&g), &PolicySpec::Fcfm).unwrap();
        let states = enumerate_states(&g, 1);
        let rows: Vec<KernelRow> = states.iter().map(|w| m.kernel_row(w)).collect();
        assert!(matches!(
            linear_solve_stationary(&states, &rows),
            Err(Error::NotClosed(_))
        ));
    }

    #[test]
    fn alpha_vanishes_near_boundary() {
        let g = Multigraph::new(&["1", "2", "3"], &[("1", "2"), ("2", "3")], &["3"]).unwrap();
        let mut last = f64::INFINITY;
        for eps in ["0.1", "0.01", "0.001", "0.0001"] {
            let m1 = q("0.3") - q(eps);
            let mu =
                ProbMeasure::from_rationals(&g, vec![m1, q("0.3"), q("0.4") + q(eps)]).unwrap();
            let a = ProductForm::new(&g, &mu).unwrap().alpha();
            assert!(a < last);
            last = a;
        }
        assert!(last < 1e-3);
    }
}

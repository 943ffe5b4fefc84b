//! Backward and forward detailed chains over `V ∪ V̄`, the product measure
//! `ν`, block masses, and trajectory-level checks of FCFM reversibility.
//!
//! Positions in a trajectory are 0-based: item `p` is the `(p+1)`-th
//! arrival, and "time `n`" is the state after `n` arrivals.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use num_rational::BigRational;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{ClassQueues, QueueWord};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::{ncond_check, ProbMeasure, Scalar};
use crate::multigraph::{Multigraph, NodeSet};
use crate::policies::{Policy, PolicySpec};

const MACRON: char = '\u{0304}';
const UNMATCHED: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetailedLetter {
    pub class: usize,
    pub barred: bool,
}

impl DetailedLetter {
    pub fn plain(class: usize) -> DetailedLetter {
        DetailedLetter {
            class,
            barred: false,
        }
    }

    pub fn bar(class: usize) -> DetailedLetter {
        DetailedLetter {
            class,
            barred: true,
        }
    }

    pub fn flipped(self) -> DetailedLetter {
        DetailedLetter {
            class: self.class,
            barred: !self.barred,
        }
    }
}

/// A word over `V ∪ V̄`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DetailedWord {
    letters: Vec<DetailedLetter>,
}

impl DetailedWord {
    pub fn new(letters: Vec<DetailedLetter>) -> DetailedWord {
        DetailedWord { letters }
    }

    pub fn empty() -> DetailedWord {
        DetailedWord::default()
    }

    /// Space-separated node names; a bar is a trailing combining macron
    /// (`2̄`) or a leading `~`. `ε` or the empty string is the empty word.
    pub fn parse(g: &Multigraph, s: &str) -> Result<DetailedWord> {
        let s = s.trim();
        if s.is_empty() || s == "ε" {
            return Ok(DetailedWord::empty());
        }
        let letters = s
            .split_whitespace()
            .map(|t| {
                let (name, barred) = if let Some(rest) = t.strip_suffix(MACRON) {
                    (rest, true)
                } else if let Some(rest) = t.strip_prefix('~') {
                    (rest, true)
                } else {
                    (t, false)
                };
                Ok(DetailedLetter {
                    class: g.node(name)?,
                    barred,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DetailedWord { letters })
    }

    pub fn letters(&self) -> &[DetailedLetter] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn display(&self, g: &Multigraph) -> String {
        if self.letters.is_empty() {
            return "ε".to_string();
        }
        let parts: Vec<String> = self
            .letters
            .iter()
            .map(|l| {
                let mut s = g.name(l.class).to_string();
                if l.barred {
                    s.push(MACRON);
                }
                s
            })
            .collect();
        parts.join(" ")
    }
}

impl fmt::Display for DetailedWord {
    /// Index form, for contexts without a graph.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "ε");
        }
        for (k, l) in self.letters.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", l.class)?;
            if l.barred {
                write!(f, "{MACRON}")?;
            }
        }
        Ok(())
    }
}

/// Membership in the backward state space `𝔹`: the first letter is
/// unbarred, unbarred letters are pairwise non-adjacent (so a self-looped
/// class appears at most once unbarred), and no unbarred letter is adjacent
/// to the class of a later barred letter.
pub fn is_admissible_b(g: &Multigraph, w: &DetailedWord) -> bool {
    if w.letters.iter().any(|l| l.class >= g.len()) {
        return false;
    }
    if w.letters.first().is_some_and(|l| l.barred) {
        return false;
    }
    let mut seen_plain = NodeSet::EMPTY;
    let mut reach = NodeSet::EMPTY;
    for l in &w.letters {
        if reach.contains(l.class) {
            return false;
        }
        if !l.barred {
            seen_plain.insert(l.class);
            reach = g.neighborhood(seen_plain);
        }
    }
    true
}

/// `Ψ(w)`: reverse the word and flip every bar.
pub fn reverse_copy(w: &DetailedWord) -> DetailedWord {
    DetailedWord {
        letters: w.letters.iter().rev().map(|l| l.flipped()).collect(),
    }
}

/// Membership in the forward state space `𝔽 = Ψ(𝔹)`.
pub fn is_admissible_f(g: &Multigraph, w: &DetailedWord) -> bool {
    is_admissible_b(g, &reverse_copy(w))
}

/// Unbarred letters in order: the queue detail carried by a backward word.
pub fn project_to_queue(g: &Multigraph, b: &DetailedWord) -> Result<QueueWord> {
    let letters: Vec<usize> = b
        .letters
        .iter()
        .filter(|l| !l.barred)
        .map(|l| l.class)
        .collect();
    QueueWord::new(g, &letters)
}

fn backward_update(g: &Multigraph, word: &mut VecDeque<DetailedLetter>, v: usize) {
    match word
        .iter()
        .position(|l| !l.barred && g.adjacent(l.class, v))
    {
        Some(t) => {
            let c = word[t].class;
            word[t] = DetailedLetter::bar(v);
            word.push_back(DetailedLetter::bar(c));
            while word.front().is_some_and(|l| l.barred) {
                word.pop_front();
            }
        }
        None => word.push_back(DetailedLetter::plain(v)),
    }
}

/// One FCFM step of the backward chain. The oldest compatible unbarred
/// letter becomes the bar of the arrival, the arrival's own slot records the
/// bar of its partner, and the leading barred letters are dropped.
pub fn backward_step(g: &Multigraph, b: &DetailedWord, v: usize) -> Result<DetailedWord> {
    if !is_admissible_b(g, b) {
        return Err(Error::NotBackwardAdmissible(b.display(g)));
    }
    if v >= g.len() {
        return Err(Error::UnknownNode(v.to_string()));
    }
    let mut word: VecDeque<DetailedLetter> = b.letters.iter().copied().collect();
    backward_update(g, &mut word, v);
    Ok(DetailedWord {
        letters: word.into(),
    })
}

/// Incremental backward chain without per-step admissibility checks.
#[derive(Clone, Debug)]
pub struct BackwardChain<'g> {
    graph: &'g Multigraph,
    word: VecDeque<DetailedLetter>,
}

impl<'g> BackwardChain<'g> {
    pub fn new(graph: &'g Multigraph) -> BackwardChain<'g> {
        BackwardChain {
            graph,
            word: VecDeque::new(),
        }
    }

    pub fn step(&mut self, v: usize) {
        backward_update(self.graph, &mut self.word, v);
    }

    pub fn word(&self) -> DetailedWord {
        DetailedWord {
            letters: self.word.iter().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForwardWord {
    Determined(DetailedWord),
    /// Some item stored at time `n` is still unmatched at the horizon.
    Undetermined,
}

/// An arrival sequence run through FCFM from the empty buffer, with the
/// partner of every matched item.
#[derive(Clone, Debug)]
pub struct Trajectory {
    arrivals: Vec<usize>,
    partner: Vec<usize>,
    /// `oldest[n]`: first item unmatched at time `n`, or `n` if none.
    oldest: Vec<usize>,
    /// `reach[n]`: largest partner index among items `< n`, `UNMATCHED`
    /// if one of them is never matched.
    reach: Vec<usize>,
}

impl Trajectory {
    pub fn fcfm(g: &Multigraph, arrivals: Vec<usize>) -> Result<Trajectory> {
        if let Some(&v) = arrivals.iter().find(|&&v| v >= g.len()) {
            return Err(Error::UnknownNode(v.to_string()));
        }
        let policy = Policy::compile(&PolicySpec::Fcfm, g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut q = ClassQueues::new(g.len());
        let mut partner = vec![UNMATCHED; arrivals.len()];
        for (p, &v) in arrivals.iter().enumerate() {
            if let Some(m) = q.step(&policy, v, &mut rng) {
                partner[p] = m as usize;
                partner[m as usize] = p;
            }
        }
        let n = arrivals.len();
        let mut oldest = Vec::with_capacity(n + 1);
        let mut i = 0;
        for t in 0..=n {
            while i < t && partner[i] < t {
                i += 1;
            }
            oldest.push(i);
        }
        let mut reach = Vec::with_capacity(n + 1);
        let mut r = 0usize;
        reach.push(0);
        for &p in &partner {
            r = r.max(p);
            reach.push(r);
        }
        Ok(Trajectory {
            arrivals,
            partner,
            oldest,
            reach,
        })
    }

    /// `steps` i.i.d. arrivals of law `mu`.
    pub fn sample(g: &Multigraph, mu: &ProbMeasure, steps: usize, seed: u64) -> Result<Trajectory> {
        mu.check_support(g)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist =
            WeightedIndex::new(mu.weights()).map_err(|e| Error::InvalidMeasure(e.to_string()))?;
        let arrivals = (0..steps).map(|_| dist.sample(&mut rng)).collect();
        Trajectory::fcfm(g, arrivals)
    }

    pub fn arrivals(&self) -> &[usize] {
        &self.arrivals
    }

    pub fn len(&self) -> usize {
        self.arrivals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn partner(&self, p: usize) -> Option<usize> {
        (self.partner[p] != UNMATCHED).then_some(self.partner[p])
    }

    /// Whether the buffer is empty after `n` arrivals.
    pub fn is_empty_at(&self, n: usize) -> bool {
        self.oldest[n] == n
    }

    fn letter(&self, p: usize, n: usize) -> DetailedLetter {
        match self.partner[p] {
            m if m < n => DetailedLetter::bar(self.arrivals[m]),
            _ => DetailedLetter::plain(self.arrivals[p]),
        }
    }

    /// `B_n` built directly from partners: items from the oldest one still
    /// stored at time `n` up to `n`, each shown as itself if unmatched at
    /// time `n` and as the bar of its partner's class otherwise.
    pub fn backward_word(&self, n: usize) -> DetailedWord {
        DetailedWord {
            letters: (self.oldest[n]..n).map(|p| self.letter(p, n)).collect(),
        }
    }

    /// Queue detail `W_n` read off the partners.
    pub fn queue_word(&self, n: usize) -> Vec<usize> {
        (self.oldest[n]..n)
            .filter(|&p| self.partner[p] >= n)
            .map(|p| self.arrivals[p])
            .collect()
    }

    /// `F_n`: items after time `n` up to the last partner of an item stored
    /// at time `n`, each shown as the bar of its partner's class if that
    /// partner was stored at time `n`, and as itself otherwise.
    pub fn forward_word(&self, n: usize, horizon: usize) -> Result<ForwardWord> {
        if n + horizon > self.len() {
            return Err(Error::BeyondHorizon { n, horizon });
        }
        Ok(self.forward_word_unchecked(n, horizon))
    }

    fn forward_word_unchecked(&self, n: usize, horizon: usize) -> ForwardWord {
        if self.oldest[n] == n {
            return ForwardWord::Determined(DetailedWord::empty());
        }
        let j = self.reach[n];
        if j == UNMATCHED || j >= n + horizon || j >= self.len() {
            return ForwardWord::Undetermined;
        }
        ForwardWord::Determined(DetailedWord {
            letters: (n..=j).map(|p| self.letter(p, n)).collect(),
        })
    }
}

/// `ν(w) = Π μ(class)` over all letters, bars ignored.
pub fn nu(w: &DetailedWord, mu: &ProbMeasure) -> f64 {
    w.letters.iter().map(|l| mu.get(l.class)).product()
}

pub fn nu_exact(w: &DetailedWord, mu: &ProbMeasure) -> Option<BigRational> {
    let ex = mu.exact_weights()?;
    Some(
        w.letters
            .iter()
            .fold(BigRational::from_integer(1.into()), |acc, l| {
                acc * &ex[l.class]
            }),
    )
}

/// An independent set of `Ǧ` with an order of first appearance; indexes the
/// blocks `e_1 𝓑_1* e_2 𝓑_2* ...` partitioning `𝔹 ∖ {ε}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NuBlock {
    pub set: NodeSet,
    pub order: Vec<usize>,
}

/// Every (independent set of `Ǧ`, ordering) pair.
pub fn all_blocks(g: &Multigraph) -> Vec<NuBlock> {
    fn permute(prefix: &mut Vec<usize>, rest: NodeSet, set: NodeSet, out: &mut Vec<NuBlock>) {
        if rest.is_empty() {
            out.push(NuBlock {
                set,
                order: prefix.clone(),
            });
            return;
        }
        for e in rest {
            prefix.push(e);
            permute(prefix, rest.without(e), set, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for set in g.maximal_subgraph().independent_sets() {
        permute(&mut Vec::new(), set, set, &mut out);
    }
    out
}

/// `ν(C_{I,σ}) = Π_i μ(e_i) / (1 − ν(𝓑_i))`, with
/// `ν(𝓑_i) = μ(E(S_i)ᶜ) + μ(S_i ∩ V₂)` from the letters allowed to repeat
/// after the `i`-th new class.
pub fn nu_block_mass_with<S: Scalar>(block: &NuBlock, g: &Multigraph, mu: &[S]) -> Result<S> {
    let mass = |s: NodeSet| s.iter().fold(S::zero(), |acc, i| acc + mu[i].clone());
    let mut prefix = NodeSet::EMPTY;
    let mut acc = S::one();
    for &e in &block.order {
        prefix.insert(e);
        let repeat = mass(g.all() - g.neighborhood(prefix)) + mass(prefix & g.v2());
        let gap = S::one() - repeat;
        if gap <= S::zero() {
            return Err(Error::NcondViolated {
                margin: gap.approx(),
            });
        }
        acc = acc * mu[e].clone() / gap;
    }
    Ok(acc)
}

pub fn nu_block_mass(block: &NuBlock, g: &Multigraph, mu: &ProbMeasure) -> Result<f64> {
    nu_block_mass_with(block, g, mu.weights())
}

pub fn nu_block_mass_exact(
    block: &NuBlock,
    g: &Multigraph,
    mu: &ProbMeasure,
) -> Result<Option<BigRational>> {
    mu.exact_weights()
        .map(|w| nu_block_mass_with(block, g, w))
        .transpose()
}

/// `1 + Σ_blocks ν(C_{I,σ})`, i.e. `ν(𝔹)`.
pub fn block_sum<S: Scalar>(g: &Multigraph, mu: &[S], exec: Execution) -> Result<S> {
    let blocks = all_blocks(g);
    let masses = exec::map(exec, &blocks, |b| nu_block_mass_with(b, g, mu));
    masses.into_iter().try_fold(S::one(), |acc, m| Ok(acc + m?))
}

/// All words of `𝔹` with at most `max_len` letters, shortest first.
pub fn enumerate_b_words(g: &Multigraph, max_len: usize) -> Vec<DetailedWord> {
    let mut out = vec![DetailedWord::empty()];
    let mut frontier = vec![DetailedWord::empty()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for class in 0..g.len() {
                for barred in [false, true] {
                    let mut letters = w.letters.clone();
                    letters.push(DetailedLetter { class, barred });
                    let cand = DetailedWord { letters };
                    if is_admissible_b(g, &cand) {
                        next.push(cand);
                    }
                }
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Outcome of the empirical local balance check between the backward chain
/// and the forward words along one FCFM trajectory.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct BalanceStats {
    pub steps: usize,
    pub seed: u64,
    pub min_visits: u64,
    pub pairs_tested: usize,
    pub max_abs_diff: f64,
    /// Largest `|lhs − rhs| / SE` over tested pairs.
    pub max_z: f64,
    pub frac_within_2se: f64,
    pub all_within_3se: bool,
    pub undetermined: u64,
    pub final_horizon: usize,
    pub backward_states: usize,
    pub forward_states: usize,
    pub pairs: Vec<PairStat>,
}

/// One tested transition `w → w′` of the backward chain against the forward
/// transition `Ψw′ → Ψw`.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct PairStat {
    pub from: String,
    pub to: String,
    pub visits_backward: u64,
    pub visits_forward: u64,
    /// `ν(w) P̂_B(w, w′)`.
    pub lhs: f64,
    /// `ν(Ψw′) P̂_F(Ψw′, Ψw)`.
    pub rhs: f64,
    /// `(lhs − rhs) / SE`.
    pub z: f64,
}

impl BalanceStats {
    pub fn passed(&self) -> bool {
        self.pairs_tested > 0 && self.all_within_3se && self.frac_within_2se >= 0.95
    }
}

/// Pairs need this many visits on both sides to be tested.
pub const MIN_PAIR_VISITS: u64 = 500;

/// Empirical check of `ν(w) P_B(w,w′) = ν(Ψw′) P_F(Ψw′, Ψw)` on one FCFM
/// trajectory. `B_n` is advanced with [`BackwardChain`]; `F_n` is read off
/// the trajectory with a rolling horizon of ten mean excursion lengths, and
/// values not determined within it are dropped and counted.
pub fn verify_local_balance_empirical(
    g: &Multigraph,
    mu: &ProbMeasure,
    steps: usize,
    seed: u64,
) -> Result<BalanceStats> {
    let report = ncond_check(g, mu)?;
    if !report.satisfied {
        return Err(Error::NcondViolated {
            margin: report.margin,
        });
    }
    let tail = (steps / 5).max(10_000);
    let traj = Trajectory::sample(g, mu, steps + 1 + tail, seed)?;

    let mut visits_b: HashMap<DetailedWord, u64> = HashMap::new();
    let mut trans_b: HashMap<(DetailedWord, DetailedWord), u64> = HashMap::new();
    let mut chain = BackwardChain::new(g);
    let mut prev = chain.word();
    for n in 0..steps {
        chain.step(traj.arrivals[n]);
        let next = chain.word();
        *visits_b.entry(prev.clone()).or_default() += 1;
        *trans_b.entry((prev, next.clone())).or_default() += 1;
        prev = next;
    }

    let mut visits_f: HashMap<DetailedWord, u64> = HashMap::new();
    let mut trans_f: HashMap<(DetailedWord, DetailedWord), u64> = HashMap::new();
    let mut undetermined = 0u64;
    let mut empties = 0usize;
    let mut horizon = 0usize;
    let mut prev: Option<ForwardWord> = None;
    for n in 0..=steps {
        if n > 0 && traj.is_empty_at(n) {
            empties += 1;
        }
        let mean = if empties == 0 {
            n.max(1) as f64
        } else {
            n as f64 / empties as f64
        };
        horizon = (10.0 * mean).ceil() as usize;
        let current = traj.forward_word_unchecked(n, horizon);
        if let Some(ForwardWord::Determined(a)) = &prev {
            *visits_f.entry(a.clone()).or_default() += 1;
            if let ForwardWord::Determined(b) = &current {
                *trans_f.entry((a.clone(), b.clone())).or_default() += 1;
            }
        } else if prev.is_some() {
            undetermined += 1;
        }
        prev = Some(current);
    }

    let mut tested = 0usize;
    let mut within2 = 0usize;
    let mut all3 = true;
    let mut max_z = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut pairs = Vec::new();
    let mut keys: Vec<_> = trans_b.iter().collect();
    keys.sort();
    for ((w, w2), &count) in keys {
        let nb = visits_b[w];
        let a = reverse_copy(w2);
        let nf = visits_f.get(&a).copied().unwrap_or(0);
        if nb < MIN_PAIR_VISITS || nf < MIN_PAIR_VISITS {
            continue;
        }
        let b = reverse_copy(w);
        let pb = count as f64 / nb as f64;
        let pf = trans_f.get(&(a.clone(), b)).copied().unwrap_or(0) as f64 / nf as f64;
        let (nu_w, nu_a) = (nu(w, mu), nu(&a, mu));
        let diff = (nu_w * pb - nu_a * pf).abs();
        let se = (nu_w * nu_w * pb * (1.0 - pb) / nb as f64
            + nu_a * nu_a * pf * (1.0 - pf) / nf as f64)
            .sqrt();
        let z = if se > 0.0 {
            diff / se
        } else if diff < 1e-15 {
            0.0
        } else {
            f64::INFINITY
        };
        tested += 1;
        pairs.push(PairStat {
            from: w.display(g),
            to: w2.display(g),
            visits_backward: nb,
            visits_forward: nf,
            lhs: nu_w * pb,
            rhs: nu_a * pf,
            z: if nu_w * pb >= nu_a * pf { z } else { -z },
        });
        max_abs = max_abs.max(diff);
        max_z = max_z.max(z);
        if z <= 2.0 {
            within2 += 1;
        }
        if z > 3.0 {
            all3 = false;
        }
    }
    Ok(BalanceStats {
        steps,
        seed,
        min_visits: MIN_PAIR_VISITS,
        pairs_tested: tested,
        max_abs_diff: max_abs,
        max_z,
        frac_within_2se: if tested == 0 {
            0.0
        } else {
            within2 as f64 / tested as f64
        },
        all_within_3se: all3,
        undetermined,
        final_horizon: horizon,
        backward_states: visits_b.len(),
        forward_states: visits_f.len(),
        pairs,
    })
}

/// Arrivals between two consecutive empty-buffer epochs, with the class of
/// each arrival's partner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Excursion {
    pub start: usize,
    pub word: Vec<usize>,
    pub partners: Vec<usize>,
}

/// Splits an FCFM run from the empty buffer into complete excursions; a
/// trailing incomplete one is dropped.
pub fn excursion_decompose(g: &Multigraph, arrivals: &[usize]) -> Result<Vec<Excursion>> {
    let traj = Trajectory::fcfm(g, arrivals.to_vec())?;
    let mut out = Vec::new();
    let mut start = 0;
    for n in 1..=traj.len() {
        if traj.is_empty_at(n) {
            out.push(Excursion {
                start,
                word: arrivals[start..n].to_vec(),
                partners: (start..n).map(|p| arrivals[traj.partner[p]]).collect(),
            });
            start = n;
        }
    }
    if out.is_empty() {
        return Err(Error::NoExcursion);
    }
    Ok(out)
}

/// `f(w)` for a word of `𝕄` (FCFM from empty first empties the buffer at
/// the end of `w`); `None` otherwise.
pub fn partner_word(g: &Multigraph, w: &[usize]) -> Option<Vec<usize>> {
    if w.is_empty() {
        return None;
    }
    let traj = Trajectory::fcfm(g, w.to_vec()).ok()?;
    if (1..w.len()).any(|n| traj.is_empty_at(n)) || !traj.is_empty_at(w.len()) {
        return None;
    }
    Some((0..w.len()).map(|p| w[traj.partner[p]]).collect())
}

/// `g(w) = reverse(f(reverse(w)))`, the claimed inverse of `f` on `𝕄`.
pub fn partner_word_inverse(g: &Multigraph, w: &[usize]) -> Option<Vec<usize>> {
    let rev: Vec<usize> = w.iter().rev().copied().collect();
    let mut out = partner_word(g, &rev)?;
    out.reverse();
    Some(out)
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ExcursionReport {
    pub excursions: usize,
    pub matched_letters: u64,
    /// Excursions where `f(w)` rearranges the letters of `w`.
    pub permutation_valid: usize,
    /// Excursions where `f(w) ∈ 𝕄` and `g(f(w)) = w`.
    pub inverse_ok: usize,
    pub length_histogram: BTreeMap<usize, u64>,
    pub class_counts: Vec<u64>,
    pub class_frequencies: Vec<f64>,
    /// `|freq − μ| / sqrt(μ(1−μ)/N)` per class.
    pub class_z: Vec<f64>,
}

impl ExcursionReport {
    pub fn max_z(&self) -> f64 {
        self.class_z.iter().copied().fold(0.0, f64::max)
    }

    pub fn all_permutation_valid(&self) -> bool {
        self.permutation_valid == self.excursions
    }
}

pub fn excursion_report(
    g: &Multigraph,
    mu: &ProbMeasure,
    excursions: &[Excursion],
) -> ExcursionReport {
    let n = g.len();
    let mut class_counts = vec![0u64; n];
    let mut hist = BTreeMap::new();
    let mut permutation_valid = 0;
    let mut inverse_ok = 0;
    for e in excursions {
        *hist.entry(e.word.len()).or_insert(0u64) += 1;
        for &c in &e.partners {
            class_counts[c] += 1;
        }
        let (mut a, mut b) = (e.word.clone(), e.partners.clone());
        a.sort_unstable();
        b.sort_unstable();
        if a == b {
            permutation_valid += 1;
        }
        if partner_word(g, &e.partners).is_some()
            && partner_word_inverse(g, &e.partners).as_ref() == Some(&e.word)
        {
            inverse_ok += 1;
        }
    }
    let total: u64 = class_counts.iter().sum();
    let freqs: Vec<f64> = class_counts
        .iter()
        .map(|&c| c as f64 / total.max(1) as f64)
        .collect();
    let class_z = (0..n)
        .map(|i| {
            let m = mu.get(i);
            let sigma = (m * (1.0 - m) / total.max(1) as f64).sqrt();
            (freqs[i] - m).abs() / sigma
        })
        .collect();
    ExcursionReport {
        excursions: excursions.len(),
        matched_letters: total,
        permutation_valid,
        inverse_ok,
        length_histogram: hist,
        class_counts,
        class_frequencies: freqs,
        class_z,
    }
}

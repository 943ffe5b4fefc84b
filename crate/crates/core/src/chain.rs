//! The state space of queue words and the Markov chain `W_{n+1} = W_n ⊙ V_{n+1}`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::hash::{Hash, Hasher};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::measures::ProbMeasure;
use crate::multigraph::{Multigraph, NodeSet};
use crate::policies::{MatchDecision, Pick, Policy, PolicySpec, QueueView};

/// Unmatched item classes in arrival order, with cached class counts.
#[derive(Clone, Debug)]
pub struct QueueWord {
    letters: Vec<usize>,
    counts: Vec<u32>,
    present: NodeSet,
}

impl QueueWord {
    pub fn empty(n: usize) -> QueueWord {
        QueueWord {
            letters: Vec::new(),
            counts: vec![0; n],
            present: NodeSet::EMPTY,
        }
    }

    /// Validated word: admissible for `g`.
    pub fn new(g: &Multigraph, letters: &[usize]) -> Result<QueueWord> {
        let mut w = QueueWord::empty(g.len());
        for &c in letters {
            if c >= g.len() || !w.can_append(g, c) {
                return Err(Error::InadmissibleWord(format_letters(g, letters)));
            }
            w.push(c);
        }
        Ok(w)
    }

    /// Parses space-separated class names; `ε` or an empty string is the
    /// empty word. Single-character names may also be written without
    /// spaces, as in `13`.
    pub fn parse(g: &Multigraph, s: &str) -> Result<QueueWord> {
        let s = s.trim();
        if s.is_empty() || s == "ε" {
            return Ok(QueueWord::empty(g.len()));
        }
        let tokens: Vec<String> = if s.contains(char::is_whitespace) || g.node(s).is_ok() {
            s.split_whitespace().map(String::from).collect()
        } else {
            s.chars().map(String::from).collect()
        };
        let letters = tokens
            .iter()
            .map(|t| g.node(t))
            .collect::<Result<Vec<_>>>()?;
        QueueWord::new(g, &letters)
    }

    pub(crate) fn from_letters_unchecked(n: usize, letters: &[usize]) -> QueueWord {
        let mut w = QueueWord::empty(n);
        for &c in letters {
            w.push(c);
        }
        w
    }

    pub fn letters(&self) -> &[usize] {
        &self.letters
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Whether `c` can be appended without a compatible pair or a repeated
    /// self-looped class.
    pub fn can_append(&self, g: &Multigraph, c: usize) -> bool {
        !g.neighbors(c).intersects(self.present) && !(g.has_loop(c) && self.present.contains(c))
    }

    pub fn push(&mut self, c: usize) {
        self.letters.push(c);
        self.counts[c] += 1;
        self.present.insert(c);
    }

    pub fn remove(&mut self, position: usize) -> usize {
        let c = self.letters.remove(position);
        self.counts[c] -= 1;
        if self.counts[c] == 0 {
            self.present.remove(c);
        }
        c
    }

    pub fn first_position(&self, c: usize) -> Option<usize> {
        self.letters.iter().position(|&x| x == c)
    }

    pub fn last_position(&self, c: usize) -> Option<usize> {
        self.letters.iter().rposition(|&x| x == c)
    }

    pub fn class_detail(&self) -> ClassDetail {
        ClassDetail {
            counts: self.counts.clone(),
        }
    }

    pub fn display(&self, g: &Multigraph) -> String {
        format_letters(g, &self.letters)
    }
}

/// `ε` for the empty word, otherwise space-separated names.
pub fn format_letters(g: &Multigraph, letters: &[usize]) -> String {
    if letters.is_empty() {
        "ε".to_string()
    } else {
        letters
            .iter()
            .map(|&c| g.name(c))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl PartialEq for QueueWord {
    fn eq(&self, other: &Self) -> bool {
        self.letters == other.letters
    }
}

impl Eq for QueueWord {}

impl Hash for QueueWord {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.letters.hash(state);
    }
}

impl PartialOrd for QueueWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shorter words first, then lexicographic.
impl Ord for QueueWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.letters
            .len()
            .cmp(&other.letters.len())
            .then_with(|| self.letters.cmp(&other.letters))
    }
}

impl fmt::Display for QueueWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.letters.is_empty() {
            return write!(f, "ε");
        }
        let s: Vec<String> = self.letters.iter().map(|c| c.to_string()).collect();
        write!(f, "{}", s.join(" "))
    }
}

impl QueueView for QueueWord {
    fn present(&self) -> NodeSet {
        self.present
    }
    fn count(&self, class: usize) -> usize {
        self.counts[class] as usize
    }
    fn oldest(&self, class: usize) -> u64 {
        self.first_position(class).expect("class present") as u64
    }
    fn newest(&self, class: usize) -> u64 {
        self.last_position(class).expect("class present") as u64
    }
}

/// Commutative image of a queue word: per-class counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassDetail {
    pub counts: Vec<u32>,
}

impl ClassDetail {
    pub fn new(g: &Multigraph, counts: Vec<u32>) -> Result<ClassDetail> {
        let present: NodeSet = counts
            .iter()
            .enumerate()
            .filter(|c| *c.1 > 0)
            .map(|c| c.0)
            .collect();
        let ok = counts.len() == g.len()
            && present
                .iter()
                .all(|i| !g.neighbors(i).without(i).intersects(present))
            && g.self_loops().iter().all(|i| counts[i] <= 1);
        if !ok {
            return Err(Error::InadmissibleWord(format!("{counts:?}")));
        }
        Ok(ClassDetail { counts })
    }
}

impl QueueView for ClassDetail {
    fn present(&self) -> NodeSet {
        self.counts
            .iter()
            .enumerate()
            .filter(|c| *c.1 > 0)
            .map(|c| c.0)
            .collect()
    }
    fn count(&self, class: usize) -> usize {
        self.counts[class] as usize
    }
    // Class-admissible policies never look at item ages.
    fn oldest(&self, _class: usize) -> u64 {
        0
    }
    fn newest(&self, _class: usize) -> u64 {
        0
    }
}

fn pick_to_decision(w: &QueueWord, pick: Option<Pick>) -> MatchDecision {
    match pick {
        None => MatchDecision::NoMatch,
        Some(p) => MatchDecision::Match {
            position: if p.newest {
                w.last_position(p.class).unwrap()
            } else {
                w.first_position(p.class).unwrap()
            },
            class: p.class,
        },
    }
}

/// Exact decision distribution of `policy` for arrival `v` in state `w`.
pub fn decision_outcomes(policy: &Policy, w: &QueueWord, v: usize) -> Vec<(MatchDecision, f64)> {
    policy
        .pick_outcomes(w, v)
        .into_iter()
        .map(|(p, pr)| (pick_to_decision(w, p), pr))
        .collect()
}

pub fn decide<R: Rng + ?Sized>(
    policy: &Policy,
    w: &QueueWord,
    v: usize,
    rng: &mut R,
) -> MatchDecision {
    pick_to_decision(w, policy.pick(w, v, rng))
}

/// Applies a decision: append on no match, remove the matched item otherwise.
pub fn apply(w: &QueueWord, v: usize, d: MatchDecision) -> QueueWord {
    let mut next = w.clone();
    match d {
        MatchDecision::NoMatch => next.push(v),
        MatchDecision::Match { position, .. } => {
            next.remove(position);
        }
    }
    next
}

/// `w ⊙ v`.
pub fn step<R: Rng + ?Sized>(policy: &Policy, w: &QueueWord, v: usize, rng: &mut R) -> QueueWord {
    apply(w, v, decide(policy, w, v, rng))
}

/// `x ⊙̄ v` for a class-admissible policy.
pub fn class_step<R: Rng + ?Sized>(
    policy: &Policy,
    x: &ClassDetail,
    v: usize,
    rng: &mut R,
) -> Result<ClassDetail> {
    if !policy.is_class_admissible() {
        return Err(Error::NotClassAdmissible);
    }
    let mut next = x.clone();
    match policy.pick(x, v, rng) {
        None => next.counts[v] += 1,
        Some(p) => next.counts[p.class] -= 1,
    }
    Ok(next)
}

/// All admissible words of length at most `max_len`, by length then
/// lexicographically.
pub fn enumerate_states(g: &Multigraph, max_len: usize) -> Vec<QueueWord> {
    let mut all = vec![QueueWord::empty(g.len())];
    let mut level = all.clone();
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &level {
            for c in 0..g.len() {
                if w.can_append(g, c) {
                    let mut u = w.clone();
                    u.push(c);
                    next.push(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        all.extend(next.iter().cloned());
        level = next;
    }
    all
}

/// `P(w, ·)` as an explicit finite row.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub from: QueueWord,
    pub entries: BTreeMap<QueueWord, f64>,
}

impl KernelRow {
    pub fn prob(&self, to: &QueueWord) -> f64 {
        self.entries.get(to).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.entries.values().sum()
    }
}

/// A matching model `(G, Φ, μ)`.
#[derive(Debug, Clone)]
pub struct Model {
    pub graph: Multigraph,
    pub mu: ProbMeasure,
    pub policy: Policy,
}

impl Model {
    pub fn new(graph: &Multigraph, mu: &ProbMeasure, spec: &PolicySpec) -> Result<Model> {
        mu.check_support(graph)?;
        Ok(Model {
            graph: graph.clone(),
            mu: mu.clone(),
            policy: Policy::compile(spec, graph)?,
        })
    }

    pub fn n(&self) -> usize {
        self.graph.len()
    }

    /// Exact one-step row from `w`, over arrivals and policy randomness.
    pub fn kernel_row(&self, w: &QueueWord) -> KernelRow {
        let mut entries = BTreeMap::new();
        for v in 0..self.n() {
            let pv = self.mu.get(v);
            for (d, p) in decision_outcomes(&self.policy, w, v) {
                *entries.entry(apply(w, v, d)).or_insert(0.0) += pv * p;
            }
        }
        KernelRow {
            from: w.clone(),
            entries,
        }
    }

    /// One-step predecessors of `w` with `P(u, w)`. A predecessor either
    /// lacks the last letter of `w` or has one extra letter somewhere.
    pub fn predecessors(&self, w: &QueueWord) -> BTreeMap<QueueWord, f64> {
        let g = &self.graph;
        let mut cands: BTreeSet<QueueWord> = BTreeSet::new();
        if !w.is_empty() {
            let l = w.letters();
            cands.insert(QueueWord::from_letters_unchecked(
                g.len(),
                &l[..l.len() - 1],
            ));
        }
        for pos in 0..=w.len() {
            for c in 0..g.len() {
                let mut letters = w.letters().to_vec();
                letters.insert(pos, c);
                if let Ok(u) = QueueWord::new(g, &letters) {
                    cands.insert(u);
                }
            }
        }
        cands
            .into_iter()
            .filter_map(|u| {
                let p = self.kernel_row(&u).prob(w);
                (p > 0.0).then_some((u, p))
            })
            .collect()
    }

    /// Runs the chain from the empty word.
    pub fn simulate(&self, cfg: &SimConfig) -> SimulationResult {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let arrivals = WeightedIndex::new(self.mu.weights()).expect("measure has positive weights");
        let burn_in = cfg.burn_in.unwrap_or(cfg.steps / 100).min(cfg.steps);
        let mut q = ClassQueues::new(self.n());
        let mut visits: HashMap<Vec<usize>, u64> = HashMap::new();
        let mut overflow = 0u64;
        let mut occupancy = vec![0u64; self.n()];
        let mut len_sum = 0u128;
        let mut max_len = 0usize;
        let mut scratch = Vec::new();
        for n in 0..cfg.steps {
            let v = arrivals.sample(&mut rng);
            q.step(&self.policy, v, &mut rng);
            if n < burn_in {
                continue;
            }
            let len = q.len();
            len_sum += len as u128;
            max_len = max_len.max(len);
            for c in q.present().iter() {
                occupancy[c] += q.count(c) as u64;
            }
            if cfg.track_max_len.is_none_or(|m| len <= m) {
                q.word_into(&mut scratch);
                match visits.get_mut(scratch.as_slice()) {
                    Some(k) => *k += 1,
                    None => {
                        visits.insert(scratch.clone(), 1);
                    }
                }
            } else {
                overflow += 1;
            }
        }
        let recorded = cfg.steps - burn_in;
        let denom = recorded.max(1) as f64;
        SimulationResult {
            visits: visits
                .into_iter()
                .map(|(k, c)| (QueueWord::from_letters_unchecked(self.n(), &k), c))
                .collect(),
            overflow,
            recorded,
            steps: cfg.steps,
            burn_in,
            max_len,
            mean_len: len_sum as f64 / denom,
            occupancy: occupancy.iter().map(|&o| o as f64 / denom).collect(),
            seed: cfg.seed,
        }
    }

    /// Independent replicas with seeds `seed, seed + 1, ...`.
    pub fn simulate_replicas(
        &self,
        cfg: &SimConfig,
        replicas: usize,
        exec: Execution,
    ) -> Vec<SimulationResult> {
        exec::map_range(exec, replicas, |r| {
            self.simulate(&SimConfig {
                seed: cfg.seed.wrapping_add(r as u64),
                ..cfg.clone()
            })
        })
    }

    /// Least-squares slope of `|W_n|` against `n` over the second half of a
    /// run. A heuristic for transience: clearly positive slopes indicate
    /// linear growth, slopes near zero are consistent with stability.
    pub fn stability_slope(&self, steps: u64, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let arrivals = WeightedIndex::new(self.mu.weights()).expect("measure has positive weights");
        let mut q = ClassQueues::new(self.n());
        let start = steps / 2;
        let mut lens = Vec::with_capacity((steps - start) as usize);
        for n in 0..steps {
            let v = arrivals.sample(&mut rng);
            q.step(&self.policy, v, &mut rng);
            if n >= start {
                lens.push(q.len() as f64);
            }
        }
        least_squares_slope(&lens)
    }
}

/// Slope of `ys` against `0, 1, 2, ...`.
pub fn least_squares_slope(ys: &[f64]) -> f64 {
    let m = ys.len();
    if m < 2 {
        return 0.0;
    }
    let xbar = (m - 1) as f64 / 2.0;
    let ybar = ys.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub steps: u64,
    /// Defaults to 1% of `steps`.
    pub burn_in: Option<u64>,
    pub seed: u64,
    /// Words longer than this are counted in `overflow` rather than stored.
    pub track_max_len: Option<usize>,
}

impl SimConfig {
    pub fn new(steps: u64, seed: u64) -> SimConfig {
        SimConfig {
            steps,
            burn_in: None,
            seed,
            track_max_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub visits: BTreeMap<QueueWord, u64>,
    /// Recorded steps whose word exceeded `track_max_len`.
    pub overflow: u64,
    /// Steps after burn-in; equals the visit total plus `overflow`.
    pub recorded: u64,
    pub steps: u64,
    pub burn_in: u64,
    pub max_len: usize,
    pub mean_len: f64,
    /// Time-averaged number of stored items per class.
    pub occupancy: Vec<f64>,
    pub seed: u64,
}

impl SimulationResult {
    pub fn frequency(&self, w: &QueueWord) -> f64 {
        self.visits.get(w).copied().unwrap_or(0) as f64 / self.recorded.max(1) as f64
    }
}

/// Buffer as one FIFO of arrival stamps per class, so a step costs O(|V|)
/// whatever the queue length.
#[derive(Debug, Clone)]
pub(crate) struct ClassQueues {
    queues: Vec<VecDeque<u64>>,
    present: NodeSet,
    len: usize,
    clock: u64,
}

impl ClassQueues {
    pub(crate) fn new(n: usize) -> ClassQueues {
        ClassQueues {
            queues: vec![VecDeque::new(); n],
            present: NodeSet::EMPTY,
            len: 0,
            clock: 0,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.len
    }

    /// Applies one arrival. Returns the stamp of the matched item, if any;
    /// the arrival itself gets the current clock value as its stamp.
    pub(crate) fn step<R: Rng + ?Sized>(
        &mut self,
        policy: &Policy,
        v: usize,
        rng: &mut R,
    ) -> Option<u64> {
        let stamp = self.clock;
        self.clock += 1;
        match policy.pick(self, v, rng) {
            None => {
                self.queues[v].push_back(stamp);
                self.present.insert(v);
                self.len += 1;
                None
            }
            Some(p) => {
                let q = &mut self.queues[p.class];
                let matched = if p.newest {
                    q.pop_back()
                } else {
                    q.pop_front()
                }
                .unwrap();
                if q.is_empty() {
                    self.present.remove(p.class);
                }
                self.len -= 1;
                Some(matched)
            }
        }
    }

    /// Writes the current word (classes ordered by stamp) into `out`.
    pub(crate) fn word_into(&self, out: &mut Vec<usize>) {
        out.clear();
        let mut items: Vec<(u64, usize)> = Vec::with_capacity(self.len);
        for c in self.present {
            items.extend(self.queues[c].iter().map(|&s| (s, c)));
        }
        items.sort_unstable();
        out.extend(items.into_iter().map(|(_, c)| c));
    }
}

impl QueueView for ClassQueues {
    fn present(&self) -> NodeSet {
        self.present
    }
    fn count(&self, class: usize) -> usize {
        self.queues[class].len()
    }
    fn oldest(&self, class: usize) -> u64 {
        *self.queues[class].front().expect("class present")
    }
    fn newest(&self, class: usize) -> u64 {
        *self.queues[class].back().expect("class present")
    }
}

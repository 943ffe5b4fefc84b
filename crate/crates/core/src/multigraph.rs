//! Compatibility multigraphs: simple undirected edges plus self-loops.
//!
//! Nodes are identified by opaque string names and stored in lexicographic
//! order, so node indices, node sets and words all have a deterministic
//! ordering. A [`NodeSet`] is a 64-bit mask over those indices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::{BitAnd, BitOr, Not, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported node count (node sets are 64-bit masks).
pub const MAX_NODES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct NodeSet(pub u64);

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);

    pub fn singleton(i: usize) -> Self {
        NodeSet(1u64 << i)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        if n >= 64 {
            NodeSet(u64::MAX)
        } else {
            NodeSet((1u64 << n) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(it: I) -> Self {
        it.into_iter().fold(NodeSet::EMPTY, |s, i| s.with(i))
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        NodeSet(self.0 | 1u64 << i)
    }

    pub fn without(self, i: usize) -> Self {
        NodeSet(self.0 & !(1u64 << i))
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1u64 << i);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersects(self, other: NodeSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Smallest member, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    pub fn iter(self) -> NodeSetIter {
        NodeSetIter(self.0)
    }
}

impl BitOr for NodeSet {
    type Output = NodeSet;
    fn bitor(self, rhs: NodeSet) -> NodeSet {
        NodeSet(self.0 | rhs.0)
    }
}

impl BitAnd for NodeSet {
    type Output = NodeSet;
    fn bitand(self, rhs: NodeSet) -> NodeSet {
        NodeSet(self.0 & rhs.0)
    }
}

impl Sub for NodeSet {
    type Output = NodeSet;
    fn sub(self, rhs: NodeSet) -> NodeSet {
        NodeSet(self.0 & !rhs.0)
    }
}

impl Not for NodeSet {
    type Output = NodeSet;
    fn not(self) -> NodeSet {
        NodeSet(!self.0)
    }
}

impl FromIterator<usize> for NodeSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        NodeSet::from_indices(iter)
    }
}

impl IntoIterator for NodeSet {
    type Item = usize;
    type IntoIter = NodeSetIter;
    fn into_iter(self) -> NodeSetIter {
        self.iter()
    }
}

/// Ascending iterator over the members of a [`NodeSet`].
#[derive(Debug, Clone)]
pub struct NodeSetIter(u64);

impl Iterator for NodeSetIter {
    type Item = usize;
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for NodeSetIter {}

/// A connected multigraph `G = (V, E)` whose self-looped nodes form `V₁`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multigraph {
    names: Vec<String>,
    index: HashMap<String, usize>,
    // adj[i] contains i itself when i carries a self-loop.
    adj: Vec<NodeSet>,
    loops: NodeSet,
    edges: Vec<(usize, usize)>,
}

impl Multigraph {
    /// Builds and validates a multigraph. Node order in the input does not
    /// matter; nodes are sorted lexicographically.
    pub fn new<S: AsRef<str>>(nodes: &[S], edges: &[(S, S)], self_loops: &[S]) -> Result<Self> {
        let mut names: Vec<String> = nodes.iter().map(|s| s.as_ref().to_string()).collect();
        names.sort();
        for pair in names.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::DuplicateNode(pair[0].clone()));
            }
        }
        if names.len() < 2 {
            return Err(Error::TooFewNodes(names.len()));
        }
        if names.len() > MAX_NODES {
            return Err(Error::TooManyNodes {
                got: names.len(),
                max: MAX_NODES,
            });
        }
        let index: HashMap<String, usize> = names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::UnknownNode(s.to_string()))
        };

        let mut adj = vec![NodeSet::EMPTY; names.len()];
        let mut edge_set = BTreeSet::new();
        for (a, b) in edges {
            let (i, j) = (lookup(a.as_ref())?, lookup(b.as_ref())?);
            if i == j {
                return Err(Error::LoopInEdgeList(a.as_ref().to_string()));
            }
            adj[i].insert(j);
            adj[j].insert(i);
            edge_set.insert((i.min(j), i.max(j)));
        }
        let mut loops = NodeSet::EMPTY;
        for s in self_loops {
            let i = lookup(s.as_ref())?;
            loops.insert(i);
            adj[i].insert(i);
        }
        let g = Multigraph {
            names,
            index,
            adj,
            loops,
            edges: edge_set.into_iter().collect(),
        };
        if !g.is_connected() {
            return Err(Error::Disconnected);
        }
        Ok(g)
    }

    pub(crate) fn from_parts(
        names: Vec<String>,
        edges: Vec<(usize, usize)>,
        loops: NodeSet,
    ) -> Result<Self> {
        let nodes: Vec<&str> = names.iter().map(String::as_str).collect();
        let e: Vec<(&str, &str)> = edges.iter().map(|&(i, j)| (nodes[i], nodes[j])).collect();
        let l: Vec<&str> = loops.iter().map(|i| nodes[i]).collect();
        Multigraph::new(&nodes, &e, &l)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn node(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn set_of<S: AsRef<str>>(&self, names: &[S]) -> Result<NodeSet> {
        names.iter().map(|s| self.node(s.as_ref())).collect()
    }

    pub fn all(&self) -> NodeSet {
        NodeSet::full(self.len())
    }

    /// `V₁`, the self-looped nodes.
    pub fn self_loops(&self) -> NodeSet {
        self.loops
    }

    /// `V₂ = V \ V₁`.
    pub fn v2(&self) -> NodeSet {
        self.all() - self.loops
    }

    pub fn has_loop(&self, i: usize) -> bool {
        self.loops.contains(i)
    }

    /// Non-loop edges as index pairs `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adj[i].contains(j)
    }

    /// `E(i)`; contains `i` iff `i` has a self-loop.
    pub fn neighbors(&self, i: usize) -> NodeSet {
        self.adj[i]
    }

    /// `E(U)`, the union of the neighborhoods of the members of `U`.
    pub fn neighborhood(&self, u: NodeSet) -> NodeSet {
        u.iter().fold(NodeSet::EMPTY, |acc, i| acc | self.adj[i])
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    /// `|E|` counted as ordered pairs: two per edge, one per self-loop.
    pub fn edge_total(&self) -> usize {
        2 * self.edges.len() + self.loops.len()
    }

    pub fn is_independent(&self, s: NodeSet) -> bool {
        !self.neighborhood(s).intersects(s)
    }

    fn is_connected(&self) -> bool {
        let mut seen = NodeSet::singleton(0);
        let mut frontier = seen;
        while !frontier.is_empty() {
            let next = self.neighborhood(frontier) - seen;
            seen = seen | next;
            frontier = next;
        }
        seen == self.all()
    }

    /// Two-colouring of a loop-free graph. The side containing the
    /// lexicographically first node comes first.
    pub fn bipartition(&self) -> Option<(NodeSet, NodeSet)> {
        if !self.loops.is_empty() {
            return None;
        }
        let mut side = vec![None; self.len()];
        side[0] = Some(false);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let s = side[i].unwrap();
            for j in self.adj[i] {
                match side[j] {
                    None => {
                        side[j] = Some(!s);
                        stack.push(j);
                    }
                    Some(t) if t == s => return None,
                    Some(_) => {}
                }
            }
        }
        let a: NodeSet = (0..self.len())
            .filter(|&i| side[i] == Some(false))
            .collect();
        Some((a, self.all() - a))
    }

    /// A bipartite graph in the strict sense: no self-loops and 2-colourable.
    pub fn is_bipartite_graph(&self) -> bool {
        self.bipartition().is_some()
    }

    /// Nonempty independent sets in lexicographic order of their sorted
    /// member lists. Self-looped nodes never belong to one.
    pub fn independent_sets(&self) -> IndependentSets<'_> {
        IndependentSets {
            g: self,
            stack: vec![(NodeSet::EMPTY, self.loops, 0)],
        }
    }

    /// `Ǧ`: the same graph with every self-loop deleted.
    pub fn maximal_subgraph(&self) -> Multigraph {
        let mut g = self.clone();
        for i in self.loops {
            g.adj[i].remove(i);
        }
        g.loops = NodeSet::EMPTY;
        g
    }

    /// `Ĝ`: every self-looped node `i` gains a twin copy `i̲` with the same
    /// neighbourhood, the loop becoming the edge `i — i̲`. When two adjacent
    /// nodes both carry loops, their copies are adjacent as well.
    pub fn minimal_blowup(&self) -> Result<BlowupMap> {
        let total = self.len() + self.loops.len();
        if total > MAX_NODES {
            return Err(Error::TooManyNodes {
                got: total,
                max: MAX_NODES,
            });
        }
        let mut taken: BTreeSet<String> = self.names.iter().cloned().collect();
        let mut copy_names = Vec::new();
        for i in self.loops {
            let mut name = format!("{}_", self.names[i]);
            while taken.contains(&name) {
                name.push('_');
            }
            taken.insert(name.clone());
            copy_names.push((i, name));
        }
        let blown_names: Vec<String> = taken.into_iter().collect();
        let pos = |s: &str| blown_names.binary_search_by(|x| x.as_str().cmp(s)).unwrap();

        let to_blown: Vec<usize> = self.names.iter().map(|s| pos(s)).collect();
        let mut copy_of = vec![None; self.len()];
        let mut original_of = vec![0usize; blown_names.len()];
        let mut copies = NodeSet::EMPTY;
        for (i, b) in to_blown.iter().enumerate() {
            original_of[*b] = i;
        }
        for (i, name) in &copy_names {
            let c = pos(name);
            copy_of[*i] = Some(c);
            original_of[c] = *i;
            copies.insert(c);
        }

        let mut edges: Vec<(usize, usize)> = self
            .edges
            .iter()
            .map(|&(i, j)| (to_blown[i], to_blown[j]))
            .collect();
        for i in self.loops {
            let c = copy_of[i].unwrap();
            for j in self.adj[i] {
                edges.push((c, to_blown[j]));
                if j > i && self.loops.contains(j) {
                    edges.push((c, copy_of[j].unwrap()));
                }
            }
        }
        let blown = Multigraph::from_parts(blown_names, edges, NodeSet::EMPTY)?;
        Ok(BlowupMap {
            original: self.clone(),
            blown,
            to_blown,
            copy_of,
            original_of,
            copies,
        })
    }

    /// Parts of `Ǧ` when it is complete multipartite, ordered by smallest
    /// member. The parts are the connected components of the complement.
    pub fn complete_multipartite_decomposition(&self) -> Option<Vec<NodeSet>> {
        let check = self.maximal_subgraph();
        let all = check.all();
        let mut remaining = all;
        let mut parts = Vec::new();
        while let Some(start) = remaining.first() {
            let mut part = NodeSet::singleton(start);
            let mut frontier = part;
            while !frontier.is_empty() {
                let mut next = NodeSet::EMPTY;
                for i in frontier {
                    next = next | (all - check.adj[i]).without(i);
                }
                next = next - part;
                part = part | next;
                frontier = next;
            }
            if !check.is_independent(part) {
                return None;
            }
            parts.push(part);
            remaining = remaining - part;
        }
        Some(parts)
    }

    pub fn format_set(&self, s: NodeSet) -> String {
        let names: Vec<&str> = s.iter().map(|i| self.name(i)).collect();
        format!("{{{}}}", names.join(","))
    }

    pub fn to_file(&self) -> GraphFile {
        GraphFile {
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| [self.names[i].clone(), self.names[j].clone()])
                .collect(),
            nodes: self.names.clone(),
            self_loops: self.loops.iter().map(|i| self.names[i].clone()).collect(),
        }
    }

    pub fn from_file(f: &GraphFile) -> Result<Self> {
        let edges: Vec<(&str, &str)> = f
            .edges
            .iter()
            .map(|[a, b]| (a.as_str(), b.as_str()))
            .collect();
        let nodes: Vec<&str> = f.nodes.iter().map(String::as_str).collect();
        let loops: Vec<&str> = f.self_loops.iter().map(String::as_str).collect();
        Multigraph::new(&nodes, &edges, &loops)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Multigraph::from_file(&serde_json::from_str(s)?)
    }

    /// Pretty JSON with sorted keys and sorted entries; stable under
    /// round trips.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("graph file serializes");
        s.push('\n');
        s
    }
}

impl fmt::Display for Multigraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self
            .edges
            .iter()
            .map(|&(i, j)| format!("{}-{}", self.names[i], self.names[j]))
            .collect();
        write!(
            f,
            "V={} E=[{}] V1={}",
            self.format_set(self.all()),
            edges.join(" "),
            self.format_set(self.loops)
        )
    }
}

/// On-disk graph format. Field order is alphabetical so serialization has
/// sorted keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphFile {
    pub edges: Vec<[String; 2]>,
    pub nodes: Vec<String>,
    #[serde(default)]
    pub self_loops: Vec<String>,
}

/// Depth-first enumeration of independent sets; see
/// [`Multigraph::independent_sets`].
pub struct IndependentSets<'a> {
    g: &'a Multigraph,
    // (current set, forbidden nodes, next candidate index)
    stack: Vec<(NodeSet, NodeSet, usize)>,
}

impl Iterator for IndependentSets<'_> {
    type Item = NodeSet;

    fn next(&mut self) -> Option<NodeSet> {
        let n = self.g.len();
        while let Some(top) = self.stack.last_mut() {
            let (cur, forbidden, start) = *top;
            match (start..n).find(|&j| !forbidden.contains(j)) {
                None => {
                    self.stack.pop();
                }
                Some(j) => {
                    top.2 = j + 1;
                    let set = cur.with(j);
                    self.stack.push((set, forbidden | self.g.adj[j], j + 1));
                    return Some(set);
                }
            }
        }
        None
    }
}

/// The minimal blow-up `Ĝ` of a multigraph together with the index maps
/// between `G` and `Ĝ`.
#[derive(Debug, Clone)]
pub struct BlowupMap {
    pub original: Multigraph,
    pub blown: Multigraph,
    to_blown: Vec<usize>,
    copy_of: Vec<Option<usize>>,
    original_of: Vec<usize>,
    copies: NodeSet,
}

impl BlowupMap {
    /// Index in `Ĝ` of original node `i`.
    pub fn to_blown(&self, i: usize) -> usize {
        self.to_blown[i]
    }

    /// Index in `Ĝ` of the copy `i̲`, for `i ∈ V₁`.
    pub fn copy_of(&self, i: usize) -> Option<usize> {
        self.copy_of[i]
    }

    /// Original node that a node of `Ĝ` stands for (itself or the node it copies).
    pub fn original_of(&self, b: usize) -> usize {
        self.original_of[b]
    }

    pub fn is_copy(&self, b: usize) -> bool {
        self.copies.contains(b)
    }

    /// The copies `i̲` as a set of `Ĝ`.
    pub fn copies(&self) -> NodeSet {
        self.copies
    }

    /// Image of an original node set in `Ĝ` (no copies added).
    pub fn lift(&self, s: NodeSet) -> NodeSet {
        s.iter().map(|i| self.to_blown[i]).collect()
    }

    /// Copies of the members of `s ∩ V₁`, as a set of `Ĝ`.
    pub fn copies_of(&self, s: NodeSet) -> NodeSet {
        s.iter().filter_map(|i| self.copy_of[i]).collect()
    }

    /// Original nodes represented in a set of `Ĝ`.
    pub fn project(&self, s: NodeSet) -> NodeSet {
        s.iter().map(|b| self.original_of[b]).collect()
    }
}

//! The truncated index tree: nodes `(eta, phi)`, multiset words over them,
//! and the sibling-collapse rewriting that puts a word into reduced form.
//!
//! A node of depth `n` is a pair of sequences of length `n`: branch indices
//! in `0..kappa` and bits. The two children of a node under branch `alpha`
//! extend `eta` by `alpha` and `phi` by `0` or `1`. Nodes of depth 1 have no
//! parent, so a pair of depth-1 nodes never collapses.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationConfig {
    /// Number of branch indices available at every node.
    pub kappa: usize,
    /// Maximum node depth.
    pub depth: usize,
    /// Maximum word size for exhaustive checks.
    pub word_bound: usize,
}

impl TruncationConfig {
    pub fn new(kappa: usize, depth: usize, word_bound: usize) -> Result<Self> {
        if kappa == 0 || depth == 0 || word_bound == 0 {
            return Err(Error::Config(format!(
                "truncation parameters must be positive (kappa={kappa}, depth={depth}, word_bound={word_bound})"
            )));
        }
        Ok(TruncationConfig {
            kappa,
            depth,
            word_bound,
        })
    }

    /// Validates that `node` lies inside this truncation.
    pub fn check(&self, node: &Node) -> Result<()> {
        if node.depth() > self.depth {
            return Err(Error::Truncation {
                node: node.clone(),
                max_depth: self.depth,
            });
        }
        if let Some(a) = node.eta.iter().find(|&&a| a as usize >= self.kappa) {
            return Err(Error::domain(format!(
                "branch index {a} in {node} is not below kappa={}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Number of nodes of exactly the given depth: `(2 kappa)^depth`.
    pub fn nodes_at_depth(&self, depth: usize) -> u128 {
        (2 * self.kappa as u128).saturating_pow(depth as u32)
    }

    /// Number of nodes of depth `1..=depth`.
    pub fn node_count(&self, depth: usize) -> u128 {
        (1..=depth).map(|d| self.nodes_at_depth(d)).fold(0u128, u128::saturating_add)
    }

    /// All nodes of depth `1..=max_depth`, depth-major and lexicographic within a depth.
    pub fn nodes(&self, max_depth: usize) -> Vec<Node> {
        let mut out = Vec::new();
        let mut layer: Vec<Node> = Vec::new();
        for alpha in 0..self.kappa as u32 {
            for bit in 0..2u8 {
                layer.push(Node::root(alpha, bit));
            }
        }
        for d in 1..=max_depth.min(self.depth) {
            out.extend(layer.iter().cloned());
            if d == max_depth.min(self.depth) {
                break;
            }
            let mut next = Vec::with_capacity(layer.len() * 2 * self.kappa);
            for n in &layer {
                for alpha in 0..self.kappa as u32 {
                    let (c0, c1) = n.children_unchecked(alpha);
                    next.push(c0);
                    next.push(c1);
                }
            }
            layer = next;
        }
        out
    }
}

/// An element `(eta, phi)` of the index tree.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    eta: Vec<u32>,
    phi: Vec<u8>,
}

impl Node {
    pub fn new(eta: Vec<u32>, phi: Vec<u8>) -> Result<Self> {
        if eta.is_empty() {
            return Err(Error::domain("nodes have depth at least 1"));
        }
        if eta.len() != phi.len() {
            return Err(Error::domain(format!(
                "eta has length {} but phi has length {}",
                eta.len(),
                phi.len()
            )));
        }
        if phi.iter().any(|&b| b > 1) {
            return Err(Error::domain("phi entries must be bits"));
        }
        Ok(Node { eta, phi })
    }

    /// The depth-1 node `(<alpha>, <bit>)`.
    pub fn root(alpha: u32, bit: u8) -> Self {
        debug_assert!(bit <= 1);
        Node {
            eta: vec![alpha],
            phi: vec![bit],
        }
    }

    pub fn eta(&self) -> &[u32] {
        &self.eta
    }

    pub fn phi(&self) -> &[u8] {
        &self.phi
    }

    pub fn depth(&self) -> usize {
        self.eta.len()
    }

    pub fn last_bit(&self) -> u8 {
        *self.phi.last().expect("nodes are never empty")
    }

    pub fn last_branch(&self) -> u32 {
        *self.eta.last().expect("nodes are never empty")
    }

    /// The node with the same `eta` and the last bit of `phi` flipped.
    pub fn flip_last(&self) -> Node {
        let mut phi = self.phi.clone();
        let last = phi.len() - 1;
        phi[last] ^= 1;
        Node {
            eta: self.eta.clone(),
            phi,
        }
    }

    pub fn parent(&self) -> Option<Node> {
        if self.depth() < 2 {
            return None;
        }
        let d = self.depth() - 1;
        Some(Node {
            eta: self.eta[..d].to_vec(),
            phi: self.phi[..d].to_vec(),
        })
    }

    /// The other member of this node's sibling pair, if the node has a parent.
    pub fn sibling(&self) -> Option<Node> {
        (self.depth() >= 2).then(|| self.flip_last())
    }

    /// The prefix of length `len` (`1 <= len <= depth`).
    pub fn prefix(&self, len: usize) -> Node {
        Node {
            eta: self.eta[..len].to_vec(),
            phi: self.phi[..len].to_vec(),
        }
    }

    /// All initial segments, shortest first, ending with the node itself.
    pub fn initial_segments(&self) -> impl Iterator<Item = Node> + '_ {
        (1..=self.depth()).map(move |l| self.prefix(l))
    }

    pub(crate) fn children_unchecked(&self, alpha: u32) -> (Node, Node) {
        let mut eta = self.eta.clone();
        eta.push(alpha);
        let mut phi0 = self.phi.clone();
        phi0.push(0);
        let mut phi1 = self.phi.clone();
        phi1.push(1);
        (
            Node {
                eta: eta.clone(),
                phi: phi0,
            },
            Node { eta, phi: phi1 },
        )
    }

    pub(crate) fn child_unchecked(&self, alpha: u32, bit: u8) -> Node {
        let mut n = self.clone();
        n.eta.push(alpha);
        n.phi.push(bit);
        n
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.eta.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, "|")?;
        for (i, b) in self.phi.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl std::str::FromStr for Node {
    type Err = Error;

    /// Parses the display form `(e1,e2,...|b1,b2,...)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| Error::domain(format!("malformed node `{s}`")))?;
        let (eta, phi) = inner
            .split_once('|')
            .ok_or_else(|| Error::domain(format!("malformed node `{s}`")))?;
        let parse_list = |part: &str| -> Result<Vec<u32>> {
            part.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<u32>()
                        .map_err(|_| Error::domain(format!("malformed node `{s}`")))
                })
                .collect()
        };
        let eta = parse_list(eta)?;
        let phi = parse_list(phi)?
            .into_iter()
            .map(|b| u8::try_from(b).unwrap_or(2))
            .collect();
        Node::new(eta, phi)
    }
}

impl Serialize for Node {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Node {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Returns the two children `((eta*alpha, phi*0), (eta*alpha, phi*1))`.
pub fn children(node: &Node, alpha: usize, cfg: &TruncationConfig) -> Result<(Node, Node)> {
    cfg.check(node)?;
    if alpha >= cfg.kappa {
        return Err(Error::domain(format!(
            "branch index {alpha} is not below kappa={}",
            cfg.kappa
        )));
    }
    if node.depth() >= cfg.depth {
        return Err(Error::Truncation {
            node: node.clone(),
            max_depth: cfg.depth,
        });
    }
    Ok(node.children_unchecked(alpha as u32))
}

/// `p` is a non-empty initial segment of `q` in both coordinates (reflexive).
pub fn is_initial_segment(p: &Node, q: &Node) -> bool {
    p.depth() <= q.depth() && q.eta.starts_with(&p.eta) && q.phi.starts_with(&p.phi)
}

/// A finite multiset of nodes. The empty word denotes the identity.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word {
    entries: BTreeMap<Node, usize>,
}

impl Word {
    pub fn new() -> Self {
        Word::default()
    }

    pub fn singleton(node: Node) -> Self {
        let mut w = Word::new();
        w.insert(node);
        w
    }

    pub fn insert(&mut self, node: Node) {
        *self.entries.entry(node).or_insert(0) += 1;
    }

    pub fn insert_n(&mut self, node: Node, n: usize) {
        if n > 0 {
            *self.entries.entry(node).or_insert(0) += n;
        }
    }

    /// Removes one occurrence; returns whether the node was present.
    pub fn remove_one(&mut self, node: &Node) -> bool {
        match self.entries.get_mut(node) {
            Some(m) if *m > 1 => {
                *m -= 1;
                true
            }
            Some(_) => {
                self.entries.remove(node);
                true
            }
            None => false,
        }
    }

    pub fn multiplicity(&self, node: &Node) -> usize {
        self.entries.get(node).copied().unwrap_or(0)
    }

    pub fn contains(&self, node: &Node) -> bool {
        self.entries.contains_key(node)
    }

    /// Total size, counting multiplicity.
    pub fn len(&self) -> usize {
        self.entries.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct nodes with their multiplicities, in node order.
    pub fn iter(&self) -> impl Iterator<Item = (&Node, usize)> {
        self.entries.iter().map(|(n, &m)| (n, m))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.entries.keys()
    }

    /// Multiset sum.
    pub fn union(&self, other: &Word) -> Word {
        let mut out = self.clone();
        for (n, m) in other.iter() {
            out.insert_n(n.clone(), m);
        }
        out
    }

    /// Removes common entries (with multiplicity) from both words.
    pub fn strip_common(&self, other: &Word) -> (Word, Word) {
        let mut a = self.clone();
        let mut b = other.clone();
        for (n, m) in self.iter() {
            let k = m.min(other.multiplicity(n));
            for _ in 0..k {
                a.remove_one(n);
                b.remove_one(n);
            }
        }
        (a, b)
    }

    pub fn max_depth(&self) -> usize {
        self.nodes().map(Node::depth).max().unwrap_or(0)
    }
}

impl FromIterator<Node> for Word {
    fn from_iter<I: IntoIterator<Item = Node>>(iter: I) -> Self {
        let mut w = Word::new();
        for n in iter {
            w.insert(n);
        }
        w
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        let mut first = true;
        for (n, m) in self.iter() {
            for _ in 0..m {
                if !first {
                    write!(f, ", ")?;
                }
                first = false;
                write!(f, "{n}")?;
            }
        }
        write!(f, "}}")
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl Serialize for Word {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(
            self.iter()
                .flat_map(|(n, m)| std::iter::repeat_n(n, m)),
        )
    }
}

/// No sibling pair `(eta*a, phi*0), (eta*a, phi*1)` occurs in `w`.
pub fn is_reduced(w: &Word) -> bool {
    w.nodes()
        .filter(|n| n.depth() >= 2 && n.last_bit() == 0)
        .all(|n| !w.contains(&n.flip_last()))
}

/// Equality as multisets.
pub fn equivalent(p: &Word, q: &Word) -> bool {
    p == q
}

/// Collapses sibling pairs into their parent until the word is reduced.
///
/// Pairs are collapsed deepest level first; a collapse at depth `d` only
/// creates entries at depth `d - 1`, so one sweep per level suffices.
pub fn reduce_canonical(w: &Word) -> Word {
    let mut out = w.clone();
    let max_depth = w.max_depth();
    for d in (2..=max_depth).rev() {
        let zeros: Vec<Node> = out
            .nodes()
            .filter(|n| n.depth() == d && n.last_bit() == 0)
            .cloned()
            .collect();
        for z in zeros {
            let sib = z.flip_last();
            let k = out.multiplicity(&z).min(out.multiplicity(&sib));
            if k == 0 {
                continue;
            }
            for _ in 0..k {
                out.remove_one(&z);
                out.remove_one(&sib);
            }
            out.insert_n(z.parent().expect("depth >= 2"), k);
        }
    }
    out
}

/// Every word obtained from `w` by collapsing exactly one sibling pair.
pub fn reduction_steps(w: &Word) -> Vec<Word> {
    w.nodes()
        .filter(|n| n.depth() >= 2 && n.last_bit() == 0 && w.contains(&n.flip_last()))
        .map(|z| {
            let mut next = w.clone();
            next.remove_one(z);
            next.remove_one(&z.flip_last());
            next.insert(z.parent().expect("depth >= 2"));
            next
        })
        .collect()
}

/// Replaces one occurrence of `node` by its two children under `alpha`.
pub fn expand_once(w: &Word, node: &Node, alpha: usize, cfg: &TruncationConfig) -> Result<Word> {
    if !w.contains(node) {
        return Err(Error::domain(format!("{node} does not occur in {w}")));
    }
    let (c0, c1) = children(node, alpha, cfg)?;
    let mut out = w.clone();
    out.remove_one(node);
    out.insert(c0);
    out.insert(c1);
    Ok(out)
}

/// All normal forms reachable from `w` over every order of reduction steps.
///
/// Explores the full reduction graph with memoization; the rewriting is
/// confluent exactly when every word yields a single normal form.
pub fn normal_forms(w: &Word) -> BTreeSet<Word> {
    fn go(w: &Word, memo: &mut HashMap<Word, BTreeSet<Word>>) -> BTreeSet<Word> {
        if let Some(r) = memo.get(w) {
            return r.clone();
        }
        let steps = reduction_steps(w);
        let result = if steps.is_empty() {
            BTreeSet::from([w.clone()])
        } else {
            let mut acc = BTreeSet::new();
            for s in &steps {
                debug_assert_eq!(s.len() + 1, w.len());
                acc.extend(go(s, memo));
            }
            acc
        };
        memo.insert(w.clone(), result.clone());
        result
    }
    go(w, &mut HashMap::new())
}

/// All multisets of size `0..=max_size` over `nodes` (combinations with repetition).
pub fn multisets(nodes: &[Node], max_size: usize) -> Vec<Word> {
    fn go(nodes: &[Node], start: usize, left: usize, cur: &mut Word, out: &mut Vec<Word>) {
        out.push(cur.clone());
        if left == 0 {
            return;
        }
        for i in start..nodes.len() {
            cur.insert(nodes[i].clone());
            go(nodes, i, left - 1, cur, out);
            cur.remove_one(&nodes[i]);
        }
    }
    let mut out = Vec::new();
    go(nodes, 0, max_size, &mut Word::new(), &mut out);
    out
}

/// Number of multisets of size `0..=k` over `n` items: `C(n + k, k)`.
pub fn multiset_count(n: u128, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc.saturating_mul(n + i) / i;
    }
    acc
}

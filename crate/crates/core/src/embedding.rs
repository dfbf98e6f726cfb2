//! The map from ideals of `C` to generated monoids, and the checks that it
//! is injective and preserves non-empty joins and meets.
//!
//! `F(I)` is never materialized. It is represented by its membership
//! predicate (a word lies in `F(I)` iff every entry of its canonical form has
//! its label in `I`) and by bounded fragments: canonical forms of all words
//! of bounded size over `S(I)` inside a finite window of the tree.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::enumeration::Labeling;
use crate::error::{Error, Result};
use crate::ice::{random_node, Engine, Multilinear, PolyCache};
use crate::lattice::{ideal_join, ideal_meet, Elem, Ideal};
use crate::report::CheckReport;
use crate::tree::{
    expand_once, is_reduced, multiset_count, multisets, reduce_canonical, reduction_steps, Node,
    TruncationConfig, Word,
};

/// `F(I)` for one ideal, given intensionally by `S(I) = { node : label(node) in I }`.
#[derive(Debug, Clone)]
pub struct IndexedMonoid<'a> {
    pub labeling: &'a Labeling,
    pub ideal: Ideal,
}

impl<'a> IndexedMonoid<'a> {
    pub fn new(labeling: &'a Labeling, ideal: Ideal) -> Self {
        IndexedMonoid { labeling, ideal }
    }

    pub fn in_s(&self, node: &Node) -> Result<bool> {
        Ok(self.ideal.contains(self.labeling.label(node)?))
    }

    /// Whether `t_w` lies in `F(I)`.
    pub fn member(&self, w: &Word) -> Result<bool> {
        for n in reduce_canonical(w).nodes() {
            if !self.in_s(n)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Membership by search: explore every word reachable from `w` by
    /// collapsing sibling pairs and expanding entries (words of size at most
    /// `|w| + slack`, inside `cfg`), accepting if one has all entries in `S(I)`.
    pub fn member_by_search(
        &self,
        w: &Word,
        cfg: &TruncationConfig,
        slack: usize,
        budget: usize,
    ) -> Result<bool> {
        let max_size = w.len() + slack;
        let mut seen = HashSet::from([w.clone()]);
        let mut queue = VecDeque::from([w.clone()]);
        while let Some(cur) = queue.pop_front() {
            let mut all_in = true;
            for n in cur.nodes() {
                if !self.in_s(n)? {
                    all_in = false;
                    break;
                }
            }
            if all_in {
                return Ok(true);
            }
            let mut next = reduction_steps(&cur);
            if cur.len() < max_size {
                for n in cur.nodes() {
                    if n.depth() >= cfg.depth {
                        continue;
                    }
                    for alpha in 0..cfg.kappa {
                        next.push(expand_once(&cur, n, alpha, cfg)?);
                    }
                }
            }
            for s in next {
                if seen.insert(s.clone()) {
                    if seen.len() > budget {
                        return Err(Error::Resource {
                            what: "membership search".into(),
                            estimate: seen.len() as u128,
                            budget: budget as u128,
                        });
                    }
                    queue.push_back(s);
                }
            }
        }
        Ok(false)
    }
}

/// Writes `node` as a word over the ideals of `cover`, following the join
/// induction: with `c_1, .., c_n` the cover elements, split
/// `(c_1 v .. v c_{n-1}, c_n)` at the first branch realizing that pair,
/// recurse on the 0-child, and stop at the 1-child.
pub fn factorize(
    labeling: &Labeling,
    cfg: &TruncationConfig,
    node: &Node,
    cover: &[(Elem, Ideal)],
) -> Result<Word> {
    let l = labeling.lattice();
    if cover.is_empty() {
        return Err(Error::domain("empty cover"));
    }
    for (c, i) in cover {
        if !i.contains(*c) {
            return Err(Error::domain(format!("{} is not in its ideal", l.name(*c))));
        }
    }
    let label = labeling.label(node)?;
    let elems: Vec<Elem> = cover.iter().map(|(c, _)| *c).collect();
    let top = l.join_all(&elems).expect("cover is non-empty");
    if !l.leq(label, top) {
        return Err(Error::domain(format!(
            "label {} of {node} is not below the cover join {}",
            l.name(label),
            l.name(top)
        )));
    }
    if node.depth() + cover.len() - 1 > cfg.depth {
        return Err(Error::Truncation {
            node: node.clone(),
            max_depth: cfg.depth,
        });
    }
    factor_rec(labeling, node, label, cover)
}

fn factor_rec(labeling: &Labeling, node: &Node, label: Elem, cover: &[(Elem, Ideal)]) -> Result<Word> {
    let l = labeling.lattice();
    let n = cover.len();
    if n == 1 {
        debug_assert!(cover[0].1.contains(label));
        return Ok(Word::singleton(node.clone()));
    }
    let head: Vec<Elem> = cover[..n - 1].iter().map(|(c, _)| *c).collect();
    let d = l.join_all(&head).expect("n >= 2");
    let d2 = cover[n - 1].0;
    let alpha = labeling
        .pairs(label)
        .iter()
        .position(|&p| p == (d, d2))
        .filter(|&a| a < labeling.kappa())
        .ok_or_else(|| {
            Error::Enumeration(format!(
                "no branch below {node} (label {}) realizes ({}, {})",
                l.name(label),
                l.name(d),
                l.name(d2)
            ))
        })?;
    let (c0, c1) = node.children_unchecked(alpha as u32);
    let mut w = factor_rec(labeling, &c0, d, &cover[..n - 1])?;
    w.insert(c1);
    Ok(w)
}

/// A finite, prefix-closed part of the tree: depth at most `depth`, roots
/// under branches below `root_branches`, deeper levels below `branches`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeWindow {
    pub depth: usize,
    pub root_branches: usize,
    pub branches: usize,
}

impl NodeWindow {
    pub fn nodes(&self) -> Vec<Node> {
        let mut out = Vec::new();
        let mut layer: Vec<Node> = (0..self.root_branches as u32)
            .flat_map(|a| [Node::root(a, 0), Node::root(a, 1)])
            .collect();
        for d in 1..=self.depth {
            out.extend(layer.iter().cloned());
            if d == self.depth {
                break;
            }
            layer = layer
                .iter()
                .flat_map(|n| {
                    (0..self.branches as u32).flat_map(move |a| {
                        let (c0, c1) = n.children_unchecked(a);
                        [c0, c1]
                    })
                })
                .collect();
        }
        out
    }

    pub fn node_count(&self) -> u128 {
        let mut layer = 2 * self.root_branches as u128;
        let mut total = 0;
        for _ in 0..self.depth {
            total += layer;
            layer = layer.saturating_mul(2 * self.branches as u128);
        }
        total
    }

    /// The widest depth-2 window whose full fragment stays within `budget`
    /// words, with all `|C|` root labels present.
    pub fn fit(labeling: &Labeling, depth: usize, size_bound: usize, budget: u128) -> NodeWindow {
        let roots = labeling.kappa().min(labeling.lattice().compacts().len());
        let depth = depth.clamp(1, 2);
        let mut best = NodeWindow {
            depth,
            root_branches: roots,
            branches: 1,
        };
        if depth == 1 {
            return best;
        }
        for b in 1..=labeling.kappa() {
            let w = NodeWindow {
                depth,
                root_branches: roots,
                branches: b,
            };
            if multiset_count(w.node_count(), size_bound) > budget {
                break;
            }
            best = w;
        }
        best
    }
}

/// Canonical forms of all words of size `<= size_bound` over `S(I)` inside
/// `window`; always contains the identity.
pub fn monoid_enumerate(
    m: &IndexedMonoid<'_>,
    window: &NodeWindow,
    size_bound: usize,
    budget: u128,
) -> Result<BTreeSet<Word>> {
    let mut gens = Vec::new();
    for n in window.nodes() {
        if m.in_s(&n)? {
            gens.push(n);
        }
    }
    enumerate_over(&gens, size_bound, budget)
}

fn enumerate_over(gens: &[Node], size_bound: usize, budget: u128) -> Result<BTreeSet<Word>> {
    let estimate = multiset_count(gens.len() as u128, size_bound);
    if estimate > budget {
        return Err(Error::Resource {
            what: format!("monoid fragment over {} generators, size {size_bound}", gens.len()),
            estimate,
            budget,
        });
    }
    Ok(multisets(gens, size_bound)
        .iter()
        .map(reduce_canonical)
        .collect())
}

/// A bounded fragment with the semantic value of each element.
#[derive(Debug)]
pub struct Fragment {
    pub words: BTreeSet<Word>,
    pub values: HashMap<Multilinear, Word>,
}

/// Default budget on the number of words in one fragment enumeration.
pub const FRAGMENT_BUDGET: u128 = 250_000;

/// Verification context: a labeling, the engine deciding equality of
/// composites, and the window used for bounded fragments.
pub struct Embedding<'a, E: Engine + ?Sized> {
    pub labeling: &'a Labeling,
    pub engine: &'a E,
    pub window: NodeWindow,
    pub size_bound: usize,
    pub budget: u128,
    fragments: Mutex<HashMap<Ideal, Arc<Fragment>>>,
}

impl<'a, E: Engine + ?Sized> Embedding<'a, E> {
    pub fn new(
        labeling: &'a Labeling,
        engine: &'a E,
        window: NodeWindow,
        size_bound: usize,
        budget: u128,
    ) -> Result<Self> {
        let cfg = engine.truncation();
        if cfg.kappa != labeling.kappa() {
            return Err(Error::Config(format!(
                "engine kappa {} differs from labeling kappa {}",
                cfg.kappa,
                labeling.kappa()
            )));
        }
        if window.depth > cfg.depth || window.branches > cfg.kappa || window.root_branches > cfg.kappa {
            return Err(Error::Config("fragment window exceeds the truncation".into()));
        }
        Ok(Embedding {
            labeling,
            engine,
            window,
            size_bound,
            budget,
            fragments: Mutex::new(HashMap::new()),
        })
    }

    pub fn monoid(&self, ideal: &Ideal) -> IndexedMonoid<'a> {
        IndexedMonoid::new(self.labeling, ideal.clone())
    }

    pub fn fragment(&self, ideal: &Ideal) -> Result<Arc<Fragment>> {
        if let Some(f) = self.fragments.lock().expect("fragment cache").get(ideal) {
            return Ok(f.clone());
        }
        let words = monoid_enumerate(&self.monoid(ideal), &self.window, self.size_bound, self.budget)?;
        let mut cache = PolyCache::default();
        let mut values = HashMap::with_capacity(words.len());
        for w in &words {
            values.insert(cache.word(self.engine, w)?, w.clone());
        }
        let f = Arc::new(Fragment { words, values });
        self.fragments
            .lock()
            .expect("fragment cache")
            .insert(ideal.clone(), f.clone());
        Ok(f)
    }

    /// Smallest cover of `label` by maxima of the family's ideals.
    fn cover(&self, label: Elem, family: &[Ideal]) -> Option<Vec<(Elem, Ideal)>> {
        let l = self.labeling.lattice();
        let tops: Vec<(Elem, Ideal)> = family
            .iter()
            .filter_map(|i| i.maximum(l).map(|m| (m, i.clone())))
            .collect();
        for size in 1..=tops.len() {
            if let Some(c) = subsets(tops.len(), size).into_iter().find(|s| {
                let elems: Vec<Elem> = s.iter().map(|&k| tops[k].0).collect();
                l.leq(label, l.join_all(&elems).expect("non-empty"))
            }) {
                return Some(c.into_iter().map(|k| tops[k].clone()).collect());
            }
        }
        None
    }

    /// `F(I_1) v .. v F(I_n) = F(I_1 v .. v I_n)` on nodes within `depth_budget`.
    ///
    /// The inclusion of each `F(I_u)` is structural. For the reverse, every
    /// node labeled in the join ideal is factorized over the family and the
    /// factorization is checked to denote the same composite.
    pub fn verify_join_preservation(&self, family: &[Ideal], depth_budget: usize) -> CheckReport {
        let l = self.labeling.lattice();
        let c = l.compacts();
        let mut r = CheckReport::new("embedding.join");
        let join = match ideal_join(&c, family) {
            Ok(j) => j,
            Err(e) => {
                r.fail(json!({"error": e.to_string()}));
                return r;
            }
        };
        for i in family {
            r.count("structural_inclusions", 1);
            if !i.is_subset(&join) {
                r.fail(json!({"inclusion": i.names(l), "join": join.names(l)}));
            }
        }
        let cfg = *self.engine.truncation();
        let depth = depth_budget.min(cfg.depth);
        let mut covers: HashMap<Elem, Option<Vec<(Elem, Ideal)>>> = HashMap::new();
        let mut failures = Vec::new();
        self.labeling.walk(depth, |node, label| {
            if !join.contains(label) {
                return;
            }
            r.count("nodes_in_join", 1);
            if family.iter().any(|i| i.contains(label)) {
                r.count("direct", 1);
                return;
            }
            let cover = covers
                .entry(label)
                .or_insert_with(|| self.cover(label, family))
                .clone();
            let Some(cover) = cover else {
                failures.push(json!({"node": node, "label": l.name(label), "error": "no cover"}));
                return;
            };
            if node.depth() + cover.len() - 1 > depth {
                r.count("skipped_for_depth", 1);
                return;
            }
            match factorize(self.labeling, &cfg, node, &cover) {
                Ok(w) => {
                    r.count("factorized", 1);
                    let entries_ok = w.nodes().all(|n| {
                        self.labeling
                            .label(n)
                            .map(|x| family.iter().any(|i| i.contains(x)))
                            .unwrap_or(false)
                    });
                    let equal = self.engine.equal_words(&Word::singleton(node.clone()), &w);
                    if !entries_ok || !matches!(equal, Ok(true)) {
                        failures.push(json!({"node": node, "label": l.name(label), "word": w,
                            "entries_in_family": entries_ok, "equal": equal.ok()}));
                    }
                }
                Err(e) => failures.push(json!({"node": node, "error": e.to_string()})),
            }
        });
        for f in failures {
            r.fail(f);
        }
        if r.get("skipped_for_depth") > 0 {
            r.note(format!("nodes too deep to factorize within depth {depth} are skipped"));
        }
        r
    }

    /// `F(I_1) n .. n F(I_n) = F(I_1 n .. n I_n)` on bounded fragments, both
    /// as sets of canonical forms and as sets of composites, plus seeded
    /// membership agreement on random words over the full truncation.
    pub fn verify_meet_preservation(&self, family: &[Ideal], seed: u64, trials: usize) -> CheckReport {
        let l = self.labeling.lattice();
        let mut r = CheckReport::new("embedding.meet");
        let meet = match ideal_meet(family) {
            Ok(m) => m,
            Err(e) => {
                r.fail(json!({"error": e.to_string()}));
                return r;
            }
        };
        let frags = match family
            .iter()
            .map(|i| self.fragment(i))
            .collect::<Result<Vec<_>>>()
            .and_then(|v| Ok((v, self.fragment(&meet)?)))
        {
            Ok(f) => f,
            Err(e) => {
                r.fail(json!({"error": e.to_string()}));
                return r;
            }
        };
        let (parts, whole) = frags;
        let mut inter: BTreeSet<&Word> = parts[0].words.iter().collect();
        for p in &parts[1..] {
            inter.retain(|w| p.words.contains(*w));
        }
        r.set("fragment_meet", whole.words.len() as u64);
        r.set("fragment_intersection", inter.len() as u64);
        if inter != whole.words.iter().collect() {
            let extra: Vec<&&Word> = inter.iter().filter(|w| !whole.words.contains(**w)).take(4).collect();
            r.fail(json!({"level": "canonical", "meet": meet.names(l), "extra": extra}));
        }
        let mut sem: HashSet<&Multilinear> = parts[0].values.keys().collect();
        for p in &parts[1..] {
            sem.retain(|v| p.values.contains_key(*v));
        }
        r.set("semantic_intersection", sem.len() as u64);
        let missing: BTreeSet<Vec<&Word>> = sem
            .into_iter()
            .filter(|v| !whole.values.contains_key(*v))
            .map(|v| parts.iter().map(|p| &p.values[v]).collect())
            .collect();
        for reps in missing {
            r.fail(json!({"level": "composite", "meet": meet.names(l), "representatives": reps}));
        }

        let cfg = *self.engine.truncation();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        r.set("seed", seed);
        let meet_monoid = self.monoid(&meet);
        let monoids: Vec<IndexedMonoid<'_>> = family.iter().map(|i| self.monoid(i)).collect();
        for _ in 0..trials {
            let u = rng.gen_range(0..family.len());
            let w = random_word_in(&mut rng, &monoids[u], &cfg, self.size_bound);
            let moved = random_moves(&mut rng, &w, &cfg, 3);
            r.count("random_words", 1);
            let lhs = meet_monoid.member(&w);
            let rhs: Result<Vec<bool>> = monoids.iter().map(|m| m.member(&w)).collect();
            let lhs_moved = meet_monoid.member(&moved);
            match (lhs, rhs, lhs_moved) {
                (Ok(a), Ok(bs), Ok(a2)) => {
                    if a != bs.iter().all(|&b| b) || a != a2 {
                        r.fail(json!({"word": w, "moved": moved, "in_meet": a, "in_factors": bs}));
                    }
                }
                (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => {
                    r.fail(json!({"word": w, "error": e.to_string()}))
                }
            }
        }
        r
    }

    /// Distinct ideals give distinct monoids, separated by a generator.
    pub fn verify_injectivity(&self, ideals: &[Ideal]) -> CheckReport {
        let l = self.labeling.lattice();
        let mut r = CheckReport::new("embedding.injectivity");
        for (x, i) in ideals.iter().enumerate() {
            for j in &ideals[x + 1..] {
                r.count("pairs", 1);
                let (big, small) = if i.members().difference(j.members()).next().is_some() {
                    (i, j)
                } else {
                    (j, i)
                };
                let witness = (0..self.labeling.kappa() as u32)
                    .map(|a| Node::root(a, 0))
                    .find(|n| {
                        let c = self.labeling.label(n).expect("roots are in range");
                        big.contains(c) && !small.contains(c)
                    });
                let Some(node) = witness else {
                    r.fail(json!({"i": i.names(l), "j": j.names(l), "error": "no separating root"}));
                    continue;
                };
                let w = Word::singleton(node.clone());
                let inside = self.monoid(big).member(&w);
                let outside = self.monoid(small).member(&w);
                let fragments_differ = match (self.fragment(big), self.fragment(small)) {
                    (Ok(a), Ok(b)) => a.words != b.words,
                    _ => false,
                };
                if !(matches!(inside, Ok(true)) && matches!(outside, Ok(false)) && fragments_differ) {
                    r.fail(json!({"i": i.names(l), "j": j.names(l), "node": node}));
                } else {
                    r.count("separated", 1);
                }
            }
        }
        r
    }

    /// The empty ideal maps to the trivial monoid.
    pub fn verify_bottom(&self) -> CheckReport {
        let m = self.monoid(&Ideal::empty());
        verify_bottom_with(|n| m.in_s(n).unwrap_or(true), &self.window, self.size_bound, self.budget)
    }

    /// No non-identity element of a fragment has an inverse in it.
    ///
    /// Composites have non-negative counting vectors, so `m m' = id` forces
    /// both vectors to vanish; each non-identity element is checked to have a
    /// non-zero vector, and the first `pair_cap` elements are also checked
    /// pairwise against each other.
    pub fn verify_no_inverses(&self, ideals: &[Ideal], pair_cap: usize) -> CheckReport {
        let mut r = CheckReport::new("embedding.no_inverses");
        let mut cache = PolyCache::default();
        for i in ideals {
            let frag = match self.fragment(i) {
                Ok(f) => f,
                Err(e) => {
                    r.fail(json!({"error": e.to_string()}));
                    continue;
                }
            };
            let nonid: Vec<&Word> = frag.words.iter().filter(|w| !w.is_empty()).collect();
            for w in &nonid {
                r.count("elements", 1);
                match cache.word(self.engine, w) {
                    Ok(v) if !v.is_zero() => {}
                    _ => r.fail(json!({"element": w, "error": "acts as the identity"})),
                }
            }
            for a in nonid.iter().take(pair_cap) {
                for b in nonid.iter().take(pair_cap) {
                    r.count("pairs", 1);
                    match cache.word(self.engine, &a.union(b)) {
                        Ok(p) if !p.is_zero() => {}
                        _ => r.fail(json!({"element": a, "inverse": b})),
                    }
                }
            }
        }
        r
    }
}

/// Bottom check against an arbitrary `S(empty)` predicate.
pub fn verify_bottom_with(
    in_s: impl Fn(&Node) -> bool,
    window: &NodeWindow,
    size_bound: usize,
    budget: u128,
) -> CheckReport {
    let mut r = CheckReport::new("embedding.bottom");
    let gens: Vec<Node> = window.nodes().into_iter().filter(|n| in_s(n)).collect();
    r.set("generators", gens.len() as u64);
    match enumerate_over(&gens, size_bound, budget) {
        Ok(frag) => {
            r.set("fragment", frag.len() as u64);
            if frag != BTreeSet::from([Word::new()]) {
                r.fail(json!({"fragment_size": frag.len(), "sample": frag.iter().nth(1)}));
            }
        }
        Err(e) => r.fail(json!({"error": e.to_string()})),
    }
    r
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// A random word over `S(I)` by rejection sampling; empty when `S(I)` is.
pub fn random_word_in<R: Rng>(
    rng: &mut R,
    m: &IndexedMonoid<'_>,
    cfg: &TruncationConfig,
    max_size: usize,
) -> Word {
    if m.ideal.is_empty() {
        return Word::new();
    }
    let size = rng.gen_range(0..=max_size);
    let mut w = Word::new();
    for _ in 0..size {
        for _ in 0..1000 {
            let n = random_node(rng, cfg, cfg.depth);
            if m.in_s(&n).unwrap_or(false) {
                w.insert(n);
                break;
            }
        }
    }
    w
}

/// Applies `steps` random value-preserving moves (collapse or expand).
pub fn random_moves<R: Rng>(rng: &mut R, w: &Word, cfg: &TruncationConfig, steps: usize) -> Word {
    let mut cur = w.clone();
    for _ in 0..steps {
        let collapses = reduction_steps(&cur);
        if !collapses.is_empty() && rng.gen_bool(0.5) {
            cur = collapses[rng.gen_range(0..collapses.len())].clone();
            continue;
        }
        let expandable: Vec<Node> = cur.nodes().filter(|n| n.depth() < cfg.depth).cloned().collect();
        if expandable.is_empty() {
            continue;
        }
        let n = &expandable[rng.gen_range(0..expandable.len())];
        let alpha = rng.gen_range(0..cfg.kappa);
        cur = expand_once(&cur, n, alpha, cfg).expect("node present and expandable");
    }
    cur
}

/// Canonical forms of a fragment are reduced.
pub fn all_reduced(words: &BTreeSet<Word>) -> bool {
    words.iter().all(is_reduced)
}

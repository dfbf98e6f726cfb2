//! Labeling the index tree with elements of `C`.
//!
//! The 0-roots run cyclically through `C`, so every element labels some
//! root. Below a node labeled `c`, branch `alpha` carries the decomposition
//! pair `pairs(c)[alpha mod |pairs(c)|]`, so with `kappa >= |pairs(c)|`
//! every pair `(d, d')` with `c <= d v d'` is realized under some branch.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use crate::error::{Error, Result};
use crate::lattice::{Elem, FiniteLattice, Ideal};
use crate::report::CheckReport;
use crate::tree::Node;

/// All `(d, d')` in `C x C` with `c <= d v d'`: `(c, c)` first, the rest
/// lexicographically by element name.
pub fn decomposition_pairs(l: &FiniteLattice, c: Elem) -> Vec<(Elem, Elem)> {
    let carrier = l.compacts().carrier();
    let mut rest: Vec<(Elem, Elem)> = carrier
        .iter()
        .flat_map(|&d| carrier.iter().map(move |&e| (d, e)))
        .filter(|&(d, e)| (d, e) != (c, c) && l.leq(c, l.join(d, e)))
        .collect();
    rest.sort_by(|a, b| (l.name(a.0), l.name(a.1)).cmp(&(l.name(b.0), l.name(b.1))));
    let mut out = vec![(c, c)];
    out.extend(rest);
    out
}

/// The branching needed for properties (1) and (3) to hold on the truncation.
pub fn required_branching(l: &FiniteLattice) -> usize {
    let c = l.compacts();
    let widest = c
        .carrier()
        .iter()
        .map(|&x| decomposition_pairs(l, x).len())
        .max()
        .unwrap_or(0);
    c.len().max(widest)
}

#[derive(Debug, Clone)]
pub struct Labeling {
    lattice: FiniteLattice,
    kappa: usize,
    roots: Vec<Elem>,
    pair_tables: BTreeMap<Elem, Vec<(Elem, Elem)>>,
}

impl Labeling {
    /// Fails with a configuration error when `kappa` is below the required branching.
    pub fn new(lattice: FiniteLattice, kappa: usize) -> Result<Self> {
        let need = required_branching(&lattice);
        if kappa < need {
            return Err(Error::Config(format!(
                "kappa={kappa} is below the required branching {need}"
            )));
        }
        Self::new_unchecked(lattice, kappa)
    }

    /// Builds the labeling for any `kappa >= 1`; properties may then fail.
    pub fn new_unchecked(lattice: FiniteLattice, kappa: usize) -> Result<Self> {
        let carrier = lattice.compacts().carrier().to_vec();
        if carrier.is_empty() {
            return Err(Error::Config(
                "the lattice has a single element; C is empty".into(),
            ));
        }
        if kappa == 0 {
            return Err(Error::Config("kappa must be positive".into()));
        }
        let roots = (0..kappa).map(|a| carrier[a % carrier.len()]).collect();
        let pair_tables = carrier
            .iter()
            .map(|&c| (c, decomposition_pairs(&lattice, c)))
            .collect();
        Ok(Labeling {
            lattice,
            kappa,
            roots,
            pair_tables,
        })
    }

    pub fn lattice(&self) -> &FiniteLattice {
        &self.lattice
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn pairs(&self, c: Elem) -> &[(Elem, Elem)] {
        &self.pair_tables[&c]
    }

    /// Label of the root `(<alpha>, <bit>)`; both bits carry the same label.
    pub fn root_label(&self, alpha: u32) -> Elem {
        self.roots[alpha as usize]
    }

    /// Label of the `bit`-child under `alpha` of a node labeled `parent`.
    pub fn child_label(&self, parent: Elem, alpha: u32, bit: u8) -> Elem {
        let table = &self.pair_tables[&parent];
        let (d, e) = table[alpha as usize % table.len()];
        if bit == 0 {
            d
        } else {
            e
        }
    }

    pub fn label(&self, node: &Node) -> Result<Elem> {
        if let Some(&a) = node.eta().iter().find(|&&a| a as usize >= self.kappa) {
            return Err(Error::domain(format!(
                "branch index {a} in {node} is not below kappa={}",
                self.kappa
            )));
        }
        let mut c = self.root_label(node.eta()[0]);
        for i in 1..node.depth() {
            c = self.child_label(c, node.eta()[i], node.phi()[i]);
        }
        Ok(c)
    }

    /// Depth-first walk over all nodes of depth `1..=max_depth` with their labels.
    pub fn walk(&self, max_depth: usize, mut f: impl FnMut(&Node, Elem)) {
        fn go(l: &Labeling, node: &Node, c: Elem, max_depth: usize, f: &mut dyn FnMut(&Node, Elem)) {
            f(node, c);
            if node.depth() >= max_depth {
                return;
            }
            for alpha in 0..l.kappa as u32 {
                for bit in 0..2u8 {
                    go(l, &node.child_unchecked(alpha, bit), l.child_label(c, alpha, bit), max_depth, f);
                }
            }
        }
        if max_depth == 0 {
            return;
        }
        for alpha in 0..self.kappa as u32 {
            for bit in 0..2u8 {
                go(self, &Node::root(alpha, bit), self.root_label(alpha), max_depth, &mut f);
            }
        }
    }

    /// Number of `(interior node, alpha)` checks for depth bound `n`.
    pub fn interior_checks(&self, n: usize) -> u128 {
        let per_level = 2 * self.kappa as u128;
        (1..n).map(|d| per_level.saturating_pow(d as u32)).sum::<u128>() * self.kappa as u128
    }
}

/// Budget on `(interior node, alpha)` checks before the depth is restricted.
pub const ENUMERATION_BUDGET: u128 = 4_000_000;

/// Checks the three enumeration properties on every interior node of depth
/// below `depth_bound`. Restricts the depth to 2 when the exhaustive walk
/// exceeds the budget, and records that in the report.
pub fn verify_enumeration(labeling: &Labeling, depth_bound: usize) -> CheckReport {
    let l = labeling.lattice();
    let mut r = CheckReport::new("enumeration.properties");
    let mut depth = depth_bound;
    if labeling.interior_checks(depth) > ENUMERATION_BUDGET && depth > 2 {
        r.note(format!(
            "depth restricted from {depth_bound} to 2: {} interior checks exceed the budget {}",
            labeling.interior_checks(depth_bound),
            ENUMERATION_BUDGET
        ));
        depth = 2;
    }
    r.set("kappa", labeling.kappa() as u64);
    r.set("depth", depth as u64);

    // (1): the 0-roots cover C
    let covered: BTreeSet<Elem> = (0..labeling.kappa() as u32)
        .map(|a| labeling.root_label(a))
        .collect();
    let carrier: BTreeSet<Elem> = l.compacts().carrier().iter().copied().collect();
    r.set("property1_roots", labeling.kappa() as u64);
    for &c in carrier.difference(&covered) {
        r.fail(json!({"property": 1, "missing": l.name(c)}));
    }

    let mut failures = Vec::new();
    let mut interior = 0u64;
    let mut checks2 = 0u64;
    labeling.walk(depth.saturating_sub(1), |node, c| {
        interior += 1;
        let mut realized = BTreeSet::new();
        for alpha in 0..labeling.kappa() as u32 {
            let d = labeling.child_label(c, alpha, 0);
            let e = labeling.child_label(c, alpha, 1);
            checks2 += 1;
            if !l.leq(c, l.join(d, e)) {
                failures.push(json!({"property": 2, "node": node, "alpha": alpha,
                    "label": l.name(c), "children": [l.name(d), l.name(e)]}));
            }
            realized.insert((d, e));
        }
        for &d in l.compacts().carrier() {
            for &e in l.compacts().carrier() {
                if l.leq(c, l.join(d, e)) && !realized.contains(&(d, e)) {
                    failures.push(json!({"property": 3, "node": node, "label": l.name(c),
                        "unrealized": [l.name(d), l.name(e)]}));
                }
            }
        }
    });
    r.set("interior_nodes", interior);
    r.set("property2_checks", checks2);
    for w in failures {
        r.fail(w);
    }
    r
}

/// For every ideal and every interior node: children labels in the ideal
/// force the parent label into it.
pub fn verify_parent_closure(labeling: &Labeling, ideals: &[Ideal], depth_bound: usize) -> CheckReport {
    let l = labeling.lattice();
    let mut r = CheckReport::new("enumeration.parent_closure");
    let mut triples = BTreeSet::new();
    let depth = if labeling.interior_checks(depth_bound) > ENUMERATION_BUDGET {
        2.min(depth_bound)
    } else {
        depth_bound
    };
    labeling.walk(depth.saturating_sub(1), |_, c| {
        for alpha in 0..labeling.kappa() as u32 {
            triples.insert((c, labeling.child_label(c, alpha, 0), labeling.child_label(c, alpha, 1)));
        }
    });
    r.set("label_triples", triples.len() as u64);
    for i in ideals {
        for &(c, d, e) in &triples {
            r.count("checks", 1);
            if i.contains(d) && i.contains(e) && !i.contains(c) {
                r.fail(json!({"ideal": i.names(l), "parent": l.name(c), "children": [l.name(d), l.name(e)]}));
            }
        }
    }
    r
}

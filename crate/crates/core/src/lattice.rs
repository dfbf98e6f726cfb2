//! Finite bounded lattices, the join-semilattice of their non-bottom
//! elements, and its ideals.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::report::CheckReport;

/// Index of an element in its lattice.
pub type Elem = usize;

/// The JSON lattice file: element names plus either the full order or its
/// cover relation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeDescription {
    pub elements: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leq: Option<Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covers: Option<Vec<(String, String)>>,
}

impl LatticeDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Description(e.to_string()))
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct FiniteLattice {
    names: Vec<String>,
    leq: Vec<Vec<bool>>,
    join: Vec<Vec<Elem>>,
    meet: Vec<Vec<Elem>>,
    bottom: Elem,
    top: Elem,
    carrier: Vec<Elem>,
}

impl fmt::Debug for FiniteLattice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FiniteLattice")
            .field("elements", &self.names)
            .field("bottom", &self.names[self.bottom])
            .field("top", &self.names[self.top])
            .finish()
    }
}

/// Validates a description and builds the lattice.
pub fn load_lattice(desc: &LatticeDescription) -> Result<FiniteLattice> {
    let names = desc.elements.clone();
    if names.is_empty() {
        return Err(Error::Description("a lattice needs at least one element".into()));
    }
    let mut seen = BTreeSet::new();
    for name in &names {
        if name.trim().is_empty() {
            return Err(Error::Description("element names must be non-empty".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(Error::Description(format!("duplicate element `{name}`")));
        }
    }
    let index = |name: &str| -> Result<Elem> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Description(format!("unknown element `{name}`")))
    };
    let (pairs, closing) = match (&desc.leq, &desc.covers) {
        (Some(p), None) => (p, false),
        (None, Some(p)) => (p, true),
        _ => {
            return Err(Error::Description(
                "exactly one of `leq` or `covers` must be given".into(),
            ))
        }
    };

    let n = names.len();
    let mut leq = vec![vec![false; n]; n];
    for (i, row) in leq.iter_mut().enumerate() {
        row[i] = true;
    }
    for (x, y) in pairs {
        leq[index(x)?][index(y)?] = true;
    }
    if closing {
        for k in 0..n {
            for i in 0..n {
                if leq[i][k] {
                    let row = leq[k].clone();
                    for (j, reach) in row.into_iter().enumerate() {
                        leq[i][j] |= reach;
                    }
                }
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if leq[i][j] && leq[j][k] && !leq[i][k] {
                        return Err(Error::OrderViolation(format!(
                            "not transitive: {} <= {} <= {} but not {} <= {}",
                            names[i], names[j], names[k], names[i], names[k]
                        )));
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if leq[i][j] && leq[j][i] {
                return Err(Error::OrderViolation(format!(
                    "{} and {} lie on a cycle",
                    names[i], names[j]
                )));
            }
        }
    }

    let least = |cands: &[Elem]| cands.iter().copied().find(|&c| cands.iter().all(|&d| leq[c][d]));
    let greatest = |cands: &[Elem]| cands.iter().copied().find(|&c| cands.iter().all(|&d| leq[d][c]));
    let mut join = vec![vec![0; n]; n];
    let mut meet = vec![vec![0; n]; n];
    for x in 0..n {
        for y in 0..n {
            let ub: Vec<Elem> = (0..n).filter(|&z| leq[x][z] && leq[y][z]).collect();
            join[x][y] = least(&ub).ok_or_else(|| Error::NotALattice {
                x: names[x].clone(),
                y: names[y].clone(),
                missing: "join",
            })?;
            let lb: Vec<Elem> = (0..n).filter(|&z| leq[z][x] && leq[z][y]).collect();
            meet[x][y] = greatest(&lb).ok_or_else(|| Error::NotALattice {
                x: names[x].clone(),
                y: names[y].clone(),
                missing: "meet",
            })?;
        }
    }
    let all: Vec<Elem> = (0..n).collect();
    let bottom = least(&all).expect("finite lattices are bounded");
    let top = greatest(&all).expect("finite lattices are bounded");
    let carrier = (0..n).filter(|&x| x != bottom).collect();
    Ok(FiniteLattice {
        names,
        leq,
        join,
        meet,
        bottom,
        top,
        carrier,
    })
}

impl FiniteLattice {
    pub fn from_json(text: &str) -> Result<Self> {
        load_lattice(&LatticeDescription::from_json(text)?)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, x: Elem) -> &str {
        &self.names[x]
    }

    pub fn elem(&self, name: &str) -> Option<Elem> {
        self.names.iter().position(|n| n == name)
    }

    pub fn elements(&self) -> std::ops::Range<Elem> {
        0..self.names.len()
    }

    pub fn leq(&self, x: Elem, y: Elem) -> bool {
        self.leq[x][y]
    }

    pub fn join(&self, x: Elem, y: Elem) -> Elem {
        self.join[x][y]
    }

    pub fn meet(&self, x: Elem, y: Elem) -> Elem {
        self.meet[x][y]
    }

    pub fn bottom(&self) -> Elem {
        self.bottom
    }

    pub fn top(&self) -> Elem {
        self.top
    }

    /// Join of a non-empty list.
    pub fn join_all(&self, xs: &[Elem]) -> Option<Elem> {
        xs.iter().copied().reduce(|a, b| self.join(a, b))
    }

    /// The compact elements without the bottom: in a finite lattice, every
    /// element other than the bottom.
    pub fn compacts(&self) -> CompactSemilattice<'_> {
        CompactSemilattice {
            lattice: self,
            carrier: &self.carrier,
        }
    }

    pub fn description(&self) -> LatticeDescription {
        let mut covers = Vec::new();
        for x in self.elements() {
            for y in self.elements() {
                if x != y
                    && self.leq(x, y)
                    && !self
                        .elements()
                        .any(|z| z != x && z != y && self.leq(x, z) && self.leq(z, y))
                {
                    covers.push((self.names[x].clone(), self.names[y].clone()));
                }
            }
        }
        LatticeDescription {
            elements: self.names.clone(),
            leq: None,
            covers: Some(covers),
        }
    }
}

/// The join-semilattice `(C, v)` of non-bottom elements.
#[derive(Debug, Clone, Copy)]
pub struct CompactSemilattice<'a> {
    pub lattice: &'a FiniteLattice,
    carrier: &'a [Elem],
}

impl<'a> CompactSemilattice<'a> {
    pub fn carrier(&self) -> &'a [Elem] {
        self.carrier
    }

    pub fn len(&self) -> usize {
        self.carrier.len()
    }

    pub fn is_empty(&self) -> bool {
        self.carrier.is_empty()
    }

    pub fn contains(&self, x: Elem) -> bool {
        x != self.lattice.bottom()
    }

    /// `{c in C : c <= x}`.
    pub fn down(&self, x: Elem) -> Ideal {
        Ideal {
            members: self
                .carrier
                .iter()
                .copied()
                .filter(|&c| self.lattice.leq(c, x))
                .collect(),
        }
    }

    pub fn is_ideal(&self, set: &BTreeSet<Elem>) -> bool {
        let l = self.lattice;
        set.iter().all(|&x| self.contains(x))
            && set
                .iter()
                .all(|&x| self.carrier.iter().all(|&c| !l.leq(c, x) || set.contains(&c)))
            && set
                .iter()
                .all(|&x| set.iter().all(|&y| set.contains(&l.join(x, y))))
    }

    /// The smallest ideal containing `seed`: close under binary joins, then
    /// take everything below some member.
    pub fn generate(&self, seed: impl IntoIterator<Item = Elem>) -> Ideal {
        let l = self.lattice;
        let mut joins: BTreeSet<Elem> = seed.into_iter().filter(|&x| self.contains(x)).collect();
        loop {
            let new: Vec<Elem> = joins
                .iter()
                .flat_map(|&x| joins.iter().map(move |&y| l.join(x, y)))
                .filter(|z| !joins.contains(z))
                .collect();
            if new.is_empty() {
                break;
            }
            joins.extend(new);
        }
        Ideal {
            members: self
                .carrier
                .iter()
                .copied()
                .filter(|&c| joins.iter().any(|&j| l.leq(c, j)))
                .collect(),
        }
    }
}

/// A downward closed, join closed subset of `C`; possibly empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ideal {
    members: BTreeSet<Elem>,
}

impl Ideal {
    pub fn empty() -> Self {
        Ideal::default()
    }

    pub fn members(&self) -> &BTreeSet<Elem> {
        &self.members
    }

    pub fn contains(&self, x: Elem) -> bool {
        self.members.contains(&x)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn is_subset(&self, other: &Ideal) -> bool {
        self.members.is_subset(&other.members)
    }

    /// The largest member, when the ideal is non-empty and has one.
    pub fn maximum(&self, l: &FiniteLattice) -> Option<Elem> {
        self.members
            .iter()
            .copied()
            .find(|&m| self.members.iter().all(|&x| l.leq(x, m)))
    }

    pub fn names(&self, l: &FiniteLattice) -> Vec<String> {
        self.members.iter().map(|&x| l.name(x).to_string()).collect()
    }

    /// Builds an ideal from a set, checking the ideal conditions.
    pub fn from_set(c: &CompactSemilattice<'_>, set: BTreeSet<Elem>) -> Result<Self> {
        if !c.is_ideal(&set) {
            return Err(Error::domain("set is not an ideal of the compact semilattice"));
        }
        Ok(Ideal { members: set })
    }
}

/// Every ideal of `C`, including the empty one, ordered by size then members.
///
/// Ideals are generated by closure from the empty ideal, adding one element
/// at a time, so no subset of `C` is ever enumerated.
pub fn ideals_enumerate(c: &CompactSemilattice<'_>) -> Vec<Ideal> {
    let mut found = BTreeSet::from([Ideal::empty()]);
    let mut queue = VecDeque::from([Ideal::empty()]);
    while let Some(i) = queue.pop_front() {
        for &x in c.carrier() {
            if i.contains(x) {
                continue;
            }
            let j = c.generate(i.members.iter().copied().chain([x]));
            if found.insert(j.clone()) {
                queue.push_back(j);
            }
        }
    }
    let mut out: Vec<Ideal> = found.into_iter().collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out
}

/// The smallest ideal containing every member of the family.
pub fn ideal_join(c: &CompactSemilattice<'_>, family: &[Ideal]) -> Result<Ideal> {
    if family.is_empty() {
        return Err(Error::domain("join of an empty family of ideals"));
    }
    Ok(c.generate(family.iter().flat_map(|i| i.members.iter().copied())))
}

/// Intersection of a non-empty family.
pub fn ideal_meet(family: &[Ideal]) -> Result<Ideal> {
    let (first, rest) = family
        .split_first()
        .ok_or_else(|| Error::domain("meet of an empty family of ideals"))?;
    let members = rest.iter().fold(first.members.clone(), |acc, i| {
        acc.intersection(&i.members).copied().collect()
    });
    Ok(Ideal { members })
}

/// Checks that `x -> (down x) n C` is an isomorphism onto the ideal lattice.
pub fn ideal_lattice_iso_check(l: &FiniteLattice) -> CheckReport {
    let c = l.compacts();
    let ideals = ideals_enumerate(&c);
    let mut r = CheckReport::new("lattice.ideal_iso");
    r.set("elements", l.len() as u64);
    r.set("ideals", ideals.len() as u64);

    let image: Vec<Ideal> = l.elements().map(|x| c.down(x)).collect();
    let distinct: BTreeSet<&Ideal> = image.iter().collect();
    if distinct.len() != l.len() {
        r.fail(json!({"property": "injective"}));
    }
    let all: BTreeSet<&Ideal> = ideals.iter().collect();
    if distinct != all {
        r.fail(json!({"property": "surjective", "ideals": ideals.len(), "images": distinct.len()}));
    }
    for x in l.elements() {
        for y in l.elements() {
            r.count("pairs", 1);
            let j = ideal_join(&c, &[image[x].clone(), image[y].clone()]).expect("non-empty family");
            if j != image[l.join(x, y)] {
                r.fail(json!({"property": "join", "x": l.name(x), "y": l.name(y)}));
            }
            let m = ideal_meet(&[image[x].clone(), image[y].clone()]).expect("non-empty family");
            if m != image[l.meet(x, y)] {
                r.fail(json!({"property": "meet", "x": l.name(x), "y": l.name(y)}));
            }
        }
    }
    for i in &ideals {
        if !i.is_empty() && i.maximum(l).is_none() {
            r.fail(json!({"property": "principal", "ideal": i.names(l)}));
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    fn names(l: &FiniteLattice, i: &Ideal) -> Vec<String> {
        i.names(l)
    }

    #[test]
    fn chain2_loads() {
        let l = catalog::lattice("chain2").unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.compacts().len(), 1);
        assert_eq!(ideals_enumerate(&l.compacts()).len(), 2);
    }

    #[test]
    fn m3_axioms_and_ideals() {
        let l = catalog::lattice("M3").unwrap();
        let a = l.elem("a").unwrap();
        let b = l.elem("b").unwrap();
        assert_eq!(l.join(a, b), l.top());
        assert_eq!(l.meet(a, b), l.bottom());
        let c = l.compacts();
        let ideals = ideals_enumerate(&c);
        let listed: Vec<Vec<String>> = ideals.iter().map(|i| names(&l, i)).collect();
        assert_eq!(
            listed,
            vec![
                vec![],
                vec!["a".to_string()],
                vec!["b".to_string()],
                vec!["c".to_string()],
                vec!["a".to_string(), "b".to_string(), "c".to_string(), "1".to_string()],
            ]
        );
        let ia = c.down(a);
        let ib = c.down(b);
        assert_eq!(ideal_join(&c, &[ia.clone(), ib.clone()]).unwrap().len(), 4);
        assert!(ideal_meet(&[ia.clone(), ib]).unwrap().is_empty());
        assert_eq!(ideal_join(&c, std::slice::from_ref(&ia)).unwrap(), ia);
        assert_eq!(ideal_meet(&[ia.clone(), ia.clone()]).unwrap(), ia);
        // {a, b} is not join closed
        assert!(!c.is_ideal(&BTreeSet::from([a, b])));
    }

    #[test]
    fn chain3_operations() {
        let l = catalog::lattice("chain3").unwrap();
        let c = l.compacts();
        let a = c.down(l.elem("a").unwrap());
        let ab = c.down(l.elem("b").unwrap());
        assert_eq!(ideals_enumerate(&c).len(), 3);
        assert_eq!(ideal_join(&c, &[a.clone(), ab.clone()]).unwrap(), ab);
        assert_eq!(ideal_meet(&[ab, a.clone()]).unwrap(), a);
    }

    #[test]
    fn empty_families_rejected() {
        let l = catalog::lattice("chain3").unwrap();
        assert!(ideal_join(&l.compacts(), &[]).is_err());
        assert!(ideal_meet(&[]).is_err());
    }

    #[test]
    fn not_a_lattice_reports_witness() {
        // a, b below both c and d: no least upper bound
        let d = LatticeDescription {
            elements: ["0", "a", "b", "c", "d", "1"].map(String::from).to_vec(),
            leq: None,
            covers: Some(
                [("0", "a"), ("0", "b"), ("a", "c"), ("a", "d"), ("b", "c"), ("b", "d"), ("c", "1"), ("d", "1")]
                    .map(|(x, y)| (x.to_string(), y.to_string()))
                    .to_vec(),
            ),
        };
        match load_lattice(&d) {
            Err(Error::NotALattice { x, y, missing }) => {
                assert_eq!((x.as_str(), y.as_str(), missing), ("a", "b", "join"));
            }
            other => panic!("expected not-a-lattice, got {other:?}"),
        }
    }

    #[test]
    fn malformed_descriptions() {
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", "0"], "covers": []}"#),
            Err(Error::Description(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", "1"]}"#),
            Err(Error::Description(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", "1"], "covers": [], "leq": []}"#),
            Err(Error::Description(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", "1"], "covers": [["0", "x"]]}"#),
            Err(Error::Description(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", ""], "covers": []}"#),
            Err(Error::Description(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0", "1"], "covers": [["0","1"],["1","0"]]}"#),
            Err(Error::OrderViolation(_))
        ));
        assert!(matches!(
            FiniteLattice::from_json(r#"{"elements": ["0","a","1"], "leq": [["0","a"],["a","1"]]}"#),
            Err(Error::OrderViolation(_))
        ));
        assert!(FiniteLattice::from_json("not json").is_err());
    }

    #[test]
    fn leq_input_accepted() {
        let l = FiniteLattice::from_json(
            r#"{"elements": ["0","a","1"], "leq": [["0","a"],["a","1"],["0","1"]]}"#,
        )
        .unwrap();
        assert_eq!(l.name(l.top()), "1");
        assert_eq!(l.name(l.bottom()), "0");
    }

    #[test]
    fn iso_check_on_catalog() {
        for name in ["chain2", "M3", "N5", "boolean3"] {
            let l = catalog::lattice(name).unwrap();
            assert!(ideal_lattice_iso_check(&l).passed(), "{name}");
        }
    }
}

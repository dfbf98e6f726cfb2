//! The independent family behind the engine: every indexed node owns one
//! coordinate bit, the set `A_node` is "that bit is 1", and the set `B_node`
//! of a node is the cube of signed literals collected along its initial
//! segments.
//!
//! Bits are allocated lazily, so the index tree is never materialized.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{is_initial_segment, is_reduced, Node, Word};

/// How the depth-1 nodes `(<a>, <1>)` are attached to the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootScheme {
    /// Every depth-1 node owns its own bit. Root sets are mutually
    /// independent, which keeps the engine independent for any `kappa`.
    #[default]
    Independent,
    /// `(<a>, <1>)` takes the complement of the set of `(<a>, <0>)`, the same
    /// rule as at every deeper level. For `kappa >= 2` the two root pairs
    /// `a != b` then both compose to the shift of every point, so
    /// independence fails.
    Complementary,
}

impl RootScheme {
    /// Whether `node` carries its own bit.
    pub fn is_indexed(self, node: &Node) -> bool {
        node.last_bit() == 0 || (self == RootScheme::Independent && node.depth() == 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitId(pub u32);

impl fmt::Display for BitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

#[derive(Default)]
struct RegistryInner {
    ids: HashMap<Node, BitId>,
    nodes: Vec<Node>,
}

/// Get-or-assign map from indexed nodes to dense bit ids.
pub struct BitRegistry {
    scheme: RootScheme,
    inner: RwLock<RegistryInner>,
}

impl BitRegistry {
    pub fn new(scheme: RootScheme) -> Self {
        BitRegistry {
            scheme,
            inner: RwLock::new(RegistryInner::default()),
        }
    }

    pub fn scheme(&self) -> RootScheme {
        self.scheme
    }

    /// The bit owned by an indexed node, allocated on first use.
    pub fn bit(&self, node: &Node) -> Result<BitId> {
        if !self.scheme.is_indexed(node) {
            return Err(Error::domain(format!("{node} does not own a bit")));
        }
        if let Some(&id) = self.inner.read().expect("registry lock").ids.get(node) {
            return Ok(id);
        }
        let mut inner = self.inner.write().expect("registry lock");
        if let Some(&id) = inner.ids.get(node) {
            return Ok(id);
        }
        let id = BitId(inner.nodes.len() as u32);
        inner.ids.insert(node.clone(), id);
        inner.nodes.push(node.clone());
        Ok(id)
    }

    /// The node owning `id`, if allocated.
    pub fn owner(&self, id: BitId) -> Option<Node> {
        self.inner
            .read()
            .expect("registry lock")
            .nodes
            .get(id.0 as usize)
            .cloned()
    }

    pub fn allocated(&self) -> usize {
        self.inner.read().expect("registry lock").nodes.len()
    }
}

impl fmt::Debug for BitRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BitRegistry")
            .field("scheme", &self.scheme)
            .field("allocated", &self.allocated())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Literal {
    pub bit: BitId,
    /// `true` for `A_bit`, `false` for its complement.
    pub positive: bool,
}

/// The signed set `#A` attached to a node.
pub fn sharp_literal(registry: &BitRegistry, node: &Node) -> Result<Literal> {
    if registry.scheme().is_indexed(node) {
        Ok(Literal {
            bit: registry.bit(node)?,
            positive: true,
        })
    } else {
        Ok(Literal {
            bit: registry.bit(&node.flip_last())?,
            positive: false,
        })
    }
}

/// A conjunction of literals over distinct bits.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cube {
    literals: BTreeMap<BitId, bool>,
}

impl Cube {
    /// Rejects a bit that occurs with both polarities.
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for lit in literals {
            if let Some(&prev) = map.get(&lit.bit) {
                if prev != lit.positive {
                    return Err(Error::domain(format!(
                        "{} occurs with both polarities; the cube would be empty",
                        lit.bit
                    )));
                }
            }
            map.insert(lit.bit, lit.positive);
        }
        Ok(Cube { literals: map })
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.literals
            .iter()
            .map(|(&bit, &positive)| Literal { bit, positive })
    }

    pub fn bits(&self) -> impl Iterator<Item = BitId> + '_ {
        self.literals.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.literals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.literals.is_empty()
    }

    pub fn polarity(&self, bit: BitId) -> Option<bool> {
        self.literals.get(&bit).copied()
    }

    /// Whether an assignment lies in the cube; every bit of the cube must be assigned.
    pub fn contains(&self, point: &Assignment) -> Result<bool> {
        for (bit, &pol) in &self.literals {
            match point.get(bit) {
                Some(&v) if v != pol => return Ok(false),
                Some(_) => {}
                None => {
                    return Err(Error::domain(format!(
                        "point does not assign {bit}, cannot decide cube membership"
                    )))
                }
            }
        }
        Ok(true)
    }

    /// The cube extended by one literal on a bit it does not mention.
    pub fn extend(&self, lit: Literal) -> Result<Cube> {
        if self.literals.contains_key(&lit.bit) {
            return Err(Error::domain(format!("{} already constrained", lit.bit)));
        }
        let mut out = self.clone();
        out.literals.insert(lit.bit, lit.positive);
        Ok(out)
    }
}

impl fmt::Debug for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (b, p)) in self.literals.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}{}", if *p { '+' } else { '-' }, b)?;
        }
        write!(f, "}}")
    }
}

/// `B_node`: the intersection of `#A_s` over all initial segments `s` of `node`.
pub fn b_cube(registry: &BitRegistry, node: &Node) -> Result<Cube> {
    let lits = node
        .initial_segments()
        .map(|s| sharp_literal(registry, &s))
        .collect::<Result<Vec<_>>>()?;
    Cube::new(lits)
}

/// A (partial) truth assignment to bits: a point of the ground set, projected
/// to the bits that matter.
pub type Assignment = BTreeMap<BitId, bool>;

/// The ground set `{0, .., 2^m - 1}` with `A_{bits[i]} = { x : bit i of x is 1 }`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitGround {
    bits: Vec<BitId>,
    position: HashMap<BitId, usize>,
}

/// Default limit on `m` for explicit ground sets.
pub const DEFAULT_GROUND_BITS: usize = 22;

pub fn explicit_ground(bits: &[BitId], max_bits: usize) -> Result<ExplicitGround> {
    let mut uniq = bits.to_vec();
    uniq.sort();
    uniq.dedup();
    if uniq.len() > max_bits || uniq.len() >= 63 {
        return Err(Error::Resource {
            what: format!("explicit ground set over {} bits", uniq.len()),
            estimate: 1u128 << uniq.len().min(127),
            budget: 1u128 << max_bits.min(127),
        });
    }
    let position = uniq.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    Ok(ExplicitGround {
        bits: uniq,
        position,
    })
}

impl ExplicitGround {
    pub fn m(&self) -> usize {
        self.bits.len()
    }

    pub fn size(&self) -> u64 {
        1u64 << self.bits.len()
    }

    pub fn bits(&self) -> &[BitId] {
        &self.bits
    }

    pub fn points(&self) -> std::ops::Range<u64> {
        0..self.size()
    }

    pub fn assignment(&self, x: u64) -> Assignment {
        self.bits
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, (x >> i) & 1 == 1))
            .collect()
    }

    /// Membership of point `x` in `A_bit`.
    pub fn in_set(&self, x: u64, bit: BitId) -> Result<bool> {
        let i = self
            .position
            .get(&bit)
            .ok_or_else(|| Error::domain(format!("{bit} is not a coordinate of this ground set")))?;
        Ok((x >> i) & 1 == 1)
    }

    pub fn contains(&self, x: u64, cube: &Cube) -> Result<bool> {
        for lit in cube.literals() {
            if self.in_set(x, lit.bit)? != lit.positive {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// All points of the cube, by scanning the ground set.
    pub fn point_set(&self, cube: &Cube) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        for x in self.points() {
            if self.contains(x, cube)? {
                out.push(x);
            }
        }
        Ok(out)
    }
}

/// A point inside `B_node` and outside `B_p` for every entry `p` of `q`.
///
/// This is the witness used to separate two inequivalent reduced words once
/// their common entries are removed: `node` is an initial-segment-minimal
/// entry of one side, and `q` is the other side. The returned assignment
/// covers the bits of `node`'s cube and of every cube of `q`.
pub fn separating_point(registry: &BitRegistry, node: &Node, q: &Word) -> Result<Assignment> {
    if !is_reduced(q) {
        return Err(Error::domain(format!("{q} is not reduced")));
    }
    if q.contains(node) {
        return Err(Error::domain(format!("{node} occurs in {q}")));
    }
    if let Some(p) = q
        .nodes()
        .find(|p| p.depth() < node.depth() && is_initial_segment(p, node))
    {
        return Err(Error::domain(format!(
            "{p} in {q} is a proper initial segment of {node}"
        )));
    }

    let target = b_cube(registry, node)?;
    let avoid = q
        .nodes()
        .map(|p| b_cube(registry, p))
        .collect::<Result<Vec<_>>>()?;

    let mut assignment: Assignment = target.literals().map(|l| (l.bit, l.positive)).collect();
    if !falsify_all(&avoid, 0, &mut assignment) {
        return Err(Error::domain(format!(
            "no point of B{node} avoids every set of {q}"
        )));
    }
    for cube in &avoid {
        for bit in cube.bits() {
            assignment.entry(bit).or_insert(false);
        }
    }
    Ok(assignment)
}

/// Backtracking search: extend `assignment` so that each cube from `i` on has
/// a false literal.
fn falsify_all(cubes: &[Cube], i: usize, assignment: &mut Assignment) -> bool {
    let Some(cube) = cubes.get(i) else {
        return true;
    };
    if cube
        .literals()
        .any(|l| assignment.get(&l.bit).is_some_and(|&v| v != l.positive))
    {
        return falsify_all(cubes, i + 1, assignment);
    }
    for lit in cube.literals() {
        if assignment.contains_key(&lit.bit) {
            continue;
        }
        assignment.insert(lit.bit, !lit.positive);
        if falsify_all(cubes, i + 1, assignment) {
            return true;
        }
        assignment.remove(&lit.bit);
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(eta: &[u32], phi: &[u8]) -> Node {
        Node::new(eta.to_vec(), phi.to_vec()).unwrap()
    }

    #[test]
    fn sharp_literal_follows_last_bit() {
        let reg = BitRegistry::new(RootScheme::Complementary);
        let r0 = n(&[0], &[0]);
        let l = sharp_literal(&reg, &r0).unwrap();
        assert_eq!(l, Literal { bit: reg.bit(&r0).unwrap(), positive: true });
        let l = sharp_literal(&reg, &n(&[0], &[1])).unwrap();
        assert_eq!(l, Literal { bit: reg.bit(&r0).unwrap(), positive: false });
        let l = sharp_literal(&reg, &n(&[0, 0], &[0, 1])).unwrap();
        assert_eq!(
            l,
            Literal { bit: reg.bit(&n(&[0, 0], &[0, 0])).unwrap(), positive: false }
        );
    }

    #[test]
    fn independent_roots_get_their_own_bits() {
        let reg = BitRegistry::new(RootScheme::Independent);
        let a = sharp_literal(&reg, &n(&[0], &[0])).unwrap();
        let b = sharp_literal(&reg, &n(&[0], &[1])).unwrap();
        assert!(a.positive && b.positive);
        assert_ne!(a.bit, b.bit);
        // deeper levels are unchanged
        let c = sharp_literal(&reg, &n(&[0, 0], &[1, 1])).unwrap();
        assert_eq!(c.bit, reg.bit(&n(&[0, 0], &[1, 0])).unwrap());
        assert!(!c.positive);
    }

    #[test]
    fn cube_along_initial_segments() {
        let reg = BitRegistry::new(RootScheme::Complementary);
        let c = b_cube(&reg, &n(&[0], &[0])).unwrap();
        assert_eq!(c.literals().collect::<Vec<_>>(), vec![Literal {
            bit: reg.bit(&n(&[0], &[0])).unwrap(),
            positive: true
        }]);
        let c = b_cube(&reg, &n(&[0, 0], &[0, 1])).unwrap();
        let root = reg.bit(&n(&[0], &[0])).unwrap();
        let inner = reg.bit(&n(&[0, 0], &[0, 0])).unwrap();
        assert_eq!(c.polarity(root), Some(true));
        assert_eq!(c.polarity(inner), Some(false));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn conflicting_cube_rejected() {
        let b = BitId(0);
        assert!(Cube::new([
            Literal { bit: b, positive: true },
            Literal { bit: b, positive: false }
        ])
        .is_err());
    }

    #[test]
    fn explicit_ground_counts() {
        let bits = [BitId(0), BitId(1), BitId(2)];
        let g = explicit_ground(&bits, 10).unwrap();
        assert_eq!(g.size(), 8);
        // every full cube holds exactly one point
        for x in 0..8u64 {
            let cube = Cube::new((0..3).map(|i| Literal {
                bit: BitId(i),
                positive: (x >> i) & 1 == 1,
            }))
            .unwrap();
            assert_eq!(g.point_set(&cube).unwrap(), vec![x]);
        }
        let g0 = explicit_ground(&[], 10).unwrap();
        assert_eq!(g0.size(), 1);
        assert!(g0.contains(0, &Cube::default()).unwrap());
        assert!(matches!(
            explicit_ground(&(0..12).map(BitId).collect::<Vec<_>>(), 10),
            Err(Error::Resource { .. })
        ));
    }

    #[test]
    fn separating_point_examples() {
        let reg = BitRegistry::new(RootScheme::Complementary);
        let r0 = n(&[0], &[0]);
        let pt = separating_point(&reg, &r0, &Word::singleton(n(&[0], &[1]))).unwrap();
        assert_eq!(pt.get(&reg.bit(&r0).unwrap()), Some(&true));
        assert!(b_cube(&reg, &r0).unwrap().contains(&pt).unwrap());
        assert!(!b_cube(&reg, &n(&[0], &[1])).unwrap().contains(&pt).unwrap());

        let r1 = n(&[1], &[0]);
        let pt = separating_point(&reg, &r0, &Word::singleton(r1.clone())).unwrap();
        assert_eq!(pt.get(&reg.bit(&r0).unwrap()), Some(&true));
        assert_eq!(pt.get(&reg.bit(&r1).unwrap()), Some(&false));
    }

    #[test]
    fn separating_point_preconditions() {
        let reg = BitRegistry::new(RootScheme::Independent);
        let r0 = n(&[0], &[0]);
        let child = n(&[0, 0], &[0, 0]);
        assert!(separating_point(&reg, &child, &Word::singleton(r0.clone())).is_err());
        assert!(separating_point(&reg, &r0, &Word::singleton(r0.clone())).is_err());
        let unreduced: Word = [child.clone(), child.flip_last()].into_iter().collect();
        assert!(separating_point(&reg, &r0, &unreduced).is_err());
        // extensions of the node are fine
        assert!(separating_point(&reg, &r0, &Word::singleton(child)).is_ok());
    }

    #[test]
    fn complementary_roots_have_no_separating_point() {
        let reg = BitRegistry::new(RootScheme::Complementary);
        let q: Word = [n(&[1], &[0]), n(&[1], &[1])].into_iter().collect();
        assert!(separating_point(&reg, &n(&[0], &[0]), &q).is_err());
        let reg = BitRegistry::new(RootScheme::Independent);
        assert!(separating_point(&reg, &n(&[0], &[0]), &q).is_ok());
    }
}

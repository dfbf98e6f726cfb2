//! The composition engine: generators `f_node` acting on `ground x Z`,
//! composite evaluation, exact equality of composites, and the checks for
//! the composition, commutativity and independence axioms.
//!
//! Every generator fixes the ground coordinate and raises the level by one
//! on the points of its cube, so a composite `t_w` is determined by its
//! counting vector: the number of entries of `w` whose cube contains a point.
//! Two composites are equal exactly when their counting vectors agree on
//! every point. Because the family bits are independent, every assignment
//! of the bits is a point, and agreement is decided by comparing the
//! multilinear polynomials of the two vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::family::{
    b_cube, explicit_ground, separating_point, Assignment, BitId, BitRegistry, Cube,
    ExplicitGround, RootScheme,
};
use crate::report::CheckReport;
use crate::scalar::Level;
use crate::tree::{is_reduced, multiset_count, multisets, reduce_canonical, Node, TruncationConfig, Word};

/// A point `(alpha, level)` of `ground x Z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenericPoint<Z> {
    pub alpha: Assignment,
    pub level: Z,
}

impl<Z: Level> GenericPoint<Z> {
    pub fn new(alpha: Assignment, level: Z) -> Self {
        GenericPoint { alpha, level }
    }
}

/// The increment profile of a composite: cube `c` with multiplicity `k`
/// contributes `+k` on every point of `c`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct CountingVector {
    terms: BTreeMap<Cube, usize>,
}

impl CountingVector {
    pub fn new() -> Self {
        CountingVector::default()
    }

    pub fn add_cube(&mut self, cube: Cube, k: usize) {
        if k > 0 {
            *self.terms.entry(cube).or_insert(0) += k;
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Cube, usize)> {
        self.terms.iter().map(|(c, &k)| (c, k))
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Pointwise sum.
    pub fn sum(&self, other: &CountingVector) -> CountingVector {
        let mut out = self.clone();
        for (c, k) in other.terms() {
            out.add_cube(c.clone(), k);
        }
        out
    }

    pub fn bits(&self) -> BTreeSet<BitId> {
        self.terms.keys().flat_map(|c| c.bits()).collect()
    }

    pub fn value_at<Z: Level>(&self, alpha: &Assignment) -> Result<Z> {
        let mut v = Z::zero();
        for (c, &k) in &self.terms {
            if c.contains(alpha)? {
                v = v + Z::from_count(k);
            }
        }
        Ok(v)
    }

    pub fn multilinear<Z: Level>(&self) -> GenericMultilinear<Z> {
        let mut out = GenericMultilinear::zero();
        for (c, &k) in &self.terms {
            out.add_cube(c, Z::from_count(k));
        }
        out
    }
}

/// A multilinear polynomial over bit variables: the unique representation
/// of a function `{0,1}^bits -> Z`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenericMultilinear<Z> {
    coeffs: BTreeMap<Vec<BitId>, Z>,
}

impl<Z: Level> GenericMultilinear<Z> {
    pub fn zero() -> Self {
        GenericMultilinear {
            coeffs: BTreeMap::new(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn monomials(&self) -> usize {
        self.coeffs.len()
    }

    fn add_term(&mut self, mono: Vec<BitId>, c: Z) {
        use std::collections::btree_map::Entry;
        match self.coeffs.entry(mono) {
            Entry::Vacant(e) => {
                if !c.is_zero() {
                    e.insert(c);
                }
            }
            Entry::Occupied(mut e) => {
                let v = e.get().clone() + c;
                if v.is_zero() {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
        }
    }

    /// Adds `coeff` times the indicator of `cube`:
    /// `prod x_p * prod (1 - x_n)` expanded over subsets of the negative literals.
    pub fn add_cube(&mut self, cube: &Cube, coeff: Z) {
        let pos: Vec<BitId> = cube.literals().filter(|l| l.positive).map(|l| l.bit).collect();
        let neg: Vec<BitId> = cube.literals().filter(|l| !l.positive).map(|l| l.bit).collect();
        for mask in 0u64..(1u64 << neg.len()) {
            let mut mono = pos.clone();
            let mut sign_neg = false;
            for (i, &b) in neg.iter().enumerate() {
                if (mask >> i) & 1 == 1 {
                    mono.push(b);
                    sign_neg = !sign_neg;
                }
            }
            mono.sort();
            let c = if sign_neg { -coeff.clone() } else { coeff.clone() };
            self.add_term(mono, c);
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (m, c) in &other.coeffs {
            self.add_term(m.clone(), c.clone());
        }
    }

    pub fn sub_assign(&mut self, other: &Self) {
        for (m, c) in &other.coeffs {
            self.add_term(m.clone(), -c.clone());
        }
    }

    pub fn scaled(&self, k: Z) -> Self {
        let mut out = Self::zero();
        for (m, c) in &self.coeffs {
            out.add_term(m.clone(), c.clone() * k.clone());
        }
        out
    }

    pub fn eval(&self, alpha: &Assignment) -> Result<Z> {
        let mut v = Z::zero();
        'mono: for (m, c) in &self.coeffs {
            for b in m {
                match alpha.get(b) {
                    Some(true) => {}
                    Some(false) => continue 'mono,
                    None => return Err(Error::domain(format!("{b} is unassigned"))),
                }
            }
            v = v + c.clone();
        }
        Ok(v)
    }
}

/// Where ground points live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Realization {
    /// Points are assignments of the bits a query touches.
    Symbolic,
    /// Points are the `2^m` bit vectors over all bits of the truncation.
    Explicit { max_bits: usize },
}

/// Anything that assigns a cube to each node of a truncation.
pub trait Engine: Sync {
    fn truncation(&self) -> &TruncationConfig;

    fn registry(&self) -> &BitRegistry;

    fn cube(&self, node: &Node) -> Result<Cube> {
        self.truncation().check(node)?;
        b_cube(self.registry(), node)
    }

    fn word_chi(&self, w: &Word) -> Result<CountingVector> {
        let mut v = CountingVector::new();
        for (n, k) in w.iter() {
            v.add_cube(self.cube(n)?, k);
        }
        Ok(v)
    }

    fn multilinear(&self, w: &Word) -> Result<Multilinear> {
        Ok(self.word_chi(w)?.multilinear())
    }

    /// Whether `t_p = t_q` as permutations of `ground x Z`.
    fn equal_words(&self, p: &Word, q: &Word) -> Result<bool> {
        let (p, q) = p.strip_common(q);
        let mut d = self.multilinear(&p)?;
        d.sub_assign(&self.multilinear(&q)?);
        Ok(d.is_zero())
    }
}

/// Multilinear polynomials with machine coefficients; values are bounded by
/// word sizes times `2^depth`.
pub type Multilinear = GenericMultilinear<i64>;

/// A composition engine on a fixed truncation.
#[derive(Debug)]
pub struct IceInstance {
    truncation: TruncationConfig,
    registry: BitRegistry,
    realization: Realization,
}

impl IceInstance {
    pub fn new(truncation: TruncationConfig, scheme: RootScheme) -> Self {
        IceInstance {
            truncation,
            registry: BitRegistry::new(scheme),
            realization: Realization::Symbolic,
        }
    }

    /// An engine whose points form an explicit ground set; fails when the
    /// truncation has more than `max_bits` bits.
    pub fn explicit(truncation: TruncationConfig, scheme: RootScheme, max_bits: usize) -> Result<Self> {
        let inst = IceInstance {
            truncation,
            registry: BitRegistry::new(scheme),
            realization: Realization::Explicit { max_bits },
        };
        inst.ground()?;
        Ok(inst)
    }

    pub fn realization(&self) -> Realization {
        self.realization
    }

    pub fn scheme(&self) -> RootScheme {
        self.registry.scheme()
    }

    /// Number of bits owned by nodes of the truncation.
    pub fn bit_count(&self) -> u128 {
        let cfg = &self.truncation;
        let roots = match self.scheme() {
            RootScheme::Independent => 2 * cfg.kappa as u128,
            RootScheme::Complementary => cfg.kappa as u128,
        };
        roots + (2..=cfg.depth).map(|d| cfg.nodes_at_depth(d) / 2).sum::<u128>()
    }

    /// The explicit ground set over every bit of the truncation.
    pub fn ground(&self) -> Result<ExplicitGround> {
        let max_bits = match self.realization {
            Realization::Explicit { max_bits } => max_bits,
            Realization::Symbolic => crate::family::DEFAULT_GROUND_BITS,
        };
        let count = self.bit_count();
        if count > max_bits as u128 {
            return Err(Error::Resource {
                what: format!("explicit ground set over {count} bits"),
                estimate: 1u128.checked_shl(count.min(127) as u32).unwrap_or(u128::MAX),
                budget: 1u128 << max_bits.min(127),
            });
        }
        let bits = self
            .truncation
            .nodes(self.truncation.depth)
            .iter()
            .filter(|n| self.scheme().is_indexed(n))
            .map(|n| self.registry.bit(n))
            .collect::<Result<Vec<_>>>()?;
        explicit_ground(&bits, max_bits)
    }
}

impl Engine for IceInstance {
    fn truncation(&self) -> &TruncationConfig {
        &self.truncation
    }

    fn registry(&self) -> &BitRegistry {
        &self.registry
    }
}

/// `f_node`: raise the level by one iff the ground point lies in `B_node`.
pub fn apply_generator<E: Engine + ?Sized, Z: Level>(
    engine: &E,
    node: &Node,
    p: &GenericPoint<Z>,
) -> Result<GenericPoint<Z>> {
    let cube = engine.cube(node)?;
    let inside = cube.contains(&p.alpha)?;
    Ok(GenericPoint {
        alpha: p.alpha.clone(),
        level: if inside {
            p.level.clone() + Z::one()
        } else {
            p.level.clone()
        },
    })
}

/// `t_w(p)`, composing the generators one at a time.
pub fn evaluate_word<E: Engine + ?Sized, Z: Level>(
    engine: &E,
    w: &Word,
    p: &GenericPoint<Z>,
) -> Result<GenericPoint<Z>> {
    let mut cur = p.clone();
    for (n, k) in w.iter() {
        for _ in 0..k {
            cur = apply_generator(engine, n, &cur)?;
        }
    }
    Ok(cur)
}

/// Equality by enumerating every assignment of the bits either word touches.
pub fn equal_words_by_projection<E: Engine + ?Sized>(
    engine: &E,
    p: &Word,
    q: &Word,
    max_bits: usize,
) -> Result<bool> {
    let cp = engine.word_chi(p)?;
    let cq = engine.word_chi(q)?;
    let bits: Vec<BitId> = cp.bits().union(&cq.bits()).copied().collect();
    if bits.len() > max_bits {
        return Err(Error::Resource {
            what: format!("projection onto {} relevant bits", bits.len()),
            estimate: 1u128 << bits.len().min(127),
            budget: 1u128 << max_bits.min(127),
        });
    }
    for x in 0u64..(1u64 << bits.len()) {
        let alpha: Assignment = bits
            .iter()
            .enumerate()
            .map(|(i, &b)| (b, (x >> i) & 1 == 1))
            .collect();
        if cp.value_at::<i64>(&alpha)? != cq.value_at::<i64>(&alpha)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Equality by running both composites on every point `(x, 0)` of an explicit ground set.
pub fn equal_words_explicit<E: Engine + ?Sized>(
    engine: &E,
    ground: &ExplicitGround,
    p: &Word,
    q: &Word,
) -> Result<bool> {
    let cubes = |w: &Word| -> Result<Vec<(Cube, usize)>> {
        w.iter().map(|(n, k)| Ok((engine.cube(n)?, k))).collect()
    };
    let cp = cubes(p)?;
    let cq = cubes(q)?;
    let run = |cs: &[(Cube, usize)], x: u64| -> Result<i64> {
        let mut level = 0i64;
        for (c, k) in cs {
            for _ in 0..*k {
                if ground.contains(x, c)? {
                    level += 1;
                }
            }
        }
        Ok(level)
    };
    for x in ground.points() {
        if run(&cp, x)? != run(&cq, x)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Samples a node of the truncation: uniform depth, then uniform path.
pub fn random_node<R: Rng>(rng: &mut R, cfg: &TruncationConfig, max_depth: usize) -> Node {
    let depth = rng.gen_range(1..=max_depth.min(cfg.depth));
    let mut node = Node::root(rng.gen_range(0..cfg.kappa as u32), rng.gen_range(0..2));
    for _ in 1..depth {
        node = node.child_unchecked(rng.gen_range(0..cfg.kappa as u32), rng.gen_range(0..2));
    }
    node
}

/// A random word of size `0..=max_size`.
pub fn random_word<R: Rng>(rng: &mut R, cfg: &TruncationConfig, max_size: usize) -> Word {
    let size = rng.gen_range(0..=max_size);
    (0..size).map(|_| random_node(rng, cfg, cfg.depth)).collect()
}

fn sample_interior<R: Rng>(rng: &mut R, cfg: &TruncationConfig) -> (Node, u32) {
    (random_node(rng, cfg, cfg.depth - 1), rng.gen_range(0..cfg.kappa as u32))
}

/// Composition axiom: `f_node = f_child0 . f_child1` for every interior node and branch.
///
/// Runs over all `(node, alpha)` pairs when there are at most `cap`, and over
/// `cap` seeded samples otherwise. With a ground set, the point sets are also
/// checked to split the parent's set disjointly.
pub fn verify_composition<E: Engine + ?Sized>(
    engine: &E,
    cap: usize,
    seed: u64,
    ground: Option<&ExplicitGround>,
) -> CheckReport {
    let cfg = *engine.truncation();
    let mut r = CheckReport::new("ice.composition");
    if cfg.depth < 2 {
        r.note("depth 1 truncation has no interior nodes");
        return r;
    }
    let total = cfg.node_count(cfg.depth - 1).saturating_mul(cfg.kappa as u128);
    let pairs: Vec<(Node, u32)> = if total <= cap as u128 {
        cfg.nodes(cfg.depth - 1)
            .into_iter()
            .flat_map(|n| (0..cfg.kappa as u32).map(move |a| (n.clone(), a)))
            .collect()
    } else {
        r.note(format!("sampled {cap} of {total} identities (seed {seed})"));
        r.set("seed", seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..cap).map(|_| sample_interior(&mut rng, &cfg)).collect()
    };
    for (node, alpha) in pairs {
        let (c0, c1) = node.children_unchecked(alpha);
        let lhs = Word::singleton(node.clone());
        let rhs: Word = [c0.clone(), c1.clone()].into_iter().collect();
        r.count("identities", 1);
        match engine.equal_words(&lhs, &rhs) {
            Ok(true) => {}
            Ok(false) => r.fail(json!({"node": node, "alpha": alpha, "oracle": "symbolic"})),
            Err(e) => r.fail(json!({"node": node, "alpha": alpha, "error": e.to_string()})),
        }
        if let Some(g) = ground {
            r.count("explicit_identities", 1);
            match disjoint_split(engine, g, &node, &c0, &c1) {
                Ok(true) => {}
                Ok(false) => r.fail(json!({"node": node, "alpha": alpha, "oracle": "explicit"})),
                Err(e) => r.fail(json!({"node": node, "alpha": alpha, "error": e.to_string()})),
            }
        }
    }
    r
}

fn disjoint_split<E: Engine + ?Sized>(
    engine: &E,
    g: &ExplicitGround,
    parent: &Node,
    c0: &Node,
    c1: &Node,
) -> Result<bool> {
    let sp: BTreeSet<u64> = g.point_set(&engine.cube(parent)?)?.into_iter().collect();
    let s0: BTreeSet<u64> = g.point_set(&engine.cube(c0)?)?.into_iter().collect();
    let s1: BTreeSet<u64> = g.point_set(&engine.cube(c1)?)?.into_iter().collect();
    Ok(s0.is_disjoint(&s1) && s0.union(&s1).copied().collect::<BTreeSet<_>>() == sp)
}

/// A permutation of `ground x Z` in explicit coordinates.
pub type ExplicitMap<'a> = dyn Fn(&Node, u64, i64) -> Result<(u64, i64)> + Sync + 'a;

/// The generator `f_node` on an explicit ground set. Point sets of the
/// truncation's nodes are tabulated up front.
pub fn explicit_generator<'a, E: Engine + ?Sized>(
    engine: &'a E,
    ground: &'a ExplicitGround,
) -> impl Fn(&Node, u64, i64) -> Result<(u64, i64)> + Sync + 'a {
    let cfg = engine.truncation();
    let table: HashMap<Node, Vec<bool>> = cfg
        .nodes(cfg.depth)
        .into_iter()
        .filter_map(|n| {
            let c = engine.cube(&n).ok()?;
            let inside = ground.points().map(|x| ground.contains(x, &c)).collect::<Result<_>>().ok()?;
            Some((n, inside))
        })
        .collect();
    move |node, x, level| {
        let inside = match table.get(node) {
            Some(t) => t[x as usize],
            None => ground.contains(x, &engine.cube(node)?)?,
        };
        Ok((x, if inside { level + 1 } else { level }))
    }
}

/// Commutativity axiom on explicit permutations: `f_a . f_b = f_b . f_a` on
/// every ground point and every level in `-window..=window`.
pub fn verify_commutativity_with(
    nodes: &[Node],
    ground: &ExplicitGround,
    window: i64,
    generator: &ExplicitMap<'_>,
) -> CheckReport {
    let mut r = CheckReport::new("ice.commutativity");
    r.set("nodes", nodes.len() as u64);
    r.set("points", ground.size());
    for (i, a) in nodes.iter().enumerate() {
        for b in &nodes[i..] {
            r.count("pairs", 1);
            let mut bad = None;
            'pts: for x in ground.points() {
                for level in -window..=window {
                    let ab = generator(b, x, level).and_then(|(y, l)| generator(a, y, l));
                    let ba = generator(a, x, level).and_then(|(y, l)| generator(b, y, l));
                    match (ab, ba) {
                        (Ok(u), Ok(v)) if u == v => {}
                        (Ok(u), Ok(v)) => {
                            bad = Some(json!({"a": a, "b": b, "point": x, "level": level,
                                "ab": [u.0, u.1], "ba": [v.0, v.1]}));
                            break 'pts;
                        }
                        (Err(e), _) | (_, Err(e)) => {
                            bad = Some(json!({"a": a, "b": b, "error": e.to_string()}));
                            break 'pts;
                        }
                    }
                }
            }
            if let Some(w) = bad {
                r.fail(w);
            }
        }
    }
    r
}

/// Commutativity for the engine's own generators over all nodes of the truncation
/// (or the first `pair_cap` nodes' pairs, whichever is smaller).
pub fn verify_commutativity<E: Engine + ?Sized>(
    engine: &E,
    ground: &ExplicitGround,
    window: i64,
    node_cap: usize,
) -> CheckReport {
    let cfg = engine.truncation();
    let mut nodes = cfg.nodes(cfg.depth);
    let total = nodes.len();
    nodes.truncate(node_cap);
    let g = explicit_generator(engine, ground);
    let mut r = verify_commutativity_with(&nodes, ground, window, &g);
    if nodes.len() < total {
        r.note(format!("restricted to the first {} of {} nodes", nodes.len(), total));
    }
    r
}

/// Each generator is injective on `ground x [-window, window]` with image in
/// the window enlarged by one, and fixes the ground coordinate.
pub fn verify_bijectivity<E: Engine + ?Sized>(
    engine: &E,
    ground: &ExplicitGround,
    window: i64,
) -> CheckReport {
    let cfg = engine.truncation();
    let g = explicit_generator(engine, ground);
    let mut r = CheckReport::new("ice.bijectivity");
    for node in cfg.nodes(cfg.depth) {
        r.count("generators", 1);
        let mut seen = BTreeSet::new();
        let mut ok = true;
        for x in ground.points() {
            for level in -window..=window {
                match g(&node, x, level) {
                    Ok((y, l)) => {
                        if y != x || l < level || l > level + 1 || !seen.insert((y, l)) {
                            ok = false;
                        }
                    }
                    Err(_) => ok = false,
                }
            }
        }
        if !ok {
            r.fail(json!({"node": node}));
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum IndependenceMode {
    Exhaustive,
    Randomized { seed: u64, trials: usize },
}

/// Limit on the number of reduced words compared pairwise in exhaustive mode.
pub const EXHAUSTIVE_WORD_BUDGET: u128 = 4_000;

/// The separating point the existence argument provides for an inequivalent
/// pair: strip common entries, take a shallowest remaining entry, and find a
/// point of its set outside every set of the other side.
///
/// Returns the point together with the two counting values there.
pub fn proof_witness<E: Engine + ?Sized>(
    engine: &E,
    p: &Word,
    q: &Word,
) -> Result<(Node, Assignment, i64, i64)> {
    let (p, q) = p.strip_common(q);
    let node = p
        .nodes()
        .chain(q.nodes())
        .min_by(|a, b| a.depth().cmp(&b.depth()).then(a.cmp(b)))
        .cloned()
        .ok_or_else(|| Error::domain("words are equivalent"))?;
    let (mine, other) = if p.contains(&node) { (&p, &q) } else { (&q, &p) };
    let mut pt = separating_point(engine.registry(), &node, other)?;
    let chi_mine = engine.word_chi(mine)?;
    let chi_other = engine.word_chi(other)?;
    for b in chi_mine.bits() {
        pt.entry(b).or_insert(false);
    }
    let vm: i64 = chi_mine.value_at(&pt)?;
    let vo: i64 = chi_other.value_at(&pt)?;
    Ok((node, pt, vm, vo))
}

fn witness_json(registry: &BitRegistry, pt: &Assignment) -> serde_json::Value {
    let named: BTreeMap<String, bool> = pt
        .iter()
        .map(|(b, v)| {
            let owner = registry
                .owner(*b)
                .map(|n| n.to_string())
                .unwrap_or_else(|| b.to_string());
            (owner, *v)
        })
        .collect();
    json!(named)
}

fn check_pair<E: Engine + ?Sized>(
    engine: &E,
    p: &Word,
    q: &Word,
    equal: Result<bool>,
    r: &mut CheckReport,
) {
    r.count("pairs", 1);
    match equal {
        Ok(false) => {}
        Ok(true) => {
            let sep = proof_witness(engine, p, q).err().map(|e| e.to_string());
            r.fail(json!({"p": p, "q": q, "equal": true, "separating_point": sep}));
            return;
        }
        Err(e) => {
            r.fail(json!({"p": p, "q": q, "error": e.to_string()}));
            return;
        }
    }
    match proof_witness(engine, p, q) {
        Ok((_, _, vm, vo)) if vm > 0 && vo == 0 => r.count("witnesses_confirmed", 1),
        Ok((node, pt, vm, vo)) => r.fail(json!({
            "p": p, "q": q, "witness_node": node,
            "point": witness_json(engine.registry(), &pt), "values": [vm, vo]
        })),
        Err(e) => r.fail(json!({"p": p, "q": q, "witness_error": e.to_string()})),
    }
}

/// Independence axiom: inequivalent reduced words give different composites.
///
/// Each pair is decided by the symbolic equality oracle, and the separating
/// point from the existence argument is then rebuilt and evaluated as a
/// second, independent confirmation.
pub fn verify_independence<E: Engine + ?Sized>(
    engine: &E,
    size_bound: usize,
    mode: IndependenceMode,
) -> CheckReport {
    let cfg = *engine.truncation();
    let mut r = CheckReport::new("ice.independence");
    r.set("size_bound", size_bound as u64);
    match mode {
        IndependenceMode::Exhaustive => {
            let nodes = cfg.nodes(cfg.depth);
            let estimate = multiset_count(nodes.len() as u128, size_bound);
            if estimate > EXHAUSTIVE_WORD_BUDGET * 64 {
                r.fail(json!({"error": Error::Resource {
                    what: "exhaustive word enumeration".into(),
                    estimate,
                    budget: EXHAUSTIVE_WORD_BUDGET * 64,
                }.to_string()}));
                return r;
            }
            let words: Vec<Word> = multisets(&nodes, size_bound)
                .into_iter()
                .filter(is_reduced)
                .collect();
            if words.len() as u128 > EXHAUSTIVE_WORD_BUDGET {
                r.fail(json!({"error": Error::Resource {
                    what: "exhaustive pairwise independence".into(),
                    estimate: words.len() as u128,
                    budget: EXHAUSTIVE_WORD_BUDGET,
                }.to_string()}));
                return r;
            }
            r.set("reduced_words", words.len() as u64);
            let polys: Vec<Result<Multilinear>> = words.iter().map(|w| engine.multilinear(w)).collect();
            for i in 0..words.len() {
                for j in (i + 1)..words.len() {
                    let equal = match (&polys[i], &polys[j]) {
                        (Ok(a), Ok(b)) => Ok(a == b),
                        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
                    };
                    check_pair(engine, &words[i], &words[j], equal, &mut r);
                }
            }
        }
        IndependenceMode::Randomized { seed, trials } => {
            r.set("seed", seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut done = 0;
            while done < trials {
                let (p, q) = random_pair(&mut rng, &cfg, size_bound);
                if p == q {
                    continue;
                }
                done += 1;
                let equal = engine.equal_words(&p, &q);
                check_pair(engine, &p, &q, equal, &mut r);
            }
        }
    }
    r
}

/// A pair of reduced words, mixing unrelated words with near misses:
/// sibling or parent swaps, multiplicity changes, and exchanged root pairs.
pub fn random_pair<R: Rng>(rng: &mut R, cfg: &TruncationConfig, size_bound: usize) -> (Word, Word) {
    let p = reduced_random(rng, cfg, size_bound);
    let q = match rng.gen_range(0..5) {
        0 => reduced_random(rng, cfg, size_bound),
        1 if !p.is_empty() => {
            let victim = pick(rng, &p);
            let mut q = p.clone();
            q.remove_one(&victim);
            let replacement = match (victim.sibling(), rng.gen_bool(0.5)) {
                (Some(s), true) => s,
                _ => random_node(rng, cfg, cfg.depth),
            };
            q.insert(replacement);
            q
        }
        2 if !p.is_empty() => {
            let victim = pick(rng, &p);
            let mut q = p.clone();
            if rng.gen_bool(0.5) {
                q.insert(victim);
            } else {
                q.remove_one(&victim);
            }
            q
        }
        3 => {
            // two full root pairs: same shift everywhere when roots share bits
            let a = rng.gen_range(0..cfg.kappa as u32);
            let b = rng.gen_range(0..cfg.kappa as u32);
            let mut p2 = p.clone();
            p2.insert(Node::root(a, 0));
            p2.insert(Node::root(a, 1));
            let mut q = p.clone();
            q.insert(Node::root(b, 0));
            q.insert(Node::root(b, 1));
            return (reduce_canonical(&p2), reduce_canonical(&q));
        }
        _ => {
            let mut q = p.clone();
            if let Some(parent) = p.nodes().find_map(|n| n.parent()) {
                q.insert(parent);
            } else {
                q.insert(random_node(rng, cfg, cfg.depth));
            }
            q
        }
    };
    (p, reduce_canonical(&q))
}

fn reduced_random<R: Rng>(rng: &mut R, cfg: &TruncationConfig, size_bound: usize) -> Word {
    reduce_canonical(&random_word(rng, cfg, size_bound))
}

fn pick<R: Rng>(rng: &mut R, w: &Word) -> Node {
    let all: Vec<&Node> = w.iter().flat_map(|(n, k)| std::iter::repeat_n(n, k)).collect();
    all[rng.gen_range(0..all.len())].clone()
}

/// Every word equals its canonical form as a composite.
pub fn verify_canonical_semantics<E: Engine + ?Sized>(engine: &E, words: &[Word]) -> CheckReport {
    let mut r = CheckReport::new("ice.canonical_semantics");
    for w in words {
        r.count("words", 1);
        let c = reduce_canonical(w);
        match engine.equal_words(w, &c) {
            Ok(true) => {}
            Ok(false) => r.fail(json!({"word": w, "canonical": c})),
            Err(e) => r.fail(json!({"word": w, "error": e.to_string()})),
        }
    }
    r
}

/// Per-node polynomial cache for hot loops.
#[derive(Default)]
pub struct PolyCache {
    map: HashMap<Node, Multilinear>,
}

impl PolyCache {
    pub fn word<E: Engine + ?Sized>(&mut self, engine: &E, w: &Word) -> Result<Multilinear> {
        let mut acc = Multilinear::zero();
        for (n, k) in w.iter() {
            if !self.map.contains_key(n) {
                let p = engine.multilinear(&Word::singleton(n.clone()))?;
                self.map.insert(n.clone(), p);
            }
            acc.add_assign(&self.map[n].scaled(k as i64));
        }
        Ok(acc)
    }
}

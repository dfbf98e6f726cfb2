//! End-to-end runs behind the command-line tool: load a lattice, build the
//! labeling and the ICE, run every check, and assemble JSON reports.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog;
use crate::embedding::{Embedding, IndexedMonoid, NodeWindow, FRAGMENT_BUDGET};
use crate::enumeration::{required_branching, verify_enumeration, verify_parent_closure, Labeling};
use crate::error::{Error, Result};
use crate::family::{ExplicitGround, RootScheme};
use crate::ice::{
    equal_words_by_projection, equal_words_explicit, random_pair, verify_bijectivity,
    verify_commutativity, verify_composition, verify_independence, Engine, IceInstance,
    IndependenceMode, Multilinear, PolyCache,
};
use crate::lattice::{ideal_lattice_iso_check, ideals_enumerate, FiniteLattice, Ideal};
use crate::report::{timed, CheckReport, Report};
use crate::tree::{multisets, reduce_canonical, Node, TruncationConfig, Word};

/// Bits allowed in the explicit sub-instance used for commutativity and bijectivity.
pub const SUB_INSTANCE_BITS: usize = 12;
/// Sampled `(node, alpha)` pairs for composition when the truncation is larger.
pub const COMPOSITION_CAP: usize = 1_000_000;
/// Node visits allowed across all families in the join check.
pub const JOIN_BUDGET: u128 = 40_000_000;
/// Elements per fragment compared pairwise in the no-inverses check.
pub const INVERSE_PAIR_CAP: usize = 40;
/// Size bound for exhaustive oracle comparison.
pub const ORACLE_WORD_SIZE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunConfig {
    /// Catalog name or path to a lattice JSON file.
    pub lattice: String,
    pub kappa: Option<usize>,
    pub depth: Option<usize>,
    pub word_bound: usize,
    pub seed: u64,
    pub trials: usize,
    pub exhaustive_independence: bool,
    pub root_scheme: RootScheme,
    pub list_depth: usize,
    #[serde(skip)]
    pub timings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lattice: "M3".into(),
            kappa: None,
            depth: None,
            word_bound: 4,
            seed: 0,
            trials: 1000,
            exhaustive_independence: false,
            root_scheme: RootScheme::Independent,
            list_depth: 2,
            timings: false,
        }
    }
}

impl RunConfig {
    pub fn for_lattice(lattice: impl Into<String>) -> Self {
        RunConfig {
            lattice: lattice.into(),
            ..Default::default()
        }
    }
}

/// Values derived from a config once the lattice is known.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    #[serde(flatten)]
    pub run: RunConfig,
    pub lattice_name: String,
    pub elements: usize,
    pub compacts: usize,
    pub required_kappa: usize,
    pub kappa_used: usize,
    pub depth_used: usize,
}

/// Process exit code for an error: 2 for unreadable or invalid input, 3 for
/// configurations that cannot be run.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Description(_) | Error::NotALattice { .. } | Error::OrderViolation(_) => 2,
        _ => 3,
    }
}

/// Loads a lattice from a file path, or from the catalog when no such file exists.
pub fn load_source(source: &str) -> Result<FiniteLattice> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        FiniteLattice::from_json(&text)
    } else if catalog::description(source).is_some() {
        catalog::lattice(source)
    } else if source.ends_with(".json") || source.contains('/') {
        Err(Error::Io(format!("cannot read lattice file `{source}`")))
    } else {
        catalog::lattice(source)
    }
}

struct Setup {
    resolved: Resolved,
    labeling: Labeling,
    ideals: Vec<Ideal>,
}

fn setup(cfg: &RunConfig) -> Result<Setup> {
    let lattice = load_source(&cfg.lattice)?;
    if cfg.word_bound == 0 {
        return Err(Error::Config("word bound must be at least 1".into()));
    }
    let required = required_branching(&lattice);
    let kappa = cfg.kappa.unwrap_or(required);
    let n_compacts = lattice.compacts().len();
    let depth = cfg.depth.unwrap_or(n_compacts.max(1));
    if depth == 0 {
        return Err(Error::Config("depth must be at least 1".into()));
    }
    let ideals = ideals_enumerate(&lattice.compacts());
    let resolved = Resolved {
        run: cfg.clone(),
        lattice_name: cfg.lattice.clone(),
        elements: lattice.len(),
        compacts: n_compacts,
        required_kappa: required,
        kappa_used: kappa,
        depth_used: depth,
    };
    let labeling = Labeling::new(lattice, kappa)?;
    Ok(Setup {
        resolved,
        labeling,
        ideals,
    })
}

/// Every non-empty subset of `ideals`, by size and then index order.
pub fn non_empty_families(ideals: &[Ideal]) -> Vec<Vec<Ideal>> {
    let n = ideals.len();
    let mut masks: Vec<u64> = (1..(1u64 << n)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| ideals[i].clone()).collect())
        .collect()
}

/// Folds per-family reports into one check, tagging failures with their family.
fn aggregate(name: &str, l: &FiniteLattice, parts: Vec<(Vec<Ideal>, CheckReport)>) -> CheckReport {
    let mut r = CheckReport::new(name);
    r.set("families", parts.len() as u64);
    let mut notes = BTreeSet::new();
    for (family, part) in parts {
        let names: Vec<Vec<String>> = family.iter().map(|i| i.names(l)).collect();
        if !part.passed() {
            r.fail(json!({"family": names, "witnesses": part.witnesses}));
        }
        for (k, v) in &part.counts {
            if k != "failures" && k != "seed" {
                r.count(k, *v);
            }
        }
        notes.extend(part.notes);
    }
    r.notes.extend(notes);
    r
}

/// Sub-instances with explicit ground sets of at most `max_bits` bits: the
/// deepest one (then widest), and the widest one of depth `min(2, N)`.
pub fn explicit_sub_instances(cfg: &TruncationConfig, scheme: RootScheme, max_bits: usize) -> Vec<IceInstance> {
    let fits = |kappa: usize, depth: usize| {
        TruncationConfig::new(kappa, depth, cfg.word_bound)
            .ok()
            .and_then(|t| IceInstance::explicit(t, scheme, max_bits).ok())
    };
    let mut out: Vec<IceInstance> = Vec::new();
    let deep = (1..=cfg.depth)
        .rev()
        .find_map(|d| (1..=cfg.kappa).rev().find_map(|k| fits(k, d)));
    let wide = (1..=cfg.kappa).rev().find_map(|k| fits(k, cfg.depth.min(2)));
    for inst in deep.into_iter().chain(wide) {
        if !out.iter().any(|o| o.truncation() == inst.truncation()) {
            out.push(inst);
        }
    }
    out
}

fn on_sub_instances(
    name: &str,
    subs: &[IceInstance],
    full: &TruncationConfig,
    check: impl Fn(&IceInstance, &ExplicitGround) -> CheckReport,
) -> CheckReport {
    let mut r = CheckReport::new(name);
    if subs.is_empty() {
        r.fail(json!({"error": "no explicit sub-instance fits"}));
    }
    for s in subs {
        let st = s.truncation();
        let g = s.ground().expect("sub-instances fit their ground");
        r.merge(check(s, &g));
        if (st.kappa, st.depth) != (full.kappa, full.depth) {
            r.note(format!("explicit ground on the sub-instance kappa={} depth={}", st.kappa, st.depth));
        }
    }
    r
}

fn ice_checks(cfg: &RunConfig, engine: &IceInstance) -> Vec<CheckReport> {
    let t = *engine.truncation();
    let mut out = Vec::new();
    let ground = engine.ground().ok().filter(|g| g.m() <= SUB_INSTANCE_BITS);
    out.push(timed(cfg.timings, || {
        verify_composition(engine, COMPOSITION_CAP, cfg.seed, ground.as_ref())
    }));
    let subs = explicit_sub_instances(&t, cfg.root_scheme, SUB_INSTANCE_BITS);
    out.push(timed(cfg.timings, || {
        on_sub_instances("ice.commutativity", &subs, &t, |s, g| verify_commutativity(s, g, 2, usize::MAX))
    }));
    out.push(timed(cfg.timings, || {
        on_sub_instances("ice.bijectivity", &subs, &t, |s, g| verify_bijectivity(s, g, 2))
    }));
    let mode = if cfg.exhaustive_independence {
        IndependenceMode::Exhaustive
    } else {
        IndependenceMode::Randomized {
            seed: cfg.seed,
            trials: cfg.trials,
        }
    };
    out.push(timed(cfg.timings, || verify_independence(engine, cfg.word_bound, mode)));
    out
}

/// The deepest join-check depth within `JOIN_BUDGET` node visits.
fn join_depth(labeling: &Labeling, depth: usize, families: usize) -> usize {
    let t = TruncationConfig::new(labeling.kappa(), depth, 1).expect("validated");
    (1..=depth)
        .rev()
        .find(|&d| t.node_count(d).saturating_mul(families as u128) <= JOIN_BUDGET)
        .unwrap_or(1)
}

fn embedding_checks(cfg: &RunConfig, s: &Setup, engine: &IceInstance) -> Result<Vec<CheckReport>> {
    let l = s.labeling.lattice();
    let depth = s.resolved.depth_used;
    let window = NodeWindow::fit(&s.labeling, depth.min(2), cfg.word_bound, FRAGMENT_BUDGET);
    let emb = Embedding::new(&s.labeling, engine, window, cfg.word_bound, FRAGMENT_BUDGET)?;
    let families = non_empty_families(&s.ideals);
    let mut out = Vec::new();

    out.push(timed(cfg.timings, || {
        let jd = join_depth(&s.labeling, depth, families.len());
        let parts: Vec<_> = families
            .par_iter()
            .map(|f| (f.clone(), emb.verify_join_preservation(f, jd)))
            .collect();
        let mut r = aggregate("embedding.join", l, parts);
        r.set("depth_budget", jd as u64);
        if jd < depth {
            r.note(format!("join depth restricted from {depth} to {jd}"));
        }
        r
    }));

    // Fragments are shared across families; fill the cache before fanning out.
    for i in &s.ideals {
        emb.fragment(i)?;
    }
    out.push(timed(cfg.timings, || {
        let parts: Vec<_> = families
            .par_iter()
            .enumerate()
            .map(|(k, f)| {
                let seed = cfg.seed.wrapping_add(k as u64);
                (f.clone(), emb.verify_meet_preservation(f, seed, cfg.trials))
            })
            .collect();
        let mut r = aggregate("embedding.meet", l, parts);
        r.set("seed", cfg.seed);
        r.set("window_depth", window.depth as u64);
        r.set("window_root_branches", window.root_branches as u64);
        r.set("window_branches", window.branches as u64);
        r
    }));
    out.push(timed(cfg.timings, || emb.verify_injectivity(&s.ideals)));
    out.push(timed(cfg.timings, || emb.verify_bottom()));
    out.push(timed(cfg.timings, || emb.verify_no_inverses(&s.ideals, INVERSE_PAIR_CAP)));
    Ok(out)
}

/// Full verification run; the report passes iff every check does.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Report<Resolved>> {
    let s = setup(cfg)?;
    let depth = s.resolved.depth_used;
    let kappa = s.resolved.kappa_used;
    let mut checks = vec![
        timed(cfg.timings, || ideal_lattice_iso_check(s.labeling.lattice())),
        timed(cfg.timings, || verify_enumeration(&s.labeling, depth)),
        timed(cfg.timings, || verify_parent_closure(&s.labeling, &s.ideals, depth)),
    ];
    let engine = IceInstance::new(TruncationConfig::new(kappa, depth, cfg.word_bound)?, cfg.root_scheme);
    checks.extend(ice_checks(cfg, &engine));
    checks.extend(embedding_checks(cfg, &s, &engine)?);
    Ok(Report::new(s.resolved, checks))
}

#[derive(Debug, Clone, Serialize)]
pub struct LabeledNode {
    pub node: Node,
    pub label: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdealEntry {
    pub members: Vec<String>,
    /// `|S(I)|` at each depth `1..=N`.
    pub s_set_counts: Vec<u128>,
    /// `S(I)` up to the listing depth.
    pub s_set: Vec<LabeledNode>,
    pub fragment_size: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EmbedArtifact {
    pub config: Resolved,
    pub lattice: crate::lattice::LatticeDescription,
    pub fragment_window: NodeWindow,
    pub ideals: Vec<IdealEntry>,
    pub distinct_s_sets: bool,
}

/// Number of nodes per depth carrying each label, by dynamic programming over labels.
pub fn label_counts(labeling: &Labeling, depth: usize) -> Vec<BTreeMap<usize, u128>> {
    let mut layer: BTreeMap<usize, u128> = BTreeMap::new();
    for a in 0..labeling.kappa() as u32 {
        *layer.entry(labeling.root_label(a)).or_default() += 2;
    }
    let mut out = Vec::new();
    for d in 1..=depth {
        out.push(layer.clone());
        if d == depth {
            break;
        }
        let mut next = BTreeMap::new();
        for (&c, &k) in &layer {
            for a in 0..labeling.kappa() as u32 {
                for bit in [0, 1] {
                    *next.entry(labeling.child_label(c, a, bit)).or_default() += k;
                }
            }
        }
        layer = next;
    }
    out
}

/// The embedding description: each ideal with its S-set and fragment size.
pub fn cmd_embed(cfg: &RunConfig) -> Result<EmbedArtifact> {
    let s = setup(cfg)?;
    let l = s.labeling.lattice();
    let depth = s.resolved.depth_used;
    let engine = IceInstance::new(
        TruncationConfig::new(s.resolved.kappa_used, depth, cfg.word_bound)?,
        cfg.root_scheme,
    );
    let window = NodeWindow::fit(&s.labeling, depth.min(2), cfg.word_bound, FRAGMENT_BUDGET);
    let emb = Embedding::new(&s.labeling, &engine, window, cfg.word_bound, FRAGMENT_BUDGET)?;
    let counts = label_counts(&s.labeling, depth);
    let mut listed: Vec<(Node, usize)> = Vec::new();
    s.labeling.walk(cfg.list_depth.min(depth), |n, c| listed.push((n.clone(), c)));
    listed.sort();

    let mut ideals = Vec::new();
    let mut seen = BTreeSet::new();
    for i in &s.ideals {
        let s_set: Vec<LabeledNode> = listed
            .iter()
            .filter(|(_, c)| i.contains(*c))
            .map(|(n, c)| LabeledNode {
                node: n.clone(),
                label: l.name(*c).to_string(),
            })
            .collect();
        seen.insert(s_set.iter().map(|x| x.node.clone()).collect::<Vec<_>>());
        ideals.push(IdealEntry {
            members: i.names(l),
            s_set_counts: counts
                .iter()
                .map(|layer| layer.iter().filter(|(c, _)| i.contains(**c)).map(|(_, k)| k).sum())
                .collect(),
            s_set,
            fragment_size: emb.fragment(i)?.words.len(),
        });
    }
    Ok(EmbedArtifact {
        lattice: l.description(),
        fragment_window: window,
        distinct_s_sets: seen.len() == s.ideals.len(),
        ideals,
        config: s.resolved,
    })
}

/// Cross-checks the equality and membership oracles on an explicit instance.
///
/// Exhaustively, the partitions of all words of size `<= 3` induced by
/// symbolic equality, by evaluation on the ground set, and by canonical form
/// must coincide; membership by canonical form and by search must agree for
/// every ideal. Seeded random pairs then compare all three equality routes.
pub fn cmd_oracle_compare(cfg: &RunConfig) -> Result<Report<Resolved>> {
    let s = setup(cfg)?;
    let t = TruncationConfig::new(s.resolved.kappa_used, s.resolved.depth_used, cfg.word_bound)?;
    let engine = IceInstance::explicit(t, cfg.root_scheme, crate::family::DEFAULT_GROUND_BITS)?;
    let ground = engine.ground()?;
    let words = multisets(&t.nodes(t.depth), ORACLE_WORD_SIZE.min(cfg.word_bound));

    let mut eq = CheckReport::new("oracle.equality_exhaustive");
    eq.set("words", words.len() as u64);
    eq.set("points", ground.size());
    let mut by_poly: HashMap<Multilinear, usize> = HashMap::new();
    let mut by_eval: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut by_canon: HashMap<Word, usize> = HashMap::new();
    let mut cache = PolyCache::default();
    for (k, w) in words.iter().enumerate() {
        let key_poly = cache.word(&engine, w)?;
        let chi = engine.word_chi(w)?;
        let key_eval = ground
            .points()
            .map(|p| chi.value_at::<i64>(&ground.assignment(p)))
            .collect::<Result<Vec<i64>>>()?;
        let a = *by_poly.entry(key_poly).or_insert(k);
        let b = *by_eval.entry(key_eval).or_insert(k);
        let c = *by_canon.entry(reduce_canonical(w)).or_insert(k);
        eq.count("queries", 1);
        if a != b || a != c {
            eq.fail(json!({"word": w, "symbolic": words[a], "explicit": words[b], "canonical": words[c]}));
        }
    }
    eq.set("classes", by_canon.len() as u64);

    let mut mem = CheckReport::new("oracle.membership");
    for i in &s.ideals {
        let m = IndexedMonoid::new(&s.labeling, i.clone());
        for w in &words {
            mem.count("queries", 1);
            let direct = m.member(w)?;
            let search = m.member_by_search(w, &t, 1, 1_000_000)?;
            if direct != search {
                mem.fail(json!({"ideal": i.names(s.labeling.lattice()), "word": w,
                    "canonical": direct, "search": search}));
            }
        }
    }

    let mut rnd = CheckReport::new("oracle.equality_random");
    rnd.set("seed", cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.trials {
        let (p, q) = random_pair(&mut rng, &t, cfg.word_bound);
        rnd.count("queries", 1);
        let a = engine.equal_words(&p, &q)?;
        let b = equal_words_by_projection(&engine, &p, &q, crate::family::DEFAULT_GROUND_BITS)?;
        let c = equal_words_explicit(&engine, &ground, &p, &q)?;
        let d = reduce_canonical(&p) == reduce_canonical(&q);
        if a != b || a != c || a != d {
            rnd.fail(json!({"p": p, "q": q, "symbolic": a, "projection": b, "explicit": c, "canonical": d}));
        }
    }
    Ok(Report::new(s.resolved, vec![eq, mem, rnd]))
}

/// Catalog listing: name, element count, ideal count, required branching.
pub fn cmd_catalog() -> Result<Value> {
    let mut out = Vec::new();
    for name in catalog::NAMES {
        let l = catalog::lattice(name)?;
        out.push(json!({
            "name": name,
            "elements": l.len(),
            "ideals": ideals_enumerate(&l.compacts()).len(),
            "compacts": l.compacts().len(),
            "required_kappa": required_branching(&l),
        }));
    }
    Ok(json!({ "lattices": out }))
}

//! Acceptance gate. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use monoid_embed::catalog;
use monoid_embed::enumeration::verify_enumeration;
use monoid_embed::ice::{
    verify_commutativity, verify_composition, verify_independence, IndependenceMode,
};
use monoid_embed::lattice::{ideal_lattice_iso_check, ideals_enumerate};
use monoid_embed::pipeline::{cmd_embed, cmd_oracle_compare, cmd_verify, Resolved, RunConfig};
use monoid_embed::tree::{multisets, normal_forms};
use monoid_embed::{
    reduce_canonical, required_branching, CheckReport, FiniteLattice, IceInstance, Labeling,
    Node, Report, RootScheme, TruncationConfig, Word,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure!(t <= limit, "{what} took {t:?}, limit {limit:?}");
    Ok(())
}

fn passed(r: &CheckReport) -> Result<(), String> {
    ensure!(
        r.passed(),
        "{} failed: {}",
        r.name,
        serde_json::to_string(&r.witnesses).unwrap_or_default()
    );
    Ok(())
}

// ---- test-side oracles ----

/// Down-closed, join-closed subsets of the non-bottom elements, by brute force.
fn brute_ideal_count(l: &FiniteLattice) -> usize {
    let c: Vec<usize> = l.elements().filter(|&x| x != l.bottom()).collect();
    (0u32..(1 << c.len()))
        .filter(|&mask| {
            let has = |x: usize| match c.iter().position(|&y| y == x) {
                Some(i) => mask >> i & 1 == 1,
                None => false,
            };
            c.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).all(|(_, &x)| {
                c.iter().all(|&y| !l.leq(y, x) || has(y))
                    && c.iter().all(|&y| !has(y) || has(l.join(x, y)))
            })
        })
        .count()
}

/// `max_c |{(d, e) in C x C : c <= d v e}|` and `|C|`, by brute force.
fn brute_kappa(l: &FiniteLattice) -> usize {
    let c: Vec<usize> = l.elements().filter(|&x| x != l.bottom()).collect();
    let pairs = c
        .iter()
        .map(|&x| {
            c.iter()
                .flat_map(|&d| c.iter().map(move |&e| (d, e)))
                .filter(|&(d, e)| l.leq(x, l.join(d, e)))
                .count()
        })
        .max()
        .unwrap_or(0);
    pairs.max(c.len())
}

type RawNode = (Vec<u32>, Vec<u8>);

fn raw_nodes(kappa: u32, depth: usize) -> Vec<RawNode> {
    let mut out = Vec::new();
    let mut layer: Vec<RawNode> = (0..kappa)
        .flat_map(|a| [(vec![a], vec![0]), (vec![a], vec![1])])
        .collect();
    for _ in 0..depth {
        out.extend(layer.iter().cloned());
        layer = layer
            .iter()
            .flat_map(|(e, p)| {
                (0..kappa).flat_map(move |a| {
                    [0u8, 1].map(|b| {
                        let (mut e, mut p) = (e.clone(), p.clone());
                        e.push(a);
                        p.push(b);
                        (e, p)
                    })
                })
            })
            .collect();
    }
    out
}

fn raw_multisets(nodes: &[RawNode], k: usize) -> Vec<Vec<RawNode>> {
    let mut out = vec![vec![]];
    let mut frontier: Vec<(usize, Vec<RawNode>)> = vec![(0, vec![])];
    for _ in 0..k {
        let mut next = Vec::new();
        for (start, w) in &frontier {
            for (i, n) in nodes.iter().enumerate().skip(*start) {
                let mut v = w.clone();
                v.push(n.clone());
                out.push(v.clone());
                next.push((i, v));
            }
        }
        frontier = next;
    }
    out
}

fn raw_sibling_pairs(w: &[RawNode]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..w.len() {
        for j in 0..w.len() {
            let ((e1, p1), (e2, p2)) = (&w[i], &w[j]);
            let n = e1.len();
            if i != j && n >= 2 && e1 == e2 && p1[..n - 1] == p2[..n - 1] && p1[n - 1] == 0 && p2[n - 1] == 1 {
                out.push((i, j));
            }
        }
    }
    out
}

/// Every irreducible word reachable by collapsing sibling pairs in any order.
fn raw_normal_forms(w: Vec<RawNode>, memo: &mut HashMap<Vec<RawNode>, BTreeSet<Vec<RawNode>>>) -> BTreeSet<Vec<RawNode>> {
    let mut w = w;
    w.sort();
    if let Some(r) = memo.get(&w) {
        return r.clone();
    }
    let steps = raw_sibling_pairs(&w);
    let out = if steps.is_empty() {
        BTreeSet::from([w.clone()])
    } else {
        let mut out = BTreeSet::new();
        for (i, j) in steps {
            let (mut e, mut p) = w[i].clone();
            e.pop();
            p.pop();
            let mut v: Vec<RawNode> = w
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != i && *k != j)
                .map(|(_, x)| x.clone())
                .collect();
            v.push((e, p));
            out.extend(raw_normal_forms(v, memo));
        }
        out
    };
    memo.insert(w, out.clone());
    out
}

fn to_word(w: &[RawNode]) -> Word {
    w.iter()
        .map(|(e, p)| Node::new(e.clone(), p.clone()).expect("valid node"))
        .collect()
}

// ---- shared pipeline runs ----

const SMALL: [&str; 7] = ["chain2", "chain3", "chain4", "chain5", "boolean2", "M3", "N5"];

type Timed = (Report<Resolved>, Duration);

fn verify_report(name: &str) -> &'static Timed {
    static CACHE: OnceLock<BTreeMap<String, OnceLock<Timed>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| {
        catalog::NAMES
            .iter()
            .map(|n| (n.to_string(), OnceLock::new()))
            .collect()
    });
    cache[name].get_or_init(|| {
        let start = Instant::now();
        let r = cmd_verify(&RunConfig::for_lattice(name)).expect("verify runs");
        (r, start.elapsed())
    })
}

fn check<'a>(r: &'a Report<Resolved>, name: &str) -> &'a CheckReport {
    r.checks
        .iter()
        .find(|c| c.name == name)
        .unwrap_or_else(|| panic!("missing check {name}"))
}

// ---- criteria ----

fn ideal_lattices() -> Outcome {
    let start = Instant::now();
    let mut sizes = Vec::new();
    for name in catalog::NAMES {
        let l = catalog::lattice(name).map_err(|e| e.to_string())?;
        let ideals = ideals_enumerate(&l.compacts());
        ensure!(ideals.len() == l.len(), "{name}: {} ideals for {} elements", ideals.len(), l.len());
        ensure!(ideals.len() == brute_ideal_count(&l), "{name}: brute-force ideal count differs");
        passed(&ideal_lattice_iso_check(&l))?;
        sizes.push(format!("{name}={}", l.len()));
    }
    within(start, Duration::from_secs(1), "ideal lattices")?;
    Ok(sizes.join(" "))
}

fn ice_axioms_chain2() -> Outcome {
    let start = Instant::now();
    let cfg = TruncationConfig::new(1, 3, 3).unwrap();
    let e = IceInstance::new(cfg, RootScheme::Independent);
    let g = e.ground().map_err(|e| e.to_string())?;
    let comp = verify_composition(&e, usize::MAX, 0, Some(&g));
    passed(&comp)?;
    ensure!(comp.notes.is_empty(), "composition was sampled");
    // interior nodes at depth < 3, one branch each
    let interior = raw_nodes(1, 2).len() as u64;
    ensure!(comp.get("identities") == interior, "identities {} != {interior}", comp.get("identities"));
    let comm = verify_commutativity(&e, &g, 3, usize::MAX);
    passed(&comm)?;
    ensure!(comm.get("nodes") == raw_nodes(1, 3).len() as u64, "commutativity skipped nodes");
    let ind = verify_independence(&e, 3, IndependenceMode::Exhaustive);
    passed(&ind)?;
    let nodes = raw_nodes(1, 3);
    let reduced = raw_multisets(&nodes, 3)
        .into_iter()
        .filter(|w| raw_sibling_pairs(w).is_empty())
        .count() as u64;
    ensure!(ind.get("reduced_words") == reduced, "reduced words {} != {reduced}", ind.get("reduced_words"));
    let pairs = reduced * (reduced - 1) / 2;
    ensure!(ind.get("witnesses_confirmed") == pairs, "confirmed {} of {pairs}", ind.get("witnesses_confirmed"));
    within(start, Duration::from_secs(10), "chain2 axioms")?;
    Ok(format!("{interior} identities, {} commuting pairs, {pairs} independent pairs", comm.get("pairs")))
}

fn ice_axioms_m3() -> Outcome {
    let start = Instant::now();
    let l = catalog::lattice("M3").unwrap();
    let kappa = required_branching(&l);
    ensure!(kappa == brute_kappa(&l), "required branching {kappa} != {}", brute_kappa(&l));
    let e = IceInstance::new(TruncationConfig::new(kappa, 2, 4).unwrap(), RootScheme::Independent);
    let comp = verify_composition(&e, usize::MAX, 0, None);
    passed(&comp)?;
    let interior = (2 * kappa * kappa) as u64;
    ensure!(comp.get("identities") == interior, "identities {} != {interior}", comp.get("identities"));
    let ind = verify_independence(&e, 4, IndependenceMode::Randomized { seed: 0, trials: 1000 });
    passed(&ind)?;
    ensure!(ind.get("pairs") >= 1000, "only {} pairs", ind.get("pairs"));
    within(start, Duration::from_secs(60), "M3 axioms")?;
    Ok(format!("kappa={kappa}, {interior} identities, {} random pairs", ind.get("pairs")))
}

fn oracle_agreement() -> Outcome {
    let mut queries = 0;
    for n in 1..=3 {
        let mut cfg = RunConfig::for_lattice("chain2");
        cfg.depth = Some(n);
        let r = cmd_oracle_compare(&cfg).map_err(|e| e.to_string())?;
        for c in &r.checks {
            passed(c)?;
            queries += c.get("queries");
        }
        let nodes = raw_nodes(1, n);
        let words = raw_multisets(&nodes, 3);
        let classes = words.iter().filter(|w| raw_sibling_pairs(w).is_empty()).count() as u64;
        let eq = check(&r, "oracle.equality_exhaustive");
        ensure!(eq.get("words") == words.len() as u64, "N={n}: {} words tested", eq.get("words"));
        ensure!(eq.get("classes") == classes, "N={n}: {} classes, expected {classes}", eq.get("classes"));
        ensure!(check(&r, "oracle.equality_random").get("queries") == 1000, "random queries");
    }
    Ok(format!("{queries} queries, zero disagreements"))
}

fn confluence() -> Outcome {
    let nodes = raw_nodes(1, 3);
    let mut memo = HashMap::new();
    let mut words = 0;
    for w in raw_multisets(&nodes, 4) {
        let ours = raw_normal_forms(w.clone(), &mut memo);
        let word = to_word(&w);
        let lib = normal_forms(&word);
        ensure!(ours.len() == 1, "{word} has {} normal forms", ours.len());
        ensure!(lib.len() == 1, "{word}: library explorer found {} normal forms", lib.len());
        let nf = to_word(ours.iter().next().unwrap());
        ensure!(reduce_canonical(&word) == nf, "{word}: canonical form differs from {nf}");
        words += 1;
    }
    let lib_words = multisets(&TruncationConfig::new(1, 3, 4).unwrap().nodes(3), 4).len();
    ensure!(lib_words == words, "library enumerates {lib_words} words, oracle {words}");
    Ok(format!("{words} words, each with one normal form"))
}

fn enumeration_properties() -> Outcome {
    let mut out = Vec::new();
    for name in catalog::NAMES {
        let start = Instant::now();
        let l = catalog::lattice(name).unwrap();
        let n = l.compacts().len();
        let lab = Labeling::new(l, required_branching(&catalog::lattice(name).unwrap())).unwrap();
        let r = verify_enumeration(&lab, n);
        passed(&r)?;
        if n <= 4 {
            ensure!(r.notes.is_empty(), "{name}: depth was restricted");
            within(start, Duration::from_secs(60), name)?;
        } else {
            ensure!(r.notes.iter().any(|s| s.contains("restricted")), "{name}: restriction not recorded");
        }
        out.push(format!("{name}:N={}", if n <= 4 { n } else { 2 }));
    }
    Ok(out.join(" "))
}

fn main_theorem() -> Outcome {
    let mut out = Vec::new();
    for name in SMALL {
        let (r, t) = verify_report(name);
        let n = r.config.compacts;
        ensure!(r.config.run.word_bound == 4, "word bound");
        for c in ["embedding.join", "embedding.meet", "embedding.injectivity", "embedding.bottom"] {
            passed(check(r, c))?;
        }
        let join = check(r, "embedding.join");
        ensure!(join.get("depth_budget") as usize == n.max(1), "{name}: join depth {}", join.get("depth_budget"));
        let ideals = r.config.elements as u64;
        ensure!(join.get("families") == (1 << ideals) - 1, "{name}: {} families", join.get("families"));
        ensure!(check(r, "embedding.meet").get("families") == (1 << ideals) - 1, "{name}: meet families");
        let inj = check(r, "embedding.injectivity");
        ensure!(inj.get("pairs") == ideals * (ideals - 1) / 2, "{name}: injectivity pairs");
        ensure!(*t <= Duration::from_secs(300), "{name}: {t:?}");
        out.push(format!("{name}:{}fam/{:.1}s", join.get("families"), t.as_secs_f64()));
    }
    Ok(out.join(" "))
}

fn no_inverses() -> Outcome {
    let mut elements = 0;
    for name in catalog::NAMES {
        let (r, _) = verify_report(name);
        let c = check(r, "embedding.no_inverses");
        passed(c)?;
        ensure!(c.get("elements") > 0 || r.config.compacts == 0, "{name}: empty fragments");
        elements += c.get("elements");
    }
    Ok(format!("{elements} non-identity fragment elements"))
}

fn determinism() -> Outcome {
    for name in ["chain3", "M3"] {
        let mut cfg = RunConfig::for_lattice(name);
        cfg.seed = 7;
        let a = cmd_verify(&cfg).map_err(|e| e.to_string())?.to_json();
        let b = cmd_verify(&cfg).map_err(|e| e.to_string())?.to_json();
        ensure!(a == b, "{name}: verify reports differ");
        let ea = serde_json::to_string(&cmd_embed(&cfg).map_err(|e| e.to_string())?).unwrap();
        let eb = serde_json::to_string(&cmd_embed(&cfg).map_err(|e| e.to_string())?).unwrap();
        ensure!(ea == eb, "{name}: embed artifacts differ");
    }
    Ok("verify and embed byte-identical on chain3, M3".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ideal-lattice representation", ideal_lattices),
        ("ICE axioms on chain2", ice_axioms_chain2),
        ("ICE axioms at scale on M3", ice_axioms_m3),
        ("oracle agreement", oracle_agreement),
        ("confluence", confluence),
        ("enumeration properties", enumeration_properties),
        ("join/meet/injectivity/bottom", main_theorem),
        ("no inverses", no_inverses),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL  {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

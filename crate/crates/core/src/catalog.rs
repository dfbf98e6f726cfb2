//! Built-in lattices.

use crate::error::{Error, Result};
use crate::lattice::{load_lattice, FiniteLattice, LatticeDescription};

pub const NAMES: [&str; 8] = [
    "chain2", "chain3", "chain4", "chain5", "boolean2", "boolean3", "M3", "N5",
];

fn covers(elements: &[&str], covers: &[(&str, &str)]) -> LatticeDescription {
    LatticeDescription {
        elements: elements.iter().map(|s| s.to_string()).collect(),
        leq: None,
        covers: Some(
            covers
                .iter()
                .map(|(x, y)| (x.to_string(), y.to_string()))
                .collect(),
        ),
    }
}

fn chain(k: usize) -> LatticeDescription {
    let names = ["0", "a", "b", "c", "d"];
    let elems = &names[..k];
    let pairs: Vec<(&str, &str)> = elems.windows(2).map(|w| (w[0], w[1])).collect();
    covers(elems, &pairs)
}

pub fn description(name: &str) -> Option<LatticeDescription> {
    let canonical = NAMES.iter().find(|n| n.eq_ignore_ascii_case(name))?;
    Some(match *canonical {
        "chain2" => chain(2),
        "chain3" => chain(3),
        "chain4" => chain(4),
        "chain5" => chain(5),
        "boolean2" => covers(
            &["0", "x", "y", "1"],
            &[("0", "x"), ("0", "y"), ("x", "1"), ("y", "1")],
        ),
        "boolean3" => covers(
            &["0", "a", "b", "c", "ab", "ac", "bc", "1"],
            &[
                ("0", "a"),
                ("0", "b"),
                ("0", "c"),
                ("a", "ab"),
                ("a", "ac"),
                ("b", "ab"),
                ("b", "bc"),
                ("c", "ac"),
                ("c", "bc"),
                ("ab", "1"),
                ("ac", "1"),
                ("bc", "1"),
            ],
        ),
        "M3" => covers(
            &["0", "a", "b", "c", "1"],
            &[("0", "a"), ("0", "b"), ("0", "c"), ("a", "1"), ("b", "1"), ("c", "1")],
        ),
        "N5" => covers(
            &["0", "a", "b", "c", "1"],
            &[("0", "a"), ("a", "b"), ("b", "1"), ("0", "c"), ("c", "1")],
        ),
        _ => unreachable!("every catalog name has a description"),
    })
}

pub fn lattice(name: &str) -> Result<FiniteLattice> {
    let desc = description(name)
        .ok_or_else(|| Error::Description(format!("no catalog lattice named `{name}`")))?;
    load_lattice(&desc)
}

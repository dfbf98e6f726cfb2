//! Finite-scale construction of the embedding of an algebraic lattice
//! `Id(C)` into the lattice of submonoids of a transformation monoid.
//!
//! Generators are indexed by nodes of a truncated binary-branching tree,
//! realized as permutations of `A x Z` built from an independent family of
//! subsets of `A`. Lattice elements label the tree so that joins can be
//! decomposed along it; an ideal `I` is sent to the monoid generated by the
//! nodes whose label lies in `I`.

pub mod catalog;
pub mod embedding;
pub mod enumeration;
pub mod error;
pub mod family;
pub mod ice;
pub mod lattice;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod tree;

pub use embedding::{factorize, monoid_enumerate, Embedding, IndexedMonoid, NodeWindow};
pub use enumeration::{required_branching, Labeling};
pub use error::{Error, Result};
pub use family::{BitRegistry, Cube, ExplicitGround, RootScheme};
pub use ice::{CountingVector, Engine, GenericMultilinear, GenericPoint, IceInstance, Multilinear};
pub use lattice::{ideals_enumerate, FiniteLattice, Ideal};
pub use pipeline::RunConfig;
pub use report::{CheckReport, Report};
pub use scalar::Level;
pub use tree::{reduce_canonical, Node, TruncationConfig, Word};

/// A point of `A x Z` with exact integer levels.
pub type Point = GenericPoint<num_bigint::BigInt>;
/// A point with machine-width levels.
pub type Point64 = GenericPoint<i64>;

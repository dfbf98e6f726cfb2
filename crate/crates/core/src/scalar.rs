//! Integer scalars for the level coordinate of `lambda x Z` and for counting
//! vector values.

use std::fmt::{Debug, Display};
use std::hash::Hash;

use num_bigint::BigInt;
use num_traits::{FromPrimitive, Signed, ToPrimitive};

/// An exact signed integer type usable as a level or counting value.
///
/// Implemented for the machine integers and for `BigInt`. Machine integers
/// panic on overflow in debug builds; `BigInt` never overflows.
pub trait Level:
    Signed + FromPrimitive + ToPrimitive + Clone + Ord + Hash + Debug + Display + Send + Sync
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in level type")
    }
}

impl Level for i32 {}
impl Level for i64 {}
impl Level for i128 {}
impl Level for BigInt {}

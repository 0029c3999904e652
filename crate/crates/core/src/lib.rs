//! Heyting-valued model theory on finite presheaf structures.
//!
//! The crate evaluates formulae in presheaves of L-structures over a finite
//! Heyting algebra, computes the back-and-forth refinements `Q_α(p)`, solves
//! the associated games, and builds invariant functions and Scott sentences.
//! Everything is exact and works on finite instances only.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod backforth;
pub mod games;
pub mod gen;
pub mod heyting;
pub mod invariants;
pub mod presheaf;
pub mod semantics;
pub mod syntax;
pub mod transform;

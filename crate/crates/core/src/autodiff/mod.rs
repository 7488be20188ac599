//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward pass. [`Tape::backward`]
//! walks the recording in reverse creation order, visiting each node once and
//! accumulating into parents. The set of primitives is closed; see
//! [`PRIMITIVES`].

pub mod checks;
mod gradcheck;
mod tape;

pub use gradcheck::grad_check;
pub use tape::{Axis, Tape, Var, DIV_GUARD, PRIMITIVES};

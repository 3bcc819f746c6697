//! Minimal reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is a tape: every operation appends a node whose value is
//! computed eagerly, so node order is already a topological order and
//! [`Graph::backward`] simply walks the tape in reverse. Leaves are either
//! parameters (gradients are tracked) or constants (they are not, and
//! neither is anything computed purely from constants).

mod check;
mod graph;

pub use check::{grad_check, grad_check_sampled, GradCheckReport};
pub use graph::{rotate_pairs, Graph, NodeId};

//! Elliptic boundary value problems with integral (nonlocal) boundary
//! conditions on perforated domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod expr;
pub mod fem;
pub mod geometry;
pub mod nonlocal;
pub mod pipeline;
pub mod radial;
pub mod sweep;
pub mod verify;

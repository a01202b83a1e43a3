//! Resolvents and bounded H∞ functional calculus for degenerate elliptic
//! boundary value problems on the half-space.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod degenerate;
pub mod dirichlet;
pub mod error;
pub mod expr;
pub mod fd;
pub mod hinfty;
pub mod field;
pub mod jet;
pub mod operator;
pub mod quadrature;
pub mod resolvent;
pub mod roots;
pub mod symbol;

pub use error::{DbvpError, Result};

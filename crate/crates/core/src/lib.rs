//! Attractive–repulsive power-law equilibrium measures on balls.
//!
//! The measure is expanded in a weighted radial Jacobi basis in which the
//! power-law potentials become banded or rapidly decaying matrices. Solving
//! the resulting linear system at fixed support radius, normalising by mass
//! and minimising the Euler–Lagrange constant over the radius yields the
//! equilibrium measure.

// `!(x > 0.0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic_reference;
pub mod brute_oracles;
pub mod cli;
pub mod eqm_solver;
pub mod jacobi_basis;
pub mod potential_ops;
pub mod specfun;

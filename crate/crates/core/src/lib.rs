//! Regularized Schrödinger fundamental solutions on flat manifolds.
//!
//! The kernel of the hypoelliptic operator `Δ − κ∂ₜ`, `κ = (ε+i)/(ε²+1)`, is
//! evaluated pointwise ([`kernel`]), periodized over lattices with spin and
//! pin sign characters onto tori, cylinders, Möbius strips and Klein bottles
//! ([`geometry`], [`periodize`]), and used to drive the evolution semigroup
//! `e^{−tλ/κ}` on grid functions ([`semigroup`]). The [`clifford`] and
//! [`guenter`] modules hold the Dirac-operator and Günter-derivative
//! certificates, and [`cli`] is the command-line front end.
//!
//! Conventions: `Δ = Σⱼ ∂²/∂xⱼ²` throughout, generator indices are 0-based
//! in the Rust API and 1-based on the command line.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::manual_is_multiple_of)]

pub mod cli;
pub mod clifford;
pub mod error;
pub mod geometry;
pub mod guenter;
pub mod kernel;
pub mod periodize;
pub mod semigroup;
pub mod sum;
pub mod verify;

pub use num_complex::Complex64;

pub use error::{Error, Result};
pub use geometry::{Lattice, LatticePoint, ManifoldKind, ManifoldSpec, SpinStructure};
pub use kernel::{MultiIndex, RegKernelParams};
pub use periodize::TruncationPolicy;
pub use semigroup::{GridFunction, TransverseBox};

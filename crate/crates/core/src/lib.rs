//! Structure analysis for finite families of joint system-environment states.
//!
//! Given joint states `ρ_se` on `H_s ⊗ H_e`, this crate decides whether every
//! reduced dynamical map `ρ_s ↦ tr_e'(U ρ_se U†)` admits a completely positive
//! description. The decision is constructive:
//!
//! * the reduced family is split by its Koashi-Imoto decomposition
//!   `H_s = ⊕_j H_{l_j} ⊗ H_{r_j}` ([`ki`]), computed through the block
//!   structure of a finite-dimensional *-algebra ([`algebra`]);
//! * a family is certified when every member reads
//!   `⊕_j p_j ρ_{l_j} ⊗ ω_{r_j e}` with fixed `ω_{r_j e}` ([`cp`]), and the
//!   certificate yields a CP assignment map, Kraus operators for any joint
//!   unitary, and the structured mutual information;
//! * otherwise a [`cp::ViolationReport`] names the failing requirement.
//!
//! An independent oracle ([`extension`]) decides CP-extendability of maps given
//! only on finitely many states, by a linear-extension witness search and
//! Douglas-Rachford splitting on the Choi matrix.
//!
//! Every index convention is system-major: the joint basis index of
//! `|s⟩ ⊗ |e⟩` is `s * dim_e + e`. Entropies use the natural logarithm.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod algebra;
pub mod cp;
mod error;
pub mod extension;
pub mod families;
pub mod ki;
mod math;
pub mod operator;
pub mod random;

pub use error::{Error, Result};
pub use operator::{BipartitionDims, CMatrix, DensityOperator, Isometry, Subsystem};

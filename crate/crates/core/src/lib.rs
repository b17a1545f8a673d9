//! Second-quantized kinetics of ultracold chemical reactions.
//!
//! A textual reaction network is compiled into ladder-operator interaction
//! terms, assembled into truncated Fock-space Hamiltonians and evolved
//! exactly ([`quantum`]), integrated in the coherent-state mean-field limit
//! ([`meanfield`]) and analysed for Hamiltonian chaos ([`chaos`]). The
//! [`workbench`] module wires everything into reproducible runs with CSV and
//! JSON exports.
//!
//! The numerical layers are generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! command line front end and the acceptance suite use.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::type_complexity)]

pub mod chaos;
pub mod fock;
pub mod linalg;
pub mod meanfield;
pub mod network;
pub mod ode;
pub mod quantum;
pub mod scalar;
pub mod table;
pub mod workbench;

pub use network::{ChargeVector, LadderMonomial, Reaction, ReactionNetwork, Species, Term};
pub use scalar::Real;

pub type Complex = num_complex::Complex<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type HermitianMatrix = linalg::Matrix<Complex>;
pub type SectorBasis = fock::SectorBasis;
pub type HamiltonianBlock = fock::HamiltonianBlock<f64>;
pub type EigenSystem = quantum::EigenSystem<f64>;
pub type QuantumState = quantum::QuantumState<f64>;
pub type Propagator = quantum::Propagator<f64>;
pub type ObservableSeries = quantum::ObservableSeries<f64>;
pub type MeanFieldState = meanfield::MeanFieldState<f64>;
pub type NondimParams = meanfield::NondimParams<f64>;
pub type Trajectory = meanfield::Trajectory<f64>;
pub type PoincareSection = chaos::PoincareSection<f64>;
pub type LyapunovEstimate = chaos::LyapunovEstimate<f64>;

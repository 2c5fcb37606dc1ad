//! Simulation of a tunable controlled-phase gate in which one control atom
//! imprints independent phases on `n` target atoms through a shared cavity
//! mode.
//!
//! * [`hilbert`]: tensor-product states, operators, fidelities.
//! * [`model`]: Hamiltonians, collapse operators, parameter presets.
//! * [`dynamics`]: unitary propagation and the Lindblad integrator.
//! * [`protocol`]: the seven-step gate sequence and the branch-product
//!   evaluator for many targets.
//! * [`experiments`]: fidelity sweeps, CSV output and the validation suite.

// `!(x > 0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod hilbert;
pub mod linalg;
pub mod model;
pub mod protocol;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::{Cx, Real};

pub type StateVector64 = hilbert::StateVector<f64>;
pub type DensityMatrix64 = hilbert::DensityMatrix<f64>;
pub type Operator64 = hilbert::Operator<f64>;
pub type PhysicalParams64 = model::PhysicalParams<f64>;
pub type NoiseRates64 = model::NoiseRates<f64>;
pub type GateAngles64 = protocol::GateAngles<f64>;
pub type EvolutionConfig64 = dynamics::EvolutionConfig<f64>;
pub type StateVector32 = hilbert::StateVector<f32>;
pub type DensityMatrix32 = hilbert::DensityMatrix<f32>;
pub type Operator32 = hilbert::Operator<f32>;

//! Real-time dynamics of a qubit coupled to a discretized bosonic bath,
//! propagated with a short-iterative-Lanczos integrator in a truncated Fock
//! basis.

// `!(x > 0.0)` is used on purpose: it rejects NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bath;
pub mod error;
pub mod fitting;
pub mod fock_basis;
pub mod hamiltonian;
pub mod io;
pub mod observables;
pub mod oracles;
pub mod propagator;
pub mod protocols;
pub mod state;

pub use bath::{discretize, spectral_density, BathModes, BathSpec};
pub use error::{Error, Result};
pub use fock_basis::{BasisConfig, BasisTable, Spin};
pub use hamiltonian::{build_operators, CouplingAxis, FieldSchedule, SparseHamiltonian};
pub use observables::{ReducedQubitState, Trajectory, TrajectorySample};
pub use propagator::{propagate, PropagationStats, SilParams, SilPropagator};
pub use state::StateVector;

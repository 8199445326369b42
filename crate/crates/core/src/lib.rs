//! Simulation and verification of multi-qubit gates that combine adiabatic
//! transport to a robust operating point with dynamical decoupling, applied to
//! an electron spin (mobile ancilla) and a donor nuclear spin (data qubit).
//!
//! The crate is layered bottom-up:
//!
//! * [`gate_algebra`]: exact phase bookkeeping for diagonal gates plus a small
//!   pure-state circuit simulator.
//! * [`spin_model`]: constants, dipolar estimates, the hyperfine-vs-field model
//!   and the electron-nuclear Hamiltonian.
//! * [`control`]: shuttle schedules with vanishing endpoint derivatives and the
//!   field-shift noise model.
//! * [`dynamics`]: unitary propagation along a schedule.
//! * [`protocol`]: double-cycle and composite gate runs with noise injection.
//! * [`analysis`]: error-channel decomposition and parameter sweeps.
//!
//! Units throughout: time in ns, angular frequency in rad/ns, magnetic field in
//! mT, electric field in MV/m, hyperfine coupling in MHz.

pub mod analysis;
pub mod control;
pub mod dynamics;
mod error;
pub mod gate_algebra;
pub mod protocol;
pub mod spin_model;

pub use error::{Error, Result};

pub use analysis::{channel_decompose, drift_to_field, ChannelReport};
pub use control::{ShiftKind, ShiftSpec, ShuttleSchedule};
pub use dynamics::{propagate, FieldProfile, Propagation};
pub use gate_algebra::{CycleParams, DiagonalGate, FlipDiagonal, PureState};
pub use protocol::{GateProtocol, ProtocolRun};
pub use spin_model::{Constants, HyperfineModel, SpinPairParams};

/// Complex amplitude type used throughout.
pub type C64 = num_complex::Complex64;

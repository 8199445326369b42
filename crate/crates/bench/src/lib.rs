//! Shared fixtures for the benchmarks.

use spingate::control::{DEFAULT_E_START, DEFAULT_T_RAMP};
use spingate::protocol::CalibrationMode;
use spingate::{CycleParams, GateProtocol, HyperfineModel, ShuttleSchedule, SpinPairParams};

pub fn params() -> SpinPairParams {
    SpinPairParams::new(100.0, HyperfineModel::default()).expect("default field is valid")
}

/// Default ramps at step `dt`, dwell `tau`.
pub fn schedule(tau: f64, dt: f64) -> ShuttleSchedule {
    let (e_rop, _) = HyperfineModel::default().operating_point();
    ShuttleSchedule::build(DEFAULT_E_START, e_rop, DEFAULT_T_RAMP, tau, dt).expect("valid schedule")
}

pub fn protocol(dt: f64) -> GateProtocol {
    GateProtocol::calibrated(params(), &schedule(0.0, dt), CalibrationMode::Dwell).expect("calibrates")
}

/// Deterministic, irregular cycle phases.
pub fn cycle(seed: u32) -> CycleParams {
    let x = |k: u32| ((seed * 7 + k) as f64 * 0.618_033_988_75).fract() * 6.0 - 3.0;
    CycleParams::new([x(0), x(1), x(2)], [x(3), x(4), std::f64::consts::PI], 1.0).expect("finite")
}

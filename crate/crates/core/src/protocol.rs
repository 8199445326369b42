//! Full gate constructions from simulated cycles.
//!
//! * double-cycle on (ancilla, data): cycle(τ), X on the ancilla, cycle(0).
//! * composite on (ancilla 1, ancilla 2, data): double-cycle with ancilla 1,
//!   X on the data, double-cycle with ancilla 2.
//!
//! X pulses are ideal and instantaneous. A spin that is not taking part in a
//! cycle precesses under its Zeeman term, and so does everything during idle
//! intervals. The ideal reference is assembled from noiseless cycle phases
//! with the dwell conditional phase set to exactly π.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix4};

use crate::control::{Segment, ShiftKind, ShiftSpec, ShuttleSchedule, Timeline};
use crate::dynamics::{adiabatic_cycle_timeline, propagate, CycleRun, FlipFlopBasis};
use crate::gate_algebra::{wrap_phase, CompositeNet, CycleParams, DiagonalGate, FlipDiagonal};
use crate::spin_model::SpinPairParams;
use crate::{Error, Result, C64};

/// Where a field shift acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftScope {
    /// The whole timeline, transits included.
    Everywhere,
    /// Only while parked at the operating point.
    DwellOnly,
}

/// Field-noise model for a protocol run. For alternating shifts the sign
/// flips at the refocusing pulse that the run designates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldNoise {
    pub kind: ShiftKind,
    pub delta_e: f64,
    pub scope: ShiftScope,
}

impl FieldNoise {
    pub fn none() -> Self {
        Self::new(ShiftKind::Static, 0.0)
    }

    pub fn new(kind: ShiftKind, delta_e: f64) -> Self {
        Self {
            kind,
            delta_e,
            scope: ShiftScope::Everywhere,
        }
    }

    pub fn dwell_only(mut self) -> Self {
        self.scope = ShiftScope::DwellOnly;
        self
    }

    fn spec(&self, flip_time: f64) -> ShiftSpec {
        ShiftSpec {
            kind: self.kind,
            delta_e: self.delta_e,
            flip_time,
        }
    }
}

/// How `τ` is calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMode {
    /// Conditional phase of the bare dwell in the operating-point eigenbasis.
    Dwell,
    /// Dwell phase `f` as extracted from a full simulated cycle.
    Cycle,
}

/// Dwell phases `(d, e, f)` of holding at `e_rop` for `tau`, read in the
/// operating-point eigenbasis.
pub fn dwell_phases(params: &SpinPairParams, e_rop: f64, tau: f64) -> Result<(f64, f64, f64)> {
    let p = propagate(params, &Segment::hold(tau, e_rop, tau.max(1.0)))?;
    let theta = params.hamiltonian_at_field(e_rop)?.eigensystem()?.mixing_angle;
    let (s, c) = theta.sin_cos();
    let mut r = Matrix4::<C64>::identity();
    r[(1, 1)] = C64::new(c, 0.0);
    r[(2, 1)] = C64::new(s, 0.0);
    r[(1, 2)] = C64::new(-s, 0.0);
    r[(2, 2)] = C64::new(c, 0.0);
    let u = r.adjoint() * p.unitary * r;
    let phases = (0..4).map(|k| u[(k, k)].arg()).collect();
    DiagonalGate::new(2, phases)?.extract_zzc()
}

/// Picks `τ` so that the dwell conditional phase is π: start from
/// `π / |ω_zz|` at the operating point and take one secant step on the
/// simulated phase.
pub fn calibrate_tau(params: &SpinPairParams, schedule: &ShuttleSchedule, mode: CalibrationMode) -> Result<f64> {
    let a = params.hyperfine.hyperfine_at(schedule.e_rop)?;
    let rate = params.cz_rate(a)?;
    if rate == 0.0 {
        return Err(Error::ZeroCzRate);
    }
    let f_of = |tau: f64| -> Result<f64> {
        match mode {
            CalibrationMode::Dwell => Ok(dwell_phases(params, schedule.e_rop, tau)?.2),
            CalibrationMode::Cycle => {
                let s = schedule.with_tau(tau)?;
                Ok(adiabatic_cycle_timeline(params, &s.timeline(), tau)?.params.f)
            }
        }
    };
    let residual = |tau: f64| -> Result<f64> { Ok(wrap_phase(f_of(tau)? - PI)) };
    let tau0 = PI / rate.abs();
    let tau_a = tau0 * (1.0 - 1e-3);
    let (g0, ga) = (residual(tau0)?, residual(tau_a)?);
    if g0 == 0.0 || g0 == ga {
        return Ok(tau0);
    }
    let tau1 = tau0 - g0 * (tau0 - tau_a) / (g0 - ga);
    if !(tau1 > 0.0 && tau1.is_finite()) {
        return Err(Error::InvalidParameter(format!("calibration diverged (τ = {tau1})")));
    }
    Ok(tau1)
}

/// A simulated gate together with its ideal reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRun {
    pub realized: DMatrix<C64>,
    pub ideal: DMatrix<C64>,
    /// Times of the refocusing X pulses, ns.
    pub refocus_times: Vec<f64>,
    /// The pulse at which an alternating shift changes sign.
    pub flip_time: f64,
    pub duration: f64,
    pub noise: FieldNoise,
    /// Cycle phases extracted from each simulated cycle, in time order.
    pub cycles: Vec<CycleParams>,
    /// Worst off-diagonal population over the simulated cycles.
    pub leakage: f64,
    /// Ideal operation as `X^mask · D`.
    pub ideal_net: FlipDiagonal,
}

impl ProtocolRun {
    pub fn num_qubits(&self) -> usize {
        self.realized.nrows().trailing_zeros() as usize
    }
}

/// Which spin sits on a rail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Spin {
    Electron,
    Nucleus,
}

const COMPOSITE_RAILS: [Spin; 3] = [Spin::Electron, Spin::Electron, Spin::Nucleus];
const PAIR_RAILS: [Spin; 2] = [Spin::Electron, Spin::Nucleus];
const DATA: usize = 2;

/// One piece of a protocol timeline.
#[derive(Debug, Clone, Copy)]
enum Step {
    Idle(f64),
    Cycle { ancilla: usize, with_dwell: bool },
    X(usize),
}

/// Parameters of a gate protocol plus its noiseless references.
#[derive(Debug, Clone, PartialEq)]
pub struct GateProtocol {
    pub params: SpinPairParams,
    /// Schedule of the dwell cycle; its `tau` is the dwell time.
    pub schedule: ShuttleSchedule,
    /// Zeeman-only interval before every cycle, ns.
    pub cycle_idle: f64,
    /// Zeeman-only interval between the two double-cycles of the composite, ns.
    pub travel_idle: f64,
    reference: CycleParams,
    reference_zero: CycleParams,
}

impl GateProtocol {
    pub fn new(params: SpinPairParams, schedule: ShuttleSchedule) -> Result<Self> {
        let mut p = Self {
            params,
            schedule,
            cycle_idle: 0.0,
            travel_idle: 0.0,
            reference: CycleParams::transit_only(0.0, 0.0, 0.0),
            reference_zero: CycleParams::transit_only(0.0, 0.0, 0.0),
        };
        p.reference = p.simulate_cycle(true, 0.0, ShiftScope::Everywhere)?.params;
        p.reference_zero = p.simulate_cycle(false, 0.0, ShiftScope::Everywhere)?.params;
        Ok(p)
    }

    /// Calibrates `τ` on `schedule` (its own `tau` is ignored) and builds the
    /// protocol.
    pub fn calibrated(params: SpinPairParams, schedule: &ShuttleSchedule, mode: CalibrationMode) -> Result<Self> {
        let tau = calibrate_tau(&params, schedule, mode)?;
        Self::new(params, schedule.with_tau(tau)?)
    }

    pub fn with_idles(mut self, cycle_idle: f64, travel_idle: f64) -> Result<Self> {
        for t in [cycle_idle, travel_idle] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("idle time must be finite and non-negative, got {t}")));
            }
        }
        self.cycle_idle = cycle_idle;
        self.travel_idle = travel_idle;
        Ok(self)
    }

    pub fn tau(&self) -> f64 {
        self.schedule.tau
    }

    /// Noiseless phases of the dwell cycle.
    pub fn reference(&self) -> &CycleParams {
        &self.reference
    }

    /// Noiseless phases of the dwell-free cycle.
    pub fn reference_zero(&self) -> &CycleParams {
        &self.reference_zero
    }

    fn cycle_duration(&self, with_dwell: bool) -> f64 {
        2.0 * self.schedule.t_ramp + if with_dwell { self.schedule.tau } else { 0.0 }
    }

    fn simulate_cycle(&self, with_dwell: bool, offset: f64, scope: ShiftScope) -> Result<CycleRun> {
        let s = if with_dwell {
            self.schedule
        } else {
            self.schedule.with_tau(0.0)?
        };
        let mut segments = s.timeline().segments;
        for (k, seg) in segments.iter_mut().enumerate() {
            if scope == ShiftScope::Everywhere || k == 1 {
                *seg = seg.with_offset(offset);
            }
        }
        adiabatic_cycle_timeline(&self.params, &Timeline::new(segments), s.tau)
    }

    /// Ideal cycle: the noiseless phases with `f` replaced by exactly π on
    /// the dwell cycle.
    fn ideal_cycle_gate(&self, with_dwell: bool) -> DiagonalGate {
        if with_dwell {
            let r = self.reference;
            DiagonalGate::zzc(r.a + r.d, r.b + r.e, r.c + PI)
        } else {
            self.reference_zero.gate()
        }
    }

    /// Zeeman precession of `rails` for `t`, exact (global phase kept).
    fn zeeman_phases(&self, rails: &[Spin], t: f64) -> Vec<f64> {
        let ws = self.params.electron_larmor();
        let wp = self.params.nuclear_larmor();
        let n = rails.len();
        (0..1usize << n)
            .map(|i| {
                rails
                    .iter()
                    .enumerate()
                    .map(|(q, spin)| {
                        let down = i & (1 << (n - 1 - q)) != 0;
                        let sign = if down { 1.0 } else { -1.0 };
                        match spin {
                            Spin::Electron => sign * ws * t / 2.0,
                            Spin::Nucleus => -sign * wp * t / 2.0,
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn run(&self, rails: &[Spin], steps: &[Step], flip_after: usize, noise: &FieldNoise) -> Result<ProtocolRun> {
        let n = rails.len();
        let dim = 1usize << n;
        let duration: f64 = steps
            .iter()
            .map(|s| match *s {
                Step::Idle(t) => t,
                Step::Cycle { with_dwell, .. } => self.cycle_duration(with_dwell),
                Step::X(_) => 0.0,
            })
            .sum();
        let mut flip_time = 0.0;
        let mut t = 0.0;
        for s in &steps[..flip_after] {
            t += match *s {
                Step::Idle(d) => d,
                Step::Cycle { with_dwell, .. } => self.cycle_duration(with_dwell),
                Step::X(_) => 0.0,
            };
            flip_time = t;
        }
        let spec = noise.spec(flip_time);
        spec.validate(duration)?;

        let mut realized = DMatrix::<C64>::identity(dim, dim);
        let mut ideal = FlipDiagonal::identity(n);
        let mut refocus_times = Vec::new();
        let mut cycles = Vec::new();
        let mut leakage = 0.0f64;
        let mut t = 0.0;
        for step in steps {
            match *step {
                Step::Idle(d) => {
                    let offset = match noise.scope {
                        ShiftScope::Everywhere => spec.offset_at(t),
                        ShiftScope::DwellOnly => 0.0,
                    };
                    // Idle segments sit at the parked field. Evaluate it so an
                    // out-of-domain shift is reported rather than ignored.
                    self.params.hyperfine.hyperfine_at(self.schedule.e_start + offset)?;
                    let phases = self.zeeman_phases(rails, d);
                    realized = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                        dim,
                        phases.iter().map(|&p| C64::from_polar(1.0, p)),
                    )) * realized;
                    ideal = ideal.then_diag(&DiagonalGate::new(n, phases)?)?;
                    t += d;
                }
                Step::X(q) => {
                    let mask = 1usize << (n - 1 - q);
                    let perm = DMatrix::from_fn(dim, dim, |i, j| {
                        if i == j ^ mask {
                            C64::new(1.0, 0.0)
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    });
                    realized = perm * realized;
                    ideal = ideal.then_x(q)?;
                    refocus_times.push(t);
                }
                Step::Cycle { ancilla, with_dwell } => {
                    let d = self.cycle_duration(with_dwell);
                    let run = self.simulate_cycle(with_dwell, spec.offset_at(t), noise.scope)?;
                    leakage = leakage.max(run.leakage);
                    cycles.push(run.params);
                    let data = n - 1;
                    let others: Vec<usize> = (0..n).filter(|&q| q != ancilla && q != data).collect();
                    let other_spins: Vec<Spin> = others.iter().map(|&q| rails[q]).collect();
                    let other_phases = self.zeeman_phases(&other_spins, d);
                    realized = embed_pair(&run.full.unitary, ancilla, &others, &other_phases, n) * realized;
                    let pair = self.ideal_cycle_gate(with_dwell).embed(n, &[ancilla, data])?;
                    ideal = ideal.then_diag(&pair)?;
                    if !others.is_empty() {
                        let idle = DiagonalGate::new(others.len(), other_phases)?.embed(n, &others)?;
                        ideal = ideal.then_diag(&idle)?;
                    }
                    t += d;
                }
            }
        }
        Ok(ProtocolRun {
            realized,
            ideal: ideal.to_matrix(),
            refocus_times,
            flip_time,
            duration,
            noise: *noise,
            cycles,
            leakage,
            ideal_net: ideal,
        })
    }

    fn double_cycle_steps(&self, ancilla: usize) -> Vec<Step> {
        let mut steps = Vec::new();
        for (k, with_dwell) in [true, false].into_iter().enumerate() {
            if self.cycle_idle > 0.0 {
                steps.push(Step::Idle(self.cycle_idle));
            }
            steps.push(Step::Cycle { ancilla, with_dwell });
            if k == 0 {
                steps.push(Step::X(ancilla));
            }
        }
        steps
    }

    /// Ancilla-refocused double-cycle on (ancilla, data). An alternating
    /// shift flips sign at the ancilla X.
    pub fn double_cycle_run(&self, noise: &FieldNoise) -> Result<ProtocolRun> {
        let steps = self.double_cycle_steps(0);
        let flip_after = steps.iter().position(|s| matches!(s, Step::X(_))).expect("has an X") + 1;
        self.run(&PAIR_RAILS, &steps, flip_after, noise)
    }

    /// Data-refocused composite on (ancilla 1, ancilla 2, data). An
    /// alternating shift flips sign at the data X.
    pub fn composite_run(&self, noise: &FieldNoise) -> Result<ProtocolRun> {
        let mut steps = self.double_cycle_steps(0);
        steps.push(Step::X(DATA));
        let flip_after = steps.len();
        if self.travel_idle > 0.0 {
            steps.push(Step::Idle(self.travel_idle));
        }
        steps.extend(self.double_cycle_steps(1));
        self.run(&COMPOSITE_RAILS, &steps, flip_after, noise)
    }

    /// Ideal composite split into its entangling part and single-rail Z angles.
    pub fn composite_ideal(&self) -> Result<CompositeNet> {
        Ok(CompositeNet::from_net(self.composite_run_ideal()?))
    }

    fn composite_run_ideal(&self) -> Result<FlipDiagonal> {
        Ok(self.composite_run(&FieldNoise::none())?.ideal_net)
    }

    /// Worst flip-flop probability of a single shuttle into the operating
    /// point on this protocol's schedule.
    pub fn ramp_flip_flop(&self) -> Result<f64> {
        let p = propagate(&self.params, &self.schedule.ramp_in())?;
        let basis = FlipFlopBasis::at_fields(&self.params, self.schedule.e_start, self.schedule.e_rop)?;
        Ok(crate::dynamics::flip_flop_probability(&p, &basis))
    }
}

/// Places a two-qubit unitary on (`ancilla`, last rail) of `n` rails, with
/// the remaining rails picking up `other_phases` (indexed over `others`).
fn embed_pair(u: &Matrix4<C64>, ancilla: usize, others: &[usize], other_phases: &[f64], n: usize) -> DMatrix<C64> {
    let dim = 1usize << n;
    let bit = |q: usize| 1usize << (n - 1 - q);
    let pair_index = |i: usize| (usize::from(i & bit(ancilla) != 0) << 1) | usize::from(i & bit(n - 1) != 0);
    let other_index = |i: usize| {
        others
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &q)| acc | (usize::from(i & bit(q) != 0) << (others.len() - 1 - k)))
    };
    let pair_mask = bit(ancilla) | bit(n - 1);
    DMatrix::from_fn(dim, dim, |i, j| {
        if i & !pair_mask != j & !pair_mask {
            return C64::new(0.0, 0.0);
        }
        u[(pair_index(i), pair_index(j))] * C64::from_polar(1.0, other_phases[other_index(j)])
    })
}

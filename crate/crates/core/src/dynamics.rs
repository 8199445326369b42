//! Unitary propagation of the spin pair along a field timeline.
//!
//! Ramps are integrated with the exponential midpoint rule,
//! `U = ∏ exp(−i H(E(t_k + dt/2)) dt)`, each factor computed in closed form.
//! Constant-field holds are a single exact exponential.

use nalgebra::{DMatrix, Matrix4, SymmetricEigen};

use crate::control::{Segment, SegmentShape, ShuttleSchedule, Timeline};
use crate::gate_algebra::{wrap_phase, CycleParams, DiagonalGate};
use crate::spin_model::SpinPairParams;
use crate::{Error, Result, C64};

/// Largest tolerated diagonal leakage before phase extraction is refused.
pub const MAX_EXTRACTION_LEAKAGE: f64 = 0.5;

/// Anything that can be laid out as a sequence of segments.
pub trait FieldProfile {
    fn timeline(&self) -> Timeline;
}

impl FieldProfile for Timeline {
    fn timeline(&self) -> Timeline {
        self.clone()
    }
}

impl FieldProfile for ShuttleSchedule {
    fn timeline(&self) -> Timeline {
        ShuttleSchedule::timeline(self)
    }
}

impl FieldProfile for Segment {
    fn timeline(&self) -> Timeline {
        Timeline::new(vec![*self])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub unitary: Matrix4<C64>,
    pub step_count: usize,
    pub max_unitarity_defect: f64,
}

impl Propagation {
    pub fn identity() -> Self {
        Self {
            unitary: Matrix4::identity(),
            step_count: 0,
            max_unitarity_defect: 0.0,
        }
    }

    fn from_unitary(unitary: Matrix4<C64>, step_count: usize) -> Self {
        Self {
            max_unitarity_defect: unitarity_defect(&unitary),
            unitary,
            step_count,
        }
    }

    /// `later · self`.
    pub fn then(&self, later: &Propagation) -> Propagation {
        Self::from_unitary(later.unitary * self.unitary, self.step_count + later.step_count)
    }
}

/// `max |U†U − I|` over entries.
pub fn unitarity_defect<const N: usize>(u: &nalgebra::SMatrix<C64, N, N>) -> f64 {
    let g = u.adjoint() * u;
    let mut worst = 0.0f64;
    for i in 0..N {
        for j in 0..N {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Propagates one segment, starting from the identity.
fn propagate_segment(params: &SpinPairParams, seg: &Segment) -> Result<(Matrix4<C64>, usize)> {
    let mut u = Matrix4::identity();
    if seg.duration == 0.0 {
        return Ok((u, 0));
    }
    if !(seg.duration > 0.0 && seg.dt > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "segment needs positive duration and step (got {}, {})",
            seg.duration, seg.dt
        )));
    }
    if let SegmentShape::Hold(_) = seg.shape {
        let h = params.hamiltonian_at_field(seg.field_at(0.0))?;
        if !h.is_finite() {
            return Err(Error::NonFiniteHamiltonian(seg.field_at(0.0)));
        }
        h.propagator(seg.duration).left_multiply(&mut u);
        return Ok((u, 1));
    }
    let (n, h) = seg.grid();
    for k in 0..n {
        let e = seg.field_at((k as f64 + 0.5) * h);
        let ham = params.hamiltonian_at_field(e)?;
        if !ham.is_finite() {
            return Err(Error::NonFiniteHamiltonian(e));
        }
        ham.propagator(h).left_multiply(&mut u);
    }
    Ok((u, n))
}

/// Evolves along `profile` from the identity.
pub fn propagate(params: &SpinPairParams, profile: &impl FieldProfile) -> Result<Propagation> {
    let mut u = Matrix4::identity();
    let mut steps = 0;
    for seg in &profile.timeline().segments {
        let (s, n) = propagate_segment(params, seg)?;
        u = s * u;
        steps += n;
    }
    Ok(Propagation::from_unitary(u, steps))
}

/// Evolves along raw `(t, E)` samples on a uniform grid, taking the midpoint
/// field as the mean of neighbouring samples.
pub fn propagate_sampled(params: &SpinPairParams, samples: &[(f64, f64)]) -> Result<Propagation> {
    if samples.len() < 2 {
        return Ok(Propagation::identity());
    }
    let dt = samples[1].0 - samples[0].0;
    if !(dt > 0.0) {
        return Err(Error::NonUniformGrid(format!("first step is {dt}")));
    }
    let mut u = Matrix4::identity();
    for (k, w) in samples.windows(2).enumerate() {
        let step = w[1].0 - w[0].0;
        if (step - dt).abs() > 1e-9 * dt {
            return Err(Error::NonUniformGrid(format!("step {k} is {step}, expected {dt}")));
        }
        let e = 0.5 * (w[0].1 + w[1].1);
        let ham = params.hamiltonian_at_field(e)?;
        if !ham.is_finite() {
            return Err(Error::NonFiniteHamiltonian(e));
        }
        ham.propagator(dt).left_multiply(&mut u);
    }
    Ok(Propagation::from_unitary(u, samples.len() - 1))
}

/// `exp(−i H t)` for a Hermitian matrix of any size, by eigendecomposition.
pub fn expm_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = SymmetricEigen::new(h.clone());
    let phases = eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * t));
    &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint()
}

/// Phases of the diagonal of `u` as a two-qubit gate, plus the worst
/// probability of leaving a basis state.
fn diagonal_part(u: &Matrix4<C64>) -> (DiagonalGate, f64) {
    let phases = (0..4).map(|k| u[(k, k)].arg()).collect();
    let leakage = (0..4).map(|k| 1.0 - u[(k, k)].norm_sqr()).fold(0.0, f64::max);
    let gate = DiagonalGate::new(2, phases).expect("four phases");
    (gate, leakage)
}

/// Result of one ramp-dwell-ramp cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRun {
    pub ramp_in: Propagation,
    pub dwell: Propagation,
    pub ramp_out: Propagation,
    pub full: Propagation,
    pub params: CycleParams,
    /// Worst off-diagonal population of the full cycle.
    pub leakage: f64,
    /// Worst flip-flop probability of either ramp into the eigenbasis at its
    /// far end. Unlike `leakage` this has no ramp-in/ramp-out interference.
    pub ramp_leakage: f64,
}

/// Runs `schedule` (any per-segment offsets included via `timeline`) and
/// extracts the transit phases `(a, b, c)` from `U_out · U_in` and the dwell
/// phases `(d, e, f)` as the remainder of the full cycle.
///
/// The endpoint eigenbasis is taken to be the computational basis, which
/// holds when `A(E_start) ≈ 0`.
pub fn adiabatic_cycle_timeline(params: &SpinPairParams, timeline: &Timeline, tau: f64) -> Result<CycleRun> {
    let [seg_in, seg_dwell, seg_out] = timeline.segments.as_slice() else {
        return Err(Error::InvalidSchedule(format!(
            "a cycle has exactly three segments, got {}",
            timeline.segments.len()
        )));
    };
    let ramp_in = propagate(params, seg_in)?;
    let dwell = propagate(params, seg_dwell)?;
    let ramp_out = propagate(params, seg_out)?;
    let ramp_flip = |p: &Propagation, seg: &Segment| -> Result<f64> {
        let basis = FlipFlopBasis::at_fields(params, seg.field_at(0.0), seg.field_at(seg.duration))?;
        Ok(flip_flop_probability(p, &basis))
    };
    let ramp_leakage = ramp_flip(&ramp_in, seg_in)?.max(ramp_flip(&ramp_out, seg_out)?);
    let transit = ramp_in.then(&ramp_out);
    let full = ramp_in.then(&dwell).then(&ramp_out);

    let (transit_gate, transit_leak) = diagonal_part(&transit.unitary);
    let (full_gate, leakage) = diagonal_part(&full.unitary);
    let worst = transit_leak.max(leakage);
    if worst > MAX_EXTRACTION_LEAKAGE {
        return Err(Error::ExcessiveLeakage(worst));
    }
    let (a, b, c) = transit_gate.extract_zzc()?;
    let (ad, be, cf) = full_gate.extract_zzc()?;
    let cycle = CycleParams::new(
        [a, b, c],
        [wrap_phase(ad - a), wrap_phase(be - b), wrap_phase(cf - c)],
        tau,
    )?;
    Ok(CycleRun {
        ramp_in,
        dwell,
        ramp_out,
        full,
        params: cycle,
        leakage,
        ramp_leakage,
    })
}

/// [`adiabatic_cycle_timeline`] on the nominal schedule.
pub fn adiabatic_cycle(params: &SpinPairParams, schedule: &ShuttleSchedule) -> Result<(Propagation, CycleParams)> {
    let run = adiabatic_cycle_timeline(params, &schedule.timeline(), schedule.tau)?;
    Ok((run.full, run.params))
}

/// Mixing angles of the flip-flop block at the start and end of a
/// propagation. Zero angle means the computational basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FlipFlopBasis {
    pub initial: f64,
    pub final_: f64,
}

impl FlipFlopBasis {
    pub fn computational() -> Self {
        Self::default()
    }

    /// Instantaneous eigenbases at the given fields.
    pub fn at_fields(params: &SpinPairParams, e_initial: f64, e_final: f64) -> Result<Self> {
        let angle = |e: f64| -> Result<f64> {
            let a = params.hyperfine.hyperfine_at(e)?;
            Ok(params.hamiltonian(a).eigensystem()?.mixing_angle)
        };
        Ok(Self {
            initial: angle(e_initial)?,
            final_: angle(e_final)?,
        })
    }
}

/// Worst-case probability of a flip-flop transition between the two
/// block eigenstates: `max(|<lo|U|hi>|², |<hi|U|lo>|²)`.
pub fn flip_flop_probability(p: &Propagation, basis: &FlipFlopBasis) -> f64 {
    // Columns of R(θ): |hi> = cos θ |01> + sin θ |10>, |lo> = −sin θ |01> + cos θ |10>.
    let vectors = |theta: f64| {
        let (s, c) = theta.sin_cos();
        [(c, s), (-s, c)]
    };
    let amp = |bra: (f64, f64), ket: (f64, f64)| {
        let u = &p.unitary;
        let col1 = u[(1, 1)] * ket.0 + u[(1, 2)] * ket.1;
        let col2 = u[(2, 1)] * ket.0 + u[(2, 2)] * ket.1;
        (col1 * bra.0 + col2 * bra.1).norm_sqr()
    };
    let [hi_i, lo_i] = vectors(basis.initial);
    let [hi_f, lo_f] = vectors(basis.final_);
    amp(lo_f, hi_i).max(amp(hi_f, lo_i))
}

/// One shuttle from the parked field to the operating point, as used for the
/// adiabaticity sweep: returns the worst flip-flop probability into the
/// operating-point eigenbasis.
pub fn ramp_flip_flop(params: &SpinPairParams, schedule: &ShuttleSchedule) -> Result<f64> {
    let p = propagate(params, &schedule.ramp_in())?;
    let basis = FlipFlopBasis::at_fields(params, schedule.e_start, schedule.e_rop)?;
    Ok(flip_flop_probability(&p, &basis))
}

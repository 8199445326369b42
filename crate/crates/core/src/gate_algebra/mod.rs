//! Exact phase bookkeeping for diagonal multi-qubit gates.
//!
//! Conventions used everywhere in this crate:
//!
//! * Rail 0 is the top rail of a circuit diagram and the most significant bit
//!   of a computational-basis index, so basis states are in lexicographic order
//!   (`|q0 q1 ... q(n-1)>`).
//! * `Z_θ = diag(1, e^{iθ})` on a single qubit and `CZ_φ = diag(1, 1, 1, e^{iφ})`
//!   on a pair. A bare `CZ` means `CZ_π`.
//! * Global phases are irrelevant and are removed by pinning the phase of basis
//!   state `|0...0>` to zero.
//!
//! A generic two-qubit diagonal operation written symmetrically as
//! `diag(e^{iα}, e^{iβ}, e^{iγ}, e^{-i(α+β+γ)})` corresponds, after removing the
//! global phase `α`, to `Z_a ⊗ Z_b · CZ_c` with
//! `a = γ - α` (top rail), `b = β - α` (bottom rail) and `c = -2(β + γ)`.
//! [`DiagonalGate::from_symmetric`] implements this mapping.

mod circuit;
pub mod identities;

pub use circuit::{simulate_circuit, Branch, Gate, PureState, BRANCH_CUTOFF};

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

const TWO_PI: f64 = 2.0 * PI;

/// Reduces a phase to the half-open interval (-π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// Bit mask of `qubit` inside a basis index of an `n`-qubit register.
#[inline]
pub(crate) fn qubit_bit(n: usize, qubit: usize) -> usize {
    1 << (n - 1 - qubit)
}

fn check_qubit(n: usize, qubit: usize) -> Result<()> {
    if qubit >= n {
        Err(Error::QubitOutOfRange {
            index: qubit,
            num_qubits: n,
        })
    } else {
        Ok(())
    }
}

/// Diagonal unitary on `n` qubits, stored as one phase per basis state.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGate {
    num_qubits: usize,
    phases: Vec<f64>,
}

impl DiagonalGate {
    pub fn new(num_qubits: usize, phases: Vec<f64>) -> Result<Self> {
        let expected = 1usize << num_qubits;
        if num_qubits == 0 || phases.len() != expected {
            return Err(Error::PhaseCount {
                expected,
                got: phases.len(),
            });
        }
        Ok(Self { num_qubits, phases })
    }

    pub fn identity(num_qubits: usize) -> Self {
        Self {
            num_qubits,
            phases: vec![0.0; 1 << num_qubits],
        }
    }

    pub fn from_fn(num_qubits: usize, f: impl Fn(usize) -> f64) -> Self {
        Self {
            num_qubits,
            phases: (0..1usize << num_qubits).map(f).collect(),
        }
    }

    /// `Z_θ` on one rail of an `n`-qubit register.
    pub fn z(num_qubits: usize, qubit: usize, theta: f64) -> Result<Self> {
        check_qubit(num_qubits, qubit)?;
        let bit = qubit_bit(num_qubits, qubit);
        Ok(Self::from_fn(num_qubits, |i| if i & bit != 0 { theta } else { 0.0 }))
    }

    /// `CZ_φ` between two distinct rails of an `n`-qubit register.
    pub fn cz(num_qubits: usize, q1: usize, q2: usize, phi: f64) -> Result<Self> {
        check_qubit(num_qubits, q1)?;
        check_qubit(num_qubits, q2)?;
        if q1 == q2 {
            return Err(Error::InvalidParameter(format!(
                "controlled phase needs two distinct qubits, got {q1} twice"
            )));
        }
        let mask = qubit_bit(num_qubits, q1) | qubit_bit(num_qubits, q2);
        Ok(Self::from_fn(num_qubits, |i| if i & mask == mask { phi } else { 0.0 }))
    }

    /// Two-qubit gate `Z_a ⊗ Z_b · CZ_c`.
    pub fn zzc(a: f64, b: f64, c: f64) -> Self {
        Self {
            num_qubits: 2,
            phases: vec![0.0, b, a, a + b + c],
        }
    }

    /// Two-qubit gate from the symmetric parametrization
    /// `diag(e^{iα}, e^{iβ}, e^{iγ}, e^{-i(α+β+γ)})`.
    pub fn from_symmetric(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            num_qubits: 2,
            phases: vec![alpha, beta, gamma, -(alpha + beta + gamma)],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        self.phases.len()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Same unitary up to global phase with `phases[0] = 0` and every phase in
    /// (-π, π].
    pub fn canonicalize(&self) -> Self {
        let p0 = self.phases[0];
        Self {
            num_qubits: self.num_qubits,
            phases: self.phases.iter().map(|p| wrap_phase(p - p0)).collect(),
        }
    }

    /// Product of two diagonal gates (they commute), canonicalized.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.num_qubits != other.num_qubits {
            return Err(Error::DimensionMismatch {
                left: self.num_qubits,
                right: other.num_qubits,
            });
        }
        let phases = self
            .phases
            .iter()
            .zip(&other.phases)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            num_qubits: self.num_qubits,
            phases,
        }
        .canonicalize())
    }

    /// `X_q · g · X_q`, canonicalized.
    pub fn x_conjugate(&self, qubit: usize) -> Result<Self> {
        check_qubit(self.num_qubits, qubit)?;
        Ok(self.x_conjugate_mask(qubit_bit(self.num_qubits, qubit)))
    }

    /// Conjugation by the X-string whose flipped bits are `mask`.
    pub fn x_conjugate_mask(&self, mask: usize) -> Self {
        Self {
            num_qubits: self.num_qubits,
            phases: (0..self.dim()).map(|i| self.phases[i ^ mask]).collect(),
        }
        .canonicalize()
    }

    /// Decomposes a two-qubit gate as `Z_a ⊗ Z_b · CZ_c`, returning `(a, b, c)`
    /// wrapped to (-π, π].
    pub fn extract_zzc(&self) -> Result<(f64, f64, f64)> {
        if self.num_qubits != 2 {
            return Err(Error::DimensionMismatch {
                left: self.num_qubits,
                right: 2,
            });
        }
        let p = self.canonicalize().phases;
        Ok((p[2], p[1], wrap_phase(p[3] - p[1] - p[2])))
    }

    /// Phase-polynomial weights: `φ(x) = Σ_S w_S Π_{q∈S} x_q`, indexed by the
    /// basis-index mask of `S`. Entry 0 is always zero (canonical form);
    /// singleton masks hold `Z_θ` angles, pair masks hold `CZ_φ` angles and so
    /// on. All weights are wrapped to (-π, π].
    pub fn phase_polynomial(&self) -> Vec<f64> {
        let mut w = self.canonicalize().phases;
        let n = self.dim();
        let mut bit = 1;
        while bit < n {
            for i in 0..n {
                if i & bit != 0 {
                    w[i] -= w[i ^ bit];
                }
            }
            bit <<= 1;
        }
        w.into_iter().map(wrap_phase).collect()
    }

    /// Places this gate on `targets` (rail `k` of `self` goes to rail
    /// `targets[k]`) inside a larger register.
    pub fn embed(&self, num_qubits: usize, targets: &[usize]) -> Result<Self> {
        if targets.len() != self.num_qubits {
            return Err(Error::DimensionMismatch {
                left: targets.len(),
                right: self.num_qubits,
            });
        }
        for (k, &t) in targets.iter().enumerate() {
            check_qubit(num_qubits, t)?;
            if targets[..k].contains(&t) {
                return Err(Error::InvalidParameter(format!("repeated target rail {t}")));
            }
        }
        let local = self.num_qubits;
        Ok(Self::from_fn(num_qubits, |i| {
            let j = targets.iter().enumerate().fold(0, |acc, (k, &t)| {
                if i & qubit_bit(num_qubits, t) != 0 {
                    acc | qubit_bit(local, k)
                } else {
                    acc
                }
            });
            self.phases[j]
        }))
    }

    /// Largest wrapped phase difference between canonical forms.
    pub fn distance(&self, other: &Self) -> f64 {
        if self.num_qubits != other.num_qubits {
            return f64::INFINITY;
        }
        let a = self.canonicalize();
        let b = other.canonicalize();
        a.phases
            .iter()
            .zip(&b.phases)
            .map(|(x, y)| wrap_phase(x - y).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.dim(),
            self.phases.iter().map(|&p| C64::from_polar(1.0, p)),
        ))
    }
}

/// Phases of one adiabatic cycle: transit phases `(a, b, c)` accrued on the way
/// to and from the operating point, dwell phases `(d, e, f)` accrued while
/// parked there for `tau` ns. The cycle equals
/// `(Z_a ⊗ Z_b · CZ_c) · (Z_d ⊗ Z_e · CZ_f)` with the ancilla on rail 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub tau: f64,
}

impl CycleParams {
    pub fn new(transit: [f64; 3], dwell: [f64; 3], tau: f64) -> Result<Self> {
        let [a, b, c] = transit;
        let [d, e, f] = dwell;
        if ![a, b, c, d, e, f].iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidParameter("cycle phases must be finite".into()));
        }
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dwell time must be non-negative, got {tau}"
            )));
        }
        Ok(Self { a, b, c, d, e, f, tau })
    }

    /// A cycle that spends no time at the operating point.
    pub fn transit_only(a: f64, b: f64, c: f64) -> Self {
        Self {
            a,
            b,
            c,
            d: 0.0,
            e: 0.0,
            f: 0.0,
            tau: 0.0,
        }
    }

    /// Net transit phases of a cycle split into an inbound and outbound leg.
    pub fn from_legs(inbound: [f64; 3], dwell: [f64; 3], outbound: [f64; 3], tau: f64) -> Result<Self> {
        Self::new(
            [
                inbound[0] + outbound[0],
                inbound[1] + outbound[1],
                inbound[2] + outbound[2],
            ],
            dwell,
            tau,
        )
    }

    pub fn transit_gate(&self) -> DiagonalGate {
        DiagonalGate::zzc(self.a, self.b, self.c)
    }

    pub fn dwell_gate(&self) -> DiagonalGate {
        DiagonalGate::zzc(self.d, self.e, self.f)
    }

    pub fn gate(&self) -> DiagonalGate {
        DiagonalGate::zzc(self.a + self.d, self.b + self.e, self.c + self.f)
    }

    /// Data-qubit phase left by an ancilla-refocused double-cycle built from
    /// this cycle and a dwell-free twin sharing its transit: `2b + c + e`.
    pub fn refocused_data_phase(&self) -> f64 {
        2.0 * self.b + self.c + self.e
    }
}

/// An operation of the form `X^mask · D` with `D` diagonal: what remains after
/// pushing every ideal refocusing X to the end of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipDiagonal {
    /// Basis-index mask of the rails carrying a trailing X.
    pub x_mask: usize,
    pub diag: DiagonalGate,
}

impl FlipDiagonal {
    pub fn identity(num_qubits: usize) -> Self {
        Self {
            x_mask: 0,
            diag: DiagonalGate::identity(num_qubits),
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.diag.num_qubits()
    }

    /// Appends `X` on `qubit` (applied after everything so far).
    pub fn then_x(mut self, qubit: usize) -> Result<Self> {
        check_qubit(self.num_qubits(), qubit)?;
        self.x_mask ^= qubit_bit(self.num_qubits(), qubit);
        Ok(self)
    }

    /// Appends a diagonal gate: `G · X^m · D = X^m · (X^m G X^m) · D`.
    pub fn then_diag(self, g: &DiagonalGate) -> Result<Self> {
        let moved = g.x_conjugate_mask(self.x_mask);
        Ok(Self {
            x_mask: self.x_mask,
            diag: moved.compose(&self.diag)?,
        })
    }

    /// Rails (top = 0) that carry a trailing X.
    pub fn x_rails(&self) -> Vec<usize> {
        let n = self.num_qubits();
        (0..n).filter(|&q| self.x_mask & qubit_bit(n, q) != 0).collect()
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        let dim = self.diag.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            m[(j ^ self.x_mask, j)] = C64::from_polar(1.0, self.diag.phases()[j]);
        }
        m
    }
}

/// Net effect of cycle(τ) → X on the ancilla → cycle(0) on an (ancilla, data)
/// pair. `cycle1` should carry `f = π`; `cycle2` is the dwell-free cycle.
///
/// When both cycles share their transit phases the diagonal part is
/// `Z_d ⊗ Z_g · CZ_f` with `g = 2b + c + e`, independent of `a`.
pub fn double_cycle_net(cycle1: &CycleParams, cycle2: &CycleParams) -> FlipDiagonal {
    FlipDiagonal::identity(2)
        .then_diag(&cycle1.gate())
        .and_then(|s| s.then_x(0))
        .and_then(|s| s.then_diag(&cycle2.gate()))
        .expect("two-qubit frame operations are always in range")
}

/// Ideal composite gate on rails (ancilla 1, ancilla 2, data).
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeNet {
    /// The full operation `X^mask · D`.
    pub net: FlipDiagonal,
    /// Multi-qubit part of `D`: weights of every phase-polynomial term with two
    /// or more rails.
    pub entangling: DiagonalGate,
    /// `Z_θ` angle left on each rail.
    pub local_z: Vec<f64>,
}

impl CompositeNet {
    pub fn from_net(net: FlipDiagonal) -> Self {
        let n = net.num_qubits();
        let w = net.diag.phase_polynomial();
        let local_z = (0..n).map(|q| w[qubit_bit(n, q)]).collect();
        let entangling = DiagonalGate::from_fn(n, |i| {
            (1..1usize << n)
                .filter(|s| s.count_ones() >= 2 && s & i == *s)
                .map(|s| w[s])
                .sum()
        })
        .canonicalize();
        Self {
            net,
            entangling,
            local_z,
        }
    }

    /// Target entangling part `CZ(a1, d) · CZ(a2, d)`.
    pub fn target_entangling() -> DiagonalGate {
        DiagonalGate::cz(3, 0, 2, PI)
            .and_then(|g| g.compose(&DiagonalGate::cz(3, 1, 2, PI)?))
            .expect("static rails")
            .canonicalize()
    }
}

/// Composite gate: double-cycle `dc1` on (ancilla 1, data), X on the data,
/// double-cycle `dc2` on (ancilla 2, data). Each double-cycle is the pair
/// `(cycle with dwell, dwell-free cycle)`.
pub fn composite_ideal(dc1: (&CycleParams, &CycleParams), dc2: (&CycleParams, &CycleParams)) -> CompositeNet {
    let on = |g: DiagonalGate, anc: usize| g.embed(3, &[anc, 2]).expect("static rails");
    let net = FlipDiagonal::identity(3)
        .then_diag(&on(dc1.0.gate(), 0))
        .and_then(|s| s.then_x(0))
        .and_then(|s| s.then_diag(&on(dc1.1.gate(), 0)))
        .and_then(|s| s.then_x(2))
        .and_then(|s| s.then_diag(&on(dc2.0.gate(), 1)))
        .and_then(|s| s.then_x(1))
        .and_then(|s| s.then_diag(&on(dc2.1.gate(), 1)))
        .expect("static rails");
    CompositeNet::from_net(net)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn phases(n: usize) -> impl Strategy<Value = DiagonalGate> {
        prop::collection::vec(-10.0f64..10.0, 1 << n).prop_map(move |p| DiagonalGate::new(n, p).unwrap())
    }

    proptest! {
        #[test]
        fn compose_commutes_and_associates(g1 in phases(3), g2 in phases(3), g3 in phases(3)) {
            let ab = g1.compose(&g2).unwrap();
            let ba = g2.compose(&g1).unwrap();
            prop_assert!(ab.distance(&ba) < 1e-12);
            let left = ab.compose(&g3).unwrap();
            let right = g1.compose(&g2.compose(&g3).unwrap()).unwrap();
            prop_assert!(left.distance(&right) < 1e-12);
        }

        #[test]
        fn canonicalize_commutes_with_compose(g1 in phases(2), g2 in phases(2)) {
            let direct = g1.compose(&g2).unwrap();
            let pre = g1.canonicalize().compose(&g2.canonicalize()).unwrap();
            prop_assert!(direct.distance(&pre) < 1e-12);
            for p in direct.phases() {
                prop_assert!(*p > -PI && *p <= PI);
            }
            prop_assert_eq!(direct.phases()[0], 0.0);
        }

        #[test]
        fn zzc_round_trip(a in -PI..PI, b in -PI..PI, c in -PI..PI) {
            let (a2, b2, c2) = DiagonalGate::zzc(a, b, c).extract_zzc().unwrap();
            prop_assert!(wrap_phase(a - a2).abs() < 1e-12);
            prop_assert!(wrap_phase(b - b2).abs() < 1e-12);
            prop_assert!(wrap_phase(c - c2).abs() < 1e-12);
        }

        #[test]
        fn x_conjugation_is_an_involution(g in phases(3), q in 0usize..3) {
            let back = g.x_conjugate(q).unwrap().x_conjugate(q).unwrap();
            prop_assert!(back.distance(&g) < 1e-12);
        }
    }
}

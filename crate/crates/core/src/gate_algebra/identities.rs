//! Randomized identity suite for the gate constructions.
//!
//! Every algebraic result from the phase-permutation code in the parent module
//! is compared against an explicit dense-matrix product built here from
//! scratch, and the measurement-based circuits are checked branch by branch.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{composite_ideal, double_cycle_net, simulate_circuit, CompositeNet, CycleParams, DiagonalGate, Gate, PureState};
use crate::C64;

/// Passing threshold used by the command-line verifier.
pub const IDENTITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub samples: usize,
    pub max_error: f64,
}

impl IdentityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_error.is_finite() && self.max_error < tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self, tol: f64) -> bool {
        self.checks.iter().all(|c| c.passes(tol))
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().map(|c| c.max_error).fold(0.0, f64::max)
    }
}

/// Settings for [`run_identity_suite`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random parameter sets per algebraic identity.
    pub samples: usize,
    /// Random input states per universality circuit.
    pub random_states: usize,
    /// Negative control: builds the dense oracle with the mirrored
    /// `Z_θ = diag(e^{iθ}, 1)` convention so that the suite must fail.
    pub corrupt_convention: bool,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            samples: 10_000,
            random_states: 20,
            corrupt_convention: false,
        }
    }
}

struct Dense {
    corrupt: bool,
}

impl Dense {
    fn identity(dim: usize) -> DMatrix<C64> {
        DMatrix::identity(dim, dim)
    }

    fn single(&self, theta: f64) -> DMatrix<C64> {
        let (p0, p1) = if self.corrupt { (theta, 0.0) } else { (0.0, theta) };
        DMatrix::from_row_slice(
            2,
            2,
            &[
                C64::from_polar(1.0, p0),
                C64::new(0.0, 0.0),
                C64::new(0.0, 0.0),
                C64::from_polar(1.0, p1),
            ],
        )
    }

    fn x() -> DMatrix<C64> {
        let o = C64::new(0.0, 0.0);
        let l = C64::new(1.0, 0.0);
        DMatrix::from_row_slice(2, 2, &[o, l, l, o])
    }

    /// Operator `op` (2x2) on `rail` of `n` rails via Kronecker products.
    fn on_rail(op: &DMatrix<C64>, rail: usize, n: usize) -> DMatrix<C64> {
        (0..n).fold(Self::identity(1), |acc, q| {
            let factor = if q == rail { op.clone() } else { Self::identity(2) };
            acc.kronecker(&factor)
        })
    }

    fn controlled_phase(phi: f64, q1: usize, q2: usize, n: usize) -> DMatrix<C64> {
        let dim = 1 << n;
        let mask = (1 << (n - 1 - q1)) | (1 << (n - 1 - q2));
        DMatrix::from_fn(dim, dim, |i, j| {
            if i != j {
                C64::new(0.0, 0.0)
            } else if i & mask == mask {
                C64::from_polar(1.0, phi)
            } else {
                C64::new(1.0, 0.0)
            }
        })
    }

    /// `Z_a ⊗ Z_b · CZ_c` on rails `(q1, q2)` of an `n`-rail register.
    fn zzc(&self, a: f64, b: f64, c: f64, q1: usize, q2: usize, n: usize) -> DMatrix<C64> {
        Self::on_rail(&self.single(a), q1, n) * Self::on_rail(&self.single(b), q2, n) * Self::controlled_phase(c, q1, q2, n)
    }

    fn cycle(&self, p: &CycleParams, q1: usize, q2: usize, n: usize) -> DMatrix<C64> {
        self.zzc(p.a, p.b, p.c, q1, q2, n) * self.zzc(p.d, p.e, p.f, q1, q2, n)
    }
}

/// Max entrywise difference after aligning the global phase of `a` to `b`.
pub fn matrix_distance_up_to_phase(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    let overlap: C64 = a.iter().zip(b.iter()).map(|(x, y)| y.conj() * x).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y * phase).norm())
        .fold(0.0, f64::max)
}

fn angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-PI..PI)
}

fn random_state(rng: &mut ChaCha8Rng, n: usize) -> PureState {
    let amps = (0..1usize << n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    PureState::normalized(n, amps).expect("gaussian amplitudes are non-zero")
}

/// Complete basis, the uniform superposition, and `extra` random states.
fn probe_states(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<PureState> {
    let mut states: Vec<_> = (0..1usize << n).map(|i| PureState::basis(n, i)).collect();
    let amp = C64::new((1.0 / (1u64 << n) as f64).sqrt(), 0.0);
    states.push(PureState::new(n, vec![amp; 1 << n]).expect("uniform state"));
    states.extend((0..extra).map(|_| random_state(rng, n)));
    states
}

/// Algebraic identities (one- and two-cycle compositions, the ancilla-refocused
/// double-cycle and the data-refocused composite) plus the universality
/// circuits.
pub fn run_identity_suite(opts: &SuiteOptions) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let dense = Dense {
        corrupt: opts.corrupt_convention,
    };
    let n = opts.samples;
    let mut checks = Vec::new();

    // Diagonal form: symmetric parametrization ↔ Z_a Z_b CZ_c, and round trip.
    let mut sym_err: f64 = 0.0;
    let mut trip_err: f64 = 0.0;
    for _ in 0..n {
        let (al, be, ga) = (angle(&mut rng), angle(&mut rng), angle(&mut rng));
        let sym = DiagonalGate::from_symmetric(al, be, ga);
        let (a, b, c) = sym.extract_zzc().expect("two qubits");
        sym_err = sym_err.max(matrix_distance_up_to_phase(&dense.zzc(a, b, c, 0, 1, 2), &sym.to_matrix()));

        let (a, b, c) = (angle(&mut rng), angle(&mut rng), angle(&mut rng));
        let built = DiagonalGate::zzc(a, b, c);
        let (a2, b2, c2) = built.extract_zzc().expect("two qubits");
        trip_err = trip_err.max(matrix_distance_up_to_phase(&dense.zzc(a2, b2, c2, 0, 1, 2), &built.to_matrix()));
    }
    checks.push(IdentityCheck {
        name: "diagonal_form_symmetric",
        samples: n,
        max_error: sym_err,
    });
    checks.push(IdentityCheck {
        name: "diagonal_form_round_trip",
        samples: n,
        max_error: trip_err,
    });

    // Three commuting stages collapse to transit ∘ dwell.
    let mut err: f64 = 0.0;
    for _ in 0..n {
        let legs: Vec<[f64; 3]> = (0..3).map(|_| [angle(&mut rng), angle(&mut rng), angle(&mut rng)]).collect();
        let product = legs.iter().fold(Dense::identity(4), |acc, s| dense.zzc(s[0], s[1], s[2], 0, 1, 2) * acc);
        let cycle = CycleParams::from_legs(legs[0], legs[1], legs[2], 1.0).expect("finite");
        err = err.max(matrix_distance_up_to_phase(&cycle.gate().to_matrix(), &product));
    }
    checks.push(IdentityCheck {
        name: "adiabatic_cycle_composition",
        samples: n,
        max_error: err,
    });

    // Ancilla-refocused double-cycle.
    let mut chain_err: f64 = 0.0;
    let mut form_err: f64 = 0.0;
    let mut a_err: f64 = 0.0;
    let x_anc = Dense::on_rail(&Dense::x(), 0, 2);
    for _ in 0..n {
        let [a, a_alt, b, c, d, e] = [(); 6].map(|_| angle(&mut rng));
        let double_cycle = |a: f64| {
            let first = CycleParams::new([a, b, c], [d, e, PI], 1.0).expect("finite");
            let second = CycleParams::transit_only(a, b, c);
            let chain = dense.cycle(&second, 0, 1, 2) * &x_anc * dense.cycle(&first, 0, 1, 2);
            (double_cycle_net(&first, &second), chain)
        };
        let (net, chain) = double_cycle(a);
        chain_err = chain_err.max(matrix_distance_up_to_phase(&net.to_matrix(), &chain));
        let g = 2.0 * b + c + e;
        let expected = &x_anc * dense.zzc(d, g, PI, 0, 1, 2);
        form_err = form_err.max(matrix_distance_up_to_phase(&chain, &expected));
        let (_, chain_alt) = double_cycle(a_alt);
        a_err = a_err.max(matrix_distance_up_to_phase(&chain_alt, &chain));
    }
    checks.push(IdentityCheck {
        name: "double_cycle_vs_dense_chain",
        samples: n,
        max_error: chain_err,
    });
    checks.push(IdentityCheck {
        name: "double_cycle_data_phase_2b_c_e",
        samples: n,
        max_error: form_err,
    });
    checks.push(IdentityCheck {
        name: "double_cycle_ancilla_transit_independence",
        samples: n,
        max_error: a_err,
    });

    // Data-refocused composite on (ancilla 1, ancilla 2, data).
    let mut chain_err: f64 = 0.0;
    let mut ent_err: f64 = 0.0;
    let mut g_err: f64 = 0.0;
    let target = CompositeNet::target_entangling();
    for _ in 0..n {
        let [a1, a2, d1, d2] = [(); 4].map(|_| angle(&mut rng));
        let shared = [(); 3].map(|_| angle(&mut rng));
        let other = [(); 3].map(|_| angle(&mut rng));
        let build = |[b, c, e]: [f64; 3]| {
            let c1 = CycleParams::new([a1, b, c], [d1, e, PI], 1.0).expect("finite");
            let c1z = CycleParams::transit_only(a1, b, c);
            let c2 = CycleParams::new([a2, b, c], [d2, e, PI], 1.0).expect("finite");
            let c2z = CycleParams::transit_only(a2, b, c);
            let chain = dense.cycle(&c2z, 1, 2, 3)
                * Dense::on_rail(&Dense::x(), 1, 3)
                * dense.cycle(&c2, 1, 2, 3)
                * Dense::on_rail(&Dense::x(), 2, 3)
                * dense.cycle(&c1z, 0, 2, 3)
                * Dense::on_rail(&Dense::x(), 0, 3)
                * dense.cycle(&c1, 0, 2, 3);
            (composite_ideal((&c1, &c1z), (&c2, &c2z)), chain)
        };
        let (net, chain) = build(shared);
        chain_err = chain_err.max(matrix_distance_up_to_phase(&net.net.to_matrix(), &chain));
        ent_err = ent_err.max(net.entangling.distance(&target));
        let (_, chain_other) = build(other);
        g_err = g_err.max(matrix_distance_up_to_phase(&chain_other, &chain));
    }
    checks.push(IdentityCheck {
        name: "composite_vs_dense_chain",
        samples: n,
        max_error: chain_err,
    });
    checks.push(IdentityCheck {
        name: "composite_entangling_is_cz_cz",
        samples: n,
        max_error: ent_err,
    });
    checks.push(IdentityCheck {
        name: "composite_transit_independence",
        samples: n,
        max_error: g_err,
    });

    checks.extend(universality_checks(opts.seed.wrapping_add(1), opts.random_states));
    IdentityReport { checks }
}

/// The measurement-based circuits: discarding an ancilla, mediating a
/// data-data CZ through one ancilla, and measuring a data qubit indirectly.
pub fn universality_checks(seed: u64, random_states: usize) -> Vec<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        discard_ancilla_check(&mut rng, random_states),
        mediated_cz_check(&mut rng, random_states),
        indirect_measurement_check(&mut rng, random_states),
    ]
}

fn apply_all(state: &PureState, ops: &[Gate]) -> PureState {
    let mut s = state.clone();
    for &g in ops {
        s.apply(g).expect("unitary gates in range");
    }
    s
}

/// Rails (ancilla 1, ancilla 2, data) with ancilla 2 prepared in |0⟩: the two
/// CZs followed by measuring and discarding ancilla 2 act as CZ on
/// (ancilla 1, data).
fn discard_ancilla_check(rng: &mut ChaCha8Rng, extra: usize) -> IdentityCheck {
    let ops = [Gate::Cz(0, 2), Gate::Cz(1, 2), Gate::Measure(1)];
    let inputs = probe_states(rng, 2, extra);
    let mut err: f64 = 0.0;
    for psi in &inputs {
        let full = psi.insert_qubit(1, false).expect("rail in range");
        let branches = simulate_circuit(&full, &ops).expect("valid circuit");
        let expected = apply_all(psi, &[Gate::Cz(0, 1)]);
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        err = err.max((total - 1.0).abs());
        for br in &branches {
            match br.outcomes.as_slice() {
                [(1, false)] => {
                    let reduced = br.state.factor_out(1, false).expect("measured rail");
                    err = err.max(reduced.distance_up_to_phase(&expected));
                }
                _ => err = err.max(br.probability),
            }
        }
    }
    IdentityCheck {
        name: "discard_ancilla_gives_ancilla_data_cz",
        samples: inputs.len(),
        max_error: err,
    }
}

/// Rails (ancilla, data 1, data 2) with the ancilla prepared in |0⟩:
/// `H CZ(a,d1) H · CZ(a,d2) · H CZ(a,d1) H` then measure the ancilla.
///
/// The two `H CZ H` blocks are CNOTs from data 1 onto the ancilla, so the
/// ancilla always returns to |0⟩ and no outcome-dependent correction is needed;
/// a (zero-probability) outcome 1 is counted as error.
fn mediated_cz_check(rng: &mut ChaCha8Rng, extra: usize) -> IdentityCheck {
    let ops = [
        Gate::H(0),
        Gate::Cz(0, 1),
        Gate::H(0),
        Gate::Cz(0, 2),
        Gate::H(0),
        Gate::Cz(0, 1),
        Gate::H(0),
        Gate::Measure(0),
    ];
    let inputs = probe_states(rng, 2, extra);
    let mut err: f64 = 0.0;
    for psi in &inputs {
        let full = psi.insert_qubit(0, false).expect("rail in range");
        let branches = simulate_circuit(&full, &ops).expect("valid circuit");
        let expected = apply_all(psi, &[Gate::Cz(0, 1)]);
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        err = err.max((total - 1.0).abs());
        for br in &branches {
            match br.outcomes.as_slice() {
                [(0, false)] => {
                    let reduced = br.state.factor_out(0, false).expect("measured rail");
                    err = err.max(reduced.distance_up_to_phase(&expected));
                }
                _ => err = err.max(br.probability),
            }
        }
    }
    IdentityCheck {
        name: "mediated_data_data_cz",
        samples: inputs.len(),
        max_error: err,
    }
}

/// Rails (ancilla, data): `H · CZ · H` on the ancilla then measure it. Outcome
/// statistics must equal a direct Z measurement of the data, and the data must
/// collapse onto the outcome (preparation by measurement).
fn indirect_measurement_check(rng: &mut ChaCha8Rng, extra: usize) -> IdentityCheck {
    let ops = [Gate::H(0), Gate::Cz(0, 1), Gate::H(0), Gate::Measure(0)];
    let mut inputs = vec![PureState::new(1, vec![C64::new(0.3f64.sqrt(), 0.0), C64::new(0.0, 0.7f64.sqrt())]).expect("normalized")];
    inputs.extend(probe_states(rng, 1, extra));
    let mut err: f64 = 0.0;
    for psi in &inputs {
        let full = psi.insert_qubit(0, false).expect("rail in range");
        let branches = simulate_circuit(&full, &ops).expect("valid circuit");
        for bit in [false, true] {
            let direct = psi.amplitudes()[bit as usize].norm_sqr();
            let indirect: f64 = branches
                .iter()
                .filter(|b| b.outcomes == [(0, bit)])
                .map(|b| b.probability)
                .sum();
            err = err.max((direct - indirect).abs());
        }
        for br in &branches {
            let bit = br.outcomes[0].1;
            let data = br.state.factor_out(0, bit).expect("measured rail");
            err = err.max(data.distance_up_to_phase(&PureState::basis(1, bit as usize)));
        }
    }
    IdentityCheck {
        name: "indirect_data_measurement",
        samples: inputs.len(),
        max_error: err,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let report = run_identity_suite(&SuiteOptions {
            samples: 200,
            ..Default::default()
        });
        for c in &report.checks {
            assert!(c.passes(1e-12), "{} failed with {:e}", c.name, c.max_error);
        }
    }

    #[test]
    fn corrupted_convention_is_caught() {
        let report = run_identity_suite(&SuiteOptions {
            samples: 50,
            corrupt_convention: true,
            ..Default::default()
        });
        assert!(!report.all_pass(IDENTITY_TOLERANCE));
    }

    #[test]
    fn suite_is_deterministic() {
        let opts = SuiteOptions {
            samples: 30,
            ..Default::default()
        };
        assert_eq!(run_identity_suite(&opts), run_identity_suite(&opts));
    }

    #[test]
    fn indirect_measurement_reproduces_born_rule() {
        // |α|² = 0.3: ancilla outcome 0 with probability 0.3.
        let psi = PureState::new(1, vec![C64::new(0.3f64.sqrt(), 0.0), C64::new(0.7f64.sqrt(), 0.0)]).unwrap();
        let full = psi.insert_qubit(0, false).unwrap();
        let ops = [Gate::H(0), Gate::Cz(0, 1), Gate::H(0), Gate::Measure(0)];
        let branches = simulate_circuit(&full, &ops).unwrap();
        let p0: f64 = branches.iter().filter(|b| !b.outcomes[0].1).map(|b| b.probability).sum();
        assert!((p0 - 0.3).abs() < 1e-15);
    }
}

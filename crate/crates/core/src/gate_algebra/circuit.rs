//! Minimal state-vector simulator for the measurement-based universality
//! circuits. Measurements split the run into branches instead of sampling.

use std::f64::consts::FRAC_1_SQRT_2;

use super::{check_qubit, qubit_bit};
use crate::{Error, Result, C64};

/// Branches whose Born probability falls below this are dropped.
pub const BRANCH_CUTOFF: f64 = 1e-28;

const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gate {
    H(usize),
    X(usize),
    /// `Z_θ = diag(1, e^{iθ})`.
    Z(usize, f64),
    /// `CZ_π` between two rails.
    Cz(usize, usize),
    /// Computational-basis measurement; the measured rail stays in the register.
    Measure(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(num_qubits: usize, amplitudes: Vec<C64>) -> Result<Self> {
        if num_qubits == 0 || amplitudes.len() != 1 << num_qubits {
            return Err(Error::PhaseCount {
                expected: 1 << num_qubits,
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            num_qubits,
            amplitudes,
        })
    }

    /// Normalizes `amplitudes` before building the state.
    pub fn normalized(num_qubits: usize, mut amplitudes: Vec<C64>) -> Result<Self> {
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NotNormalized(norm * norm));
        }
        amplitudes.iter_mut().for_each(|z| *z /= norm);
        Self::new(num_qubits, amplitudes)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << num_qubits];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self {
            num_qubits,
            amplitudes,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// `self ⊗ other` with `self` on the upper rails.
    pub fn tensor(&self, other: &Self) -> Self {
        let amplitudes = self
            .amplitudes
            .iter()
            .flat_map(|a| other.amplitudes.iter().map(move |b| a * b))
            .collect();
        Self {
            num_qubits: self.num_qubits + other.num_qubits,
            amplitudes,
        }
    }

    /// Inserts a fresh qubit in basis state `bit` at rail `rail`.
    pub fn insert_qubit(&self, rail: usize, bit: bool) -> Result<Self> {
        if rail > self.num_qubits {
            return Err(Error::QubitOutOfRange {
                index: rail,
                num_qubits: self.num_qubits + 1,
            });
        }
        let n = self.num_qubits + 1;
        let low = self.num_qubits - rail;
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << n];
        for (i, &amp) in self.amplitudes.iter().enumerate() {
            let hi = i >> low;
            let lo = i & ((1 << low) - 1);
            let j = (((hi << 1) | bit as usize) << low) | lo;
            amplitudes[j] = amp;
        }
        Ok(Self {
            num_qubits: n,
            amplitudes,
        })
    }

    /// Removes a rail known to be in basis state `bit`. Fails if the rail
    /// carries amplitude on the other value.
    pub fn factor_out(&self, rail: usize, bit: bool) -> Result<Self> {
        check_qubit(self.num_qubits, rail)?;
        if self.num_qubits == 1 {
            return Err(Error::InvalidParameter("cannot factor out the last qubit".into()));
        }
        let mask = qubit_bit(self.num_qubits, rail);
        let stray: f64 = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| (i & mask != 0) != bit)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        if stray > NORM_TOL {
            return Err(Error::InvalidParameter(format!(
                "rail {rail} is not in basis state {} (stray weight {stray:.3e})",
                bit as u8
            )));
        }
        let low = self.num_qubits - 1 - rail;
        let amplitudes = (0..1usize << (self.num_qubits - 1))
            .map(|k| {
                let hi = k >> low;
                let lo = k & ((1 << low) - 1);
                self.amplitudes[(((hi << 1) | bit as usize) << low) | lo]
            })
            .collect();
        Ok(Self {
            num_qubits: self.num_qubits - 1,
            amplitudes,
        })
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Largest amplitude difference after removing the relative global phase.
    pub fn distance_up_to_phase(&self, other: &Self) -> f64 {
        if self.num_qubits != other.num_qubits {
            return f64::INFINITY;
        }
        let overlap = other.inner(self);
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            C64::new(1.0, 0.0)
        };
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b * phase).norm())
            .fold(0.0, f64::max)
    }

    /// Probability that rail `q` reads 1.
    pub fn probability_one(&self, q: usize) -> Result<f64> {
        check_qubit(self.num_qubits, q)?;
        let mask = qubit_bit(self.num_qubits, q);
        Ok(self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| i & mask != 0)
            .map(|(_, z)| z.norm_sqr())
            .sum())
    }

    pub fn apply(&mut self, gate: Gate) -> Result<()> {
        let n = self.num_qubits;
        match gate {
            Gate::H(q) => {
                check_qubit(n, q)?;
                let bit = qubit_bit(n, q);
                let s = FRAC_1_SQRT_2;
                for i in (0..self.amplitudes.len()).filter(|i| i & bit == 0) {
                    let (a0, a1) = (self.amplitudes[i], self.amplitudes[i | bit]);
                    self.amplitudes[i] = (a0 + a1) * s;
                    self.amplitudes[i | bit] = (a0 - a1) * s;
                }
            }
            Gate::X(q) => {
                check_qubit(n, q)?;
                let bit = qubit_bit(n, q);
                for i in (0..self.amplitudes.len()).filter(|i| i & bit == 0) {
                    self.amplitudes.swap(i, i | bit);
                }
            }
            Gate::Z(q, theta) => {
                check_qubit(n, q)?;
                let bit = qubit_bit(n, q);
                let phase = C64::from_polar(1.0, theta);
                for (i, z) in self.amplitudes.iter_mut().enumerate() {
                    if i & bit != 0 {
                        *z *= phase;
                    }
                }
            }
            Gate::Cz(q1, q2) => {
                check_qubit(n, q1)?;
                check_qubit(n, q2)?;
                if q1 == q2 {
                    return Err(Error::InvalidParameter(format!("CZ on a single rail {q1}")));
                }
                let mask = qubit_bit(n, q1) | qubit_bit(n, q2);
                for (i, z) in self.amplitudes.iter_mut().enumerate() {
                    if i & mask == mask {
                        *z = -*z;
                    }
                }
            }
            Gate::Measure(_) => {
                return Err(Error::InvalidParameter(
                    "measurements branch; use simulate_circuit".into(),
                ))
            }
        }
        Ok(())
    }

    /// Projects rail `q` onto `bit`, returning the Born probability and the
    /// renormalized post-measurement state (if the probability is non-zero).
    pub fn project(&self, q: usize, bit: bool) -> Result<(f64, Option<Self>)> {
        check_qubit(self.num_qubits, q)?;
        let mask = qubit_bit(self.num_qubits, q);
        let mut amplitudes = self.amplitudes.clone();
        for (i, z) in amplitudes.iter_mut().enumerate() {
            if (i & mask != 0) != bit {
                *z = C64::new(0.0, 0.0);
            }
        }
        let p: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
        if p <= 0.0 {
            return Ok((0.0, None));
        }
        let norm = p.sqrt();
        amplitudes.iter_mut().for_each(|z| *z /= norm);
        Ok((
            p,
            Some(Self {
                num_qubits: self.num_qubits,
                amplitudes,
            }),
        ))
    }
}

/// One measurement history of a circuit run.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    /// `(rail, outcome)` for every measurement, in circuit order.
    pub outcomes: Vec<(usize, bool)>,
    pub probability: f64,
    pub state: PureState,
}

/// Runs `ops` on `initial`, returning every measurement branch with
/// probability above [`BRANCH_CUTOFF`]. Probabilities sum to one.
pub fn simulate_circuit(initial: &PureState, ops: &[Gate]) -> Result<Vec<Branch>> {
    let norm: f64 = initial.amplitudes.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(norm));
    }
    let mut branches = vec![Branch {
        outcomes: Vec::new(),
        probability: 1.0,
        state: initial.clone(),
    }];
    for &op in ops {
        match op {
            Gate::Measure(q) => {
                let mut next = Vec::with_capacity(branches.len() * 2);
                for br in branches {
                    for bit in [false, true] {
                        let (p, state) = br.state.project(q, bit)?;
                        let prob = br.probability * p;
                        if let (Some(state), true) = (state, prob > BRANCH_CUTOFF) {
                            let mut outcomes = br.outcomes.clone();
                            outcomes.push((q, bit));
                            next.push(Branch {
                                outcomes,
                                probability: prob,
                                state,
                            });
                        }
                    }
                }
                branches = next;
            }
            gate => {
                for br in &mut branches {
                    br.state.apply(gate)?;
                }
            }
        }
    }
    Ok(branches)
}

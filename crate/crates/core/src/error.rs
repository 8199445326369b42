use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },

    #[error("qubit index {index} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { index: usize, num_qubits: usize },

    #[error("expected {expected} phases, got {got}")]
    PhaseCount { expected: usize, got: usize },

    #[error("state is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("spin separation must be positive, got {0} nm")]
    NonPositiveSeparation(f64),

    #[error("E = {field} MV/m lies outside the hyperfine model domain [{lo}, {hi}]")]
    OutsideDomain { field: f64, lo: f64, hi: f64 },

    #[error("invalid hyperfine table: {0}")]
    InvalidTable(String),

    #[error("invalid hyperfine model: {0}")]
    InvalidModel(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid shift: {0}")]
    InvalidShift(String),

    #[error("non-uniform time grid: {0}")]
    NonUniformGrid(String),

    #[error("non-finite Hamiltonian at t = {0} ns")]
    NonFiniteHamiltonian(f64),

    #[error("flip-flop block is degenerate (B = 0 and A = 0)")]
    DegenerateBlock,

    #[error("leakage {0:.3e} too large for phase extraction")]
    ExcessiveLeakage(f64),

    #[error("conditional-phase rate vanishes at the operating point")]
    ZeroCzRate,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

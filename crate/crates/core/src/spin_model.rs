//! Electron–nuclear spin pair: constants, dipolar isolation estimates, the
//! field-dependent hyperfine coupling and the pair Hamiltonian
//! `H = B (γ_S S^z − γ_P I^z) + A(E) S·I`.
//!
//! Basis order is `|e n>` ∈ {↑⇑, ↑⇓, ↓⇑, ↓⇓}: spin up (`S^z = +1/2`) is qubit
//! value 0, and the electron sits on rail 0.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::Matrix4;

use crate::{Error, Result, C64};

/// Static field used by default, mT.
pub const DEFAULT_B_MT: f64 = 100.0;

/// Converts a coupling in MHz to angular frequency in rad/ns.
pub fn mhz_to_angular(mhz: f64) -> f64 {
    2.0 * PI * mhz * 1e-3
}

/// Bohr magneton, J/T.
const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant, J·s.
const HBAR: f64 = 1.054_571_817e-34;
/// μ0 / 4π, T·m/A.
const MU0_OVER_4PI: f64 = 1e-7;
/// ³¹P gyromagnetic ratio γ/2π, Hz/T.
const PHOSPHORUS_GYRO_HZ_PER_T: f64 = 17.235e6;
/// Donor-bound electron g-factor in silicon.
const DONOR_G_FACTOR: f64 = 1.9985;

/// rad/(s·T) → rad/(ns·mT).
const SI_GYRO_TO_INTERNAL: f64 = 1e-12;

/// Physical constants. Gyromagnetic ratios are in rad/(ns·mT); `mu0_over_4pi`
/// (T·m/A) and `hbar` (J·s) stay in SI and are only used for the dipolar
/// estimate, which converts at its boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub gyro_electron: f64,
    pub gyro_phosphorus: f64,
    pub mu0_over_4pi: f64,
    pub hbar: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            gyro_electron: DONOR_G_FACTOR * BOHR_MAGNETON / HBAR * SI_GYRO_TO_INTERNAL,
            gyro_phosphorus: 2.0 * PI * PHOSPHORUS_GYRO_HZ_PER_T * SI_GYRO_TO_INTERNAL,
            mu0_over_4pi: MU0_OVER_4PI,
            hbar: HBAR,
        }
    }
}

/// Two point spins separated by `r_nm`; orientation is taken as worst case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipolarPair {
    pub gyro_1: f64,
    pub gyro_2: f64,
    pub r_nm: f64,
}

impl DipolarPair {
    pub fn electron_electron(c: &Constants, r_nm: f64) -> Self {
        Self {
            gyro_1: c.gyro_electron,
            gyro_2: c.gyro_electron,
            r_nm,
        }
    }

    pub fn electron_nucleus(c: &Constants, r_nm: f64) -> Self {
        Self {
            gyro_1: c.gyro_electron,
            gyro_2: c.gyro_phosphorus,
            r_nm,
        }
    }

    pub fn nucleus_nucleus(c: &Constants, r_nm: f64) -> Self {
        Self {
            gyro_1: c.gyro_phosphorus,
            gyro_2: c.gyro_phosphorus,
            r_nm,
        }
    }
}

/// Largest dipolar coupling over orientations, in Hz: `2 μ0 γ1 γ2 ħ / (4π r³) / 2π`.
/// The factor 2 is the extremal magnitude of `1 − 3cos²θ`.
pub fn dipolar_max_strength(pair: &DipolarPair, constants: &Constants) -> Result<f64> {
    if !(pair.r_nm > 0.0) {
        return Err(Error::NonPositiveSeparation(pair.r_nm));
    }
    let g1 = pair.gyro_1 / SI_GYRO_TO_INTERNAL;
    let g2 = pair.gyro_2 / SI_GYRO_TO_INTERNAL;
    let r = pair.r_nm * 1e-9;
    let angular = constants.mu0_over_4pi * g1 * g2 * constants.hbar / r.powi(3);
    Ok(2.0 * angular.abs() / (2.0 * PI))
}

/// `C∞` step: 1 for `x ≤ 0`, 0 for `x ≥ 1`, smooth in between.
fn smooth_cutoff(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x >= 1.0 {
        return 0.0;
    }
    let psi = |u: f64| (-1.0 / u).exp();
    let on = psi(1.0 - x);
    on / (on + psi(x))
}

/// Synthetic stand-in for a computed hyperfine curve: quadratic Stark
/// reduction around the operating point, smoothly switched off across
/// `[knee, knee + knee_width]` where the electron leaves the donor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticHyperfine {
    /// Peak coupling at the operating point, MHz.
    pub a_max_mhz: f64,
    /// Field of the operating point, MV/m.
    pub e_rop: f64,
    /// Quadratic Stark coefficient, (MV/m)⁻².
    pub kappa: f64,
    /// Field where ionization sets in, MV/m.
    pub knee: f64,
    /// Width of the ionization switch-off, MV/m.
    pub knee_width: f64,
    /// Accepted field range, MV/m.
    pub domain: (f64, f64),
}

impl Default for AnalyticHyperfine {
    fn default() -> Self {
        Self {
            a_max_mhz: 117.0,
            e_rop: 2.0,
            kappa: 2.74e-3,
            knee: 5.0,
            knee_width: 4.0,
            domain: (-50.0, 50.0),
        }
    }
}

impl AnalyticHyperfine {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        let all_finite = [self.a_max_mhz, self.e_rop, self.kappa, self.knee, self.knee_width, self.domain.0, self.domain.1]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return bad("parameters must be finite".into());
        }
        if self.a_max_mhz < 0.0 {
            return bad(format!("a_max must be non-negative, got {}", self.a_max_mhz));
        }
        if self.kappa <= 0.0 || self.knee_width <= 0.0 {
            return bad("kappa and knee_width must be positive".into());
        }
        if self.knee <= self.e_rop {
            return bad(format!("knee {} must lie above the operating point {}", self.knee, self.e_rop));
        }
        let span = self.knee + self.knee_width - self.e_rop;
        if self.kappa * span * span >= 1.0 {
            return bad("Stark reduction reaches zero before the ionization knee".into());
        }
        if !(self.domain.0 < self.e_rop && self.e_rop < self.domain.1) {
            return bad("operating point must lie inside the domain".into());
        }
        Ok(())
    }

    fn eval(&self, e: f64) -> f64 {
        let x = e - self.e_rop;
        let stark = (1.0 - self.kappa * x * x).max(0.0);
        self.a_max_mhz * stark * smooth_cutoff((e - self.knee) / self.knee_width)
    }
}

/// Tabulated `A(E)` with shape-preserving piecewise-cubic Hermite
/// interpolation (Fritsch–Butland slopes, no overshoot between knots).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineTable {
    fields: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

pub const TABLE_HEADER: &str = "E_MV_per_m,A_MHz";

impl HyperfineTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidTable("need at least two rows".into()));
        }
        for (i, &(e, a)) in points.iter().enumerate() {
            if !e.is_finite() || !a.is_finite() {
                return Err(Error::InvalidTable(format!("row {} is not finite", i + 1)));
            }
            if a < 0.0 {
                return Err(Error::InvalidTable(format!("row {}: negative coupling {a}", i + 1)));
            }
            if i > 0 && e <= points[i - 1].0 {
                return Err(Error::InvalidTable(format!("row {}: fields must be strictly increasing", i + 1)));
            }
        }
        let (fields, values): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        let slopes = pchip_slopes(&fields, &values);
        Ok(Self { fields, values, slopes })
    }

    /// Parses `E_MV_per_m,A_MHz` CSV text. The header must match exactly.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim_end_matches('\r') != TABLE_HEADER {
            return Err(Error::InvalidTable(format!("header must be `{TABLE_HEADER}`, got `{header}`")));
        }
        let mut points = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let row = i + 2;
            let mut cols = line.split(',');
            let (Some(e), Some(a), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::InvalidTable(format!("line {row}: expected two columns")));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidTable(format!("line {row}: cannot parse `{s}`")))
            };
            points.push((parse(e)?, parse(a)?));
        }
        Self::new(points)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.fields[0], *self.fields.last().expect("non-empty"))
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.fields.iter().copied().zip(self.values.iter().copied())
    }

    fn eval(&self, e: f64) -> f64 {
        let k = match self.fields.partition_point(|&x| x <= e) {
            0 => 0,
            p => (p - 1).min(self.fields.len() - 2),
        };
        let (x0, x1) = (self.fields[k], self.fields[k + 1]);
        let h = x1 - x0;
        let t = (e - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.values[k] + h10 * h * self.slopes[k] + h01 * self.values[k + 1] + h11 * h * self.slopes[k + 1]
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

#[derive(Debug, Clone, PartialEq)]
pub enum HyperfineKind {
    Analytic(AnalyticHyperfine),
    Table(HyperfineTable),
}

/// Hyperfine coupling as a function of electric field, with donor-depth
/// metadata (in units of the lattice constant a₀ ≈ 0.54 nm).
#[derive(Debug, Clone, PartialEq)]
pub struct HyperfineModel {
    pub kind: HyperfineKind,
    pub depth_a0: Option<f64>,
}

impl Default for HyperfineModel {
    fn default() -> Self {
        Self::analytic(AnalyticHyperfine::default()).expect("default model is valid")
    }
}

impl HyperfineModel {
    pub fn analytic(model: AnalyticHyperfine) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            kind: HyperfineKind::Analytic(model),
            depth_a0: None,
        })
    }

    pub fn table(table: HyperfineTable) -> Self {
        Self {
            kind: HyperfineKind::Table(table),
            depth_a0: None,
        }
    }

    pub fn with_depth(mut self, depth_a0: f64) -> Self {
        self.depth_a0 = Some(depth_a0);
        self
    }

    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            HyperfineKind::Analytic(m) => m.domain,
            HyperfineKind::Table(t) => t.domain(),
        }
    }

    /// `A(E)` in MHz. Fields outside the domain are an error, never
    /// extrapolated.
    pub fn hyperfine_at(&self, e: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(e >= lo && e <= hi) {
            return Err(Error::OutsideDomain { field: e, lo, hi });
        }
        Ok(match &self.kind {
            HyperfineKind::Analytic(m) => m.eval(e),
            HyperfineKind::Table(t) => t.eval(e),
        })
    }

    /// Operating point `(E, A_max)`: the maximum of the coupling. For tables
    /// this is the largest knot, which the interpolant never exceeds.
    pub fn operating_point(&self) -> (f64, f64) {
        match &self.kind {
            HyperfineKind::Analytic(m) => (m.e_rop, m.a_max_mhz),
            HyperfineKind::Table(t) => t
                .knots()
                .fold((f64::NAN, f64::NEG_INFINITY), |best, (e, a)| if a > best.1 { (e, a) } else { best }),
        }
    }
}

/// Field, coupling model and constants for one electron–nucleus pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinPairParams {
    /// Static field along z, mT.
    pub b_mt: f64,
    pub hyperfine: HyperfineModel,
    pub constants: Constants,
}

impl SpinPairParams {
    pub fn new(b_mt: f64, hyperfine: HyperfineModel) -> Result<Self> {
        if !(b_mt >= 0.0 && b_mt.is_finite()) {
            return Err(Error::InvalidParameter(format!("B must be finite and non-negative, got {b_mt}")));
        }
        Ok(Self {
            b_mt,
            hyperfine,
            constants: Constants::default(),
        })
    }

    /// Electron Larmor frequency `γ_S B`, rad/ns.
    pub fn electron_larmor(&self) -> f64 {
        self.constants.gyro_electron * self.b_mt
    }

    /// Nuclear Larmor frequency `γ_P B`, rad/ns.
    pub fn nuclear_larmor(&self) -> f64 {
        self.constants.gyro_phosphorus * self.b_mt
    }

    pub fn hamiltonian(&self, a_mhz: f64) -> SpinPairHamiltonian {
        let ws = self.electron_larmor();
        let wp = self.nuclear_larmor();
        let a = mhz_to_angular(a_mhz);
        SpinPairHamiltonian {
            diagonal: [
                0.5 * ws - 0.5 * wp + 0.25 * a,
                0.5 * ws + 0.5 * wp - 0.25 * a,
                -0.5 * ws - 0.5 * wp - 0.25 * a,
                -0.5 * ws + 0.5 * wp + 0.25 * a,
            ],
            flip_flop: 0.5 * a,
        }
    }

    pub fn hamiltonian_at_field(&self, e: f64) -> Result<SpinPairHamiltonian> {
        Ok(self.hamiltonian(self.hyperfine.hyperfine_at(e)?))
    }

    pub fn eigensystem(&self, a_mhz: f64) -> Result<Eigensystem> {
        self.hamiltonian(a_mhz).eigensystem()
    }

    /// Rate `E(↑⇑) − E(↑⇓) − E(↓⇑) + E(↓⇓)` at which the conditional phase
    /// accumulates at fixed control, rad/ns.
    pub fn cz_rate(&self, a_mhz: f64) -> Result<f64> {
        let e = self.eigensystem(a_mhz)?.energies;
        Ok(e[0] - e[1] - e[2] + e[3])
    }
}

/// Pair Hamiltonian in rad/ns. Only `|↑⇓>` and `|↓⇑>` are coupled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinPairHamiltonian {
    pub diagonal: [f64; 4],
    /// The equal off-diagonal entries `H[↑⇓,↓⇑] = H[↓⇑,↑⇓] = A/2`.
    pub flip_flop: f64,
}

impl SpinPairHamiltonian {
    pub fn matrix(&self) -> Matrix4<C64> {
        let mut m = Matrix4::from_diagonal(&self.diagonal.map(|x| C64::new(x, 0.0)).into());
        m[(1, 2)] = C64::new(self.flip_flop, 0.0);
        m[(2, 1)] = C64::new(self.flip_flop, 0.0);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.diagonal.iter().all(|x| x.is_finite()) && self.flip_flop.is_finite()
    }

    /// Closed-form eigensystem of the flip-flop block, energies labelled by
    /// adiabatic continuation from the uncoupled states.
    pub fn eigensystem(&self) -> Result<Eigensystem> {
        let [h00, h11, h22, h33] = self.diagonal;
        let half_split = 0.5 * (h11 - h22);
        let q = self.flip_flop;
        if half_split == 0.0 && q == 0.0 {
            return Err(Error::DegenerateBlock);
        }
        let mean = 0.5 * (h11 + h22);
        let radius = half_split.hypot(q);
        Ok(Eigensystem {
            energies: [h00, mean + radius, mean - radius, h33],
            gap: 2.0 * radius,
            mixing_angle: 0.5 * q.atan2(half_split),
        })
    }

    /// `exp(−i H dt)`, exact.
    pub fn propagator(&self, dt: f64) -> BlockUnitary {
        let [h00, h11, h22, h33] = self.diagonal;
        let mean = 0.5 * (h11 + h22);
        let h = 0.5 * (h11 - h22);
        let q = self.flip_flop;
        let r = h.hypot(q);
        let (cos, sinc) = if r == 0.0 {
            (1.0, dt)
        } else {
            ((r * dt).cos(), (r * dt).sin() / r)
        };
        let global = C64::from_polar(1.0, -mean * dt);
        let i = C64::new(0.0, 1.0);
        BlockUnitary {
            outer: [C64::from_polar(1.0, -h00 * dt), C64::from_polar(1.0, -h33 * dt)],
            block: [
                [global * (cos - i * (sinc * h)), global * (-i * (sinc * q))],
                [global * (-i * (sinc * q)), global * (cos + i * (sinc * h))],
            ],
        }
    }
}

/// Unitary with the pair Hamiltonian's sparsity: `|↑⇑>` and `|↓⇓>` pick up
/// phases, `{|↑⇓>, |↓⇑>}` mix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockUnitary {
    pub outer: [C64; 2],
    pub block: [[C64; 2]; 2],
}

impl BlockUnitary {
    /// `self · u` with `u` a general 4×4 matrix.
    pub fn left_multiply(&self, u: &mut Matrix4<C64>) {
        for col in 0..4 {
            let (u1, u2) = (u[(1, col)], u[(2, col)]);
            u[(0, col)] *= self.outer[0];
            u[(3, col)] *= self.outer[1];
            u[(1, col)] = self.block[0][0] * u1 + self.block[0][1] * u2;
            u[(2, col)] = self.block[1][0] * u1 + self.block[1][1] * u2;
        }
    }

    pub fn matrix(&self) -> Matrix4<C64> {
        let mut m = Matrix4::identity();
        self.left_multiply(&mut m);
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigensystem {
    /// Energies (rad/ns) in label order ↑⇑, ↑⇓, ↓⇑, ↓⇓.
    pub energies: [f64; 4],
    /// Splitting of the flip-flop block, rad/ns.
    pub gap: f64,
    /// θ with `tan 2θ = A / ((γ_S + γ_P) B)`; the ↑⇓-like eigenvector is
    /// `cos θ |↑⇓> + sin θ |↓⇑>`.
    pub mixing_angle: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn params(b: f64) -> SpinPairParams {
        SpinPairParams::new(b, HyperfineModel::default()).unwrap()
    }

    /// Oracle: dense Hermitian diagonalization of the explicit matrix.
    fn dense_eigenvalues(m: &Matrix4<C64>) -> Vec<f64> {
        let d = DMatrix::from_iterator(4, 4, m.iter().copied());
        let mut ev: Vec<f64> = SymmetricEigen::new(d).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    #[test]
    fn constants_match_quoted_gyromagnetic_ratios() {
        let c = Constants::default();
        // 10.8e7 rad/(s·T) quoted to three figures.
        assert!((c.gyro_phosphorus / SI_GYRO_TO_INTERNAL / 1e7 - 10.8).abs() < 0.05);
        // g ≈ 2 electron.
        let g = c.gyro_electron / SI_GYRO_TO_INTERNAL * HBAR / BOHR_MAGNETON;
        assert!((g - 2.0).abs() < 0.01);
    }

    #[test]
    fn dipolar_coefficients_at_one_nm() {
        let c = Constants::default();
        let ee = dipolar_max_strength(&DipolarPair::electron_electron(&c, 1.0), &c).unwrap();
        let en = dipolar_max_strength(&DipolarPair::electron_nucleus(&c, 1.0), &c).unwrap();
        let nn = dipolar_max_strength(&DipolarPair::nucleus_nucleus(&c, 1.0), &c).unwrap();
        assert!((ee / 105e6 - 1.0).abs() < 0.02, "{ee}");
        assert!((en / 64e3 - 1.0).abs() < 0.02, "{en}");
        assert!((nn / 40.0 - 1.0).abs() < 0.02, "{nn}");
    }

    #[test]
    fn dipolar_scaling_and_errors() {
        let c = Constants::default();
        let near = dipolar_max_strength(&DipolarPair::electron_nucleus(&c, 3.0), &c).unwrap();
        let far = dipolar_max_strength(&DipolarPair::electron_nucleus(&c, 6.0), &c).unwrap();
        assert!((near / far - 8.0).abs() < 1e-12);
        for r in [0.0, -1.0, f64::NAN] {
            assert!(dipolar_max_strength(&DipolarPair::electron_electron(&c, r), &c).is_err());
        }
    }

    #[test]
    fn analytic_model_peak_and_curvature() {
        let m = AnalyticHyperfine::default();
        let model = HyperfineModel::analytic(m).unwrap();
        assert_eq!(model.hyperfine_at(m.e_rop).unwrap(), m.a_max_mhz);
        let delta = 0.01;
        for s in [-1.0, 1.0] {
            let got = model.hyperfine_at(m.e_rop + s * delta).unwrap();
            assert!((got - m.a_max_mhz * (1.0 - m.kappa * delta * delta)).abs() < 1e-12);
        }
        // Zero slope at the operating point.
        let h = 1e-4;
        let slope = (model.hyperfine_at(m.e_rop + h).unwrap() - model.hyperfine_at(m.e_rop - h).unwrap()) / (2.0 * h);
        assert!(slope.abs() < 1e-6 * m.a_max_mhz);
        // Switched off past the knee.
        assert_eq!(model.hyperfine_at(m.knee + m.knee_width + 0.1).unwrap(), 0.0);
    }

    #[test]
    fn analytic_model_has_unique_maximum_and_is_nonnegative() {
        let m = AnalyticHyperfine::default();
        let model = HyperfineModel::analytic(m).unwrap();
        let mut prev = f64::NAN;
        for k in 0..=20_000 {
            let e = -30.0 + k as f64 * 0.003;
            let a = model.hyperfine_at(e).unwrap();
            assert!(a >= 0.0);
            if e != m.e_rop {
                assert!(a < m.a_max_mhz);
            }
            if k > 0 && (a - prev).abs() > 0.0 {
                // Increasing below the operating point, decreasing above.
                assert_eq!((a > prev), (e <= m.e_rop + 0.003), "e = {e}");
            }
            prev = a;
        }
    }

    #[test]
    fn analytic_validation() {
        let bad = [
            AnalyticHyperfine { kappa: -1.0, ..Default::default() },
            AnalyticHyperfine { knee: 1.0, ..Default::default() },
            AnalyticHyperfine { kappa: 0.1, ..Default::default() },
            AnalyticHyperfine { a_max_mhz: f64::NAN, ..Default::default() },
        ];
        for m in bad {
            assert!(HyperfineModel::analytic(m).is_err(), "{m:?}");
        }
    }

    #[test]
    fn domain_is_enforced() {
        let model = HyperfineModel::default();
        assert!(matches!(model.hyperfine_at(60.0), Err(Error::OutsideDomain { .. })));
        let table = HyperfineModel::table(HyperfineTable::new(vec![(0.0, 0.0), (1.0, 100.0), (2.0, 0.0)]).unwrap());
        assert!(table.hyperfine_at(2.5).is_err());
        assert!(table.hyperfine_at(-0.1).is_err());
    }

    #[test]
    fn table_interpolation() {
        let t = HyperfineTable::new(vec![(0.0, 0.0), (1.0, 100.0), (2.0, 0.0)]).unwrap();
        let model = HyperfineModel::table(t);
        assert_eq!(model.hyperfine_at(1.0).unwrap(), 100.0);
        assert_eq!(model.hyperfine_at(0.0).unwrap(), 0.0);
        assert_eq!(model.operating_point(), (1.0, 100.0));
        for k in 0..=200 {
            let a = model.hyperfine_at(k as f64 * 0.01).unwrap();
            assert!((0.0..=100.0).contains(&a));
        }
    }

    #[test]
    fn table_is_monotone_on_monotone_data() {
        let t = HyperfineTable::new(vec![(0.0, 0.0), (1.0, 1.0), (1.5, 50.0), (4.0, 51.0), (5.0, 117.0)]).unwrap();
        let model = HyperfineModel::table(t);
        let mut prev = -1.0;
        for k in 0..=5000 {
            let a = model.hyperfine_at(k as f64 * 1e-3).unwrap();
            assert!(a >= prev - 1e-12);
            prev = a;
        }
    }

    #[test]
    fn table_csv_parsing() {
        let text = "E_MV_per_m,A_MHz\n0,0\n1,100\r\n2,0\n";
        let t = HyperfineTable::from_csv(text.as_bytes()).unwrap();
        assert_eq!(t.domain(), (0.0, 2.0));
        for bad in [
            "E,A\n0,0\n1,1\n",
            "E_MV_per_m,A_MHz\n0,0\n0,1\n",
            "E_MV_per_m,A_MHz\n0,0\n1,x\n",
            "E_MV_per_m,A_MHz\n0,0,3\n1,1\n",
            "E_MV_per_m,A_MHz\n0,0\n1,-1\n",
            "E_MV_per_m,A_MHz\n0,0\n",
        ] {
            assert!(matches!(HyperfineTable::from_csv(bad.as_bytes()), Err(Error::InvalidTable(_))), "{bad:?}");
        }
    }

    #[test]
    fn hamiltonian_structure() {
        let zero = SpinPairParams::new(0.0, HyperfineModel::default()).unwrap().hamiltonian(0.0);
        assert_eq!(zero.matrix(), Matrix4::zeros());

        let h = params(100.0).hamiltonian(117.0);
        let m = h.matrix();
        assert_eq!(m, m.adjoint());
        assert!(m.trace().norm() < 1e-14);
        for i in 0..4 {
            for j in 0..4 {
                let expected_nonzero = i == j || (i, j) == (1, 2) || (i, j) == (2, 1);
                if !expected_nonzero {
                    assert_eq!(m[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        assert!((m[(1, 2)].re - mhz_to_angular(117.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn eigenvalues_match_dense_diagonalization() {
        for (b, a) in [(100.0, 117.0), (5.0, 117.0), (1000.0, 3.0), (0.0, 50.0)] {
            let p = params(b);
            let es = p.eigensystem(a).unwrap();
            let mut mine = es.energies.to_vec();
            mine.sort_by(f64::total_cmp);
            let oracle = dense_eigenvalues(&p.hamiltonian(a).matrix());
            for (x, y) in mine.iter().zip(&oracle) {
                assert!((x - y).abs() < 1e-12, "B={b} A={a}: {mine:?} vs {oracle:?}");
            }
            assert!(es.energies.iter().sum::<f64>().abs() < 1e-12);
            assert!(es.gap >= mhz_to_angular(a) / 2.0);
        }
    }

    #[test]
    fn eigensystem_limits() {
        let p = params(100.0);
        let es = p.eigensystem(0.0).unwrap();
        let expected_gap = (p.constants.gyro_electron + p.constants.gyro_phosphorus) * 100.0;
        assert!((es.gap - expected_gap).abs() < 1e-12);
        assert_eq!(es.mixing_angle, 0.0);

        let p0 = params(0.0);
        let a = mhz_to_angular(80.0);
        let mut e = p0.eigensystem(80.0).unwrap().energies.to_vec();
        e.sort_by(f64::total_cmp);
        assert!((e[0] + 0.75 * a).abs() < 1e-12);
        for x in &e[1..] {
            assert!((x - 0.25 * a).abs() < 1e-12);
        }
        assert!(matches!(p0.eigensystem(0.0), Err(Error::DegenerateBlock)));
    }

    #[test]
    fn mixing_angle_diagonalizes_block() {
        let p = params(100.0);
        let h = p.hamiltonian(117.0);
        let es = h.eigensystem().unwrap();
        let (s, c) = es.mixing_angle.sin_cos();
        let m = h.matrix();
        // H v = E v for v = cos θ |↑⇓> + sin θ |↓⇑>.
        let hv1 = m[(1, 1)].re * c + m[(1, 2)].re * s;
        let hv2 = m[(2, 1)].re * c + m[(2, 2)].re * s;
        assert!((hv1 - es.energies[1] * c).abs() < 1e-12);
        assert!((hv2 - es.energies[1] * s).abs() < 1e-12);
    }

    #[test]
    fn cz_rate_properties() {
        let p = params(100.0);
        assert_eq!(p.cz_rate(0.0).unwrap(), 0.0);
        // Oracle: exact 2x2 block eigenvalues from the dense matrix.
        let a = 117.0;
        let ev = dense_eigenvalues(&p.hamiltonian(a).matrix());
        let m = p.hamiltonian(a).matrix();
        let outer = m[(0, 0)].re + m[(3, 3)].re;
        let block: f64 = ev.iter().sum::<f64>() - outer;
        let oracle = outer - block;
        assert!((p.cz_rate(a).unwrap() - oracle).abs() < 1e-12);
        assert!((p.cz_rate(a).unwrap() / mhz_to_angular(a) - 1.0).abs() < 1e-2);
        for k in 1..=117 {
            assert!(p.cz_rate(k as f64).unwrap() > 0.0);
        }
    }

    #[test]
    fn block_propagator_matches_dense_exponential() {
        let p = params(100.0);
        let h = p.hamiltonian(117.0);
        let dt = 0.37;
        let d = DMatrix::from_iterator(4, 4, h.matrix().iter().copied());
        let eig = SymmetricEigen::new(d);
        let phases = eig.eigenvalues.map(|e| C64::from_polar(1.0, -e * dt));
        let dense = &eig.eigenvectors * DMatrix::from_diagonal(&phases) * eig.eigenvectors.adjoint();
        let mine = h.propagator(dt).matrix();
        for i in 0..4 {
            for j in 0..4 {
                assert!((mine[(i, j)] - dense[(i, j)]).norm() < 1e-13);
            }
        }
    }
}

//! Flat JSON run configuration. Every key is optional; unknown keys are
//! rejected so that a config echo always reproduces its run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spingate::control::{ShiftKind, DEFAULT_DT, DEFAULT_E_START, DEFAULT_T_RAMP};
use spingate::protocol::CalibrationMode;
use spingate::spin_model::{AnalyticHyperfine, HyperfineModel, HyperfineTable, DEFAULT_B_MT};
use spingate::{ShuttleSchedule, SpinPairParams};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TauSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Static field, mT.
    pub b_mt: f64,
    /// `E_MV_per_m,A_MHz` table. Overrides the analytic model when set.
    pub hyperfine_table: Option<String>,
    pub a_max_mhz: f64,
    pub kappa: f64,
    pub knee: f64,
    pub knee_width: f64,
    pub domain: (f64, f64),
    /// Isolated field, MV/m.
    pub e_start: f64,
    /// Operating field, MV/m. Defaults to the model's maximum.
    pub e_rop: Option<f64>,
    pub t_ramp_ns: f64,
    pub dt_ns: f64,
    /// A dwell time in ns, `"calibrate"` (full cycle) or `"calibrate-dwell"`.
    pub tau: TauSetting,
    pub shuttle_times_ns: Vec<f64>,
    pub shift_deltas: Vec<f64>,
    pub shift_kinds: Vec<String>,
    pub cycle_idle_ns: f64,
    pub travel_idle_ns: f64,
    pub dipolar_r_nm: f64,
    pub seed: u64,
    pub random_samples: usize,
    pub random_states: usize,
    /// Negative control for `verify-identities`: builds the reference with a
    /// mirrored phase convention, so the run must fail.
    pub corrupt_convention: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let analytic = AnalyticHyperfine::default();
        Self {
            b_mt: DEFAULT_B_MT,
            hyperfine_table: None,
            a_max_mhz: analytic.a_max_mhz,
            kappa: analytic.kappa,
            knee: analytic.knee,
            knee_width: analytic.knee_width,
            domain: analytic.domain,
            e_start: DEFAULT_E_START,
            e_rop: None,
            t_ramp_ns: DEFAULT_T_RAMP,
            dt_ns: DEFAULT_DT,
            tau: TauSetting::Named("calibrate".into()),
            shuttle_times_ns: log_grid(0.25, 16.0, 25),
            shift_deltas: std::iter::once(0.0).chain(log_grid(1e-3, 1e-1, 9)).collect(),
            shift_kinds: vec!["static".into(), "alternating".into()],
            cycle_idle_ns: 0.0,
            travel_idle_ns: 0.0,
            dipolar_r_nm: 1.0,
            seed: 42,
            random_samples: 10_000,
            random_states: 20,
            corrupt_convention: false,
        }
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

/// How the dwell time is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tau {
    Fixed(f64),
    Calibrate(CalibrationMode),
}

/// Everything a command needs, built and checked before any simulation.
#[derive(Debug, Clone)]
pub struct Setup {
    pub params: SpinPairParams,
    /// Schedule with `tau = 0`; commands fill in the dwell.
    pub schedule: ShuttleSchedule,
    pub tau: Tau,
    pub shift_kinds: Vec<ShiftKind>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Single-line JSON of the effective config.
    pub fn echo(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn setup(&self) -> Result<Setup, CliError> {
        let cfg = |e: spingate::Error| CliError::Config(e.to_string());
        let model = match &self.hyperfine_table {
            Some(path) => HyperfineModel::table(HyperfineTable::from_csv_path(path).map_err(cfg)?),
            None => {
                let defaults = AnalyticHyperfine::default();
                HyperfineModel::analytic(AnalyticHyperfine {
                    a_max_mhz: self.a_max_mhz,
                    kappa: self.kappa,
                    knee: self.knee,
                    knee_width: self.knee_width,
                    domain: self.domain,
                    e_rop: self.e_rop.unwrap_or(defaults.e_rop),
                })
                .map_err(cfg)?
            }
        };
        let e_rop = self.e_rop.unwrap_or(model.operating_point().0);
        let params = SpinPairParams::new(self.b_mt, model).map_err(cfg)?;
        let schedule = ShuttleSchedule::build(self.e_start, e_rop, self.t_ramp_ns, 0.0, self.dt_ns).map_err(cfg)?;

        let tau = match &self.tau {
            TauSetting::Fixed(t) if *t >= 0.0 && t.is_finite() => Tau::Fixed(*t),
            TauSetting::Fixed(t) => return Err(CliError::Config(format!("tau must be non-negative, got {t}"))),
            TauSetting::Named(s) if s == "calibrate" => Tau::Calibrate(CalibrationMode::Cycle),
            TauSetting::Named(s) if s == "calibrate-dwell" => Tau::Calibrate(CalibrationMode::Dwell),
            TauSetting::Named(s) => {
                return Err(CliError::Config(format!(
                    "tau must be a number, \"calibrate\" or \"calibrate-dwell\", got \"{s}\""
                )))
            }
        };
        let shift_kinds = self
            .shift_kinds
            .iter()
            .map(|s| s.parse::<ShiftKind>().map_err(cfg))
            .collect::<Result<Vec<_>, _>>()?;

        // Shifted fields must stay inside the model's domain.
        let (lo, hi) = params.hyperfine.domain();
        let max_shift = self.shift_deltas.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if self.shift_deltas.iter().any(|d| !d.is_finite()) {
            return Err(CliError::Config("shift_deltas must be finite".into()));
        }
        let (f_lo, f_hi) = (self.e_start.min(e_rop) - max_shift, self.e_start.max(e_rop) + max_shift);
        if f_lo < lo || f_hi > hi {
            return Err(CliError::Config(format!(
                "fields [{f_lo}, {f_hi}] MV/m (including shifts) leave the hyperfine domain [{lo}, {hi}]"
            )));
        }
        if self.shuttle_times_ns.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(CliError::Config("shuttle_times_ns must be positive".into()));
        }
        for (name, t) in [("cycle_idle_ns", self.cycle_idle_ns), ("travel_idle_ns", self.travel_idle_ns)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("{name} must be non-negative, got {t}")));
            }
        }
        if !(self.dipolar_r_nm > 0.0 && self.dipolar_r_nm.is_finite()) {
            return Err(CliError::Config(format!("dipolar_r_nm must be positive, got {}", self.dipolar_r_nm)));
        }
        if self.random_samples == 0 {
            return Err(CliError::Config("random_samples must be positive".into()));
        }
        Ok(Setup {
            params,
            schedule,
            tau,
            shift_kinds,
        })
    }
}

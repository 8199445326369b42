//! Error channels of a realized gate against its ideal, and the sweeps built
//! on them.
//!
//! Phase deviations are expanded in Z-strings: with `D = U · V†` and
//! canonical diagonal phases `θ_x`, `θ_x = θ̄ + Σ_S c_S (−1)^{|S ∧ x|}`, so `D`
//! is a product of rotations `exp(i c_S Z_S)`. Channel `S` has rotation angle
//! `δ_S = −2 c_S` and worst-case error `sin²(δ_S / 2)`.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::control::{ShiftKind, ShuttleSchedule};
use crate::dynamics::ramp_flip_flop;
use crate::gate_algebra::wrap_phase;
use crate::protocol::{FieldNoise, GateProtocol, ProtocolRun};
use crate::spin_model::SpinPairParams;
use crate::{Error, Result, C64};

/// Drift of the gate voltage over the slow reference interval, mV.
pub const REFERENCE_DRIFT_MV: f64 = 0.15 * 22.0;
/// Field per gate voltage, (MV/m)/mV.
pub const LEVER_ARM_MV_PER_M_PER_MV: f64 = 0.026;
/// Conservative fast-noise interval, s.
pub const FAST_REFERENCE_S: f64 = 1e-3;
/// Slow drift reference interval (0.1 day), s.
pub const SLOW_REFERENCE_S: f64 = 8640.0;

/// Field shift after `t_target` of a random-walk drift that reaches
/// `delta_mv` over `t_reference`.
pub fn drift_to_field(delta_mv: f64, lever_arm: f64, t_target: f64, t_reference: f64) -> Result<f64> {
    if !(t_target > 0.0 && t_reference > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "drift times must be positive (target {t_target}, reference {t_reference})"
        )));
    }
    Ok(delta_mv * lever_arm * (t_target / t_reference).sqrt())
}

/// In-place fast Walsh–Hadamard transform, unnormalized:
/// `out[S] = Σ_x (−1)^{popcount(S & x)} v[x]`.
pub fn walsh_hadamard(v: &[f64]) -> Vec<f64> {
    assert!(v.len().is_power_of_two(), "length must be a power of two");
    let mut out = v.to_vec();
    let mut h = 1;
    while h < out.len() {
        for block in out.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                (*x, *y) = (*x + *y, *x - *y);
            }
        }
        h *= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    /// `Z`/`I` string, rail 0 first.
    pub label: String,
    /// Basis-index mask of the rails in the string.
    pub mask: usize,
    /// Rotation angle, rad.
    pub delta: f64,
    pub worst_case_probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub num_qubits: usize,
    /// Worst off-diagonal population of `U · V†` over basis states.
    pub leakage_probability: f64,
    /// The `2^n − 1` non-trivial Z-strings, by increasing mask.
    pub channels: Vec<Channel>,
}

pub fn channel_label(num_qubits: usize, mask: usize) -> String {
    (0..num_qubits)
        .map(|q| if mask & (1 << (num_qubits - 1 - q)) != 0 { 'Z' } else { 'I' })
        .collect()
}

impl ChannelReport {
    pub fn channel(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label == label)
    }

    pub fn max_phase_probability(&self) -> f64 {
        self.channels.iter().map(|c| c.worst_case_probability).fold(0.0, f64::max)
    }

    /// Diagonal phases (mean removed) implied by the channel angles.
    pub fn reconstruct_phases(&self) -> Vec<f64> {
        let dim = 1usize << self.num_qubits;
        let mut coeffs = vec![0.0; dim];
        for c in &self.channels {
            coeffs[c.mask] = -0.5 * c.delta;
        }
        walsh_hadamard(&coeffs)
    }
}

/// Channels of the deviation `realized · ideal†`.
pub fn channel_decompose(realized: &DMatrix<C64>, ideal: &DMatrix<C64>) -> Result<ChannelReport> {
    if realized.shape() != ideal.shape() || !realized.is_square() {
        return Err(Error::DimensionMismatch {
            left: realized.nrows(),
            right: ideal.nrows(),
        });
    }
    let dim = realized.nrows();
    if !dim.is_power_of_two() || dim < 2 {
        return Err(Error::InvalidParameter(format!("dimension {dim} is not a qubit register")));
    }
    let n = dim.trailing_zeros() as usize;
    let d = realized * ideal.adjoint();
    let leakage = (0..dim)
        .map(|i| (0..dim).filter(|&j| j != i).map(|j| d[(i, j)].norm_sqr()).sum::<f64>())
        .fold(0.0, f64::max);
    let reference = d[(0, 0)].conj();
    let phases: Vec<f64> = (0..dim).map(|x| wrap_phase((d[(x, x)] * reference).arg())).collect();
    let coeffs = walsh_hadamard(&phases);
    let channels = (1..dim)
        .map(|mask| {
            let delta = -2.0 * coeffs[mask] / dim as f64;
            Channel {
                label: channel_label(n, mask),
                mask,
                delta,
                worst_case_probability: (0.5 * delta).sin().powi(2),
            }
        })
        .collect();
    Ok(ChannelReport {
        num_qubits: n,
        leakage_probability: leakage.min(1.0),
        channels,
    })
}

pub fn channel_decompose_run(run: &ProtocolRun) -> Result<ChannelReport> {
    channel_decompose(&run.realized, &run.ideal)
}

/// Probability that channel `c` picked up relative to `baseline`:
/// `sin²((δ − δ₀) / 2)`.
pub fn sensitivity(report: &ChannelReport, baseline: &ChannelReport) -> Vec<f64> {
    report
        .channels
        .iter()
        .zip(&baseline.channels)
        .map(|(c, b)| (0.5 * (c.delta - b.delta)).sin().powi(2))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuttleRow {
    pub shuttle_time_ns: f64,
    pub flip_flop_probability: f64,
}

/// Minimum steps per ramp in the shuttle sweep.
const MIN_RAMP_STEPS: usize = 1000;

/// Flip-flop probability of one shuttle into the operating point as a
/// function of shuttle time. Each time uses `template`'s fields and the
/// finer of `template.dt` and `T / 1000`.
pub fn sweep_shuttle_time(params: &SpinPairParams, template: &ShuttleSchedule, times: &[f64]) -> Result<Vec<ShuttleRow>> {
    if times.is_empty() {
        return Err(Error::InvalidParameter("no shuttle times given".into()));
    }
    times
        .par_iter()
        .map(|&t| {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidSchedule(format!("shuttle time must be positive, got {t}")));
            }
            let steps = ((t / template.dt).ceil() as usize).max(MIN_RAMP_STEPS);
            let s = ShuttleSchedule::build(template.e_start, template.e_rop, t, 0.0, t / steps as f64)?;
            Ok(ShuttleRow {
                shuttle_time_ns: t,
                flip_flop_probability: ramp_flip_flop(params, &s)?,
            })
        })
        .collect()
}

/// First swept time whose probability is below `threshold`.
pub fn first_time_below(rows: &[ShuttleRow], threshold: f64) -> Option<f64> {
    rows.iter().find(|r| r.flip_flop_probability < threshold).map(|r| r.shuttle_time_ns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftRow {
    pub kind: ShiftKind,
    pub delta_e: f64,
    pub report: ChannelReport,
}

/// Log-log slope of a channel's baseline-subtracted probability against `ΔE`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub kind: ShiftKind,
    /// A channel label, or `max_phase` for the worst phase channel.
    pub channel: String,
    pub slope: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftSweep {
    pub baseline: ChannelReport,
    pub rows: Vec<ShiftRow>,
    pub slopes: Vec<SlopeFit>,
}

/// Window of `|ΔE|` used for slope fits, MV/m.
pub const SLOPE_WINDOW: (f64, f64) = (1e-3, 1e-1);

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl ShiftSweep {
    /// Baseline-subtracted probabilities of `row`.
    pub fn sensitivity(&self, row: &ShiftRow) -> Vec<f64> {
        sensitivity(&row.report, &self.baseline)
    }

    /// Worst baseline-subtracted phase-channel probability of `row`.
    pub fn max_sensitivity(&self, row: &ShiftRow) -> f64 {
        self.sensitivity(row).into_iter().fold(0.0, f64::max)
    }

    pub fn slope(&self, kind: ShiftKind, channel: &str) -> Option<f64> {
        self.slopes
            .iter()
            .find(|s| s.kind == kind && s.channel == channel)
            .map(|s| s.slope)
    }

    fn fit_slopes(&mut self) {
        let mut slopes = Vec::new();
        for kind in [ShiftKind::Static, ShiftKind::Alternating] {
            let rows: Vec<&ShiftRow> = self
                .rows
                .iter()
                .filter(|r| r.kind == kind && r.delta_e.abs() >= SLOPE_WINDOW.0 && r.delta_e.abs() <= SLOPE_WINDOW.1)
                .collect();
            if rows.len() < 2 {
                continue;
            }
            let sens: Vec<(f64, Vec<f64>)> = rows.iter().map(|r| (r.delta_e.abs(), self.sensitivity(r))).collect();
            let mut push = |channel: String, pts: Vec<(f64, f64)>| {
                let points = pts.iter().filter(|p| p.1 > 0.0).count();
                if let Some(slope) = loglog_slope(&pts) {
                    slopes.push(SlopeFit {
                        kind,
                        channel,
                        slope,
                        points,
                    });
                }
            };
            for (k, ch) in self.baseline.channels.iter().enumerate() {
                push(ch.label.clone(), sens.iter().map(|(x, s)| (*x, s[k])).collect());
            }
            push(
                "max_phase".into(),
                sens.iter().map(|(x, s)| (*x, s.iter().copied().fold(0.0, f64::max))).collect(),
            );
        }
        self.slopes = slopes;
    }
}

/// Composite-gate channel reports for every `(kind, ΔE)` pair, in input
/// order, plus per-channel slope fits over [`SLOPE_WINDOW`].
pub fn sweep_shift(protocol: &GateProtocol, kinds: &[ShiftKind], deltas: &[f64]) -> Result<ShiftSweep> {
    let baseline = channel_decompose_run(&protocol.composite_run(&FieldNoise::none())?)?;
    let jobs: Vec<(ShiftKind, f64)> = kinds.iter().flat_map(|&k| deltas.iter().map(move |&d| (k, d))).collect();
    let rows = jobs
        .par_iter()
        .map(|&(kind, delta_e)| {
            let run = protocol.composite_run(&FieldNoise::new(kind, delta_e))?;
            Ok(ShiftRow {
                kind,
                delta_e,
                report: channel_decompose_run(&run)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sweep = ShiftSweep {
        baseline,
        rows,
        slopes: Vec::new(),
    };
    sweep.fit_slopes();
    Ok(sweep)
}

/// Channels of a composite run with a static shift everywhere measured
/// against the same shift applied only during the dwells. Everything the
/// transits contribute (the `a` and `g` channels) should cancel.
pub fn transit_attribution(protocol: &GateProtocol, delta_e: f64) -> Result<ChannelReport> {
    let full = protocol.composite_run(&FieldNoise::new(ShiftKind::Static, delta_e))?;
    let dwell = protocol.composite_run(&FieldNoise::new(ShiftKind::Static, delta_e).dwell_only())?;
    channel_decompose(&full.realized, &dwell.realized)
}

fn write_comments<W: Write>(out: &mut W, comments: &[String]) -> Result<()> {
    for c in comments {
        for line in c.lines() {
            writeln!(out, "# {line}")?;
        }
    }
    Ok(())
}

pub fn write_shuttle_csv<W: Write>(out: &mut W, comments: &[String], rows: &[ShuttleRow]) -> Result<()> {
    write_comments(out, comments)?;
    writeln!(out, "shuttle_time_ns,flip_flop_probability")?;
    for r in rows {
        writeln!(out, "{},{}", r.shuttle_time_ns, r.flip_flop_probability)?;
    }
    Ok(())
}

/// One row per channel plus a `leakage` row (with `delta_rad = nan`) for
/// every sweep point.
pub fn write_shift_csv<W: Write>(out: &mut W, comments: &[String], sweep: &ShiftSweep) -> Result<()> {
    write_comments(out, comments)?;
    writeln!(out, "kind,delta_E_MV_per_m,channel,delta_rad,worst_case_probability")?;
    for r in &sweep.rows {
        let kind = r.kind.name();
        for c in &r.report.channels {
            writeln!(out, "{kind},{},{},{},{}", r.delta_e, c.label, c.delta, c.worst_case_probability)?;
        }
        writeln!(out, "{kind},{},leakage,nan,{}", r.delta_e, r.report.leakage_probability)?;
    }
    Ok(())
}

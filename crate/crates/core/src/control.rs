//! Shuttle schedules `E(t)`: ramp in to the operating point, dwell, ramp back
//! out, with quintic ramps whose first and second derivatives vanish at both
//! ends. Plus the field-shift noise model.

use std::io::Write;

use crate::spin_model::HyperfineModel;
use crate::{Error, Result};

/// Parked (ionized) field at both ends of a shuttle, MV/m.
pub const DEFAULT_E_START: f64 = 10.0;
/// Duration of each ramp, ns.
pub const DEFAULT_T_RAMP: f64 = 8.0;
/// Integration step, ns. Halving it moves unitary entries by well under 1e-8.
pub const DEFAULT_DT: f64 = 2.5e-4;

/// Relative tolerance for "`dt` divides the ramp duration".
const GRID_TOLERANCE: f64 = 1e-9;

/// `6x⁵ − 15x⁴ + 10x³`, clamped to `[0, 1]` outside the unit interval.
pub fn smootherstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * x * (x * (6.0 * x - 15.0) + 10.0)
}

/// Number of `dt` steps in `duration`, if `dt` divides it.
fn commensurate_steps(duration: f64, dt: f64) -> Option<usize> {
    let n = (duration / dt).round();
    (n >= 1.0 && (n * dt - duration).abs() <= GRID_TOLERANCE * duration).then_some(n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentShape {
    /// Constant field.
    Hold(f64),
    /// Smootherstep from one field to another.
    Ramp { from: f64, to: f64 },
}

/// One piece of a field timeline. `offset` is a constant added on top of the
/// nominal shape (used for noise injection).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    /// Integration step for ramps. Holds are propagated exactly.
    pub dt: f64,
    pub shape: SegmentShape,
    pub offset: f64,
}

impl Segment {
    pub fn hold(duration: f64, field: f64, dt: f64) -> Self {
        Self {
            duration,
            dt,
            shape: SegmentShape::Hold(field),
            offset: 0.0,
        }
    }

    pub fn ramp(duration: f64, from: f64, to: f64, dt: f64) -> Self {
        Self {
            duration,
            dt,
            shape: SegmentShape::Ramp { from, to },
            offset: 0.0,
        }
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Field at local time `t ∈ [0, duration]`.
    pub fn field_at(&self, t: f64) -> f64 {
        let nominal = match self.shape {
            SegmentShape::Hold(e) => e,
            SegmentShape::Ramp { from, to } => from + (to - from) * smootherstep(t / self.duration),
        };
        nominal + self.offset
    }

    pub fn is_hold(&self) -> bool {
        matches!(self.shape, SegmentShape::Hold(_))
    }

    /// Uniform sample grid for this segment: the ramp step, or for holds the
    /// coarsest uniform step not exceeding it.
    pub fn grid(&self) -> (usize, f64) {
        if self.duration == 0.0 {
            return (0, 0.0);
        }
        let n = ((self.duration / self.dt) * (1.0 - GRID_TOLERANCE)).ceil().max(1.0) as usize;
        (n, self.duration / n as f64)
    }
}

/// An ordered list of segments laid end to end from `t = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub segments: Vec<Segment>,
}

impl Timeline {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self { segments }
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Field at global time `t`; at a joint the later segment wins.
    /// Times outside `[0, duration]` are clamped.
    pub fn field_at(&self, t: f64) -> f64 {
        let mut start = 0.0;
        let last = self.segments.len().saturating_sub(1);
        for (i, seg) in self.segments.iter().enumerate() {
            if t < start + seg.duration || i == last {
                return seg.field_at((t - start).clamp(0.0, seg.duration));
            }
            start += seg.duration;
        }
        f64::NAN
    }

    /// Samples `(t, E)` on each segment's grid, joints included once.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start = 0.0;
        for seg in &self.segments {
            let (n, h) = seg.grid();
            let first = usize::from(!out.is_empty());
            for k in first..=n {
                out.push((start + k as f64 * h, seg.field_at(k as f64 * h)));
            }
            start += seg.duration;
        }
        if out.is_empty() {
            if let Some(seg) = self.segments.first() {
                out.push((0.0, seg.field_at(0.0)));
            }
        }
        out
    }

    /// Adds `delta` to every segment's offset.
    pub fn shifted(mut self, delta: f64) -> Self {
        for s in &mut self.segments {
            s.offset += delta;
        }
        self
    }
}

/// Ramp in, dwell at `e_rop` for `tau`, ramp out.
///
/// `dt` must divide `t_ramp`. The dwell is a constant field and may have any
/// non-negative length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShuttleSchedule {
    pub e_start: f64,
    pub e_rop: f64,
    pub t_ramp: f64,
    pub tau: f64,
    pub dt: f64,
}

impl ShuttleSchedule {
    pub fn build(e_start: f64, e_rop: f64, t_ramp: f64, tau: f64, dt: f64) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if ![e_start, e_rop, t_ramp, tau, dt].iter().all(|x| x.is_finite()) {
            return bad("schedule parameters must be finite".into());
        }
        if t_ramp <= 0.0 || dt <= 0.0 {
            return bad(format!("ramp time and step must be positive (T_ramp = {t_ramp}, dt = {dt})"));
        }
        if tau < 0.0 {
            return bad(format!("dwell time must be non-negative, got {tau}"));
        }
        if commensurate_steps(t_ramp, dt).is_none() {
            return bad(format!("dt = {dt} does not divide T_ramp = {t_ramp}"));
        }
        Ok(Self {
            e_start,
            e_rop,
            t_ramp,
            tau,
            dt,
        })
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        Self::build(self.e_start, self.e_rop, self.t_ramp, tau, self.dt)
    }

    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::build(self.e_start, self.e_rop, self.t_ramp, self.tau, dt)
    }

    /// Same shape with both ramps stretched by `factor` (dt unchanged).
    pub fn stretched(&self, factor: f64) -> Result<Self> {
        Self::build(self.e_start, self.e_rop, self.t_ramp * factor, self.tau, self.dt)
    }

    pub fn total_duration(&self) -> f64 {
        2.0 * self.t_ramp + self.tau
    }

    pub fn ramp_steps(&self) -> usize {
        commensurate_steps(self.t_ramp, self.dt).expect("validated at construction")
    }

    pub fn ramp_in(&self) -> Segment {
        Segment::ramp(self.t_ramp, self.e_start, self.e_rop, self.dt)
    }

    pub fn dwell(&self) -> Segment {
        Segment::hold(self.tau, self.e_rop, self.dt)
    }

    pub fn ramp_out(&self) -> Segment {
        Segment::ramp(self.t_ramp, self.e_rop, self.e_start, self.dt)
    }

    /// Ramp-in, dwell, ramp-out. A zero-length dwell is kept as an empty
    /// segment so segment indices are stable.
    pub fn timeline(&self) -> Timeline {
        Timeline::new(vec![self.ramp_in(), self.dwell(), self.ramp_out()])
    }

    pub fn field_at(&self, t: f64) -> f64 {
        self.timeline().field_at(t)
    }

    pub fn samples(&self) -> Vec<(f64, f64)> {
        self.timeline().samples()
    }

    /// Times of the joints: start, end of ramp-in, start of ramp-out, end.
    pub fn joints(&self) -> [f64; 4] {
        [0.0, self.t_ramp, self.t_ramp + self.tau, self.total_duration()]
    }

    /// Writes `t_ns,E_MV_per_m,A_MHz` rows.
    pub fn write_csv<W: Write>(&self, out: &mut W, hyperfine: &HyperfineModel) -> Result<()> {
        writeln!(out, "t_ns,E_MV_per_m,A_MHz")?;
        for (t, e) in self.samples() {
            writeln!(out, "{t},{e},{}", hyperfine.hyperfine_at(e)?)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftKind {
    /// `+ΔE` for the whole run.
    Static,
    /// `+ΔE/2` before `flip_time`, `−ΔE/2` from it on.
    Alternating,
}

impl ShiftKind {
    pub fn name(&self) -> &'static str {
        match self {
            ShiftKind::Static => "static",
            ShiftKind::Alternating => "alternating",
        }
    }
}

impl std::str::FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(ShiftKind::Static),
            "alternating" => Ok(ShiftKind::Alternating),
            other => Err(Error::InvalidShift(format!("unknown shift kind `{other}`"))),
        }
    }
}

/// Unmodelled field offset. The controller still plays the nominal schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSpec {
    pub kind: ShiftKind,
    /// MV/m.
    pub delta_e: f64,
    /// ns; ignored for static shifts.
    pub flip_time: f64,
}

impl ShiftSpec {
    pub fn none() -> Self {
        Self::static_shift(0.0)
    }

    pub fn static_shift(delta_e: f64) -> Self {
        Self {
            kind: ShiftKind::Static,
            delta_e,
            flip_time: 0.0,
        }
    }

    pub fn alternating(delta_e: f64, flip_time: f64) -> Self {
        Self {
            kind: ShiftKind::Alternating,
            delta_e,
            flip_time,
        }
    }

    /// Checks the shift against a timeline `[0, duration]`.
    pub fn validate(&self, duration: f64) -> Result<()> {
        if !self.delta_e.is_finite() {
            return Err(Error::InvalidShift(format!("ΔE must be finite, got {}", self.delta_e)));
        }
        if self.kind == ShiftKind::Alternating && !(self.flip_time >= 0.0 && self.flip_time <= duration) {
            return Err(Error::InvalidShift(format!(
                "flip time {} outside timeline [0, {duration}]",
                self.flip_time
            )));
        }
        Ok(())
    }

    /// Offset added to the field at time `t`.
    pub fn offset_at(&self, t: f64) -> f64 {
        match self.kind {
            ShiftKind::Static => self.delta_e,
            ShiftKind::Alternating if t < self.flip_time => 0.5 * self.delta_e,
            ShiftKind::Alternating => -0.5 * self.delta_e,
        }
    }
}

/// Perturbed samples `(t, E(t) + offset(t))`.
pub fn apply_shift(samples: &[(f64, f64)], spec: &ShiftSpec) -> Result<Vec<(f64, f64)>> {
    let duration = samples.last().map_or(0.0, |s| s.0) - samples.first().map_or(0.0, |s| s.0);
    spec.validate(samples.first().map_or(0.0, |s| s.0) + duration)?;
    Ok(samples.iter().map(|&(t, e)| (t, e + spec.offset_at(t))).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeReport {
    /// MV/(m·ns).
    pub max_first: f64,
    /// MV/(m·ns²).
    pub max_second: f64,
}

/// Central-difference derivative maxima over a uniform grid of step `dt`.
pub fn derivative_report(schedule: &ShuttleSchedule) -> Result<DerivativeReport> {
    let h = schedule.dt;
    let n = (schedule.total_duration() / h * (1.0 + GRID_TOLERANCE)).floor() as usize;
    if n + 1 < 5 {
        return Err(Error::InvalidSchedule(format!("need at least 5 samples, got {}", n + 1)));
    }
    let timeline = schedule.timeline();
    let e: Vec<f64> = (0..=n).map(|k| timeline.field_at(k as f64 * h)).collect();
    let mut report = DerivativeReport {
        max_first: 0.0,
        max_second: 0.0,
    };
    for k in 1..n {
        let d1 = (e[k + 1] - e[k - 1]) / (2.0 * h);
        let d2 = (e[k + 1] - 2.0 * e[k] + e[k - 1]) / (h * h);
        report.max_first = report.max_first.max(d1.abs());
        report.max_second = report.max_second.max(d2.abs());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schedule() -> ShuttleSchedule {
        ShuttleSchedule::build(10.0, 2.0, 4.0, 3.3, 1e-3).unwrap()
    }

    #[test]
    fn smootherstep_shape() {
        assert_eq!(smootherstep(0.0), 0.0);
        assert_eq!(smootherstep(1.0), 1.0);
        assert_eq!(smootherstep(0.5), 0.5);
        assert_eq!(smootherstep(-1.0), 0.0);
        assert_eq!(smootherstep(2.0), 1.0);
    }

    #[test]
    fn build_validation() {
        assert!(ShuttleSchedule::build(10.0, 2.0, 0.0, 1.0, 1e-3).is_err());
        assert!(ShuttleSchedule::build(10.0, 2.0, 1.0, -1.0, 1e-3).is_err());
        assert!(ShuttleSchedule::build(10.0, 2.0, 1.0, 1.0, 0.0).is_err());
        assert!(ShuttleSchedule::build(10.0, 2.0, 1.0, 1.0, 0.3).is_err());
        assert!(ShuttleSchedule::build(10.0, f64::NAN, 1.0, 1.0, 0.1).is_err());
        assert!(ShuttleSchedule::build(10.0, 2.0, 1.0, 0.0, 0.1).is_ok());
    }

    #[test]
    fn endpoints_and_dwell() {
        let s = schedule();
        let [t0, t1, t2, t3] = s.joints();
        assert_eq!(s.field_at(t0), 10.0);
        assert_eq!(s.field_at(t3), 10.0);
        assert_eq!(s.field_at(t1), 2.0);
        assert_eq!(s.field_at(t2), 2.0);
        for k in 0..=100 {
            assert_eq!(s.field_at(t1 + s.tau * k as f64 / 100.0), 2.0);
        }
        assert!((s.field_at(s.t_ramp / 2.0) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_schedule() {
        let s = ShuttleSchedule::build(2.0, 2.0, 1.0, 1.0, 0.01).unwrap();
        assert!(s.samples().iter().all(|&(_, e)| e == 2.0));
        let r = derivative_report(&s).unwrap();
        assert_eq!((r.max_first, r.max_second), (0.0, 0.0));
    }

    #[test]
    fn samples_are_ordered_and_uniform_per_segment() {
        let s = schedule();
        let samples = s.samples();
        assert!(samples.windows(2).all(|w| w[1].0 > w[0].0));
        assert_eq!(samples[0].0, 0.0);
        assert!((samples.last().unwrap().0 - s.total_duration()).abs() < 1e-9);
        let ramp_pts = s.ramp_steps() + 1;
        let ramp = &samples[..ramp_pts];
        for w in ramp.windows(2) {
            assert!((w[1].0 - w[0].0 - s.dt).abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let s = schedule();
        let total = s.total_duration();
        for k in 0..=200 {
            let t = total * k as f64 / 200.0;
            assert!((s.field_at(t) - s.field_at(total - t)).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_report_matches_quintic_maximum() {
        let s = ShuttleSchedule::build(10.0, 2.0, 4.0, 0.0, 1e-4).unwrap();
        let r = derivative_report(&s).unwrap();
        let expected = 1.875 * 8.0 / 4.0;
        assert!((r.max_first / expected - 1.0).abs() < 1e-6, "{}", r.max_first);
        // Dense sampling oracle for the second derivative peak: 10√3/3 · ΔE / T².
        let x0 = 0.5 - 3f64.sqrt() / 6.0;
        let s2 = 60.0 * x0 - 180.0 * x0 * x0 + 120.0 * x0 * x0 * x0;
        assert!((r.max_second / (s2 * 8.0 / 16.0) - 1.0).abs() < 1e-5);

        let slow = s.stretched(2.0).unwrap();
        let rs = derivative_report(&slow).unwrap();
        assert!((rs.max_first / r.max_first - 0.5).abs() < 1e-6);
        assert!((rs.max_second / r.max_second - 0.25).abs() < 1e-4);

        let tiny = ShuttleSchedule::build(10.0, 2.0, 0.001, 0.0, 0.001).unwrap();
        assert!(derivative_report(&tiny).is_err());
    }

    /// Oracle: finite differences on the sampled schedule at the joints,
    /// Richardson-extrapolated to remove the leading `O(h)` one-sided term.
    #[test]
    fn derivatives_vanish_at_joints() {
        let t_ramp = 4.0;
        let s = ShuttleSchedule::build(10.0, 2.0, t_ramp, 2.0, t_ramp / 1e4).unwrap();
        let samples = s.samples();
        let h = s.dt;
        let at = |t: f64| {
            if t < 0.0 || t > s.total_duration() {
                return s.e_start;
            }
            let k = samples.partition_point(|p| p.0 < t - 1e-12);
            assert!((samples[k].0 - t).abs() < 1e-9, "no sample at {t}");
            samples[k].1
        };
        let d1 = |t: f64, h: f64| (at(t + h) - at(t - h)) / (2.0 * h);
        let d2 = |t: f64, h: f64| (at(t + h) - 2.0 * at(t) + at(t - h)) / (h * h);
        let peak1 = 1.875 * 8.0 / t_ramp;
        let peak2 = 5.773_502_691_896_258 * 8.0 / (t_ramp * t_ramp);
        for t in s.joints() {
            let first = 2.0 * d1(t, h) - d1(t, 2.0 * h);
            let second = 2.0 * d2(t, h) - d2(t, 2.0 * h);
            assert!(first.abs() < 1e-6 * peak1, "t={t}: {first}");
            assert!(second.abs() < 1e-6 * peak2, "t={t}: {second}");
        }
    }

    #[test]
    fn hyperfine_inherits_flat_endpoints() {
        let s = ShuttleSchedule::build(10.0, 2.0, 4.0, 1.0, 1e-3).unwrap();
        let model = HyperfineModel::default();
        let a = |t: f64| model.hyperfine_at(s.field_at(t)).unwrap();
        let h = 1e-3;
        let scale = 117.0 / s.t_ramp;
        for t in [s.t_ramp, s.t_ramp + s.tau] {
            let d = (a(t + h) - a(t - h)) / (2.0 * h);
            assert!(d.abs() < 1e-6 * scale, "{d}");
        }
    }

    #[test]
    fn shifts() {
        let s = schedule();
        let samples = s.samples();
        assert_eq!(apply_shift(&samples, &ShiftSpec::none()).unwrap(), samples);
        let st = apply_shift(&samples, &ShiftSpec::static_shift(0.3)).unwrap();
        for (a, b) in samples.iter().zip(&st) {
            assert_eq!(b.1, a.1 + 0.3);
        }
        let flip = s.t_ramp + s.tau / 2.0;
        let spec = ShiftSpec::alternating(0.4, flip);
        let offsets: Vec<f64> = (1..=1000).map(|k| k as f64 * 1e-3).flat_map(|u| [spec.offset_at(flip - u), spec.offset_at(flip + u)]).collect();
        assert_eq!(offsets.iter().sum::<f64>(), 0.0);
        assert_eq!(spec.offset_at(flip - 1e-9), 0.2);
        assert_eq!(spec.offset_at(flip), -0.2);
        assert!(apply_shift(&samples, &ShiftSpec::alternating(0.4, s.total_duration() + 1.0)).is_err());
        assert!(apply_shift(&samples, &ShiftSpec::static_shift(f64::INFINITY)).is_err());
    }

    #[test]
    fn csv_export() {
        let s = ShuttleSchedule::build(10.0, 2.0, 1.0, 0.5, 0.25).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf, &HyperfineModel::default()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t_ns,E_MV_per_m,A_MHz"));
        assert_eq!(lines.count(), s.samples().len());
    }

    proptest! {
        #[test]
        fn ramps_stay_between_endpoints(e0 in -20.0..20.0f64, e1 in -20.0..20.0f64, x in 0.0..1.0f64) {
            let s = Segment::ramp(1.0, e0, e1, 0.01);
            let e = s.field_at(x);
            prop_assert!(e >= e0.min(e1) - 1e-12 && e <= e0.max(e1) + 1e-12);
        }

        #[test]
        fn static_shift_commutes_with_reversal(delta in -1.0..1.0f64, u in 0.0..1.0f64) {
            let s = schedule();
            let total = s.total_duration();
            let spec = ShiftSpec::static_shift(delta);
            let t = u * total;
            let fwd = s.field_at(t) + spec.offset_at(t);
            let rev = s.field_at(total - t) + spec.offset_at(total - t);
            prop_assert!((fwd - rev).abs() < 1e-9);
        }

        #[test]
        fn alternating_shift_is_odd_about_flip(delta in -1.0..1.0f64, u in 1e-6..1.0f64) {
            let spec = ShiftSpec::alternating(delta, 5.0);
            prop_assert_eq!(spec.offset_at(5.0 - u), -spec.offset_at(5.0 + u));
        }
    }
}

//! Adaptive Dormand-Prince 8(5,3) integration with order-7 dense output.
//!
//! Error control follows Hairer's DOP853: the local error of the order-8
//! solution is estimated from the embedded 5th and 3rd order solutions, and
//! the step is accepted when the weighted RMS norm with weights
//! `tol + tol·max(|y₀|, |y₁|)` is below one. Near force discontinuities the
//! controller keeps rejecting and shrinking `h` until the jump is resolved.

use std::ops::ControlFlow;

use crate::dynamics::{AccelerationField, OrbitState};
use crate::error::{Error, Result};
use crate::vec2::Vec2;

use super::dop853_tableau::{A, C, D, E3, E5, STAGES, STAGES_EXTENDED};

type State = [f64; 4];

const SAFETY: f64 = 0.9;
/// Bounds on `h_new / h`.
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;
const ERROR_EXPONENT: f64 = 1.0 / 8.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    /// Used as both absolute and relative tolerance.
    pub tol: f64,
    /// Smallest admissible step; defaults to `1e-14 · (t_end - t₀)`.
    pub h_min: Option<f64>,
    pub h_max: Option<f64>,
    pub h_init: Option<f64>,
    pub max_steps: usize,
    /// Defaults to `1e-6 · r₀`.
    pub collision_radius: Option<f64>,
}

impl AdaptiveOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            h_min: None,
            h_max: None,
            h_init: None,
            max_steps: 50_000_000,
            collision_radius: None,
        }
    }
}

/// Counters of an adaptive run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdaptiveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Whether the observer stopped the integration before `t_end`.
    pub stopped: bool,
    pub final_state: Option<OrbitState>,
}

#[inline]
fn rhs<F: AccelerationField + ?Sized>(field: &F, t: f64, y: &State) -> Result<State> {
    let a = field.acceleration(t, Vec2::new(y[0], y[1]), Vec2::new(y[2], y[3]))?;
    Ok([y[2], y[3], a.x, a.y])
}

#[inline]
fn combine(y: &State, k: &[State], coeffs: &[f64], h: f64) -> State {
    let mut out = *y;
    for (kj, &c) in k.iter().zip(coeffs) {
        if c != 0.0 {
            let hc = h * c;
            for i in 0..4 {
                out[i] += hc * kj[i];
            }
        }
    }
    out
}

/// Polynomial interpolant over one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSegment {
    pub t0: f64,
    pub t1: f64,
    y0: State,
    y1: State,
    coeffs: [State; 7],
}

impl DenseSegment {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }

    pub fn start(&self) -> OrbitState {
        OrbitState::from_array(self.t0, self.y0)
    }

    pub fn end(&self) -> OrbitState {
        OrbitState::from_array(self.t1, self.y1)
    }

    /// Interpolated state; the mesh endpoints are returned verbatim.
    pub fn eval(&self, t: f64) -> OrbitState {
        if t == self.t0 {
            return self.start();
        }
        if t == self.t1 {
            return self.end();
        }
        let x = (t - self.t0) / (self.t1 - self.t0);
        let w = 1.0 - x;
        let mut y = [0.0; 4];
        for i in 0..4 {
            let c = &self.coeffs;
            let mut acc = c[6][i];
            acc = acc * x + c[5][i];
            acc = acc * w + c[4][i];
            acc = acc * x + c[3][i];
            acc = acc * w + c[2][i];
            acc = acc * x + c[1][i];
            acc = acc * w + c[0][i];
            y[i] = self.y0[i] + acc * x;
        }
        OrbitState::from_array(t, y)
    }
}

/// View of an accepted step handed to observers. The dense interpolant is
/// built on request since it costs three extra force evaluations.
pub struct AcceptedStep<'a, F: ?Sized> {
    pub t0: f64,
    pub t1: f64,
    y0: &'a State,
    y1: &'a State,
    k: &'a [State; STAGES + 1],
    field: &'a F,
}

impl<F: AccelerationField + ?Sized> AcceptedStep<'_, F> {
    pub fn start(&self) -> OrbitState {
        OrbitState::from_array(self.t0, *self.y0)
    }

    pub fn end(&self) -> OrbitState {
        OrbitState::from_array(self.t1, *self.y1)
    }

    pub fn dense(&self) -> Result<DenseSegment> {
        let h = self.t1 - self.t0;
        let mut k = [[0.0; 4]; STAGES_EXTENDED];
        k[..=STAGES].copy_from_slice(self.k);
        for s in STAGES + 1..STAGES_EXTENDED {
            let ys = combine(self.y0, &k[..s], &A[s][..s], h);
            k[s] = rhs(self.field, self.t0 + C[s] * h, &ys)?;
        }
        let mut coeffs = [[0.0; 4]; 7];
        for i in 0..4 {
            let dy = self.y1[i] - self.y0[i];
            let f_old = k[0][i];
            let f_new = k[STAGES][i];
            coeffs[0][i] = dy;
            coeffs[1][i] = h * f_old - dy;
            coeffs[2][i] = 2.0 * dy - h * (f_new + f_old);
            for (row, d) in D.iter().enumerate() {
                let mut acc = 0.0;
                for (kj, &dj) in k.iter().zip(d.iter()) {
                    acc += dj * kj[i];
                }
                coeffs[3 + row][i] = h * acc;
            }
        }
        Ok(DenseSegment {
            t0: self.t0,
            t1: self.t1,
            y0: *self.y0,
            y1: *self.y1,
            coeffs,
        })
    }
}

fn rms_scaled(v: &State, scale: &State) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let q = v[i] / scale[i];
        s += q * q;
    }
    (s / 4.0).sqrt()
}

fn initial_step<F: AccelerationField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &State,
    f0: &State,
    span: f64,
    tol: f64,
) -> Result<f64> {
    let scale = y0.map(|v| tol + tol * v.abs());
    let d0 = rms_scaled(y0, &scale);
    let d1 = rms_scaled(f0, &scale);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let mut y1 = *y0;
    for i in 0..4 {
        y1[i] += h0 * f0[i];
    }
    let f1 = rhs(field, t0 + h0, &y1)?;
    let diff = [f1[0] - f0[0], f1[1] - f0[1], f1[2] - f0[2], f1[3] - f0[3]];
    let d2 = rms_scaled(&diff, &scale) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(ERROR_EXPONENT)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates from `state0` to `t_end`, calling `observer` after every
/// accepted step. The observer may stop the run early by returning
/// `ControlFlow::Break`.
pub fn integrate_adaptive_with<F, O>(
    state0: &OrbitState,
    t_end: f64,
    opts: &AdaptiveOptions,
    field: &F,
    mut observer: O,
) -> Result<AdaptiveStats>
where
    F: AccelerationField + ?Sized,
    O: FnMut(&AcceptedStep<'_, F>) -> Result<ControlFlow<()>>,
{
    let tol = opts.tol;
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let t0 = state0.t;
    if !(t_end > t0) {
        return Err(Error::InvalidArgument(format!("t_end = {t_end} must exceed t0 = {t0}")));
    }
    let span = t_end - t0;
    let h_min = opts.h_min.unwrap_or(1e-14 * span);
    let h_max = opts.h_max.unwrap_or(span).min(span);
    let collision = opts
        .collision_radius
        .unwrap_or_else(|| super::fixed::default_collision_radius(state0));

    let mut stats = AdaptiveStats::default();
    let mut t = t0;
    let mut y = state0.to_array();
    let mut k = [[0.0; 4]; STAGES + 1];
    k[0] = rhs(field, t, &y)?;
    stats.evaluations += 1;

    let mut h = match opts.h_init {
        Some(h) => h,
        None => {
            stats.evaluations += 1;
            initial_step(field, t, &y, &k[0], span, tol)?
        }
    }
    .min(h_max);
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let mut finishing = false;
        if t + h >= t_end || t + 1.01 * h >= t_end {
            h = t_end - t;
            finishing = true;
        }
        if h < h_min {
            return Err(Error::StepSizeUnderflow { t, h, h_min });
        }

        let mut stage_error = None;
        for s in 1..STAGES {
            let ys = combine(&y, &k[..s], &A[s][..s], h);
            match rhs(field, t + C[s] * h, &ys) {
                Ok(v) => k[s] = v,
                Err(e) => {
                    stage_error = Some(e);
                    break;
                }
            }
        }
        stats.evaluations += STAGES - 1;
        let (y_new, f_new) = match stage_error {
            None => {
                let y_new = combine(&y, &k[..STAGES], &A[STAGES][..STAGES], h);
                stats.evaluations += 1;
                match rhs(field, t + h, &y_new) {
                    Ok(f) => (y_new, Some(f)),
                    Err(e) => {
                        stage_error = Some(e);
                        (y_new, None)
                    }
                }
            }
            Some(_) => (y, None),
        };

        // A stage that lands on a singular point is treated like a huge
        // error estimate while a smaller step is still possible.
        let err = match (&stage_error, f_new) {
            (None, Some(f_new)) => {
                k[STAGES] = f_new;
                let mut e5 = [0.0; 4];
                let mut e3 = [0.0; 4];
                for (j, kj) in k.iter().enumerate() {
                    for i in 0..4 {
                        e5[i] += E5[j] * kj[i];
                        e3[i] += E3[j] * kj[i];
                    }
                }
                let mut n5 = 0.0;
                let mut n3 = 0.0;
                for i in 0..4 {
                    let sk = tol + tol * y[i].abs().max(y_new[i].abs());
                    n5 += (e5[i] / sk).powi(2);
                    n3 += (e3[i] / sk).powi(2);
                }
                let mut deno = n5 + 0.01 * n3;
                if deno <= 0.0 {
                    deno = 1.0;
                }
                h * n5 * (1.0 / (4.0 * deno)).sqrt()
            }
            _ => f64::INFINITY,
        };

        if err.is_finite() && err <= 1.0 {
            stats.accepted += 1;
            let t_new = if finishing { t_end } else { t + h };
            let r = (y_new[0] * y_new[0] + y_new[1] * y_new[1]).sqrt();
            if !y_new.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite { t: t_new });
            }
            if r < collision {
                return Err(Error::Collision {
                    t: t_new,
                    r,
                    radius: collision,
                });
            }
            let flow = {
                let step = AcceptedStep {
                    t0: t,
                    t1: t_new,
                    y0: &y,
                    y1: &y_new,
                    k: &k,
                    field,
                };
                observer(&step)?
            };
            t = t_new;
            y = y_new;
            k[0] = k[STAGES];
            if flow.is_break() {
                stats.stopped = true;
                break;
            }
            if finishing {
                break;
            }
            let fac = (err.powf(ERROR_EXPONENT) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(h_max);
            if last_rejected {
                h_new = h_new.min(h);
            }
            h = h_new;
            last_rejected = false;
        } else {
            if stats.accepted >= 1 {
                stats.rejected += 1;
            }
            let shrink = if err.is_finite() {
                (err.powf(ERROR_EXPONENT) / SAFETY).min(1.0 / FAC_MIN)
            } else {
                1.0 / FAC_MIN
            };
            let h_new = h / shrink;
            if h_new < h_min {
                if let Some(e) = stage_error {
                    return Err(e);
                }
                return Err(Error::StepSizeUnderflow { t, h: h_new, h_min });
            }
            h = h_new;
            last_rejected = true;
        }
    }
    stats.final_state = Some(OrbitState::from_array(t, y));
    Ok(stats)
}

/// Adaptive solution with per-step dense output over `[t_start, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSolution {
    pub tol: f64,
    pub segments: Vec<DenseSegment>,
    pub stats: AdaptiveStats,
}

impl DenseSolution {
    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(f64::NAN, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(f64::NAN, |s| s.t1)
    }

    /// Accepted step boundaries, including both ends.
    pub fn mesh(&self) -> Vec<f64> {
        let mut m: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        if let Some(last) = self.segments.last() {
            m.push(last.t1);
        }
        m
    }

    /// Index of the segment covering `t`; at a shared boundary the later
    /// segment wins so that mesh points evaluate to their stored state.
    pub fn segment_index(&self, t: f64) -> Result<usize> {
        let (start, end) = (self.t_start(), self.t_end());
        if !(t >= start && t <= end) {
            return Err(Error::OutOfSpan { t, start, end });
        }
        let idx = self.segments.partition_point(|s| s.t0 <= t);
        Ok(idx.saturating_sub(1))
    }

    pub fn eval(&self, t: f64) -> Result<OrbitState> {
        let i = self.segment_index(t)?;
        Ok(self.segments[i].eval(t))
    }
}

/// Integrates and keeps every step's interpolant.
pub fn integrate_adaptive<F: AccelerationField + ?Sized>(
    state0: &OrbitState,
    t_end: f64,
    opts: &AdaptiveOptions,
    field: &F,
) -> Result<DenseSolution> {
    let mut segments = Vec::new();
    let stats = integrate_adaptive_with(state0, t_end, opts, field, |step| {
        segments.push(step.dense()?);
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(DenseSolution {
        tol: opts.tol,
        segments,
        stats,
    })
}

/// Free-function form of [`DenseSolution::eval`].
pub fn dense_eval(solution: &DenseSolution, t: f64) -> Result<OrbitState> {
    solution.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{diagnostics, initial_conditions, units, OrbitSpec};

    fn oscillator(_t: f64, x: Vec2, _v: Vec2) -> Result<Vec2> {
        Ok(-x)
    }

    #[test]
    fn tableau_rows_are_consistent() {
        // c_i = Σ_j a_ij for every stage
        for (s, row) in A.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            assert!((sum - C[s]).abs() < 1e-12, "stage {s}: {sum} vs {}", C[s]);
        }
        let b_sum: f64 = A[STAGES][..STAGES].iter().sum();
        assert!((b_sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let s = OrbitState::new(0.0, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
        let t_end = 10.0;
        let sol = integrate_adaptive(&s, t_end, &AdaptiveOptions::with_tol(1e-12), &oscillator).unwrap();
        let end = sol.eval(t_end).unwrap();
        assert!((end.pos.x - t_end.cos()).abs() < 1e-10);
        assert!((end.pos.y - t_end.sin()).abs() < 1e-10);
        // dense output between mesh points
        for i in 0..200 {
            let t = i as f64 * 0.05;
            let st = sol.eval(t).unwrap();
            assert!((st.pos.x - t.cos()).abs() < 1e-10, "t = {t}");
            assert!((st.vel.x + t.sin()).abs() < 1e-10, "t = {t}");
        }
    }

    #[test]
    fn dense_output_has_seventh_order() {
        // single step of fixed size: interpolation error at mid-step should
        // drop by about 2⁸ when h halves
        let s = OrbitState::new(0.0, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
        let mid_err = |h: f64| {
            let opts = AdaptiveOptions {
                h_init: Some(h),
                h_max: Some(h),
                ..AdaptiveOptions::with_tol(1.0)
            };
            let sol = integrate_adaptive(&s, h, &opts, &oscillator).unwrap();
            assert_eq!(sol.segments.len(), 1);
            let t = 0.37 * h;
            (sol.eval(t).unwrap().pos.x - t.cos()).abs()
        };
        let p = (mid_err(0.8) / mid_err(0.4)).log2();
        assert!(p > 7.0, "observed interpolation order {p}");
    }

    #[test]
    fn mesh_points_are_reproduced_exactly() {
        let spec = OrbitSpec::mercury();
        let s = initial_conditions(&spec).unwrap();
        let sol = integrate_adaptive(&s, 3.0, &AdaptiveOptions::with_tol(1e-10), &spec.newtonian()).unwrap();
        for seg in &sol.segments {
            assert_eq!(sol.eval(seg.t0).unwrap(), seg.start());
        }
        let last = sol.segments.last().unwrap();
        assert_eq!(sol.eval(last.t1).unwrap(), last.end());
        assert_eq!(sol.eval(0.0).unwrap(), s);
        assert!(matches!(sol.eval(-0.1), Err(Error::OutOfSpan { .. })));
        assert!(matches!(sol.eval(3.1), Err(Error::OutOfSpan { .. })));
        let mesh = sol.mesh();
        assert!(mesh.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn newtonian_invariants_are_conserved() {
        let spec = OrbitSpec::mercury();
        let gm = units::GM_SUN;
        let s = initial_conditions(&spec).unwrap();
        let d0 = diagnostics(&s, gm).unwrap();
        let period = d0.period(gm);
        let tol = 1e-10;
        let mut worst = [0.0f64; 3];
        integrate_adaptive_with(&s, 3.0 * period, &AdaptiveOptions::with_tol(tol), &spec.newtonian(), |step| {
            let d = diagnostics(&step.end(), gm).unwrap();
            worst[0] = worst[0].max(((d.energy - d0.energy) / d0.energy).abs());
            worst[1] = worst[1].max(((d.ang_mom - d0.ang_mom) / d0.ang_mom).abs());
            worst[2] = worst[2].max((d.eccentricity() - d0.eccentricity()).abs());
            Ok(ControlFlow::Continue(()))
        })
        .unwrap();
        for w in worst {
            assert!(w <= 10.0 * tol, "{worst:?}");
        }
    }

    #[test]
    fn invalid_arguments_are_rejected() {
        let s = OrbitState::new(0.0, Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0));
        assert!(integrate_adaptive(&s, 1.0, &AdaptiveOptions::with_tol(0.0), &oscillator).is_err());
        assert!(integrate_adaptive(&s, 0.0, &AdaptiveOptions::with_tol(1e-8), &oscillator).is_err());
    }

    #[test]
    fn survives_a_jump_discontinuity() {
        // piecewise-constant force with a jump at x = 0.5
        let f = |_t: f64, x: Vec2, _v: Vec2| -> Result<Vec2> {
            Ok(Vec2::new(if x.x < 0.5 { 1.0 } else { -1.0 }, 0.0))
        };
        let s = OrbitState::new(0.0, Vec2::new(0.0, 1.0), Vec2::new(0.0, 0.0));
        let sol = integrate_adaptive(&s, 2.0, &AdaptiveOptions::with_tol(1e-10), &f).unwrap();
        // crossing at t = 1 with v = 1, then decelerating
        let end = sol.eval(2.0).unwrap();
        assert!((end.pos.x - 1.0).abs() < 1e-7, "{:?}", end);
        assert!(end.vel.x.abs() < 1e-7);
        assert!(sol.stats.rejected > 0);
    }

    #[test]
    fn step_underflow_is_reported() {
        let f = |_t: f64, x: Vec2, _v: Vec2| -> Result<Vec2> { Ok(Vec2::new(1.0 / (1.0 - x.x).powi(3), 0.0)) };
        let s = OrbitState::new(0.0, Vec2::new(0.0, 1.0), Vec2::new(1.0, 0.0));
        let opts = AdaptiveOptions {
            collision_radius: Some(0.0),
            ..AdaptiveOptions::with_tol(1e-10)
        };
        let err = integrate_adaptive(&s, 5.0, &opts, &f).unwrap_err();
        assert!(
            matches!(err, Error::StepSizeUnderflow { .. } | Error::NonFinite { .. }),
            "{err}"
        );
    }
}

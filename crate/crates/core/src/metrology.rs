//! Perihelion passages and per-revolution perihelion shifts.
//!
//! Fixed-step trajectories are handled by fitting a low-order polynomial
//! `r(φ)` around each discrete minimum of the radius. Adaptive runs use the
//! continuous output: the root of the radial velocity `x·vx + y·vy` is
//! located with [`zeroin`](crate::rootfind::zeroin).
//!
//! Both trackers consume states one at a time so that long runs need not
//! store their trajectory.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{AccelerationField, OrbitState};
use crate::error::{Error, Result};
use crate::integrators::{AcceptedStep, DenseSegment, DenseSolution, Trajectory};
use crate::rootfind::{zeroin, MACHINE_TOLERANCE};
use crate::vec2::Vec2;

/// Default number of samples in a perihelion fit.
pub const DEFAULT_WINDOW: usize = 7;
/// Revolutions used per measurement.
pub const DEFAULT_REVOLUTIONS: usize = 3;
/// Orbits with smaller eccentricity get a quality flag.
pub const NEAR_CIRCULAR_ECCENTRICITY: f64 = 1e-4;
/// Coarse samples per orbital period used to bracket perihelia.
pub const BRACKET_SAMPLES_PER_PERIOD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSource {
    /// The initial condition, which is a perihelion by construction.
    Initial,
    /// Minimum of a least-squares polynomial of the given degree.
    Fit { order: usize },
    /// Root of the radial velocity on continuous output.
    Root,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerihelionEvent {
    pub t: f64,
    pub r: f64,
    /// Unwrapped polar angle.
    pub phi: f64,
    pub revolution_index: usize,
    pub source: EventSource,
    /// RMS residual of the polynomial fit in Gm; zero for other sources.
    pub fit_rms: f64,
    /// Set when `r` was flat across the fit window, so that the angle is
    /// arbitrary.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShiftQuality {
    Good,
    /// Eccentricity below [`NEAR_CIRCULAR_ECCENTRICITY`]; the perihelion
    /// direction is ill-conditioned.
    NearCircular,
    /// At least one event came from a flat fit window.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftMeasurement {
    /// Perihelion advance per revolution in radians, positive in the
    /// counterclockwise sense.
    pub shift_per_rev: f64,
    pub revolutions_used: usize,
    pub source: EventSource,
    pub quality: ShiftQuality,
    pub events: Vec<PerihelionEvent>,
}

impl ShiftMeasurement {
    /// Downgrades the quality for near-circular orbits.
    pub fn flag_eccentricity(mut self, e: f64) -> Self {
        if e < NEAR_CIRCULAR_ECCENTRICITY && self.quality == ShiftQuality::Good {
            self.quality = ShiftQuality::NearCircular;
        }
        self
    }
}

/// `(φ_k - φ_0 ∓ 2πk) / k`, where the sign of `2πk` follows the sense of
/// rotation. Events are matched by `revolution_index`.
pub fn measure_shift(events: &[PerihelionEvent], k: usize) -> Result<ShiftMeasurement> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one revolution".into()));
    }
    let first = events
        .iter()
        .find(|e| e.revolution_index == 0)
        .ok_or(Error::InsufficientEvents { needed: k + 1, got: events.len() })?;
    let last = events
        .iter()
        .find(|e| e.revolution_index == k)
        .ok_or(Error::InsufficientEvents { needed: k + 1, got: events.len() })?;
    let total = last.phi - first.phi;
    let turns = TAU * k as f64;
    let shift = if total >= 0.0 { (total - turns) / k as f64 } else { (total + turns) / k as f64 };
    let used: Vec<PerihelionEvent> = events.iter().filter(|e| e.revolution_index <= k).copied().collect();
    let quality = if used.iter().any(|e| e.degenerate) { ShiftQuality::Degenerate } else { ShiftQuality::Good };
    Ok(ShiftMeasurement {
        shift_per_rev: shift,
        revolutions_used: k,
        source: last.source,
        quality,
        events: used,
    })
}

/// Continuous polar angle built from successive `atan2` values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleUnwrapper {
    last_raw: f64,
    winding: i64,
}

impl AngleUnwrapper {
    pub fn new(p: Vec2) -> Self {
        Self {
            last_raw: p.angle(),
            winding: 0,
        }
    }

    /// Current unwrapped angle.
    pub fn current(&self) -> f64 {
        self.last_raw + TAU * self.winding as f64
    }

    /// Unwrapped angle of `p` on the branch closest to the current angle,
    /// without advancing.
    pub fn peek(&self, p: Vec2) -> f64 {
        let raw = p.angle();
        raw + TAU * self.branch(raw) as f64
    }

    /// Advances to `p` and returns its unwrapped angle.
    pub fn advance(&mut self, p: Vec2) -> f64 {
        let raw = p.angle();
        self.winding = self.branch(raw);
        self.last_raw = raw;
        self.current()
    }

    fn branch(&self, raw: f64) -> i64 {
        let d = raw - self.last_raw;
        if d > PI {
            self.winding - 1
        } else if d < -PI {
            self.winding + 1
        } else {
            self.winding
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Sample {
    t: f64,
    r: f64,
    phi: f64,
}

/// Polynomial `Σ c_k u^k` in the scaled variable `u = (φ - φ_c) / s`.
struct ScaledPoly {
    center: f64,
    scale: f64,
    r: Vec<f64>,
    t: Vec<f64>,
    rms: f64,
}

fn horner(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
}

fn horner_derivative(c: &[f64], u: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &ck)| acc * u + k as f64 * ck)
}

fn fit_window(samples: &[Sample], center: usize, order: usize) -> Result<ScaledPoly> {
    let n = samples.len();
    if n < order + 1 {
        return Err(Error::InsufficientSamples { needed: order + 1, got: n });
    }
    let c = samples[center];
    let scale = samples
        .iter()
        .map(|s| (s.phi - c.phi).abs())
        .fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(Error::IllConditioned("fit window spans no angle".into()));
    }
    let v = DMatrix::from_fn(n, order + 1, |i, k| ((samples[i].phi - c.phi) / scale).powi(k as i32));
    let svd = v.clone().svd(true, true);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    if !(smin > 1e-10 * smax) {
        return Err(Error::IllConditioned(format!("fit matrix condition number {:.3e}", smax / smin)));
    }
    // fit the deviation from the centre sample to keep the significant digits
    let rb = DVector::from_iterator(n, samples.iter().map(|s| s.r - c.r));
    let tb = DVector::from_iterator(n, samples.iter().map(|s| s.t - c.t));
    let rc = svd.solve(&rb, 0.0).map_err(|e| Error::IllConditioned(e.to_string()))?;
    let tc = svd.solve(&tb, 0.0).map_err(|e| Error::IllConditioned(e.to_string()))?;
    let resid = &v * &rc - &rb;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    let mut r: Vec<f64> = rc.iter().copied().collect();
    let mut t: Vec<f64> = tc.iter().copied().collect();
    r[0] += c.r;
    t[0] += c.t;
    Ok(ScaledPoly {
        center: c.phi,
        scale,
        r,
        t,
        rms,
    })
}

/// Fits the window and returns the event at the fitted minimum. `center`
/// indexes the discrete minimum inside `samples`.
fn fit_event(samples: &[Sample], center: usize, order: usize, revolution_index: usize) -> Result<PerihelionEvent> {
    let c = samples[center];
    let spread = samples.iter().map(|s| (s.r - c.r).abs()).fold(0.0, f64::max);
    if spread <= 1e-14 * c.r {
        return Ok(PerihelionEvent {
            t: c.t,
            r: c.r,
            phi: c.phi,
            revolution_index,
            source: EventSource::Fit { order },
            fit_rms: 0.0,
            degenerate: true,
        });
    }
    let poly = fit_window(samples, center, order)?;
    let u_of = |s: &Sample| (s.phi - poly.center) / poly.scale;
    let d = |u: f64| Ok(horner_derivative(&poly.r, u));
    let lo = u_of(&samples[center.saturating_sub(1)]);
    let hi = u_of(&samples[(center + 1).min(samples.len() - 1)]);
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let u = match zeroin(d, lo, hi, MACHINE_TOLERANCE, 1e-15) {
        Ok(u) => u,
        Err(Error::NoSignChange { .. }) => {
            let ends = (u_of(&samples[0]), u_of(&samples[samples.len() - 1]));
            let (a, b) = if ends.0 <= ends.1 { ends } else { (ends.1, ends.0) };
            zeroin(d, a, b, MACHINE_TOLERANCE, 1e-15).map_err(|_| Error::NoMinimum)?
        }
        Err(e) => return Err(e),
    };
    if horner_derivative(&poly.r, u - 1e-6) > horner_derivative(&poly.r, u + 1e-6) {
        return Err(Error::NoMinimum);
    }
    Ok(PerihelionEvent {
        t: horner(&poly.t, u),
        r: horner(&poly.r, u),
        phi: poly.center + u * poly.scale,
        revolution_index,
        source: EventSource::Fit { order },
        fit_rms: poly.rms,
        degenerate: false,
    })
}

/// Streaming perihelion finder for uniformly sampled trajectories.
#[derive(Debug, Clone)]
pub struct FixedPerihelionTracker {
    window: usize,
    fit_order: usize,
    buf: VecDeque<Sample>,
    unwrapper: Option<AngleUnwrapper>,
    events: Vec<PerihelionEvent>,
}

impl FixedPerihelionTracker {
    pub fn new(window: usize, fit_order: usize) -> Result<Self> {
        if fit_order < 2 {
            return Err(Error::InvalidArgument(format!("fit order must be at least 2, got {fit_order}")));
        }
        if window < fit_order + 1 || window < 3 {
            return Err(Error::InvalidArgument(format!(
                "window of {window} samples cannot support a degree-{fit_order} fit"
            )));
        }
        Ok(Self {
            window,
            fit_order,
            buf: VecDeque::with_capacity(window),
            unwrapper: None,
            events: Vec::new(),
        })
    }

    /// Records `state` as revolution 0. Must precede the first `push`.
    pub fn seed_initial(&mut self, state: &OrbitState) {
        let un = AngleUnwrapper::new(state.pos);
        self.events.push(PerihelionEvent {
            t: state.t,
            r: state.radius(),
            phi: un.current(),
            revolution_index: 0,
            source: EventSource::Initial,
            fit_rms: 0.0,
            degenerate: false,
        });
    }

    pub fn push(&mut self, state: &OrbitState) -> Result<Option<PerihelionEvent>> {
        let phi = match &mut self.unwrapper {
            Some(u) => u.advance(state.pos),
            None => {
                let u = AngleUnwrapper::new(state.pos);
                let phi = u.current();
                self.unwrapper = Some(u);
                phi
            }
        };
        if self.buf.len() == self.window {
            self.buf.pop_front();
        }
        self.buf.push_back(Sample {
            t: state.t,
            r: state.radius(),
            phi,
        });
        if self.buf.len() < self.window {
            return Ok(None);
        }
        let c = self.window / 2;
        let rc = self.buf[c].r;
        let is_min = self.buf[c - 1].r > rc && self.buf.iter().all(|s| s.r >= rc);
        if !is_min {
            return Ok(None);
        }
        if let Some(last) = self.events.last() {
            if (self.buf[c].phi - last.phi).abs() < PI {
                return Ok(None);
            }
        }
        let samples: Vec<Sample> = self.buf.iter().copied().collect();
        let event = fit_event(&samples, c, self.fit_order, self.next_index())?;
        self.events.push(event);
        Ok(Some(event))
    }

    fn next_index(&self) -> usize {
        self.events.last().map_or(0, |e| e.revolution_index + 1)
    }

    pub fn events(&self) -> &[PerihelionEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<PerihelionEvent> {
        self.events
    }
}

/// First interior perihelion of a stored trajectory.
///
/// A sample counts as a discrete minimum when no other sample within
/// `window / 2` positions is smaller. On an exactly circular orbit the
/// middle sample is returned with `degenerate` set.
pub fn find_perihelion_fixed(traj: &Trajectory, window: usize, fit_order: usize) -> Result<PerihelionEvent> {
    find_perihelion_in_states(&traj.states, window, fit_order)
}

/// As [`find_perihelion_fixed`] on a bare slice of states.
pub fn find_perihelion_in_states(states: &[OrbitState], window: usize, fit_order: usize) -> Result<PerihelionEvent> {
    FixedPerihelionTracker::new(window, fit_order)?;
    if states.len() < window {
        return Err(Error::InsufficientSamples {
            needed: window,
            got: states.len(),
        });
    }
    let mut un = AngleUnwrapper::new(states[0].pos);
    let samples: Vec<Sample> = states
        .iter()
        .map(|s| Sample {
            t: s.t,
            r: s.radius(),
            phi: un.advance(s.pos),
        })
        .collect();
    let half = window / 2;
    let r0 = samples[0].r;
    if samples.iter().all(|s| (s.r - r0).abs() <= 1e-14 * r0) {
        let mid = samples.len() / 2;
        let lo = mid.saturating_sub(half);
        return fit_event(&samples[lo..lo + window], mid - lo, fit_order, 0);
    }
    for c in half..samples.len() - (window - 1 - half) {
        let w = &samples[c - half..c - half + window];
        let rc = samples[c].r;
        if samples[c - 1].r > rc && w.iter().all(|s| s.r >= rc) {
            return fit_event(w, half, fit_order, 0);
        }
    }
    Err(Error::NoMinimum)
}

#[inline]
fn radial_rate(s: &OrbitState) -> f64 {
    s.pos.dot(s.vel)
}

/// Streaming perihelion finder for adaptive runs.
#[derive(Debug, Clone)]
pub struct DensePerihelionTracker {
    sample_dt: f64,
    unwrapper: Option<AngleUnwrapper>,
    events: Vec<PerihelionEvent>,
}

impl DensePerihelionTracker {
    /// `period` is an estimate used to space the bracketing samples.
    pub fn new(period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!("period estimate must be positive, got {period}")));
        }
        Ok(Self {
            sample_dt: period / BRACKET_SAMPLES_PER_PERIOD,
            unwrapper: None,
            events: Vec::new(),
        })
    }

    /// Records `state` as revolution 0.
    pub fn seed_initial(&mut self, state: &OrbitState) {
        let un = AngleUnwrapper::new(state.pos);
        self.unwrapper = Some(un);
        self.events.push(PerihelionEvent {
            t: state.t,
            r: state.radius(),
            phi: un.current(),
            revolution_index: 0,
            source: EventSource::Initial,
            fit_rms: 0.0,
            degenerate: false,
        });
    }

    /// Scans one accepted step and returns the number of new events.
    pub fn observe<F: AccelerationField + ?Sized>(&mut self, step: &AcceptedStep<'_, F>) -> Result<usize> {
        let start = step.start();
        let end = step.end();
        let mut un = *self.unwrapper.get_or_insert_with(|| AngleUnwrapper::new(start.pos));
        let span = step.t1 - step.t0;
        let pieces = (span / self.sample_dt).ceil().max(1.0) as usize;
        let mut found = 0;
        let segment = if pieces > 1 || (radial_rate(&start) < 0.0 && radial_rate(&end) >= 0.0) {
            Some(step.dense()?)
        } else {
            None
        };
        if let Some(seg) = segment {
            let mut a = start;
            for p in 1..=pieces {
                let b = if p == pieces { end } else { seg.eval(step.t0 + span * p as f64 / pieces as f64) };
                if radial_rate(&a) < 0.0 && radial_rate(&b) >= 0.0 {
                    let t = zeroin(|t| Ok(radial_rate(&seg.eval(t))), a.t, b.t, MACHINE_TOLERANCE, 0.0)?;
                    let s = seg.eval(t);
                    let phi = un.peek(s.pos);
                    if self.accept(phi) {
                        let index = self.next_index();
                        self.events.push(PerihelionEvent {
                            t,
                            r: s.radius(),
                            phi,
                            revolution_index: index,
                            source: EventSource::Root,
                            fit_rms: 0.0,
                            degenerate: false,
                        });
                        found += 1;
                    }
                }
                un.advance(b.pos);
                a = b;
            }
        } else {
            un.advance(end.pos);
        }
        self.unwrapper = Some(un);
        Ok(found)
    }

    fn accept(&self, phi: f64) -> bool {
        self.events.last().is_none_or(|e| (phi - e.phi).abs() >= PI)
    }

    fn next_index(&self) -> usize {
        self.events.last().map_or(0, |e| e.revolution_index + 1)
    }

    pub fn events(&self) -> &[PerihelionEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<PerihelionEvent> {
        self.events
    }
}

/// Perihelion inside `bracket` on a stored dense solution.
///
/// The bracket is scanned at the accepted-step boundaries it contains and
/// at 64 equally spaced points; exactly one sign change of the radial
/// velocity, from negative to positive, must be found.
pub fn find_perihelion_dense(sol: &DenseSolution, bracket: (f64, f64)) -> Result<PerihelionEvent> {
    let (t_a, t_b) = bracket;
    if !(t_a < t_b) {
        return Err(Error::InvalidArgument(format!("empty bracket [{t_a}, {t_b}]")));
    }
    sol.segment_index(t_a)?;
    sol.segment_index(t_b)?;
    let mut grid: Vec<f64> = (0..=64).map(|k| t_a + (t_b - t_a) * k as f64 / 64.0).collect();
    grid.extend(sol.mesh().into_iter().filter(|&t| t > t_a && t < t_b));
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut changes = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for &t in &grid {
        let rho = radial_rate(&sol.eval(t)?);
        if rho == 0.0 {
            continue;
        }
        if let Some((tp, rp)) = prev {
            if rp.signum() != rho.signum() {
                changes.push((tp, t, rp < 0.0));
            }
        }
        prev = Some((t, rho));
    }
    match changes.len() {
        0 => return Err(Error::NoSignChange { start: t_a, end: t_b }),
        1 => {}
        count => return Err(Error::MultipleSignChanges { start: t_a, end: t_b, count }),
    }
    let (lo, hi, rising) = changes[0];
    if !rising {
        return Err(Error::NoMinimum);
    }
    let t = zeroin(|t| Ok(radial_rate(&sol.eval(t)?)), lo, hi, MACHINE_TOLERANCE, 0.0)?;
    let s = sol.eval(t)?;

    // unwrap from the start of the solution through the step boundaries
    let seg_idx = sol.segment_index(t)?;
    let first: &DenseSegment = &sol.segments[0];
    let mut un = AngleUnwrapper::new(first.start().pos);
    let phi_start = un.current();
    for seg in &sol.segments[..seg_idx] {
        un.advance(seg.end().pos);
    }
    let phi = un.peek(s.pos);
    Ok(PerihelionEvent {
        t,
        r: s.radius(),
        phi,
        revolution_index: ((phi - phi_start).abs() / TAU).round() as usize,
        source: EventSource::Root,
        fit_rms: 0.0,
        degenerate: false,
    })
}

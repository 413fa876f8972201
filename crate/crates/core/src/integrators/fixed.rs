use std::fmt;
use std::ops::ControlFlow;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{AccelerationField, OrbitState};
use crate::error::{Error, Result};

/// Fixed-step schemes used by particle codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FixedStepMethod {
    /// Velocity first, then position with the updated velocity.
    Euler,
    /// Kick-drift-kick.
    Leapfrog,
    /// Explicit midpoint.
    Rk2,
    /// Classical four-stage Runge-Kutta.
    Rk4,
}

impl FixedStepMethod {
    pub const ALL: [FixedStepMethod; 4] = [Self::Euler, Self::Leapfrog, Self::Rk2, Self::Rk4];

    /// Nominal global convergence order.
    pub fn order(self) -> u32 {
        match self {
            Self::Euler => 1,
            Self::Leapfrog | Self::Rk2 => 2,
            Self::Rk4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Euler => "euler",
            Self::Leapfrog => "leapfrog",
            Self::Rk2 => "rk2",
            Self::Rk4 => "rk4",
        }
    }

    /// Degree of the polynomial fitted to r(φ) around a perihelion: a
    /// parabola for Euler and leapfrog, a quartic for Runge-Kutta.
    pub fn perihelion_fit_order(self) -> usize {
        match self {
            Self::Euler | Self::Leapfrog => 2,
            Self::Rk2 | Self::Rk4 => 4,
        }
    }

    pub fn step<F: AccelerationField + ?Sized>(self, state: &OrbitState, h: f64, accel: &F) -> Result<OrbitState> {
        match self {
            Self::Euler => step_euler(state, h, accel),
            Self::Leapfrog => step_leapfrog(state, h, accel),
            Self::Rk2 => step_rk2(state, h, accel),
            Self::Rk4 => step_rk4(state, h, accel),
        }
    }
}

impl fmt::Display for FixedStepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FixedStepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Self::Euler),
            "leapfrog" | "kdk" | "verlet" => Ok(Self::Leapfrog),
            "rk2" | "midpoint" => Ok(Self::Rk2),
            "rk4" => Ok(Self::Rk4),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

fn check_step(h: f64) -> Result<()> {
    if h != 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be finite and nonzero, got {h}")))
    }
}

/// `v₊ = v + a(t, x) h`, `x₊ = x + v₊ h`.
pub fn step_euler<F: AccelerationField + ?Sized>(s: &OrbitState, h: f64, accel: &F) -> Result<OrbitState> {
    check_step(h)?;
    let a = accel.acceleration(s.t, s.pos, s.vel)?;
    let vel = s.vel + a * h;
    let pos = s.pos + vel * h;
    Ok(OrbitState::new(s.t + h, pos, vel))
}

/// Kick-drift-kick leapfrog. Reversible: a step with `-h` undoes a step
/// with `h` up to rounding.
pub fn step_leapfrog<F: AccelerationField + ?Sized>(s: &OrbitState, h: f64, accel: &F) -> Result<OrbitState> {
    check_step(h)?;
    let a0 = accel.acceleration(s.t, s.pos, s.vel)?;
    let v_half = s.vel + a0 * (0.5 * h);
    let pos = s.pos + v_half * h;
    let t = s.t + h;
    let a1 = accel.acceleration(t, pos, v_half)?;
    let vel = v_half + a1 * (0.5 * h);
    Ok(OrbitState::new(t, pos, vel))
}

/// Explicit midpoint rule, tableau `c = (0, 1/2)`, `b = (0, 1)`.
pub fn step_rk2<F: AccelerationField + ?Sized>(s: &OrbitState, h: f64, accel: &F) -> Result<OrbitState> {
    check_step(h)?;
    let k1x = s.vel;
    let k1v = accel.acceleration(s.t, s.pos, s.vel)?;
    let x_half = s.pos + k1x * (0.5 * h);
    let v_half = s.vel + k1v * (0.5 * h);
    let k2x = v_half;
    let k2v = accel.acceleration(s.t + 0.5 * h, x_half, v_half)?;
    Ok(OrbitState::new(s.t + h, s.pos + k2x * h, s.vel + k2v * h))
}

/// Classical Runge-Kutta, weights (1/6, 1/3, 1/3, 1/6).
pub fn step_rk4<F: AccelerationField + ?Sized>(s: &OrbitState, h: f64, accel: &F) -> Result<OrbitState> {
    check_step(h)?;
    let half = 0.5 * h;
    let k1x = s.vel;
    let k1v = accel.acceleration(s.t, s.pos, s.vel)?;
    let k2x = s.vel + k1v * half;
    let k2v = accel.acceleration(s.t + half, s.pos + k1x * half, k2x)?;
    let k3x = s.vel + k2v * half;
    let k3v = accel.acceleration(s.t + half, s.pos + k2x * half, k3x)?;
    let k4x = s.vel + k3v * h;
    let k4v = accel.acceleration(s.t + h, s.pos + k3x * h, k4x)?;
    let sixth = h / 6.0;
    let pos = s.pos + (k1x + (k2x + k3x) * 2.0 + k4x) * sixth;
    let vel = s.vel + (k1v + (k2v + k3v) * 2.0 + k4v) * sixth;
    Ok(OrbitState::new(s.t + h, pos, vel))
}

/// Uniformly sampled trajectory produced by a fixed-step method.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub method: FixedStepMethod,
    pub h: f64,
    pub states: Vec<OrbitState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &OrbitState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Collision radius used when none is configured: a millionth of the
/// initial distance.
pub fn default_collision_radius(state0: &OrbitState) -> f64 {
    1e-6 * state0.radius()
}

/// Runs `n_steps` steps without storing them, feeding every state (the
/// initial one included) to `observer`. Returns the final state.
pub fn integrate_fixed_with<F, O>(
    state0: &OrbitState,
    h: f64,
    n_steps: usize,
    method: FixedStepMethod,
    accel: &F,
    collision_radius: Option<f64>,
    mut observer: O,
) -> Result<OrbitState>
where
    F: AccelerationField + ?Sized,
    O: FnMut(&OrbitState),
{
    integrate_fixed_until(state0, h, n_steps, method, accel, collision_radius, |s| {
        observer(s);
        Ok(ControlFlow::Continue(()))
    })
    .map(|(state, _)| state)
}

/// Like [`integrate_fixed_with`], but the observer may stop the run early
/// or abort it with an error. Returns the last state and whether the
/// observer stopped the run.
pub fn integrate_fixed_until<F, O>(
    state0: &OrbitState,
    h: f64,
    n_steps: usize,
    method: FixedStepMethod,
    accel: &F,
    collision_radius: Option<f64>,
    mut observer: O,
) -> Result<(OrbitState, bool)>
where
    F: AccelerationField + ?Sized,
    O: FnMut(&OrbitState) -> Result<ControlFlow<()>>,
{
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    let radius = collision_radius.unwrap_or_else(|| default_collision_radius(state0));
    let mut state = *state0;
    if observer(&state)?.is_break() {
        return Ok((state, true));
    }
    for n in 1..=n_steps {
        let mut next = method.step(&state, h, accel)?;
        // t = t₀ + n h exactly rather than accumulated
        next.t = state0.t + n as f64 * h;
        let r = next.radius();
        if !(next.pos.is_finite() && next.vel.is_finite()) {
            return Err(Error::NonFinite { t: next.t });
        }
        if r < radius {
            return Err(Error::Collision { t: next.t, r, radius });
        }
        state = next;
        if observer(&state)?.is_break() {
            return Ok((state, true));
        }
    }
    Ok((state, false))
}

/// Runs `n_steps` steps and returns all `n_steps + 1` states.
pub fn integrate_fixed<F, O>(
    state0: &OrbitState,
    h: f64,
    n_steps: usize,
    method: FixedStepMethod,
    accel: &F,
    collision_radius: Option<f64>,
    mut observer: O,
) -> Result<Trajectory>
where
    F: AccelerationField + ?Sized,
    O: FnMut(&OrbitState),
{
    let mut states = Vec::with_capacity(n_steps.saturating_add(1).min(1 << 24));
    integrate_fixed_with(state0, h, n_steps, method, accel, collision_radius, |s| {
        observer(s);
        states.push(*s);
    })?;
    Ok(Trajectory { method, h, states })
}

//! Single measurement: integrate an orbit for a few revolutions and return
//! its perihelion shift.

use std::fmt;
use std::ops::ControlFlow;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    diagnostics, initial_conditions, relativistic_advance_prediction, AccelerationField, Diagnostics, ExactForce,
    OrbitSpec, OrbitState,
};
use crate::error::{Error, Result};
use crate::integrators::{integrate_adaptive_with, integrate_fixed_until, AdaptiveOptions, FixedStepMethod};
use crate::mesh::{Mesh, MeshSpec};
use crate::metrology::{
    measure_shift, DensePerihelionTracker, FixedPerihelionTracker, ShiftMeasurement, DEFAULT_REVOLUTIONS,
    DEFAULT_WINDOW,
};

/// Integration horizon, in initial periods per requested revolution.
pub const HORIZON_PERIODS_PER_REVOLUTION: f64 = 10.0;

/// Adaptive tolerance used for lattice runs.
pub const MESH_TOLERANCE: f64 = 8e-11;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IntegratorSpec {
    Fixed { method: FixedStepMethod, h: f64 },
    Adaptive { tol: f64 },
}

impl IntegratorSpec {
    pub fn method_name(&self) -> &'static str {
        match self {
            IntegratorSpec::Fixed { method, .. } => method.name(),
            IntegratorSpec::Adaptive { .. } => "dop853",
        }
    }

    pub fn h(&self) -> Option<f64> {
        match *self {
            IntegratorSpec::Fixed { h, .. } => Some(h),
            IntegratorSpec::Adaptive { .. } => None,
        }
    }

    pub fn tol(&self) -> Option<f64> {
        match *self {
            IntegratorSpec::Adaptive { tol } => Some(tol),
            IntegratorSpec::Fixed { .. } => None,
        }
    }
}

impl fmt::Display for IntegratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntegratorSpec::Fixed { method, h } => write!(f, "{method} h={h}"),
            IntegratorSpec::Adaptive { tol } => write!(f, "dop853 tol={tol}"),
        }
    }
}

/// Force acting on the orbiting body.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ForceSpec {
    Newtonian,
    Relativistic,
    /// Newtonian potential sampled on a lattice.
    Mesh(MeshSpec),
}

impl ForceSpec {
    pub fn scheme_name(&self) -> &'static str {
        match self {
            ForceSpec::Newtonian => "newtonian",
            ForceSpec::Relativistic => "relativistic",
            ForceSpec::Mesh(m) => m.scheme.name(),
        }
    }

    pub fn dx(&self) -> Option<f64> {
        match self {
            ForceSpec::Mesh(m) => Some(m.dx),
            _ => None,
        }
    }
}

/// Concrete force model for an orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceModel {
    Exact(ExactForce),
    Mesh(Mesh),
}

impl ForceModel {
    pub fn build(force: &ForceSpec, orbit: &OrbitSpec) -> Result<Self> {
        Ok(match force {
            ForceSpec::Newtonian => ForceModel::Exact(orbit.newtonian()),
            ForceSpec::Relativistic => ForceModel::Exact(orbit.relativistic()),
            ForceSpec::Mesh(m) => ForceModel::Mesh(Mesh::kepler(*m, orbit.gm)?),
        })
    }
}

impl AccelerationField for ForceModel {
    #[inline]
    fn acceleration(&self, t: f64, pos: crate::Vec2, vel: crate::Vec2) -> Result<crate::Vec2> {
        match self {
            ForceModel::Exact(f) => f.acceleration(t, pos, vel),
            ForceModel::Mesh(m) => m.acceleration(t, pos, vel),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub orbit: OrbitSpec,
    pub integrator: IntegratorSpec,
    pub force: ForceSpec,
    pub revolutions: usize,
    /// Samples per perihelion fit for fixed-step runs.
    pub window: usize,
    /// Wall-clock budget; `None` for unlimited.
    pub budget: Option<Duration>,
}

impl RunSpec {
    pub fn new(orbit: OrbitSpec, integrator: IntegratorSpec, force: ForceSpec) -> Self {
        Self {
            orbit,
            integrator,
            force,
            revolutions: DEFAULT_REVOLUTIONS,
            window: DEFAULT_WINDOW,
            budget: None,
        }
    }

    pub fn with_revolutions(mut self, revolutions: usize) -> Self {
        self.revolutions = revolutions;
        self
    }

    pub fn with_budget(mut self, budget: Option<Duration>) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub measurement: ShiftMeasurement,
    /// Relativistic advance per revolution for the initial orbit.
    pub predicted_advance: f64,
    pub initial: OrbitState,
    pub diagnostics: Diagnostics,
    pub steps: usize,
    pub runtime: Duration,
}

impl RunOutcome {
    /// Whether the spurious shift is below the relativistic signal.
    pub fn detectable(&self) -> bool {
        classify_detectability(self.measurement.shift_per_rev.abs(), self.predicted_advance)
    }
}

/// `|shift| < advance`, strictly.
pub fn classify_detectability(abs_shift: f64, predicted_advance: f64) -> bool {
    abs_shift < predicted_advance
}

/// Relativistic advance predicted from the orbit's initial elements.
pub fn predicted_advance(spec: &OrbitSpec) -> Result<f64> {
    let s = initial_conditions(spec)?;
    let d = diagnostics(&s, spec.gm)?;
    relativistic_advance_prediction(d.semi_major_axis(spec.gm), d.eccentricity(), spec.r_sch)
}

struct Clock {
    start: Instant,
    budget: Option<Duration>,
    calls: u32,
}

impl Clock {
    fn check(&mut self) -> Result<()> {
        self.calls = self.calls.wrapping_add(1);
        if let Some(b) = self.budget {
            if self.calls.is_multiple_of(256) && self.start.elapsed() > b {
                return Err(Error::Timeout(b.as_secs_f64()));
            }
        }
        Ok(())
    }
}

/// Integrates `spec.revolutions` revolutions and measures the shift.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    spec.orbit.validate()?;
    run_from_state(spec, initial_conditions(&spec.orbit)?)
}

/// [`run`] from an arbitrary initial state, e.g. a reversed one. The orbit
/// spec still supplies `GM`, `r_sch` and the lattice.
pub fn run_from_state(spec: &RunSpec, state0: OrbitState) -> Result<RunOutcome> {
    let start = Instant::now();
    if spec.revolutions == 0 {
        return Err(Error::InvalidArgument("revolutions must be at least 1".into()));
    }
    let diag = diagnostics(&state0, spec.orbit.gm)?;
    let period = diag.period(spec.orbit.gm);
    if !period.is_finite() {
        return Err(Error::InvalidOrbit("initial state is unbound".into()));
    }
    let predicted = relativistic_advance_prediction(diag.semi_major_axis(spec.orbit.gm), diag.eccentricity(), spec.orbit.r_sch)?;
    let field = ForceModel::build(&spec.force, &spec.orbit)?;
    let k = spec.revolutions;
    // The run stops as soon as revolution k is seen. Non-conservative lattice
    // forces can lengthen the period considerably, hence the wide horizon.
    let horizon = HORIZON_PERIODS_PER_REVOLUTION * (k as f64 + 1.0) * period;
    let mut clock = Clock {
        start,
        budget: spec.budget,
        calls: 0,
    };
    let mut steps = 0usize;

    let events = match spec.integrator {
        IntegratorSpec::Fixed { method, h } => {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
            }
            let mut tracker = FixedPerihelionTracker::new(spec.window, method.perihelion_fit_order())?;
            tracker.seed_initial(&state0);
            let n_steps = (horizon / h).ceil() as usize;
            integrate_fixed_until(&state0, h, n_steps, method, &field, None, |s| {
                clock.check()?;
                steps += 1;
                tracker.push(s)?;
                Ok(if tracker.events().len() > k {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                })
            })?;
            tracker.into_events()
        }
        IntegratorSpec::Adaptive { tol } => {
            let mut tracker = DensePerihelionTracker::new(period)?;
            tracker.seed_initial(&state0);
            let opts = AdaptiveOptions::with_tol(tol);
            integrate_adaptive_with(&state0, state0.t + horizon, &opts, &field, |step| {
                clock.check()?;
                steps += 1;
                tracker.observe(step)?;
                Ok(if tracker.events().len() > k {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                })
            })?;
            tracker.into_events()
        }
    };
    let measurement = measure_shift(&events, k)?.flag_eccentricity(diag.eccentricity());
    Ok(RunOutcome {
        measurement,
        predicted_advance: predicted,
        initial: state0,
        diagnostics: diag,
        steps,
        runtime: start.elapsed(),
    })
}

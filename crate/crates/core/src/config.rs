//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Lists are comma
//! separated. [`RunConfig::dump`] writes every key, so a dumped file
//! reproduces the run it came from.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use crate::dynamics::{units, EccentricityScaling, OrbitSpec, ReferenceOrbit};
use crate::error::{Error, Result};
use crate::harness::{Harness, OutputFormat, DEFAULT_ANGLES, DEFAULT_DX_VALUES, DEFAULT_SWEEP_H};
use crate::integrators::FixedStepMethod;
use crate::mesh::{LinearVariant, MeshScheme, MeshSpec};
use crate::metrology::{DEFAULT_REVOLUTIONS, DEFAULT_WINDOW};
use crate::simulate::{ForceSpec, IntegratorSpec, RunSpec, MESH_TOLERANCE};
use crate::vec2::Vec2;

/// Time integrator selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodChoice {
    Fixed(FixedStepMethod),
    Adaptive,
}

impl MethodChoice {
    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::Fixed(m) => m.name(),
            MethodChoice::Adaptive => "adaptive",
        }
    }
}

impl FromStr for MethodChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adaptive" | "dop853" => Ok(MethodChoice::Adaptive),
            other => other.parse().map(MethodChoice::Fixed),
        }
    }
}

/// Force selection; `Mesh` uses the lattice fields of [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceChoice {
    Newtonian,
    Relativistic,
    Mesh(MeshScheme),
}

impl ForceChoice {
    pub fn name(self) -> &'static str {
        match self {
            ForceChoice::Newtonian => "newtonian",
            ForceChoice::Relativistic => "relativistic",
            ForceChoice::Mesh(s) => s.name(),
        }
    }
}

impl FromStr for ForceChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "newtonian" | "none" => Ok(ForceChoice::Newtonian),
            "relativistic" => Ok(ForceChoice::Relativistic),
            other => other.parse().map(ForceChoice::Mesh),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // orbit
    pub beta: f64,
    /// `None` keeps the eccentricity of the reference orbit.
    pub ecc: Option<f64>,
    pub theta_deg: f64,
    pub gm: f64,
    pub r_sch: f64,
    pub r_per: f64,
    pub v_per: f64,
    pub ecc_scaling: EccentricityScaling,
    // integrator
    pub method: MethodChoice,
    pub h: f64,
    pub tol: f64,
    // force
    pub force: ForceChoice,
    pub dx: f64,
    pub variant: LinearVariant,
    pub offset: Vec2,
    /// Permits fixed-step integration of lattice forces.
    pub allow_fixed_step_mesh: bool,
    // measurement
    pub revolutions: usize,
    pub window: usize,
    // sweeps
    pub methods: Vec<FixedStepMethod>,
    pub h_values: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub ecc_values: Vec<f64>,
    pub dx_values: Vec<f64>,
    pub angles: usize,
    // execution and output
    pub workers: Option<usize>,
    pub budget_s: Option<f64>,
    pub timing: bool,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub precision: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reference = ReferenceOrbit::mercury();
        Self {
            beta: 1.0,
            ecc: None,
            theta_deg: 0.0,
            gm: units::GM_SUN,
            r_sch: units::SUN_SCHWARZSCHILD_RADIUS,
            r_per: reference.r_per,
            v_per: reference.v_per,
            ecc_scaling: EccentricityScaling::default(),
            method: MethodChoice::Adaptive,
            h: DEFAULT_SWEEP_H,
            tol: MESH_TOLERANCE,
            force: ForceChoice::Newtonian,
            dx: 0.1,
            variant: LinearVariant::default(),
            offset: Vec2::ZERO,
            allow_fixed_step_mesh: false,
            revolutions: DEFAULT_REVOLUTIONS,
            window: DEFAULT_WINDOW,
            methods: FixedStepMethod::ALL.to_vec(),
            h_values: (0..10).map(|k| 0.05 / f64::powi(2.0, k)).collect(),
            beta_values: vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            ecc_values: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
            dx_values: DEFAULT_DX_VALUES.to_vec(),
            angles: DEFAULT_ANGLES,
            workers: None,
            budget_s: None,
            timing: false,
            out: None,
            format: None,
            precision: "double".into(),
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.trim()
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{v}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(",")
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    /// Every recognised key, in dump order.
    pub const KEYS: [&'static str; 31] = [
        "beta",
        "ecc",
        "theta_deg",
        "gm",
        "r_sch",
        "r_per",
        "v_per",
        "ecc_scaling",
        "method",
        "h",
        "tol",
        "force",
        "dx",
        "variant",
        "offset_x",
        "offset_y",
        "allow_fixed_step_mesh",
        "revolutions",
        "window",
        "methods",
        "h_values",
        "beta_values",
        "ecc_values",
        "dx_values",
        "angles",
        "workers",
        "budget_s",
        "timing",
        "out",
        "format",
        "precision",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "beta" => self.beta = parse_num(key, v)?,
            "ecc" => self.ecc = if v.is_empty() || v == "reference" { None } else { Some(parse_num(key, v)?) },
            "theta_deg" => self.theta_deg = parse_num(key, v)?,
            "gm" => self.gm = parse_num(key, v)?,
            "r_sch" => self.r_sch = parse_num(key, v)?,
            "r_per" => self.r_per = parse_num(key, v)?,
            "v_per" => self.v_per = parse_num(key, v)?,
            "ecc_scaling" => {
                self.ecc_scaling = match v.to_ascii_lowercase().as_str() {
                    "fixed-semi-major-axis" | "fixed-a" => EccentricityScaling::FixedSemiMajorAxis,
                    "as-printed" | "printed" => EccentricityScaling::AsPrinted,
                    other => return Err(Error::Config(format!("ecc_scaling: unknown value '{other}'"))),
                }
            }
            "method" => self.method = v.parse().map_err(config_err)?,
            "h" => self.h = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "force" => self.force = v.parse().map_err(config_err)?,
            "dx" => self.dx = parse_num(key, v)?,
            "variant" => self.variant = v.parse().map_err(config_err)?,
            "offset_x" => self.offset.x = parse_num(key, v)?,
            "offset_y" => self.offset.y = parse_num(key, v)?,
            "allow_fixed_step_mesh" => self.allow_fixed_step_mesh = parse_bool(key, v)?,
            "revolutions" => self.revolutions = parse_num(key, v)?,
            "window" => self.window = parse_num(key, v)?,
            "methods" => {
                self.methods = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(config_err))
                    .collect::<Result<_>>()?
            }
            "h_values" => self.h_values = parse_list(key, v)?,
            "beta_values" => self.beta_values = parse_list(key, v)?,
            "ecc_values" => self.ecc_values = parse_list(key, v)?,
            "dx_values" => self.dx_values = parse_list(key, v)?,
            "angles" => self.angles = parse_num(key, v)?,
            "workers" => self.workers = if v.is_empty() || v == "auto" { None } else { Some(parse_num(key, v)?) },
            "budget_s" => self.budget_s = if v.is_empty() || v == "none" { None } else { Some(parse_num(key, v)?) },
            "timing" => self.timing = parse_bool(key, v)?,
            "out" => self.out = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "format" => self.format = if v.is_empty() || v == "auto" { None } else { Some(v.parse().map_err(config_err)?) },
            "precision" => self.precision = v.to_string(),
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e.to_string().trim_start_matches("config error: "))))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key with its current value.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("beta", num(self.beta));
        put("ecc", self.ecc.map_or("reference".into(), num));
        put("theta_deg", num(self.theta_deg));
        put("gm", num(self.gm));
        put("r_sch", num(self.r_sch));
        put("r_per", num(self.r_per));
        put("v_per", num(self.v_per));
        put(
            "ecc_scaling",
            match self.ecc_scaling {
                EccentricityScaling::FixedSemiMajorAxis => "fixed-semi-major-axis",
                EccentricityScaling::AsPrinted => "as-printed",
            }
            .into(),
        );
        put("method", self.method.name().into());
        put("h", num(self.h));
        put("tol", num(self.tol));
        put("force", self.force.name().into());
        put("dx", num(self.dx));
        put("variant", self.variant.name().into());
        put("offset_x", num(self.offset.x));
        put("offset_y", num(self.offset.y));
        put("allow_fixed_step_mesh", self.allow_fixed_step_mesh.to_string());
        put("revolutions", self.revolutions.to_string());
        put("window", self.window.to_string());
        put("methods", self.methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","));
        put("h_values", join(&self.h_values));
        put("beta_values", join(&self.beta_values));
        put("ecc_values", join(&self.ecc_values));
        put("dx_values", join(&self.dx_values));
        put("angles", self.angles.to_string());
        put("workers", self.workers.map_or("auto".into(), |w| w.to_string()));
        put("budget_s", self.budget_s.map_or("none".into(), num));
        put("timing", self.timing.to_string());
        put("out", self.out.as_ref().map_or(String::new(), |p| p.display().to_string()));
        put("format", self.format.map_or("auto".into(), |f| f.to_string()));
        put("precision", self.precision.clone());
        s
    }

    pub fn orbit(&self) -> Result<OrbitSpec> {
        let reference = ReferenceOrbit {
            r_per: self.r_per,
            v_per: self.v_per,
        };
        let mut o = OrbitSpec {
            gm: self.gm,
            r_sch: self.r_sch,
            reference,
            ecc_scaling: self.ecc_scaling,
            ..OrbitSpec::mercury()
        };
        o.ecc = self.ecc.unwrap_or_else(|| reference.eccentricity(self.gm));
        let o = o.with_beta(self.beta).with_theta(self.theta_deg.to_radians());
        o.validate().map_err(config_err)?;
        Ok(o)
    }

    pub fn mesh(&self) -> MeshSpec {
        let scheme = match self.force {
            ForceChoice::Mesh(s) => s,
            _ => MeshScheme::Linear,
        };
        MeshSpec {
            dx: self.dx,
            origin_offset: self.offset,
            scheme,
            linear_variant: self.variant,
        }
    }

    pub fn force_spec(&self) -> ForceSpec {
        match self.force {
            ForceChoice::Newtonian => ForceSpec::Newtonian,
            ForceChoice::Relativistic => ForceSpec::Relativistic,
            ForceChoice::Mesh(_) => ForceSpec::Mesh(self.mesh()),
        }
    }

    pub fn integrator(&self) -> IntegratorSpec {
        match self.method {
            MethodChoice::Fixed(method) => IntegratorSpec::Fixed { method, h: self.h },
            MethodChoice::Adaptive => IntegratorSpec::Adaptive { tol: self.tol },
        }
    }

    pub fn harness(&self) -> Harness {
        Harness {
            workers: self.workers,
            budget: self.budget(),
            record_runtime: self.timing,
        }
    }

    pub fn budget(&self) -> Option<Duration> {
        self.budget_s.map(Duration::from_secs_f64)
    }

    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        self.orbit()?;
        if !matches!(self.precision.to_ascii_lowercase().as_str(), "double" | "f64") {
            return Err(Error::Config(format!(
                "precision '{}' is not supported; only 'double' is available",
                self.precision
            )));
        }
        if let ForceChoice::Mesh(_) = self.force {
            self.mesh().validate().map_err(config_err)?;
            if matches!(self.method, MethodChoice::Fixed(_)) && !self.allow_fixed_step_mesh {
                return Err(Error::Config(
                    "lattice forces need the adaptive integrator; set allow_fixed_step_mesh = true to override".into(),
                ));
            }
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.revolutions == 0 {
            return Err(Error::Config("revolutions must be at least 1".into()));
        }
        if self.angles == 0 {
            return Err(Error::Config("angles must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if let Some(b) = self.budget_s {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("budget_s must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// The single run described by this configuration.
    pub fn run_spec(&self) -> Result<RunSpec> {
        self.validate()?;
        Ok(RunSpec::new(self.orbit()?, self.integrator(), self.force_spec())
            .with_revolutions(self.revolutions)
            .with_window(self.window)
            .with_budget(self.budget()))
    }

    /// Output format, from the `format` key or the file extension.
    pub fn output_format(&self) -> OutputFormat {
        self.format
            .or_else(|| self.out.as_deref().map(OutputFormat::from_path))
            .unwrap_or_default()
    }
}

//! Parameter sweeps, their aggregate statistics and the tabular output.
//!
//! Every sweep expands into a list of [`RunSpec`]s that are measured
//! independently on a worker pool and collected in declaration order, so
//! the output does not depend on the number of workers.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::OrbitSpec;
use crate::error::{Error, Result};
use crate::fits::{fit_cosine, fit_gaussian, fit_powerlaw, CosineFit, GaussianFit, PowerLawFit};
use crate::integrators::FixedStepMethod;
use crate::mesh::{LinearVariant, MeshScheme, MeshSpec};
use crate::metrology::ShiftQuality;
use crate::simulate::{classify_detectability, predicted_advance, run, ForceSpec, IntegratorSpec, RunSpec};

/// Bilinear runs on finer lattices than this are flagged unreliable.
pub const BILINEAR_RELIABLE_DX: f64 = 1e-3;
/// Default number of orbit orientations in a θ-sweep.
pub const DEFAULT_ANGLES: usize = 180;
/// Step size used for the β- and e-sweeps.
pub const DEFAULT_SWEEP_H: f64 = 0.0002;
/// Lattice constants for dx-sweeps, Gm.
pub const DEFAULT_DX_VALUES: [f64; 6] = [1e-3, 3.16e-3, 1e-2, 3.16e-2, 1e-1, 1.0];

/// Column order of the tabular output.
pub const COLUMNS: [&str; 15] = [
    "sweep_id",
    "scheme",
    "method",
    "h",
    "tol",
    "dx",
    "theta_deg",
    "beta",
    "ecc",
    "shift_rad",
    "abs_shift_rad",
    "predicted_advance_rad",
    "detectable",
    "status",
    "runtime_s",
];

/// One measured parameter point. Empty optionals are written as empty
/// fields (CSV) or `null` (JSON lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep_id: String,
    /// `newtonian`, `relativistic`, `bilinear`, `linear` or `linear-symmetric`.
    pub scheme: String,
    pub method: String,
    pub h: Option<f64>,
    pub tol: Option<f64>,
    pub dx: Option<f64>,
    pub theta_deg: f64,
    pub beta: f64,
    pub ecc: f64,
    pub shift_rad: Option<f64>,
    pub abs_shift_rad: Option<f64>,
    pub predicted_advance_rad: Option<f64>,
    pub detectable: Option<bool>,
    /// `ok`, `near-circular`, `degenerate`, `unreliable`, `timeout` or
    /// `error: <message>`.
    pub status: String,
    /// Only filled in when timing is requested, to keep output reproducible.
    pub runtime_s: Option<f64>,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.shift_rad.is_some()
    }

    pub fn theta(&self) -> f64 {
        self.theta_deg.to_radians()
    }
}

/// `|shift| < predicted advance`, or an error when either is missing.
pub fn classify_record(record: &SweepRecord) -> Result<bool> {
    match (record.abs_shift_rad, record.predicted_advance_rad) {
        (Some(s), Some(p)) => Ok(classify_detectability(s, p)),
        _ => Err(Error::InvalidArgument(format!(
            "record '{}' lacks a shift or a prediction",
            record.sweep_id
        ))),
    }
}

/// Scheme label used in the output.
pub fn scheme_label(force: &ForceSpec) -> &'static str {
    match force {
        ForceSpec::Mesh(m) if m.scheme == MeshScheme::Linear && m.linear_variant == LinearVariant::Symmetric => {
            "linear-symmetric"
        }
        f => f.scheme_name(),
    }
}

/// Worker pool settings shared by all sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Harness {
    /// Worker threads; `None` uses the available parallelism.
    pub workers: Option<usize>,
    /// Wall-clock budget per point.
    pub budget: Option<Duration>,
    /// Fill in the `runtime_s` column.
    pub record_runtime: bool,
}

impl Harness {
    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    /// Measures every point, in order. Failures become rows with an error
    /// status; only a broken worker pool is reported as an error.
    pub fn run_points(&self, sweep_id: &str, points: &[RunSpec]) -> Result<Vec<SweepRecord>> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(Error::InvalidArgument("worker count must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let budget = self.budget;
        let timing = self.record_runtime;
        Ok(pool.install(|| {
            points
                .par_iter()
                .map(|p| measure_point(sweep_id, &p.with_budget(budget.or(p.budget)), timing))
                .collect()
        }))
    }

    /// Newtonian shift for each `(method, h)`, methods outermost.
    pub fn sweep_timestep(&self, methods: &[FixedStepMethod], h_values: &[f64], orbit: &OrbitSpec) -> Result<Vec<SweepRecord>> {
        check_positive("step size", h_values)?;
        let points: Vec<RunSpec> = methods
            .iter()
            .flat_map(|&method| {
                h_values
                    .iter()
                    .map(move |&h| RunSpec::new(*orbit, IntegratorSpec::Fixed { method, h }, ForceSpec::Newtonian))
            })
            .collect();
        self.run_points("sweep-h", &points)
    }

    /// Newtonian shift against the relativistic parameter `β = Υ/Υ₀`.
    pub fn sweep_beta(&self, beta_values: &[f64], orbit: &OrbitSpec, method: FixedStepMethod, h: f64) -> Result<Vec<SweepRecord>> {
        check_positive("beta", beta_values)?;
        check_positive("step size", &[h])?;
        let points: Vec<RunSpec> = beta_values
            .iter()
            .map(|&b| RunSpec::new(orbit.with_beta(b), IntegratorSpec::Fixed { method, h }, ForceSpec::Newtonian))
            .collect();
        self.run_points("sweep-beta", &points)
    }

    /// Newtonian shift against eccentricity.
    pub fn sweep_ecc(&self, e_values: &[f64], orbit: &OrbitSpec, method: FixedStepMethod, h: f64) -> Result<Vec<SweepRecord>> {
        if let Some(e) = e_values.iter().find(|e| !(0.0..1.0).contains(*e)) {
            return Err(Error::InvalidArgument(format!("eccentricity {e} outside [0, 1)")));
        }
        check_positive("step size", &[h])?;
        let points: Vec<RunSpec> = e_values
            .iter()
            .map(|&e| RunSpec::new(orbit.with_ecc(e), IntegratorSpec::Fixed { method, h }, ForceSpec::Newtonian))
            .collect();
        self.run_points("sweep-ecc", &points)
    }

    /// Lattice runs at `n_angles` equally spaced orientations.
    pub fn sweep_theta(&self, mesh: &MeshSpec, n_angles: usize, orbit: &OrbitSpec, tol: f64) -> Result<Vec<SweepRecord>> {
        mesh.validate()?;
        let points = theta_points(mesh, n_angles, orbit, tol)?;
        self.run_points("sweep-theta", &points)
    }

    /// θ-sweeps for each lattice constant, aggregated per `dx`.
    pub fn sweep_dx(
        &self,
        mesh: &MeshSpec,
        dx_values: &[f64],
        n_angles: usize,
        orbit: &OrbitSpec,
        tol: f64,
    ) -> Result<DxSweep> {
        check_positive("lattice constant", dx_values)?;
        let mut points = Vec::with_capacity(dx_values.len() * n_angles);
        for &dx in dx_values {
            let m = MeshSpec { dx, ..*mesh };
            m.validate()?;
            points.extend(theta_points(&m, n_angles, orbit, tol)?);
        }
        let records = self.run_points("sweep-dx", &points)?;
        Ok(aggregate_dx(mesh.scheme, dx_values, records))
    }
}

fn check_positive(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        Some(v) => Err(Error::InvalidArgument(format!("{what} must be positive, got {v}"))),
        None => Ok(()),
    }
}

/// Orientations `360° k / n` for `k = 0..n`.
pub fn angle_grid_deg(n_angles: usize) -> Vec<f64> {
    (0..n_angles).map(|k| 360.0 * k as f64 / n_angles as f64).collect()
}

fn theta_points(mesh: &MeshSpec, n_angles: usize, orbit: &OrbitSpec, tol: f64) -> Result<Vec<RunSpec>> {
    if n_angles == 0 {
        return Err(Error::InvalidArgument("need at least one angle".into()));
    }
    check_positive("tolerance", &[tol])?;
    Ok(angle_grid_deg(n_angles)
        .into_iter()
        .map(|deg| {
            RunSpec::new(
                orbit.with_theta(deg.to_radians()),
                IntegratorSpec::Adaptive { tol },
                ForceSpec::Mesh(*mesh),
            )
        })
        .collect())
}

/// Runs one point and turns the outcome into a row.
pub fn measure_point(sweep_id: &str, spec: &RunSpec, record_runtime: bool) -> SweepRecord {
    let start = std::time::Instant::now();
    let orbit = &spec.orbit;
    let mut record = SweepRecord {
        sweep_id: sweep_id.to_string(),
        scheme: scheme_label(&spec.force).to_string(),
        method: spec.integrator.method_name().to_string(),
        h: spec.integrator.h(),
        tol: spec.integrator.tol(),
        dx: spec.force.dx(),
        theta_deg: orbit.theta.to_degrees(),
        beta: orbit.beta,
        ecc: orbit.ecc,
        shift_rad: None,
        abs_shift_rad: None,
        predicted_advance_rad: predicted_advance(orbit).ok(),
        detectable: None,
        status: String::new(),
        runtime_s: None,
    };
    match run(spec) {
        Ok(out) => {
            let shift = out.measurement.shift_per_rev;
            record.shift_rad = Some(shift);
            record.abs_shift_rad = Some(shift.abs());
            record.predicted_advance_rad = Some(out.predicted_advance);
            record.detectable = Some(out.detectable());
            let unreliable = matches!(spec.force, ForceSpec::Mesh(m) if m.scheme == MeshScheme::Bilinear && m.dx <= BILINEAR_RELIABLE_DX);
            record.status = match out.measurement.quality {
                ShiftQuality::Good if unreliable => "unreliable",
                ShiftQuality::Good => "ok",
                ShiftQuality::NearCircular => "near-circular",
                ShiftQuality::Degenerate => "degenerate",
            }
            .to_string();
        }
        Err(Error::Timeout(_)) => record.status = "timeout".to_string(),
        Err(e) => record.status = format!("error: {e}"),
    }
    if record_runtime {
        record.runtime_s = Some(start.elapsed().as_secs_f64());
    }
    record
}

/// Statistics of one θ-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaSummary {
    /// Cosine fit of `shift / dx` against θ.
    pub cosine: CosineFit,
    /// Distribution of the raw shifts.
    pub gaussian: GaussianFit,
    pub n_ok: usize,
    pub n_failed: usize,
}

/// Fits the successful rows of a θ-sweep. `scale` divides the shifts
/// before the cosine fit (use `dx` for the collapsed curves).
pub fn summarize_theta(records: &[SweepRecord], scale: f64) -> Result<ThetaSummary> {
    let ok: Vec<&SweepRecord> = records.iter().filter(|r| r.is_ok()).collect();
    let thetas: Vec<f64> = ok.iter().map(|r| r.theta()).collect();
    let shifts: Vec<f64> = ok.iter().filter_map(|r| r.shift_rad).collect();
    let scaled: Vec<f64> = shifts.iter().map(|s| s / scale).collect();
    Ok(ThetaSummary {
        cosine: fit_cosine(&thetas, &scaled)?,
        gaussian: fit_gaussian(&shifts)?,
        n_ok: ok.len(),
        n_failed: records.len() - ok.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DxAggregate {
    pub dx: f64,
    /// Cosine amplitude of the shift (linear) or its standard deviation
    /// across orientations (bilinear), in radians.
    pub statistic: f64,
    pub summary: Option<ThetaSummary>,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DxSweep {
    pub scheme: MeshScheme,
    pub records: Vec<SweepRecord>,
    pub aggregates: Vec<DxAggregate>,
    /// Power law through the reliable aggregates.
    pub power_law: Option<PowerLawFit>,
}

fn aggregate_dx(scheme: MeshScheme, dx_values: &[f64], records: Vec<SweepRecord>) -> DxSweep {
    let mut aggregates = Vec::with_capacity(dx_values.len());
    for &dx in dx_values {
        let rows: Vec<SweepRecord> = records.iter().filter(|r| r.dx == Some(dx)).cloned().collect();
        let summary = summarize_theta(&rows, 1.0).ok();
        let statistic = summary.as_ref().map_or(f64::NAN, |s| match scheme {
            MeshScheme::Linear => s.cosine.amplitude,
            MeshScheme::Bilinear => s.gaussian.std,
        });
        aggregates.push(DxAggregate {
            dx,
            statistic,
            summary,
            unreliable: scheme == MeshScheme::Bilinear && dx <= BILINEAR_RELIABLE_DX,
        });
    }
    let usable: Vec<&DxAggregate> = aggregates
        .iter()
        .filter(|a| !a.unreliable && a.statistic > 0.0 && a.statistic.is_finite())
        .collect();
    let xs: Vec<f64> = usable.iter().map(|a| a.dx).collect();
    let ys: Vec<f64> = usable.iter().map(|a| a.statistic).collect();
    DxSweep {
        scheme,
        records,
        aggregates,
        power_law: fit_powerlaw(&xs, &ys).ok(),
    }
}

/// Output encoding for sweep rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

impl OutputFormat {
    /// `.jsonl` and `.ndjson` select JSON lines; anything else CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => OutputFormat::JsonLines,
            _ => OutputFormat::Csv,
        }
    }
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::JsonLines => "jsonl",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" | "json-lines" | "ndjson" => Ok(OutputFormat::JsonLines),
            other => Err(Error::InvalidArgument(format!("unknown output format '{other}'"))),
        }
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, records: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        w.write_record([
            r.sweep_id.clone(),
            r.scheme.clone(),
            r.method.clone(),
            opt_float(r.h),
            opt_float(r.tol),
            opt_float(r.dx),
            format_float(r.theta_deg),
            format_float(r.beta),
            format_float(r.ecc),
            opt_float(r.shift_rad),
            opt_float(r.abs_shift_rad),
            opt_float(r.predicted_advance_rad),
            r.detectable.map(|d| d.to_string()).unwrap_or_default(),
            r.status.clone(),
            opt_float(r.runtime_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[SweepRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Io(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_records<W: Write>(out: W, records: &[SweepRecord], format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => write_csv(out, records),
        OutputFormat::JsonLines => write_jsonl(out, records),
    }
}

/// Writes to a sibling temporary file and renames it into place, so a
/// failed write never leaves a partial `path` behind.
pub fn write_records_to_path(path: &Path, records: &[SweepRecord], format: OutputFormat) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("'{}' is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.partial", name.to_string_lossy()));
    let result = (|| {
        let file = fs::File::create(&tmp).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
        let mut w = BufWriter::new(file);
        write_records(&mut w, records, format)?;
        w.into_inner()
            .map_err(|e| Error::Io(e.to_string()))?
            .sync_all()?;
        fs::rename(&tmp, path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

/// Reads rows written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(Error::Io(format!("unexpected CSV header {header:?}")));
    }
    let parse = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|e| Error::Io(format!("bad number '{s}': {e}")))
        }
    };
    let req = |s: &str| -> Result<f64> { parse(s)?.ok_or_else(|| Error::Io("missing required number".into())) };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        out.push(SweepRecord {
            sweep_id: f(0).to_string(),
            scheme: f(1).to_string(),
            method: f(2).to_string(),
            h: parse(f(3))?,
            tol: parse(f(4))?,
            dx: parse(f(5))?,
            theta_deg: req(f(6))?,
            beta: req(f(7))?,
            ecc: req(f(8))?,
            shift_rad: parse(f(9))?,
            abs_shift_rad: parse(f(10))?,
            predicted_advance_rad: parse(f(11))?,
            detectable: match f(12) {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(Error::Io(format!("bad boolean '{other}'"))),
            },
            status: f(13).to_string(),
            runtime_s: parse(f(14))?,
        });
    }
    Ok(out)
}

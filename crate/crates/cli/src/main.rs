//! `perihelion`: single runs and parameter sweeps from the command line.
//!
//! Settings are resolved as built-in defaults, then `--config FILE`, then
//! `--set KEY=VALUE`, then the dedicated flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perihelion::config::{ForceChoice, MethodChoice};
use perihelion::harness::{measure_point, summarize_theta, write_records_to_path, SweepRecord};
use perihelion::simulate::predicted_advance;
use perihelion::{units, Error, RunConfig};

/// Environment variable naming the default output directory for sweeps.
const OUT_DIR_ENV: &str = "PERIHELION_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "perihelion", version, about = "Spurious perihelion shifts of numerically integrated orbits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Integrate one orbit and report its shift per revolution.
    Simulate,
    /// Newtonian shift against step size for each fixed-step method.
    SweepH,
    /// Newtonian shift against the relativistic parameter beta.
    SweepBeta,
    /// Newtonian shift against eccentricity.
    SweepEcc,
    /// Lattice shift against orbit orientation.
    SweepTheta,
    /// Orientation sweeps for several lattice constants.
    SweepDx,
    /// Relativistic advance per revolution of the configured orbit.
    PredictAdvance,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::SweepH => "sweep-h",
            Command::SweepBeta => "sweep-beta",
            Command::SweepEcc => "sweep-ecc",
            Command::SweepTheta => "sweep-theta",
            Command::SweepDx => "sweep-dx",
            Command::PredictAdvance => "predict-advance",
        }
    }

    fn is_sweep(self) -> bool {
        !matches!(self, Command::Simulate | Command::PredictAdvance)
    }
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Output file; `.jsonl` selects JSON lines. Required for sweeps unless
    /// PERIHELION_OUT_DIR is set.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// csv or jsonl; defaults to the extension of --out.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    workers: Option<String>,
    /// Wall-clock budget per point, seconds.
    #[arg(long, global = true, value_name = "SECONDS")]
    budget: Option<String>,
    /// Fill in the runtime_s column.
    #[arg(long, global = true)]
    timing: bool,

    #[arg(long, global = true)]
    beta: Option<String>,
    #[arg(long, global = true)]
    ecc: Option<String>,
    /// Orientation of the orbit against the lattice, degrees.
    #[arg(long, global = true, value_name = "DEG")]
    theta: Option<String>,
    /// euler, leapfrog, rk2, rk4 or adaptive.
    #[arg(long, global = true)]
    method: Option<String>,
    #[arg(long, global = true)]
    h: Option<String>,
    #[arg(long, global = true)]
    tol: Option<String>,
    /// newtonian or relativistic.
    #[arg(long, global = true)]
    force: Option<String>,
    /// Lattice scheme: linear, bilinear or none.
    #[arg(long, global = true)]
    scheme: Option<String>,
    #[arg(long, global = true)]
    dx: Option<String>,
    /// Linear scheme variant: as-printed or symmetric.
    #[arg(long, global = true)]
    variant: Option<String>,
    #[arg(long, global = true)]
    offset_x: Option<String>,
    #[arg(long, global = true)]
    offset_y: Option<String>,
    /// Allow fixed-step integration of lattice forces.
    #[arg(long, global = true)]
    allow_fixed_step_mesh: bool,
    #[arg(long, visible_alias = "revs", global = true)]
    revolutions: Option<String>,
    /// Samples per perihelion fit.
    #[arg(long, global = true)]
    window: Option<String>,
    /// Orientations per sweep.
    #[arg(long, global = true)]
    angles: Option<String>,
    /// Comma-separated fixed-step methods.
    #[arg(long, global = true)]
    methods: Option<String>,
    #[arg(long, global = true)]
    h_values: Option<String>,
    #[arg(long, global = true)]
    beta_values: Option<String>,
    #[arg(long, global = true)]
    ecc_values: Option<String>,
    #[arg(long, global = true)]
    dx_values: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Output(String),
    Run(String),
    AllFailed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Output(_) => 3,
            CliError::Run(_) => 4,
            CliError::AllFailed(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Output(m) => write!(f, "output error: {m}"),
            CliError::Run(m) => write!(f, "run failed: {m}"),
            CliError::AllFailed(m) => write!(f, "every point failed: {m}"),
        }
    }
}

fn config_error(e: Error) -> CliError {
    CliError::Config(e.to_string().trim_start_matches("config error: ").to_string())
}

fn resolve_config(opts: &Opts) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("config error: "))))?;
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v).map_err(config_error)?;
    }
    let flags: [(&str, &Option<String>); 22] = [
        ("format", &opts.format),
        ("workers", &opts.workers),
        ("budget_s", &opts.budget),
        ("beta", &opts.beta),
        ("ecc", &opts.ecc),
        ("theta_deg", &opts.theta),
        ("method", &opts.method),
        ("h", &opts.h),
        ("tol", &opts.tol),
        ("force", &opts.force),
        ("force", &opts.scheme),
        ("dx", &opts.dx),
        ("variant", &opts.variant),
        ("offset_x", &opts.offset_x),
        ("offset_y", &opts.offset_y),
        ("revolutions", &opts.revolutions),
        ("window", &opts.window),
        ("angles", &opts.angles),
        ("methods", &opts.methods),
        ("h_values", &opts.h_values),
        ("beta_values", &opts.beta_values),
        ("ecc_values", &opts.ecc_values),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(config_error)?;
        }
    }
    if let Some(v) = &opts.dx_values {
        cfg.set("dx_values", v).map_err(config_error)?;
    }
    if let Some(out) = &opts.out {
        cfg.out = Some(out.clone());
    }
    if opts.timing {
        cfg.timing = true;
    }
    if opts.allow_fixed_step_mesh {
        cfg.allow_fixed_step_mesh = true;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

/// `--out`, or `$PERIHELION_OUT_DIR/<command>.<ext>` for sweeps.
fn output_path(cfg: &RunConfig, command: Command) -> Result<Option<PathBuf>, CliError> {
    if let Some(p) = &cfg.out {
        return Ok(Some(p.clone()));
    }
    if !command.is_sweep() {
        return Ok(None);
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => {
            let ext = cfg.format.map_or("csv".to_string(), |f| f.to_string());
            Ok(Some(Path::new(&dir).join(format!("{}.{ext}", command.name()))))
        }
        _ => Err(CliError::Config(format!(
            "{} needs --out PATH (or {OUT_DIR_ENV})",
            command.name()
        ))),
    }
}

fn check_writable(path: &Path) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !dir.is_dir() {
        return Err(CliError::Output(format!("directory {} does not exist", dir.display())));
    }
    if path.is_dir() {
        return Err(CliError::Output(format!("{} is a directory", path.display())));
    }
    Ok(())
}

fn fixed_methods(cfg: &RunConfig) -> Result<Vec<perihelion::integrators::FixedStepMethod>, CliError> {
    if cfg.methods.is_empty() {
        return Err(CliError::Config("methods must name at least one fixed-step method".into()));
    }
    Ok(cfg.methods.clone())
}

fn need_mesh(cfg: &RunConfig, command: Command) -> Result<perihelion::MeshSpec, CliError> {
    match cfg.force {
        ForceChoice::Mesh(_) => Ok(cfg.mesh()),
        _ => Err(CliError::Config(format!(
            "{} needs a lattice scheme (--scheme linear|bilinear)",
            command.name()
        ))),
    }
}

fn sweep_summary(command: Command, records: &[SweepRecord]) -> String {
    let ok = records.iter().filter(|r| r.is_ok()).count();
    let detectable = records.iter().filter(|r| r.detectable == Some(true)).count();
    format!(
        "{}: {} points, {} measured, {} failed, {} with shift below the relativistic advance",
        command.name(),
        records.len(),
        ok,
        records.len() - ok,
        detectable
    )
}

fn execute(command: Command, cfg: &RunConfig) -> Result<String, CliError> {
    let out = output_path(cfg, command)?;
    if let Some(p) = &out {
        check_writable(p)?;
    }
    let harness = cfg.harness();
    let orbit = cfg.orbit().map_err(config_error)?;
    let run_err = |e: Error| CliError::Run(e.to_string());

    let (records, mut summary) = match command {
        Command::PredictAdvance => {
            let adv = predicted_advance(&orbit).map_err(run_err)?;
            let s0 = perihelion::initial_conditions(&orbit).map_err(run_err)?;
            let d = perihelion::diagnostics(&s0, orbit.gm).map_err(run_err)?;
            return Ok(format!(
                "predicted advance {adv:.6e} rad/rev = {:.6} arcsec/rev (a = {:.6} Gm, e = {:.7}, T = {:.6} Ms)",
                adv * units::ARCSEC_PER_RADIAN,
                d.semi_major_axis(orbit.gm),
                d.eccentricity(),
                d.period(orbit.gm)
            ));
        }
        Command::Simulate => {
            let spec = cfg.run_spec().map_err(config_error)?;
            let rec = measure_point("simulate", &spec, cfg.timing);
            let line = match (rec.shift_rad, rec.predicted_advance_rad) {
                (Some(s), Some(p)) => format!(
                    "shift {s:.6e} rad/rev, predicted advance {p:.6e} rad/rev, detectable {}, status {}",
                    rec.detectable.unwrap_or(false),
                    rec.status
                ),
                _ => String::new(),
            };
            if !rec.is_ok() {
                return Err(CliError::Run(rec.status.trim_start_matches("error: ").to_string()));
            }
            (vec![rec], line)
        }
        Command::SweepH => {
            let r = harness
                .sweep_timestep(&fixed_methods(cfg)?, &cfg.h_values, &orbit)
                .map_err(config_error)?;
            let s = sweep_summary(command, &r);
            (r, s)
        }
        Command::SweepBeta | Command::SweepEcc => {
            let mut r = Vec::new();
            for m in fixed_methods(cfg)? {
                r.extend(
                    if command == Command::SweepBeta {
                        harness.sweep_beta(&cfg.beta_values, &orbit, m, cfg.h)
                    } else {
                        harness.sweep_ecc(&cfg.ecc_values, &orbit, m, cfg.h)
                    }
                    .map_err(config_error)?,
                );
            }
            let s = sweep_summary(command, &r);
            (r, s)
        }
        Command::SweepTheta => {
            let mesh = need_mesh(cfg, command)?;
            let r = harness
                .sweep_theta(&mesh, cfg.angles, &orbit, cfg.tol)
                .map_err(config_error)?;
            let mut s = sweep_summary(command, &r);
            if let Ok(t) = summarize_theta(&r, mesh.dx) {
                s.push_str(&format!(
                    "; shift/dx = {:.4} cos(theta + {:.3}) + {:.3e}; mean {:.3e}, std {:.3e} rad",
                    t.cosine.amplitude, t.cosine.phase, t.cosine.offset, t.gaussian.mean, t.gaussian.std
                ));
            }
            (r, s)
        }
        Command::SweepDx => {
            let mesh = need_mesh(cfg, command)?;
            let sweep = harness
                .sweep_dx(&mesh, &cfg.dx_values, cfg.angles, &orbit, cfg.tol)
                .map_err(config_error)?;
            let mut s = sweep_summary(command, &sweep.records);
            if let Some(p) = &sweep.power_law {
                s.push_str(&format!("; statistic ~ {:.3e} dx^{:.3}", p.prefactor, p.exponent));
            }
            (sweep.records, s)
        }
    };

    if let Some(p) = &out {
        write_records_to_path(p, &records, cfg.output_format()).map_err(|e| CliError::Output(e.to_string()))?;
        summary.push_str(&format!(" -> {}", p.display()));
    }
    if command.is_sweep() && !records.is_empty() && records.iter().all(|r| !r.is_ok()) {
        let first = records[0].status.trim_start_matches("error: ").to_string();
        return Err(CliError::AllFailed(format!("{} of {} ({first})", records.len(), records.len())));
    }
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli.opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("perihelion: {e}");
            return ExitCode::from(e.code());
        }
    };
    if cli.opts.dump_config {
        print!("# perihelion {}\n{}", cli.command.name(), cfg.dump());
        return ExitCode::SUCCESS;
    }
    if let (ForceChoice::Mesh(_), MethodChoice::Fixed(_), Command::Simulate) = (cfg.force, cfg.method, cli.command) {
        eprintln!("perihelion: warning: fixed-step integration of a lattice force");
    }
    match execute(cli.command, &cfg) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("perihelion: {e}");
            ExitCode::from(e.code())
        }
    }
}

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use reflexsim_core::analysis::{compute_metrics, reflex_torque_curve};
use reflexsim_core::engine::{run_trial, SimConfig};
use reflexsim_core::fit::{fit_parameters, Bounds, FitOptions, Target};
use reflexsim_core::reflex::{ModelClass, ReflexParams};

use crate::config::{ConfigFile, ReflexSection};
use crate::error::{AppError, Result};
use crate::plot::{build_chart, PlotKind};
use crate::protocol::{baseline, run_protocol, GridGroup, ProtocolSpec, RayonEvaluator};
use crate::{io, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "reflexsim", version, about = "Simulated constant-velocity elbow stretches with stretch-reflex spasticity models")]
pub struct Cli {
    /// Worker threads for batch work (default: available cores).
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Print the canonical configuration file and exit.
    #[arg(long)]
    pub emit_default_config: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one trial and write its record.
    Run(RunArgs),
    /// Run a baseline plus a parameter grid at several velocities.
    Protocol(ProtocolArgs),
    /// Fit one model family's gain and threshold to reference curves.
    Fit(FitArgs),
    /// Render CSV outputs as an SVG chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model family; overrides the [reflex] section together with --gain and --lambda.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelClass>,
    #[arg(long, requires = "model")]
    pub gain: Option<f64>,
    #[arg(long, requires = "model")]
    pub lambda: Option<f64>,
    /// Stretch velocity, deg/s.
    #[arg(long)]
    pub velocity: Option<f64>,
    /// Trial CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the reflex torque curve (needs a baseline run).
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `table1` (153 trials) or `table1-<model>`.
    #[arg(long, conflicts_with_all = ["model", "gains", "lambdas"])]
    pub preset: Option<String>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelClass>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub gains: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub lambdas: Option<Vec<f64>>,
    /// Stretch velocities, deg/s.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub velocities: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: ModelClass,
    /// Reference curve as VELOCITY_DPS=PATH; repeat for several velocities.
    #[arg(long = "target", value_parser = parse_target, required = true)]
    pub targets: Vec<(f64, PathBuf)>,
    /// Gain search range LO,HI.
    #[arg(long, value_parser = parse_range)]
    pub gain_bounds: Option<(f64, f64)>,
    /// Threshold search range LO,HI.
    #[arg(long, value_parser = parse_range)]
    pub lambda_bounds: Option<(f64, f64)>,
    #[arg(long, default_value_t = FitOptions::default().grid_points)]
    pub grid_points: usize,
    #[arg(long, default_value_t = FitOptions::default().min_step)]
    pub min_step: f64,
    #[arg(long, default_value_t = FitOptions::default().max_simulations)]
    pub max_simulations: usize,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, value_enum)]
    pub kind: PlotKind,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Curve, trial or summary CSVs depending on --kind.
    pub inputs: Vec<PathBuf>,
}

fn parse_model(s: &str) -> std::result::Result<ModelClass, String> {
    ModelClass::parse(s).ok_or_else(|| format!("unknown model '{s}' (length, velocity, force, hybrid)"))
}

fn parse_target(s: &str) -> std::result::Result<(f64, PathBuf), String> {
    let (v, p) = s.split_once('=').ok_or("expected VELOCITY_DPS=PATH")?;
    let v: f64 = v.trim().parse().map_err(|e| format!("velocity: {e}"))?;
    Ok((v, PathBuf::from(p)))
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

fn load_config(path: &Option<PathBuf>) -> Result<ConfigFile> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

fn run_cmd(a: &RunArgs, out: &mut dyn Write) -> Result<i32> {
    let mut file = load_config(&a.config)?;
    if let Some(v) = a.velocity {
        file.profile.velocity_dps = v;
    }
    if let Some(m) = a.model {
        let g = a.gain.unwrap_or(1.0);
        let l = a.lambda.unwrap_or(0.1);
        let mut p = ReflexParams::for_model(m, g, l);
        p.drive = file.reflex.drive;
        p.delay = file.reflex.delay;
        file.reflex = ReflexSection::from(p);
    }
    let cfg = file.sim_config()?;
    let rec = run_trial(&cfg)?;
    io::write_trial(&rec, &a.out)?;
    let w = |e: std::io::Error| AppError::Io { path: "<stdout>".into(), source: e };
    writeln!(out, "wrote {} rows to {}", rec.len(), a.out.display()).map_err(w)?;
    if let Some(path) = &a.curve {
        let (_, passive) = baseline(&cfg)?;
        let curve = reflex_torque_curve(&rec, &passive)?;
        io::write_profile(&curve.profile, path)?;
        let m = compute_metrics(&curve);
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| format!("{x:.3}"));
        writeln!(
            out,
            "catch_angle_deg = {}, peak_torque_Nm = {:.4}, reflex_stiffness = {}, saturated = {}",
            opt(m.catch_angle),
            m.peak_torque,
            opt(m.reflex_stiffness),
            m.saturated
        )
        .map_err(w)?;
    }
    if let Some(d) = rec.divergence {
        writeln!(out, "diverged at t = {:.4} s", d.t).map_err(w)?;
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn protocol_spec(a: &ProtocolArgs, file: &ConfigFile) -> Result<ProtocolSpec> {
    let p = &file.protocol;
    let mut spec = match &a.preset {
        Some(name) => ProtocolSpec::preset(name).ok_or_else(|| AppError::Usage(format!("unknown preset '{name}'")))?,
        None => {
            let model = match a.model {
                Some(m) => m,
                None => ModelClass::parse(&p.model).ok_or_else(|| AppError::Usage(format!("unknown model '{}'", p.model)))?,
            };
            ProtocolSpec {
                groups: vec![GridGroup {
                    model,
                    gains: a.gains.clone().unwrap_or_else(|| p.gains.clone()),
                    lambdas: a.lambdas.clone().unwrap_or_else(|| p.lambdas.clone()),
                }],
                velocities_dps: p.velocities_dps.clone(),
            }
        }
    };
    if let Some(v) = &a.velocities {
        spec.velocities_dps = v.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn protocol_cmd(a: &ProtocolArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(&a.config)?;
    let spec = protocol_spec(a, &file)?;
    let base = file.sim_config()?;
    let res = run_protocol(&spec, &base, &a.out)?;
    let diverged = res.summary.iter().filter(|r| r.metrics.diverged).count();
    writeln!(
        out,
        "{} trials, {diverged} diverged; summary in {}",
        res.summary.len(),
        res.summary_path.display()
    )
    .map_err(|e| AppError::Io { path: "<stdout>".into(), source: e })?;
    Ok(EXIT_OK)
}

fn fit_cmd(a: &FitArgs, out: &mut dyn Write) -> Result<i32> {
    let file = load_config(&a.config)?;
    let base: SimConfig = file.sim_config()?.with_reflex(ReflexParams::default());
    let mut targets = Vec::new();
    for (v, p) in &a.targets {
        if !(*v > 0.0 && *v <= 180.0) {
            return Err(AppError::Usage(format!("target velocity {v} deg/s outside (0, 180]")));
        }
        targets.push(Target { omega: v.to_radians(), curve: io::read_profile(p)? });
    }
    let d = Bounds::default();
    let bounds = Bounds {
        gain: a.gain_bounds.unwrap_or(d.gain),
        lambda: a.lambda_bounds.unwrap_or(d.lambda),
    };
    let opts = FitOptions {
        grid_points: a.grid_points,
        min_step: a.min_step,
        max_simulations: a.max_simulations,
    };
    let (_, passive) = baseline(&base)?;
    let fit = fit_parameters(&base, &passive, &targets, a.model, &bounds, &opts, &RayonEvaluator)?;
    let mut params = fit.params;
    params.drive = file.reflex.drive;
    params.delay = file.reflex.delay;
    #[derive(serde::Serialize)]
    struct Report {
        reflex: ReflexSection,
    }
    let text = toml::to_string(&Report { reflex: ReflexSection::from(params) }).expect("serialise fit");
    let w = |e: std::io::Error| AppError::Io { path: "<stdout>".into(), source: e };
    writeln!(
        out,
        "# model = {}, G = {}, lambda = {}, objective_Nm = {}, simulations = {}",
        a.model.name(),
        fit.gain,
        fit.lambda,
        fit.objective,
        fit.simulations
    )
    .map_err(w)?;
    write!(out, "{text}").map_err(w)?;
    Ok(EXIT_OK)
}

fn plot_cmd(a: &PlotArgs, out: &mut dyn Write) -> Result<i32> {
    let chart = build_chart(a.kind, &a.inputs)?;
    let svg = chart.to_svg()?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| AppError::Io { path: dir.into(), source: e })?;
    }
    std::fs::write(&a.out, svg).map_err(|e| AppError::Io { path: a.out.clone(), source: e })?;
    writeln!(out, "wrote {} ({} series)", a.out.display(), chart.series.len())
        .map_err(|e| AppError::Io { path: "<stdout>".into(), source: e })?;
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    if cli.emit_default_config {
        write!(out, "{}", ConfigFile::default_text()).map_err(|e| AppError::Io { path: "<stdout>".into(), source: e })?;
        return Ok(EXIT_OK);
    }
    let Some(cmd) = &cli.command else {
        return Err(AppError::Usage("no subcommand given (run, protocol, fit, plot)".into()));
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(AppError::Usage("--threads must be >= 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| AppError::Usage(e.to_string()))?;
    let mut buf: Vec<u8> = Vec::new();
    let code = pool.install(|| match cmd {
        Command::Run(a) => run_cmd(a, &mut buf),
        Command::Protocol(a) => protocol_cmd(a, &mut buf),
        Command::Fit(a) => fit_cmd(a, &mut buf),
        Command::Plot(a) => plot_cmd(a, &mut buf),
    });
    out.write_all(&buf).map_err(|e| AppError::Io { path: "<stdout>".into(), source: e })?;
    code
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Diagnostics go to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

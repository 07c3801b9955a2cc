//! Command line front end.
//!
//! Every command accepts its parameters either as flags or, through `run`, as
//! the `parameters` object of a JSON config. Config keys are the flag names;
//! pairs and lists are given as JSON arrays.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::clock::{
    self, default_omega_grid, dwell_probe_state, two_j_from, ClockExperiment, Postselector, SpinState,
};
use crate::ctime::{self, two_path_time, two_path_time_exact, MomentumDistribution, Selection, WavepacketTimes};
use crate::error::{Error, ErrorCategory, Result};
use crate::evolve::{Propagator, Wavefunction};
use crate::experiments::{self, Fidelity, CATALOG};
use crate::io::{fmt_f64, fmt_short};
use crate::ionise::{Ionisation, IonisationModel};
use crate::model::{PotentialSpec, Region, SpatialGrid};
use crate::scatter;
use crate::taudist::{self, conditioned_amplitude, stationary_amplitude, Channel, Window};

#[derive(Debug, Parser)]
#[command(name = "tunneltime", version, about = "Quantum traversal times: complex times, clocks and amplitude distributions")]
pub struct Cli {
    /// Output file for the main artifact; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Caps the number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomised experiments.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Coarse grids, for quick end-to-end runs.
    #[arg(long, global = true)]
    pub smoke: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transmission and reflection amplitudes.
    Scatter(ScatterArgs),
    /// Complex tunnelling, reflection and dwell times.
    Ctime(CtimeArgs),
    /// Amplitude distribution of the time spent in the region.
    Taudist(TaudistArgs),
    /// Simulated Salecker-Wigner-Peres clock.
    Clock(ClockArgs),
    /// Stopwatch, operator and clock dwell times.
    Dwell(DwellArgs),
    /// Tunnel ionisation toy model.
    Ionise(IoniseArgs),
    /// Clock reading for two interfering paths.
    TwoPath(TwoPathArgs),
    /// Lists the named experiments.
    Presets,
    /// Runs a named experiment with its pass/fail checks.
    Preset { name: String },
    /// Runs a JSON experiment config.
    Run { config: PathBuf },
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"))).collect()
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected two comma-separated numbers, got {s:?}")),
    }
}

fn parse_triple(s: &str) -> std::result::Result<(f64, f64, f64), String> {
    match parse_list(s)?.as_slice() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(format!("expected three comma-separated numbers, got {s:?}")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct PotentialArgs {
    /// Rectangular barrier `V0,d` on [0, d].
    #[arg(long, value_parser = parse_pair, conflicts_with_all = ["step", "potential"])]
    pub barrier: Option<(f64, f64)>,
    /// Step of height V0 at x = 0.
    #[arg(long, conflicts_with = "potential")]
    pub step: Option<f64>,
    /// JSON potential file (`segments`, optional `schedule`).
    #[arg(long)]
    pub potential: Option<PathBuf>,
    /// Region of interest `a,b`; defaults to the barrier, the step's interior or the potential's support.
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    pub region: Option<(f64, f64)>,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
}

impl PotentialArgs {
    fn build(&self) -> Result<(PotentialSpec, Region)> {
        let (v, default) = if let Some((v0, d)) = self.barrier {
            (PotentialSpec::barrier(v0, d)?, Region::new(0.0, d)?)
        } else if let Some(v0) = self.step {
            (PotentialSpec::step(v0)?, Region::new(0.0, f64::INFINITY)?)
        } else if let Some(path) = &self.potential {
            let v: PotentialSpec = serde_json::from_str(&read(path)?)?;
            v.validate()?;
            let region = match (v.segments.first(), v.segments.last()) {
                (Some(a), Some(b)) => Region::new(a.x_lo, b.x_hi)?,
                _ => Region::new(0.0, 1.0)?,
            };
            (v, region)
        } else {
            return Err(Error::InvalidInput("give one of --barrier, --step or --potential".into()));
        };
        let region = match self.region {
            Some((a, b)) => Region::new(a, b)?,
            None => default,
        };
        Ok((v, region))
    }
}

#[derive(Debug, Clone, Args)]
pub struct PacketArgs {
    /// Gaussian packet `x0,p0,sigma_x`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "-15,2,2.5")]
    pub packet: (f64, f64, f64),
    /// Grid `x_min,x_max,n_points`.
    #[arg(long, value_parser = parse_triple, allow_hyphen_values = true, default_value = "-64,64,2048")]
    pub grid: (f64, f64, f64),
    /// Duration t2 − t1.
    #[arg(long = "T", default_value_t = 18.0)]
    pub duration: f64,
    /// Time step; 0.2·μ·dx² when absent.
    #[arg(long)]
    pub dt: Option<f64>,
}

impl PacketArgs {
    fn build(&self, v: &PotentialSpec, region: &Region, mass: f64) -> Result<(Propagator, Wavefunction)> {
        let (x_min, x_max, n) = self.grid;
        if n.fract() != 0.0 || n < 0.0 {
            return Err(Error::InvalidInput(format!("grid size must be an integer, got {n}")));
        }
        let grid = SpatialGrid::new(x_min, x_max, n as usize)?;
        let (x0, p0, sx) = self.packet;
        let psi = Wavefunction::gaussian(grid, x0, p0, sx)?;
        let prop = match self.dt {
            Some(dt) => Propagator::with_dt(grid, v, region, 0.0, self.duration, mass, dt)?,
            None => Propagator::new(grid, v, region, 0.0, self.duration, mass)?,
        };
        Ok((prop, psi))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ScatterArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    /// Momenta, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub lambda: f64,
}

#[derive(Debug, Clone, Args)]
pub struct CtimeArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    /// Momenta, comma separated.
    #[arg(long, value_delimiter = ',', required_unless_present = "momentum_packet", allow_hyphen_values = true)]
    pub p: Option<Vec<f64>>,
    /// Gaussian momentum distribution `p0,sigma_p`: wavepacket SWP and dwell times instead.
    #[arg(long, value_parser = parse_pair)]
    pub momentum_packet: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Transmitted,
    Reflected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    Hann,
    None,
}

#[derive(Debug, Clone, Args)]
pub struct TaudistArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Stationary momentum; uses T(p,λ) or R(p,λ) instead of a propagated packet.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, value_enum, default_value_t = ChannelArg::Transmitted)]
    pub channel: ChannelArg,
    #[arg(long)]
    pub lambda_max: Option<f64>,
    #[arg(long, default_value_t = taudist::DEFAULT_N_LAMBDA)]
    pub n_lambda: usize,
    #[arg(long, value_enum, default_value_t = WindowArg::Hann)]
    pub window: WindowArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClockPreset {
    /// Whole-grid field on a free packet; the reading calibrates to t2 − t1.
    FreeRunning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectArg {
    All,
    Transmitted,
    Reflected,
}

#[derive(Debug, Clone, Args)]
pub struct ClockArgs {
    #[arg(long, value_enum)]
    pub preset: Option<ClockPreset>,
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Clock spin j (integer or half-integer).
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
    #[arg(long, value_enum, default_value_t = SelectArg::All)]
    pub select: SelectArg,
    /// Number of ω_L values (ratio 2).
    #[arg(long, default_value_t = 3)]
    pub n_omega: usize,
    /// Modified clock: pointer starts at β^j, times measured from it.
    #[arg(long)]
    pub modified: bool,
    /// JSON clock experiment file; replaces the potential, packet and clock flags.
    #[arg(long, conflicts_with = "preset")]
    pub experiment: Option<PathBuf>,
}

/// Self-contained clock experiment, as read by `clock --experiment`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockFile {
    pub potential: PotentialSpec,
    pub omega_region: (f64, f64),
    pub clock: ClockFileSpin,
    /// ω_L values; the default geometric grid when absent.
    #[serde(default)]
    pub omega_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub postselect: Option<PostselectSpec>,
    /// `[t1, t2]`.
    pub times: (f64, f64),
    /// Gaussian `[x0, p0, sigma_x]`.
    pub packet: (f64, f64, f64),
    pub grid: SpatialGrid,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "unit_mass")]
    pub mass: f64,
}

fn unit_mass() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockFileSpin {
    pub j: f64,
    #[serde(default)]
    pub gamma: Option<GammaSpec>,
}

/// `"beta0"`, `"betaj"` or explicit `[re, im]` amplitudes ordered m = j … −j.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Named(String),
    Amplitudes(Vec<(f64, f64)>),
}

/// `"all"`, `"transmitted"`, `"reflected"` or a full selector object.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum PostselectSpec {
    Named(String),
    Selector(Postselector),
}

#[derive(Debug, Clone, Args)]
pub struct DwellArgs {
    #[command(flatten)]
    pub potential: PotentialArgs,
    #[command(flatten)]
    pub packet: PacketArgs,
    /// Also run the spin-j clock dwell probe.
    #[arg(long)]
    pub probe: bool,
    #[arg(long, default_value_t = 1.0)]
    pub j: f64,
}

#[derive(Debug, Clone, Args)]
pub struct IoniseArgs {
    /// JSON model file; the default fixture when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Peak barrier lowering.
    #[arg(long = "F")]
    pub f: Option<f64>,
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long)]
    pub pulse_off: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TwoPathArgs {
    #[arg(long = "A1", allow_hyphen_values = true)]
    pub a1: String,
    #[arg(long = "tau1", allow_hyphen_values = true)]
    pub tau1: String,
    #[arg(long = "A2", allow_hyphen_values = true)]
    pub a2: String,
    #[arg(long = "tau2", allow_hyphen_values = true)]
    pub tau2: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: String,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

const CONFIG_COMMANDS: [&str; 7] = ["scatter", "ctime", "taudist", "clock", "dwell", "ionise", "two-path"];

/// Turns a config into the equivalent argument vector.
pub fn config_to_args(cfg: &ExperimentConfig) -> Result<Vec<String>> {
    if !CONFIG_COMMANDS.contains(&cfg.command.as_str()) {
        return Err(Error::InvalidInput(format!(
            "unknown command {:?}; expected one of {}",
            cfg.command,
            CONFIG_COMMANDS.join(", ")
        )));
    }
    let mut args = vec!["tunneltime".to_string(), cfg.command.clone()];
    for (k, v) in &cfg.parameters {
        let flag = format!("--{k}");
        match v {
            Value::Bool(true) => args.push(flag),
            Value::Bool(false) => {}
            Value::Number(n) => args.extend([flag, n.to_string()]),
            Value::String(s) => args.extend([flag, s.clone()]),
            Value::Array(items) => {
                let parts: Vec<String> = items
                    .iter()
                    .map(|i| match i {
                        Value::Number(n) => Ok(n.to_string()),
                        _ => Err(Error::InvalidInput(format!("parameter {k:?}: arrays must hold numbers"))),
                    })
                    .collect::<Result<_>>()?;
                args.extend([flag, parts.join(",")]);
            }
            _ => return Err(Error::InvalidInput(format!("parameter {k:?} has an unsupported type"))),
        }
    }
    if let Some(out) = &cfg.output {
        if let Some(p) = &out.path {
            args.extend(["--out".into(), p.display().to_string()]);
        }
        if let Some(f) = out.format {
            args.extend(["--format".into(), if f == Format::Csv { "csv" } else { "json" }.into()]);
        }
    }
    if let Some(seed) = cfg.seed {
        args.extend(["--seed".into(), seed.to_string()]);
    }
    Ok(args)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

/// What a command produced: the artifact body and a one-line summary.
pub struct Report {
    pub artifact: Vec<u8>,
    pub summary: String,
    /// Extra files written next to the artifact, as `(suffix, body)`.
    pub extras: Vec<(String, Vec<u8>)>,
    pub passed: bool,
}

impl Report {
    fn new(artifact: Vec<u8>, summary: String) -> Self {
        Report { artifact, summary, extras: Vec::new(), passed: true }
    }
}

fn json_bytes(v: &Value) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)?;
    s.push(b'\n');
    Ok(s)
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn fidelity(smoke: bool) -> Fidelity {
    if smoke {
        Fidelity::Smoke
    } else {
        Fidelity::Full
    }
}

pub fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Scatter(a) => scatter_cmd(a, cli.format),
        Command::Ctime(a) => ctime_cmd(a, cli.format),
        Command::Taudist(a) => taudist_cmd(a, cli.format),
        Command::Clock(a) => clock_cmd(a, cli.format),
        Command::Dwell(a) => dwell_cmd(a, cli.format),
        Command::Ionise(a) => ionise_cmd(a, cli.format, cli.smoke),
        Command::TwoPath(a) => two_path_cmd(a, cli.format),
        Command::Presets => presets_cmd(cli.format),
        Command::Preset { name } => preset_cmd(name, cli.smoke, cli.seed),
        Command::Run { .. } => Err(Error::InvalidInput("nested run".into())),
    }
}

fn scatter_cmd(a: &ScatterArgs, format: Format) -> Result<Report> {
    let (v, region) = a.potential.build()?;
    let points: Vec<(f64, f64)> = a.p.iter().map(|&p| (p, a.lambda)).collect();
    let rows = scatter::sweep(&v, &region, &points, a.potential.mass)?;
    let worst = rows.iter().map(|r| r.unitarity_defect().abs()).fold(0.0, f64::max);
    let artifact = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            scatter::write_csv(&mut buf, &rows)?;
            buf
        }
        Format::Json => json_bytes(&Value::Array(
            rows.iter()
                .map(|r| json!({ "p": r.p, "lambda": r.lambda, "T": complex_json(r.t), "R": complex_json(r.r),
                                  "unitarity_defect": r.unitarity_defect() }))
                .collect(),
        ))?,
    };
    Ok(Report::new(artifact, format!("{} momenta, max unitarity defect {worst:.3e}", rows.len())))
}

fn ctime_cmd(a: &CtimeArgs, format: Format) -> Result<Report> {
    let (v, region) = a.potential.build()?;
    let mass = a.potential.mass;
    if let Some((p0, sp)) = a.momentum_packet {
        let wp = WavepacketTimes::compute(&MomentumDistribution::gaussian(p0, sp)?, &v, &region, mass)?;
        let get = |s| wp.swp(s).ok();
        let body = json!({
            "W_tunn": wp.w_tunn, "W_refl": wp.w_refl, "tau_dwell": wp.dwell,
            "T_swp_tunn": get(Selection::Tunn), "T_swp_refl": get(Selection::Refl), "T_swp_all": get(Selection::All),
            "T_mod_tunn": wp.modified_swp(Selection::Tunn).ok(), "T_mod_all": wp.modified_swp(Selection::All).ok(),
        });
        let artifact = match format {
            Format::Json => json_bytes(&body)?,
            Format::Csv => {
                let f = |x: Option<f64>| fmt_f64(x.unwrap_or(f64::NAN));
                format!(
                    "W_tunn,W_refl,tau_dwell,T_swp_tunn,T_swp_refl,T_swp_all\n{},{},{},{},{},{}\n",
                    fmt_f64(wp.w_tunn),
                    fmt_f64(wp.w_refl),
                    fmt_f64(wp.dwell),
                    f(get(Selection::Tunn)),
                    f(get(Selection::Refl)),
                    f(get(Selection::All))
                )
                .into_bytes()
            }
        };
        let summary = format!("T_SWP(all) = {}, dwell = {}", fmt_short(wp.swp(Selection::All)?), fmt_short(wp.dwell));
        return Ok(Report::new(artifact, summary));
    }
    let ps = a.p.clone().unwrap_or_default();
    let rows: Vec<ctime::TimeRow> = ps.iter().map(|&p| ctime::time_row(&v, &region, p, mass)).collect::<Result<_>>()?;
    let artifact = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            ctime::write_csv(&mut buf, &rows)?;
            buf
        }
        Format::Json => json_bytes(&serde_json::to_value(&rows)?)?,
    };
    let r = &rows[0];
    let summary = match r.tau_tunn {
        Some(t) => format!("p = {}: tau_tunn = {} + {}i, dwell = {}", r.p, fmt_short(t.re), fmt_short(t.im), fmt_short(r.tau_dwell)),
        None => format!("p = {}: transmission closed, dwell = {}", r.p, fmt_short(r.tau_dwell)),
    };
    Ok(Report::new(artifact, summary))
}

/// Smooth projector onto the transmitted or reflected side of the region.
fn channel_state(mut w: Wavefunction, region: &Region, channel: ChannelArg) -> Wavefunction {
    for (v, x) in w.values.iter_mut().zip(w.grid.xs()) {
        let s = match channel {
            ChannelArg::Transmitted => (x - region.b - 2.0) / 1.5,
            ChannelArg::Reflected => (region.a - 2.0 - x) / 1.5,
        };
        *v *= 0.5 * (1.0 + s.tanh());
    }
    w
}

fn taudist_cmd(a: &TaudistArgs, format: Format) -> Result<Report> {
    let (v, region) = a.potential.build()?;
    let window = match a.window {
        WindowArg::Hann => Window::Hann,
        WindowArg::None => Window::None,
    };
    let dist = if let Some(p) = a.p {
        let channel = match a.channel {
            ChannelArg::Transmitted => Channel::Transmitted,
            ChannelArg::Reflected => Channel::Reflected,
        };
        let scale = if region.width().is_finite() {
            a.potential.mass * region.width() / p
        } else {
            ctime::time_row(&v, &region, p, a.potential.mass)?.tau_dwell
        };
        let lambda_max = a.lambda_max.unwrap_or_else(|| taudist::default_lambda_max(scale));
        stationary_amplitude(&v, &region, p, a.potential.mass, channel, lambda_max, a.n_lambda, window)?
    } else {
        let (prop, psi) = a.packet.build(&v, &region, a.potential.mass)?;
        let fin = prop.propagate(&psi, 0.0)?;
        let psi_f = channel_state(fin, &region, a.channel);
        conditioned_amplitude(&prop, &psi, &psi_f, a.lambda_max, a.n_lambda, window)?
    };
    let artifact = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            dist.write_csv(&mut buf)?;
            buf
        }
        Format::Json => json_bytes(&dist.metadata_json())?,
    };
    let m1 = dist.moment(1)?;
    let mut report = Report::new(artifact, format!("first moment {} + {}i", fmt_short(m1.re), fmt_short(m1.im)));
    if format == Format::Csv {
        report.extras.push((".meta.json".into(), json_bytes(&dist.metadata_json())?));
    }
    Ok(report)
}

fn clock_file_cmd(path: &Path, format: Format) -> Result<Report> {
    let f: ClockFile = serde_json::from_str(&read(path)?)?;
    f.potential.validate()?;
    let region = Region::new(f.omega_region.0, f.omega_region.1)?;
    let grid = SpatialGrid::new(f.grid.x_min, f.grid.x_max, f.grid.n_points)?;
    let psi = Wavefunction::gaussian(grid, f.packet.0, f.packet.1, f.packet.2)?;
    let (t1, t2) = f.times;
    let prop = match f.dt {
        Some(dt) => Propagator::with_dt(grid, &f.potential, &region, t1, t2, f.mass, dt)?,
        None => Propagator::new(grid, &f.potential, &region, t1, t2, f.mass)?,
    };
    let two_j = two_j_from(f.clock.j)?;
    let (gamma, modified) = match &f.clock.gamma {
        None => (SpinState::rotated(two_j, 0.0)?, false),
        Some(GammaSpec::Named(n)) if n == "beta0" => (SpinState::rotated(two_j, 0.0)?, false),
        Some(GammaSpec::Named(n)) if n == "betaj" => (modified_pointer(two_j)?, true),
        Some(GammaSpec::Named(n)) => {
            return Err(Error::InvalidInput(format!("gamma must be \"beta0\", \"betaj\" or amplitudes, got {n:?}")))
        }
        Some(GammaSpec::Amplitudes(a)) => {
            (SpinState::normalized(two_j, a.iter().map(|&(re, im)| Complex64::new(re, im)).collect())?, false)
        }
    };
    let sel = match f.postselect {
        None => Postselector::All,
        Some(PostselectSpec::Named(n)) => match n.as_str() {
            "all" => Postselector::All,
            "transmitted" => Postselector::transmitted_beyond(&region, 3.0),
            "reflected" => Postselector::reflected_before(&region, 3.0),
            other => return Err(Error::InvalidInput(format!("unknown post-selection {other:?}"))),
        },
        Some(PostselectSpec::Selector(s)) => s,
    };
    let omegas = f.omega_grid.clone().unwrap_or_else(|| default_omega_grid(two_j, t2 - t1, 3));
    let exp = ClockExperiment::new(prop, psi, gamma, sel)?;
    clock_report(&exp, &omegas, f.clock.j, modified, format)
}

fn clock_cmd(a: &ClockArgs, format: Format) -> Result<Report> {
    if let Some(path) = &a.experiment {
        return clock_file_cmd(path, format);
    }
    let two_j = two_j_from(a.j)?;
    let (exp, duration) = if a.preset == Some(ClockPreset::FreeRunning) {
        let grid = SpatialGrid::new(-20.0, 20.0, 256)?;
        let psi = Wavefunction::gaussian(grid, 0.0, 0.0, 2.0)?;
        let prop =
            Propagator::with_dt(grid, &PotentialSpec::zero(), &Region::whole(&grid), 0.0, a.packet.duration, 1.0, 0.01)?;
        let gamma = if a.modified { modified_pointer(two_j)? } else { SpinState::rotated(two_j, 0.0)? };
        (ClockExperiment::new(prop, psi, gamma, Postselector::All)?, a.packet.duration)
    } else {
        let (v, region) = a.potential.build()?;
        let (prop, psi) = a.packet.build(&v, &region, a.potential.mass)?;
        let sel = match a.select {
            SelectArg::All => Postselector::All,
            SelectArg::Transmitted => Postselector::transmitted_beyond(&region, 3.0),
            SelectArg::Reflected => Postselector::reflected_before(&region, 3.0),
        };
        let gamma = if a.modified { modified_pointer(two_j)? } else { SpinState::rotated(two_j, 0.0)? };
        (ClockExperiment::new(prop, psi, gamma, sel)?, a.packet.duration)
    };
    let omegas = default_omega_grid(two_j, duration, a.n_omega);
    clock_report(&exp, &omegas, a.j, a.modified, format)
}

fn clock_report(exp: &ClockExperiment, omegas: &[f64], j: f64, modified: bool, format: Format) -> Result<Report> {
    let wl = if modified { exp.modified_weak_limit(omegas)? } else { exp.weak_limit(omegas)? };
    let readouts: Vec<clock::Readout> = omegas.iter().map(|&w| exp.readout(w)).collect::<Result<_>>()?;
    let label = if modified { "T'_SWP" } else { "T_SWP" };
    let body = json!({ "j": j, "modified": modified, label: wl.value, "err_est": wl.err_est,
                       "slope": wl.slope, "samples": wl.samples });
    let artifact = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            clock::write_csv(&mut buf, &readouts)?;
            buf
        }
        Format::Json => json_bytes(&body)?,
    };
    Ok(Report::new(artifact, format!("{label} = {} ± {:.1e}", fmt_short(wl.value), wl.err_est)))
}

/// `β^j` for integer j.
fn modified_pointer(two_j: u32) -> Result<SpinState> {
    if !two_j.is_multiple_of(2) {
        return Err(Error::InvalidInput("the modified clock needs integer j".into()));
    }
    let n = (two_j + 1) as f64;
    SpinState::rotated(two_j, 2.0 * std::f64::consts::PI * (two_j / 2) as f64 / n)
}

fn dwell_cmd(a: &DwellArgs, format: Format) -> Result<Report> {
    let (v, region) = a.potential.build()?;
    let (prop, psi) = a.packet.build(&v, &region, a.potential.mass)?;
    let stopwatch = prop.dwell_time_stopwatch(&psi)?;
    let operator = prop.dwell_time_operator(&psi)?;
    let swp_all = prop.swp_all_operator_form(&psi)?;
    let probe = if a.probe {
        let two_j = two_j_from(a.j)?;
        let exp = ClockExperiment::new(prop.clone(), psi.clone(), dwell_probe_state(two_j)?, Postselector::All)?;
        Some(exp.dwell_probe(&default_omega_grid(two_j, a.packet.duration, 3))?.value)
    } else {
        None
    };
    let artifact = match format {
        Format::Json => json_bytes(&json!({ "stopwatch": stopwatch, "operator": operator, "swp_all": swp_all, "clock_probe": probe }))?,
        Format::Csv => format!(
            "stopwatch,operator,swp_all,clock_probe\n{},{},{},{}\n",
            fmt_f64(stopwatch),
            fmt_f64(operator),
            fmt_f64(swp_all),
            fmt_f64(probe.unwrap_or(f64::NAN))
        )
        .into_bytes(),
    };
    Ok(Report::new(artifact, format!("dwell = {} (operator {})", fmt_short(stopwatch), fmt_short(operator))))
}

fn ionise_cmd(a: &IoniseArgs, format: Format, smoke: bool) -> Result<Report> {
    let mut m = match &a.model {
        Some(path) => serde_json::from_str::<IonisationModel>(&read(path)?)?,
        None => experiments::ionise_model(fidelity(smoke)),
    };
    if let Some(f) = a.f {
        m.f = f;
    }
    if let Some(t2) = a.t2 {
        m.t2 = t2;
    }
    if let Some(p) = a.pulse_off {
        m.pulse_off = p;
    }
    let ion = Ionisation::new(m)?;
    let times = ion.times(None)?;
    let summary_json = times.summary_json();
    let summary = format!(
        "W_ion = {}, T_bound = {}, T_all = {}, dwell = {}",
        fmt_short(times.w_ion),
        fmt_short(times.t_bound),
        fmt_short(times.t_all),
        fmt_short(times.tau_dwell)
    );
    let mut report = match format {
        Format::Json => Report::new(json_bytes(&summary_json)?, summary),
        Format::Csv => {
            let mut buf = Vec::new();
            times.result.write_csv(&mut buf)?;
            let mut r = Report::new(buf, summary);
            r.extras.push((".summary.json".into(), json_bytes(&summary_json)?));
            r
        }
    };
    report.passed = true;
    Ok(report)
}

fn two_path_cmd(a: &TwoPathArgs, format: Format) -> Result<Report> {
    let value = match two_path_time_exact(&a.a1, &a.tau1, &a.a2, &a.tau2) {
        Ok((n, d)) => n as f64 / d as f64,
        Err(Error::InvalidInput(_)) => {
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| Error::InvalidInput(format!("not a number: {s:?}")));
            two_path_time(parse(&a.a1)?.into(), parse(&a.tau1)?, parse(&a.a2)?.into(), parse(&a.tau2)?)?
        }
        Err(e) => return Err(e),
    };
    let artifact = match format {
        Format::Csv => format!("A1,tau1,A2,tau2,T\n{},{},{},{},{}\n", a.a1, a.tau1, a.a2, a.tau2, fmt_f64(value)).into_bytes(),
        Format::Json => json_bytes(&json!({ "T": value }))?,
    };
    Ok(Report::new(artifact, format!("{value:?}")))
}

fn presets_cmd(format: Format) -> Result<Report> {
    let mut entries: Vec<(String, String)> = CATALOG.iter().map(|c| (c.1.to_string(), c.2.to_string())).collect();
    entries.push(("clock --preset free-running".into(), "whole-grid clock on a free packet".into()));
    let artifact = match format {
        Format::Csv => {
            let mut s = String::from("name,description\n");
            for (n, d) in &entries {
                s.push_str(&format!("{n},\"{d}\"\n"));
            }
            s.into_bytes()
        }
        Format::Json => json_bytes(&Value::Array(
            entries.iter().map(|(n, d)| json!({ "name": n, "description": d })).collect(),
        ))?,
    };
    Ok(Report::new(artifact, format!("{} presets", entries.len())))
}

fn preset_cmd(name: &str, smoke: bool, seed: u64) -> Result<Report> {
    let id = experiments::preset_id(name).ok_or_else(|| {
        let names: Vec<&str> = CATALOG.iter().map(|c| c.1).collect();
        Error::InvalidInput(format!("unknown preset {name:?}; available: {}", names.join(", ")))
    })?;
    let outcome = experiments::run(id, fidelity(smoke), seed)?;
    let mut r = Report::new(json_bytes(&serde_json::to_value(&outcome)?)?, outcome.summary());
    r.passed = outcome.passed;
    Ok(r)
}

fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Schema => 2,
        ErrorCategory::Numerical => 3,
        ErrorCategory::PostSelection => 4,
    }
}

fn category_name(e: &Error) -> &'static str {
    match e.category() {
        ErrorCategory::Schema => "schema",
        ErrorCategory::Numerical => "numerical",
        ErrorCategory::PostSelection => "post-selection",
    }
}

fn write_outputs(cli: &Cli, report: &Report, stdout: &mut dyn Write) -> Result<()> {
    match &cli.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, &report.artifact)?;
            for (suffix, body) in &report.extras {
                let mut p = path.clone().into_os_string();
                p.push(suffix);
                fs::write(PathBuf::from(p), body)?;
            }
            writeln!(stdout, "{}", report.summary)?;
        }
        None => {
            stdout.write_all(&report.artifact)?;
            writeln!(stdout, "# {}", report.summary)?;
        }
    }
    Ok(())
}

/// Parses, runs and reports; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let mut cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    if let Command::Run { config } = &cli.command {
        let parsed = read(config)
            .and_then(|s| serde_json::from_str::<ExperimentConfig>(&s).map_err(Error::from))
            .and_then(|c| config_to_args(&c));
        let args = match parsed {
            Ok(a) => a,
            Err(e) => {
                let _ = writeln!(stderr, "error [schema]: {e}");
                return 2;
            }
        };
        let base = cli;
        cli = match Cli::try_parse_from(&args) {
            Ok(mut c) => {
                // flags on the outer command line take precedence
                c.out = base.out.or(c.out);
                c.threads = base.threads.or(c.threads);
                c.smoke |= base.smoke;
                c
            }
            Err(e) => {
                let _ = writeln!(stderr, "error [schema]: invalid config parameters\n{e}");
                return 2;
            }
        };
    }
    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(|| execute(&cli))),
        None => execute(&cli),
    };
    match result.and_then(|r| write_outputs(&cli, &r, stdout).map(|_| r)) {
        Ok(r) => {
            if r.passed {
                0
            } else {
                1
            }
        }
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error [{}]: {e}", category_name(&e));
            exit_code(&e)
        }
    }
}

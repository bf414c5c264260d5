//! Command-line front end: config parsing, run orchestration, CSV and SVG
//! artifact emission.
//!
//! Every run directory receives `curve.csv` (data), `manifest.txt` (a valid
//! config file echoing all resolved parameters, so a run can be repeated
//! bit-identically with `--config manifest.txt`) and `plot.svg` (a static
//! rendering of the CSV; never the source of truth).

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::entanglement::{concurrence_trace, esd_time, ConcurrenceTrace};
use crate::dynamics::{evolve, EvolutionParams};
use crate::experiments::{
    classify_effect, default_grid, reproduce_table, run_sweep, sweep_anisotropy,
    sweep_temperature, ResponseCurve, ResponseKind, SweepConfig, TableId, DEFAULT_EPSILON,
    DEFAULT_REL_TOL,
};
use crate::operators::{ChainSpec, NoisePlacement};
use crate::states::Preparation;
use crate::{Error, Result, VERSION};

/// Exit code for configuration errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for a table reproduction below the acceptance threshold.
pub const EXIT_TABLE_MISMATCH: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "xynoise", version, about = "XY-chain open-system noise sweeps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and record the pair concurrence over time.
    Evolve,
    /// Sweep the classical-noise strength and classify the response curve.
    Sweep,
    /// Classify an existing curve.csv.
    Classify {
        /// Path to a curve.csv produced by `sweep`.
        input: PathBuf,
    },
    /// Re-run a regression table (A1..A6, or `all`).
    ReproduceTable {
        /// Table identifier.
        id: String,
    },
    /// Repeat the sweep over a grid of bath excitation numbers.
    TempSweep,
    /// Repeat the sweep over a grid of anisotropies at fixed J.
    AnisotropySweep,
}

/// Flags shared by all subcommands; every flag overrides the matching config
/// file key.
#[derive(Debug, Args, Clone, Default)]
pub struct CommonArgs {
    /// Config file (key = value TOML; unknown keys rejected).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for curve.csv, manifest.txt and plot.svg.
    #[arg(long, global = true, default_value = "run")]
    pub out_dir: PathBuf,
    /// Preparation key (catalog name or e/g product label).
    #[arg(long, global = true)]
    pub preparation: Option<String>,
    /// Chain length (2..4); defaults to the preparation's length.
    #[arg(long, global = true)]
    pub n_qubits: Option<usize>,
    /// Noise placement, e.g. 3,4 (1-based qubit indices).
    #[arg(long, global = true, value_delimiter = ',')]
    pub placement: Option<Vec<usize>>,
    /// Noise-strength grid, e.g. 0,0.1,0.5.
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Noise strength for a single trajectory (evolve).
    #[arg(long, global = true)]
    pub noise_strength: Option<f64>,
    /// Isotropic coupling J = (Jx+Jy)/2.
    #[arg(long, global = true)]
    pub j: Option<f64>,
    /// Anisotropy Delta = (Jx-Jy)/2.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// X coupling (alternative to --j/--delta).
    #[arg(long, global = true)]
    pub jx: Option<f64>,
    /// Y coupling (alternative to --j/--delta).
    #[arg(long, global = true)]
    pub jy: Option<f64>,
    /// Zeeman frequency.
    #[arg(long, global = true)]
    pub omega0: Option<f64>,
    /// Dissipation rate.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// Bath average excitation number.
    #[arg(long, global = true)]
    pub nbar: Option<f64>,
    /// Ring (true) or open-chain (false) couplings.
    #[arg(long, global = true)]
    pub periodic: Option<bool>,
    /// Response kind: esd_time or area (default: chosen from the preparation).
    #[arg(long, global = true)]
    pub response: Option<String>,
    /// Integration budget.
    #[arg(long = "tmax", global = true)]
    pub t_max: Option<f64>,
    /// Time step (sweep output step / evolve integration step).
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    /// Concurrence threshold for death and cycle detection.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Extremum significance threshold as a fraction of the curve range.
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    /// Worker threads for sweeps (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Store every k-th step of an evolve trajectory.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
    /// Excitation-number grid for temp-sweep, e.g. 0,0.5,1.
    #[arg(long, global = true, value_delimiter = ',')]
    pub nbar_grid: Option<Vec<f64>>,
    /// Anisotropy grid for anisotropy-sweep, e.g. 0.1,0.2,0.4.
    #[arg(long, global = true, value_delimiter = ',')]
    pub delta_grid: Option<Vec<f64>>,
}

/// On-disk config schema. Flat key = value TOML; all keys optional, unknown
/// keys rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preparation: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub placement: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_strength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub j: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub periodic: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nbar_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }
}

/// Fully resolved run parameters: defaults, then config file, then flags.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub preparation: String,
    pub spec: ChainSpec,
    pub placement: Vec<usize>,
    pub grid: Vec<f64>,
    pub noise_strength: f64,
    pub response: ResponseKind,
    pub t_max: f64,
    pub dt: f64,
    pub epsilon: f64,
    pub rel_tol: f64,
    pub threads: Option<usize>,
    pub stride: usize,
    pub nbar_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
}

/// Read the config file named by the flags (if any) and resolve it against
/// the flags; flags win.
pub fn parse_config(common: &CommonArgs) -> Result<ResolvedConfig> {
    let file = match &common.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    resolve(&file, common)
}

fn resolve(file: &ConfigFile, flags: &CommonArgs) -> Result<ResolvedConfig> {
    let preparation = flags
        .preparation
        .clone()
        .or_else(|| file.preparation.clone())
        .ok_or_else(|| Error::Config("preparation is required (key `preparation`)".into()))?;
    let prep = Preparation::from_key(&preparation)?;
    let n_qubits = flags.n_qubits.or(file.n_qubits).unwrap_or(prep.n_qubits);

    let jx = flags.jx.or(file.jx);
    let jy = flags.jy.or(file.jy);
    let j = flags.j.or(file.j);
    let delta = flags.delta.or(file.delta);
    if (jx.is_some() || jy.is_some()) && (j.is_some() || delta.is_some()) {
        return Err(Error::Config(
            "keys `jx`/`jy` conflict with `j`/`delta`: give one parameterization".into(),
        ));
    }
    let reference = ChainSpec::reference(n_qubits.clamp(2, 4));
    let omega0 = flags.omega0.or(file.omega0).unwrap_or(reference.omega0);
    let gamma = flags.gamma.or(file.gamma).unwrap_or(reference.gamma);
    let nbar = flags.nbar.or(file.nbar).unwrap_or(reference.nbar);
    let periodic = flags.periodic.or(file.periodic).unwrap_or(reference.periodic);
    let spec = match (jx, jy) {
        (None, None) => ChainSpec::from_j_delta(
            n_qubits,
            j.unwrap_or(reference.j()),
            delta.unwrap_or(0.5 * (reference.j_x - reference.j_y)),
            omega0,
            gamma,
            nbar,
            periodic,
        )?,
        _ => {
            let jx = jx.ok_or_else(|| Error::Config("key `jy` given without `jx`".into()))?;
            let jy = jy.ok_or_else(|| Error::Config("key `jx` given without `jy`".into()))?;
            let spec = ChainSpec { n_qubits, j_x: jx, j_y: jy, omega0, gamma, nbar, periodic };
            spec.validate()?;
            spec
        }
    };

    let placement = flags
        .placement
        .clone()
        .or_else(|| file.placement.clone())
        .ok_or_else(|| Error::Config("placement is required (key `placement`, e.g. [3])".into()))?;

    let response = match flags.response.as_deref().or(file.response.as_deref()) {
        Some(s) => s.parse()?,
        None => ResponseKind::for_preparation(&prep),
    };

    let cfg = ResolvedConfig {
        preparation,
        spec,
        placement,
        grid: flags.grid.clone().or_else(|| file.grid.clone()).unwrap_or_else(default_grid),
        noise_strength: flags.noise_strength.or(file.noise_strength).unwrap_or(0.0),
        response,
        t_max: flags.t_max.or(file.t_max).unwrap_or(crate::experiments::DEFAULT_T_MAX),
        dt: flags.dt.or(file.dt).unwrap_or(crate::experiments::DEFAULT_DT),
        epsilon: flags.epsilon.or(file.epsilon).unwrap_or(DEFAULT_EPSILON),
        rel_tol: flags.rel_tol.or(file.rel_tol).unwrap_or(DEFAULT_REL_TOL),
        threads: flags.threads.or(file.threads),
        stride: flags.stride.or(file.stride).unwrap_or(1),
        nbar_grid: flags
            .nbar_grid
            .clone()
            .or_else(|| file.nbar_grid.clone())
            .unwrap_or_else(|| vec![0.0, 0.5, 1.0, 2.0, 4.0, 6.0]),
        delta_grid: flags
            .delta_grid
            .clone()
            .or_else(|| file.delta_grid.clone())
            .unwrap_or_else(|| vec![0.1, 0.2, 0.4]),
    };
    Ok(cfg)
}

impl ResolvedConfig {
    pub fn to_sweep_config(&self) -> Result<SweepConfig> {
        let cfg = SweepConfig {
            preparation: self.preparation.clone(),
            spec: self.spec.clone(),
            placement: NoisePlacement::new(self.placement.iter().copied(), 0.0),
            grid: self.grid.clone(),
            response: self.response,
            t_max: self.t_max,
            dt: self.dt,
            epsilon: self.epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_evolution_params(&self) -> Result<EvolutionParams> {
        EvolutionParams::new(
            self.spec.clone(),
            NoisePlacement::new(self.placement.iter().copied(), self.noise_strength),
            self.t_max,
            self.dt,
        )?
        .with_stride(self.stride)
    }

    /// Full echo of the resolved parameters as a config file.
    fn echo(&self, command: &Command) -> ConfigFile {
        ConfigFile {
            preparation: Some(self.preparation.clone()),
            n_qubits: Some(self.spec.n_qubits),
            placement: Some(self.placement.clone()),
            grid: Some(self.grid.clone()),
            noise_strength: Some(self.noise_strength),
            j: None,
            delta: None,
            jx: Some(self.spec.j_x),
            jy: Some(self.spec.j_y),
            omega0: Some(self.spec.omega0),
            gamma: Some(self.spec.gamma),
            nbar: Some(self.spec.nbar),
            periodic: Some(self.spec.periodic),
            response: Some(self.response.as_str().to_string()),
            t_max: Some(self.t_max),
            dt: Some(self.dt),
            epsilon: Some(self.epsilon),
            rel_tol: Some(self.rel_tol),
            threads: self.threads,
            stride: Some(self.stride),
            nbar_grid: matches!(command, Command::TempSweep).then(|| self.nbar_grid.clone()),
            delta_grid: matches!(command, Command::AnisotropySweep)
                .then(|| self.delta_grid.clone()),
        }
    }
}

/// Parameter echo plus provenance for one completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: String,
    pub config: ConfigFile,
    pub version: String,
    pub duration_secs: f64,
}

impl RunManifest {
    /// Text form: a valid config file (so `--config manifest.txt` repeats the
    /// run) followed by provenance comments.
    pub fn render(&self) -> Result<String> {
        let mut out = self.config.to_toml_string()?;
        out.push('\n');
        writeln!(out, "# command = \"{}\"", self.command).unwrap();
        writeln!(out, "# version = \"{}\"", self.version).unwrap();
        writeln!(out, "# duration_secs = {:e}", self.duration_secs).unwrap();
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config = ConfigFile::from_toml_str(text)?;
        let grab = |key: &str| -> Result<String> {
            text.lines()
                .find_map(|l| l.strip_prefix(&format!("# {key} = ")))
                .map(|v| v.trim().trim_matches('"').to_string())
                .ok_or_else(|| Error::Config(format!("manifest is missing `# {key} = ...`")))
        };
        let duration = grab("duration_secs")?;
        Ok(Self {
            command: grab("command")?,
            config,
            version: grab("version")?,
            duration_secs: duration
                .parse()
                .map_err(|_| Error::Config(format!("bad manifest duration {duration:?}")))?,
        })
    }
}

/// Concurrence-vs-time CSV for evolve runs; full precision, exact round trip.
pub fn trace_to_csv(trace: &ConcurrenceTrace) -> String {
    let mut out = String::from("t,concurrence\n");
    for (t, c) in trace.times.iter().zip(&trace.values) {
        out.push_str(&format!("{t:.17e},{c:.17e}\n"));
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<ConcurrenceTrace> {
    let mut lines = text.lines();
    match lines.next() {
        Some("t,concurrence") => {}
        other => return Err(Error::InvalidArgument(format!("bad trace CSV header: {other:?}"))),
    }
    let (mut times, mut values) = (Vec::new(), Vec::new());
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let mut parse = |what: &str| -> Result<f64> {
            cols.next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| {
                    Error::InvalidArgument(format!("trace CSV line {}: bad {what}", ln + 2))
                })
        };
        times.push(parse("time")?);
        values.push(parse("concurrence")?);
    }
    ConcurrenceTrace::new(times, values)
}

// ---------------------------------------------------------------------------
// SVG rendering
// ---------------------------------------------------------------------------

pub(crate) struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub censored: Vec<bool>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Static single-file SVG; log-x when the positive x values span two decades.
pub(crate) fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h) = (640.0, 420.0);
    let (x0, x1, y0, y1) = (72.0, 624.0, 36.0, 372.0);

    let xs: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.points.iter().map(|p| p.1)).collect();
    let xpos_min = xs.iter().copied().filter(|x| *x > 0.0).fold(f64::INFINITY, f64::min);
    let xmax = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let has_zero = xs.iter().any(|x| *x <= 0.0);
    let logx = xpos_min.is_finite() && xmax / xpos_min >= 100.0;

    // x=0 cannot live on a log axis; reserve the left edge for it
    let (lx_min, lx_max) = if logx {
        (xpos_min.log10(), xmax.log10())
    } else {
        (xs.iter().copied().fold(f64::INFINITY, f64::min), xmax)
    };
    let zero_slot = if logx && has_zero { 18.0 } else { 0.0 };
    let x_span = if lx_max > lx_min { lx_max - lx_min } else { 1.0 };
    let map_x = |x: f64| -> f64 {
        if logx {
            if x <= 0.0 {
                x0
            } else {
                x0 + zero_slot + (x.log10() - lx_min) / x_span * (x1 - x0 - zero_slot)
            }
        } else {
            x0 + (x - lx_min) / x_span * (x1 - x0)
        }
    };
    let y_min = ys.iter().copied().fold(0.0f64, f64::min);
    let y_top = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let y_max = if y_top > y_min { y_top + 0.05 * (y_top - y_min) } else { y_min + 1.0 };
    let map_y = |y: f64| -> f64 { y1 - (y - y_min) / (y_max - y_min) * (y1 - y0) };

    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {w} {h}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{title}</text>\n",
        (x0 + x1) / 2.0
    );
    let _ = write!(
        svg,
        "<rect x=\"{x0}\" y=\"{y0}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"black\"/>\n",
        x1 - x0,
        y1 - y0
    );

    // y ticks
    for k in 0..=4 {
        let val = y_min + (y_max - y_min) * k as f64 / 4.0;
        let py = map_y(val);
        let _ = write!(
            svg,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            fmt_tick(val)
        );
    }
    // x ticks
    let mut xticks: Vec<f64> = Vec::new();
    if logx {
        if has_zero {
            xticks.push(0.0);
        }
        let (k0, k1) = (lx_min.ceil() as i64, lx_max.floor() as i64);
        for k in k0..=k1 {
            xticks.push(10f64.powi(k as i32));
        }
    } else {
        for k in 0..=4 {
            xticks.push(lx_min + (lx_max - lx_min) * k as f64 / 4.0);
        }
    }
    for val in xticks {
        let px = map_x(val);
        let _ = write!(
            svg,
            "<line x1=\"{px:.2}\" y1=\"{y1}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>\n\
             <text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            y1 + 5.0,
            y1 + 20.0,
            fmt_tick(val)
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xlabel}</text>\n\
         <text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {:.2})\">{ylabel}</text>\n",
        (x0 + x1) / 2.0,
        h - 12.0,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        let mut path = String::new();
        for &(x, y) in &s.points {
            let _ = write!(path, "{:.2},{:.2} ", map_x(x), map_y(y));
        }
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.trim_end()
        );
        for (pi, &(x, y)) in s.points.iter().enumerate() {
            let censored = s.censored.get(pi).copied().unwrap_or(false);
            let fill = if censored { "white" } else { color };
            let _ = write!(
                svg,
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{fill}\" \
                 stroke=\"{color}\"/>\n",
                map_x(x),
                map_y(y)
            );
        }
        if series.len() > 1 || !s.label.is_empty() {
            let ly = y0 + 16.0 + 16.0 * si as f64;
            let _ = write!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" \
                 stroke=\"{color}\" stroke-width=\"1.5\"/>\n\
                 <text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
                x1 - 150.0,
                x1 - 130.0,
                x1 - 125.0,
                ly + 4.0,
                s.label
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.0e}")
    }
}

// ---------------------------------------------------------------------------
// Run orchestration
// ---------------------------------------------------------------------------

/// Write named artifacts into the run directory; errors carry the path.
pub fn emit_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create {}: {e}", dir.display())))?;
    for (name, content) in files {
        let path = dir.join(name);
        std::fs::write(&path, content).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("writing {}: {e}", path.display()),
            ))
        })?;
    }
    Ok(())
}

/// Top-level entry point; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidPreparation(_) => EXIT_CONFIG,
        Error::SweepPoint { source, .. } => exit_code_for(source),
        _ => EXIT_NUMERICAL,
    }
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // ignore the error when a pool already exists (tests, repeat calls)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn execute(cli: &Cli) -> Result<i32> {
    let started = Instant::now();
    match &cli.command {
        Command::Evolve => {
            let resolved = parse_config(&cli.common)?;
            init_threads(resolved.threads);
            cmd_evolve(cli, &resolved, started)
        }
        Command::Sweep => {
            let resolved = parse_config(&cli.common)?;
            init_threads(resolved.threads);
            cmd_sweep(cli, &resolved, started)
        }
        Command::Classify { input } => {
            let rel_tol = cli.common.rel_tol.unwrap_or(DEFAULT_REL_TOL);
            cmd_classify(input, rel_tol)
        }
        Command::ReproduceTable { id } => {
            init_threads(cli.common.threads);
            cmd_reproduce_table(cli, id, started)
        }
        Command::TempSweep => {
            let resolved = parse_config(&cli.common)?;
            init_threads(resolved.threads);
            cmd_temp_sweep(cli, &resolved, started)
        }
        Command::AnisotropySweep => {
            let resolved = parse_config(&cli.common)?;
            init_threads(resolved.threads);
            cmd_anisotropy_sweep(cli, &resolved, started)
        }
    }
}

fn finish_manifest(
    cli: &Cli,
    resolved: &ResolvedConfig,
    command: &str,
    started: Instant,
) -> Result<String> {
    RunManifest {
        command: command.into(),
        config: resolved.echo(&cli.command),
        version: VERSION.into(),
        duration_secs: started.elapsed().as_secs_f64(),
    }
    .render()
}

fn cmd_evolve(cli: &Cli, resolved: &ResolvedConfig, started: Instant) -> Result<i32> {
    let params = resolved.to_evolution_params()?;
    let rho0 = Preparation::from_key(&resolved.preparation)?.build()?;
    let traj = evolve(&rho0, &params)?;
    let trace = concurrence_trace(&traj)?;
    let csv = trace_to_csv(&trace);
    let svg = svg_plot(
        &format!("{} pair concurrence", resolved.preparation),
        "t",
        "concurrence",
        &[Series {
            label: String::new(),
            points: trace.times.iter().copied().zip(trace.values.iter().copied()).collect(),
            censored: vec![false; trace.times.len()],
        }],
    );
    let manifest = finish_manifest(cli, resolved, "evolve", started)?;
    emit_outputs(
        &cli.common.out_dir,
        &[("curve.csv", &csv), ("plot.svg", &svg), ("manifest.txt", &manifest)],
    )?;
    match esd_time(&trace, resolved.epsilon) {
        Ok(esd) => match esd.t_esd {
            Some(t) => println!("esd_time = {t}"),
            None => println!("no death within t_max (censored)"),
        },
        Err(Error::NeverEntangled) => println!("pair never entangled above epsilon"),
        Err(e) => return Err(e),
    }
    println!("final concurrence = {:.6}", trace.values.last().unwrap());
    println!("wrote {}", cli.common.out_dir.display());
    Ok(0)
}

fn cmd_sweep(cli: &Cli, resolved: &ResolvedConfig, started: Instant) -> Result<i32> {
    let cfg = resolved.to_sweep_config()?;
    let curve = run_sweep(&cfg)?;
    // the curve is the primary artifact; a label needs >= 8 uncensored points
    let classification = match classify_effect(&curve, resolved.rel_tol) {
        Ok(c) => Some(c),
        Err(Error::InsufficientData { have, need }) => {
            println!("label = unavailable ({have} uncensored points, need {need})");
            None
        }
        Err(e) => return Err(e),
    };
    let csv = curve.to_csv();
    let svg = svg_plot(
        &format!("{} {}", resolved.preparation, resolved.response),
        "M",
        resolved.response.as_str(),
        &[Series {
            label: String::new(),
            points: curve.m_values.iter().copied().zip(curve.responses.iter().copied()).collect(),
            censored: curve.censored.clone(),
        }],
    );
    let manifest = finish_manifest(cli, resolved, "sweep", started)?;
    emit_outputs(
        &cli.common.out_dir,
        &[("curve.csv", &csv), ("plot.svg", &svg), ("manifest.txt", &manifest)],
    )?;
    if let Some(c) = &classification {
        println!("label = {}", c.label);
        println!("notes: {}", c.notes);
    }
    println!(
        "censored {} of {} points",
        curve.censored.iter().filter(|c| **c).count(),
        curve.len()
    );
    println!("wrote {}", cli.common.out_dir.display());
    Ok(0)
}

fn cmd_classify(input: &Path, rel_tol: f64) -> Result<i32> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let curve = ResponseCurve::from_csv(&text)?;
    let classification = classify_effect(&curve, rel_tol)?;
    println!("label = {}", classification.label);
    for e in &classification.extrema {
        println!(
            "extremum: {} response={} at M={}",
            match e.kind {
                crate::experiments::ExtremumKind::Max => "max",
                crate::experiments::ExtremumKind::Min => "min",
            },
            e.response,
            e.m
        );
    }
    println!("notes: {}", classification.notes);
    Ok(0)
}

fn cmd_reproduce_table(cli: &Cli, id: &str, started: Instant) -> Result<i32> {
    let tables: Vec<TableId> = if id.eq_ignore_ascii_case("all") {
        TableId::ALL.to_vec()
    } else {
        vec![id.parse()?]
    };
    let (mut matched, mut counted) = (0usize, 0usize);
    let mut report_text = String::new();
    for table in &tables {
        let report = reproduce_table(*table)?;
        let dir = cli.common.out_dir.join(table.as_str());
        let mut files: Vec<(String, String)> = vec![("report.txt".into(), report.summary())];
        for cell in &report.cells {
            files.push((
                format!("{}_{}.csv", cell.row, cell.placement_label),
                cell.curve.to_csv(),
            ));
        }
        let borrowed: Vec<(&str, &str)> =
            files.iter().map(|(n, c)| (n.as_str(), c.as_str())).collect();
        emit_outputs(&dir, &borrowed)?;
        matched += report.matched();
        counted += report.counted();
        report_text.push_str(&report.summary());
    }
    print!("{report_text}");
    println!(
        "total: {matched}/{counted} matched ({:.1}%)",
        100.0 * matched as f64 / counted.max(1) as f64
    );
    let manifest = RunManifest {
        command: format!("reproduce-table {id}"),
        config: ConfigFile::default(),
        version: VERSION.into(),
        duration_secs: started.elapsed().as_secs_f64(),
    }
    .render()?;
    emit_outputs(&cli.common.out_dir, &[("manifest.txt", &manifest)])?;
    println!("wrote {}", cli.common.out_dir.display());
    // CI gate: a table run that falls below the acceptance threshold exits 4
    if matched * 10 < counted * 9 {
        return Ok(EXIT_TABLE_MISMATCH);
    }
    Ok(0)
}

fn cmd_temp_sweep(cli: &Cli, resolved: &ResolvedConfig, started: Instant) -> Result<i32> {
    let cfg = resolved.to_sweep_config()?;
    let result = sweep_temperature(&cfg, &resolved.nbar_grid)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut series = Vec::new();
    for (i, curve) in result.curves.iter().enumerate() {
        files.push((format!("curve_nbar_{i}.csv"), curve.to_csv()));
        series.push(Series {
            label: format!("nbar={}", result.nbar_values[i]),
            points: curve.m_values.iter().copied().zip(curve.responses.iter().copied()).collect(),
            censored: curve.censored.clone(),
        });
        println!(
            "nbar={} label={}",
            result.nbar_values[i],
            result.classifications[i].label
        );
    }
    match result.nbar_critical {
        Some(n) => println!("nbar_critical = {n}"),
        None => println!("nbar_critical = none"),
    }
    let svg = svg_plot(
        &format!("{} vs temperature", resolved.preparation),
        "M",
        resolved.response.as_str(),
        &series,
    );
    files.push(("plot.svg".into(), svg));
    files.push(("manifest.txt".into(), finish_manifest(cli, resolved, "temp-sweep", started)?));
    let borrowed: Vec<(&str, &str)> = files.iter().map(|(n, c)| (n.as_str(), c.as_str())).collect();
    emit_outputs(&cli.common.out_dir, &borrowed)?;
    println!("wrote {}", cli.common.out_dir.display());
    Ok(0)
}

fn cmd_anisotropy_sweep(cli: &Cli, resolved: &ResolvedConfig, started: Instant) -> Result<i32> {
    let cfg = resolved.to_sweep_config()?;
    let curves = sweep_anisotropy(&cfg, &resolved.delta_grid)?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut series = Vec::new();
    for (i, ac) in curves.iter().enumerate() {
        files.push((format!("curve_delta_{i}.csv"), ac.curve.to_csv()));
        series.push(Series {
            label: format!("delta={}", ac.delta),
            points: ac
                .curve
                .m_values
                .iter()
                .copied()
                .zip(ac.curve.responses.iter().copied())
                .collect(),
            censored: ac.curve.censored.clone(),
        });
        println!("delta={} gain={:.6} ", ac.delta, ac.gain);
    }
    let svg = svg_plot(
        &format!("{} vs anisotropy", resolved.preparation),
        "M",
        resolved.response.as_str(),
        &series,
    );
    files.push(("plot.svg".into(), svg));
    files.push((
        "manifest.txt".into(),
        finish_manifest(cli, resolved, "anisotropy-sweep", started)?,
    ));
    let borrowed: Vec<(&str, &str)> = files.iter().map(|(n, c)| (n.as_str(), c.as_str())).collect();
    emit_outputs(&cli.common.out_dir, &borrowed)?;
    println!("wrote {}", cli.common.out_dir.display());
    Ok(0)
}

//! Experiment configuration: a plain-text `key = value` file merged with
//! command-line flags. Flags win. Keys are the flag names without dashes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Parser;
use mkdv_core::evolve::{
    EvolverConfig, Scheme, DEFAULT_DEALIAS, DEFAULT_DT, DEFAULT_SAVE_INTERVAL,
};
use mkdv_core::grid::{DEFAULT_COUNT, DEFAULT_LENGTH};
use mkdv_core::linops::DEFAULT_ZERO_TOL;
use mkdv_core::{Grid, PhaseSet, SpeedSet};

/// A validation failure; maps to exit status 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cli::config: {}", self.0)
    }
}

impl From<mkdv_core::Error> for ConfigError {
    fn from(e: mkdv_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Soliton,
    Conserved,
    Residual,
    Spectrum,
    Factorization,
    InertiaScan,
    Hessian,
    Criterion,
    Evolve,
    Stability,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Soliton,
        Command::Conserved,
        Command::Residual,
        Command::Spectrum,
        Command::Factorization,
        Command::InertiaScan,
        Command::Hessian,
        Command::Criterion,
        Command::Evolve,
        Command::Stability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Soliton => "soliton",
            Command::Conserved => "conserved",
            Command::Residual => "residual",
            Command::Spectrum => "spectrum",
            Command::Factorization => "factorization",
            Command::InertiaScan => "inertia-scan",
            Command::Hessian => "hessian",
            Command::Criterion => "criterion",
            Command::Evolve => "evolve",
            Command::Stability => "stability",
        }
    }
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Command::ALL.iter().map(|c| c.name()).collect();
                ConfigError(format!(
                    "unknown command '{s}'; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    /// `sech(x) cos(x)`.
    Sech,
    /// `exp(-x^2 / 2)`.
    Gauss,
    /// A seeded Gaussian-windowed Fourier packet.
    Mode,
}

impl FromStr for Shape {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "sech" => Ok(Shape::Sech),
            "gauss" => Ok(Shape::Gauss),
            "mode" => Ok(Shape::Mode),
            _ => Err(ConfigError(format!(
                "perturbation-shape must be sech, gauss or mode, got '{s}'"
            ))),
        }
    }
}

/// Raw flags. Every value is kept as text so that flags and the config file
/// go through the same parser.
#[derive(Debug, Parser)]
#[command(
    name = "mkdvlab",
    version,
    about = "mKdV multi-soliton stability laboratory"
)]
pub struct Cli {
    /// soliton | conserved | residual | spectrum | factorization | inertia-scan | hessian | criterion | evolve | stability
    pub command: Option<String>,
    /// Plain-text `key = value` file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    pub speeds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub phases: Option<String>,
    #[arg(long)]
    pub grid_length: Option<String>,
    #[arg(long)]
    pub grid_count: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub time: Option<String>,
    /// Comma-separated times.
    #[arg(long, allow_hyphen_values = true)]
    pub times: Option<String>,
    /// Range `a..b` or list of hierarchy indices.
    #[arg(long)]
    pub orders: Option<String>,
    #[arg(long)]
    pub sobolev_index: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub horizon: Option<String>,
    /// etdrk4 | ifrk4
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub dealias: Option<String>,
    #[arg(long)]
    pub save_interval: Option<String>,
    /// H^k size of the perturbation (k = sobolev-index).
    #[arg(long)]
    pub perturbation_amplitude: Option<String>,
    /// sech | gauss | mode
    #[arg(long)]
    pub perturbation_shape: Option<String>,
    /// Number of eigenvalues reported by `spectrum`.
    #[arg(long)]
    pub count: Option<String>,
    #[arg(long)]
    pub zero_tol: Option<String>,
    /// Directory for `<command>.csv` and `summary.json`.
    #[arg(long)]
    pub output_path: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
}

const KEYS: [&str; 20] = [
    "command",
    "speeds",
    "phases",
    "grid-length",
    "grid-count",
    "time",
    "times",
    "orders",
    "sobolev-index",
    "dt",
    "horizon",
    "scheme",
    "dealias",
    "save-interval",
    "perturbation-amplitude",
    "perturbation-shape",
    "count",
    "zero-tol",
    "output-path",
    "seed",
];

impl Cli {
    fn flags(&self) -> BTreeMap<&'static str, String> {
        let values = [
            &self.command,
            &self.speeds,
            &self.phases,
            &self.grid_length,
            &self.grid_count,
            &self.time,
            &self.times,
            &self.orders,
            &self.sobolev_index,
            &self.dt,
            &self.horizon,
            &self.scheme,
            &self.dealias,
            &self.save_interval,
            &self.perturbation_amplitude,
            &self.perturbation_shape,
            &self.count,
            &self.zero_tol,
            &self.output_path,
            &self.seed,
        ];
        KEYS.iter()
            .zip(values)
            .filter_map(|(k, v)| v.clone().map(|v| (*k, v)))
            .collect()
    }
}

/// Parses `key = value` lines; `#` starts a comment. Keys may use `-` or `_`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<&'static str, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!(
                "config line {}: expected 'key = value'",
                lineno + 1
            ))
        })?;
        let key = key.trim().replace('_', "-");
        let known = KEYS.iter().find(|k| **k == key).ok_or_else(|| {
            ConfigError(format!("config line {}: unknown key '{key}'", lineno + 1))
        })?;
        out.insert(*known, value.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub speeds: Vec<f64>,
    pub phases: Option<Vec<f64>>,
    pub grid_length: f64,
    pub grid_count: usize,
    pub time: f64,
    pub times: Vec<f64>,
    pub orders: Vec<usize>,
    pub sobolev_index: Option<u32>,
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    pub dealias: f64,
    pub save_interval: f64,
    pub perturbation_amplitude: f64,
    pub perturbation_shape: Shape,
    pub count: usize,
    pub zero_tol: f64,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
}

fn parse_scalar<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError> {
    v.trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, ConfigError> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_scalar(key, s))
        .collect()
}

fn parse_orders(v: &str) -> Result<Vec<usize>, ConfigError> {
    if let Some((a, b)) = v.split_once("..") {
        let (a, b): (usize, usize) = (parse_scalar("orders", a)?, parse_scalar("orders", b)?);
        if a > b {
            return Err(ConfigError(format!("orders: empty range {v}")));
        }
        Ok((a..=b).collect())
    } else {
        v.split(',').map(|s| parse_scalar("orders", s)).collect()
    }
}

impl ExperimentConfig {
    /// Merges the config file (if any) with the flags and validates.
    pub fn from_cli(cli: &Cli) -> Result<Self, ConfigError> {
        let mut map = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ConfigError(format!("cannot read config file {}: {e}", path.display()))
                })?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        map.extend(cli.flags());
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<&'static str, String>) -> Result<Self, ConfigError> {
        let get = |k: &str| map.get(k).map(String::as_str);
        let command: Command = get("command")
            .ok_or_else(|| ConfigError("no command given".into()))?
            .parse()?;
        let speeds = match get("speeds") {
            Some(v) => parse_list("speeds", v)?,
            None => Vec::new(),
        };
        let scheme = match get("scheme").unwrap_or("etdrk4") {
            "etdrk4" => Scheme::Etdrk4,
            "ifrk4" => Scheme::IfRk4,
            other => {
                return Err(ConfigError(format!(
                    "scheme must be etdrk4 or ifrk4, got '{other}'"
                )))
            }
        };
        let time = get("time")
            .map(|v| parse_scalar("time", v))
            .transpose()?
            .unwrap_or(0.0);
        let cfg = Self {
            command,
            phases: get("phases").map(|v| parse_list("phases", v)).transpose()?,
            grid_length: get("grid-length")
                .map(|v| parse_scalar("grid-length", v))
                .transpose()?
                .unwrap_or(DEFAULT_LENGTH),
            grid_count: get("grid-count")
                .map(|v| parse_scalar("grid-count", v))
                .transpose()?
                .unwrap_or(DEFAULT_COUNT),
            time,
            times: get("times")
                .map(|v| parse_list("times", v))
                .transpose()?
                .unwrap_or_else(|| vec![time]),
            orders: get("orders")
                .map(parse_orders)
                .transpose()?
                .unwrap_or_default(),
            sobolev_index: get("sobolev-index")
                .map(|v| parse_scalar("sobolev-index", v))
                .transpose()?,
            dt: get("dt")
                .map(|v| parse_scalar("dt", v))
                .transpose()?
                .unwrap_or(DEFAULT_DT),
            horizon: get("horizon")
                .map(|v| parse_scalar("horizon", v))
                .transpose()?
                .unwrap_or(1.0),
            scheme,
            dealias: get("dealias")
                .map(|v| parse_scalar("dealias", v))
                .transpose()?
                .unwrap_or(DEFAULT_DEALIAS),
            save_interval: get("save-interval")
                .map(|v| parse_scalar("save-interval", v))
                .transpose()?
                .unwrap_or(DEFAULT_SAVE_INTERVAL),
            perturbation_amplitude: get("perturbation-amplitude")
                .map(|v| parse_scalar("perturbation-amplitude", v))
                .transpose()?
                .unwrap_or(0.0),
            perturbation_shape: get("perturbation-shape").unwrap_or("sech").parse()?,
            count: get("count")
                .map(|v| parse_scalar("count", v))
                .transpose()?
                .unwrap_or(10),
            zero_tol: get("zero-tol")
                .map(|v| parse_scalar("zero-tol", v))
                .transpose()?
                .unwrap_or(DEFAULT_ZERO_TOL),
            output_path: get("output-path").map(PathBuf::from),
            seed: get("seed")
                .map(|v| parse_scalar("seed", v))
                .transpose()?
                .unwrap_or(0),
            speeds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.speeds.is_empty() {
            return Err(ConfigError(format!(
                "{} needs --speeds",
                self.command.name()
            )));
        }
        let speeds = self.speed_set()?;
        self.phase_set(&speeds)?;
        self.grid()?;
        self.evolver()?;
        if let Some(k) = self.sobolev_index {
            if k > mkdv_core::grid::MAX_ORDER {
                return Err(ConfigError(format!(
                    "sobolev-index must be at most {}, got {k}",
                    mkdv_core::grid::MAX_ORDER
                )));
            }
        }
        if !(self.perturbation_amplitude >= 0.0 && self.perturbation_amplitude.is_finite()) {
            return Err(ConfigError(format!(
                "perturbation-amplitude must be non-negative, got {}",
                self.perturbation_amplitude
            )));
        }
        if !(self.zero_tol > 0.0 && self.zero_tol < 1.0) {
            return Err(ConfigError(format!(
                "zero-tol must lie in (0, 1), got {}",
                self.zero_tol
            )));
        }
        if self
            .times
            .iter()
            .chain([&self.time])
            .any(|t| !t.is_finite())
        {
            return Err(ConfigError("times must be finite".into()));
        }
        Ok(())
    }

    pub fn speed_set(&self) -> Result<SpeedSet, ConfigError> {
        Ok(SpeedSet::new(self.speeds.clone())?)
    }

    pub fn phase_set(&self, speeds: &SpeedSet) -> Result<PhaseSet, ConfigError> {
        match &self.phases {
            None => Ok(PhaseSet::zeros(speeds.len())),
            Some(p) if p.len() != speeds.len() => Err(ConfigError(format!(
                "{} speeds but {} phases",
                speeds.len(),
                p.len()
            ))),
            Some(p) => Ok(PhaseSet::new(p.clone())?),
        }
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Ok(Grid::new(self.grid_length, self.grid_count)?)
    }

    pub fn evolver(&self) -> Result<EvolverConfig, ConfigError> {
        Ok(EvolverConfig::new(self.dt, self.horizon)?
            .with_scheme(self.scheme)
            .with_dealias(self.dealias)
            .with_save_interval(self.save_interval))
    }

    /// Defaults to `N`, the index the stability theory works in.
    pub fn sobolev(&self) -> u32 {
        self.sobolev_index.unwrap_or(self.speeds.len() as u32)
    }

    /// The parameter comment line written under every CSV header.
    pub fn describe(&self) -> String {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let scheme = match self.scheme {
            Scheme::Etdrk4 => "etdrk4",
            Scheme::IfRk4 => "ifrk4",
        };
        format!(
            "command={} speeds={} phases={} grid-length={} grid-count={} time={} times={} sobolev-index={} dt={} horizon={} scheme={scheme} dealias={} save-interval={} perturbation-amplitude={} perturbation-shape={:?} seed={} zero-tol={}",
            self.command.name(),
            list(&self.speeds),
            self.phases.as_deref().map(list).unwrap_or_else(|| "0".into()),
            self.grid_length,
            self.grid_count,
            self.time,
            list(&self.times),
            self.sobolev(),
            self.dt,
            self.horizon,
            self.dealias,
            self.save_interval,
            self.perturbation_amplitude,
            self.perturbation_shape,
            self.seed,
            self.zero_tol,
        )
    }
}

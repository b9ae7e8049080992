//! Sectioned `key = value` configuration.
//!
//! ```text
//! command = verify
//! [grid]
//! n = 1  L = 16  M = 256  bc = dirichlet  scheme = spectral
//! [potential]
//! kind = power  coef = 1  sigma = 2
//! [fractional]
//! alpha = 0.5  beta = 1  gamma = 0.25  N = 0,1,2
//! ```
//!
//! Several `key=value` tokens may share a line; `#` starts a comment. Keys of any
//! section may also appear before the first header. Every key may be given once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use subheat_core::grid::{BoundaryCondition, Grid, Point};
use subheat_core::potential::PotentialSpec;
use subheat_core::spectral::LaplacianScheme;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}' does not belong to section [{section}]")]
    WrongSection { key: String, section: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("key '{0}' given more than once")]
    Duplicate(String),
    #[error("missing [grid] block")]
    MissingGrid,
    #[error("invalid value for '{key}': {msg}")]
    Value { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Kernels,
    Verify,
    Spaces,
    Equiv,
    Selftest,
}

impl FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "kernels" => Ok(Self::Kernels),
            "verify" => Ok(Self::Verify),
            "spaces" => Ok(Self::Spaces),
            "equiv" => Ok(Self::Equiv),
            "selftest" => Ok(Self::Selftest),
            other => Err(format!("unknown command '{other}'")),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Kernels => "kernels",
            Self::Verify => "verify",
            Self::Spaces => "spaces",
            Self::Equiv => "equiv",
            Self::Selftest => "selftest",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub n: usize,
    pub half_width: f64,
    pub m: usize,
    pub bc: BoundaryCondition,
    pub scheme: LaplacianScheme,
}

impl GridConfig {
    pub fn build(&self) -> Grid {
        Grid::new(self.n, self.half_width, self.m, self.bc).expect("validated at parse time")
    }

    /// Same box with `m` points per axis.
    pub fn with_points(&self, m: usize) -> Result<Grid, ConfigError> {
        Grid::new(self.n, self.half_width, m, self.bc).map_err(|e| value_err("M", e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub n_list: Vec<f64>,
    pub delta_prime: Option<f64>,
    pub m: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub potential: PotentialSpec,
    pub q: Option<f64>,
    pub fractional: FractionalConfig,
    pub command: Option<Command>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Times for `kernels`.
    pub times: Vec<f64>,
    /// Estimate ids for `verify` (empty: all).
    pub ids: Vec<String>,
    /// Coarse grid size for refinement (default `M/2`).
    pub coarse_m: Option<usize>,
    /// Points of the log-time grid for square functions.
    pub time_points: usize,
    /// Normalised `section.key=value` record of every setting.
    canonical: BTreeMap<String, String>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["n", "L", "M", "bc", "scheme"]),
    ("potential", &["kind", "value", "coef", "sigma", "lo", "hi", "height", "q"]),
    ("fractional", &["alpha", "beta", "gamma", "N", "delta_prime", "m"]),
    ("run", &["command", "out", "seed", "times", "ids", "coarse_M", "J"]),
];

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn value_err(key: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError::Value { key: key.into(), msg: msg.to_string() }
}

struct Raw {
    entries: BTreeMap<String, String>,
    has_grid: bool,
}

fn tokenize(text: &str) -> Result<Raw, ConfigError> {
    let mut entries = BTreeMap::new();
    let mut section: Option<String> = None;
    let mut has_grid = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut rest = line.trim();
        while !rest.is_empty() {
            if let Some(stripped) = rest.strip_prefix('[') {
                let end = stripped
                    .find(']')
                    .ok_or_else(|| ConfigError::Syntax { line: ln + 1, msg: "unterminated section header".into() })?;
                let name = stripped[..end].trim().to_string();
                if !SECTIONS.iter().any(|(s, _)| *s == name) {
                    return Err(ConfigError::UnknownSection(name));
                }
                has_grid |= name == "grid";
                section = Some(name);
                rest = stripped[end + 1..].trim_start();
                continue;
            }
            let (token, tail) = match rest.find(char::is_whitespace) {
                Some(i) => (&rest[..i], rest[i..].trim_start()),
                None => (rest, ""),
            };
            // allow `key = value` with spaces around '='
            let (token, tail) = if !token.contains('=') && tail.starts_with('=') {
                let after = tail[1..].trim_start();
                let (v, t) = match after.find(char::is_whitespace) {
                    Some(i) => (&after[..i], after[i..].trim_start()),
                    None => (after, ""),
                };
                (format!("{token}={v}"), t)
            } else if token.ends_with('=') && !tail.is_empty() && !tail.starts_with('[') {
                let (v, t) = match tail.find(char::is_whitespace) {
                    Some(i) => (&tail[..i], tail[i..].trim_start()),
                    None => (tail, ""),
                };
                (format!("{token}{v}"), t)
            } else {
                (token.to_string(), tail)
            };
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line: ln + 1, msg: format!("expected key=value, got '{token}'") })?;
            let key = if key == "Lbox" { "L" } else { key };
            if value.is_empty() {
                return Err(ConfigError::Syntax { line: ln + 1, msg: format!("empty value for '{key}'") });
            }
            let home = section_of(key).ok_or_else(|| ConfigError::UnknownKey(key.into()))?;
            if let Some(s) = &section {
                if s != home {
                    return Err(ConfigError::WrongSection { key: key.into(), section: s.clone() });
                }
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(ConfigError::Duplicate(key.into()));
            }
            rest = tail;
        }
    }
    Ok(Raw { entries, has_grid })
}

fn get<T: FromStr>(e: &BTreeMap<String, String>, key: &str, default: T) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    match e.get(key) {
        Some(v) => v.parse().map_err(|err| value_err(key, err)),
        None => Ok(default),
    }
}

fn get_opt<T: FromStr>(e: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    e.get(key).map(|v| v.parse().map_err(|err| value_err(key, err))).transpose()
}

fn list<T: FromStr>(e: &BTreeMap<String, String>, key: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    match e.get(key) {
        Some(v) => v.split(',').map(|s| s.trim().parse().map_err(|err| value_err(key, err))).collect(),
        None => Ok(default),
    }
}

fn point(e: &BTreeMap<String, String>, key: &str, n: usize) -> Result<Point, ConfigError> {
    let v: Vec<f64> = list(e, key, Vec::new())?;
    if v.len() != n {
        return Err(value_err(key, format!("expected {n} comma-separated coordinates")));
    }
    let mut p = [0.0; 3];
    p[..n].copy_from_slice(&v);
    Ok(p)
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let Raw { entries: e, has_grid } = tokenize(text)?;
    if !has_grid {
        return Err(ConfigError::MissingGrid);
    }
    let bc: BoundaryCondition = get(&e, "bc", BoundaryCondition::Dirichlet)?;
    let scheme: LaplacianScheme = get(&e, "scheme", LaplacianScheme::FiniteDifference)?;
    let grid = GridConfig { n: get(&e, "n", 1)?, half_width: get(&e, "L", 16.0)?, m: get(&e, "M", 256)?, bc, scheme };
    Grid::new(grid.n, grid.half_width, grid.m, grid.bc).map_err(|err| value_err("grid", err))?;
    let n = grid.n;

    let kind: String = get(&e, "kind", "constant".to_string())?;
    let allowed: &[&str] = match kind.as_str() {
        "zero" => &[],
        "constant" => &["value"],
        "power" => &["coef", "sigma"],
        "well" => &["lo", "hi", "height"],
        other => return Err(value_err("kind", format!("unknown potential kind '{other}'"))),
    };
    for key in ["value", "coef", "sigma", "lo", "hi", "height"] {
        if e.contains_key(key) && !allowed.contains(&key) {
            return Err(value_err(key, format!("not a parameter of potential kind '{kind}'")));
        }
    }
    let potential = match kind.as_str() {
        "zero" => Ok(PotentialSpec::Zero),
        "constant" => PotentialSpec::constant(get(&e, "value", 1.0)?),
        "power" => PotentialSpec::power(get(&e, "coef", 1.0)?, get(&e, "sigma", 2.0)?),
        _ => PotentialSpec::well(point(&e, "lo", n)?, point(&e, "hi", n)?, get(&e, "height", 1.0)?),
    }
    .map_err(|err| value_err("potential", err))?;
    let q: Option<f64> = get_opt(&e, "q")?;
    if let Some(q) = q {
        if !(q > n as f64) {
            return Err(value_err("q", format!("q must exceed n = {n}")));
        }
    }

    let fractional = FractionalConfig {
        alpha: get(&e, "alpha", 0.5)?,
        beta: get(&e, "beta", 1.0)?,
        gamma: get(&e, "gamma", 0.25)?,
        n_list: list(&e, "N", vec![0.0, 1.0, 2.0])?,
        delta_prime: get_opt(&e, "delta_prime")?,
        m: get(&e, "m", 1)?,
    };
    let f = &fractional;
    if !(f.alpha > 0.0 && f.alpha < 1.0) {
        return Err(value_err("alpha", format!("α ∈ (0,1) required (got {})", f.alpha)));
    }
    if !(f.beta > 0.0) {
        return Err(value_err("beta", format!("β > 0 required (got {})", f.beta)));
    }
    if !(f.gamma > 0.0 && f.gamma <= 1.0) {
        return Err(value_err("gamma", format!("γ ∈ (0,1] required (got {})", f.gamma)));
    }
    if f.n_list.is_empty() || f.n_list.iter().any(|v| !(*v >= 0.0)) {
        return Err(value_err("N", "N must be a list of nonnegative numbers"));
    }
    if f.m == 0 {
        return Err(value_err("m", "derivative order must be ≥ 1"));
    }

    let command: Option<Command> = get_opt(&e, "command")?;
    if command == Some(Command::Equiv) {
        let lim = (2.0 * f.alpha).min(2.0 * f.alpha * f.beta);
        if f.gamma >= lim {
            return Err(value_err("gamma", format!("γ < min(2α, 2αβ) = {lim} required (got {})", f.gamma)));
        }
    }
    let times: Vec<f64> = list(&e, "times", vec![0.25, 1.0, 4.0])?;
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) {
        return Err(value_err("times", "times must be positive"));
    }
    let ids: Vec<String> = list(&e, "ids", Vec::new())?;
    for id in &ids {
        id.parse::<subheat_core::estimates::EstimateId>().map_err(|err| value_err("ids", err))?;
    }
    let coarse_m: Option<usize> = get_opt(&e, "coarse_M")?;
    if let Some(c) = coarse_m {
        Grid::new(n, grid.half_width, c, bc).map_err(|err| value_err("coarse_M", err))?;
        if c >= grid.m || !grid.m.is_multiple_of(c) || !(grid.m / c).is_power_of_two() {
            return Err(value_err("coarse_M", "must divide M by a power of two"));
        }
    }
    let time_points: usize = get(&e, "J", 128)?;
    if time_points < 16 {
        return Err(value_err("J", "at least 16 time points required"));
    }

    let mut cfg = RunConfig {
        grid,
        potential,
        q,
        fractional,
        command,
        out: get_opt(&e, "out")?,
        seed: get(&e, "seed", 0)?,
        times,
        ids,
        coarse_m,
        time_points,
        canonical: BTreeMap::new(),
    };
    cfg.refresh_canonical();
    Ok(cfg)
}

impl RunConfig {
    fn refresh_canonical(&mut self) {
        let mut c = BTreeMap::new();
        let g = &self.grid;
        c.insert("grid.n".into(), g.n.to_string());
        c.insert("grid.L".into(), g.half_width.to_string());
        c.insert("grid.M".into(), g.m.to_string());
        c.insert("grid.bc".into(), g.bc.to_string());
        c.insert("grid.scheme".into(), g.scheme.to_string());
        c.insert("potential".into(), format!("{:?}", self.potential).replace(' ', ""));
        c.insert("potential.q".into(), self.q.map_or("2n".into(), |q| q.to_string()));
        let f = &self.fractional;
        c.insert("fractional.alpha".into(), f.alpha.to_string());
        c.insert("fractional.beta".into(), f.beta.to_string());
        c.insert("fractional.gamma".into(), f.gamma.to_string());
        c.insert("fractional.N".into(), join(&f.n_list));
        c.insert("fractional.delta_prime".into(), f.delta_prime.map_or("default".into(), |d| d.to_string()));
        c.insert("fractional.m".into(), f.m.to_string());
        c.insert("run.command".into(), self.command.map_or("none".into(), |c| c.to_string()));
        c.insert("run.seed".into(), self.seed.to_string());
        c.insert("run.times".into(), join(&self.times));
        c.insert("run.ids".into(), if self.ids.is_empty() { "all".into() } else { self.ids.join(",") });
        c.insert("run.coarse_M".into(), self.coarse_m.unwrap_or(self.grid.m / 2).to_string());
        c.insert("run.J".into(), self.time_points.to_string());
        self.canonical = c;
    }

    /// Apply command-line overrides.
    pub fn with_overrides(mut self, command: Command, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, ConfigError> {
        if command == Command::Equiv {
            let f = &self.fractional;
            let lim = (2.0 * f.alpha).min(2.0 * f.alpha * f.beta);
            if f.gamma >= lim {
                return Err(value_err("gamma", format!("γ < min(2α, 2αβ) = {lim} required (got {})", f.gamma)));
            }
        }
        self.command = Some(command);
        if let Some(s) = seed {
            self.seed = s;
        }
        if out.is_some() {
            self.out = out;
        }
        self.refresh_canonical();
        Ok(self)
    }

    /// One-line record of the full configuration (output directory excluded).
    pub fn summary(&self) -> String {
        self.canonical.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

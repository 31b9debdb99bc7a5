//! Run configuration: a flat `key = value` document with dotted keys.
//!
//! ```text
//! # comments start with '#'
//! geometry = cp1
//! profile = random:7:0.3
//! functional.f = exp
//! functional.h = id
//! ```
//!
//! Unknown keys are rejected. [`RunConfig::render`] writes every key in a
//! fixed order; parsing the rendered text gives back the same config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use calabi_core::io::GeometrySelector;
use calabi_core::{FunctionDescriptor, Tolerances, DEFAULT_NODES};

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileSource {
    Round,
    Random { seed: u64, amplitude: f64 },
    File(PathBuf),
}

impl fmt::Display for ProfileSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileSource::Round => write!(f, "round"),
            ProfileSource::Random { seed, amplitude } => write!(f, "random:{seed}:{amplitude}"),
            ProfileSource::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for ProfileSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "round" {
            return Ok(ProfileSource::Round);
        }
        if let Some(rest) = s.strip_prefix("random:") {
            let (seed, amp) = rest
                .split_once(':')
                .ok_or_else(|| format!("expected random:<seed>:<amplitude>, got `{s}`"))?;
            let seed = seed.parse().map_err(|_| format!("bad seed in `{s}`"))?;
            let amplitude: f64 = amp.parse().map_err(|_| format!("bad amplitude in `{s}`"))?;
            if !(amplitude >= 0.0) || !amplitude.is_finite() {
                return Err(format!(
                    "amplitude must be finite and non-negative in `{s}`"
                ));
            }
            return Ok(ProfileSource::Random { seed, amplitude });
        }
        if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err("file profile needs a path".into());
            }
            return Ok(ProfileSource::File(PathBuf::from(p)));
        }
        Err(format!(
            "unknown profile source `{s}` (expected round, random:<seed>:<amplitude> or file:<path>)"
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Shoot,
    Minimize,
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::Shoot => "shoot",
            SolveMethod::Minimize => "minimize",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "shoot" => Ok(SolveMethod::Shoot),
            "minimize" => Ok(SolveMethod::Minimize),
            other => Err(format!(
                "unknown solve method `{other}` (expected shoot or minimize)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: GeometrySelector,
    pub profile: ProfileSource,
    pub f: FunctionDescriptor,
    pub h: FunctionDescriptor,
    /// `∫ φ ωᵐ`; `None` keeps `φ = x`.
    pub target: Option<f64>,
    pub nodes: usize,
    pub tol: Tolerances,
    pub seed: u64,
    pub samples: usize,
    pub amplitude: f64,
    pub max_steps: usize,
    pub method: SolveMethod,
    pub sweep_f: Vec<FunctionDescriptor>,
    pub sweep_h: Vec<FunctionDescriptor>,
    pub alpha_threshold: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: GeometrySelector::Cp1,
            profile: ProfileSource::Round,
            f: FunctionDescriptor::Identity,
            h: FunctionDescriptor::constant(1.0),
            target: None,
            nodes: DEFAULT_NODES,
            tol: Tolerances::default(),
            seed: 0,
            samples: 100,
            amplitude: 0.3,
            max_steps: 10,
            method: SolveMethod::Shoot,
            sweep_f: vec![
                FunctionDescriptor::Exponential,
                FunctionDescriptor::scaled(0.5, FunctionDescriptor::Power(2.0)),
                FunctionDescriptor::Power(3.0),
            ],
            sweep_h: vec![
                FunctionDescriptor::constant(1.0),
                FunctionDescriptor::Identity,
                FunctionDescriptor::Exponential,
            ],
            alpha_threshold: 1e-6,
            out: PathBuf::from("out"),
        }
    }
}

pub const KEYS: [&str; 17] = [
    "geometry",
    "profile",
    "functional.f",
    "functional.h",
    "potential.target",
    "grid.nodes",
    "tol.boundary",
    "tol.affine",
    "run.seed",
    "run.samples",
    "run.amplitude",
    "run.max_steps",
    "solve.method",
    "sweep.f",
    "sweep.h",
    "sweep.alpha_threshold",
    "output.dir",
];

fn parse_descriptor(key: &str, v: &str) -> Result<FunctionDescriptor, String> {
    v.parse().map_err(|e| format!("{key}: {e}"))
}

/// Lists are separated by `;` because descriptors may contain commas.
fn parse_list(key: &str, v: &str) -> Result<Vec<FunctionDescriptor>, String> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_descriptor(key, s))
        .collect()
}

fn render_list(list: &[FunctionDescriptor]) -> String {
    list.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("{key}: cannot parse `{v}`"))
}

fn parse_positive(key: &str, v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(key, v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("{key}: expected a positive number, got `{v}`"))
    }
}

impl RunConfig {
    /// Sets one key. Used by both the file parser and flag overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "geometry" => self.geometry = v.parse().map_err(|e| format!("{key}: {e}"))?,
            "profile" => self.profile = v.parse().map_err(|e| format!("{key}: {e}"))?,
            "functional.f" => self.f = parse_descriptor(key, v)?,
            "functional.h" => self.h = parse_descriptor(key, v)?,
            "potential.target" => {
                self.target = if v == "none" {
                    None
                } else {
                    Some(parse_num(key, v)?)
                }
            }
            "grid.nodes" => self.nodes = parse_num(key, v)?,
            "tol.boundary" => self.tol.boundary = parse_positive(key, v)?,
            "tol.affine" => self.tol.affine = parse_positive(key, v)?,
            "run.seed" => self.seed = parse_num(key, v)?,
            "run.samples" => self.samples = parse_num(key, v)?,
            "run.amplitude" => {
                let a: f64 = parse_num(key, v)?;
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(format!("{key}: expected a non-negative number, got `{v}`"));
                }
                self.amplitude = a;
            }
            "run.max_steps" => self.max_steps = parse_num(key, v)?,
            "solve.method" => self.method = v.parse()?,
            "sweep.f" => self.sweep_f = parse_list(key, v)?,
            "sweep.h" => self.sweep_h = parse_list(key, v)?,
            "sweep.alpha_threshold" => self.alpha_threshold = parse_positive(key, v)?,
            "output.dir" => {
                if v.is_empty() {
                    return Err(format!("{key}: empty path"));
                }
                self.out = PathBuf::from(v)
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "geometry" => self.geometry.to_string(),
            "profile" => self.profile.to_string(),
            "functional.f" => self.f.to_string(),
            "functional.h" => self.h.to_string(),
            "potential.target" => self.target.map_or("none".into(), |t| t.to_string()),
            "grid.nodes" => self.nodes.to_string(),
            "tol.boundary" => self.tol.boundary.to_string(),
            "tol.affine" => self.tol.affine.to_string(),
            "run.seed" => self.seed.to_string(),
            "run.samples" => self.samples.to_string(),
            "run.amplitude" => self.amplitude.to_string(),
            "run.max_steps" => self.max_steps.to_string(),
            "solve.method" => self.method.to_string(),
            "sweep.f" => render_list(&self.sweep_f),
            "sweep.h" => render_list(&self.sweep_h),
            "sweep.alpha_threshold" => self.alpha_threshold.to_string(),
            "output.dir" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// Applies a document on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), String> {
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
            self.set(key, value)
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("every listed key renders"));
            out.push('\n');
        }
        out
    }
}

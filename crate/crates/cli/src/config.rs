//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ffembed::bem::BemParams;
use ffembed::coefficients::{Strategy, DEFAULT_DELTA};
use ffembed::embedding::Thresholds;
use ffembed::geometry::{RationalShape, ShapeOptions};

use crate::CliError;

/// Two-dimensional grids larger than this per side need `grid.large = true`.
pub const MAX_DEFAULT_GRID: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeSource {
    Preset(String),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub shape: ShapeSource,
    pub k: f64,
    pub alpha: f64,
    pub bem: BemParams,
    pub mtilde: Option<usize>,
    pub strategy: u8,
    pub delta: f64,
    pub big_h: f64,
    pub small_h: f64,
    pub n_theta: usize,
    pub n_alpha: usize,
    pub large_grid: bool,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub mtilde_list: Vec<usize>,
    pub delta_list: Vec<f64>,
    pub k_list: Vec<f64>,
    pub shape_list: Vec<String>,
    pub epw_list: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let thresholds = Thresholds::default();
        Self {
            shape: ShapeSource::Preset("square".into()),
            k: 10.0,
            alpha: 5.0 * PI / 4.0,
            bem: BemParams::default(),
            mtilde: None,
            strategy: 2,
            delta: DEFAULT_DELTA,
            big_h: thresholds.big_h,
            small_h: thresholds.small_h,
            n_theta: 200,
            n_alpha: 200,
            large_grid: false,
            output: None,
            seed: 1,
            threads: None,
            mtilde_list: Vec::new(),
            delta_list: vec![1e-12, 1e-8, 1e-4],
            k_list: vec![5.0, 10.0],
            shape_list: vec!["equilateral".into(), "square".into(), "pentagon".into()],
            epw_list: vec![5.0, 10.0, 20.0],
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError> {
    value.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_num(key, s)).collect()
}

/// Accepts plain numbers and multiples of `pi` such as `5pi/4` or `pi/2`.
pub fn parse_angle(key: &str, value: &str) -> Result<f64, CliError> {
    let v = value.trim().replace(' ', "");
    let Some(idx) = v.find("pi") else {
        return parse_num(key, &v);
    };
    let head = &v[..idx];
    let tail = &v[idx + 2..];
    let factor: f64 = match head.trim_end_matches('*') {
        "" => 1.0,
        "-" => -1.0,
        h => parse_num(key, h)?,
    };
    let divisor: f64 = match tail.strip_prefix('/') {
        Some(d) => parse_num(key, d)?,
        None if tail.is_empty() => 1.0,
        None => return Err(CliError::Config(format!("{key}: cannot parse '{value}'"))),
    };
    Ok(factor * PI / divisor)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "shape" => self.shape = ShapeSource::Preset(value.to_string()),
            "geometry_file" => self.shape = ShapeSource::File(PathBuf::from(value)),
            "k" => self.k = parse_num(key, value)?,
            "alpha" => self.alpha = parse_angle(key, value)?,
            "bem.elements_per_wavelength" => self.bem.elements_per_wavelength = parse_num(key, value)?,
            "bem.grading" => self.bem.grading = parse_num(key, value)?,
            "bem.layers" => self.bem.layers = parse_num(key, value)?,
            "coefficients.mtilde" => {
                self.mtilde = if value == "auto" { None } else { Some(parse_num(key, value)?) };
            }
            "coefficients.strategy" => self.strategy = parse_num(key, value)?,
            "coefficients.delta" => self.delta = parse_num(key, value)?,
            "embedding.big_h" => self.big_h = parse_num(key, value)?,
            "embedding.small_h" => self.small_h = parse_num(key, value)?,
            "grid.n_theta" => self.n_theta = parse_num(key, value)?,
            "grid.n_alpha" => self.n_alpha = parse_num(key, value)?,
            "grid.large" => self.large_grid = parse_num(key, value)?,
            "output" => self.output = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = if value == "auto" { None } else { Some(parse_num(key, value)?) },
            "study.mtilde" => self.mtilde_list = parse_list(key, value)?,
            "study.delta" => self.delta_list = parse_list(key, value)?,
            "table.k" => self.k_list = parse_list(key, value)?,
            "table.shapes" => self.shape_list = value.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
            "table.elements_per_wavelength" => self.epw_list = parse_list(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn to_map(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        match &self.shape {
            ShapeSource::Preset(name) => m.insert("shape", name.clone()),
            ShapeSource::File(path) => m.insert("geometry_file", path.display().to_string()),
        };
        m.insert("k", self.k.to_string());
        m.insert("alpha", self.alpha.to_string());
        m.insert("bem.elements_per_wavelength", self.bem.elements_per_wavelength.to_string());
        m.insert("bem.grading", self.bem.grading.to_string());
        m.insert("bem.layers", self.bem.layers.to_string());
        m.insert("coefficients.mtilde", self.mtilde.map_or("auto".into(), |v| v.to_string()));
        m.insert("coefficients.strategy", self.strategy.to_string());
        m.insert("coefficients.delta", self.delta.to_string());
        m.insert("embedding.big_h", self.big_h.to_string());
        m.insert("embedding.small_h", self.small_h.to_string());
        m.insert("grid.n_theta", self.n_theta.to_string());
        m.insert("grid.n_alpha", self.n_alpha.to_string());
        m.insert("grid.large", self.large_grid.to_string());
        m.insert("output", self.output.as_ref().map_or(String::new(), |p| p.display().to_string()));
        m.insert("seed", self.seed.to_string());
        m.insert("threads", self.threads.map_or("auto".into(), |v| v.to_string()));
        m.insert("study.mtilde", join(&self.mtilde_list));
        m.insert("study.delta", join(&self.delta_list));
        m.insert("table.k", join(&self.k_list));
        m.insert("table.shapes", self.shape_list.join(","));
        m.insert("table.elements_per_wavelength", join(&self.epw_list));
        m
    }

    pub fn to_config_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_map() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.k.is_finite() && self.k > 0.0) {
            return bad(format!("k must be positive, got {}", self.k));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(self.bem.elements_per_wavelength >= 2.0) || !(self.bem.grading > 0.0 && self.bem.grading < 1.0) {
            return bad("bem.elements_per_wavelength must be at least 2 and bem.grading in (0, 1)".into());
        }
        if self.strategy != 1 && self.strategy != 2 {
            return bad(format!("coefficients.strategy must be 1 or 2, got {}", self.strategy));
        }
        if !(self.delta >= 0.0) || self.delta_list.iter().any(|d| !(*d >= 0.0)) {
            return bad("δ must be non-negative".into());
        }
        Thresholds::new(self.big_h, self.small_h).map_err(|e| CliError::Config(e.to_string()))?;
        if self.n_theta == 0 || self.n_alpha == 0 {
            return bad("grid sizes must be positive".into());
        }
        if self.mtilde == Some(0) || self.mtilde_list.contains(&0) {
            return bad("M̃ must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if self.k_list.iter().any(|k| !(*k > 0.0)) || self.epw_list.iter().any(|e| !(*e > 0.0)) {
            return bad("table wavenumbers and element densities must be positive".into());
        }
        self.load_shape()?;
        Ok(())
    }

    pub fn load_shape(&self) -> Result<RationalShape, CliError> {
        let shape = match &self.shape {
            ShapeSource::Preset(name) => RationalShape::preset(name)?,
            ShapeSource::File(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                RationalShape::parse(&text, ShapeOptions::default())?
            }
        };
        Ok(shape)
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds { big_h: self.big_h, small_h: self.small_h }
    }

    pub fn strategy_value(&self) -> Strategy {
        if self.strategy == 1 {
            Strategy::One { delta: self.delta }
        } else {
            Strategy::Two
        }
    }
}

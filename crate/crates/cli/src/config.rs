//! Job configuration: a plain `key = value` file, overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use mpi_stereo_core::{AssignMode, Direction};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Classical,
    Network,
    Dibr,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "network" => Ok(Self::Network),
            "dibr" => Ok(Self::Dibr),
            _ => Err(CliError::Config(format!("unknown mode {s:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Classical => "classical",
            Self::Network => "network",
            Self::Dibr => "dibr",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    #[default]
    LeftRightPair,
    Sbs,
}

impl Layout {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "left_right_pair" | "pair" => Ok(Self::LeftRightPair),
            "sbs" => Ok(Self::Sbs),
            _ => Err(CliError::Config(format!("unknown layout {s:?}"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::LeftRightPair => "left_right_pair",
            Self::Sbs => "sbs",
        }
    }
}

pub fn parse_direction(s: &str) -> Result<Direction> {
    match s {
        "left_to_right" => Ok(Direction::LeftToRight),
        "right_to_left" => Ok(Direction::RightToLeft),
        _ => Err(CliError::Config(format!("unknown direction {s:?}"))),
    }
}

pub fn parse_assign(s: &str) -> Result<AssignMode> {
    match s {
        "hard" => Ok(AssignMode::Hard),
        "tent" => Ok(AssignMode::Tent),
        _ => Err(CliError::Config(format!("unknown assignment {s:?}"))),
    }
}

pub const DEFAULT_MAX_DISPARITY_PX: f64 = 16.0;
pub const NETWORK_FACTOR: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct JobConfig {
    pub inputs: Vec<PathBuf>,
    pub depths: Vec<PathBuf>,
    pub weights: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub n_planes: usize,
    pub d_min: f64,
    pub d_max: f64,
    pub max_disparity_px: f64,
    /// `None` picks 4 in network mode and 1 otherwise.
    pub factor: Option<usize>,
    pub mode: Mode,
    pub layout: Layout,
    pub direction: Direction,
    pub assign: AssignMode,
    pub inpaint: bool,
    pub network_h: usize,
    pub network_w: usize,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            depths: Vec::new(),
            weights: None,
            output_dir: PathBuf::from("out"),
            n_planes: 16,
            d_min: 0.0,
            d_max: 1.0,
            max_disparity_px: DEFAULT_MAX_DISPARITY_PX,
            factor: None,
            mode: Mode::Classical,
            layout: Layout::LeftRightPair,
            direction: Direction::LeftToRight,
            assign: AssignMode::Hard,
            inpaint: true,
            network_h: 256,
            network_w: 384,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!(
            "{key}: expected a boolean, got {value:?}"
        ))),
    }
}

fn split_paths(value: &str) -> impl Iterator<Item = PathBuf> + '_ {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, line)| {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                return None;
            }
            Some(match line.split_once('=') {
                Some((k, v)) => Ok((k.trim().to_string(), v.trim().to_string())),
                None => Err(CliError::Config(format!(
                    "line {}: expected key = value",
                    i + 1
                ))),
            })
        })
        .collect()
}

impl JobConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::default();
        let base = path.parent().unwrap_or(Path::new("."));
        for (k, v) in parse_key_values(&text)? {
            cfg.set(&k, &v)?;
        }
        for p in cfg
            .inputs
            .iter_mut()
            .chain(cfg.depths.iter_mut())
            .chain(cfg.weights.iter_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Applies one setting. List keys (`input`, `depth`) append.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "input" => self.inputs.extend(split_paths(value)),
            "depth" => self.depths.extend(split_paths(value)),
            "weights" => self.weights = Some(PathBuf::from(value)),
            "output" => self.output_dir = PathBuf::from(value),
            "n_planes" => self.n_planes = parse_num(key, value)?,
            "d_min" => self.d_min = parse_num(key, value)?,
            "d_max" => self.d_max = parse_num(key, value)?,
            "max_disparity_px" => self.max_disparity_px = parse_num(key, value)?,
            "factor" => self.factor = Some(parse_num(key, value)?),
            "mode" => self.mode = Mode::parse(value)?,
            "layout" => self.layout = Layout::parse(value)?,
            "direction" => self.direction = parse_direction(value)?,
            "assign" => self.assign = parse_assign(value)?,
            "inpaint" => self.inpaint = parse_bool(key, value)?,
            "network_h" => self.network_h = parse_num(key, value)?,
            "network_w" => self.network_w = parse_num(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn factor(&self) -> usize {
        self.factor.unwrap_or(match self.mode {
            Mode::Network => NETWORK_FACTOR,
            _ => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.inputs.is_empty() {
            return bad("no input images".into());
        }
        match self.mode {
            Mode::Classical | Mode::Dibr => {
                if self.weights.is_some() {
                    return bad(format!(
                        "{} mode takes depth maps, not weights",
                        self.mode.as_str()
                    ));
                }
                if self.depths.len() != self.inputs.len() {
                    return Err(CliError::ListMismatch(format!(
                        "{} inputs but {} depth maps",
                        self.inputs.len(),
                        self.depths.len()
                    )));
                }
            }
            Mode::Network => {
                if self.weights.is_none() {
                    return bad("network mode needs a weights archive".into());
                }
                if !self.depths.is_empty() {
                    return bad("network mode takes weights, not depth maps".into());
                }
            }
        }
        if self.n_planes < 2 {
            return bad(format!(
                "n_planes must be at least 2, got {}",
                self.n_planes
            ));
        }
        if !(self.max_disparity_px >= 0.0) || !self.max_disparity_px.is_finite() {
            return bad(format!("max_disparity_px = {}", self.max_disparity_px));
        }
        if !(0.0..1.0).contains(&self.d_min) || !(self.d_min < self.d_max && self.d_max <= 1.0) {
            return bad(format!("disparity range [{}, {}]", self.d_min, self.d_max));
        }
        if self.factor() == 0 {
            return bad("factor must be positive".into());
        }
        Ok(())
    }

    /// Replaces directory entries in `inputs` and `depths` by their sorted image files.
    pub fn expand_directories(&mut self) -> Result<()> {
        self.inputs = expand(&self.inputs)?;
        self.depths = expand(&self.depths)?;
        Ok(())
    }
}

pub const IMAGE_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "pfm"];

/// Sorted supported image files directly inside `dir`.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    out.sort();
    Ok(out)
}

fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(list_images(p)?);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

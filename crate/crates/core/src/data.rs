// SPDX-License-Identifier: Apache-2.0

//! Paired-sample datasets: the plaintext pairs format, min-max normalization
//! to `[-1, 1]`, seeded train/test splits and synthetic additive-noise data.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_same_len, Error, Result};
use crate::seed::{self, Part};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    XcausesY,
    YcausesX,
    Unknown,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::XcausesY => "X->Y",
            Direction::YcausesX => "Y->X",
            Direction::Unknown => "unknown",
        })
    }
}

/// Affine map parameters applied by [`normalize`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePairs {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub id: String,
    pub ground_truth: Direction,
    pub normalization: Option<Normalization>,
    /// `false` for generators whose causal direction cannot be recovered from samples.
    pub identifiable: bool,
}

impl SamplePairs {
    pub fn new(id: impl Into<String>, x: Vec<f64>, y: Vec<f64>, ground_truth: Direction) -> Result<Self> {
        check_same_len(&x, &y)?;
        check_finite(&x)?;
        check_finite(&y)?;
        Ok(Self {
            x,
            y,
            id: id.into(),
            ground_truth,
            normalization: None,
            identifiable: true,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Exchanges the roles of the two variables, flipping the ground truth.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            id: self.id.clone(),
            ground_truth: match self.ground_truth {
                Direction::XcausesY => Direction::YcausesX,
                Direction::YcausesX => Direction::XcausesY,
                Direction::Unknown => Direction::Unknown,
            },
            normalization: self.normalization.map(|n| Normalization {
                x_min: n.y_min,
                x_max: n.y_max,
                y_min: n.x_min,
                y_max: n.x_max,
            }),
            identifiable: self.identifiable,
        }
    }

    fn subset(&self, idx: &[usize], suffix: &str) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            id: format!("{}/{}", self.id, suffix),
            ground_truth: self.ground_truth,
            normalization: self.normalization,
            identifiable: self.identifiable,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub train: SamplePairs,
    pub test: SamplePairs,
    pub seed: u64,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl SplitData {
    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn m(&self) -> usize {
        self.test.len()
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses the two-column pairs format from a string. `path` is only used in errors.
pub fn parse_pairs(text: &str, path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.len() {
            2 => {}
            n if n < 2 => return Err(parse_error(path, lineno, "expected 2 columns, found 1")),
            n => return Err(parse_error(path, lineno, format!("expected 2 columns, found {n}"))),
        }
        let parse = |tok: &str| -> Result<f64> {
            let v: f64 = tok
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("not a number: '{tok}'")))?;
            if !v.is_finite() {
                return Err(parse_error(path, lineno, format!("non-finite value '{tok}'")));
            }
            Ok(v)
        };
        x.push(parse(tokens[0])?);
        y.push(parse(tokens[1])?);
    }
    if x.is_empty() {
        return Err(parse_error(path, 0, "file contains no data rows"));
    }
    Ok((x, y))
}

fn read_truth(path: &Path) -> Result<Direction> {
    let sidecar = path.with_extension("truth");
    if !sidecar.exists() {
        return Ok(Direction::Unknown);
    }
    let text = fs::read_to_string(&sidecar).map_err(|source| Error::Io {
        path: sidecar.clone(),
        source,
    })?;
    match text.trim() {
        "->" => Ok(Direction::XcausesY),
        "<-" => Ok(Direction::YcausesX),
        other => Err(parse_error(
            &sidecar,
            1,
            format!("expected '->' or '<-', found '{other}'"),
        )),
    }
}

/// Loads a whitespace-separated two-column file plus its optional `.truth` sidecar.
pub fn load_pairs_file(path: &Path) -> Result<SamplePairs> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (x, y) = parse_pairs(&text, path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    SamplePairs::new(id, x, y, read_truth(path)?)
}

/// Every `*.txt` pairs file in `dir`, sorted by file name.
pub fn load_pairs_dir(dir: &Path) -> Result<Vec<SamplePairs>> {
    let entries = fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_pairs_file(p)).collect()
}

pub fn write_pairs_file(samples: &SamplePairs, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = fs::File::create(path).map_err(io_err)?;
    for (x, y) in samples.x.iter().zip(&samples.y) {
        writeln!(out, "{x:e} {y:e}").map_err(io_err)?;
    }
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn rescale(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let width = hi - lo;
    values
        .iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                (2.0 * (v - lo) / width - 1.0).clamp(-1.0, 1.0)
            }
        })
        .collect()
}

/// Maps each coordinate affinely so that its minimum goes to -1 and its maximum to +1.
///
/// The extremes are data-dependent and are not privatized.
pub fn normalize(samples: &SamplePairs) -> Result<SamplePairs> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 2, got: 0 });
    }
    let (x_min, x_max) = min_max(&samples.x);
    let (y_min, y_max) = min_max(&samples.y);
    if !(x_max > x_min) {
        return Err(Error::Degenerate("x coordinate is constant"));
    }
    if !(y_max > y_min) {
        return Err(Error::Degenerate("y coordinate is constant"));
    }
    Ok(SamplePairs {
        x: rescale(&samples.x, x_min, x_max),
        y: rescale(&samples.y, y_min, y_max),
        id: samples.id.clone(),
        ground_truth: samples.ground_truth,
        normalization: Some(Normalization {
            x_min,
            x_max,
            y_min,
            y_max,
        }),
        identifiable: samples.identifiable,
    })
}

/// Uniformly random partition into train and test, `m = round(len · test_fraction)`.
pub fn split(samples: &SamplePairs, test_fraction: f64, seed: u64) -> Result<SplitData> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test_fraction", test_fraction, "must lie in (0, 1)"));
    }
    let total = samples.len();
    let m = (total as f64 * test_fraction).round() as usize;
    let n = total.saturating_sub(m);
    if n < 1 || m < 4 {
        return Err(Error::TooFewSamples {
            needed: 5.max((4.0 / test_fraction).ceil() as usize),
            got: total,
        });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut seed::stream(seed, &[Part::Str("split")]));
    let (test_idx, train_idx) = order.split_at(m);
    let (mut test_idx, mut train_idx) = (test_idx.to_vec(), train_idx.to_vec());
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok(SplitData {
        train: samples.subset(&train_idx, "train"),
        test: samples.subset(&test_idx, "test"),
        seed,
        train_indices: train_idx,
        test_indices: test_idx,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Cubic,
    Sigmoid,
    LinearGaussian,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Cubic => "cubic",
            Shape::Sigmoid => "sigmoid",
            Shape::LinearGaussian => "linear-gaussian",
        }
    }
}

impl FromStr for Shape {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cubic" => Ok(Shape::Cubic),
            "sigmoid" => Ok(Shape::Sigmoid),
            "linear-gaussian" | "linear_gaussian" | "lineargaussian" => Ok(Shape::LinearGaussian),
            _ => Err(format!(
                "unknown shape '{s}' (expected cubic, sigmoid or linear-gaussian)"
            )),
        }
    }
}

/// Samples `Y = f(X) + noise` and normalizes both coordinates.
///
/// Cubic and sigmoid use `X ~ U[-1, 1]` with `noise_level · U[-1, 1]` noise.
/// Linear-Gaussian draws a standard bivariate normal with correlation
/// `1/√(1 + s²)`, i.e. `(X + sN)` rescaled to unit variance, whose two
/// directions are exchangeable and so cannot be told apart.
pub fn synth_anm(shape: Shape, n_total: usize, noise_level: f64, seed: u64) -> Result<SamplePairs> {
    if n_total < 8 {
        return Err(Error::TooFewSamples {
            needed: 8,
            got: n_total,
        });
    }
    if !(noise_level >= 0.0 && noise_level.is_finite()) {
        return Err(Error::invalid("noise_level", noise_level, "must be non-negative"));
    }
    let mut rng = seed::stream(seed, &[Part::Str("synth"), Part::Str(shape.name())]);
    let (mut x, mut y) = (Vec::with_capacity(n_total), Vec::with_capacity(n_total));
    for _ in 0..n_total {
        let (xi, yi) = match shape {
            Shape::Cubic => {
                let xi: f64 = rng.gen_range(-1.0..=1.0);
                (xi, xi.powi(3) + noise_level * rng.gen_range(-1.0..=1.0))
            }
            Shape::Sigmoid => {
                let xi: f64 = rng.gen_range(-1.0..=1.0);
                (xi, (3.0 * xi).tanh() + noise_level * rng.gen_range(-1.0..=1.0))
            }
            Shape::LinearGaussian => {
                let xi: f64 = rng.sample(StandardNormal);
                let ni: f64 = rng.sample(StandardNormal);
                (xi, (xi + noise_level * ni) / (1.0 + noise_level * noise_level).sqrt())
            }
        };
        x.push(xi);
        y.push(yi);
    }
    let id = format!("synthetic-{}-{seed}", shape.name());
    let mut raw = SamplePairs::new(id, x, y, Direction::XcausesY)?;
    raw.identifiable = shape != Shape::LinearGaussian;
    normalize(&raw)
}

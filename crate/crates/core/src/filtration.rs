//! Filtration value fields: plain thresholding and image values combined
//! with a height function of the cell coordinates.
//!
//! A field holds `V[p] = Y[p] + g(p)`; its sublevel sets `{p : V[p] < s}`
//! grow with `s`. Coordinates fed to `g` are window-local pixel indices with
//! the origin at cell `(0, .., 0)`, so one spec applied to two windows of the
//! same size lines them up.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ScalarGrid, Shape};

/// Height span drawn for random height functions, in value units.
pub const DEFAULT_SPAN: (f64, f64) = (0.5, 2.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeightFunction {
    /// `g = 0`.
    Plain,
    /// `g(p) = w·p`.
    Linear { w: Vec<f64> },
    /// `g(p) = a |p - q|`.
    Radial { q: Vec<f64>, a: f64 },
    /// `g(p) = (w·p)^2`, i.e. `pᵀ(w wᵀ)p`.
    Quadratic { w: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSpec {
    #[serde(flatten)]
    pub height: HeightFunction,
    #[serde(default)]
    pub frame: bool,
    #[serde(default)]
    pub seed: u64,
}

impl FiltrationSpec {
    pub fn plain() -> Self {
        FiltrationSpec {
            height: HeightFunction::Plain,
            frame: false,
            seed: 0,
        }
    }

    pub fn linear(w: Vec<f64>) -> Self {
        FiltrationSpec {
            height: HeightFunction::Linear { w },
            frame: false,
            seed: 0,
        }
    }

    pub fn radial(q: Vec<f64>, a: f64) -> Self {
        FiltrationSpec {
            height: HeightFunction::Radial { q, a },
            frame: false,
            seed: 0,
        }
    }

    pub fn quadratic(w: Vec<f64>) -> Self {
        FiltrationSpec {
            height: HeightFunction::Quadratic { w },
            frame: false,
            seed: 0,
        }
    }

    pub fn with_frame(mut self, frame: bool) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_plain(&self) -> bool {
        matches!(self.height, HeightFunction::Plain)
    }

    pub fn validate(&self, ndim: usize) -> Result<()> {
        let check_vec = |v: &[f64], name: &str| -> Result<()> {
            if v.len() != ndim {
                return Err(Error::DimensionMismatch {
                    grid: ndim,
                    param: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("{name} must be finite")));
            }
            Ok(())
        };
        match &self.height {
            HeightFunction::Plain => Ok(()),
            HeightFunction::Linear { w } | HeightFunction::Quadratic { w } => {
                check_vec(w, "w")?;
                if w.iter().all(|&x| x == 0.0) {
                    return Err(Error::param("height direction w must be non-zero"));
                }
                Ok(())
            }
            HeightFunction::Radial { q, a } => {
                check_vec(q, "q")?;
                if !(*a > 0.0 && a.is_finite()) {
                    return Err(Error::param(format!("radial scale must be positive, got {a}")));
                }
                Ok(())
            }
        }
    }

    fn eval(&self, coord: &[f64]) -> f64 {
        match &self.height {
            HeightFunction::Plain => 0.0,
            HeightFunction::Linear { w } => dot(w, coord),
            HeightFunction::Radial { q, a } => {
                a * coord
                    .iter()
                    .zip(q)
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            }
            HeightFunction::Quadratic { w } => {
                let h = dot(w, coord);
                h * h
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `g` evaluated at every cell of `shape`.
pub fn height_field(shape: &Shape, spec: &FiltrationSpec) -> Result<ScalarGrid> {
    if spec.is_plain() {
        return Err(Error::param("plain thresholding has no height function"));
    }
    spec.validate(shape.ndim())?;
    let values = (0..shape.len())
        .map(|i| {
            let c: Vec<f64> = shape.coord(i).into_iter().map(|x| x as f64).collect();
            spec.eval(&c)
        })
        .collect();
    ScalarGrid::new(shape.clone(), values)
}

/// Filtration values of one grid, optionally surrounded by a one-cell frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FiltrationField {
    values: ScalarGrid,
    source_shape: Shape,
    frame_value: Option<f64>,
}

impl FiltrationField {
    /// The field values (framed shape when a frame is present).
    pub fn grid(&self) -> &ScalarGrid {
        &self.values
    }

    pub fn shape(&self) -> &Shape {
        self.values.shape()
    }

    pub fn source_shape(&self) -> &Shape {
        &self.source_shape
    }

    pub fn is_framed(&self) -> bool {
        self.frame_value.is_some()
    }

    pub fn frame_value(&self) -> Option<f64> {
        self.frame_value
    }

    /// Source-grid index of a field cell, `None` for frame cells.
    pub fn source_index(&self, field_index: usize) -> Option<usize> {
        if self.frame_value.is_none() {
            return Some(field_index);
        }
        let shape = self.values.shape();
        let mut src = 0;
        let mut rem = field_index;
        let dims = shape.dims();
        let mut coord = [0usize; 3];
        for axis in (0..dims.len()).rev() {
            coord[axis] = rem % dims[axis];
            rem /= dims[axis];
        }
        for (axis, &d) in dims.iter().enumerate() {
            let c = coord[axis];
            if c == 0 || c == d - 1 {
                return None;
            }
            src = src * (d - 2) + (c - 1);
        }
        Some(src)
    }

    /// Field index of a source-grid cell.
    pub fn field_index(&self, source_index: usize) -> usize {
        if self.frame_value.is_none() {
            return source_index;
        }
        let c = self.source_shape.coord(source_index);
        let shifted: Vec<usize> = c.iter().map(|x| x + 1).collect();
        self.values.shape().index(&shifted)
    }
}

/// `V = source + g`, framed at `min(V) - 1` when `spec.frame` is set.
pub fn combine(source: &ScalarGrid, spec: &FiltrationSpec) -> Result<FiltrationField> {
    let values = summed_values(source, spec)?;
    let frame = spec
        .frame
        .then(|| values.iter().copied().fold(f64::INFINITY, f64::min) - 1.0);
    assemble(source, values, frame)
}

/// Like [`combine`] but with an explicit frame value, which must lie strictly
/// below every interior value. Ignores `spec.frame`.
pub fn combine_with_frame(
    source: &ScalarGrid,
    spec: &FiltrationSpec,
    frame_value: Option<f64>,
) -> Result<FiltrationField> {
    let values = summed_values(source, spec)?;
    if let Some(f) = frame_value {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(f < min) || !f.is_finite() {
            return Err(Error::param(format!(
                "frame value {f} must lie strictly below the field minimum {min}"
            )));
        }
    }
    assemble(source, values, frame_value)
}

fn summed_values(source: &ScalarGrid, spec: &FiltrationSpec) -> Result<Vec<f64>> {
    spec.validate(source.shape().ndim())?;
    if spec.is_plain() {
        return Ok(source.values().to_vec());
    }
    let g = height_field(source.shape(), spec)?;
    Ok(source
        .values()
        .iter()
        .zip(g.values())
        .map(|(y, h)| y + h)
        .collect())
}

fn assemble(source: &ScalarGrid, values: Vec<f64>, frame: Option<f64>) -> Result<FiltrationField> {
    let src_shape = source.shape().clone();
    let (lo, hi) = source.value_range();
    let grid = match frame {
        None => ScalarGrid::new(src_shape.clone(), values)?,
        Some(f) => {
            let shape = src_shape.padded(1);
            let mut padded = vec![f; shape.len()];
            for (i, v) in values.into_iter().enumerate() {
                let c: Vec<usize> = src_shape.coord(i).iter().map(|x| x + 1).collect();
                padded[shape.index(&c)] = v;
            }
            ScalarGrid::new(shape, padded)?
        }
    };
    Ok(FiltrationField {
        values: grid.with_value_range(lo, hi),
        source_shape: src_shape,
        frame_value: frame,
    })
}

/// Which height-function family to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightFamily {
    Linear,
    Radial,
    Quadratic,
}

/// Random linear height function for a `window`-sized window of dimension
/// `dim`: direction uniform on the unit sphere, magnitude such that the total
/// height variation across the window is uniform in [`DEFAULT_SPAN`].
pub fn sample_spec<R: Rng + ?Sized>(dim: usize, window: usize, rng: &mut R) -> FiltrationSpec {
    FiltrationSpec {
        height: sample_height(HeightFamily::Linear, dim, window, DEFAULT_SPAN, rng),
        frame: false,
        seed: 0,
    }
}

/// Draws a height function of the given family whose variation over a
/// `window`-sized box is uniform in `span`.
pub fn sample_height<R: Rng + ?Sized>(
    family: HeightFamily,
    dim: usize,
    window: usize,
    span: (f64, f64),
    rng: &mut R,
) -> HeightFunction {
    assert!(window >= 2, "window must hold at least two cells per axis");
    let extent = (window - 1) as f64;
    let target = if span.1 > span.0 {
        rng.random_range(span.0..=span.1)
    } else {
        span.0
    };
    match family {
        HeightFamily::Linear => {
            let u = unit_vector(dim, rng);
            let reach = extent * u.iter().map(|x| x.abs()).sum::<f64>();
            let m = target / reach;
            HeightFunction::Linear {
                w: u.iter().map(|x| x * m).collect(),
            }
        }
        HeightFamily::Radial => {
            let q: Vec<f64> = (0..dim).map(|_| rng.random_range(0.0..=extent)).collect();
            // farthest corner from q
            let far = q
                .iter()
                .map(|&x| x.max(extent - x).powi(2))
                .sum::<f64>()
                .sqrt();
            HeightFunction::Radial {
                a: target / far.max(f64::EPSILON),
                q,
            }
        }
        HeightFamily::Quadratic => {
            let u = unit_vector(dim, rng);
            let lo: f64 = u.iter().map(|x| x.min(0.0) * extent).sum();
            let hi: f64 = u.iter().map(|x| x.max(0.0) * extent).sum();
            let top = (lo * lo).max(hi * hi);
            let bottom = if lo <= 0.0 && hi >= 0.0 {
                0.0
            } else {
                (lo * lo).min(hi * hi)
            };
            let m = (target / (top - bottom)).sqrt();
            HeightFunction::Quadratic {
                w: u.iter().map(|x| x * m).collect(),
            }
        }
    }
}

fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

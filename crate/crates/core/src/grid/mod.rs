//! Scalar grids, binary masks and the truncated distance transform.
//!
//! All grids are 2D or 3D and stored row-major with the last axis varying
//! fastest. Critical-cell tie-breaking in [`crate::cubical`] depends on this
//! linearization, so nothing in the crate should assume another order.

mod edt;
pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use edt::{distance_transform, squared_distance_transform, DEFAULT_TRUNCATION};
pub use io::{load_grid, load_mask, save_grid, save_mask};

/// Extents of a 2D or 3D grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if !(2..=3).contains(&dims.len()) || dims.contains(&0) {
            return Err(Error::InvalidShape(dims));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn ndim(&self) -> usize {
        self.0.len()
    }

    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major strides (last axis has stride 1).
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for axis in (0..self.0.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * self.0[axis + 1];
        }
        strides
    }

    pub fn index(&self, coord: &[usize]) -> usize {
        debug_assert_eq!(coord.len(), self.0.len());
        coord
            .iter()
            .zip(&self.0)
            .fold(0, |acc, (&c, &d)| {
                debug_assert!(c < d);
                acc * d + c
            })
    }

    pub fn coord(&self, mut index: usize) -> Vec<usize> {
        let mut coord = vec![0; self.0.len()];
        for axis in (0..self.0.len()).rev() {
            coord[axis] = index % self.0[axis];
            index /= self.0[axis];
        }
        coord
    }

    pub fn contains(&self, coord: &[isize]) -> bool {
        coord.len() == self.0.len()
            && coord
                .iter()
                .zip(&self.0)
                .all(|(&c, &d)| c >= 0 && (c as usize) < d)
    }

    /// Shape grown by `pad` cells on both sides of every axis.
    pub fn padded(&self, pad: usize) -> Shape {
        Shape(self.0.iter().map(|d| d + 2 * pad).collect())
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;

    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

/// A finite real value per cell of a 2D/3D lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarGrid {
    shape: Shape,
    values: Vec<f64>,
    value_range: (f64, f64),
}

impl ScalarGrid {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::ValueCount {
                expected: shape.len(),
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(ScalarGrid {
            shape,
            values,
            value_range: (0.0, 1.0),
        })
    }

    pub fn from_dims(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        Self::new(Shape::new(dims)?, values)
    }

    pub fn filled(shape: Shape, value: f64) -> Result<Self> {
        let n = shape.len();
        Self::new(shape, vec![value; n])
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.len();
        ScalarGrid {
            shape,
            values: vec![0.0; n],
            value_range: (0.0, 1.0),
        }
    }

    pub fn with_value_range(mut self, lo: f64, hi: f64) -> Self {
        self.value_range = (lo, hi);
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access to the values. Callers must keep them finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, coord: &[usize]) -> f64 {
        self.values[self.shape.index(coord)]
    }

    pub fn set(&mut self, coord: &[usize], value: f64) {
        let i = self.shape.index(coord);
        self.values[i] = value;
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `1 - v` per cell: turns a class-probability map (structures are
    /// maxima) into the sublevel orientation used everywhere else.
    pub fn complement(&self) -> ScalarGrid {
        ScalarGrid {
            shape: self.shape.clone(),
            values: self.values.iter().map(|v| 1.0 - v).collect(),
            value_range: self.value_range,
        }
    }

    /// Copy of the axis-aligned box starting at `origin` with extents `size`.
    pub fn crop(&self, origin: &[usize], size: &[usize]) -> Result<ScalarGrid> {
        let shape = Shape::new(size.to_vec())?;
        check_box(&self.shape, origin, size)?;
        let mut values = Vec::with_capacity(shape.len());
        for local in 0..shape.len() {
            let c = shape.coord(local);
            let global: Vec<usize> = c.iter().zip(origin).map(|(a, b)| a + b).collect();
            values.push(self.values[self.shape.index(&global)]);
        }
        Ok(ScalarGrid {
            shape,
            values,
            value_range: self.value_range,
        })
    }

    pub fn ensure_same_shape(&self, other: &ScalarGrid) -> Result<()> {
        same_shape(&self.shape, &other.shape)
    }
}

/// One boolean per cell; `true` marks structure (foreground).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    shape: Shape,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(shape: Shape, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != shape.len() {
            return Err(Error::ValueCount {
                expected: shape.len(),
                found: bits.len(),
            });
        }
        Ok(BinaryMask { shape, bits })
    }

    pub fn from_dims(dims: &[usize], bits: Vec<bool>) -> Result<Self> {
        Self::new(Shape::new(dims)?, bits)
    }

    pub fn empty(shape: Shape) -> Self {
        let n = shape.len();
        BinaryMask {
            shape,
            bits: vec![false; n],
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn get(&self, coord: &[usize]) -> bool {
        self.bits[self.shape.index(coord)]
    }

    pub fn set(&mut self, coord: &[usize], on: bool) {
        let i = self.shape.index(coord);
        self.bits[i] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Foreground cells become 0, background 1: the sublevel field whose
    /// filtration at any threshold in (0, 1] is exactly the mask.
    pub fn to_field(&self) -> ScalarGrid {
        ScalarGrid {
            shape: self.shape.clone(),
            values: self.bits.iter().map(|&b| if b { 0.0 } else { 1.0 }).collect(),
            value_range: (0.0, 1.0),
        }
    }

    pub fn crop(&self, origin: &[usize], size: &[usize]) -> Result<BinaryMask> {
        let shape = Shape::new(size.to_vec())?;
        check_box(&self.shape, origin, size)?;
        let mut bits = Vec::with_capacity(shape.len());
        for local in 0..shape.len() {
            let c = shape.coord(local);
            let global: Vec<usize> = c.iter().zip(origin).map(|(a, b)| a + b).collect();
            bits.push(self.bits[self.shape.index(&global)]);
        }
        Ok(BinaryMask { shape, bits })
    }
}

/// Foreground iff `value < threshold` (sublevel convention, strict).
pub fn binarize(grid: &ScalarGrid, threshold: f64) -> BinaryMask {
    BinaryMask {
        shape: grid.shape.clone(),
        bits: grid.values.iter().map(|&v| v < threshold).collect(),
    }
}

pub(crate) fn same_shape(a: &Shape, b: &Shape) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch {
            left: a.dims().to_vec(),
            right: b.dims().to_vec(),
        });
    }
    Ok(())
}

fn check_box(shape: &Shape, origin: &[usize], size: &[usize]) -> Result<()> {
    if origin.len() != shape.ndim() || size.len() != shape.ndim() {
        return Err(Error::DimensionMismatch {
            grid: shape.ndim(),
            param: origin.len().max(size.len()),
        });
    }
    let fits = origin
        .iter()
        .zip(size)
        .zip(shape.dims())
        .all(|((&o, &s), &d)| o + s <= d);
    if !fits {
        return Err(Error::param(format!(
            "box at {origin:?} of size {size:?} exceeds shape {:?}",
            shape.dims()
        )));
    }
    Ok(())
}

//! Persistent homology of sublevel sets on cubical complexes.
//!
//! The complex follows the top-cell ("T") construction: each pixel/voxel of a
//! [`FiltrationField`] is a top-dimensional cube and every lower-dimensional
//! face inherits the minimum value of the cubes incident to it. The cell
//! lattice has `2n + 1` cells along an axis of `n` pixels: even coordinates
//! are vertex positions, odd coordinates run through pixel interiors, so
//! pixel `p` sits at lattice coordinate `2p + 1` and a cell's dimension is
//! the number of its odd coordinates.
//!
//! Sublevel sets are closed: the complex at scale `s` holds every cell with
//! value `<= s`, so a diagram point `(b, d)` is alive for `b <= s < d`.

mod export;
mod oracle;
mod persistence;

pub use export::{format_sig9, read_diagram_csv, write_diagram_csv};
pub use oracle::{betti_oracle, ORACLE_MAX_3D_CELLS};
pub use persistence::{compute_persistence, PersistenceDiagram, PersistencePoint};

use crate::filtration::FiltrationField;
use crate::grid::Shape;

const NO_PIXEL: u32 = u32::MAX;

/// Cell lattice of a filtration field with per-cell values and the pixel each
/// cell inherited its value from.
#[derive(Clone, Debug)]
pub struct CubicalComplex {
    field: FiltrationField,
    lattice: Vec<usize>,
    values: Vec<f64>,
    attributed: Vec<u32>,
}

impl CubicalComplex {
    pub fn field(&self) -> &FiltrationField {
        &self.field
    }

    /// Lattice extents, `2n + 1` per axis.
    pub fn lattice_dims(&self) -> &[usize] {
        &self.lattice
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Field index of the top cell whose value `cell` carries.
    pub fn attributed_pixel(&self, cell: usize) -> usize {
        self.attributed[cell] as usize
    }

    pub fn cell_coord(&self, cell: usize) -> Vec<usize> {
        lattice_coord(&self.lattice, cell)
    }

    pub fn cell_dim(&self, cell: usize) -> usize {
        self.cell_coord(cell).iter().filter(|&&c| c % 2 == 1).count()
    }

    /// Lattice index of the top cell of field pixel `pixel`.
    pub fn top_cell(&self, pixel: usize) -> usize {
        let c = self.field.shape().coord(pixel);
        let lc: Vec<usize> = c.iter().map(|x| 2 * x + 1).collect();
        lattice_index(&self.lattice, &lc)
    }

    /// Codimension-one faces of `cell`.
    pub fn boundary(&self, cell: usize) -> Vec<usize> {
        let coord = self.cell_coord(cell);
        let strides = lattice_strides(&self.lattice);
        let mut faces = Vec::with_capacity(2 * coord.len());
        for (axis, &c) in coord.iter().enumerate() {
            if c % 2 == 1 {
                faces.push(cell - strides[axis]);
                faces.push(cell + strides[axis]);
            }
        }
        faces
    }
}

pub(crate) fn lattice_strides(lattice: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; lattice.len()];
    for axis in (0..lattice.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * lattice[axis + 1];
    }
    strides
}

pub(crate) fn lattice_coord(lattice: &[usize], mut index: usize) -> Vec<usize> {
    let mut coord = vec![0; lattice.len()];
    for axis in (0..lattice.len()).rev() {
        coord[axis] = index % lattice[axis];
        index /= lattice[axis];
    }
    coord
}

pub(crate) fn lattice_index(lattice: &[usize], coord: &[usize]) -> usize {
    coord.iter().zip(lattice).fold(0, |acc, (&c, &d)| acc * d + c)
}

/// Builds the T-construction complex of `field`.
///
/// Values spread from pixels to faces one axis at a time; a cell ends up with
/// the minimum over its incident pixels, ties resolved towards the smallest
/// field index.
pub fn build_complex(field: &FiltrationField) -> CubicalComplex {
    let shape: &Shape = field.shape();
    let lattice: Vec<usize> = shape.dims().iter().map(|d| 2 * d + 1).collect();
    let total: usize = lattice.iter().product();
    let strides = lattice_strides(&lattice);
    let mut values = vec![f64::INFINITY; total];
    let mut attributed = vec![NO_PIXEL; total];

    let fvals = field.grid().values();
    for (pixel, &v) in fvals.iter().enumerate() {
        let c = shape.coord(pixel);
        let lc: Vec<usize> = c.iter().map(|x| 2 * x + 1).collect();
        let cell = lattice_index(&lattice, &lc);
        values[cell] = v;
        attributed[cell] = pixel as u32;
    }

    for axis in 0..lattice.len() {
        let n = lattice[axis];
        let stride = strides[axis];
        for cell in 0..total {
            let c = (cell / stride) % n;
            if c % 2 == 1 {
                continue;
            }
            let mut best = (values[cell], attributed[cell]);
            if c > 0 {
                best = better(best, (values[cell - stride], attributed[cell - stride]));
            }
            if c + 1 < n {
                best = better(best, (values[cell + stride], attributed[cell + stride]));
            }
            values[cell] = best.0;
            attributed[cell] = best.1;
        }
    }

    CubicalComplex {
        field: field.clone(),
        lattice,
        values,
        attributed,
    }
}

fn better(a: (f64, u32), b: (f64, u32)) -> (f64, u32) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

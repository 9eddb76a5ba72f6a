use serde::Serialize;

use super::{lattice_coord, lattice_strides, CubicalComplex};
use crate::error::{Error, Result};
use crate::grid::Shape;

const NONE: u32 = u32::MAX;

/// One homology class of a filtration.
///
/// `death` is `f64::INFINITY` for essential classes. Cells are lattice
/// indices of the complex; pixels are linear indices into the source grid
/// (before any frame padding) and are `None` for frame cells.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PersistencePoint {
    pub dim: usize,
    pub birth: f64,
    pub death: f64,
    pub birth_cell: Option<usize>,
    pub death_cell: Option<usize>,
    pub birth_pixel: Option<usize>,
    pub death_pixel: Option<usize>,
}

impl PersistencePoint {
    /// A point with no cell or pixel attribution.
    pub fn bare(dim: usize, birth: f64, death: f64) -> Self {
        PersistencePoint {
            dim,
            birth,
            death,
            birth_cell: None,
            death_cell: None,
            birth_pixel: None,
            death_pixel: None,
        }
    }

    pub fn is_essential(&self) -> bool {
        self.death == f64::INFINITY
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize)]
pub struct PersistenceDiagram {
    points: Vec<PersistencePoint>,
    #[serde(skip)]
    source_shape: Option<Shape>,
    #[serde(skip)]
    lattice: Option<Vec<usize>>,
}

impl PersistenceDiagram {
    pub fn from_points(points: Vec<PersistencePoint>) -> Self {
        PersistenceDiagram {
            points,
            source_shape: None,
            lattice: None,
        }
    }

    pub fn with_source_shape(mut self, shape: Shape) -> Self {
        self.source_shape = Some(shape);
        self
    }

    pub fn points(&self) -> &[PersistencePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn source_shape(&self) -> Option<&Shape> {
        self.source_shape.as_ref()
    }

    /// Indices and points of homological dimension `dim`.
    pub fn of_dim(&self, dim: usize) -> impl Iterator<Item = (usize, &PersistencePoint)> {
        self.points.iter().enumerate().filter(move |(_, p)| p.dim == dim)
    }

    /// Number of `dim`-classes alive at scale `s` (`birth <= s < death`).
    pub fn betti(&self, dim: usize, s: f64) -> usize {
        self.of_dim(dim)
            .filter(|(_, p)| p.birth <= s && s < p.death)
            .count()
    }

    /// Source-grid coordinates of a pixel index.
    pub fn pixel_coord(&self, pixel: usize) -> Option<Vec<usize>> {
        self.source_shape.as_ref().map(|s| s.coord(pixel))
    }

    /// Lattice coordinates of a cell index.
    pub fn cell_coord(&self, cell: usize) -> Option<Vec<usize>> {
        self.lattice.as_ref().map(|l| lattice_coord(l, cell))
    }

    /// Copy holding only points of the listed dimensions.
    pub fn restricted(&self, dims: &[usize]) -> PersistenceDiagram {
        PersistenceDiagram {
            points: self
                .points
                .iter()
                .filter(|p| dims.contains(&p.dim))
                .cloned()
                .collect(),
            source_shape: self.source_shape.clone(),
            lattice: self.lattice.clone(),
        }
    }
}

/// Persistence pairs of the sublevel filtration of `complex` in dimensions
/// `0..=max_dim`.
///
/// Cells enter in increasing value; equal values are ordered by cell
/// dimension (faces first) and then by lattice index. Dimension 0 is
/// computed with a union-find under the elder rule; higher dimensions by
/// reducing the boundary matrix over the two-element field, highest
/// dimension first, clearing columns whose cell already appeared as a pivot.
/// Zero-persistence pairs are dropped. Points come out sorted by dimension,
/// birth, death and birth cell.
pub fn compute_persistence(complex: &CubicalComplex, max_dim: usize) -> Result<PersistenceDiagram> {
    let lattice = complex.lattice_dims();
    let ndim = lattice.len();
    if max_dim > 2 || max_dim > ndim {
        return Err(Error::param(format!(
            "max_dim {max_dim} unsupported for a {ndim}D grid"
        )));
    }
    let n = complex.num_cells();
    let strides = lattice_strides(lattice);
    let values = complex.values();

    let cell_dim: Vec<u8> = (0..n)
        .map(|c| {
            (0..ndim)
                .filter(|&a| ((c / strides[a]) % lattice[a]) % 2 == 1)
                .count() as u8
        })
        .collect();

    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| {
        let (a, b) = (a as usize, b as usize);
        values[a]
            .total_cmp(&values[b])
            .then(cell_dim[a].cmp(&cell_dim[b]))
            .then(a.cmp(&b))
    });
    let mut pos = vec![0u32; n];
    for (p, &c) in order.iter().enumerate() {
        pos[c as usize] = p as u32;
    }

    let faces_of = |cell: usize, out: &mut Vec<u32>| {
        out.clear();
        for a in 0..ndim {
            if ((cell / strides[a]) % lattice[a]) % 2 == 1 {
                out.push(pos[cell - strides[a]]);
                out.push(pos[cell + strides[a]]);
            }
        }
    };

    // indexed by filtration position
    let mut cleared = vec![false; n];
    let mut positive = vec![false; n];
    let mut pairs: Vec<(usize, u32, u32)> = Vec::new();

    let top = ndim.min(max_dim + 1);
    let mut pivot_slot = vec![NONE; n];
    let mut scratch = Vec::new();
    for d in (2..=top).rev() {
        let mut reduced: Vec<Vec<u32>> = Vec::new();
        for p in 0..n {
            let cell = order[p] as usize;
            if cell_dim[cell] as usize != d || cleared[p] {
                continue;
            }
            let mut col = Vec::with_capacity(2 * d);
            faces_of(cell, &mut col);
            col.sort_unstable();
            while let Some(&low) = col.last() {
                let slot = pivot_slot[low as usize];
                if slot == NONE {
                    break;
                }
                xor_into(&mut col, &reduced[slot as usize], &mut scratch);
            }
            match col.last() {
                Some(&low) => {
                    pivot_slot[low as usize] = reduced.len() as u32;
                    cleared[low as usize] = true;
                    pairs.push((d - 1, low, p as u32));
                    reduced.push(col);
                }
                None => positive[p] = true,
            }
        }
    }

    // dimension 0
    let mut parent: Vec<u32> = (0..n as u32).collect();
    let mut edge_faces = Vec::with_capacity(2);
    for p in 0..n {
        let cell = order[p] as usize;
        if cell_dim[cell] != 1 {
            continue;
        }
        faces_of(cell, &mut edge_faces);
        let ru = find(&mut parent, edge_faces[0]);
        let rv = find(&mut parent, edge_faces[1]);
        if ru == rv {
            positive[p] = true;
            continue;
        }
        let (elder, younger) = if ru < rv { (ru, rv) } else { (rv, ru) };
        parent[younger as usize] = elder;
        pairs.push((0, younger, p as u32));
    }

    let field = complex.field();
    let pixel_of = |p: u32| field.source_index(complex.attributed_pixel(order[p as usize] as usize));
    let mut points = Vec::new();
    for &(dim, b, d) in &pairs {
        if dim > max_dim {
            continue;
        }
        let (bc, dc) = (order[b as usize] as usize, order[d as usize] as usize);
        if values[bc] == values[dc] {
            continue;
        }
        points.push(PersistencePoint {
            dim,
            birth: values[bc],
            death: values[dc],
            birth_cell: Some(bc),
            death_cell: Some(dc),
            birth_pixel: pixel_of(b),
            death_pixel: pixel_of(d),
        });
    }
    for p in 0..n {
        let cell = order[p] as usize;
        let dim = cell_dim[cell] as usize;
        if dim > max_dim {
            continue;
        }
        let essential = if dim == 0 {
            parent[p] as usize == p
        } else {
            positive[p] && !cleared[p]
        };
        if essential {
            points.push(PersistencePoint {
                dim,
                birth: values[cell],
                death: f64::INFINITY,
                birth_cell: Some(cell),
                death_cell: None,
                birth_pixel: pixel_of(p as u32),
                death_pixel: None,
            });
        }
    }
    points.sort_by(|a, b| {
        a.dim
            .cmp(&b.dim)
            .then(a.birth.total_cmp(&b.birth))
            .then(a.death.total_cmp(&b.death))
            .then(a.birth_cell.cmp(&b.birth_cell))
    });

    Ok(PersistenceDiagram {
        points,
        source_shape: Some(field.source_shape().clone()),
        lattice: Some(lattice.to_vec()),
    })
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let grand = parent[parent[x as usize] as usize];
        parent[x as usize] = grand;
        x = grand;
    }
    x
}

/// `col ^= other` for sorted index lists.
fn xor_into(col: &mut Vec<u32>, other: &[u32], scratch: &mut Vec<u32>) {
    scratch.clear();
    scratch.reserve(col.len() + other.len());
    let (mut i, mut j) = (0, 0);
    while i < col.len() && j < other.len() {
        match col[i].cmp(&other[j]) {
            std::cmp::Ordering::Less => {
                scratch.push(col[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                scratch.push(other[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    scratch.extend_from_slice(&col[i..]);
    scratch.extend_from_slice(&other[j..]);
    std::mem::swap(col, scratch);
}

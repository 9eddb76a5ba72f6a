//! Brute-force Betti numbers of a single sublevel complex.
//!
//! Shares nothing with the persistence path beyond the lattice convention:
//! cell values are recomputed by scanning incident pixels, 2D uses a
//! union-find plus the Euler characteristic, 3D uses boundary-matrix ranks.

use crate::error::{Error, Result};
use crate::grid::ScalarGrid;

/// Largest 3D grid (in pixels) the rank-based oracle accepts.
pub const ORACLE_MAX_3D_CELLS: usize = 216;

/// `dim`-th Betti number of the closed sublevel complex `{cells : value <= s}`
/// of `field` under the top-cell construction.
pub fn betti_oracle(field: &ScalarGrid, dim: usize, s: f64) -> Result<usize> {
    let dims = field.dims();
    if dims.len() == 3 && field.len() > ORACLE_MAX_3D_CELLS {
        return Err(Error::SizeLimit(format!(
            "3D oracle accepts at most {ORACLE_MAX_3D_CELLS} voxels, got {}",
            field.len()
        )));
    }
    let lattice: Vec<usize> = dims.iter().map(|d| 2 * d + 1).collect();
    let total: usize = lattice.iter().product();
    let strides = super::lattice_strides(&lattice);

    let present: Vec<bool> = (0..total)
        .map(|cell| cell_value(field, &super::lattice_coord(&lattice, cell)) <= s)
        .collect();
    let cell_dim = |cell: usize| -> usize {
        (0..lattice.len())
            .filter(|&a| ((cell / strides[a]) % lattice[a]) % 2 == 1)
            .count()
    };

    if dims.len() == 2 {
        return Ok(match dim {
            0 | 1 => {
                let mut uf: Vec<usize> = (0..total).collect();
                let mut counts = [0i64; 3];
                for cell in 0..total {
                    if !present[cell] {
                        continue;
                    }
                    let k = cell_dim(cell);
                    counts[k] += 1;
                    if k == 1 {
                        let axis = (0..2)
                            .find(|&a| ((cell / strides[a]) % lattice[a]) % 2 == 1)
                            .unwrap();
                        union(&mut uf, cell - strides[axis], cell + strides[axis]);
                    }
                }
                let b0 = (0..total)
                    .filter(|&c| present[c] && cell_dim(c) == 0 && root(&mut uf, c) == c)
                    .count() as i64;
                if dim == 0 {
                    b0 as usize
                } else {
                    let euler = counts[0] - counts[1] + counts[2];
                    (b0 - euler) as usize
                }
            }
            _ => 0,
        });
    }

    // 3D: beta_k = n_k - rank(d_k) - rank(d_{k+1})
    if dim > 3 {
        return Ok(0);
    }
    let mut index_in_dim = vec![usize::MAX; total];
    let mut count = [0usize; 4];
    for cell in 0..total {
        if present[cell] {
            let k = cell_dim(cell);
            index_in_dim[cell] = count[k];
            count[k] += 1;
        }
    }
    let rank_of = |k: usize| -> usize {
        if k == 0 || k > 3 || count[k] == 0 || count[k - 1] == 0 {
            return 0;
        }
        let words = count[k - 1].div_ceil(64);
        let mut columns: Vec<Vec<u64>> = Vec::with_capacity(count[k]);
        for cell in 0..total {
            if !present[cell] || cell_dim(cell) != k {
                continue;
            }
            let mut col = vec![0u64; words];
            for a in 0..3 {
                if ((cell / strides[a]) % lattice[a]) % 2 == 1 {
                    for face in [cell - strides[a], cell + strides[a]] {
                        let r = index_in_dim[face];
                        col[r / 64] ^= 1 << (r % 64);
                    }
                }
            }
            columns.push(col);
        }
        gf2_rank(columns, count[k - 1])
    };
    Ok(count[dim] - rank_of(dim) - rank_of(dim + 1))
}

fn cell_value(field: &ScalarGrid, lattice_coord: &[usize]) -> f64 {
    let dims = field.dims();
    // candidate pixel indices per axis
    let per_axis: Vec<Vec<usize>> = lattice_coord
        .iter()
        .zip(dims)
        .map(|(&c, &n)| {
            if c % 2 == 1 {
                vec![c / 2]
            } else {
                let mut v = Vec::new();
                if c / 2 < n {
                    v.push(c / 2);
                }
                if c > 0 {
                    v.push(c / 2 - 1);
                }
                v
            }
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut coord = vec![0; dims.len()];
    let combos: usize = per_axis.iter().map(Vec::len).product();
    for combo in 0..combos {
        let mut rem = combo;
        for (axis, choices) in per_axis.iter().enumerate() {
            coord[axis] = choices[rem % choices.len()];
            rem /= choices.len();
        }
        best = best.min(field.get(&coord));
    }
    best
}

fn root(uf: &mut [usize], mut x: usize) -> usize {
    while uf[x] != x {
        uf[x] = uf[uf[x]];
        x = uf[x];
    }
    x
}

fn union(uf: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (root(uf, a), root(uf, b));
    if ra != rb {
        uf[ra.max(rb)] = ra.min(rb);
    }
}

fn gf2_rank(mut columns: Vec<Vec<u64>>, rows: usize) -> usize {
    let mut pivot_of_row: Vec<Option<usize>> = vec![None; rows];
    let mut rank = 0;
    for j in 0..columns.len() {
        loop {
            let low = highest_bit(&columns[j]);
            let Some(r) = low else { break };
            match pivot_of_row[r] {
                Some(i) => {
                    let (head, tail) = columns.split_at_mut(j);
                    for (w, o) in tail[0].iter_mut().zip(&head[i]) {
                        *w ^= o;
                    }
                }
                None => {
                    pivot_of_row[r] = Some(j);
                    rank += 1;
                    break;
                }
            }
        }
    }
    rank
}

fn highest_bit(col: &[u64]) -> Option<usize> {
    col.iter()
        .enumerate()
        .rev()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
}

//! Optimal partial matching between persistence diagrams.
//!
//! Matching a point `(b, d)` to `(b', d')` costs `(b - b')² + (d - d')²`;
//! leaving it unmatched costs its squared distance to the diagonal,
//! `(d - b)² / 2`. Matching runs separately per homological dimension.
//! Essential classes (infinite death) only match each other, at cost
//! `(b - b')²`; a surplus essential pays `(b - anchor)²`.

use serde::Serialize;

use crate::cubical::{PersistenceDiagram, PersistencePoint};
use crate::error::{Error, Result};

/// Largest per-dimension point count accepted by [`match_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 8;

pub fn match_cost(p: (f64, f64), q: (f64, f64)) -> f64 {
    let db = p.0 - q.0;
    let dd = p.1 - q.1;
    db * db + dd * dd
}

pub fn diagonal_cost(p: (f64, f64)) -> f64 {
    let gap = p.1 - p.0;
    gap * gap / 2.0
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchOptions {
    /// Homological dimensions that take part.
    pub dims: Vec<usize>,
    /// Reference birth value for essential classes left unmatched.
    pub essential_anchor: f64,
}

impl MatchOptions {
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        MatchOptions {
            dims: dims.into(),
            essential_anchor: 0.5,
        }
    }

    pub fn with_anchor(mut self, anchor: f64) -> Self {
        self.essential_anchor = anchor;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagramMatching {
    /// `(index in D1, index in D2)`.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched1: Vec<usize>,
    pub unmatched2: Vec<usize>,
    pub pair_costs: Vec<f64>,
    pub unmatched1_costs: Vec<f64>,
    pub unmatched2_costs: Vec<f64>,
    pub total_cost: f64,
    /// `(dC/db, dC/dd)` for every point of D1; zero for points outside the
    /// matched dimensions.
    pub gradients: Vec<[f64; 2]>,
    #[serde(skip)]
    anchor: f64,
}

impl DiagramMatching {
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    /// D2 partner of D1 point `i`, if any.
    pub fn partner(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|(a, _)| *a == i).map(|&(_, b)| b)
    }
}

fn point(p: &PersistencePoint) -> (f64, f64) {
    (p.birth, p.death)
}

fn pair_cost(a: &PersistencePoint, b: &PersistencePoint) -> f64 {
    if a.is_essential() {
        let db = a.birth - b.birth;
        db * db
    } else {
        match_cost(point(a), point(b))
    }
}

fn lone_cost(a: &PersistencePoint, anchor: f64) -> f64 {
    if a.is_essential() {
        let db = a.birth - anchor;
        db * db
    } else {
        diagonal_cost(point(a))
    }
}

/// Groups of point indices that are matched against each other: one group of
/// finite points and one of essential points per dimension.
fn groups(d: &PersistenceDiagram, dims: &[usize]) -> Vec<(usize, bool, Vec<usize>)> {
    let mut sorted: Vec<usize> = dims.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = Vec::new();
    for &k in &sorted {
        for essential in [false, true] {
            let idx = d
                .of_dim(k)
                .filter(|(_, p)| p.is_essential() == essential)
                .map(|(i, _)| i)
                .collect();
            out.push((k, essential, idx));
        }
    }
    out
}

/// Optimal matching per dimension via the Hungarian algorithm on the
/// `(n + m) x (n + m)` matrix where each point may instead take a diagonal
/// slot.
pub fn match_diagrams(
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
    opts: &MatchOptions,
) -> DiagramMatching {
    let g1 = groups(d1, &opts.dims);
    let g2 = groups(d2, &opts.dims);
    let mut pairs = Vec::new();
    let mut unmatched1 = Vec::new();
    let mut unmatched2 = Vec::new();
    for ((_, _, a), (_, _, b)) in g1.iter().zip(&g2) {
        let (n, m) = (a.len(), b.len());
        if n + m == 0 {
            continue;
        }
        let size = n + m;
        let mut cost = vec![0.0; size * size];
        for i in 0..n {
            let pi = &d1.points()[a[i]];
            for j in 0..m {
                cost[i * size + j] = pair_cost(pi, &d2.points()[b[j]]);
            }
            let lone = lone_cost(pi, opts.essential_anchor);
            for k in 0..n {
                cost[i * size + m + k] = lone;
            }
        }
        for j in 0..m {
            let lone = lone_cost(&d2.points()[b[j]], opts.essential_anchor);
            for jj in 0..m {
                cost[(n + jj) * size + j] = lone;
            }
        }
        let assignment = hungarian(&cost, size);
        let mut taken = vec![false; m];
        for i in 0..n {
            let col = assignment[i];
            if col < m {
                pairs.push((a[i], b[col]));
                taken[col] = true;
            } else {
                unmatched1.push(a[i]);
            }
        }
        unmatched2.extend((0..m).filter(|&j| !taken[j]).map(|j| b[j]));
    }
    finish(d1, d2, pairs, unmatched1, unmatched2, opts.essential_anchor)
}

/// Exhaustive minimum over all partial matchings; same contract as
/// [`match_diagrams`], limited to [`BRUTEFORCE_LIMIT`] points per group.
pub fn match_bruteforce(
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
    opts: &MatchOptions,
) -> Result<DiagramMatching> {
    let g1 = groups(d1, &opts.dims);
    let g2 = groups(d2, &opts.dims);
    let mut pairs = Vec::new();
    let mut unmatched1 = Vec::new();
    let mut unmatched2 = Vec::new();
    for ((k, _, a), (_, _, b)) in g1.iter().zip(&g2) {
        if a.len() > BRUTEFORCE_LIMIT || b.len() > BRUTEFORCE_LIMIT {
            return Err(Error::SizeLimit(format!(
                "brute-force matching takes at most {BRUTEFORCE_LIMIT} points per dimension, dim {k} has {} and {}",
                a.len(),
                b.len()
            )));
        }
        let pa: Vec<&PersistencePoint> = a.iter().map(|&i| &d1.points()[i]).collect();
        let pb: Vec<&PersistencePoint> = b.iter().map(|&i| &d2.points()[i]).collect();
        let mut best = (f64::INFINITY, vec![usize::MAX; a.len()]);
        let mut current = vec![usize::MAX; a.len()];
        let mut used = vec![false; b.len()];
        enumerate(0, &pa, &pb, opts.essential_anchor, &mut current, &mut used, &mut best);
        let mut taken = vec![false; b.len()];
        for (i, &j) in best.1.iter().enumerate() {
            if j == usize::MAX {
                unmatched1.push(a[i]);
            } else {
                pairs.push((a[i], b[j]));
                taken[j] = true;
            }
        }
        unmatched2.extend((0..b.len()).filter(|&j| !taken[j]).map(|j| b[j]));
    }
    Ok(finish(d1, d2, pairs, unmatched1, unmatched2, opts.essential_anchor))
}

fn enumerate(
    i: usize,
    a: &[&PersistencePoint],
    b: &[&PersistencePoint],
    anchor: f64,
    current: &mut Vec<usize>,
    used: &mut Vec<bool>,
    best: &mut (f64, Vec<usize>),
) {
    if i == a.len() {
        let mut cost = 0.0;
        for (k, &j) in current.iter().enumerate() {
            cost += if j == usize::MAX {
                lone_cost(a[k], anchor)
            } else {
                pair_cost(a[k], b[j])
            };
        }
        for (j, p) in b.iter().enumerate() {
            if !used[j] {
                cost += lone_cost(p, anchor);
            }
        }
        if cost < best.0 {
            *best = (cost, current.clone());
        }
        return;
    }
    current[i] = usize::MAX;
    enumerate(i + 1, a, b, anchor, current, used, best);
    for j in 0..b.len() {
        if !used[j] {
            used[j] = true;
            current[i] = j;
            enumerate(i + 1, a, b, anchor, current, used, best);
            used[j] = false;
        }
    }
    current[i] = usize::MAX;
}

/// Sorts the partition, prices it in a fixed order and attaches gradients.
fn finish(
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
    mut pairs: Vec<(usize, usize)>,
    mut unmatched1: Vec<usize>,
    mut unmatched2: Vec<usize>,
    anchor: f64,
) -> DiagramMatching {
    pairs.sort_unstable();
    unmatched1.sort_unstable();
    unmatched2.sort_unstable();
    let pair_costs: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| pair_cost(&d1.points()[i], &d2.points()[j]))
        .collect();
    let unmatched1_costs: Vec<f64> = unmatched1
        .iter()
        .map(|&i| lone_cost(&d1.points()[i], anchor))
        .collect();
    let unmatched2_costs: Vec<f64> = unmatched2
        .iter()
        .map(|&j| lone_cost(&d2.points()[j], anchor))
        .collect();
    let total_cost = pair_costs.iter().sum::<f64>()
        + unmatched1_costs.iter().sum::<f64>()
        + unmatched2_costs.iter().sum::<f64>();
    let mut matching = DiagramMatching {
        pairs,
        unmatched1,
        unmatched2,
        pair_costs,
        unmatched1_costs,
        unmatched2_costs,
        total_cost,
        gradients: Vec::new(),
        anchor,
    };
    matching.gradients = discrepancy_grad(&matching, d1, d2);
    matching
}

/// `(dC/db, dC/dd)` for each point of D1 under a fixed matching.
///
/// Matched finite points pull towards their partner, `2(b - b*), 2(d - d*)`;
/// unmatched ones towards the diagonal, `(b - d, d - b)`. Essential points
/// only carry a birth derivative.
pub fn discrepancy_grad(
    matching: &DiagramMatching,
    d1: &PersistenceDiagram,
    d2: &PersistenceDiagram,
) -> Vec<[f64; 2]> {
    let mut grads = vec![[0.0, 0.0]; d1.len()];
    for &(i, j) in &matching.pairs {
        let (p, q) = (&d1.points()[i], &d2.points()[j]);
        grads[i] = if p.is_essential() {
            [2.0 * (p.birth - q.birth), 0.0]
        } else {
            [2.0 * (p.birth - q.birth), 2.0 * (p.death - q.death)]
        };
    }
    for &i in &matching.unmatched1 {
        let p = &d1.points()[i];
        grads[i] = if p.is_essential() {
            [2.0 * (p.birth - matching.anchor), 0.0]
        } else {
            [p.birth - p.death, p.death - p.birth]
        };
    }
    grads
}

/// Minimum-cost perfect assignment for a dense `size x size` row-major cost
/// matrix; returns the column of each row.
fn hungarian(cost: &[f64], size: usize) -> Vec<usize> {
    let n = size;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0; n + 1];
    let mut used = vec![false; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[owner[j] - 1] = j - 1;
    }
    assignment
}

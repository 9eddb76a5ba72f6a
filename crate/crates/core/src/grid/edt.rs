use super::{BinaryMask, ScalarGrid, Shape};
use crate::error::{Error, Result};

/// Truncation (in pixels) used when the caller has no better value.
pub const DEFAULT_TRUNCATION: f64 = 20.0;

/// Exact squared Euclidean distance from every cell to the nearest foreground
/// cell, computed axis by axis with the lower envelope of parabolas.
///
/// Returns `None` when the mask has no foreground.
pub fn squared_distance_transform(mask: &BinaryMask) -> Option<Vec<f64>> {
    if mask.count() == 0 {
        return None;
    }
    let mut dist: Vec<f64> = mask
        .bits()
        .iter()
        .map(|&fg| if fg { 0.0 } else { f64::INFINITY })
        .collect();
    separable_pass(mask.shape(), &mut dist);
    Some(dist)
}

/// `min(d, truncation) / truncation` per cell, where `d` is the Euclidean
/// distance to the closest foreground cell. Foreground maps to 0.
pub fn distance_transform(mask: &BinaryMask, truncation: f64) -> Result<ScalarGrid> {
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(Error::param(format!(
            "truncation must be positive and finite, got {truncation}"
        )));
    }
    let sq = squared_distance_transform(mask).ok_or(Error::EmptyMask)?;
    let values = sq
        .into_iter()
        .map(|d2| d2.sqrt().min(truncation) / truncation)
        .collect();
    ScalarGrid::new(mask.shape().clone(), values)
}

fn separable_pass(shape: &Shape, dist: &mut [f64]) {
    let dims = shape.dims();
    let strides = shape.strides();
    let longest = dims.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut sites = Vec::with_capacity(longest);
    let mut bounds = Vec::with_capacity(longest + 1);

    for axis in 0..dims.len() {
        let n = dims[axis];
        let stride = strides[axis];
        let total = shape.len();
        // Every line along `axis` starts at a cell whose `axis` coordinate is 0.
        for start in 0..total {
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for (k, slot) in line[..n].iter_mut().enumerate() {
                *slot = dist[start + k * stride];
            }
            lower_envelope(&line[..n], &mut out[..n], &mut sites, &mut bounds);
            for (k, &v) in out[..n].iter().enumerate() {
                dist[start + k * stride] = v;
            }
        }
    }
}

/// One-dimensional squared distance transform of a sampled function `f`
/// (infinite entries carry no parabola).
fn lower_envelope(f: &[f64], out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            let Some(&v) = sites.last() else {
                sites.push(q);
                bounds.push(f64::NEG_INFINITY);
                break;
            };
            let fv = f[v] + (v * v) as f64;
            let s = (fq - fv) / (2.0 * (q as f64 - v as f64));
            if s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
                continue;
            }
            sites.push(q);
            bounds.push(s);
            break;
        }
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (q, slot) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - sites[k] as f64;
        *slot = d * d + f[sites[k]];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(mask: &BinaryMask) -> Vec<f64> {
        let shape = mask.shape();
        let fg: Vec<Vec<usize>> = (0..shape.len())
            .filter(|&i| mask.bits()[i])
            .map(|i| shape.coord(i))
            .collect();
        (0..shape.len())
            .map(|i| {
                let c = shape.coord(i);
                fg.iter()
                    .map(|f| {
                        f.iter()
                            .zip(&c)
                            .map(|(&a, &b)| {
                                let d = a as f64 - b as f64;
                                d * d
                            })
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn all_foreground_is_zero() {
        let mask = BinaryMask::from_dims(&[4, 5], vec![true; 20]).unwrap();
        let dt = distance_transform(&mask, 20.0).unwrap();
        assert!(dt.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_three_row() {
        let mask = BinaryMask::from_dims(&[1, 3], vec![true, false, false]).unwrap();
        let dt = distance_transform(&mask, 2.0).unwrap();
        assert_eq!(dt.values(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mask = BinaryMask::from_dims(&[3, 3], vec![false; 9]).unwrap();
        assert!(matches!(distance_transform(&mask, 5.0), Err(Error::EmptyMask)));
        assert!(distance_transform(&BinaryMask::from_dims(&[1, 1], vec![true]).unwrap(), 0.0).is_err());
    }

    #[test]
    fn matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..50 {
            let density = rng.random_range(0.02..0.3);
            let bits: Vec<bool> = (0..144).map(|_| rng.random_bool(density)).collect();
            let mut mask = BinaryMask::from_dims(&[12, 12], bits).unwrap();
            if mask.count() == 0 {
                mask.set(&[trial % 12, 5], true);
            }
            assert_eq!(squared_distance_transform(&mask).unwrap(), brute_force(&mask));
        }
    }

    #[test]
    fn matches_brute_force_in_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let mut bits: Vec<bool> = (0..5 * 6 * 7).map(|_| rng.random_bool(0.05)).collect();
            bits[17] = true;
            let mask = BinaryMask::from_dims(&[5, 6, 7], bits).unwrap();
            assert_eq!(squared_distance_transform(&mask).unwrap(), brute_force(&mask));
        }
    }

    #[test]
    fn lipschitz_between_neighbours_and_recovers_foreground() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truncation = 6.0;
        for _ in 0..20 {
            let mut bits: Vec<bool> = (0..400).map(|_| rng.random_bool(0.03)).collect();
            bits[0] = true;
            let mask = BinaryMask::from_dims(&[20, 20], bits).unwrap();
            let dt = distance_transform(&mask, truncation).unwrap();
            for r in 0..20 {
                for c in 0..20 {
                    let v = dt.get(&[r, c]);
                    if c + 1 < 20 {
                        assert!((v - dt.get(&[r, c + 1])).abs() <= 1.0 / truncation + 1e-12);
                    }
                    if r + 1 < 20 {
                        assert!((v - dt.get(&[r + 1, c])).abs() <= 1.0 / truncation + 1e-12);
                    }
                }
            }
            assert_eq!(super::super::binarize(&dt, 1e-9), mask);
        }
    }
}

//! Synthetic road networks, topological error injection and the loss
//! monotonicity experiment.
//!
//! A ground-truth network is a jittered lattice graph inside a boundary
//! rectangle, drawn as 8-connected one-pixel polylines. Errors either cut a
//! disk out of a road (disconnection) or draw a one-pixel segment between two
//! roads (false connection); only edits that change the loop count of the
//! framed mask by exactly one are kept.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtration::HeightFamily;
use crate::grid::{distance_transform, squared_distance_transform, BinaryMask, ScalarGrid, Shape, DEFAULT_TRUNCATION};
use crate::loss::{window_cost, window_origins, window_seeds, FiltrationPolicy, LossConfig};

/// Smallest side length accepted by [`make_synthetic_gt`].
pub const MIN_SYNTH_SIZE: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkParams {
    /// Target distance between neighbouring roads, in pixels.
    pub spacing: f64,
    /// Interior lattice nodes per axis; derived from `spacing` when unset.
    pub interior: Option<usize>,
    /// Distance of the boundary rectangle from the grid edge.
    pub margin: usize,
    /// Node displacement as a fraction of the lattice spacing.
    pub jitter: f64,
    /// Probability of removing an interior edge.
    pub drop_prob: f64,
    /// Edges are only removed while at least this many loops remain.
    pub min_loops: usize,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            spacing: 12.0,
            interior: None,
            margin: 6,
            jitter: 0.25,
            drop_prob: 0.3,
            min_loops: 4,
        }
    }
}

/// Road network mask on a `size x size` grid.
pub fn make_synthetic_gt<R: Rng + ?Sized>(
    size: usize,
    params: &NetworkParams,
    rng: &mut R,
) -> Result<BinaryMask> {
    if size < MIN_SYNTH_SIZE {
        return Err(Error::param(format!(
            "synthetic maps need at least {MIN_SYNTH_SIZE} pixels per side, got {size}"
        )));
    }
    if 2 * params.margin + 8 >= size {
        return Err(Error::param("margin leaves no room for the network"));
    }
    if !(0.0..0.5).contains(&params.jitter) || !(0.0..=1.0).contains(&params.drop_prob) {
        return Err(Error::param("jitter must lie in [0, 0.5) and drop_prob in [0, 1]"));
    }
    let span = (size - 1 - 2 * params.margin) as f64;
    let k = match params.interior {
        Some(k) => k,
        None if params.spacing >= 2.0 => ((span / params.spacing).round() as usize).max(1) - 1,
        None => return Err(Error::param("road spacing must be at least 2 pixels")),
    };
    if 2 * (k + 1) > span as usize {
        return Err(Error::param("too many lattice nodes for the map size"));
    }
    let side = k + 2;
    let spacing = span / (k + 1) as f64;
    let node = |i: usize, j: usize| i * side + j;
    let on_boundary = |i: usize, j: usize| i == 0 || j == 0 || i == k + 1 || j == k + 1;

    let mut pos = vec![[0isize; 2]; side * side];
    for i in 0..side {
        for j in 0..side {
            let mut p = [
                params.margin as f64 + i as f64 * spacing,
                params.margin as f64 + j as f64 * spacing,
            ];
            if !on_boundary(i, j) {
                for x in &mut p {
                    *x += rng.random_range(-params.jitter..=params.jitter) * spacing;
                }
            }
            pos[node(i, j)] = [p[0].round() as isize, p[1].round() as isize];
        }
    }

    let mut edges: Vec<(usize, usize, bool)> = Vec::new();
    for i in 0..side {
        for j in 0..side {
            // edges along the rectangle are never dropped
            if i + 1 < side {
                edges.push((node(i, j), node(i + 1, j), j == 0 || j == k + 1));
            }
            if j + 1 < side {
                edges.push((node(i, j), node(i, j + 1), i == 0 || i == k + 1));
            }
        }
    }
    let mut keep = vec![true; edges.len()];
    let mut order: Vec<usize> = (0..edges.len()).filter(|&e| !edges[e].2).collect();
    order.shuffle(rng);
    let nodes = side * side;
    for e in order {
        if !rng.random_bool(params.drop_prob) {
            continue;
        }
        keep[e] = false;
        let kept = keep.iter().filter(|&&x| x).count();
        let loops = kept as isize - nodes as isize + 1;
        if loops < params.min_loops as isize || !connected(nodes, &edges, &keep) {
            keep[e] = true;
        }
    }

    let shape = Shape::new(vec![size, size])?;
    let mut mask = BinaryMask::empty(shape);
    for (e, &(a, b, _)) in edges.iter().enumerate() {
        if keep[e] {
            for p in line(pos[a], pos[b]) {
                mask.set(&[p[0] as usize, p[1] as usize], true);
            }
        }
    }
    Ok(mask)
}

fn connected(nodes: usize, edges: &[(usize, usize, bool)], keep: &[bool]) -> bool {
    let mut parent: Vec<usize> = (0..nodes).collect();
    fn root(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut components = nodes;
    for (e, &(a, b, _)) in edges.iter().enumerate() {
        if keep[e] {
            let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
    }
    components == 1
}

/// 8-connected digital segment from `a` to `b`, both included.
pub fn line(a: [isize; 2], b: [isize; 2]) -> Vec<[isize; 2]> {
    let (dx, dy) = ((b[0] - a[0]).abs(), -(b[1] - a[1]).abs());
    let (sx, sy) = ((b[0] - a[0]).signum(), (b[1] - a[1]).signum());
    let mut err = dx + dy;
    let mut p = a;
    let mut out = vec![p];
    while p != b {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            p[0] += sx;
        }
        if e2 <= dx {
            err += dx;
            p[1] += sy;
        }
        out.push(p);
    }
    out
}

/// Loop count of a 2D `mask` inside a one-pixel foreground frame.
///
/// Every background region is then enclosed, and in the plane the loops of
/// the foreground correspond one-to-one to the 4-connected background
/// regions it encloses.
pub fn framed_loops(mask: &BinaryMask) -> Result<usize> {
    let dims = mask.dims();
    if dims.len() != 2 {
        return Err(Error::param("loop counting by flood fill needs a 2D mask"));
    }
    let (h, w) = (dims[0], dims[1]);
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut stack = Vec::new();
    let mut regions = 0;
    for start in 0..bits.len() {
        if bits[start] || seen[start] {
            continue;
        }
        regions += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(p) = stack.pop() {
            let (i, j) = (p / w, p % w);
            let mut visit = |q: usize| {
                if !bits[q] && !seen[q] {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                visit(p - w);
            }
            if i + 1 < h {
                visit(p + w);
            }
            if j > 0 {
                visit(p - 1);
            }
            if j + 1 < w {
                visit(p + 1);
            }
        }
    }
    Ok(regions)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Disconnection,
    FalseConnection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorEvent {
    Disconnection { center: [usize; 2], radius: f64 },
    FalseConnection { from: [usize; 2], to: [usize; 2], width: usize },
}

impl ErrorEvent {
    pub fn kind(&self) -> ErrorKind {
        match self {
            ErrorEvent::Disconnection { .. } => ErrorKind::Disconnection,
            ErrorEvent::FalseConnection { .. } => ErrorKind::FalseConnection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectParams {
    pub radius: f64,
    pub width: usize,
    /// Length range of a false-connection segment, in pixels.
    pub min_length: usize,
    pub max_length: usize,
    pub truncation: f64,
    /// Geometry redraws before giving up.
    pub max_attempts: usize,
}

impl Default for InjectParams {
    fn default() -> Self {
        InjectParams {
            radius: 3.0,
            width: 1,
            min_length: 4,
            max_length: 40,
            truncation: DEFAULT_TRUNCATION,
            max_attempts: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub dmap: ScalarGrid,
    pub mask: BinaryMask,
    pub event: ErrorEvent,
}

/// Removes the disk of `radius` around `center` from the mask and updates
/// the distance map around it.
pub fn disconnect(
    dmap: &ScalarGrid,
    mask: &BinaryMask,
    center: [usize; 2],
    radius: f64,
    truncation: f64,
) -> Result<(ScalarGrid, BinaryMask)> {
    let (mask, lo, hi) = cut_disk(mask, center, radius);
    Ok((refresh(dmap, &mask, lo, hi, truncation)?, mask))
}

/// Draws the digital segment `from`-`to` into the mask (thickened to `width`
/// pixels) and updates the distance map around it.
pub fn connect(
    dmap: &ScalarGrid,
    mask: &BinaryMask,
    from: [usize; 2],
    to: [usize; 2],
    width: usize,
    truncation: f64,
) -> Result<(ScalarGrid, BinaryMask)> {
    let (mask, lo, hi) = stamp_segment(mask, from, to, width);
    Ok((refresh(dmap, &mask, lo, hi, truncation)?, mask))
}

type Edit = (BinaryMask, [isize; 2], [isize; 2]);

fn cut_disk(mask: &BinaryMask, center: [usize; 2], radius: f64) -> Edit {
    let mut mask = mask.clone();
    let r = radius.ceil() as isize;
    let (c0, c1) = (center[0] as isize, center[1] as isize);
    for i in c0 - r..=c0 + r {
        for j in c1 - r..=c1 + r {
            let (di, dj) = ((i - c0) as f64, (j - c1) as f64);
            if mask.shape().contains(&[i, j]) && di * di + dj * dj <= radius * radius {
                mask.set(&[i as usize, j as usize], false);
            }
        }
    }
    (mask, [c0 - r, c1 - r], [c0 + r, c1 + r])
}

fn stamp_segment(mask: &BinaryMask, from: [usize; 2], to: [usize; 2], width: usize) -> Edit {
    let mut mask = mask.clone();
    let seg = line([from[0] as isize, from[1] as isize], [to[0] as isize, to[1] as isize]);
    let extra = width.saturating_sub(1) as isize;
    let mut lo = [isize::MAX; 2];
    let mut hi = [isize::MIN; 2];
    for p in &seg {
        for di in 0..=extra {
            for dj in 0..=extra {
                let q = [p[0] + di, p[1] + dj];
                if mask.shape().contains(&q) {
                    mask.set(&[q[0] as usize, q[1] as usize], true);
                    for a in 0..2 {
                        lo[a] = lo[a].min(q[a]);
                        hi[a] = hi[a].max(q[a]);
                    }
                }
            }
        }
    }
    (mask, lo, hi)
}

/// Recomputes the truncated distance map of `mask` for every pixel within
/// `truncation` of the edited box `lo..=hi`. Only foreground within twice the
/// truncation can be the nearest one inside the band, so a crop of that size
/// gives exact values.
fn refresh(
    dmap: &ScalarGrid,
    mask: &BinaryMask,
    lo: [isize; 2],
    hi: [isize; 2],
    truncation: f64,
) -> Result<ScalarGrid> {
    let dims = mask.dims();
    let t = truncation.ceil() as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let band_lo = [clamp(lo[0] - t, dims[0]), clamp(lo[1] - t, dims[1])];
    let band_hi = [clamp(hi[0] + t, dims[0]), clamp(hi[1] + t, dims[1])];
    let crop_lo = [clamp(lo[0] - 2 * t, dims[0]), clamp(lo[1] - 2 * t, dims[1])];
    let crop_hi = [clamp(hi[0] + 2 * t, dims[0]), clamp(hi[1] + 2 * t, dims[1])];
    let size = [crop_hi[0] - crop_lo[0] + 1, crop_hi[1] - crop_lo[1] + 1];
    let crop = mask.crop(&crop_lo, &size)?;
    let sq = squared_distance_transform(&crop);
    let mut out = dmap.clone();
    for i in band_lo[0]..=band_hi[0] {
        for j in band_lo[1]..=band_hi[1] {
            let local = (i - crop_lo[0]) * size[1] + (j - crop_lo[1]);
            let d = match &sq {
                Some(sq) => sq[local].sqrt(),
                None => f64::INFINITY,
            };
            out.set(&[i, j], d.min(truncation) / truncation);
        }
    }
    Ok(out)
}

/// Adds one random topological error: the kind is drawn with equal
/// probability, then geometry is redrawn until the framed loop count changes
/// by exactly one.
pub fn inject_error<R: Rng + ?Sized>(
    dmap: &ScalarGrid,
    mask: &BinaryMask,
    params: &InjectParams,
    rng: &mut R,
) -> Result<Injection> {
    if mask.shape().ndim() != 2 {
        return Err(Error::param("error injection works on 2D maps"));
    }
    let roads: Vec<usize> = (0..mask.bits().len()).filter(|&i| mask.bits()[i]).collect();
    if roads.is_empty() {
        return Err(Error::NoEligiblePixel);
    }
    let before = framed_loops(mask)? as isize;
    let drawn = if rng.random_bool(0.5) {
        ErrorKind::Disconnection
    } else {
        ErrorKind::FalseConnection
    };
    let other = match drawn {
        ErrorKind::Disconnection => ErrorKind::FalseConnection,
        ErrorKind::FalseConnection => ErrorKind::Disconnection,
    };
    let dims = mask.dims().to_vec();
    // the other kind only steps in when the drawn one is impossible, e.g. a
    // disconnection once every loop is already broken
    for kind in [drawn, other] {
        for _ in 0..params.max_attempts {
            let start = roads[rng.random_range(0..roads.len())];
            let a = [start / dims[1], start % dims[1]];
            let (edited, lo, hi, event) = match kind {
                ErrorKind::Disconnection => {
                    let (m, lo, hi) = cut_disk(mask, a, params.radius);
                    (m, lo, hi, ErrorEvent::Disconnection { center: a, radius: params.radius })
                }
                ErrorKind::FalseConnection => {
                    let Some(b) = partner(mask, a, params, rng) else { continue };
                    let (m, lo, hi) = stamp_segment(mask, a, b, params.width);
                    (m, lo, hi, ErrorEvent::FalseConnection { from: a, to: b, width: params.width })
                }
            };
            let after = framed_loops(&edited)? as isize;
            if (after - before).abs() == 1 {
                let dmap = refresh(dmap, &edited, lo, hi, params.truncation)?;
                return Ok(Injection { dmap, mask: edited, event });
            }
        }
    }
    Err(Error::NoEligiblePixel)
}

/// First road pixel hit by a random ray from `a` after it has crossed
/// background, within the configured length range.
fn partner<R: Rng + ?Sized>(
    mask: &BinaryMask,
    a: [usize; 2],
    params: &InjectParams,
    rng: &mut R,
) -> Option<[usize; 2]> {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let far = [
        a[0] as f64 + params.max_length as f64 * angle.cos(),
        a[1] as f64 + params.max_length as f64 * angle.sin(),
    ];
    let ray = line(
        [a[0] as isize, a[1] as isize],
        [far[0].round() as isize, far[1].round() as isize],
    );
    let mut left_road = false;
    for p in ray.into_iter().skip(1) {
        if !mask.shape().contains(&p) {
            return None;
        }
        let q = [p[0] as usize, p[1] as usize];
        let on = mask.get(&q);
        if !on {
            left_road = true;
        } else if left_road {
            let dx = q[0] as f64 - a[0] as f64;
            let dy = q[1] as f64 - a[1] as f64;
            let len = (dx * dx + dy * dy).sqrt();
            return (len >= params.min_length as f64).then_some(q);
        }
    }
    None
}

/// A filtration family compared in the experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindSpec {
    pub name: String,
    pub policy: FiltrationPolicy,
}

impl KindSpec {
    pub fn plain() -> Self {
        KindSpec {
            name: "plain".into(),
            policy: FiltrationPolicy::plain(true),
        }
    }

    pub fn random_linear() -> Self {
        KindSpec {
            name: "random-linear".into(),
            policy: FiltrationPolicy::random(HeightFamily::Linear, true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MonotonicityConfig {
    pub n_errors: usize,
    /// Trials per ground-truth map.
    pub n_trials: usize,
    pub kinds: Vec<KindSpec>,
    pub loss: LossConfig,
    pub inject: InjectParams,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        MonotonicityConfig {
            n_errors: 30,
            n_trials: 10,
            kinds: vec![KindSpec::plain(), KindSpec::random_linear()],
            loss: LossConfig::default(),
            inject: InjectParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub gt_index: usize,
    pub seed: u64,
    /// Seed of the loss evaluations shared by every step of the trial.
    pub eval_seed: u64,
    pub events: Vec<ErrorEvent>,
    /// `deltas[k][e]`: change of the loss of kind `k` caused by error `e`.
    pub deltas: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindSummary {
    pub name: String,
    pub p_decrease: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub kinds: Vec<KindSummary>,
    pub trials: Vec<TrialRecord>,
}

impl MonotonicityReport {
    /// `kind,trial,step,delta` rows of every recorded loss change.
    pub fn deltas_csv(&self) -> String {
        let mut out = String::from("kind,trial,step,delta\n");
        for (k, summary) in self.kinds.iter().enumerate() {
            for (t, trial) in self.trials.iter().enumerate() {
                for (e, d) in trial.deltas[k].iter().enumerate() {
                    out.push_str(&format!(
                        "{},{},{},{}\n",
                        summary.name,
                        t,
                        e + 1,
                        crate::cubical::format_sig9(*d)
                    ));
                }
            }
        }
        out
    }
}

/// Injects `n_errors` errors one after another into each ground-truth map,
/// `n_trials` times per map, and records how the windowed loss of every
/// filtration kind changes after each error.
///
/// Trial seeds are drawn from `rng` in order (map-major). Within a trial the
/// loss of every step is evaluated with the same seed, so the windows of all
/// steps share their sampled height functions.
pub fn monotonicity_experiment<R: Rng + ?Sized>(
    gt_masks: &[BinaryMask],
    cfg: &MonotonicityConfig,
    rng: &mut R,
) -> Result<MonotonicityReport> {
    if cfg.n_errors == 0 || cfg.n_trials == 0 {
        return Err(Error::param("n_errors and n_trials must be at least 1"));
    }
    if gt_masks.is_empty() || cfg.kinds.is_empty() {
        return Err(Error::param("need at least one ground-truth map and one filtration kind"));
    }
    let jobs: Vec<(usize, u64)> = (0..gt_masks.len())
        .flat_map(|g| (0..cfg.n_trials).map(move |_| g))
        .map(|g| (g, rng.random()))
        .collect();
    let dmaps: Vec<ScalarGrid> = gt_masks
        .iter()
        .map(|m| distance_transform(m, cfg.inject.truncation))
        .collect::<Result<_>>()?;

    let trials: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(g, seed)| run_trial(&gt_masks[g], &dmaps[g], g, seed, cfg))
        .collect();
    let trials: Vec<TrialRecord> = trials.into_iter().collect::<Result<_>>()?;

    let kinds = cfg
        .kinds
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let all: Vec<f64> = trials.iter().flat_map(|t| t.deltas[k].iter().copied()).collect();
            KindSummary {
                name: spec.name.clone(),
                p_decrease: all.iter().filter(|&&d| d < 0.0).count() as f64 / all.len() as f64,
                samples: all.len(),
            }
        })
        .collect();
    Ok(MonotonicityReport { kinds, trials })
}

fn run_trial(
    gt_mask: &BinaryMask,
    gt: &ScalarGrid,
    gt_index: usize,
    seed: u64,
    cfg: &MonotonicityConfig,
) -> Result<TrialRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval_seed: u64 = rng.random();
    cfg.loss.validate()?;
    let origins = window_origins(gt.shape(), cfg.loss.window, cfg.loss.stride)?;
    let seeds = window_seeds(origins.len(), &mut ChaCha8Rng::seed_from_u64(eval_seed));
    let losses: Vec<LossConfig> = cfg
        .kinds
        .iter()
        .map(|k| LossConfig {
            filtration: k.policy.clone(),
            ..cfg.loss.clone()
        })
        .collect();
    let size = vec![cfg.loss.window; gt.shape().ndim()];

    // per kind and window; only windows the error touched are re-evaluated
    let mut costs: Vec<Vec<f64>> = losses
        .iter()
        .map(|l| {
            origins
                .iter()
                .zip(&seeds)
                .map(|(o, &s)| window_cost(gt, gt, o, l, s))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;
    let mut previous: Vec<f64> = costs.iter().map(|c| c.iter().sum()).collect();
    let mut dmap = gt.clone();
    let mut mask = gt_mask.clone();
    let mut events = Vec::with_capacity(cfg.n_errors);
    let mut deltas = vec![Vec::with_capacity(cfg.n_errors); cfg.kinds.len()];
    for _ in 0..cfg.n_errors {
        let inj = inject_error(&dmap, &mask, &cfg.inject, &mut rng)?;
        let touched: Vec<bool> = origins
            .iter()
            .map(|o| Ok(dmap.crop(o, &size)? != inj.dmap.crop(o, &size)?))
            .collect::<Result<_>>()?;
        dmap = inj.dmap;
        mask = inj.mask;
        events.push(inj.event);
        for (k, loss) in losses.iter().enumerate() {
            for (w, o) in origins.iter().enumerate() {
                if touched[w] {
                    costs[k][w] = window_cost(&dmap, gt, o, loss, seeds[w])?;
                }
            }
            let c: f64 = costs[k].iter().sum();
            deltas[k].push(c - previous[k]);
            previous[k] = c;
        }
    }
    Ok(TrialRecord {
        gt_index,
        seed,
        eval_seed,
        events,
        deltas,
    })
}

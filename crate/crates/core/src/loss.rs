//! Windowed topological loss `L_tot = L + alpha * C`.
//!
//! The prediction and ground truth are tiled into windows. Each window draws
//! one filtration spec, applies it to both crops, and adds the matching cost
//! between the two persistence diagrams to `C`. The gradient of a matched or
//! unmatched point lands on the pixels its birth and death values came from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cubical::{build_complex, compute_persistence};
use crate::diagram::{match_diagrams, MatchOptions};
use crate::error::{Error, Result};
use crate::filtration::{combine_with_frame, sample_height, FiltrationSpec, HeightFamily, DEFAULT_SPAN};
use crate::grid::{binarize, BinaryMask, ScalarGrid, Shape};
use crate::metrics::{betti_error, BettiConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseLoss {
    /// Mean squared error between the maps.
    #[default]
    Mse,
    /// Binary cross-entropy; the ground truth must be a 0/1 map.
    CrossEntropy,
}

/// How each window picks its filtration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "lowercase")]
pub enum FiltrationPolicy {
    /// The same spec in every window.
    Fixed { spec: FiltrationSpec },
    /// A fresh height function of `family` per window.
    Random { family: HeightFamily, frame: bool },
}

impl FiltrationPolicy {
    pub fn plain(frame: bool) -> Self {
        FiltrationPolicy::Fixed {
            spec: FiltrationSpec::plain().with_frame(frame),
        }
    }

    pub fn random(family: HeightFamily, frame: bool) -> Self {
        FiltrationPolicy::Random { family, frame }
    }

    fn draw(&self, ndim: usize, window: usize, seed: u64) -> FiltrationSpec {
        match self {
            FiltrationPolicy::Fixed { spec } => spec.clone(),
            FiltrationPolicy::Random { family, frame } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                FiltrationSpec {
                    height: sample_height(*family, ndim, window.max(2), DEFAULT_SPAN, &mut rng),
                    frame: *frame,
                    seed,
                }
            }
        }
    }
}

impl Default for FiltrationPolicy {
    fn default() -> Self {
        FiltrationPolicy::random(HeightFamily::Linear, true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub alpha: f64,
    pub window: usize,
    pub stride: usize,
    pub dims: Vec<usize>,
    pub filtration: FiltrationPolicy,
    pub base_loss: BaseLoss,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.01,
            window: 64,
            stride: 64,
            dims: vec![1],
            filtration: FiltrationPolicy::default(),
            base_loss: BaseLoss::Mse,
        }
    }
}

impl LossConfig {
    /// Sets the window and a matching non-overlapping stride.
    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self.stride = window;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(Error::param("window and stride must be positive"));
        }
        if self.stride > self.window {
            return Err(Error::param(format!(
                "stride {} exceeds window {}",
                self.stride, self.window
            )));
        }
        if self.dims.is_empty() {
            return Err(Error::param("at least one homology dimension is required"));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d > 2) {
            return Err(Error::param(format!("homology dimension {d} is not supported")));
        }
        Ok(())
    }
}

/// What one window contributed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowRecord {
    pub origin: Vec<usize>,
    pub spec: FiltrationSpec,
    pub cost: f64,
    pub pred_points: usize,
    pub gt_points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopoLoss {
    pub value: f64,
    pub gradient: ScalarGrid,
    pub windows: Vec<WindowRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub total: f64,
    pub base: f64,
    pub topo: f64,
    pub alpha: f64,
    #[serde(skip)]
    pub gradient: ScalarGrid,
    pub windows: Vec<WindowRecord>,
}

/// Window origins covering `shape`: steps of `stride` along each axis, with a
/// final window flush against the far edge when the steps fall short.
pub fn window_origins(shape: &Shape, window: usize, stride: usize) -> Result<Vec<Vec<usize>>> {
    if shape.dims().iter().any(|&n| n < window) {
        return Err(Error::WindowTooLarge {
            window,
            shape: shape.dims().to_vec(),
        });
    }
    let per_axis: Vec<Vec<usize>> = shape
        .dims()
        .iter()
        .map(|&n| {
            let mut starts: Vec<usize> = (0..=n - window).step_by(stride.max(1)).collect();
            if *starts.last().unwrap() + window < n {
                starts.push(n - window);
            }
            starts
        })
        .collect();
    let mut origins = vec![Vec::new()];
    for starts in &per_axis {
        origins = origins
            .into_iter()
            .flat_map(|o| {
                starts.iter().map(move |&s| {
                    let mut next = o.clone();
                    next.push(s);
                    next
                })
            })
            .collect();
    }
    Ok(origins)
}

/// Windowed matching cost `C(pred, gt)` and its gradient with respect to
/// `pred`. Window specs are seeded in window order from `rng`, so the result
/// does not depend on how many threads evaluate the windows.
pub fn topo_loss<R: Rng + ?Sized>(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<TopoLoss> {
    cfg.validate()?;
    pred.ensure_same_shape(gt)?;
    let (pred, gt, flip) = match cfg.base_loss {
        BaseLoss::Mse => (pred.clone(), gt.clone(), 1.0),
        // probabilities: foreground is high, so filter the complement
        BaseLoss::CrossEntropy => (pred.complement(), gt.complement(), -1.0),
    };
    let shape = pred.shape().clone();
    let origins = window_origins(&shape, cfg.window, cfg.stride)?;
    let seeds = window_seeds(origins.len(), rng);
    let results: Vec<Result<WindowResult>> = origins
        .par_iter()
        .zip(&seeds)
        .map(|(origin, &seed)| window_loss(&pred, &gt, origin, cfg, seed))
        .collect();

    let mut gradient = ScalarGrid::zeros(shape.clone());
    let mut value = 0.0;
    let mut windows = Vec::with_capacity(origins.len());
    for (origin, result) in origins.iter().zip(results) {
        let w = result?;
        value += w.record.cost;
        let size = vec![cfg.window; shape.ndim()];
        let local = Shape::new(size)?;
        for (pixel, g) in w.grad {
            let c: Vec<usize> = local
                .coord(pixel)
                .iter()
                .zip(origin)
                .map(|(a, b)| a + b)
                .collect();
            let idx = shape.index(&c);
            gradient.values_mut()[idx] += flip * g;
        }
        windows.push(w.record);
    }
    Ok(TopoLoss {
        value,
        gradient,
        windows,
    })
}

/// One spec seed per window, in window order.
pub(crate) fn window_seeds<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<u64> {
    (0..count).map(|_| rng.random()).collect()
}

/// Matching cost of one window, as summed by [`topo_loss`].
pub(crate) fn window_cost(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    origin: &[usize],
    cfg: &LossConfig,
    seed: u64,
) -> Result<f64> {
    Ok(window_loss(pred, gt, origin, cfg, seed)?.record.cost)
}

struct WindowResult {
    record: WindowRecord,
    grad: Vec<(usize, f64)>,
}

fn window_loss(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    origin: &[usize],
    cfg: &LossConfig,
    seed: u64,
) -> Result<WindowResult> {
    let ndim = pred.shape().ndim();
    let size = vec![cfg.window; ndim];
    let p = pred.crop(origin, &size)?;
    let g = gt.crop(origin, &size)?;
    let spec = cfg.filtration.draw(ndim, cfg.window, seed);

    let fp = combine_with_frame(&p, &spec, None)?;
    let fg = combine_with_frame(&g, &spec, None)?;
    let lo = fp.grid().min().min(fg.grid().min());
    let hi = fp.grid().max().max(fg.grid().max());
    // one frame value for both windows, stable under small changes of pred
    let frame = spec.frame.then(|| lo.floor() - 1.0);
    let (fp, fg) = match frame {
        Some(_) => (
            combine_with_frame(&p, &spec, frame)?,
            combine_with_frame(&g, &spec, frame)?,
        ),
        None => (fp, fg),
    };

    let max_dim = *cfg.dims.iter().max().unwrap();
    let dp = compute_persistence(&build_complex(&fp), max_dim)?;
    let dg = compute_persistence(&build_complex(&fg), max_dim)?;
    let opts = MatchOptions::new(cfg.dims.clone()).with_anchor((lo + hi) / 2.0);
    let m = match_diagrams(&dp, &dg, &opts);

    let mut grad = Vec::new();
    for (point, g) in dp.points().iter().zip(&m.gradients) {
        if let Some(px) = point.birth_pixel {
            if g[0] != 0.0 {
                grad.push((px, g[0]));
            }
        }
        if let Some(px) = point.death_pixel {
            if g[1] != 0.0 {
                grad.push((px, g[1]));
            }
        }
    }
    let count = |d: &crate::cubical::PersistenceDiagram| {
        d.points().iter().filter(|q| cfg.dims.contains(&q.dim)).count()
    };
    Ok(WindowResult {
        record: WindowRecord {
            origin: origin.to_vec(),
            spec,
            cost: m.total_cost,
            pred_points: count(&dp),
            gt_points: count(&dg),
        },
        grad,
    })
}

/// Pixel-wise loss between `pred` and `gt` and its gradient.
pub fn base_loss(pred: &ScalarGrid, gt: &ScalarGrid, kind: BaseLoss) -> Result<(f64, ScalarGrid)> {
    pred.ensure_same_shape(gt)?;
    let n = pred.len() as f64;
    let mut grad = ScalarGrid::zeros(pred.shape().clone());
    let mut sum = 0.0;
    match kind {
        BaseLoss::Mse => {
            for ((g, &p), &t) in grad.values_mut().iter_mut().zip(pred.values()).zip(gt.values()) {
                let r = p - t;
                sum += r * r;
                *g = 2.0 * r / n;
            }
        }
        BaseLoss::CrossEntropy => {
            for (i, ((g, &p), &t)) in grad
                .values_mut()
                .iter_mut()
                .zip(pred.values())
                .zip(gt.values())
                .enumerate()
            {
                if t != 0.0 && t != 1.0 {
                    return Err(Error::Domain(format!(
                        "cross-entropy target must be 0 or 1, found {t} at index {i}"
                    )));
                }
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::Domain(format!(
                        "cross-entropy prediction must lie in (0, 1), found {p} at index {i}"
                    )));
                }
                sum -= if t == 1.0 { p.ln() } else { (1.0 - p).ln() };
                *g = (p - t) / (p * (1.0 - p)) / n;
            }
        }
    }
    Ok((sum / n, grad))
}

/// `base + alpha * topo` with the matching gradient.
pub fn total_loss<R: Rng + ?Sized>(
    pred: &ScalarGrid,
    gt: &ScalarGrid,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<LossReport> {
    let (base, base_grad) = base_loss(pred, gt, cfg.base_loss)?;
    let topo = topo_loss(pred, gt, cfg, rng)?;
    let mut gradient = base_grad;
    for (g, t) in gradient.values_mut().iter_mut().zip(topo.gradient.values()) {
        *g += cfg.alpha * t;
    }
    Ok(LossReport {
        total: base + cfg.alpha * topo.value,
        base,
        topo: topo.value,
        alpha: cfg.alpha,
        gradient,
        windows: topo.windows,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub steps: usize,
    pub lr: f64,
    /// Maps are binarized with `value < threshold` to count loops.
    pub threshold: f64,
    pub betti: BettiConfig,
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            steps: 500,
            lr: 5.0,
            threshold: 0.025,
            betti: BettiConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoStep {
    pub step: usize,
    pub total: f64,
    pub topo: f64,
    pub betti_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoResult {
    pub trajectory: Vec<DemoStep>,
    #[serde(skip)]
    pub pred: ScalarGrid,
}

/// Gradient descent on the prediction itself, clamped to `[0, 1]`, logging
/// the loss and the Betti error of the thresholded map before every step and
/// once after the last.
pub fn optimize_demo(
    pred0: &ScalarGrid,
    gt: &ScalarGrid,
    cfg: &LossConfig,
    demo: &DemoConfig,
) -> Result<DemoResult> {
    if !(demo.lr > 0.0 && demo.lr.is_finite()) {
        return Err(Error::param(format!("learning rate must be positive, got {}", demo.lr)));
    }
    pred0.ensure_same_shape(gt)?;
    let gt_mask = binarize(gt, demo.threshold);
    let mut rng = ChaCha8Rng::seed_from_u64(demo.seed);
    let mut pred = pred0.clone();
    let mut trajectory = Vec::with_capacity(demo.steps + 1);
    for step in 0..=demo.steps {
        let report = total_loss(&pred, gt, cfg, &mut rng)?;
        let err = mask_betti_error(&binarize(&pred, demo.threshold), &gt_mask, demo)?;
        trajectory.push(DemoStep {
            step,
            total: report.total,
            topo: report.topo,
            betti_error: err,
        });
        if step == demo.steps {
            break;
        }
        for (p, g) in pred.values_mut().iter_mut().zip(report.gradient.values()) {
            *p = (*p - demo.lr * g).clamp(0.0, 1.0);
        }
    }
    Ok(DemoResult { trajectory, pred })
}

fn mask_betti_error(pred: &BinaryMask, gt: &BinaryMask, demo: &DemoConfig) -> Result<f64> {
    // same patches at every step
    let mut rng = ChaCha8Rng::seed_from_u64(demo.seed ^ 0x5bd1_e995);
    let mut betti = demo.betti.clone();
    betti.patch = betti.patch.min(*pred.dims().iter().min().unwrap());
    betti_error(pred, gt, &betti, &mut rng)
}

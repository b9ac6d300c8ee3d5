//! Training losses: masked L1, composition, gradient and Laplacian terms,
//! each returned together with its gradient w.r.t. the predicted matte.
//!
//! L1, composition and gradient terms are averaged over the unknown-region
//! pixels; the Laplacian term is a weighted sum of whole-image per-level
//! means. Values are exact absolute residuals and gradients their exact
//! derivative `sign(r)`, with the subgradient at `r = 0` fixed to 0.

pub mod pyramid;

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};
use crate::raster::{blend, check_dims, unknown_mask, AlphaMatte, Mask, MattingSample, RgbImage};
use pyramid::{build_pyramid, pyramid_adjoint, Plane, LEVELS};

pub use pyramid::LaplacianPyramid;

/// Per-level weights `2^{s−1}` of the Laplacian term.
pub const LAPLACIAN_WEIGHTS: [f64; LEVELS] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Derivative of `|r|`, 0 at the kink.
#[inline]
fn abs_slope(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A loss value and its gradient w.r.t. every predicted alpha value.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Set when the mask was empty and the term defaulted to 0.
    pub empty_mask: bool,
}

impl Term {
    fn zero(n: usize) -> Self {
        Term {
            value: 0.0,
            grad: vec![0.0; n],
            empty_mask: true,
        }
    }
}

fn check_len(pred: &[f64], dims: (usize, usize)) -> Result<()> {
    if pred.len() != dims.0 * dims.1 {
        return Err(MattingError::DimensionMismatch {
            left: format!("{} values", pred.len()),
            right: format!("{}x{}", dims.0, dims.1),
        });
    }
    Ok(())
}

pub fn l1_term(pred: &[f64], gt: &AlphaMatte, mask: &Mask) -> Result<Term> {
    check_len(pred, gt.dims())?;
    check_dims(gt.dims(), mask.dims())?;
    let n = mask.count();
    if n == 0 {
        log::warn!("l1 loss evaluated on an empty unknown region");
        return Ok(Term::zero(pred.len()));
    }
    let inv = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (j, &m) in mask.data().iter().enumerate() {
        if m {
            let r = pred[j] - gt.data()[j];
            value += r.abs();
            grad[j] = abs_slope(r) * inv;
        }
    }
    Ok(Term {
        value: value * inv,
        grad,
        empty_mask: false,
    })
}

/// Mean over masked pixels and the three channels of `|C − αF − (1 − α)B|`.
pub fn composition_term(
    pred: &[f64],
    fg: &RgbImage,
    bg: &RgbImage,
    composite_gt: &RgbImage,
    mask: &Mask,
) -> Result<Term> {
    check_len(pred, mask.dims())?;
    for img in [fg, bg, composite_gt] {
        check_dims(img.dims(), mask.dims())?;
    }
    let n = mask.count();
    if n == 0 {
        log::warn!("composition loss evaluated on an empty unknown region");
        return Ok(Term::zero(pred.len()));
    }
    let inv = 1.0 / (3 * n) as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for c in 0..3 {
        let (f, b, comp) = (fg.channel(c), bg.channel(c), composite_gt.channel(c));
        for (j, &m) in mask.data().iter().enumerate() {
            if m {
                let a = pred[j];
                let r = comp[j] - blend(a, f[j], b[j]);
                value += r.abs();
                grad[j] -= (f[j] - b[j]) * abs_slope(r) * inv;
            }
        }
    }
    Ok(Term {
        value: value * inv,
        grad,
        empty_mask: false,
    })
}

/// Forward differences with a replicated last row/column (zero there).
pub fn forward_differences(a: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; h * w];
    let mut dy = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let j = y * w + x;
            if x + 1 < w {
                dx[j] = a[j + 1] - a[j];
            }
            if y + 1 < h {
                dy[j] = a[j + w] - a[j];
            }
        }
    }
    (dx, dy)
}

/// Mean over masked pixels of `|∂x p − ∂x g| + |∂y p − ∂y g|`.
pub fn gradient_term(pred: &[f64], gt: &AlphaMatte, mask: &Mask) -> Result<Term> {
    check_len(pred, gt.dims())?;
    check_dims(gt.dims(), mask.dims())?;
    let (h, w) = gt.dims();
    let n = mask.count();
    if n == 0 {
        log::warn!("gradient loss evaluated on an empty unknown region");
        return Ok(Term::zero(pred.len()));
    }
    let inv = 1.0 / n as f64;
    let (px, py) = forward_differences(pred, h, w);
    let (gx, gy) = forward_differences(gt.data(), h, w);
    let mut value = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for y in 0..h {
        for x in 0..w {
            let j = y * w + x;
            if !mask.data()[j] {
                continue;
            }
            let rx = px[j] - gx[j];
            let ry = py[j] - gy[j];
            value += rx.abs() + ry.abs();
            if x + 1 < w {
                let s = abs_slope(rx) * inv;
                grad[j + 1] += s;
                grad[j] -= s;
            }
            if y + 1 < h {
                let s = abs_slope(ry) * inv;
                grad[j + w] += s;
                grad[j] -= s;
            }
        }
    }
    Ok(Term {
        value: value * inv,
        grad,
        empty_mask: false,
    })
}

/// Smallest multiple of `2^LEVELS` that is at least `n`.
fn padded_len(n: usize) -> usize {
    let m = 1 << LEVELS;
    n.div_ceil(m) * m
}

fn reflect_pad_plane(a: &[f64], h: usize, w: usize) -> Plane {
    let (ph, pw) = (padded_len(h), padded_len(w));
    Plane::new(
        ph,
        pw,
        crate::resample::reflect_pad(a, h, w, 0, ph - h, 0, pw - w),
    )
}

/// Adjoint of bottom/right reflect padding: folds the margin back.
fn reflect_pad_adjoint(g: &Plane, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for y in 0..g.height {
        let sy = crate::resample::reflect_index(y as isize, h);
        for x in 0..g.width {
            let sx = crate::resample::reflect_index(x as isize, w);
            out[sy * w + sx] += g.data[y * g.width + x];
        }
    }
    out
}

/// Pyramid of a matte, reflect-padded up to a multiple of 32 when needed.
pub fn build_matte_pyramid(x: &AlphaMatte) -> LaplacianPyramid {
    let (h, w) = x.dims();
    build_pyramid(&reflect_pad_plane(x.data(), h, w))
}

/// `Σ_s 2^{s−1} · mean|L_s(pred) − L_s(gt)|` over whole levels.
pub fn laplacian_term(pred: &[f64], gt: &AlphaMatte) -> Result<Term> {
    check_len(pred, gt.dims())?;
    let (h, w) = gt.dims();
    let pp = build_pyramid(&reflect_pad_plane(pred, h, w));
    let gp = build_pyramid(&reflect_pad_plane(gt.data(), h, w));
    let mut value = 0.0;
    let mut level_grads = Vec::with_capacity(LEVELS);
    for (s, (lp, lg)) in pp.levels.iter().zip(&gp.levels).enumerate() {
        let inv = LAPLACIAN_WEIGHTS[s] / lp.data.len() as f64;
        let mut sum = 0.0;
        let mut g = Vec::with_capacity(lp.data.len());
        for (a, b) in lp.data.iter().zip(&lg.data) {
            let r = a - b;
            sum += r.abs();
            g.push(abs_slope(r) * inv);
        }
        value += sum * inv;
        level_grads.push(Plane::new(lp.height, lp.width, g));
    }
    let grad = reflect_pad_adjoint(&pyramid_adjoint(&level_grads), h, w);
    Ok(Term {
        value,
        grad,
        empty_mask: false,
    })
}

/// Signs of every absolute-value argument in [`sample_loss`], hashed; two
/// predictions with equal signatures lie on the same smooth piece.
pub fn kink_signature(pred: &[f64], sample: &MattingSample) -> Result<u64> {
    use std::hash::{Hash, Hasher};
    let gt = sample
        .ground_truth
        .as_ref()
        .ok_or_else(|| MattingError::Config("training sample has no ground-truth alpha".into()))?;
    check_len(pred, gt.dims())?;
    let (h, w) = gt.dims();
    let mask = unknown_mask(&sample.trimap);
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    let mut sign = |r: f64| (r.partial_cmp(&0.0)).hash(&mut hasher);
    let (px, py) = forward_differences(pred, h, w);
    let (gx, gy) = forward_differences(gt.data(), h, w);
    for j in (0..h * w).filter(|&j| mask.data()[j]) {
        sign(pred[j] - gt.data()[j]);
        sign(px[j] - gx[j]);
        sign(py[j] - gy[j]);
        if let (Some(f), Some(b)) = (&sample.foreground, &sample.background) {
            for c in 0..3 {
                let (fc, bc) = (f.channel(c)[j], b.channel(c)[j]);
                sign(sample.image.channel(c)[j] - blend(pred[j], fc, bc));
            }
        }
    }
    let pp = build_pyramid(&reflect_pad_plane(pred, h, w));
    let gp = build_pyramid(&reflect_pad_plane(gt.data(), h, w));
    for (lp, lg) in pp.levels.iter().zip(&gp.levels) {
        for (a, b) in lp.data.iter().zip(&lg.data) {
            sign(a - b);
        }
    }
    Ok(hasher.finish())
}

pub fn l1_loss(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(l1_term(pred.data(), gt, mask)?.value)
}

pub fn composition_loss(
    pred: &AlphaMatte,
    fg: &RgbImage,
    bg: &RgbImage,
    composite_gt: &RgbImage,
    mask: &Mask,
) -> Result<f64> {
    check_dims(pred.dims(), mask.dims())?;
    Ok(composition_term(pred.data(), fg, bg, composite_gt, mask)?.value)
}

pub fn gradient_loss(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(gradient_term(pred.data(), gt, mask)?.value)
}

pub fn laplacian_loss(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(laplacian_term(pred.data(), gt)?.value)
}

/// The four loss terms and their unit-weight sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub comp: f64,
    pub grad: f64,
    pub lap: f64,
    pub total: f64,
    /// Composition term not computed (sample lacks foreground/background).
    pub comp_skipped: bool,
    /// Unknown region was empty; masked terms defaulted to 0.
    pub empty_mask: bool,
}

impl LossBreakdown {
    /// Element-wise mean of several breakdowns; flags are OR-ed.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let n = items.len().max(1) as f64;
        let sum = |f: fn(&LossBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        let (l1, comp, grad, lap) = (sum(|b| b.l1), sum(|b| b.comp), sum(|b| b.grad), sum(|b| b.lap));
        LossBreakdown {
            l1,
            comp,
            grad,
            lap,
            total: l1 + comp + grad + lap,
            comp_skipped: items.iter().any(|b| b.comp_skipped),
            empty_mask: items.iter().any(|b| b.empty_mask),
        }
    }
}

/// Raw term values before summation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub l1: f64,
    pub comp: Option<f64>,
    pub grad: f64,
    pub lap: f64,
}

/// Unit-weight sum; any non-finite term is reported by name.
pub fn total_loss(parts: LossParts) -> Result<LossBreakdown> {
    let comp = parts.comp.unwrap_or(0.0);
    for (name, v) in [
        ("l1", parts.l1),
        ("comp", comp),
        ("grad", parts.grad),
        ("lap", parts.lap),
    ] {
        if !v.is_finite() {
            return Err(MattingError::NonFinite { term: name.into() });
        }
    }
    Ok(LossBreakdown {
        l1: parts.l1,
        comp,
        grad: parts.grad,
        lap: parts.lap,
        total: parts.l1 + comp + parts.grad + parts.lap,
        comp_skipped: parts.comp.is_none(),
        empty_mask: false,
    })
}

/// Full training objective for one sample: breakdown plus d(total)/d(pred).
pub fn sample_loss(pred: &[f64], sample: &MattingSample) -> Result<(LossBreakdown, Vec<f64>)> {
    let gt = sample
        .ground_truth
        .as_ref()
        .ok_or_else(|| MattingError::Config("training sample has no ground-truth alpha".into()))?;
    let mask = unknown_mask(&sample.trimap);
    let l1 = l1_term(pred, gt, &mask)?;
    let comp = match (&sample.foreground, &sample.background) {
        (Some(f), Some(b)) => Some(composition_term(pred, f, b, &sample.image, &mask)?),
        _ => None,
    };
    let grad = gradient_term(pred, gt, &mask)?;
    let lap = laplacian_term(pred, gt)?;
    let mut breakdown = total_loss(LossParts {
        l1: l1.value,
        comp: comp.as_ref().map(|t| t.value),
        grad: grad.value,
        lap: lap.value,
    })?;
    breakdown.empty_mask = l1.empty_mask;
    let mut total_grad = l1.grad;
    for term in [comp.as_ref(), Some(&grad), Some(&lap)].into_iter().flatten() {
        for (a, b) in total_grad.iter_mut().zip(&term.grad) {
            *a += b;
        }
    }
    if let Some(bad) = total_grad.iter().position(|v| !v.is_finite()) {
        return Err(MattingError::NonFinite {
            term: format!("loss gradient at pixel {bad}"),
        });
    }
    Ok((breakdown, total_grad))
}

//! Matting evaluation metrics: SAD, MSE, Gradient and Connectivity.
//!
//! SAD, Grad and Conn are reported divided by 1000; MSE is a plain mean.
//! Every metric is restricted to a mask, normally the trimap unknown
//! region.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};
use crate::io::{load_alpha, load_trimap};
use crate::raster::{check_dims, unknown_mask, AlphaMatte, Mask};

pub const METRIC_SCALE: f64 = 1000.0;
pub const GRAD_SIGMA: f64 = 1.4;
pub const CONN_STEP: f64 = 0.1;
pub const CONN_THETA: f64 = 0.15;

fn masked_pairs<'a>(
    pred: &'a AlphaMatte,
    gt: &'a AlphaMatte,
    mask: &'a Mask,
) -> Result<impl Iterator<Item = (f64, f64)> + 'a> {
    check_dims(pred.dims(), gt.dims())?;
    check_dims(pred.dims(), mask.dims())?;
    Ok(pred
        .data()
        .iter()
        .zip(gt.data())
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|((&p, &g), _)| (p, g)))
}

/// `Σ_mask |p − g| / 1000`.
pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    Ok(masked_pairs(pred, gt, mask)?.map(|(p, g)| (p - g).abs()).sum::<f64>() / METRIC_SCALE)
}

/// Mean of `(p − g)²` over the mask; 0 for an empty mask.
pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    let n = mask.count();
    let sum: f64 = masked_pairs(pred, gt, mask)?.map(|(p, g)| (p - g).powi(2)).sum();
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

/// Sampled Gaussian and its derivative on `[−r, r]`, `r = ⌈3σ⌉`, each scaled
/// to unit L2 norm. Their outer product is the unit-norm 2-D derivative
/// kernel.
pub fn gaussian_derivative_taps(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let r = (3.0 * sigma).ceil() as isize;
    let g: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let dg: Vec<f64> = (-r..=r)
        .zip(&g)
        .map(|(i, &gv)| -(i as f64) / (sigma * sigma) * gv)
        .collect();
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    (unit(g), unit(dg))
}

/// 1-D convolution along one axis with a replicated border.
fn convolve_axis(src: &[f64], h: usize, w: usize, taps: &[f64], horizontal: bool) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                let off = t as isize - r;
                let v = if horizontal {
                    src[y * w + clamp(x as isize - off, w)]
                } else {
                    src[clamp(y as isize - off, h) * w + x]
                };
                acc += k * v;
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Gradient magnitude from Gaussian-derivative filtering.
pub fn gradient_magnitude(a: &AlphaMatte, sigma: f64) -> Vec<f64> {
    let (h, w) = a.dims();
    let (g, dg) = gaussian_derivative_taps(sigma);
    let gx = convolve_axis(&convolve_axis(a.data(), h, w, &dg, true), h, w, &g, false);
    let gy = convolve_axis(&convolve_axis(a.data(), h, w, &g, true), h, w, &dg, false);
    gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
}

/// `Σ_mask (|∇p| − |∇g|)² / 1000` with σ = 1.4 derivative filters.
pub fn grad_metric(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    check_dims(pred.dims(), mask.dims())?;
    if mask.is_empty() {
        return Ok(0.0);
    }
    let mp = gradient_magnitude(pred, GRAD_SIGMA);
    let mg = gradient_magnitude(gt, GRAD_SIGMA);
    let sum: f64 = mask
        .data()
        .iter()
        .zip(mp.iter().zip(&mg))
        .filter(|(&m, _)| m)
        .map(|(_, (p, g))| (p - g).powi(2))
        .sum();
    Ok(sum / METRIC_SCALE)
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Largest 4-connected component of `on`. Ties go to the component whose
/// first pixel comes earliest in row-major order.
pub fn largest_component(on: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut ds = DisjointSet::new(h * w);
    for y in 0..h {
        for x in 0..w {
            let j = y * w + x;
            if !on[j] {
                continue;
            }
            if x + 1 < w && on[j + 1] {
                ds.union(j, j + 1);
            }
            if y + 1 < h && on[j + w] {
                ds.union(j, j + w);
            }
        }
    }
    let mut best: Option<(usize, usize)> = None;
    for (j, _) in on.iter().enumerate().filter(|(_, &v)| v) {
        let root = ds.find(j);
        let size = ds.size[root];
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((root, size));
        }
    }
    match best {
        None => vec![false; h * w],
        Some((root, _)) => (0..h * w).map(|j| on[j] && ds.find(j) == root).collect(),
    }
}

/// Per-pixel connectivity level: the last threshold before the pixel first
/// leaves the largest joint component; 1 if it never leaves.
pub fn connectivity_levels(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<Vec<f64>> {
    check_dims(pred.dims(), gt.dims())?;
    let (h, w) = pred.dims();
    let steps = (1.0 / CONN_STEP).round() as usize;
    let mut level = vec![-1.0; h * w];
    for i in 1..=steps {
        let t = i as f64 * CONN_STEP;
        let prev = (i - 1) as f64 * CONN_STEP;
        let on: Vec<bool> = pred
            .data()
            .iter()
            .zip(gt.data())
            .map(|(&p, &g)| p >= t && g >= t)
            .collect();
        let omega = largest_component(&on, h, w);
        for (l, &inside) in level.iter_mut().zip(&omega) {
            if *l == -1.0 && !inside {
                *l = prev;
            }
        }
    }
    for l in level.iter_mut().filter(|l| **l == -1.0) {
        *l = 1.0;
    }
    Ok(level)
}

/// `Σ_mask |φ_p − φ_g| / 1000` with `φ = 1 − d·[d ≥ 0.15]`, `d = α − level`.
pub fn conn_metric(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    check_dims(pred.dims(), mask.dims())?;
    if mask.is_empty() {
        return Ok(0.0);
    }
    let level = connectivity_levels(pred, gt)?;
    let phi = |a: f64, l: f64| {
        let d = a - l;
        if d >= CONN_THETA {
            1.0 - d
        } else {
            1.0
        }
    };
    let sum: f64 = level
        .iter()
        .zip(mask.data())
        .zip(pred.data().iter().zip(gt.data()))
        .filter(|((_, &m), _)| m)
        .map(|((&l, _), (&p, &g))| (phi(p, l) - phi(g, l)).abs())
        .sum();
    Ok(sum / METRIC_SCALE)
}

/// Which pixels the metrics are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Trimap unknown pixels only.
    Unknown,
    /// Every pixel.
    Full,
}

impl Region {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "unknown" => Ok(Region::Unknown),
            "full" => Ok(Region::Full),
            other => Err(MattingError::Config(format!(
                "unknown region {other:?} (expected unknown or full)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricValues {
    pub sad: f64,
    pub mse: f64,
    pub grad: f64,
    pub conn: f64,
}

pub fn all_metrics(pred: &AlphaMatte, gt: &AlphaMatte, mask: &Mask) -> Result<MetricValues> {
    Ok(MetricValues {
        sad: sad(pred, gt, mask)?,
        mse: mse(pred, gt, mask)?,
        grad: grad_metric(pred, gt, mask)?,
        conn: conn_metric(pred, gt, mask)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    #[serde(flatten)]
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFailure {
    pub name: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    #[serde(flatten)]
    pub values: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub region: Region,
    pub per_image: Vec<ImageMetrics>,
    pub failures: Vec<EvalFailure>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    /// Builds a report from per-image results; entries are sorted by name
    /// and the aggregate is the mean over successes.
    pub fn from_results(region: Region, results: Vec<(String, Result<MetricValues>)>) -> Self {
        let mut per_image = Vec::new();
        let mut failures = Vec::new();
        for (name, r) in results {
            match r {
                Ok(values) => per_image.push(ImageMetrics { name, values }),
                Err(e) => failures.push(EvalFailure {
                    name,
                    error: e.to_string(),
                }),
            }
        }
        per_image.sort_by(|a, b| a.name.cmp(&b.name));
        failures.sort_by(|a, b| a.name.cmp(&b.name));
        let n = per_image.len();
        let mean = |f: fn(&MetricValues) -> f64| {
            if n == 0 {
                0.0
            } else {
                per_image.iter().map(|m| f(&m.values)).sum::<f64>() / n as f64
            }
        };
        let aggregate = Aggregate {
            count: n,
            values: MetricValues {
                sad: mean(|v| v.sad),
                mse: mean(|v| v.mse),
                grad: mean(|v| v.grad),
                conn: mean(|v| v.conn),
            },
        };
        MetricReport {
            region,
            per_image,
            failures,
            aggregate,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metric report serializes")
    }

    /// Fixed-width summary with one row per image and a mean row.
    pub fn to_table(&self) -> String {
        let width = self
            .per_image
            .iter()
            .map(|m| m.name.len())
            .chain(self.failures.iter().map(|f| f.name.len()))
            .chain(std::iter::once(4))
            .max()
            .unwrap_or(4);
        let mut out = format!(
            "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}\n",
            "name", "SAD", "MSE", "Grad", "Conn"
        );
        let row = |name: &str, v: &MetricValues| {
            format!(
                "{:<width$}  {:>10.4}  {:>10.6}  {:>10.4}  {:>10.4}\n",
                name, v.sad, v.mse, v.grad, v.conn
            )
        };
        for m in &self.per_image {
            out += &row(&m.name, &m.values);
        }
        out += &row("mean", &self.aggregate.values);
        for f in &self.failures {
            out += &format!("{:<width$}  FAILED: {}\n", f.name, f.error);
        }
        out
    }
}

/// One evaluation triple.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalEntry {
    pub name: String,
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub trimap: PathBuf,
}

fn evaluate_entry(e: &EvalEntry, region: Region) -> Result<MetricValues> {
    let pred = load_alpha(&e.pred)?;
    let gt = load_alpha(&e.gt)?;
    let trimap = load_trimap(&e.trimap)?;
    check_dims(pred.dims(), gt.dims())?;
    check_dims(pred.dims(), trimap.dims())?;
    let mask = match region {
        Region::Unknown => unknown_mask(&trimap),
        Region::Full => Mask::full(pred.height(), pred.width()),
    };
    all_metrics(&pred, &gt, &mask)
}

/// Evaluates every triple in parallel; failures are recorded per image.
pub fn evaluate(entries: &[EvalEntry], region: Region) -> MetricReport {
    let results = entries
        .par_iter()
        .map(|e| (e.name.clone(), evaluate_entry(e, region)))
        .collect();
    MetricReport::from_results(region, results)
}

fn png_stems(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| MattingError::io(dir, e))? {
        let path = entry.map_err(|e| MattingError::io(dir, e))?.path();
        if path.extension().and_then(|x| x.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push((stem.to_string(), path.clone()));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Pairs `*.png` files across three directories by file stem. Differing
/// file counts or stems are a configuration error.
pub fn pair_directories(pred: &Path, gt: &Path, trimap: &Path) -> Result<Vec<EvalEntry>> {
    let (p, g, t) = (png_stems(pred)?, png_stems(gt)?, png_stems(trimap)?);
    if p.len() != g.len() || p.len() != t.len() {
        return Err(MattingError::Config(format!(
            "file counts differ: {} predictions, {} ground truths, {} trimaps",
            p.len(),
            g.len(),
            t.len()
        )));
    }
    p.into_iter()
        .zip(g)
        .zip(t)
        .map(|(((name, pp), (gn, gp)), (tn, tp))| {
            if name != gn || name != tn {
                return Err(MattingError::Config(format!(
                    "file names differ: {name}, {gn}, {tn}"
                )));
            }
            Ok(EvalEntry {
                name,
                pred: pp,
                gt: gp,
                trimap: tp,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sad_scaling_and_mse_single_pixel() {
        let p = AlphaMatte::filled(10, 100, 1.0);
        let g = AlphaMatte::filled(10, 100, 0.0);
        assert_eq!(sad(&p, &g, &Mask::full(10, 100)).unwrap(), 1.0);
        let p = AlphaMatte::filled(1, 1, 0.6);
        let g = AlphaMatte::filled(1, 1, 0.5);
        assert!((mse(&p, &g, &Mask::full(1, 1)).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_gives_zero() {
        let p = AlphaMatte::filled(4, 4, 1.0);
        let g = AlphaMatte::filled(4, 4, 0.0);
        let m = Mask::new(4, 4, vec![false; 16]).unwrap();
        let v = all_metrics(&p, &g, &m).unwrap();
        assert_eq!(v, MetricValues::default());
    }

    #[test]
    fn opaque_mattes_have_zero_conn() {
        let a = AlphaMatte::filled(8, 8, 1.0);
        assert_eq!(conn_metric(&a, &a, &Mask::full(8, 8)).unwrap(), 0.0);
    }

    #[test]
    fn grad_ignores_constant_offset() {
        let g = AlphaMatte::from_fn(16, 16, |y, x| 0.3 + 0.02 * ((x * y) % 7) as f64);
        let p = AlphaMatte::from_fn(16, 16, |y, x| g.get(y, x) + 0.25);
        assert!(grad_metric(&p, &g, &Mask::full(16, 16)).unwrap() < 1e-20);
    }

    #[test]
    fn derivative_taps_are_odd_and_unit() {
        let (g, dg) = gaussian_derivative_taps(GRAD_SIGMA);
        assert_eq!(g.len(), 11);
        for i in 0..11 {
            assert_eq!(dg[i], -dg[10 - i]);
            assert_eq!(g[i], g[10 - i]);
        }
        let n: f64 = dg.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn largest_component_tie_breaks_by_scan_order() {
        #[rustfmt::skip]
        let on = [
            true, false, true,
            true, false, true,
        ];
        let c = largest_component(&on, 2, 3);
        assert_eq!(c, vec![true, false, false, true, false, false]);
    }

    #[test]
    fn report_aggregates_means() {
        let v = |sad| MetricValues {
            sad,
            ..Default::default()
        };
        let r = MetricReport::from_results(
            Region::Unknown,
            vec![
                ("b".into(), Ok(v(3.0))),
                ("a".into(), Ok(v(1.0))),
                ("c".into(), Err(MattingError::Internal("boom".into()))),
            ],
        );
        assert_eq!(r.aggregate.values.sad, 2.0);
        assert_eq!(r.aggregate.count, 2);
        assert_eq!(r.per_image[0].name, "a");
        assert_eq!(r.failures.len(), 1);
        assert!(r.to_table().contains("FAILED"));
        let back: MetricReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}

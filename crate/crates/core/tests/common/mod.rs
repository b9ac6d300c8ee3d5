//! Independent reference implementations used as test oracles.
//!
//! These are written from the metric and layer definitions directly, with
//! dense loops and no shared helpers from the library, so that agreement is
//! evidence rather than tautology.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::VecDeque;

use i2gfp::raster::{AlphaMatte, Mask, Trimap, TrimapLabel};
use rand::Rng;

pub fn random_matte(rng: &mut impl Rng, h: usize, w: usize) -> AlphaMatte {
    // mix of saturated and fractional values so thresholds and plateaus both occur
    AlphaMatte::from_fn(h, w, |_, _| match rng.random_range(0..4) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    })
}

pub fn random_mask(rng: &mut impl Rng, h: usize, w: usize) -> Mask {
    Mask::new(h, w, (0..h * w).map(|_| rng.random_bool(0.6)).collect()).unwrap()
}

pub fn random_trimap(rng: &mut impl Rng, h: usize, w: usize) -> Trimap {
    let labels = (0..h * w)
        .map(|_| match rng.random_range(0..3) {
            0 => TrimapLabel::Background,
            1 => TrimapLabel::Unknown,
            _ => TrimapLabel::Foreground,
        })
        .collect();
    Trimap::new(h, w, labels).unwrap()
}

pub fn sad_oracle(p: &AlphaMatte, g: &AlphaMatte, m: &Mask) -> f64 {
    let (h, w) = p.dims();
    let mut s = 0.0;
    for y in 0..h {
        for x in 0..w {
            if m.get(y, x) {
                s += (p.get(y, x) - g.get(y, x)).abs();
            }
        }
    }
    s / 1000.0
}

pub fn mse_oracle(p: &AlphaMatte, g: &AlphaMatte, m: &Mask) -> f64 {
    let (h, w) = p.dims();
    let (mut s, mut n) = (0.0, 0usize);
    for y in 0..h {
        for x in 0..w {
            if m.get(y, x) {
                let d = p.get(y, x) - g.get(y, x);
                s += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Dense 2-D Gaussian-derivative filtering with a `(2r+1)²` kernel built as
/// the outer product of unit-norm 1-D taps; replicate border, true
/// convolution.
pub fn gradient_magnitude_oracle(a: &AlphaMatte, sigma: f64) -> Vec<f64> {
    let (h, w) = a.dims();
    let r = (3.0 * sigma).ceil() as i64;
    let n = (2 * r + 1) as usize;
    let gauss = |i: i64| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp();
    let mut g: Vec<f64> = (-r..=r).map(gauss).collect();
    let mut dg: Vec<f64> = (-r..=r).map(|i| -(i as f64) / (sigma * sigma) * gauss(i)).collect();
    for v in [&mut g, &mut dg] {
        let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        v.iter_mut().for_each(|t| *t /= norm);
    }
    // kx[ky][kx]: derivative along x, smoothing along y
    let mut kx = vec![vec![0.0; n]; n];
    let mut ky = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            kx[i][j] = g[i] * dg[j];
            ky[i][j] = dg[i] * g[j];
        }
    }
    let at = |y: i64, x: i64| a.get(y.clamp(0, h as i64 - 1) as usize, x.clamp(0, w as i64 - 1) as usize);
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let (mut gx, mut gy) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let v = at(y - (i as i64 - r), x - (j as i64 - r));
                    gx += kx[i][j] * v;
                    gy += ky[i][j] * v;
                }
            }
            out[(y as usize) * w + x as usize] = (gx * gx + gy * gy).sqrt();
        }
    }
    out
}

pub fn grad_oracle(p: &AlphaMatte, g: &AlphaMatte, m: &Mask) -> f64 {
    let mp = gradient_magnitude_oracle(p, 1.4);
    let mg = gradient_magnitude_oracle(g, 1.4);
    let mut s = 0.0;
    for j in 0..mp.len() {
        if m.data()[j] {
            s += (mp[j] - mg[j]).powi(2);
        }
    }
    s / 1000.0
}

/// Breadth-first labelling; returns the largest 4-connected component,
/// preferring the one discovered first in a row-major scan on ties.
pub fn largest_component_bfs(on: &[bool], h: usize, w: usize) -> Vec<bool> {
    let mut label = vec![usize::MAX; h * w];
    let mut sizes = Vec::new();
    for start in 0..h * w {
        if !on[start] || label[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        let mut queue = VecDeque::from([start]);
        label[start] = id;
        while let Some(j) = queue.pop_front() {
            size += 1;
            let (y, x) = (j / w, j % w);
            let mut push = |k: usize| {
                if on[k] && label[k] == usize::MAX {
                    label[k] = id;
                    queue.push_back(k);
                }
            };
            if y > 0 {
                push(j - w);
            }
            if y + 1 < h {
                push(j + w);
            }
            if x > 0 {
                push(j - 1);
            }
            if x + 1 < w {
                push(j + 1);
            }
        }
        sizes.push(size);
    }
    let mut best: Option<usize> = None;
    for (id, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|b| s > sizes[b]) {
            best = Some(id);
        }
    }
    match best {
        None => vec![false; h * w],
        Some(b) => label.iter().map(|&l| l == b).collect(),
    }
}

pub fn conn_oracle(p: &AlphaMatte, g: &AlphaMatte, m: &Mask) -> f64 {
    let (h, w) = p.dims();
    let mut level: Vec<Option<f64>> = vec![None; h * w];
    for i in 1..=10usize {
        let t = i as f64 * 0.1;
        let on: Vec<bool> = (0..h * w)
            .map(|j| p.data()[j] >= t && g.data()[j] >= t)
            .collect();
        let omega = largest_component_bfs(&on, h, w);
        for j in 0..h * w {
            if level[j].is_none() && !omega[j] {
                level[j] = Some((i - 1) as f64 * 0.1);
            }
        }
    }
    let phi = |a: f64, l: f64| if a - l >= 0.15 { 1.0 - (a - l) } else { 1.0 };
    let mut s = 0.0;
    for j in 0..h * w {
        if m.data()[j] {
            let l = level[j].unwrap_or(1.0);
            s += (phi(p.data()[j], l) - phi(g.data()[j], l)).abs();
        }
    }
    s / 1000.0
}

/// Dense `k×k` convolution of a single plane with the rank-1 kernel
/// `col ⊗ row`, zero padding, "same" output (cross-correlation convention,
/// matching the network's convolution layers).
pub fn dense_rank1_conv(x: &[f64], h: usize, w: usize, row: &[f64], col: &[f64]) -> Vec<f64> {
    let k = row.len();
    let r = (k / 2) as i64;
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for xx in 0..w as i64 {
            let mut acc = 0.0;
            for i in 0..k as i64 {
                for j in 0..k as i64 {
                    let (sy, sx) = (y + i - r, xx + j - r);
                    if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                        continue;
                    }
                    acc += col[i as usize] * row[j as usize] * x[(sy as usize) * w + sx as usize];
                }
            }
            out[(y as usize) * w + xx as usize] = acc;
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let s = x.abs().max(y.abs());
            if s == 0.0 {
                0.0
            } else {
                (x - y).abs() / s
            }
        })
        .fold(0.0, f64::max)
}

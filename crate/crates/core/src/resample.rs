//! Plane-level resampling shared by the data pipeline and the network.
//!
//! A plane is a row-major `height × width` slice. Bilinear resampling uses
//! half-pixel centres (`src = (dst + 0.5) · in/out − 0.5`), so resizing to the
//! same size is an exact identity and constants are preserved exactly.

/// Per-axis interpolation table for bilinear resampling.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
    pub frac: Vec<f64>,
}

pub fn axis_weights(in_len: usize, out_len: usize) -> AxisWeights {
    let scale = in_len as f64 / out_len as f64;
    let mut lo = Vec::with_capacity(out_len);
    let mut hi = Vec::with_capacity(out_len);
    let mut frac = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let src = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
        let l = (src.floor() as usize).min(in_len - 1);
        lo.push(l);
        hi.push((l + 1).min(in_len - 1));
        frac.push(if l + 1 < in_len { src - l as f64 } else { 0.0 });
    }
    AxisWeights { lo, hi, frac }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

pub fn resize_bilinear(src: &[f64], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f64> {
    debug_assert_eq!(src.len(), h * w);
    if h == oh && w == ow {
        return src.to_vec();
    }
    let ry = axis_weights(h, oh);
    let rx = axis_weights(w, ow);
    let mut out = Vec::with_capacity(oh * ow);
    for oy in 0..oh {
        let top = &src[ry.lo[oy] * w..ry.lo[oy] * w + w];
        let bot = &src[ry.hi[oy] * w..ry.hi[oy] * w + w];
        let ty = ry.frac[oy];
        for ox in 0..ow {
            let (l, r, tx) = (rx.lo[ox], rx.hi[ox], rx.frac[ox]);
            let a = lerp(top[l], top[r], tx);
            let b = lerp(bot[l], bot[r], tx);
            out.push(lerp(a, b, ty));
        }
    }
    out
}

/// Transpose of [`resize_bilinear`]: scatters an output-space gradient back
/// onto the input grid.
pub fn resize_bilinear_adjoint(
    grad_out: &[f64],
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    debug_assert_eq!(grad_out.len(), oh * ow);
    if h == oh && w == ow {
        return grad_out.to_vec();
    }
    let ry = axis_weights(h, oh);
    let rx = axis_weights(w, ow);
    let mut out = vec![0.0; h * w];
    for oy in 0..oh {
        let ty = ry.frac[oy];
        let (top, bot) = (ry.lo[oy] * w, ry.hi[oy] * w);
        for ox in 0..ow {
            let g = grad_out[oy * ow + ox];
            let tx = rx.frac[ox];
            let (l, r) = (rx.lo[ox], rx.hi[ox]);
            out[top + l] += g * (1.0 - ty) * (1.0 - tx);
            out[top + r] += g * (1.0 - ty) * tx;
            out[bot + l] += g * ty * (1.0 - tx);
            out[bot + r] += g * ty * tx;
        }
    }
    out
}

fn nearest_index(i: usize, in_len: usize, out_len: usize) -> usize {
    let src = ((i as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize;
    src.min(in_len - 1)
}

pub fn resize_nearest<T: Copy>(src: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let ys: Vec<usize> = (0..oh).map(|i| nearest_index(i, h, oh)).collect();
    let xs: Vec<usize> = (0..ow).map(|i| nearest_index(i, w, ow)).collect();
    let mut out = Vec::with_capacity(oh * ow);
    for &y in &ys {
        for &x in &xs {
            out.push(src[y * w + x]);
        }
    }
    out
}

pub fn flip_horizontal<T: Copy>(src: &[T], h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        out.extend(src[y * w..(y + 1) * w].iter().rev());
    }
    out
}

pub fn crop<T: Copy>(src: &[T], w: usize, top: usize, left: usize, ch: usize, cw: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(ch * cw);
    for y in top..top + ch {
        out.extend_from_slice(&src[y * w + left..y * w + left + cw]);
    }
    out
}

/// Mirror index without repeating the edge sample (`dcb|abcd|cba`).
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= len as isize {
        m = period - m;
    }
    m as usize
}

/// Reflect-pads a plane by the given margins.
pub fn reflect_pad<T: Copy>(
    src: &[T],
    h: usize,
    w: usize,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Vec<T> {
    let (nh, nw) = (h + top + bottom, w + left + right);
    let mut out = Vec::with_capacity(nh * nw);
    for y in 0..nh {
        let sy = reflect_index(y as isize - top as isize, h);
        for x in 0..nw {
            let sx = reflect_index(x as isize - left as isize, w);
            out.push(src[sy * w + sx]);
        }
    }
    out
}

/// Inverse-mapped affine warp parameters. Maps an output pixel centre to a
/// source pixel centre about the image centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    /// Row-major 2×2 inverse linear part acting on (x, y).
    pub inv: [f64; 4],
    /// Translation in pixels (x, y) applied in output space.
    pub shift: [f64; 2],
}

impl AffineMap {
    pub fn new(rotation_deg: f64, scale: f64, shift: [f64; 2]) -> Self {
        let t = rotation_deg.to_radians();
        let (s, c) = t.sin_cos();
        // inverse of scale·R(t) is R(-t)/scale
        let inv = [c / scale, s / scale, -s / scale, c / scale];
        AffineMap { inv, shift }
    }

    fn source(&self, x: f64, y: f64, cx: f64, cy: f64) -> (f64, f64) {
        let dx = x - cx - self.shift[0];
        let dy = y - cy - self.shift[1];
        (
            self.inv[0] * dx + self.inv[1] * dy + cx,
            self.inv[2] * dx + self.inv[3] * dy + cy,
        )
    }
}

/// Bilinear affine warp with replicated borders.
pub fn warp_bilinear(src: &[f64], h: usize, w: usize, map: &AffineMap) -> Vec<f64> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let at = |y: isize, x: isize| {
        let y = y.clamp(0, h as isize - 1) as usize;
        let x = x.clamp(0, w as isize - 1) as usize;
        src[y * w + x]
    };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x as f64, y as f64, cx, cy);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (tx, ty) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let a = lerp(at(y0, x0), at(y0, x0 + 1), tx);
            let b = lerp(at(y0 + 1, x0), at(y0 + 1, x0 + 1), tx);
            out.push(lerp(a, b, ty));
        }
    }
    out
}

/// Nearest-neighbour affine warp with replicated borders; label-preserving.
pub fn warp_nearest<T: Copy>(src: &[T], h: usize, w: usize, map: &AffineMap) -> Vec<T> {
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = map.source(x as f64, y as f64, cx, cy);
            let sx = (sx.round() as isize).clamp(0, w as isize - 1) as usize;
            let sy = (sy.round() as isize).clamp(0, h as isize - 1) as usize;
            out.push(src[sy * w + sx]);
        }
    }
    out
}

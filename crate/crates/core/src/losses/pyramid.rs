//! Five-level Laplacian pyramid with an exact adjoint.
//!
//! `G_0 = x`, `G_s = down(G_{s−1})`, `L_s = G_{s−1} − up(G_s)` for
//! `s = 1..=5`, residual `G_5`. `down` is a 5-tap binomial blur followed by
//! taking even samples; `up` inserts zeros and blurs with 4× gain. Borders
//! mirror without repeating the edge sample.

use crate::resample::reflect_index;

pub const LEVELS: usize = 5;
const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Row-major plane with its dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width);
        Plane {
            height,
            width,
            data,
        }
    }

    fn zeros(height: usize, width: usize) -> Self {
        Plane::new(height, width, vec![0.0; height * width])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianPyramid {
    /// Band-pass levels `L_1..L_5`; level `s` is `input / 2^{s−1}` in size.
    pub levels: Vec<Plane>,
    pub residual: Plane,
}

fn blur_axis(src: &Plane, horizontal: bool) -> Plane {
    let (h, w) = (src.height, src.width);
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, &k) in TAPS.iter().enumerate() {
                let off = t as isize - 2;
                let (sy, sx) = if horizontal {
                    (y, reflect_index(x as isize + off, w))
                } else {
                    (reflect_index(y as isize + off, h), x)
                };
                acc += k * src.data[sy * w + sx];
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

fn blur_axis_adjoint(src: &Plane, horizontal: bool) -> Plane {
    let (h, w) = (src.height, src.width);
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let g = src.data[y * w + x];
            for (t, &k) in TAPS.iter().enumerate() {
                let off = t as isize - 2;
                let (sy, sx) = if horizontal {
                    (y, reflect_index(x as isize + off, w))
                } else {
                    (reflect_index(y as isize + off, h), x)
                };
                out.data[sy * w + sx] += k * g;
            }
        }
    }
    out
}

fn blur(p: &Plane) -> Plane {
    blur_axis(&blur_axis(p, true), false)
}

fn blur_adjoint(p: &Plane) -> Plane {
    blur_axis_adjoint(&blur_axis_adjoint(p, false), true)
}

fn take_even(p: &Plane) -> Plane {
    let (h, w) = (p.height.div_ceil(2), p.width.div_ceil(2));
    let mut out = Plane::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            out.data[y * w + x] = p.data[2 * y * p.width + 2 * x];
        }
    }
    out
}

fn insert_zeros(p: &Plane, h: usize, w: usize) -> Plane {
    let mut out = Plane::zeros(h, w);
    for y in 0..p.height {
        for x in 0..p.width {
            out.data[2 * y * w + 2 * x] = p.data[y * p.width + x];
        }
    }
    out
}

fn down(p: &Plane) -> Plane {
    take_even(&blur(p))
}

fn down_adjoint(g: &Plane, h: usize, w: usize) -> Plane {
    blur_adjoint(&insert_zeros(g, h, w))
}

fn up(p: &Plane, h: usize, w: usize) -> Plane {
    let mut out = blur(&insert_zeros(p, h, w));
    out.data.iter_mut().for_each(|v| *v *= 4.0);
    out
}

fn up_adjoint(g: &Plane) -> Plane {
    let mut out = take_even(&blur_adjoint(g));
    out.data.iter_mut().for_each(|v| *v *= 4.0);
    out
}

fn sub(a: &Plane, b: &Plane) -> Plane {
    Plane::new(
        a.height,
        a.width,
        a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    )
}

/// Builds the pyramid; dims need not be multiples of 32 but every level
/// halves with rounding up.
pub fn build_pyramid(x: &Plane) -> LaplacianPyramid {
    let mut levels = Vec::with_capacity(LEVELS);
    let mut g = x.clone();
    for _ in 0..LEVELS {
        let next = down(&g);
        levels.push(sub(&g, &up(&next, g.height, g.width)));
        g = next;
    }
    LaplacianPyramid {
        levels,
        residual: g,
    }
}

/// Upsample-and-add from the coarsest level.
pub fn collapse(pyr: &LaplacianPyramid) -> Plane {
    let mut g = pyr.residual.clone();
    for l in pyr.levels.iter().rev() {
        let u = up(&g, l.height, l.width);
        g = Plane::new(
            l.height,
            l.width,
            l.data.iter().zip(&u.data).map(|(a, b)| a + b).collect(),
        );
    }
    g
}

/// Transpose of the map `x ↦ (L_1, …, L_5)`; the residual is not an output.
pub fn pyramid_adjoint(level_grads: &[Plane]) -> Plane {
    assert_eq!(level_grads.len(), LEVELS);
    let last = &level_grads[LEVELS - 1];
    let mut acc = Plane::zeros(last.height.div_ceil(2), last.width.div_ceil(2));
    for s in (0..LEVELS).rev() {
        let dl = &level_grads[s];
        // gradient reaching G_{s+1}: earlier contributions minus upᵀ(dL)
        let ua = up_adjoint(dl);
        let g_next = sub(&acc, &ua);
        let d = down_adjoint(&g_next, dl.height, dl.width);
        acc = Plane::new(
            dl.height,
            dl.width,
            dl.data.iter().zip(&d.data).map(|(a, b)| a + b).collect(),
        );
    }
    acc
}

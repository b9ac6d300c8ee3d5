//! Dense `f64` tensors and the convolution kernels the network is built from.
//!
//! Activations are single-sample `[channels, height, width]`; convolution
//! weights are `[out, in, kh, kw]`. Convolutions lower to one GEMM via im2col.

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor shape {shape:?} does not match buffer length {}",
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(channels, height, width)` of an activation.
    pub fn chw(&self) -> (usize, usize, usize) {
        assert_eq!(self.shape.len(), 3, "expected a [c, h, w] tensor");
        (self.shape[0], self.shape[1], self.shape[2])
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Static geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeometry {
    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad_h - self.kh) / self.stride + 1,
            (w + 2 * self.pad_w - self.kw) / self.stride + 1,
        )
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_h == 0 && self.pad_w == 0
    }

    fn patch_len(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }
}

fn im2col(x: &[f64], h: usize, w: usize, g: &ConvGeometry, oh: usize, ow: usize) -> Vec<f64> {
    let n = oh * ow;
    let mut cols = vec![0.0; g.patch_len() * n];
    for ci in 0..g.in_ch {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    if g.stride == 1 {
                        // contiguous run of valid columns
                        let x0 = kx as isize - g.pad_w as isize;
                        let lo = (-x0).max(0) as usize;
                        let hi = ((w as isize - x0).min(ow as isize)).max(lo as isize) as usize;
                        if hi > lo {
                            let s = (lo as isize + x0) as usize;
                            out[lo..hi].copy_from_slice(&src[s..s + (hi - lo)]);
                        }
                    } else {
                        for (ox, o) in out.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                            if ix >= 0 && ix < w as isize {
                                *o = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im(
    cols: &[f64],
    h: usize,
    w: usize,
    g: &ConvGeometry,
    oh: usize,
    ow: usize,
) -> Vec<f64> {
    let n = oh * ow;
    let mut x = vec![0.0; g.in_ch * h * w];
    for ci in 0..g.in_ch {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * n..(row + 1) * n];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let s = &src[oy * ow..(oy + 1) * ow];
                    for (ox, &v) in s.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
    x
}

/// `c (m×n) = beta·c + a (m×k) · b (k×n)` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds asserted above; strides describe dense row/column-major views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv2d_forward(x: &Tensor, weight: &Tensor, bias: &Tensor, g: &ConvGeometry) -> Tensor {
    let (c, h, w) = x.chw();
    assert_eq!(c, g.in_ch, "conv input channels");
    let (oh, ow) = g.output_dims(h, w);
    let (n, k) = (oh * ow, g.patch_len());
    let mut out = vec![0.0; g.out_ch * n];
    for (o, &b) in bias.data.iter().enumerate() {
        out[o * n..(o + 1) * n].fill(b);
    }
    let owned;
    let cols: &[f64] = if g.is_pointwise() {
        &x.data
    } else {
        owned = im2col(&x.data, h, w, g, oh, ow);
        &owned
    };
    gemm(g.out_ch, k, n, &weight.data, (k, 1), cols, (n, 1), 1.0, &mut out);
    Tensor::new(vec![g.out_ch, oh, ow], out)
}

/// Gradients of a convolution. `grad_input` is skipped when not requested.
pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    g: &ConvGeometry,
    need_input: bool,
) -> ConvGrads {
    let (_, h, w) = x.chw();
    let (_, oh, ow) = grad_out.chw();
    let (n, k) = (oh * ow, g.patch_len());
    let owned;
    let cols: &[f64] = if g.is_pointwise() {
        &x.data
    } else {
        owned = im2col(&x.data, h, w, g, oh, ow);
        &owned
    };
    let mut gw = vec![0.0; g.out_ch * k];
    // dW = dY · colsᵀ
    gemm(g.out_ch, n, k, &grad_out.data, (n, 1), cols, (1, n), 0.0, &mut gw);
    let gb: Vec<f64> = grad_out.data.chunks(n).map(|r| r.iter().sum()).collect();
    let input = need_input.then(|| {
        let mut dcols = vec![0.0; k * n];
        // dcols = Wᵀ · dY
        gemm(k, g.out_ch, n, &weight.data, (1, k), &grad_out.data, (n, 1), 0.0, &mut dcols);
        let dx = if g.is_pointwise() {
            dcols
        } else {
            col2im(&dcols, h, w, g, oh, ow)
        };
        Tensor::new(vec![g.in_ch, h, w], dx)
    });
    ConvGrads {
        input,
        weight: Tensor::new(weight.shape.clone(), gw),
        bias: Tensor::new(vec![g.out_ch], gb),
    }
}

/// Direct nested-loop convolution; slow, used as an independent reference.
pub fn conv2d_reference(x: &Tensor, weight: &Tensor, bias: &Tensor, g: &ConvGeometry) -> Tensor {
    let (_, h, w) = x.chw();
    let (oh, ow) = g.output_dims(h, w);
    let mut out = Tensor::zeros(vec![g.out_ch, oh, ow]);
    for o in 0..g.out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias.data[o];
                for ci in 0..g.in_ch {
                    for ky in 0..g.kh {
                        for kx in 0..g.kw {
                            let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                            let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            acc += weight.data[((o * g.in_ch + ci) * g.kh + ky) * g.kw + kx]
                                * x.data[(ci * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                out.data[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

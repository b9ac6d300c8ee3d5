//! Reverse-mode differentiation over a recorded tape of tensor ops.
//!
//! A [`Graph`] is built per sample during the forward pass. Parameters are
//! borrowed from a shared slice; their gradients come back indexed by the
//! same slot, which keeps batch accumulation order fixed.

use std::borrow::Cow;

use crate::resample;
use crate::tensor::{conv2d_backward, conv2d_forward, ConvGeometry, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(usize),
    Conv {
        x: usize,
        w: usize,
        b: usize,
        geom: ConvGeometry,
    },
    Relu(usize),
    MaxPool2 {
        x: usize,
        argmax: Vec<usize>,
    },
    Resize(usize),
    Concat(Vec<usize>),
    Add(usize, usize),
    Sigmoid(usize),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
}

pub struct Graph<'a> {
    params: &'a [Tensor],
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new(params: &'a [Tensor]) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, value: Cow<'a, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: usize) -> bool {
        self.nodes[v].requires_grad
    }

    /// Which side of every non-smooth point the recorded pass sits on:
    /// ReLU input signs and max-pool winners, hashed in tape order.
    pub fn kink_signature(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => {
                    for &a in &self.nodes[*x].value.data {
                        (a > 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool2 { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Cow::Owned(t), Op::Input, false)
    }

    pub fn param(&mut self, slot: usize) -> Var {
        let params = self.params;
        self.push(Cow::Borrowed(&params[slot]), Op::Param(slot), true)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, geom: ConvGeometry) -> Var {
        let y = conv2d_forward(self.value(x), self.value(w), self.value(b), &geom);
        let rg = self.needs(x.0) || self.needs(w.0) || self.needs(b.0);
        self.push(
            Cow::Owned(y),
            Op::Conv {
                x: x.0,
                w: w.0,
                b: b.0,
                geom,
            },
            rg,
        )
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let y = Tensor::new(v.shape.clone(), v.data.iter().map(|&a| a.max(0.0)).collect());
        let rg = self.needs(x.0);
        self.push(Cow::Owned(y), Op::Relu(x.0), rg)
    }

    /// 2×2 max pooling with stride 2; ties resolve to the first element in scan order.
    pub fn max_pool2(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let (c, h, w) = v.chw();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Vec::with_capacity(c * oh * ow);
        let mut argmax = Vec::with_capacity(c * oh * ow);
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = usize::MAX;
                    let mut best_v = f64::NEG_INFINITY;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let i = (ch * h + 2 * oy + dy) * w + 2 * ox + dx;
                        if v.data[i] > best_v || best == usize::MAX {
                            best_v = v.data[i];
                            best = i;
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        let rg = self.needs(x.0);
        self.push(
            Cow::Owned(Tensor::new(vec![c, oh, ow], out)),
            Op::MaxPool2 { x: x.0, argmax },
            rg,
        )
    }

    /// Bilinear resize of every channel to `(oh, ow)`.
    pub fn resize(&mut self, x: Var, oh: usize, ow: usize) -> Var {
        let v = self.value(x);
        let (c, h, w) = v.chw();
        if (h, w) == (oh, ow) {
            return x;
        }
        let mut out = Vec::with_capacity(c * oh * ow);
        for plane in v.data.chunks(h * w) {
            out.extend(resample::resize_bilinear(plane, h, w, oh, ow));
        }
        let rg = self.needs(x.0);
        self.push(
            Cow::Owned(Tensor::new(vec![c, oh, ow], out)),
            Op::Resize(x.0),
            rg,
        )
    }

    /// Channel concatenation; all parts must share spatial dims.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let (_, h, w) = self.value(parts[0]).chw();
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            let (c, ph, pw) = v.chw();
            assert_eq!((ph, pw), (h, w), "concat spatial mismatch");
            channels += c;
            data.extend_from_slice(&v.data);
        }
        let rg = parts.iter().any(|p| self.needs(p.0));
        self.push(
            Cow::Owned(Tensor::new(vec![channels, h, w], data)),
            Op::Concat(parts.iter().map(|p| p.0).collect()),
            rg,
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape, vb.shape, "add shape mismatch");
        let y = Tensor::new(
            va.shape.clone(),
            va.data.iter().zip(&vb.data).map(|(p, q)| p + q).collect(),
        );
        let rg = self.needs(a.0) || self.needs(b.0);
        self.push(Cow::Owned(y), Op::Add(a.0, b.0), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let y = Tensor::new(
            v.shape.clone(),
            v.data.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect(),
        );
        let rg = self.needs(x.0);
        self.push(Cow::Owned(y), Op::Sigmoid(x.0), rg)
    }

    /// Back-propagates `seed` (the gradient of the objective w.r.t. `out`) and
    /// returns one optional gradient per parameter slot.
    pub fn backward(&self, out: Var, seed: Tensor) -> Vec<Option<Tensor>> {
        assert_eq!(seed.shape, self.value(out).shape, "seed shape");
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        grads[out.0] = Some(seed);

        fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
            match slot {
                Some(t) => t.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for id in (0..=out.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(slot) => accumulate(&mut param_grads[*slot], g),
                Op::Conv { x, w, b, geom } => {
                    let need_x = self.needs(*x);
                    let cg = conv2d_backward(
                        &self.nodes[*x].value,
                        &self.nodes[*w].value,
                        &g,
                        geom,
                        need_x,
                    );
                    if let Some(gx) = cg.input {
                        accumulate(&mut grads[*x], gx);
                    }
                    accumulate(&mut grads[*w], cg.weight);
                    accumulate(&mut grads[*b], cg.bias);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[*x].value;
                    let gx = Tensor::new(
                        g.shape.clone(),
                        g.data
                            .iter()
                            .zip(&xv.data)
                            .map(|(&d, &a)| if a > 0.0 { d } else { 0.0 })
                            .collect(),
                    );
                    accumulate(&mut grads[*x], gx);
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut gx = Tensor::zeros(self.nodes[*x].value.shape.clone());
                    for (&i, &d) in argmax.iter().zip(&g.data) {
                        gx.data[i] += d;
                    }
                    accumulate(&mut grads[*x], gx);
                }
                Op::Resize(x) => {
                    let (c, h, w) = self.nodes[*x].value.chw();
                    let (_, oh, ow) = g.chw();
                    let mut data = Vec::with_capacity(c * h * w);
                    for plane in g.data.chunks(oh * ow) {
                        data.extend(resample::resize_bilinear_adjoint(plane, h, w, oh, ow));
                    }
                    accumulate(&mut grads[*x], Tensor::new(vec![c, h, w], data));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.nodes[p].value.shape.clone();
                        let n: usize = shape.iter().product();
                        if self.needs(p) {
                            let gp = Tensor::new(shape, g.data[offset..offset + n].to_vec());
                            accumulate(&mut grads[p], gp);
                        }
                        offset += n;
                    }
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads[*a], g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads[*b], g);
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = Tensor::new(
                        g.shape.clone(),
                        g.data
                            .iter()
                            .zip(&node.value.data)
                            .map(|(&d, &y)| d * y * (1.0 - y))
                            .collect(),
                    );
                    accumulate(&mut grads[*x], gx);
                }
            }
        }
        param_grads
    }
}

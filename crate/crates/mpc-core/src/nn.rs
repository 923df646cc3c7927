//! Dense and small convolutional layers with hand-written backprop.
//!
//! Every layer caches what its backward pass needs during `forward`;
//! calling `backward` without a preceding forward is a state error.
//! Gradients accumulate until `zero_grad`.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::{standard_normal, SeededRng};
use crate::tensor::Tensor2;
use crate::CoreError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-x)),
            Activation::Identity => x,
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + libm::exp(-pre));
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Tensor2,
    pre: Tensor2,
}

/// Fully connected layer, weights stored input-major (`in_dim x out_dim`).
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub act: Activation,
    pub gw: Tensor2,
    pub gb: Vec<f64>,
    cache: Option<DenseCache>,
}

impl DenseLayer {
    /// He-style Gaussian init scaled by `sqrt(2 / fan_in)`.
    pub fn new_random(in_dim: usize, out_dim: usize, act: Activation, rng: &mut SeededRng) -> Self {
        let scale = libm::sqrt(2.0 / in_dim as f64);
        let data = (0..in_dim * out_dim)
            .map(|_| standard_normal(rng) * scale)
            .collect();
        DenseLayer {
            w: Tensor2 { rows: in_dim, cols: out_dim, data },
            b: vec![0.0; out_dim],
            act,
            gw: Tensor2::zeros(in_dim, out_dim),
            gb: vec![0.0; out_dim],
            cache: None,
        }
    }

    /// All-zero weights and biases (used for policy heads so the initial
    /// action sits at the sigmoid midpoint).
    pub fn new_zeros(in_dim: usize, out_dim: usize, act: Activation) -> Self {
        DenseLayer {
            w: Tensor2::zeros(in_dim, out_dim),
            b: vec![0.0; out_dim],
            act,
            gw: Tensor2::zeros(in_dim, out_dim),
            gb: vec![0.0; out_dim],
            cache: None,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols
    }

    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        let pre = self.pre_activation(input)?;
        let out = pre.map(|x| self.act.apply(x));
        self.cache = Some(DenseCache { input: input.clone(), pre });
        Ok(out)
    }

    /// Forward without caching, for evaluation passes.
    pub fn forward_inference(&self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        Ok(self.pre_activation(input)?.map(|x| self.act.apply(x)))
    }

    fn pre_activation(&self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        if input.cols != self.w.rows {
            return Err(CoreError::Shape(format!(
                "dense_forward: input cols {} != weight rows {}",
                input.cols, self.w.rows
            )));
        }
        let mut pre = input.matmul(&self.w)?;
        for r in 0..pre.rows {
            for (p, &b) in pre.row_mut(r).iter_mut().zip(&self.b) {
                *p += b;
            }
        }
        Ok(pre)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2, CoreError> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| CoreError::State("dense backward without cached forward".to_string()))?;
        if upstream.rows != cache.pre.rows || upstream.cols != cache.pre.cols {
            return Err(CoreError::Shape(format!(
                "dense backward: upstream {}x{} vs output {}x{}",
                upstream.rows, upstream.cols, cache.pre.rows, cache.pre.cols
            )));
        }
        let mut dpre = upstream.clone();
        for (d, &p) in dpre.data.iter_mut().zip(&cache.pre.data) {
            *d *= self.act.derivative(p);
        }
        let gw = cache.input.t_matmul(&dpre)?;
        for (acc, g) in self.gw.data.iter_mut().zip(&gw.data) {
            *acc += g;
        }
        for r in 0..dpre.rows {
            for (acc, g) in self.gb.iter_mut().zip(dpre.row(r)) {
                *acc += g;
            }
        }
        dpre.matmul_t(&self.w)
    }

    pub fn zero_grad(&mut self) {
        self.gw.data.iter_mut().for_each(|g| *g = 0.0);
        self.gb.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Plain stack of dense layers.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    /// `dims = [in, h1, ..., out]`; hidden layers get `hidden_act`, the
    /// final layer `out_act`.
    pub fn new(
        dims: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut SeededRng,
    ) -> Self {
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let act = if i + 2 == dims.len() { out_act } else { hidden_act };
            layers.push(DenseLayer::new_random(dims[i], dims[i + 1], act, rng));
        }
        Mlp { layers }
    }

    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        let mut x = input.clone();
        for layer in &mut self.layers {
            x = layer.forward(&x)?;
        }
        Ok(x)
    }

    pub fn forward_inference(&self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = layer.forward_inference(&x)?;
        }
        Ok(x)
    }

    /// Backprop through the whole stack; returns the input gradient.
    pub fn backward(&mut self, upstream: &Tensor2) -> Result<Tensor2, CoreError> {
        let mut g = upstream.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.zero_grad();
        }
    }

    /// Parameter/gradient slice pairs in a fixed order.
    pub fn params_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out: Vec<(&mut [f64], &[f64])> = Vec::new();
        for layer in &mut self.layers {
            let DenseLayer { w, b, gw, gb, .. } = layer;
            out.push((w.data.as_mut_slice(), gw.data.as_slice()));
            out.push((b.as_mut_slice(), gb.as_slice()));
        }
        out
    }

    pub fn param_hash(&self) -> u64 {
        let mut h = FNV_OFFSET;
        for layer in &self.layers {
            for &x in layer.w.data.iter().chain(&layer.b) {
                h = fnv_f64(h, x);
            }
        }
        h
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
fn fnv_f64(mut h: u64, x: f64) -> u64 {
    for byte in x.to_bits().to_le_bytes() {
        h ^= byte as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// FNV-1a over the raw bits of a parameter stream.
pub fn hash_f64s<'a>(values: impl Iterator<Item = &'a f64>) -> u64 {
    let mut h = FNV_OFFSET;
    for &x in values {
        h = fnv_f64(h, x);
    }
    h
}

// ---------------------------------------------------------------------------
// Minimal 2-D convolution stack for the MNIST backbone.
// ---------------------------------------------------------------------------

/// 3x3 same-padding convolution, stride 1, ReLU fused in.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub in_ch: usize,
    pub out_ch: usize,
    /// Weights `[out_ch][in_ch][3][3]`, flat.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gw: Vec<f64>,
    pub gb: Vec<f64>,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    batch: usize,
    h: usize,
    w: usize,
}

const K: usize = 3;
const PAD: isize = 1;

impl Conv2d {
    pub fn new_random(in_ch: usize, out_ch: usize, rng: &mut SeededRng) -> Self {
        let fan_in = in_ch * K * K;
        let scale = libm::sqrt(2.0 / fan_in as f64);
        let w = (0..out_ch * in_ch * K * K)
            .map(|_| standard_normal(rng) * scale)
            .collect();
        Conv2d {
            in_ch,
            out_ch,
            w,
            b: vec![0.0; out_ch],
            gw: vec![0.0; out_ch * in_ch * K * K],
            gb: vec![0.0; out_ch],
            cache: None,
        }
    }

    #[inline]
    fn widx(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_ch + ic) * K + ky) * K + kx
    }

    /// `input` is `[batch][in_ch][h][w]` flat; returns ReLU(conv) the same way.
    pub fn forward(&mut self, input: &[f64], batch: usize, h: usize, wd: usize) -> Vec<f64> {
        let mut pre = vec![0.0; batch * self.out_ch * h * wd];
        for n in 0..batch {
            let in_base = n * self.in_ch * h * wd;
            for oc in 0..self.out_ch {
                let out_base = (n * self.out_ch + oc) * h * wd;
                for ic in 0..self.in_ch {
                    let ch_base = in_base + ic * h * wd;
                    for ky in 0..K {
                        for kx in 0..K {
                            let wv = self.w[self.widx(oc, ic, ky, kx)];
                            if wv == 0.0 {
                                continue;
                            }
                            let dy = ky as isize - PAD;
                            let dx = kx as isize - PAD;
                            let y0 = (-dy).max(0) as usize;
                            let y1 = (h as isize - dy).min(h as isize) as usize;
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (wd as isize - dx).min(wd as isize) as usize;
                            for y in y0..y1 {
                                let src = ch_base + ((y as isize + dy) as usize) * wd;
                                let dst = out_base + y * wd;
                                for x in x0..x1 {
                                    pre[dst + x] += wv * input[src + (x as isize + dx) as usize];
                                }
                            }
                        }
                    }
                }
                let out_base = (n * self.out_ch + oc) * h * wd;
                let bias = self.b[oc];
                for v in &mut pre[out_base..out_base + h * wd] {
                    *v += bias;
                }
            }
        }
        let out = pre.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        self.cache = Some(ConvCache { input: input.to_vec(), pre, batch, h, w: wd });
        out
    }

    /// Returns the gradient with respect to the input.
    pub fn backward(&mut self, upstream: &[f64]) -> Result<Vec<f64>, CoreError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| CoreError::State("conv backward without forward".to_string()))?;
        let (batch, h, wd) = (cache.batch, cache.h, cache.w);
        let mut dpre = upstream.to_vec();
        for (d, &p) in dpre.iter_mut().zip(&cache.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        let mut dinput = vec![0.0; cache.input.len()];
        for n in 0..batch {
            let in_base = n * self.in_ch * h * wd;
            for oc in 0..self.out_ch {
                let out_base = (n * self.out_ch + oc) * h * wd;
                let mut gb = 0.0;
                for &d in &dpre[out_base..out_base + h * wd] {
                    gb += d;
                }
                self.gb[oc] += gb;
                for ic in 0..self.in_ch {
                    let ch_base = in_base + ic * h * wd;
                    for ky in 0..K {
                        for kx in 0..K {
                            let dy = ky as isize - PAD;
                            let dx = kx as isize - PAD;
                            let y0 = (-dy).max(0) as usize;
                            let y1 = (h as isize - dy).min(h as isize) as usize;
                            let x0 = (-dx).max(0) as usize;
                            let x1 = (wd as isize - dx).min(wd as isize) as usize;
                            let wv = self.w[self.widx(oc, ic, ky, kx)];
                            let mut gw = 0.0;
                            for y in y0..y1 {
                                let src = ch_base + ((y as isize + dy) as usize) * wd;
                                let dst = out_base + y * wd;
                                for x in x0..x1 {
                                    let d = dpre[dst + x];
                                    let xi = src + (x as isize + dx) as usize;
                                    gw += d * cache.input[xi];
                                    dinput[xi] += d * wv;
                                }
                            }
                            let wi = self.widx(oc, ic, ky, kx);
                            self.gw[wi] += gw;
                        }
                    }
                }
            }
        }
        Ok(dinput)
    }

    pub fn zero_grad(&mut self) {
        self.gw.iter_mut().for_each(|g| *g = 0.0);
        self.gb.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// 2x2 max pooling, stride 2.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Vec<usize>,
    in_len: usize,
}

impl MaxPool2 {
    /// `input` is `[batch*ch][h][w]` flat with `h`, `w` even.
    pub fn forward(&mut self, input: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = (h / 2, w / 2);
        let mut out = vec![0.0; planes * oh * ow];
        self.argmax = vec![0; planes * oh * ow];
        self.in_len = input.len();
        for p in 0..planes {
            let ib = p * h * w;
            let ob = p * oh * ow;
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_i = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let i = ib + (2 * y + dy) * w + 2 * x + dx;
                            if input[i] > best {
                                best = input[i];
                                best_i = i;
                            }
                        }
                    }
                    out[ob + y * ow + x] = best;
                    self.argmax[ob + y * ow + x] = best_i;
                }
            }
        }
        out
    }

    pub fn backward(&self, upstream: &[f64]) -> Vec<f64> {
        let mut dinput = vec![0.0; self.in_len];
        for (&d, &i) in upstream.iter().zip(&self.argmax) {
            dinput[i] += d;
        }
        dinput
    }
}

/// conv(c1)-pool-conv(c2)-pool-dense backbone for 28x28 single-channel
/// images.
#[derive(Debug, Clone)]
pub struct ConvNet {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc: DenseLayer,
    pool1: MaxPool2,
    pool2: MaxPool2,
    pub side: usize,
    batch: usize,
}

impl ConvNet {
    pub fn new(side: usize, c1: usize, c2: usize, classes: usize, rng: &mut SeededRng) -> Self {
        let pooled = side / 4;
        ConvNet {
            conv1: Conv2d::new_random(1, c1, rng),
            conv2: Conv2d::new_random(c1, c2, rng),
            fc: DenseLayer::new_random(c2 * pooled * pooled, classes, Activation::Identity, rng),
            pool1: MaxPool2::default(),
            pool2: MaxPool2::default(),
            side,
            batch: 0,
        }
    }

    pub fn forward(&mut self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        let s = self.side;
        if input.cols != s * s {
            return Err(CoreError::Shape(format!(
                "convnet expects {} pixels per row, got {}",
                s * s,
                input.cols
            )));
        }
        let batch = input.rows;
        self.batch = batch;
        let a1 = self.conv1.forward(&input.data, batch, s, s);
        let p1 = self.pool1.forward(&a1, batch * self.conv1.out_ch, s, s);
        let (h2, w2) = (s / 2, s / 2);
        let a2 = self.conv2.forward(&p1, batch, h2, w2);
        let p2 = self.pool2.forward(&a2, batch * self.conv2.out_ch, h2, w2);
        let flat = Tensor2::from_vec(batch, self.fc.in_dim(), p2)?;
        self.fc.forward(&flat)
    }

    pub fn forward_inference(&mut self, input: &Tensor2) -> Result<Tensor2, CoreError> {
        // conv caches are overwritten on the next training forward; reuse
        // the training path for simplicity.
        self.forward(input)
    }

    pub fn backward(&mut self, upstream: &Tensor2) -> Result<(), CoreError> {
        let dflat = self.fc.backward(upstream)?;
        let dp2 = self.pool2.backward(&dflat.data);
        let da2 = self.conv2.backward(&dp2)?;
        let dp1 = self.pool1.backward(&da2);
        self.conv1.backward(&dp1)?;
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.conv1.zero_grad();
        self.conv2.zero_grad();
        self.fc.zero_grad();
    }

    pub fn params_grads(&mut self) -> Vec<(&mut [f64], &[f64])> {
        let mut out: Vec<(&mut [f64], &[f64])> = Vec::new();
        let Conv2d { w, b, gw, gb, .. } = &mut self.conv1;
        out.push((w.as_mut_slice(), gw.as_slice()));
        out.push((b.as_mut_slice(), gb.as_slice()));
        let Conv2d { w, b, gw, gb, .. } = &mut self.conv2;
        out.push((w.as_mut_slice(), gw.as_slice()));
        out.push((b.as_mut_slice(), gb.as_slice()));
        let DenseLayer { w, b, gw, gb, .. } = &mut self.fc;
        out.push((w.data.as_mut_slice(), gw.data.as_slice()));
        out.push((b.as_mut_slice(), gb.as_slice()));
        out
    }

    pub fn param_hash(&self) -> u64 {
        hash_f64s(
            self.conv1
                .w
                .iter()
                .chain(&self.conv1.b)
                .chain(&self.conv2.w)
                .chain(&self.conv2.b)
                .chain(&self.fc.w.data)
                .chain(&self.fc.b),
        )
    }
}

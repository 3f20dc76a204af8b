use rand::Rng;
use rayon::prelude::*;

use super::conv::{gemm, ConvGeom};
use super::spec::{Activation, LayerKind, ModelSpec, Stride};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, ImageF};
use crate::rng;

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Batch normalization uses batch statistics in `Train` and running
/// statistics in `Eval`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// Parameters of one layer. Convolution weights are stored as
/// `[c_out, c_in * k * k]`; deconvolution weights as `[c_in, c_out * k * k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

/// Gradients with the same layout as [`LayerParams`]. `gamma` and `beta`
/// are empty for layers without batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrads>,
}

impl Gradients {
    /// Flattened view aligned with [`Model::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.push(g.weight.as_slice());
            out.push(g.bias.as_slice());
            if !g.gamma.is_empty() {
                out.push(g.gamma.as_slice());
                out.push(g.beta.as_slice());
            }
        }
        out
    }
}

/// Intermediate values of a training-mode forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input of layer `l`; the last entry is the output.
    pub inputs: Vec<Tensor>,
    xhat: Vec<Option<Tensor>>,
    inv_std: Vec<Vec<f64>>,
    batch_mean: Vec<Vec<f64>>,
    batch_var: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        self.inputs.last().expect("cache holds at least the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<LayerParams>,
}

/// Per-layer shape bookkeeping shared by forward and backward.
#[derive(Debug, Clone, Copy)]
struct Plan {
    cin: usize,
    cout: usize,
    deconv: bool,
    geom: ConvGeom,
    out_h: usize,
    out_w: usize,
}

impl Model {
    /// Builds a model with fan-in scaled uniform initialization: weights in
    /// `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]` for ReLU layers and
    /// `sqrt(3 / fan_in)` for the sigmoid output; zero biases; identity
    /// batch normalization.
    pub fn build(spec: ModelSpec, init_seed: u64) -> Result<Self> {
        spec.validate()?;
        let layers = (0..spec.layers.len())
            .map(|idx| {
                let l = &spec.layers[idx];
                let (cin, cout, k) = (spec.in_channels(idx), spec.filters(idx), l.kernel);
                let fan_in = if l.kind == LayerKind::Deconv {
                    // Each output pixel of a stride-2 transposed conv sees (k/2)^2 taps per input channel.
                    cin * (k / 2) * (k / 2)
                } else {
                    cin * k * k
                };
                let gain = match l.activation {
                    Activation::Relu => 6.0,
                    Activation::Sigmoid => 3.0,
                };
                let limit = (gain / fan_in as f64).sqrt();
                let mut r = rng::stream(init_seed, &format!("init/l{idx}"));
                let weight = (0..cin * cout * k * k).map(|_| r.random_range(-limit..=limit)).collect();
                LayerParams {
                    weight,
                    bias: vec![0.0; cout],
                    bn: l.has_batchnorm.then(|| BatchNorm::new(cout)),
                }
            })
            .collect();
        Ok(Self { spec, layers })
    }

    /// Scalar parameter count of each layer (weights, biases, batch-norm
    /// scale and shift; running statistics excluded).
    pub fn layer_param_counts(&self) -> Vec<usize> {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len() + l.bn.as_ref().map_or(0, |b| b.gamma.len() + b.beta.len()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_param_counts().iter().sum()
    }

    /// Names of the trainable tensors, in [`trainable_mut`](Self::trainable_mut) order.
    pub fn trainable_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let n = i + 1;
            names.push(format!("l{n:02}.weight"));
            names.push(format!("l{n:02}.bias"));
            if l.bn.is_some() {
                names.push(format!("l{n:02}.bn.gamma"));
                names.push(format!("l{n:02}.bn.beta"));
            }
        }
        names
    }

    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some(bn) = &l.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    /// Every stored tensor, including running statistics, with its name and
    /// logical shape. Used for checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            let n = i + 1;
            let spec = &self.spec.layers[i];
            let (cin, cout, k) = (self.spec.in_channels(i), self.spec.filters(i), spec.kernel);
            let wshape = if spec.kind == LayerKind::Deconv {
                vec![cin, cout, k, k]
            } else {
                vec![cout, cin, k, k]
            };
            out.push((format!("l{n:02}.weight"), wshape, &l.weight));
            out.push((format!("l{n:02}.bias"), vec![cout], &l.bias));
            if let Some(bn) = &l.bn {
                out.push((format!("l{n:02}.bn.gamma"), vec![cout], &bn.gamma));
                out.push((format!("l{n:02}.bn.beta"), vec![cout], &bn.beta));
                out.push((format!("l{n:02}.bn.running_mean"), vec![cout], &bn.running_mean));
                out.push((format!("l{n:02}.bn.running_var"), vec![cout], &bn.running_var));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            let n = i + 1;
            out.push((format!("l{n:02}.weight"), &mut l.weight));
            out.push((format!("l{n:02}.bias"), &mut l.bias));
            if let Some(bn) = &mut l.bn {
                out.push((format!("l{n:02}.bn.gamma"), &mut bn.gamma));
                out.push((format!("l{n:02}.bn.beta"), &mut bn.beta));
                out.push((format!("l{n:02}.bn.running_mean"), &mut bn.running_mean));
                out.push((format!("l{n:02}.bn.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let m = self.spec.size_multiple();
        if x.c != self.spec.input_channels {
            return Err(Error::Shape(format!(
                "expected {} input channels, got {}",
                self.spec.input_channels, x.c
            )));
        }
        if x.n == 0 || x.h == 0 || x.w == 0 {
            return Err(Error::Shape(format!("empty input {:?}", x.shape())));
        }
        if !x.h.is_multiple_of(m) || !x.w.is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "input {}x{} is not divisible by {m}; pad the image to {}x{}",
                x.h,
                x.w,
                x.h.next_multiple_of(m),
                x.w.next_multiple_of(m)
            )));
        }
        Ok(())
    }

    fn plan(&self, idx: usize, h: usize, w: usize) -> Plan {
        let l = &self.spec.layers[idx];
        let (cin, cout, k) = (self.spec.in_channels(idx), self.spec.filters(idx), l.kernel);
        match l.stride {
            Stride::Up => Plan {
                cin,
                cout,
                deconv: true,
                // Adjoint of a stride-2 conv over the (2h x 2w) output.
                geom: ConvGeom::same(cout, 2 * h, 2 * w, k, 2, 1),
                out_h: 2 * h,
                out_w: 2 * w,
            },
            s => {
                let stride = if s == Stride::Down { 2 } else { 1 };
                let geom = ConvGeom::same(cin, h, w, k, stride, l.dilation);
                Plan {
                    cin,
                    cout,
                    deconv: false,
                    geom,
                    out_h: geom.oh,
                    out_w: geom.ow,
                }
            }
        }
    }

    /// Linear part (convolution plus bias) of layer `idx`.
    fn linear(&self, idx: usize, x: &Tensor) -> Tensor {
        let p = self.plan(idx, x.h, x.w);
        let params = &self.layers[idx];
        let mut out = Tensor::zeros(x.n, p.cout, p.out_h, p.out_w);
        let out_len = out.sample_len();
        let plane = p.out_h * p.out_w;
        out.data.par_chunks_mut(out_len).enumerate().for_each(|(s, y)| {
            let xs = x.sample(s);
            let g = p.geom;
            if p.deconv {
                let mut col = vec![0.0; g.rows() * g.cols()];
                // col = W^T x, W is [cin, cout*k*k], x is [cin, h*w].
                gemm(g.rows(), p.cin, g.cols(), &params.weight, true, xs, false, 0.0, &mut col);
                g.col2im(&col, y);
            } else {
                let mut col = vec![0.0; g.rows() * g.cols()];
                g.im2col(xs, &mut col);
                gemm(p.cout, g.rows(), g.cols(), &params.weight, false, &col, false, 0.0, y);
            }
            for (c, b) in params.bias.iter().enumerate() {
                y[c * plane..(c + 1) * plane].iter_mut().for_each(|v| *v += b);
            }
        });
        out
    }

    /// Eval- or train-mode forward pass. Pure: running statistics are not
    /// updated (see [`forward_train`](Self::forward_train)).
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(x)?;
        let mut a = x.clone();
        for idx in 0..self.layers.len() {
            let mut z = self.linear(idx, &a);
            match (&self.layers[idx].bn, mode) {
                (Some(bn), Mode::Eval) => {
                    let inv: Vec<f64> = bn.running_var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    normalize(&mut z, &bn.running_mean, &inv, &bn.gamma, &bn.beta);
                }
                (Some(bn), Mode::Train) => {
                    let (mean, var) = channel_stats(&z);
                    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                    normalize(&mut z, &mean, &inv, &bn.gamma, &bn.beta);
                }
                (None, _) => {}
            }
            activate(&mut z, self.spec.layers[idx].activation);
            a = z;
        }
        Ok(a)
    }

    /// Training-mode forward pass that records what backprop needs.
    pub fn forward_train(&self, x: &Tensor) -> Result<ForwardCache> {
        self.check_input(x)?;
        let n = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n + 1),
            xhat: Vec::with_capacity(n),
            inv_std: Vec::with_capacity(n),
            batch_mean: Vec::with_capacity(n),
            batch_var: Vec::with_capacity(n),
        };
        cache.inputs.push(x.clone());
        for idx in 0..n {
            let mut z = self.linear(idx, cache.inputs.last().expect("non-empty"));
            if let Some(bn) = &self.layers[idx].bn {
                let (mean, var) = channel_stats(&z);
                let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();
                let zeros = vec![0.0; mean.len()];
                let ones = vec![1.0; mean.len()];
                normalize(&mut z, &mean, &inv, &ones, &zeros);
                cache.xhat.push(Some(z.clone()));
                affine(&mut z, &bn.gamma, &bn.beta);
                cache.inv_std.push(inv);
                cache.batch_mean.push(mean);
                cache.batch_var.push(var);
            } else {
                cache.xhat.push(None);
                cache.inv_std.push(Vec::new());
                cache.batch_mean.push(Vec::new());
                cache.batch_var.push(Vec::new());
            }
            activate(&mut z, self.spec.layers[idx].activation);
            cache.inputs.push(z);
        }
        Ok(cache)
    }

    /// Moves running statistics towards the batch statistics of `cache`
    /// (momentum [`BN_MOMENTUM`], unbiased batch variance).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let Some(bn) = &mut layer.bn else { continue };
            let z = &cache.inputs[idx + 1];
            let count = (z.n * z.h * z.w) as f64;
            let correction = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            for c in 0..bn.running_mean.len() {
                bn.running_mean[c] = BN_MOMENTUM * bn.running_mean[c] + (1.0 - BN_MOMENTUM) * cache.batch_mean[idx][c];
                bn.running_var[c] =
                    BN_MOMENTUM * bn.running_var[c] + (1.0 - BN_MOMENTUM) * cache.batch_var[idx][c] * correction;
            }
        }
    }

    /// Backpropagates `grad_out` (gradient of a scalar w.r.t. the network
    /// output) through a training-mode pass.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        let out = cache.output();
        if grad_out.shape() != out.shape() {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match output {:?}",
                grad_out.shape(),
                out.shape()
            )));
        }
        let mut grads: Vec<LayerGrads> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out.clone();
        for idx in (0..self.layers.len()).rev() {
            let y = &cache.inputs[idx + 1];
            // Through the activation.
            match self.spec.layers[idx].activation {
                Activation::Relu => delta.data.iter_mut().zip(&y.data).for_each(|(d, &v)| {
                    if v <= 0.0 {
                        *d = 0.0
                    }
                }),
                Activation::Sigmoid => delta.data.iter_mut().zip(&y.data).for_each(|(d, &v)| *d *= v * (1.0 - v)),
            }
            // Through batch normalization.
            let (mut dgamma, mut dbeta) = (Vec::new(), Vec::new());
            if let (Some(bn), Some(xhat)) = (&self.layers[idx].bn, &cache.xhat[idx]) {
                let (dg, db) = bn_backward(&mut delta, xhat, &bn.gamma, &cache.inv_std[idx]);
                dgamma = dg;
                dbeta = db;
            }
            let x = &cache.inputs[idx];
            let (dw, db, dx) = self.linear_backward(idx, x, &delta, idx > 0);
            grads.push(LayerGrads {
                weight: dw,
                bias: db,
                gamma: dgamma,
                beta: dbeta,
            });
            if let Some(dx) = dx {
                delta = dx;
            }
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }

    fn linear_backward(&self, idx: usize, x: &Tensor, dz: &Tensor, need_dx: bool) -> (Vec<f64>, Vec<f64>, Option<Tensor>) {
        let p = self.plan(idx, x.h, x.w);
        let g = p.geom;
        let params = &self.layers[idx];
        let wlen = params.weight.len();
        let plane = dz.plane();
        let per_sample: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..x.n)
            .into_par_iter()
            .map(|s| {
                let xs = x.sample(s);
                let ds = dz.sample(s);
                let mut dw = vec![0.0; wlen];
                let mut dx = if need_dx { vec![0.0; xs.len()] } else { Vec::new() };
                let mut col = vec![0.0; g.rows() * g.cols()];
                if p.deconv {
                    // y = col2im(W^T x): dcol = im2col(dy).
                    g.im2col(ds, &mut col);
                    // dW [cin, rows] = x [cin, cols] * dcol^T
                    gemm(p.cin, g.cols(), g.rows(), xs, false, &col, true, 0.0, &mut dw);
                    if need_dx {
                        gemm(p.cin, g.rows(), g.cols(), &params.weight, false, &col, false, 0.0, &mut dx);
                    }
                } else {
                    g.im2col(xs, &mut col);
                    gemm(p.cout, g.cols(), g.rows(), ds, false, &col, true, 0.0, &mut dw);
                    if need_dx {
                        let mut dcol = vec![0.0; col.len()];
                        gemm(g.rows(), p.cout, g.cols(), &params.weight, true, ds, false, 0.0, &mut dcol);
                        g.col2im(&dcol, &mut dx);
                    }
                }
                let db = (0..p.cout).map(|c| ds[c * plane..(c + 1) * plane].iter().sum()).collect();
                (dw, db, dx)
            })
            .collect();
        let mut dw = vec![0.0; wlen];
        let mut db = vec![0.0; p.cout];
        let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
        // Sequential reduction keeps results independent of thread count.
        for (s, (w, b, d)) in per_sample.into_iter().enumerate() {
            dw.iter_mut().zip(&w).for_each(|(a, v)| *a += v);
            db.iter_mut().zip(&b).for_each(|(a, v)| *a += v);
            if let Some(t) = &mut dx {
                let len = t.sample_len();
                t.data[s * len..(s + 1) * len].copy_from_slice(&d);
            }
        }
        (dw, db, dx)
    }
}

/// Per-channel mean and biased variance over batch and space.
fn channel_stats(z: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let plane = z.plane();
    let count = (z.n * plane) as f64;
    let mut mean = vec![0.0; z.c];
    let mut var = vec![0.0; z.c];
    for c in 0..z.c {
        let chunks = || (0..z.n).map(move |s| &z.data[(s * z.c + c) * plane..(s * z.c + c + 1) * plane]);
        let m = chunks().flat_map(|p| p.iter()).sum::<f64>() / count;
        let v = chunks().flat_map(|p| p.iter()).map(|x| (x - m) * (x - m)).sum::<f64>() / count;
        mean[c] = m;
        var[c] = v;
    }
    (mean, var)
}

fn for_each_channel(z: &mut Tensor, mut f: impl FnMut(usize, &mut [f64])) {
    let (c, plane) = (z.c, z.plane());
    for (i, chunk) in z.data.chunks_mut(plane).enumerate() {
        f(i % c, chunk);
    }
}

fn normalize(z: &mut Tensor, mean: &[f64], inv_std: &[f64], gamma: &[f64], beta: &[f64]) {
    for_each_channel(z, |c, p| {
        let (m, s, g, b) = (mean[c], inv_std[c], gamma[c], beta[c]);
        p.iter_mut().for_each(|v| *v = g * (*v - m) * s + b);
    });
}

fn affine(z: &mut Tensor, gamma: &[f64], beta: &[f64]) {
    for_each_channel(z, |c, p| {
        let (g, b) = (gamma[c], beta[c]);
        p.iter_mut().for_each(|v| *v = g * *v + b);
    });
}

fn activate(z: &mut Tensor, act: Activation) {
    match act {
        Activation::Relu => z.data.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => z.data.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp())),
    }
}

/// Turns `delta` (gradient w.r.t. the BN output) into the gradient w.r.t. the
/// BN input and returns `(dgamma, dbeta)`.
fn bn_backward(delta: &mut Tensor, xhat: &Tensor, gamma: &[f64], inv_std: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nc, plane) = (delta.c, delta.plane());
    let count = (delta.n * plane) as f64;
    let mut dgamma = vec![0.0; nc];
    let mut dbeta = vec![0.0; nc];
    for (i, (d, xh)) in delta.data.chunks(plane).zip(xhat.data.chunks(plane)).enumerate() {
        let c = i % nc;
        for (dv, xv) in d.iter().zip(xh) {
            dgamma[c] += dv * xv;
            dbeta[c] += dv;
        }
    }
    let (g, s) = (gamma.to_vec(), inv_std.to_vec());
    for (i, (d, xh)) in delta.data.chunks_mut(plane).zip(xhat.data.chunks(plane)).enumerate() {
        let c = i % nc;
        // dz = gamma * inv_std / M * (M dy - sum dy - xhat * sum(dy xhat))
        let k = g[c] * s[c] / count;
        for (dv, xv) in d.iter_mut().zip(xh) {
            *dv = k * (count * *dv - dbeta[c] - xv * dgamma[c]);
        }
    }
    (dgamma, dbeta)
}

/// Stacks `(R, G, B, retain, restore)` into a `1 x 5 x m x n` tensor.
pub fn assemble_input(img: &ImageF, retain: &BinaryMask, restore: &BinaryMask) -> Result<Tensor> {
    for m in [retain, restore] {
        if m.dims() != img.dims() {
            return Err(Error::DimensionMismatch {
                expected: img.dims(),
                got: m.dims(),
            });
        }
    }
    let (h, w) = img.dims();
    let plane = h * w;
    let mut data = vec![0.0; 5 * plane];
    for (p, px) in img.data().chunks(3).enumerate() {
        for k in 0..3 {
            data[k * plane + p] = px[k];
        }
    }
    for (p, (&a, &b)) in retain.data().iter().zip(restore.data()).enumerate() {
        data[3 * plane + p] = f64::from(a);
        data[4 * plane + p] = f64::from(b);
    }
    Tensor::from_vec(1, 5, h, w, data)
}

/// Splits an `N x 3 x m x n` network output into images.
pub fn tensor_to_images(t: &Tensor) -> Result<Vec<ImageF>> {
    if t.c != 3 {
        return Err(Error::Shape(format!("expected 3 channels, got {}", t.c)));
    }
    let plane = t.plane();
    (0..t.n)
        .map(|s| {
            let x = t.sample(s);
            let mut data = Vec::with_capacity(3 * plane);
            for p in 0..plane {
                data.extend((0..3).map(|k| x[k * plane + p]));
            }
            ImageF::new(t.h, t.w, data)
        })
        .collect()
}

/// Converts images to an `N x 3 x m x n` tensor (the layout of the network
/// output).
pub fn images_to_tensor(images: &[&ImageF]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Shape("no images".into()))?;
    let (h, w) = first.dims();
    let plane = h * w;
    let mut data = vec![0.0; images.len() * 3 * plane];
    for (s, img) in images.iter().enumerate() {
        if img.dims() != (h, w) {
            return Err(Error::DimensionMismatch {
                expected: (h, w),
                got: img.dims(),
            });
        }
        let out = &mut data[s * 3 * plane..(s + 1) * 3 * plane];
        for (p, px) in img.data().chunks(3).enumerate() {
            for k in 0..3 {
                out[k * plane + p] = px[k];
            }
        }
    }
    Tensor::from_vec(images.len(), 3, h, w, data)
}

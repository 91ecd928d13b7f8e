//! Three-layer convolutional pixel classifier with hand-written backpropagation.
//!
//! `conv3x3(3 -> 8) -> ReLU -> conv3x3(8 -> 16) -> ReLU -> conv3x3(16 -> 2) -> softmax`,
//! zero "same" padding throughout. Channel 0 of the softmax is the nuclei probability.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormalizedImage;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::loss::{LossTarget, ProbabilityMap};
use crate::scalar::Scalar;

/// `(in_channels, out_channels)` of each 3x3 convolution.
pub const ARCHITECTURE: [(usize, usize); 3] = [(3, 8), (8, 16), (16, 2)];

/// Smallest input side for which every output pixel has a full receptive field.
pub const MIN_SIDE: usize = 7;

const K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    cin: usize,
    cout: usize,
    w_off: usize,
    b_off: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.w_off..self.w_off + self.cout * self.cin * K * K
    }

    fn bias(&self) -> std::ops::Range<usize> {
        self.b_off..self.b_off + self.cout
    }
}

fn layer_shapes() -> [LayerShape; 3] {
    let mut off = 0;
    ARCHITECTURE.map(|(cin, cout)| {
        let w_off = off;
        off += cin * cout * K * K;
        let b_off = off;
        off += cout;
        LayerShape {
            cin,
            cout,
            w_off,
            b_off,
        }
    })
}

/// Total number of trainable scalars.
pub fn param_count() -> usize {
    let last = layer_shapes()[2];
    last.b_off + last.cout
}

/// Every weight and bias of the network in one flat buffer. Weights of a layer are laid out
/// `[out][in][ky][kx]`, followed by that layer's biases. Gradients share the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    data: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRecord {
    layers: Vec<LayerRecord>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros() -> Self {
        Self {
            data: vec![T::zero(); param_count()],
        }
    }

    /// Uniform(-a, a) weights with `a = sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with(&mut rng)
    }

    pub fn init_with(rng: &mut impl Rng) -> Self {
        let mut params = Self::zeros();
        for shape in layer_shapes() {
            let fan_in = (shape.cin * K * K) as f64;
            let fan_out = (shape.cout * K * K) as f64;
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut params.data[shape.weights()] {
                *w = T::of(rng.random_range(-a..a));
            }
        }
        params
    }

    pub fn from_vec(data: Vec<T>) -> Result<Self> {
        if data.len() != param_count() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameters, got {}",
                param_count(),
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            data: self.data.iter().map(|&v| U::of(v.f64())).collect(),
        }
    }

    /// Weights of layer `l` as `[out][in][ky][kx]`.
    pub fn layer_weights(&self, l: usize) -> &[T] {
        &self.data[layer_shapes()[l].weights()]
    }

    pub fn layer_bias(&self, l: usize) -> &[T] {
        &self.data[layer_shapes()[l].bias()]
    }

    pub fn layer_weights_mut(&mut self, l: usize) -> &mut [T] {
        let r = layer_shapes()[l].weights();
        &mut self.data[r]
    }

    /// Index of the layer that owns flat parameter `i`.
    pub fn layer_of(i: usize) -> usize {
        layer_shapes()
            .iter()
            .position(|s| i < s.b_off + s.cout)
            .expect("parameter index in range")
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFiniteParams {
                layer: Self::layer_of(i),
            }),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let layers = layer_shapes()
            .iter()
            .map(|s| LayerRecord {
                in_channels: s.cin,
                out_channels: s.cout,
                weights: self.data[s.weights()].iter().map(|v| v.f64() as f32).collect(),
                bias: self.data[s.bias()].iter().map(|v| v.f64() as f32).collect(),
            })
            .collect();
        serde_json::to_value(ParamsRecord { layers }).expect("plain data serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let record: ParamsRecord =
            serde_json::from_value(value).map_err(|e| Error::InvalidInput(format!("model parameters: {e}")))?;
        if record.layers.len() != ARCHITECTURE.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} layers, got {}",
                ARCHITECTURE.len(),
                record.layers.len()
            )));
        }
        let mut data = Vec::with_capacity(param_count());
        for (layer, shape) in record.layers.iter().zip(layer_shapes()) {
            if (layer.in_channels, layer.out_channels) != (shape.cin, shape.cout)
                || layer.weights.len() != shape.weights().len()
                || layer.bias.len() != shape.cout
            {
                return Err(Error::InvalidInput(format!(
                    "layer shape mismatch: expected {}->{}",
                    shape.cin, shape.cout
                )));
            }
            data.extend(layer.weights.iter().map(|&v| T::of(f64::from(v))));
            data.extend(layer.bias.iter().map(|&v| T::of(f64::from(v))));
        }
        let params = Self { data };
        params.check_finite()?;
        Ok(params)
    }
}

/// Intermediate tensors kept for the backward pass.
struct Cache<T> {
    width: usize,
    height: usize,
    /// Input of each layer, channel-major.
    inputs: [Vec<T>; 3],
    nuclei: Vec<T>,
}

fn check_input(image: &NormalizedImage) -> Result<()> {
    let (w, h) = image.dims();
    if w < MIN_SIDE || h < MIN_SIDE {
        return Err(Error::ImageTooSmall { width: w, height: h });
    }
    Ok(())
}

/// Per-pixel nuclei/background probabilities for `image`.
pub fn forward<T: Scalar>(params: &ModelParams<T>, image: &NormalizedImage) -> Result<ProbabilityMap<T>> {
    params.check_finite()?;
    check_input(image)?;
    let cache = forward_cached(params, image);
    let (w, h) = (cache.width, cache.height);
    let nuclei = Grid::from_vec(w, h, cache.nuclei)?;
    let background = nuclei.map(|&p| T::one() - p);
    Ok(ProbabilityMap { nuclei, background })
}

fn forward_cached<T: Scalar>(params: &ModelParams<T>, image: &NormalizedImage) -> Cache<T> {
    let (w, h) = image.dims();
    let shapes = layer_shapes();
    let x0: Vec<T> = image.planes().iter().map(|&v| T::of(f64::from(v))).collect();

    let mut a1 = conv3x3(
        &x0,
        shapes[0].cin,
        w,
        h,
        params.layer_weights(0),
        params.layer_bias(0),
        shapes[0].cout,
    );
    relu_in_place(&mut a1);
    let mut a2 = conv3x3(
        &a1,
        shapes[1].cin,
        w,
        h,
        params.layer_weights(1),
        params.layer_bias(1),
        shapes[1].cout,
    );
    relu_in_place(&mut a2);
    let logits = conv3x3(
        &a2,
        shapes[2].cin,
        w,
        h,
        params.layer_weights(2),
        params.layer_bias(2),
        shapes[2].cout,
    );

    let n = w * h;
    let nuclei = (0..n).map(|i| sigmoid(logits[i] - logits[n + i])).collect();
    Cache {
        width: w,
        height: h,
        inputs: [x0, a1, a2],
        nuclei,
    }
}

/// Sum of the given losses on one image and the gradient of that sum with respect to every
/// parameter. Individual loss values are returned in the order of `targets`.
pub fn loss_gradient<T: Scalar>(
    params: &ModelParams<T>,
    image: &NormalizedImage,
    targets: &[LossTarget<'_>],
) -> Result<(Vec<f64>, ModelParams<T>)> {
    params.check_finite()?;
    check_input(image)?;
    let cache = forward_cached(params, image);
    let (w, h) = (cache.width, cache.height);
    let n = w * h;
    let output = ProbabilityMap::from_nuclei(Grid::from_vec(w, h, cache.nuclei.clone())?);

    let mut losses = Vec::with_capacity(targets.len());
    let mut d_prob = vec![T::zero(); n];
    for target in targets {
        let (loss, grad) = target.loss_and_grad(&output)?;
        losses.push(loss);
        for (acc, g) in d_prob.iter_mut().zip(grad.iter()) {
            *acc = *acc + *g;
        }
    }

    // Two-way softmax: p = sigmoid(l0 - l1).
    let mut d_logits = vec![T::zero(); 2 * n];
    for i in 0..n {
        let p = cache.nuclei[i];
        let g = d_prob[i] * p * (T::one() - p);
        d_logits[i] = g;
        d_logits[n + i] = -g;
    }

    let shapes = layer_shapes();
    let mut grad = ModelParams::zeros();
    let mut d_out = d_logits;
    for l in (0..3).rev() {
        let s = shapes[l];
        let input = &cache.inputs[l];
        let (gw, rest) = grad.data[s.w_off..].split_at_mut(s.cout * s.cin * K * K);
        let gb = &mut rest[..s.cout];
        conv3x3_param_grad(input, s.cin, w, h, &d_out, s.cout, gw, gb);
        if l > 0 {
            let mut d_in = conv3x3_input_grad(&d_out, s.cout, w, h, params.layer_weights(l), s.cin);
            // input to layer l is relu(pre-activation); relu' = [activation > 0]
            for (d, &a) in d_in.iter_mut().zip(input) {
                if a <= T::zero() {
                    *d = T::zero();
                }
            }
            d_out = d_in;
        }
    }
    Ok((losses, grad))
}

#[inline]
fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

fn relu_in_place<T: Scalar>(v: &mut [T]) {
    for x in v {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

/// Valid `[lo, hi)` range of output coordinates for kernel offset `d` over a side of `len`.
#[inline]
fn span(d: isize, len: usize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 { len - d as usize } else { len };
    (lo, hi)
}

fn conv3x3<T: Scalar>(input: &[T], cin: usize, w: usize, h: usize, weights: &[T], bias: &[T], cout: usize) -> Vec<T> {
    let n = w * h;
    let mut out = vec![T::zero(); cout * n];
    for o in 0..cout {
        let plane = &mut out[o * n..(o + 1) * n];
        plane.fill(bias[o]);
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                let dy = ky as isize - 1;
                let (y0, y1) = span(dy, h);
                for kx in 0..K {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(dx, w);
                    let wv = weights[((o * cin + i) * K + ky) * K + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let dst = &mut plane[y * w + x0..y * w + x1];
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d = *d + wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv3x3_param_grad<T: Scalar>(
    input: &[T],
    cin: usize,
    w: usize,
    h: usize,
    d_out: &[T],
    cout: usize,
    gw: &mut [T],
    gb: &mut [T],
) {
    let n = w * h;
    for o in 0..cout {
        let g = &d_out[o * n..(o + 1) * n];
        gb[o] = g.iter().copied().sum();
        for i in 0..cin {
            let src = &input[i * n..(i + 1) * n];
            for ky in 0..K {
                let dy = ky as isize - 1;
                let (y0, y1) = span(dy, h);
                for kx in 0..K {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(dx, w);
                    let mut acc = T::zero();
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let gr = &g[y * w + x0..y * w + x1];
                        let s = &src[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        let mut row = T::zero();
                        for (&a, &b) in gr.iter().zip(s) {
                            row = row + a * b;
                        }
                        acc = acc + row;
                    }
                    gw[((o * cin + i) * K + ky) * K + kx] = acc;
                }
            }
        }
    }
}

fn conv3x3_input_grad<T: Scalar>(d_out: &[T], cout: usize, w: usize, h: usize, weights: &[T], cin: usize) -> Vec<T> {
    let n = w * h;
    let mut d_in = vec![T::zero(); cin * n];
    for i in 0..cin {
        let dst_plane = &mut d_in[i * n..(i + 1) * n];
        for o in 0..cout {
            let g = &d_out[o * n..(o + 1) * n];
            for ky in 0..K {
                let dy = ky as isize - 1;
                let (y0, y1) = span(dy, h);
                for kx in 0..K {
                    let dx = kx as isize - 1;
                    let (x0, x1) = span(dx, w);
                    let wv = weights[((o * cin + i) * K + ky) * K + kx];
                    for y in y0..y1 {
                        let sy = (y as isize + dy) as usize;
                        let gr = &g[y * w + x0..y * w + x1];
                        let dst =
                            &mut dst_plane[sy * w + (x0 as isize + dx) as usize..sy * w + (x1 as isize + dx) as usize];
                        for (d, &v) in dst.iter_mut().zip(gr) {
                            *d = *d + wv * v;
                        }
                    }
                }
            }
        }
    }
    d_in
}

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|a - n| / max(|a|, |n|, 1e-8)` over the compared parameters.
    pub max_rel_error: f64,
    pub compared: usize,
    /// Parameters whose `±h` probe switched a ReLU on or off. The loss is not differentiable
    /// inside such an interval, so the central difference is not compared there.
    pub straddled_kink: usize,
}

fn relu_pattern<T: Scalar>(cache: &Cache<T>) -> Vec<bool> {
    cache.inputs[1..].iter().flatten().map(|&a| a > T::zero()).collect()
}

/// Compares the analytic gradient with central differences `(L(θ + h) - L(θ - h)) / 2h`
/// over `samples` randomly chosen parameters (all of them if there are fewer).
pub fn finite_diff_check(
    params: &ModelParams<f64>,
    image: &NormalizedImage,
    target: LossTarget<'_>,
    h: f64,
    samples: usize,
    seed: u64,
) -> Result<GradCheck> {
    let (_, analytic) = loss_gradient(params, image, &[target])?;
    let base = relu_pattern(&forward_cached(params, image));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = params.len();
    let picks = rand::seq::index::sample(&mut rng, total, samples.min(total)).into_vec();

    let mut check = GradCheck {
        max_rel_error: 0.0,
        compared: 0,
        straddled_kink: 0,
    };
    let mut probe = params.clone();
    let eval = |probe: &ModelParams<f64>| -> Result<(f64, bool)> {
        let cache = forward_cached(probe, image);
        let smooth = relu_pattern(&cache) == base;
        let output = ProbabilityMap::from_nuclei(Grid::from_vec(cache.width, cache.height, cache.nuclei)?);
        Ok((target.loss(&output)?, smooth))
    };
    for i in picks {
        let orig = probe.data[i];
        probe.data[i] = orig + h;
        let (plus, smooth_plus) = eval(&probe)?;
        probe.data[i] = orig - h;
        let (minus, smooth_minus) = eval(&probe)?;
        probe.data[i] = orig;
        if !(smooth_plus && smooth_minus) {
            check.straddled_kink += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic.data[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        check.max_rel_error = check.max_rel_error.max(rel);
        check.compared += 1;
    }
    Ok(check)
}

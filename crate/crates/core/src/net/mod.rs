//! A small convolutional classifier with hand-written forward and backward passes.
//!
//! Layers are valid (unpadded, stride 1) multi-channel convolutions without bias,
//! ReLU, non-overlapping max pooling and a final bias-free fully connected layer
//! mapping the flattened feature maps to `K` logits. Tensors are stored
//! channel-major (`channel, row, column`).

mod checkpoint;
mod loss;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{loss_and_grad, margin, ramp_loss, softmax, LossKind};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv { kernel: usize, maps: usize },
    Relu,
    MaxPool { window: usize },
}

/// Feature extractor layers; the fully connected output layer is implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Architecture(pub Vec<LayerSpec>);

impl Default for Architecture {
    fn default() -> Self {
        use LayerSpec::*;
        Architecture(vec![
            Conv { kernel: 5, maps: 8 },
            Relu,
            MaxPool { window: 2 },
            Conv { kernel: 3, maps: 16 },
            Relu,
            MaxPool { window: 2 },
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// `[out][in][row][col]`
    pub weights: Vec<f64>,
}

impl Conv {
    #[inline]
    fn offset(&self, o: usize, i: usize) -> usize {
        (o * self.in_channels + i) * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv),
    Relu,
    MaxPool(usize),
}

/// Bias-free dense layer, `[class][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    input_size: usize,
    classes: usize,
    arch: Architecture,
    layers: Vec<Layer>,
    /// `shapes[l]` is the input shape of layer `l`; the last entry feeds the dense layer.
    shapes: Vec<Shape>,
    dense: Dense,
}

/// Activations saved by [`CnnModel::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input of every layer plus the flattened features.
    inputs: Vec<Vec<f64>>,
    /// Flat input index of each pooled maximum, for pool layers.
    argmax: Vec<Vec<usize>>,
}

impl ForwardCache {
    /// ReLU on/off pattern and pooling routes; two inputs with equal
    /// patterns lie in the same linear piece of the network.
    pub fn activation_pattern(&self, model: &CnnModel) -> Vec<u64> {
        let mut pattern = Vec::new();
        for (l, layer) in model.layers.iter().enumerate() {
            match layer {
                Layer::Relu => pattern.extend(self.inputs[l].iter().map(|&x| u64::from(x > 0.0))),
                Layer::MaxPool(_) => pattern.extend(self.argmax[l].iter().map(|&i| i as u64)),
                Layer::Conv(_) => {}
            }
        }
        pattern
    }
}

/// Parameter gradients laid out like the model: one buffer per layer (empty for
/// parameter-free layers) and one for the dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<f64>>,
    pub dense: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &CnnModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv(c) => vec![0.0; c.weights.len()],
                    _ => Vec::new(),
                })
                .collect(),
            dense: vec![0.0; model.dense.weights.len()],
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.dense.iter_mut().zip(&other.dense).for_each(|(x, y)| *x += y);
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flatten().chain(&self.dense)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 1,
            batch_size: 4,
            loss: LossKind::CrossEntropy,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if let LossKind::Ramp { gamma } = self.loss {
            if !(gamma > 0.0) {
                return Err(Error::InvalidConfig("ramp gamma must be > 0".into()));
            }
        }
        Ok(())
    }
}

fn shape_chain(arch: &Architecture, input_size: usize) -> Result<Vec<Shape>> {
    let mut shape = Shape {
        channels: 1,
        rows: input_size,
        cols: input_size,
    };
    let mut shapes = vec![shape];
    for (l, spec) in arch.0.iter().enumerate() {
        shape = match *spec {
            LayerSpec::Conv { kernel, maps } => {
                if kernel == 0 || maps == 0 || kernel > shape.rows || kernel > shape.cols {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {l}: {kernel}x{kernel} kernel on {}x{} input",
                        shape.rows, shape.cols
                    )));
                }
                Shape {
                    channels: maps,
                    rows: shape.rows - kernel + 1,
                    cols: shape.cols - kernel + 1,
                }
            }
            LayerSpec::Relu => shape,
            LayerSpec::MaxPool { window } => {
                if window == 0 || window > shape.rows || window > shape.cols {
                    return Err(Error::ShapeMismatch(format!(
                        "layer {l}: pool window {window} on {}x{} input",
                        shape.rows, shape.cols
                    )));
                }
                Shape {
                    channels: shape.channels,
                    rows: shape.rows / window,
                    cols: shape.cols / window,
                }
            }
        };
        shapes.push(shape);
    }
    Ok(shapes)
}

impl CnnModel {
    /// All-zero parameters.
    pub fn zeros(arch: &Architecture, input_size: usize, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidConfig("need at least one class".into()));
        }
        let shapes = shape_chain(arch, input_size)?;
        let layers = arch
            .0
            .iter()
            .zip(&shapes)
            .map(|(spec, input)| match *spec {
                LayerSpec::Conv { kernel, maps } => Layer::Conv(Conv {
                    in_channels: input.channels,
                    out_channels: maps,
                    kernel,
                    weights: vec![0.0; maps * input.channels * kernel * kernel],
                }),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { window } => Layer::MaxPool(window),
            })
            .collect();
        let features = shapes.last().expect("input shape").len();
        Ok(Self {
            input_size,
            classes,
            arch: arch.clone(),
            layers,
            shapes,
            dense: Dense {
                inputs: features,
                outputs: classes,
                weights: vec![0.0; classes * features],
            },
        })
    }

    /// Symmetric uniform fan-in initialisation: conv kernels on `+-sqrt(6 / fan_in)`,
    /// the dense layer on `+-sqrt(3 / fan_in)`.
    pub fn new<R: Rng + ?Sized>(arch: &Architecture, input_size: usize, classes: usize, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(arch, input_size, classes)?;
        for layer in &mut model.layers {
            if let Layer::Conv(c) = layer {
                let limit = (6.0 / (c.in_channels * c.kernel * c.kernel) as f64).sqrt();
                c.weights.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
            }
        }
        let limit = (3.0 / model.dense.inputs as f64).sqrt();
        model
            .dense
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-limit..limit));
        Ok(model)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn dense(&self) -> &Dense {
        &self.dense
    }

    pub fn dense_mut(&mut self) -> &mut Dense {
        &mut self.dense
    }

    /// Feature-map shapes, input first; the last feeds the dense layer.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().map(<[f64]>::len).sum()
    }

    /// Parameter buffers in declaration order (conv kernels, then dense).
    pub fn parameters(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c.weights.as_slice()),
                _ => None,
            })
            .chain(std::iter::once(self.dense.weights.as_slice()))
    }

    pub fn parameters_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(&mut c.weights),
                _ => None,
            })
            .chain(std::iter::once(&mut self.dense.weights))
    }

    /// `theta -= step * grad`.
    pub fn apply_gradients(&mut self, grads: &Gradients, step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            if let Layer::Conv(c) = layer {
                c.weights.iter_mut().zip(g).for_each(|(w, g)| *w -= step * g);
            }
        }
        self.dense
            .weights
            .iter_mut()
            .zip(&grads.dense)
            .for_each(|(w, g)| *w -= step * g);
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Logits for a row-major `S x S` image, plus the activations needed by [`backward`](Self::backward).
    pub fn forward(&self, image: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let expected = self.input_size * self.input_size;
        if image.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "image has {} pixels, model expects {expected}",
                image.len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len() + 1);
        let mut argmax = Vec::with_capacity(self.layers.len());
        let mut x = image.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let (input, output) = (self.shapes[l], self.shapes[l + 1]);
            let (y, routes) = match layer {
                Layer::Conv(c) => (conv_forward(c, &x, input, output), Vec::new()),
                Layer::Relu => (x.iter().map(|&v| v.max(0.0)).collect(), Vec::new()),
                Layer::MaxPool(w) => pool_forward(*w, &x, input, output),
            };
            inputs.push(x);
            argmax.push(routes);
            x = y;
        }
        let logits = (0..self.classes)
            .map(|k| {
                let row = &self.dense.weights[k * self.dense.inputs..(k + 1) * self.dense.inputs];
                row.iter().zip(&x).map(|(w, v)| w * v).sum()
            })
            .collect();
        inputs.push(x);
        Ok((logits, ForwardCache { inputs, argmax }))
    }

    /// Parameter gradients and, if `want_input_grad`, `dL/dimage` (row-major `S x S`).
    pub fn backward(
        &self,
        cache: Option<&ForwardCache>,
        dl_dlogits: &[f64],
        want_input_grad: bool,
    ) -> Result<(Gradients, Option<Vec<f64>>)> {
        let cache = cache.ok_or(Error::MissingCache)?;
        if cache.inputs.len() != self.layers.len() + 1 {
            return Err(Error::MissingCache);
        }
        if dl_dlogits.len() != self.classes {
            return Err(Error::ShapeMismatch(format!(
                "{} logit gradients for {} classes",
                dl_dlogits.len(),
                self.classes
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let features = cache.inputs.last().expect("flattened features");
        let n = self.dense.inputs;
        let mut delta = vec![0.0; n];
        for (k, &g) in dl_dlogits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.dense.weights[k * n..(k + 1) * n];
            let grow = &mut grads.dense[k * n..(k + 1) * n];
            for i in 0..n {
                grow[i] = g * features[i];
                delta[i] += g * row[i];
            }
        }
        for l in (0..self.layers.len()).rev() {
            let (input, output) = (self.shapes[l], self.shapes[l + 1]);
            let x = &cache.inputs[l];
            let need_delta = l > 0 || want_input_grad;
            delta = match &self.layers[l] {
                Layer::Conv(c) => {
                    conv_kernel_grad(c, x, &delta, input, output, &mut grads.layers[l]);
                    if need_delta {
                        conv_input_grad(c, &delta, input, output)
                    } else {
                        Vec::new()
                    }
                }
                Layer::Relu => x
                    .iter()
                    .zip(&delta)
                    .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                    .collect(),
                Layer::MaxPool(_) => {
                    let mut out = vec![0.0; input.len()];
                    for (&src, &d) in cache.argmax[l].iter().zip(&delta) {
                        out[src] += d;
                    }
                    out
                }
            };
        }
        Ok((grads, want_input_grad.then_some(delta)))
    }

    pub fn predict(&self, image: &[f64]) -> Result<usize> {
        let (logits, _) = self.forward(image)?;
        Ok(argmax(&logits))
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn conv_forward(c: &Conv, x: &[f64], input: Shape, output: Shape) -> Vec<f64> {
    let (rows, cols) = (output.rows, output.cols);
    let k = c.kernel;
    let mut out = vec![0.0; output.len()];
    for o in 0..c.out_channels {
        let plane = &mut out[o * rows * cols..(o + 1) * rows * cols];
        for i in 0..c.in_channels {
            let src = &x[i * input.rows * input.cols..(i + 1) * input.rows * input.cols];
            let w = &c.weights[c.offset(o, i)..c.offset(o, i) + k * k];
            for a in 0..k {
                for b in 0..k {
                    let weight = w[a * k + b];
                    for y in 0..rows {
                        let src_row = &src[(y + a) * input.cols + b..(y + a) * input.cols + b + cols];
                        let dst_row = &mut plane[y * cols..(y + 1) * cols];
                        for (d, s) in dst_row.iter_mut().zip(src_row) {
                            *d += weight * s;
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_kernel_grad(c: &Conv, x: &[f64], delta: &[f64], input: Shape, output: Shape, grad: &mut [f64]) {
    let (rows, cols) = (output.rows, output.cols);
    let k = c.kernel;
    for o in 0..c.out_channels {
        let d = &delta[o * rows * cols..(o + 1) * rows * cols];
        for i in 0..c.in_channels {
            let src = &x[i * input.rows * input.cols..(i + 1) * input.rows * input.cols];
            let off = c.offset(o, i);
            for a in 0..k {
                for b in 0..k {
                    let mut acc = 0.0;
                    for y in 0..rows {
                        let src_row = &src[(y + a) * input.cols + b..(y + a) * input.cols + b + cols];
                        let d_row = &d[y * cols..(y + 1) * cols];
                        acc += d_row.iter().zip(src_row).map(|(p, q)| p * q).sum::<f64>();
                    }
                    grad[off + a * k + b] = acc;
                }
            }
        }
    }
}

/// `dL/dinput[i] = sum_o rot180(W[o][i]) (wide-convolved with) delta[o]`, evaluated by
/// scattering each output error back through the kernel taps it was computed from.
fn conv_input_grad(c: &Conv, delta: &[f64], input: Shape, output: Shape) -> Vec<f64> {
    let (rows, cols) = (output.rows, output.cols);
    let k = c.kernel;
    let mut out = vec![0.0; input.len()];
    for o in 0..c.out_channels {
        let d = &delta[o * rows * cols..(o + 1) * rows * cols];
        for i in 0..c.in_channels {
            let dst = &mut out[i * input.rows * input.cols..(i + 1) * input.rows * input.cols];
            let w = &c.weights[c.offset(o, i)..c.offset(o, i) + k * k];
            for a in 0..k {
                for b in 0..k {
                    let weight = w[a * k + b];
                    for y in 0..rows {
                        let dst_row = &mut dst[(y + a) * input.cols + b..(y + a) * input.cols + b + cols];
                        let d_row = &d[y * cols..(y + 1) * cols];
                        for (t, s) in dst_row.iter_mut().zip(d_row) {
                            *t += weight * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Non-overlapping max pooling; ties go to the first maximiser in row-major order.
/// Trailing rows/columns that do not fill a window are dropped.
fn pool_forward(w: usize, x: &[f64], input: Shape, output: Shape) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(output.len());
    let mut routes = Vec::with_capacity(output.len());
    for ch in 0..input.channels {
        let base = ch * input.rows * input.cols;
        for r in 0..output.rows {
            for q in 0..output.cols {
                let mut best = base + (r * w) * input.cols + q * w;
                for a in 0..w {
                    for b in 0..w {
                        let idx = base + (r * w + a) * input.cols + q * w + b;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                routes.push(best);
            }
        }
    }
    (out, routes)
}

/// Per-sample loss and gradients.
pub fn sample_gradients(
    model: &CnnModel,
    image: &[f64],
    label: usize,
    loss: &LossKind,
    want_input_grad: bool,
) -> Result<(f64, Gradients, Option<Vec<f64>>)> {
    if label >= model.classes {
        return Err(Error::LabelOutOfRange {
            label,
            classes: model.classes,
        });
    }
    let (logits, cache) = model.forward(image)?;
    let (value, dlogits) = loss_and_grad(&logits, label, loss);
    let (grads, dimage) = model.backward(Some(&cache), &dlogits, want_input_grad)?;
    Ok((value, grads, dimage))
}

/// Mean loss over a labeled image set.
pub fn mean_loss(model: &CnnModel, images: &[Vec<f64>], labels: &[usize], loss: &LossKind) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::InvalidConfig("empty image set".into()));
    }
    let mut total = 0.0;
    for (image, &label) in images.iter().zip(labels) {
        let (logits, _) = model.forward(image)?;
        total += loss_and_grad(&logits, label, loss).0;
    }
    Ok(total / images.len() as f64)
}

/// One pass of mini-batch SGD over a shuffled permutation of the data. Returns the
/// mean of the per-sample losses seen during the epoch (before each update).
pub fn sgd_epoch<R: Rng + ?Sized>(
    model: &mut CnnModel,
    images: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if images.is_empty() || images.len() != labels.len() {
        return Err(Error::InvalidConfig(format!(
            "{} images with {} labels",
            images.len(),
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        let mut acc = Gradients::zeros_like(model);
        for &i in batch {
            let (value, grads, _) = sample_gradients(model, &images[i], labels[i], &cfg.loss, false)?;
            total += value;
            acc.add_assign(&grads);
        }
        model.apply_gradients(&acc, cfg.learning_rate / batch.len() as f64);
    }
    if !model.is_finite() {
        return Err(Error::NonFinite("network parameters after SGD epoch".into()));
    }
    Ok(total / images.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::stream_rng;

    fn conv_layer(model: &mut CnnModel, l: usize) -> &mut Conv {
        match &mut model.layers_mut()[l] {
            Layer::Conv(c) => c,
            _ => panic!("layer {l} is not a convolution"),
        }
    }

    #[test]
    fn default_geometry() {
        let model = CnnModel::zeros(&Architecture::default(), 50, 2).unwrap();
        let last = *model.shapes().last().unwrap();
        assert_eq!(last, Shape { channels: 16, rows: 10, cols: 10 });
        assert_eq!(model.dense().inputs, 1600);
        assert!(CnnModel::zeros(&Architecture::default(), 6, 2).is_err());
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let model = CnnModel::zeros(&Architecture::default(), 20, 3).unwrap();
        let (logits, _) = model.forward(&vec![0.7; 400]).unwrap();
        assert_eq!(logits, vec![0.0; 3]);
        assert!(model.forward(&[0.0; 10]).is_err());
    }

    #[test]
    fn identity_network_reproduces_pixels() {
        let arch = Architecture(vec![LayerSpec::Conv { kernel: 1, maps: 1 }]);
        let mut model = CnnModel::zeros(&arch, 2, 4).unwrap();
        conv_layer(&mut model, 0).weights[0] = 1.0;
        let dense = model.dense_mut();
        for k in 0..4 {
            dense.weights[k * 4 + k] = 1.0;
        }
        let image = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(model.forward(&image).unwrap().0, image.to_vec());
    }

    #[test]
    fn ones_kernel_gives_window_sums() {
        let arch = Architecture(vec![LayerSpec::Conv { kernel: 2, maps: 1 }]);
        let mut model = CnnModel::zeros(&arch, 3, 4).unwrap();
        conv_layer(&mut model, 0).weights = vec![1.0; 4];
        for k in 0..4 {
            model.dense_mut().weights[k * 4 + k] = 1.0;
        }
        let image: Vec<f64> = (1..=9).map(f64::from).collect();
        // windows: [1,2,4,5] [2,3,5,6] [4,5,7,8] [5,6,8,9]
        assert_eq!(model.forward(&image).unwrap().0, vec![12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn pooling_routes_to_first_max() {
        let input = Shape { channels: 1, rows: 2, cols: 2 };
        let output = Shape { channels: 1, rows: 1, cols: 1 };
        let (out, routes) = pool_forward(2, &[1.0, 3.0, 3.0, 0.0], input, output);
        assert_eq!((out, routes), (vec![3.0], vec![1]));
    }

    #[test]
    fn pooling_backward_conserves_mass() {
        let arch = Architecture(vec![LayerSpec::MaxPool { window: 2 }]);
        let mut model = CnnModel::new(&arch, 6, 3, &mut stream_rng(1, 0)).unwrap();
        model.dense_mut().weights.iter_mut().enumerate().for_each(|(i, w)| *w = (i as f64 * 0.37).sin());
        let image: Vec<f64> = (0..36).map(|i| (i as f64 * 1.3).cos()).collect();
        let (_, cache) = model.forward(&image).unwrap();
        let (_, dimage) = model.backward(Some(&cache), &[0.3, -1.2, 0.5], true).unwrap();
        let dimage = dimage.unwrap();
        let upstream: f64 = (0..9)
            .map(|i| (0..3).map(|k| [0.3, -1.2, 0.5][k] * model.dense().weights[k * 9 + i]).sum::<f64>())
            .sum();
        assert!((dimage.iter().sum::<f64>() - upstream).abs() < 1e-12);
        assert_eq!(dimage.iter().filter(|&&v| v != 0.0).count(), 9);
    }

    #[test]
    fn backward_without_cache_fails() {
        let model = CnnModel::zeros(&Architecture::default(), 20, 2).unwrap();
        assert!(matches!(model.backward(None, &[1.0, 0.0], true), Err(Error::MissingCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let model = CnnModel::new(&Architecture::default(), 16, 3, &mut stream_rng(2, 0)).unwrap();
        let image: Vec<f64> = (0..256).map(|i| (i as f64 * 0.1).sin().abs()).collect();
        let (_, cache) = model.forward(&image).unwrap();
        let (grads, dimage) = model.backward(Some(&cache), &[0.0; 3], true).unwrap();
        assert!(grads.iter().all(|&g| g == 0.0));
        assert!(dimage.unwrap().iter().all(|&g| g == 0.0));
    }

    /// Explicit zero-padded wide convolution with the rotated kernel.
    fn wide_conv_rot180(w: &[f64], k: usize, delta: &[f64], rows: usize, cols: usize) -> Vec<f64> {
        let (pr, pc) = (rows + 2 * (k - 1), cols + 2 * (k - 1));
        let mut padded = vec![0.0; pr * pc];
        for y in 0..rows {
            for x in 0..cols {
                padded[(y + k - 1) * pc + x + k - 1] = delta[y * cols + x];
            }
        }
        let (ir, ic) = (rows + k - 1, cols + k - 1);
        let mut out = vec![0.0; ir * ic];
        for p in 0..ir {
            for q in 0..ic {
                for a in 0..k {
                    for b in 0..k {
                        let rot = w[(k - 1 - a) * k + (k - 1 - b)];
                        out[p * ic + q] += rot * padded[(p + a) * pc + q + b];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn input_gradient_is_rotated_wide_convolution() {
        let c = Conv {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            weights: (0..9).map(|i| i as f64 - 3.5).collect(),
        };
        let delta: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let input = Shape { channels: 1, rows: 6, cols: 6 };
        let output = Shape { channels: 1, rows: 4, cols: 4 };
        let scatter = conv_input_grad(&c, &delta, input, output);
        let wide = wide_conv_rot180(&c.weights, 3, &delta, 4, 4);
        for (a, b) in scatter.iter().zip(&wide) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn fd_check(model: &mut CnnModel, image: &[f64], label: usize) {
        let loss = LossKind::CrossEntropy;
        let (_, grads, dimage) = sample_gradients(model, image, label, &loss, true).unwrap();
        let f = |m: &CnnModel, img: &[f64]| {
            let (logits, cache) = m.forward(img).unwrap();
            (loss_and_grad(&logits, label, &loss).0, cache.activation_pattern(m))
        };
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let flat: Vec<f64> = grads.iter().copied().collect();
        let mut index = 0;
        let buffers = model.parameters().count();
        for b in 0..buffers {
            let len = model.parameters().nth(b).unwrap().len();
            for i in 0..len {
                let orig = model.parameters_mut().nth(b).unwrap()[i];
                model.parameters_mut().nth(b).unwrap()[i] = orig + h;
                let (up, pu) = f(model, image);
                model.parameters_mut().nth(b).unwrap()[i] = orig - h;
                let (dn, pd) = f(model, image);
                model.parameters_mut().nth(b).unwrap()[i] = orig;
                if pu == pd {
                    let fd = (up - dn) / (2.0 * h);
                    worst = worst.max((flat[index] - fd).abs() / (fd.abs() + 1e-8));
                }
                index += 1;
            }
        }
        let dimage = dimage.unwrap();
        let mut img = image.to_vec();
        for p in 0..img.len() {
            let orig = img[p];
            img[p] = orig + h;
            let (up, pu) = f(model, &img);
            img[p] = orig - h;
            let (dn, pd) = f(model, &img);
            img[p] = orig;
            if pu == pd {
                let fd = (up - dn) / (2.0 * h);
                worst = worst.max((dimage[p] - fd).abs() / (fd.abs() + 1e-8));
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let arch = Architecture(vec![
            LayerSpec::Conv { kernel: 3, maps: 3 },
            LayerSpec::Relu,
            LayerSpec::MaxPool { window: 2 },
            LayerSpec::Conv { kernel: 2, maps: 4 },
            LayerSpec::Relu,
        ]);
        for seed in 0..3 {
            let mut rng = stream_rng(seed, 0);
            let mut model = CnnModel::new(&arch, 10, 3, &mut rng).unwrap();
            let image: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..1.0)).collect();
            fd_check(&mut model, &image, seed as usize % 3);
        }
        let single = Architecture(vec![LayerSpec::Conv { kernel: 3, maps: 2 }]);
        let mut model = CnnModel::new(&single, 6, 2, &mut stream_rng(9, 0)).unwrap();
        let image: Vec<f64> = (0..36).map(|i| (i as f64 * 0.31).sin()).collect();
        fd_check(&mut model, &image, 1);
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let mut rng = stream_rng(3, 0);
        let mut model = CnnModel::new(&Architecture::default(), 16, 2, &mut rng).unwrap();
        let before = model.clone();
        let images: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 / 4.0; 256]).collect();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        sgd_epoch(&mut model, &images, &[0, 1, 0, 1], &cfg, &mut rng).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn dense_only_model_descends() {
        // Without feature layers the loss is convex in the dense weights.
        let arch = Architecture(Vec::new());
        let mut rng = stream_rng(4, 0);
        let mut model = CnnModel::new(&arch, 3, 3, &mut rng).unwrap();
        let images = vec![(0..9).map(|i| i as f64 / 9.0).collect::<Vec<_>>()];
        let cfg = TrainConfig {
            learning_rate: 0.5,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut last = f64::INFINITY;
        for epoch in 0..30 {
            let loss = sgd_epoch(&mut model, &images, &[2], &cfg, &mut rng).unwrap();
            if epoch > 0 {
                assert!(loss <= last, "epoch {epoch}: {loss} > {last}");
            }
            last = loss;
        }
    }

    #[test]
    fn full_batch_step_equals_mean_gradient() {
        let arch = Architecture(vec![LayerSpec::Conv { kernel: 2, maps: 2 }, LayerSpec::Relu]);
        let mut rng = stream_rng(5, 0);
        let model = CnnModel::new(&arch, 4, 2, &mut rng).unwrap();
        let images: Vec<Vec<f64>> = (0..3).map(|s| (0..16).map(|i| ((i + s) as f64).sin()).collect()).collect();
        let labels = [0, 1, 1];
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 10,
            ..TrainConfig::default()
        };
        let mut stepped = model.clone();
        sgd_epoch(&mut stepped, &images, &labels, &cfg, &mut rng).unwrap();

        let mut mean = Gradients::zeros_like(&model);
        for (img, &y) in images.iter().zip(&labels) {
            mean.add_assign(&sample_gradients(&model, img, y, &cfg.loss, false).unwrap().1);
        }
        let mut expected = model.clone();
        expected.apply_gradients(&mean, 0.1 / 3.0);
        for (a, b) in stepped.parameters().zip(expected.parameters()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-14);
            }
        }
    }
}

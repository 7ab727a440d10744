use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GradientSet, ModelError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Dense { inputs: usize, outputs: usize },
    Relu,
    SoftmaxCrossEntropy,
}

/// Small fully-connected classifier with real forward/backward passes.
///
/// Each dense layer owns one parameter tensor of shape `[inputs + 1, outputs]`:
/// the first `inputs` rows are the weight matrix and the last row is the bias.
/// That tensor is also the layer's gradient chunk.
#[derive(Debug, Clone)]
pub struct RealModel {
    layers: Vec<Layer>,
    params: Vec<Tensor>,
    seed: u64,
    version: u64,
}

/// Activations saved by [`RealModel::forward`] for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    layer_inputs: Vec<Vec<f32>>,
    probs: Vec<f32>,
}

#[derive(Debug, Clone)]
enum Targets {
    Hard(Vec<usize>),
    Soft(Vec<f64>),
}

impl RealModel {
    pub fn new(layers: Vec<Layer>, seed: u64) -> Result<Self, ModelError> {
        let mut dim: Option<usize> = None;
        let mut dense = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            match *layer {
                Layer::Dense { inputs, outputs } => {
                    if inputs == 0 || outputs == 0 {
                        return Err(ModelError::Shape(format!(
                            "layer {i}: zero-sized dense layer"
                        )));
                    }
                    if let Some(d) = dim {
                        if d != inputs {
                            return Err(ModelError::Shape(format!(
                                "layer {i}: expects {inputs} inputs but previous layer emits {d}"
                            )));
                        }
                    }
                    dim = Some(outputs);
                    dense.push((inputs, outputs));
                }
                Layer::Relu => {
                    if dim.is_none() {
                        return Err(ModelError::Shape("ReLU before any dense layer".into()));
                    }
                }
                Layer::SoftmaxCrossEntropy => {
                    if i + 1 != layers.len() {
                        return Err(ModelError::Shape(
                            "softmax cross-entropy must be the last layer".into(),
                        ));
                    }
                }
            }
        }
        if dense.is_empty() || layers.last() != Some(&Layer::SoftmaxCrossEntropy) {
            return Err(ModelError::Shape(
                "model needs at least one dense layer and a softmax cross-entropy head".into(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = dense
            .iter()
            .map(|&(fan_in, fan_out)| {
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                let mut data = Vec::with_capacity((fan_in + 1) * fan_out);
                for _ in 0..fan_in * fan_out {
                    data.push(rng.random_range(-r..r));
                }
                data.extend(std::iter::repeat_n(0.0, fan_out));
                Tensor::new(vec![fan_in + 1, fan_out], data).expect("sized above")
            })
            .collect();

        Ok(Self {
            layers,
            params,
            seed,
            version: 0,
        })
    }

    /// `dims = [in, h1, ..., classes]`: dense layers with ReLU between them.
    pub fn mlp(dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        if dims.len() < 2 {
            return Err(ModelError::Shape(
                "an MLP needs input and output sizes".into(),
            ));
        }
        let mut layers = Vec::new();
        for (i, pair) in dims.windows(2).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            layers.push(Layer::Dense {
                inputs: pair[0],
                outputs: pair[1],
            });
        }
        layers.push(Layer::SoftmaxCrossEntropy);
        Self::new(layers, seed)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.params.iter().map(Tensor::len).collect()
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn input_dim(&self) -> usize {
        match self.layers[0] {
            Layer::Dense { inputs, .. } => inputs,
            _ => unreachable!("validated in new"),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match *l {
                Layer::Dense { outputs, .. } => Some(outputs),
                _ => None,
            })
            .expect("validated in new")
    }

    /// Order-sensitive hash of the raw parameter bits.
    pub fn checksum(&self) -> u64 {
        // FNV-1a over the f32 bit patterns
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for t in &self.params {
            for v in t.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }

    pub fn forward(
        &self,
        inputs: &Tensor,
        labels: &Tensor,
    ) -> Result<(f32, ForwardCache), ModelError> {
        let batch = self.check_inputs(inputs)?;
        let targets = self.parse_targets(labels, batch)?;
        let params: Vec<&[f32]> = self.params.iter().map(Tensor::data).collect();
        let pass = run_forward(&self.layers, &params, inputs.data(), batch, &targets);
        Ok((
            pass.loss,
            ForwardCache {
                version: self.version,
                batch,
                layer_inputs: pass.layer_inputs,
                probs: pass.probs,
            },
        ))
    }

    /// Loss evaluated in 64-bit arithmetic with caller-supplied parameters
    /// (one flat vector per dense layer, same layout as [`Self::params`]).
    pub fn loss_f64(
        &self,
        params: &[Vec<f64>],
        inputs: &Tensor,
        labels: &Tensor,
    ) -> Result<f64, ModelError> {
        let batch = self.check_inputs(inputs)?;
        let targets = self.parse_targets(labels, batch)?;
        if params.len() != self.params.len()
            || params
                .iter()
                .zip(&self.params)
                .any(|(p, t)| p.len() != t.len())
        {
            return Err(ModelError::Shape(
                "shadow parameters do not match the model".into(),
            ));
        }
        let x: Vec<f64> = inputs.data().iter().map(|&v| f64::from(v)).collect();
        let views: Vec<&[f64]> = params.iter().map(Vec::as_slice).collect();
        Ok(run_forward(&self.layers, &views, &x, batch, &targets).loss)
    }

    pub fn params_f64(&self) -> Vec<Vec<f64>> {
        self.params
            .iter()
            .map(|t| t.data().iter().map(|&v| f64::from(v)).collect())
            .collect()
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &Tensor,
    ) -> Result<GradientSet, ModelError> {
        if cache.version != self.version {
            return Err(ModelError::State(
                "forward cache is stale: parameters changed since forward".into(),
            ));
        }
        let batch = cache.batch;
        let targets = self.parse_targets(labels, batch)?;
        let classes = self.num_classes();

        // d(mean loss)/d(logits) = (p - t) / batch
        let inv_batch = 1.0 / batch as f32;
        let mut upstream = cache.probs.clone();
        match &targets {
            Targets::Hard(idx) => {
                for (row, &c) in idx.iter().enumerate() {
                    upstream[row * classes + c] -= 1.0;
                }
            }
            Targets::Soft(t) => {
                for (u, &tv) in upstream.iter_mut().zip(t) {
                    *u -= tv as f32;
                }
            }
        }
        for u in &mut upstream {
            *u *= inv_batch;
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let mut param_idx = self.params.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            match *layer {
                Layer::SoftmaxCrossEntropy => {}
                Layer::Relu => {
                    let x = &cache.layer_inputs[li];
                    for (u, &xv) in upstream.iter_mut().zip(x) {
                        if xv <= 0.0 {
                            *u = 0.0;
                        }
                    }
                }
                Layer::Dense { inputs, outputs } => {
                    param_idx -= 1;
                    let x = &cache.layer_inputs[li];
                    let w = self.params[param_idx].data();
                    let mut g = vec![0.0f32; (inputs + 1) * outputs];
                    for b in 0..batch {
                        let xrow = &x[b * inputs..(b + 1) * inputs];
                        let urow = &upstream[b * outputs..(b + 1) * outputs];
                        for (i, &xv) in xrow.iter().enumerate() {
                            let grow = &mut g[i * outputs..(i + 1) * outputs];
                            for (gv, &uv) in grow.iter_mut().zip(urow) {
                                *gv += xv * uv;
                            }
                        }
                        let brow = &mut g[inputs * outputs..];
                        for (gv, &uv) in brow.iter_mut().zip(urow) {
                            *gv += uv;
                        }
                    }
                    grads[param_idx] =
                        Some(Tensor::new(vec![inputs + 1, outputs], g).expect("sized above"));

                    if param_idx > 0 {
                        let mut down = vec![0.0f32; batch * inputs];
                        for b in 0..batch {
                            let urow = &upstream[b * outputs..(b + 1) * outputs];
                            let drow = &mut down[b * inputs..(b + 1) * inputs];
                            for (i, d) in drow.iter_mut().enumerate() {
                                let wrow = &w[i * outputs..(i + 1) * outputs];
                                *d = wrow.iter().zip(urow).map(|(a, b)| a * b).sum();
                            }
                        }
                        upstream = down;
                    }
                }
            }
        }
        Ok(GradientSet::new(
            grads
                .into_iter()
                .map(|g| g.expect("one gradient per dense layer"))
                .collect(),
        ))
    }

    /// `w <- w - lr * (g + weight_decay * w)`, elementwise over every parameter.
    pub fn sgd_update(
        &mut self,
        grads: &GradientSet,
        lr: f32,
        weight_decay: f32,
    ) -> Result<(), ModelError> {
        if grads.num_chunks() != self.params.len() {
            return Err(ModelError::Shape(format!(
                "expected {} gradient chunks, got {}",
                self.params.len(),
                grads.num_chunks()
            )));
        }
        for (i, (p, g)) in self.params.iter().zip(&grads.chunks).enumerate() {
            if p.len() != g.len() {
                return Err(ModelError::Shape(format!(
                    "chunk {i}: {} parameters but {} gradient entries",
                    p.len(),
                    g.len()
                )));
            }
        }
        for (p, g) in self.params.iter_mut().zip(&grads.chunks) {
            for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
                *w -= lr * (gv + weight_decay * *w);
            }
        }
        self.version += 1;
        Ok(())
    }

    fn check_inputs(&self, inputs: &Tensor) -> Result<usize, ModelError> {
        let in_dim = self.input_dim();
        match inputs.shape() {
            [batch, d] if *d == in_dim && *batch > 0 => Ok(*batch),
            other => Err(ModelError::Shape(format!(
                "inputs must be [batch > 0, {in_dim}], got {other:?}"
            ))),
        }
    }

    fn parse_targets(&self, labels: &Tensor, batch: usize) -> Result<Targets, ModelError> {
        let classes = self.num_classes();
        match labels.shape() {
            [n] if *n == batch => {
                let mut idx = Vec::with_capacity(batch);
                for &v in labels.data() {
                    if v < 0.0 || v.fract() != 0.0 || v as usize >= classes {
                        return Err(ModelError::Shape(format!(
                            "label {v} is not a class index below {classes}"
                        )));
                    }
                    idx.push(v as usize);
                }
                Ok(Targets::Hard(idx))
            }
            [n, c] if *n == batch && *c == classes => Ok(Targets::Soft(
                labels.data().iter().map(|&v| f64::from(v)).collect(),
            )),
            other => Err(ModelError::Shape(format!(
                "labels must be [{batch}] or [{batch}, {classes}], got {other:?}"
            ))),
        }
    }
}

struct Pass<T> {
    loss: T,
    layer_inputs: Vec<Vec<T>>,
    probs: Vec<T>,
}

fn run_forward<T: Float>(
    layers: &[Layer],
    params: &[&[T]],
    x: &[T],
    batch: usize,
    targets: &Targets,
) -> Pass<T> {
    let mut act = x.to_vec();
    let mut layer_inputs = Vec::with_capacity(layers.len());
    let mut p = 0;
    let mut width = x.len() / batch;
    let mut loss = T::zero();
    let mut probs = Vec::new();
    for layer in layers {
        layer_inputs.push(act.clone());
        match *layer {
            Layer::Dense { inputs, outputs } => {
                let w = params[p];
                p += 1;
                let mut out = vec![T::zero(); batch * outputs];
                for b in 0..batch {
                    let xrow = &act[b * inputs..(b + 1) * inputs];
                    let orow = &mut out[b * outputs..(b + 1) * outputs];
                    orow.copy_from_slice(&w[inputs * outputs..]);
                    for (i, &xv) in xrow.iter().enumerate() {
                        let wrow = &w[i * outputs..(i + 1) * outputs];
                        for (o, &wv) in orow.iter_mut().zip(wrow) {
                            *o = *o + xv * wv;
                        }
                    }
                }
                act = out;
                width = outputs;
            }
            Layer::Relu => {
                for v in &mut act {
                    if *v < T::zero() {
                        *v = T::zero();
                    }
                }
            }
            Layer::SoftmaxCrossEntropy => {
                let (l, pr) = softmax_xent(&act, batch, width, targets);
                loss = l;
                probs = pr;
            }
        }
    }
    Pass {
        loss,
        layer_inputs,
        probs,
    }
}

fn softmax_xent<T: Float>(
    logits: &[T],
    batch: usize,
    classes: usize,
    targets: &Targets,
) -> (T, Vec<T>) {
    let mut probs = vec![T::zero(); logits.len()];
    let mut total = T::zero();
    for b in 0..batch {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum = row.iter().fold(T::zero(), |acc, &z| acc + (z - max).exp());
        let log_sum = sum.ln();
        let prow = &mut probs[b * classes..(b + 1) * classes];
        for (pv, &z) in prow.iter_mut().zip(row) {
            *pv = (z - max).exp() / sum;
        }
        match targets {
            Targets::Hard(idx) => total = total - (row[idx[b]] - max - log_sum),
            Targets::Soft(t) => {
                for (c, &z) in row.iter().enumerate() {
                    let tv = T::from(t[b * classes + c]).expect("finite target");
                    if tv != T::zero() {
                        total = total - tv * (z - max - log_sum);
                    }
                }
            }
        }
    }
    (total / T::from(batch).expect("batch fits"), probs)
}

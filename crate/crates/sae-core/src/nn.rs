//! Minimal feed-forward network with exact reverse-mode gradients.
//!
//! The network is deliberately small: dense layers, relu or tanh on hidden
//! layers, linear output (logits for classification, predictive mean for
//! regression). All parameters live in a single flat [`ParamVector`] using a
//! fixed layer-ordered packing (weights of layer 1 row-major, biases of
//! layer 1, weights of layer 2, ...), which makes parameter vectors portable
//! across the prior, the anchor chain, training and serialization.
//!
//! Everything here is a pure function over immutable inputs and safe to call
//! from many threads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative given the pre-activation value.
    #[inline]
    fn grad(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Output-side task of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

/// Dense feed-forward architecture.
///
/// `layer_sizes` runs input dim first, output dim last. Regression networks
/// are univariate (`layer_sizes` must end in 1) and use a fixed homoscedastic
/// observation noise `noise_sigma`; classification ignores `noise_sigma`.
/// `use_bias = false` drops all bias terms, which keeps tiny models inside the
/// grid oracle's parameter budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    layer_sizes: Vec<usize>,
    activation: Activation,
    task: Task,
    noise_sigma: f64,
    #[serde(default = "default_true")]
    use_bias: bool,
}

fn default_true() -> bool {
    true
}

impl MlpArchitecture {
    pub fn new(
        layer_sizes: Vec<usize>,
        activation: Activation,
        task: Task,
        noise_sigma: f64,
    ) -> Result<Self> {
        Self::with_bias(layer_sizes, activation, task, noise_sigma, true)
    }

    pub fn with_bias(
        layer_sizes: Vec<usize>,
        activation: Activation,
        task: Task,
        noise_sigma: f64,
        use_bias: bool,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least input and output layers, got {:?}",
                layer_sizes
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(format!(
                "all layer sizes must be >= 1, got {:?}",
                layer_sizes
            )));
        }
        if task == Task::Regression {
            if *layer_sizes.last().unwrap() != 1 {
                return Err(Error::InvalidArchitecture(format!(
                    "regression networks are univariate: output size must be 1, got {}",
                    layer_sizes.last().unwrap()
                )));
            }
            if !(noise_sigma > 0.0 && noise_sigma.is_finite()) {
                return Err(Error::InvalidArchitecture(format!(
                    "regression noise_sigma must be a positive real, got {noise_sigma}"
                )));
            }
        }
        Ok(Self {
            layer_sizes,
            activation,
            task,
            noise_sigma,
            use_bias,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn use_bias(&self) -> bool {
        self.use_bias
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total number of scalar parameters; a pure function of the layer sizes
    /// (and the bias switch).
    pub fn parameter_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + if self.use_bias { w[1] } else { 0 })
            .sum()
    }

    /// (weight range, bias range) of layer `l` inside a flat parameter vector.
    fn layer_offsets(&self, l: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let mut offset = 0;
        for k in 0..l {
            let (n_in, n_out) = (self.layer_sizes[k], self.layer_sizes[k + 1]);
            offset += n_in * n_out + if self.use_bias { n_out } else { 0 };
        }
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = offset..offset + n_in * n_out;
        let b = if self.use_bias {
            w.end..w.end + n_out
        } else {
            w.end..w.end
        };
        (w, b)
    }
}

/// Flat vector of all network parameters in layer-ordered packing.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            values: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_len(&self, arch: &MlpArchitecture, what: &'static str) -> Result<()> {
        if self.len() != arch.parameter_count() {
            return Err(Error::DimensionMismatch {
                what,
                expected: arch.parameter_count(),
                actual: self.len(),
            });
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for ParamVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for ParamVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Per-layer weights and biases, the structured view of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    /// Row-major `(n_out, n_in)` weight matrix.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

/// Unpacks a flat vector into per-layer weights and biases.
pub fn unflatten(arch: &MlpArchitecture, params: &ParamVector) -> Result<Vec<LayerParams>> {
    params.check_len(arch, "unflatten parameters")?;
    let mut layers = Vec::with_capacity(arch.num_layers());
    for l in 0..arch.num_layers() {
        let (wr, br) = arch.layer_offsets(l);
        layers.push(LayerParams {
            weights: params.as_slice()[wr].to_vec(),
            biases: params.as_slice()[br].to_vec(),
            n_in: arch.layer_sizes[l],
            n_out: arch.layer_sizes[l + 1],
        });
    }
    Ok(layers)
}

/// Packs per-layer parameters back into the flat layer-ordered form.
///
/// Exact inverse of [`unflatten`]: the round trip is bit-identical.
pub fn flatten(arch: &MlpArchitecture, layers: &[LayerParams]) -> Result<ParamVector> {
    if layers.len() != arch.num_layers() {
        return Err(Error::DimensionMismatch {
            what: "flatten layers",
            expected: arch.num_layers(),
            actual: layers.len(),
        });
    }
    let mut values = Vec::with_capacity(arch.parameter_count());
    for layer in layers {
        values.extend_from_slice(&layer.weights);
        values.extend_from_slice(&layer.biases);
    }
    let out = ParamVector::new(values);
    out.check_len(arch, "flatten parameters")?;
    Ok(out)
}

/// Dense row-major matrix used for dataset inputs, eval grids and predictive
/// densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    pub fn new(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix storage",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { data, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: d,
                    actual: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Matrix::new(data, n, d)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Targets of a dataset: class indices or real values.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Targets::Classes(_) => Task::Classification,
            Targets::Values(_) => Task::Regression,
        }
    }
}

/// A supervised dataset: `n x d` inputs plus per-sample targets.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Matrix,
    pub targets: Targets,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Matrix, targets: Targets, name: impl Into<String>) -> Result<Self> {
        if inputs.rows() == 0 {
            return Err(Error::InvalidConfig("dataset must have n >= 1".into()));
        }
        if targets.len() != inputs.rows() {
            return Err(Error::DimensionMismatch {
                what: "dataset targets",
                expected: inputs.rows(),
                actual: targets.len(),
            });
        }
        if !inputs.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dataset inputs".into()));
        }
        if let Targets::Values(v) = &targets {
            if !v.iter().all(|y| y.is_finite()) {
                return Err(Error::NonFinite("dataset targets".into()));
            }
        }
        Ok(Self {
            inputs,
            targets,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of classes implied by the targets (max index + 1).
    pub fn num_classes(&self) -> Option<usize> {
        match &self.targets {
            Targets::Classes(c) => c.iter().max().map(|m| m + 1),
            Targets::Values(_) => None,
        }
    }

    /// Checks input dim, task kind and class bounds against an architecture.
    pub fn check_compatible(&self, arch: &MlpArchitecture) -> Result<()> {
        if self.inputs.cols() != arch.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "dataset input dim",
                expected: arch.input_dim(),
                actual: self.inputs.cols(),
            });
        }
        match (&self.targets, arch.task()) {
            (Targets::Classes(c), Task::Classification) => {
                let k = arch.output_dim();
                if let Some(&bad) = c.iter().find(|&&y| y >= k) {
                    return Err(Error::InvalidConfig(format!(
                        "class index {bad} out of range for {k} classes"
                    )));
                }
                Ok(())
            }
            (Targets::Values(_), Task::Regression) => Ok(()),
            (t, task) => Err(Error::TaskMismatch(format!(
                "dataset targets are {:?} but architecture task is {:?}",
                t.task(),
                task
            ))),
        }
    }
}

/// Forward state kept for backpropagation: pre-activations and activations per layer.
struct ForwardTrace {
    /// `pre[l]` are the pre-activation values of layer `l`.
    pre: Vec<Vec<f64>>,
    /// `act[0]` is the input, `act[l + 1]` the post-activation output of layer `l`.
    act: Vec<Vec<f64>>,
}

fn forward_trace(arch: &MlpArchitecture, params: &ParamVector, x: &[f64]) -> ForwardTrace {
    let n_layers = arch.num_layers();
    let mut pre = Vec::with_capacity(n_layers);
    let mut act = Vec::with_capacity(n_layers + 1);
    act.push(x.to_vec());
    for l in 0..n_layers {
        let (wr, br) = arch.layer_offsets(l);
        let w = &params.as_slice()[wr];
        let b = &params.as_slice()[br];
        let n_in = arch.layer_sizes[l];
        let n_out = arch.layer_sizes[l + 1];
        let input = act.last().unwrap();
        let mut z = vec![0.0; n_out];
        for (o, zo) in z.iter_mut().enumerate() {
            let mut sum = if arch.use_bias { b[o] } else { 0.0 };
            let row = &w[o * n_in..(o + 1) * n_in];
            for (wi, xi) in row.iter().zip(input.iter()) {
                sum += wi * xi;
            }
            *zo = sum;
        }
        let out = if l + 1 == n_layers {
            z.clone()
        } else {
            z.iter().map(|&v| arch.activation.apply(v)).collect()
        };
        pre.push(z);
        act.push(out);
    }
    ForwardTrace { pre, act }
}

/// Runs the network on one input, returning pre-softmax logits
/// (classification) or the predictive mean (regression).
pub fn forward(arch: &MlpArchitecture, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    params.check_len(arch, "forward parameters")?;
    if x.len() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "forward input",
            expected: arch.input_dim(),
            actual: x.len(),
        });
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("forward input".into()));
    }
    Ok(forward_trace(arch, params, x).act.pop().unwrap())
}

#[inline]
fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// Log-likelihood of the dataset under the network.
///
/// Classification sums per-sample log-softmax at the target class; regression
/// sums Gaussian log-densities with the architecture's fixed `noise_sigma`.
pub fn log_likelihood(arch: &MlpArchitecture, params: &ParamVector, data: &Dataset) -> Result<f64> {
    params.check_len(arch, "log_likelihood parameters")?;
    data.check_compatible(arch)?;
    let mut total = 0.0;
    match &data.targets {
        Targets::Classes(classes) => {
            for (i, &y) in classes.iter().enumerate() {
                let logits = forward(arch, params, data.inputs.row(i))?;
                if !logits.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFinite(format!("logits for sample {i}")));
                }
                total += logits[y] - log_sum_exp(&logits);
            }
        }
        Targets::Values(values) => {
            let sigma = arch.noise_sigma;
            for (i, &y) in values.iter().enumerate() {
                let mu = forward(arch, params, data.inputs.row(i))?[0];
                if !mu.is_finite() {
                    return Err(Error::NonFinite(format!("prediction for sample {i}")));
                }
                let r = (y - mu) / sigma;
                total += -0.5 * LN_2PI - sigma.ln() - 0.5 * r * r;
            }
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(total)
}

/// Exact reverse-mode gradient of [`log_likelihood`] with respect to every parameter.
pub fn grad_log_likelihood(
    arch: &MlpArchitecture,
    params: &ParamVector,
    data: &Dataset,
) -> Result<ParamVector> {
    params.check_len(arch, "grad_log_likelihood parameters")?;
    data.check_compatible(arch)?;
    let mut grad = vec![0.0; params.len()];
    let n_layers = arch.num_layers();

    for i in 0..data.len() {
        let trace = forward_trace(arch, params, data.inputs.row(i));
        let logits = trace.act.last().unwrap();
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("logits for sample {i}")));
        }

        // d(log-lik contribution) / d(output) for this sample.
        let mut delta: Vec<f64> = match &data.targets {
            Targets::Classes(classes) => {
                let lse = log_sum_exp(logits);
                let mut d: Vec<f64> = logits.iter().map(|&z| -(z - lse).exp()).collect();
                d[classes[i]] += 1.0;
                d
            }
            Targets::Values(values) => {
                let sigma = arch.noise_sigma;
                vec![(values[i] - logits[0]) / (sigma * sigma)]
            }
        };

        for l in (0..n_layers).rev() {
            let (wr, br) = arch.layer_offsets(l);
            let n_in = arch.layer_sizes[l];
            let n_out = arch.layer_sizes[l + 1];
            let input = &trace.act[l];
            {
                let w_grad = &mut grad[wr.clone()];
                for o in 0..n_out {
                    let row = &mut w_grad[o * n_in..(o + 1) * n_in];
                    for (gi, xi) in row.iter_mut().zip(input.iter()) {
                        *gi += delta[o] * xi;
                    }
                }
            }
            if arch.use_bias {
                let b_grad = &mut grad[br];
                for (g, d) in b_grad.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            if l > 0 {
                let w = &params.as_slice()[wr];
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row.iter()) {
                        *p += wi * d;
                    }
                }
                // Chain through the hidden activation of layer l-1.
                for (p, &z) in prev.iter_mut().zip(trace.pre[l - 1].iter()) {
                    *p *= arch.activation.grad(z);
                }
                delta = prev;
            }
        }
    }

    if !grad.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("log-likelihood gradient".into()));
    }
    Ok(ParamVector::new(grad))
}

/// Softmax class probabilities for one input. Classification only.
pub fn predict_proba(arch: &MlpArchitecture, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
    if arch.task != Task::Classification {
        return Err(Error::TaskMismatch(
            "predict_proba requires a classification architecture".into(),
        ));
    }
    let logits = forward(arch, params, x)?;
    Ok(softmax(&logits))
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Fresh initialization: weights `N(0, 1/fan_in)`, biases zero.
pub fn init_params<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> ParamVector {
    let mut values = Vec::with_capacity(arch.parameter_count());
    for l in 0..arch.num_layers() {
        let n_in = arch.layer_sizes[l];
        let n_out = arch.layer_sizes[l + 1];
        let std = (1.0 / n_in as f64).sqrt();
        for _ in 0..n_in * n_out {
            let z: f64 = StandardNormal.sample(rng);
            values.push(std * z);
        }
        if arch.use_bias {
            values.extend(std::iter::repeat_n(0.0, n_out));
        }
    }
    ParamVector::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn arch(sizes: &[usize], act: Activation, task: Task) -> MlpArchitecture {
        MlpArchitecture::new(sizes.to_vec(), act, task, 1.0).unwrap()
    }

    fn reg_arch(sizes: &[usize]) -> MlpArchitecture {
        arch(sizes, Activation::Tanh, Task::Regression)
    }

    /// Independent straightforward forward pass over the unflattened layers.
    #[allow(clippy::needless_range_loop)]
    fn forward_oracle(a: &MlpArchitecture, params: &ParamVector, x: &[f64]) -> Vec<f64> {
        let layers = unflatten(a, params).unwrap();
        let mut cur = x.to_vec();
        for (l, layer) in layers.iter().enumerate() {
            let mut next = vec![0.0; layer.n_out];
            for o in 0..layer.n_out {
                let mut s = if a.use_bias() { layer.biases[o] } else { 0.0 };
                for i in 0..layer.n_in {
                    s += layer.weights[o * layer.n_in + i] * cur[i];
                }
                next[o] = s;
            }
            if l + 1 < layers.len() {
                for v in &mut next {
                    *v = match a.activation() {
                        Activation::Relu => v.max(0.0),
                        Activation::Tanh => v.tanh(),
                    };
                }
            }
            cur = next;
        }
        cur
    }

    fn random_params(a: &MlpArchitecture, seed: u64) -> ParamVector {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let values = (0..a.parameter_count())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        ParamVector::new(values)
    }

    #[test]
    fn zero_params_give_zero_output() {
        let a = reg_arch(&[1, 1]);
        let p = ParamVector::zeros(a.parameter_count());
        let out = forward(&a, &p, &[5.0]).unwrap();
        assert_eq!(out, vec![0.0]);
    }

    #[test]
    fn affine_map_is_exact() {
        let a = reg_arch(&[1, 1]);
        // Packing is [w, b].
        let p = ParamVector::new(vec![2.0, 1.0]);
        let out = forward(&a, &p, &[3.0]).unwrap();
        assert_eq!(out, vec![7.0]);
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let a = arch(&[2, 3, 2], Activation::Tanh, Task::Classification);
        let p = random_params(&a, 42);
        let x = [0.37, -1.2];
        let got = forward(&a, &p, &x).unwrap();
        let want = forward_oracle(&a, &p, &x);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-14, "got {g}, want {w}");
        }
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let a = reg_arch(&[2, 1]);
        let p = ParamVector::zeros(a.parameter_count());
        let err = forward(&a, &p, &[1.0]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("expected 2") && msg.contains("got 1"), "{msg}");
    }

    #[test]
    fn uniform_logits_give_log_half() {
        // Two classes, zero params: logits (0, 0) on one sample.
        let a = arch(&[1, 2], Activation::Tanh, Task::Classification);
        let p = ParamVector::zeros(a.parameter_count());
        let data = Dataset::new(
            Matrix::from_rows(&[vec![0.3]]).unwrap(),
            Targets::Classes(vec![0]),
            "one",
        )
        .unwrap();
        let ll = log_likelihood(&a, &p, &data).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_gaussian_density() {
        let a = reg_arch(&[1, 1]);
        let p = ParamVector::zeros(a.parameter_count());
        let data = Dataset::new(
            Matrix::from_rows(&[vec![2.0]]).unwrap(),
            Targets::Values(vec![0.0]),
            "one",
        )
        .unwrap();
        let ll = log_likelihood(&a, &p, &data).unwrap();
        assert!((ll - (-0.5 * LN_2PI)).abs() < 1e-12);
        assert!((ll + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn log_likelihood_matches_per_sample_oracle() {
        let a = arch(&[2, 3, 3], Activation::Tanh, Task::Classification);
        let p = random_params(&a, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let classes: Vec<usize> = (0..5).map(|i| i % 3).collect();
        let data = Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            Targets::Classes(classes.clone()),
            "rand",
        )
        .unwrap();

        // Independent summation: softmax each sample the long way.
        let mut want = 0.0;
        for (row, &y) in rows.iter().zip(classes.iter()) {
            let logits = forward_oracle(&a, &p, row);
            let denom: f64 = logits.iter().map(|z| z.exp()).sum();
            want += (logits[y].exp() / denom).ln();
        }
        let got = log_likelihood(&a, &p, &data).unwrap();
        assert!((got - want).abs() < 1e-10, "got {got}, want {want}");
        assert!(got <= 0.0);
    }

    #[test]
    fn classification_log_likelihood_is_nonpositive() {
        let a = arch(&[2, 4, 3], Activation::Relu, Task::Classification);
        for seed in 0..10 {
            let p = random_params(&a, seed);
            let data = Dataset::new(
                Matrix::from_rows(&[vec![1.0, -0.5], vec![0.2, 0.9]]).unwrap(),
                Targets::Classes(vec![2, 0]),
                "t",
            )
            .unwrap();
            assert!(log_likelihood(&a, &p, &data).unwrap() <= 0.0);
        }
    }

    #[test]
    fn hand_gradient_linear_regression() {
        // arch [1,1], data {(x=1, y=0)}, w=1, b=0, sigma=1:
        // ll = -0.5 ln(2pi) - (wx+b)^2/2, d/dw = -(wx+b)x = -1, d/db = -1.
        let a = reg_arch(&[1, 1]);
        let p = ParamVector::new(vec![1.0, 0.0]);
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.0]]).unwrap(),
            Targets::Values(vec![0.0]),
            "one",
        )
        .unwrap();
        let g = grad_log_likelihood(&a, &p, &data).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-12);
        assert!((g[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_residual_gradient_is_zero() {
        let a = reg_arch(&[1, 1]);
        let p = ParamVector::zeros(2);
        let data = Dataset::new(
            Matrix::from_rows(&[vec![1.5], vec![-0.4]]).unwrap(),
            Targets::Values(vec![0.0, 0.0]),
            "zeros",
        )
        .unwrap();
        let g = grad_log_likelihood(&a, &p, &data).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    pub(crate) fn finite_diff_grad(
        a: &MlpArchitecture,
        p: &ParamVector,
        data: &Dataset,
        h: f64,
    ) -> Vec<f64> {
        let mut g = vec![0.0; p.len()];
        let mut work = p.clone();
        for j in 0..p.len() {
            let orig = work[j];
            work[j] = orig + h;
            let hi = log_likelihood(a, &work, data).unwrap();
            work[j] = orig - h;
            let lo = log_likelihood(a, &work, data).unwrap();
            work[j] = orig;
            g[j] = (hi - lo) / (2.0 * h);
        }
        g
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = arch(&[2, 4, 3], Activation::Tanh, Task::Classification);
        let p = random_params(&a, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let data = Dataset::new(
            Matrix::from_rows(&rows).unwrap(),
            Targets::Classes(vec![0, 1, 2, 0, 1, 2]),
            "fd",
        )
        .unwrap();
        let analytic = grad_log_likelihood(&a, &p, &data).unwrap();
        let numeric = finite_diff_grad(&a, &p, &data, 1e-5);
        for (j, (&ag, ng)) in analytic.iter().zip(numeric.iter()).enumerate() {
            let denom = ag.abs().max(1e-8);
            assert!(
                ((ag - ng).abs() / denom) < 1e-5,
                "coord {j}: analytic {ag}, numeric {ng}"
            );
        }
    }

    #[test]
    fn predict_proba_uniform_on_zero_logits() {
        let a = arch(&[1, 3], Activation::Tanh, Task::Classification);
        let p = ParamVector::zeros(a.parameter_count());
        let probs = predict_proba(&a, &p, &[0.7]).unwrap();
        for q in probs {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn predict_proba_hand_softmax() {
        let probs = softmax(&[2.0f64.ln(), 0.0]);
        assert!((probs[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((probs[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn predict_proba_rejects_regression() {
        let a = reg_arch(&[1, 1]);
        let p = ParamVector::zeros(2);
        assert!(matches!(
            predict_proba(&a, &p, &[0.0]),
            Err(Error::TaskMismatch(_))
        ));
    }

    #[test]
    fn init_params_shapes_and_zero_biases() {
        let a = arch(&[3, 5, 2], Activation::Relu, Task::Classification);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let p = init_params(&a, &mut rng);
        assert_eq!(p.len(), a.parameter_count());
        let layers = unflatten(&a, &p).unwrap();
        for layer in &layers {
            assert!(layer.biases.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn parameter_count_formula() {
        let a = arch(&[3, 5, 2], Activation::Relu, Task::Classification);
        assert_eq!(a.parameter_count(), 3 * 5 + 5 + 5 * 2 + 2);
        let nb =
            MlpArchitecture::with_bias(vec![2, 2], Activation::Tanh, Task::Classification, 1.0, false)
                .unwrap();
        assert_eq!(nb.parameter_count(), 4);
    }

    #[test]
    fn rejects_bad_architectures() {
        assert!(MlpArchitecture::new(vec![3], Activation::Relu, Task::Classification, 1.0).is_err());
        assert!(MlpArchitecture::new(vec![2, 0], Activation::Relu, Task::Classification, 1.0).is_err());
        assert!(MlpArchitecture::new(vec![1, 2], Activation::Relu, Task::Regression, 1.0).is_err());
        assert!(MlpArchitecture::new(vec![1, 1], Activation::Relu, Task::Regression, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_round_trip(seed in 0u64..1000, bias in proptest::bool::ANY) {
            let a = MlpArchitecture::with_bias(
                vec![2, 3, 2],
                Activation::Tanh,
                Task::Classification,
                1.0,
                bias,
            )
            .unwrap();
            let p = random_params(&a, seed);
            let layers = unflatten(&a, &p).unwrap();
            let back = flatten(&a, &layers).unwrap();
            // Bit-identical round trip.
            prop_assert_eq!(p.as_slice(), back.as_slice());
        }

        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-30.0f64..30.0, 1..6)) {
            let probs = softmax(&logits);
            let sum: f64 = probs.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&q| q > 0.0 && q < 1.0 + 1e-12));
        }

        #[test]
        fn softmax_permutation_equivariant(logits in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let base = softmax(&logits);
            let rotated = softmax(&[logits[2], logits[0], logits[1]]);
            prop_assert!((base[2] - rotated[0]).abs() < 1e-15);
            prop_assert!((base[0] - rotated[1]).abs() < 1e-15);
            prop_assert!((base[1] - rotated[2]).abs() < 1e-15);
        }
    }
}

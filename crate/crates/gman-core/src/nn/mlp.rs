//! Dense feed-forward networks with exact reverse-mode gradients.
//!
//! The engine is deliberately small: affine layers, three activations, a
//! forward tape, and a backward pass that produces gradients for every weight,
//! bias, and the input. All arithmetic is f64. Initialization is driven by the
//! SplitMix64 generator, so a spec with a given seed produces bit-identical
//! parameters on every platform.

use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::matrix::Matrix;
use super::rng::SplitMix64;
use crate::error::{Error, Result};

/// Architecture + seed description of an MLP.
///
/// `activation` is applied after every layer listed in `layer_widths` except
/// the last, which uses `output_activation`. The last width is the output
/// dimension. `MlpSpec::new` sets both activations equal, so a plain spec
/// applies its activation uniformly; builders that want an affine head chain
/// [`MlpSpec::with_output_activation`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    pub fn new(
        input_dim: usize,
        layer_widths: Vec<usize>,
        activation: Activation,
        seed: u64,
    ) -> Self {
        Self {
            input_dim,
            layer_widths,
            activation,
            output_activation: activation,
            seed,
        }
    }

    pub fn with_output_activation(mut self, activation: Activation) -> Self {
        self.output_activation = activation;
        self
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap_or(&0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidSpec("input_dim must be positive".into()));
        }
        if self.layer_widths.is_empty() {
            return Err(Error::InvalidSpec("layer_widths must be non-empty".into()));
        }
        if let Some(pos) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!(
                "layer_widths[{pos}] must be positive"
            )));
        }
        Ok(())
    }

    /// Activation of layer `k` out of `n` layers.
    fn layer_activation(&self, k: usize) -> Activation {
        if k + 1 == self.layer_widths.len() {
            self.output_activation
        } else {
            self.activation
        }
    }
}

/// Instantiated parameters of an MLP. `weights[k]` has shape
/// `(layer_widths[k], previous width)`; `biases[k]` has length `layer_widths[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub spec: MlpSpec,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradients mirroring an [`MlpParams`], plus the gradient with respect to
/// the network input.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Vec<f64>>,
    pub input_gradient: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            d_weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            d_biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input_gradient: vec![0.0; params.spec.input_dim],
        }
    }

    /// Accumulate `other` into `self`, element-wise.
    pub fn add_assign(&mut self, other: &GradBundle) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.input_gradient.iter_mut().zip(&other.input_gradient) {
            *x += y;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.d_weights {
            for x in w.iter_mut() {
                *x *= factor;
            }
        }
        for b in &mut self.d_biases {
            for x in b.iter_mut() {
                *x *= factor;
            }
        }
        for x in &mut self.input_gradient {
            *x *= factor;
        }
    }

    /// Returns the name of the first non-finite array, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        for (k, w) in self.d_weights.iter().enumerate() {
            if !w.is_finite() {
                return Some(format!("d_weights[{k}]"));
            }
        }
        for (k, b) in self.d_biases.iter().enumerate() {
            if b.iter().any(|v| !v.is_finite()) {
                return Some(format!("d_biases[{k}]"));
            }
        }
        if self.input_gradient.iter().any(|v| !v.is_finite()) {
            return Some("input_gradient".into());
        }
        None
    }
}

/// Record of one forward pass: the input plus every layer's post-activation
/// output. Enough to run an exact reverse-mode backward.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input: Vec<f64>,
    layer_outputs: Vec<Vec<f64>>,
}

impl ForwardTape {
    pub fn output(&self) -> &[f64] {
        self.layer_outputs
            .last()
            .expect("tape has at least one layer")
    }
}

impl MlpParams {
    /// Initialize from a spec: weights fan-in-scaled uniform in
    /// `[-sqrt(6/fan_in), sqrt(6/fan_in))` drawn row-major per layer from
    /// SplitMix64 seeded with `spec.seed`; biases zero.
    pub fn init(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = SplitMix64::new(spec.seed);
        let mut weights = Vec::with_capacity(spec.layer_widths.len());
        let mut biases = Vec::with_capacity(spec.layer_widths.len());
        let mut fan_in = spec.input_dim;
        for &width in &spec.layer_widths {
            let limit = (6.0 / fan_in as f64).sqrt();
            let mut w = Matrix::zeros(width, fan_in);
            for v in w.iter_mut() {
                *v = rng.uniform(-limit, limit);
            }
            weights.push(w);
            biases.push(vec![0.0; width]);
            fan_in = width;
        }
        Ok(Self {
            spec: spec.clone(),
            weights,
            biases,
        })
    }

    /// Build from explicit layers; used by the hand-set gadget constructions.
    pub fn from_layers(spec: MlpSpec, weights: Vec<Matrix>, biases: Vec<Vec<f64>>) -> Result<Self> {
        spec.validate()?;
        let params = Self {
            spec,
            weights,
            biases,
        };
        params.check_shapes()?;
        Ok(params)
    }

    fn check_shapes(&self) -> Result<()> {
        if self.weights.len() != self.spec.layer_widths.len()
            || self.biases.len() != self.spec.layer_widths.len()
        {
            return Err(Error::InvalidSpec("layer count mismatch".into()));
        }
        let mut fan_in = self.spec.input_dim;
        for (k, &width) in self.spec.layer_widths.iter().enumerate() {
            if self.weights[k].rows() != width || self.weights[k].cols() != fan_in {
                return Err(Error::InvalidSpec(format!(
                    "weights[{k}] must be {width}x{fan_in}"
                )));
            }
            if self.biases[k].len() != width {
                return Err(Error::InvalidSpec(format!(
                    "biases[{k}] must have length {width}"
                )));
            }
            fan_in = width;
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    /// Forward pass, returning the output and a tape for backward.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardTape)> {
        if input.len() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                what: "mlp input".into(),
                expected: self.spec.input_dim,
                actual: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                locus: "mlp input".into(),
            });
        }
        let mut layer_outputs = Vec::with_capacity(self.weights.len());
        let mut current = input.to_vec();
        for (k, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let act = self.spec.layer_activation(k);
            let mut out = vec![0.0; w.rows()];
            w.mul_vec(&current, &mut out);
            for (o, bi) in out.iter_mut().zip(b) {
                *o = act.apply(*o + bi);
            }
            layer_outputs.push(out.clone());
            current = out;
        }
        Ok((
            current,
            ForwardTape {
                input: input.to_vec(),
                layer_outputs,
            },
        ))
    }

    /// Forward pass without recording a tape.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    /// Exact reverse-mode gradients of `output . upstream` with respect to
    /// every weight, bias, and the input.
    pub fn backward(&self, tape: &ForwardTape, upstream: &[f64]) -> Result<GradBundle> {
        if tape.layer_outputs.len() != self.weights.len() || tape.input.len() != self.spec.input_dim
        {
            return Err(Error::InvalidSpec("tape does not match params".into()));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::ShapeMismatch {
                what: "mlp upstream gradient".into(),
                expected: self.output_dim(),
                actual: upstream.len(),
            });
        }
        let mut grads = GradBundle::zeros_like(self);
        let mut d_out = upstream.to_vec();
        for k in (0..self.weights.len()).rev() {
            let act = self.spec.layer_activation(k);
            let outputs = &tape.layer_outputs[k];
            let inputs: &[f64] = if k == 0 {
                &tape.input
            } else {
                &tape.layer_outputs[k - 1]
            };
            // d_z = d_out * act'(z), with act' read off the post-activation value.
            let d_z: Vec<f64> = d_out
                .iter()
                .zip(outputs)
                .map(|(g, &y)| g * act.grad_from_output(y))
                .collect();
            for (r, &dz) in d_z.iter().enumerate() {
                grads.d_biases[k][r] = dz;
                for (c, &xi) in inputs.iter().enumerate() {
                    grads.d_weights[k][(r, c)] = dz * xi;
                }
            }
            let mut d_in = vec![0.0; inputs.len()];
            self.weights[k].mul_vec_transposed(&d_z, &mut d_in);
            d_out = d_in;
        }
        grads.input_gradient = d_out;
        Ok(grads)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

/* ------------------------------------------------------------------------- */
/* Finite-difference oracle                                                  */
/* ------------------------------------------------------------------------- */

/// Scalar reduction applied to the network output so finite differences have
/// a single number to difference.
#[derive(Debug, Clone)]
pub enum ScalarHead {
    /// Sum of all output entries.
    Sum,
    /// Sum of squared output entries.
    SumOfSquares,
    /// Dot product with a fixed weight vector; matches `backward` with that
    /// vector as the upstream gradient.
    Weighted(Vec<f64>),
}

impl ScalarHead {
    fn reduce(&self, out: &[f64]) -> f64 {
        match self {
            ScalarHead::Sum => out.iter().sum(),
            ScalarHead::SumOfSquares => out.iter().map(|v| v * v).sum(),
            ScalarHead::Weighted(w) => out.iter().zip(w).map(|(o, c)| o * c).sum(),
        }
    }
}

/// Central-difference step used by [`finite_diff_grad`].
pub const FD_STEP: f64 = 1e-5;

/// Central-difference gradients (step 1e-5) of `head(mlp(input))` with respect
/// to every parameter and every input entry. Gradient-check oracle; never on
/// any training path.
pub fn finite_diff_grad(
    params: &MlpParams,
    input: &[f64],
    head: &ScalarHead,
) -> Result<GradBundle> {
    let mut work = params.clone();
    let mut grads = GradBundle::zeros_like(params);
    let eval = |p: &MlpParams, x: &[f64]| -> Result<f64> { Ok(head.reduce(&p.eval(x)?)) };

    for k in 0..params.weights.len() {
        for idx in 0..params.weights[k].data().len() {
            let orig = work.weights[k].data()[idx];
            work.weights[k].data_mut()[idx] = orig + FD_STEP;
            let plus = eval(&work, input)?;
            work.weights[k].data_mut()[idx] = orig - FD_STEP;
            let minus = eval(&work, input)?;
            work.weights[k].data_mut()[idx] = orig;
            grads.d_weights[k].data_mut()[idx] = (plus - minus) / (2.0 * FD_STEP);
        }
        for idx in 0..params.biases[k].len() {
            let orig = work.biases[k][idx];
            work.biases[k][idx] = orig + FD_STEP;
            let plus = eval(&work, input)?;
            work.biases[k][idx] = orig - FD_STEP;
            let minus = eval(&work, input)?;
            work.biases[k][idx] = orig;
            grads.d_biases[k][idx] = (plus - minus) / (2.0 * FD_STEP);
        }
    }
    let mut x = input.to_vec();
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + FD_STEP;
        let plus = eval(params, &x)?;
        x[i] = orig - FD_STEP;
        let minus = eval(params, &x)?;
        x[i] = orig;
        grads.input_gradient[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    Ok(grads)
}

/// Relative error with a small absolute floor, for gradient checks.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Maximum relative error between two gradient bundles.
pub fn max_rel_error(a: &GradBundle, b: &GradBundle) -> f64 {
    let mut max = 0.0f64;
    for (wa, wb) in a.d_weights.iter().zip(&b.d_weights) {
        for (x, y) in wa.iter().zip(wb.iter()) {
            max = max.max(rel_error(*x, *y));
        }
    }
    for (ba, bb) in a.d_biases.iter().zip(&b.d_biases) {
        for (x, y) in ba.iter().zip(bb) {
            max = max.max(rel_error(*x, *y));
        }
    }
    for (x, y) in a.input_gradient.iter().zip(&b.input_gradient) {
        max = max.max(rel_error(*x, *y));
    }
    max
}

//! Fully connected network with tanh hidden layers and an identity output
//! layer, plus exact reverse-mode gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cast, Scalar};
use crate::tensor::Tensor2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub weights: Tensor2<T>, // (out, in)
    pub biases: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    sizes: Vec<usize>,
    layers: Vec<Layer<T>>,
    hidden: Activation,
}

/// Cached forward pass. `post[0]` is the input; `post[l]` the activated
/// output of layer `l`.
pub struct Trace<T> {
    post: Vec<Vec<T>>,
}

/// Parameter and input gradients from one backward pass.
#[derive(Clone, Debug)]
pub struct MlpGradients<T> {
    pub d_weights: Vec<Tensor2<T>>,
    pub d_biases: Vec<Vec<T>>,
    pub d_input: Vec<T>,
}

impl<T: Scalar> MlpGradients<T> {
    pub fn zeros_like(mlp: &Mlp<T>) -> Self {
        MlpGradients {
            d_weights: mlp
                .layers
                .iter()
                .map(|l| Tensor2::zeros(l.weights.rows(), l.weights.cols()))
                .collect(),
            d_biases: mlp.layers.iter().map(|l| vec![T::zero(); l.biases.len()]).collect(),
            d_input: vec![T::zero(); mlp.sizes[0]],
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpGradients<T>, scale: T) {
        for (a, b) in self.d_weights.iter_mut().zip(&other.d_weights) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += scale * *y;
            }
        }
        for (a, b) in self.d_biases.iter_mut().zip(&other.d_biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * *y;
            }
        }
        for (x, y) in self.d_input.iter_mut().zip(&other.d_input) {
            *x += scale * *y;
        }
    }

    /// Parameter gradients flattened in the same order as
    /// [`Mlp::params_flat`].
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::new();
        for (w, b) in self.d_weights.iter().zip(&self.d_biases) {
            out.extend_from_slice(w.data());
            out.extend_from_slice(b);
        }
        out
    }
}

impl<T: Scalar> Mlp<T> {
    /// Zero-initialized network. `sizes` lists layer widths from input to
    /// output and needs at least an input and an output entry.
    pub fn new(sizes: &[usize], hidden: Activation) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Spec(format!(
                "network needs at least input and output sizes, got {sizes:?}"
            )));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::Spec(format!("zero-width layer in {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: Tensor2::zeros(w[1], w[0]),
                biases: vec![T::zero(); w[1]],
            })
            .collect();
        Ok(Mlp {
            sizes: sizes.to_vec(),
            layers,
            hidden,
        })
    }

    /// Xavier-uniform initialization: weights drawn from
    /// `U(-b, b)` with `b = sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn xavier(sizes: &[usize], rng: &mut Rng) -> Result<Self> {
        let mut mlp = Self::new(sizes, Activation::Tanh)?;
        for layer in &mut mlp.layers {
            let bound = (6.0 / (layer.weights.cols() + layer.weights.rows()) as f64).sqrt();
            for w in layer.weights.data_mut() {
                *w = cast::<T>(bound * (2.0 * rng.uniform() - 1.0));
            }
        }
        Ok(mlp)
    }

    /// Assemble from explicit layers (used by checkpoint loading and by
    /// hand-constructed reference models in tests).
    pub fn from_layers(layers: Vec<Layer<T>>, hidden: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Spec("network needs at least one layer".into()));
        }
        let mut sizes = vec![layers[0].weights.cols()];
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.cols() != sizes[i] {
                return Err(Error::Shape(format!(
                    "layer {i} expects input {} but previous layer outputs {}",
                    layer.weights.cols(),
                    sizes[i]
                )));
            }
            if layer.biases.len() != layer.weights.rows() {
                return Err(Error::Shape(format!(
                    "layer {i} has {} biases for {} outputs",
                    layer.biases.len(),
                    layer.weights.rows()
                )));
            }
            sizes.push(layer.weights.rows());
        }
        Ok(Mlp { sizes, layers, hidden })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.rows() * l.weights.cols() + l.biases.len())
            .sum()
    }

    fn check_input(&self, x: &[T]) -> Result<()> {
        if x.len() != self.sizes[0] {
            return Err(Error::Shape(format!(
                "network expects input of length {}, got {}",
                self.sizes[0],
                x.len()
            )));
        }
        Ok(())
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut cur = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(&cur);
            for (zi, b) in z.iter_mut().zip(&layer.biases) {
                *zi += *b;
            }
            if l < last && self.hidden == Activation::Tanh {
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
            }
            cur = z;
        }
        Ok(cur)
    }

    /// Forward pass that keeps per-layer activations for [`Self::backward`].
    pub fn forward_trace(&self, x: &[T]) -> Result<(Vec<T>, Trace<T>)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(x.to_vec());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weights.matvec(post.last().unwrap());
            for (zi, b) in z.iter_mut().zip(&layer.biases) {
                *zi += *b;
            }
            if l < last && self.hidden == Activation::Tanh {
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
            }
            post.push(z);
        }
        Ok((post.last().unwrap().clone(), Trace { post }))
    }

    /// Reverse-mode gradients of `upstream . output` with respect to every
    /// parameter and the input. `upstream` is the gradient of the loss with
    /// respect to the network output.
    pub fn backward(&self, trace: &Trace<T>, upstream: &[T]) -> Result<MlpGradients<T>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has length {}, output has {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let mut grads = MlpGradients::zeros_like(self);
        let mut delta = upstream.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.post[l];
            grads.d_weights[l].add_outer_scaled(&delta, input, T::one());
            for (db, d) in grads.d_biases[l].iter_mut().zip(&delta) {
                *db = *d;
            }
            let mut prev = layer.weights.matvec_transpose(&delta);
            if l > 0 && self.hidden == Activation::Tanh {
                // Hidden activations were stored post-tanh; tanh' = 1 - tanh^2.
                for (p, a) in prev.iter_mut().zip(&trace.post[l]) {
                    *p = *p * (T::one() - *a * *a);
                }
            }
            delta = prev;
        }
        grads.d_input = delta;
        Ok(grads)
    }

    /// All parameters flattened layer by layer, weights row-major then biases.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.rows() * layer.weights.cols();
            layer
                .weights
                .data_mut()
                .copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }
}

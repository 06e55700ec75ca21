//! Bias-free ReLU generator `G(x) = relu(W_d … relu(W_1 x))`.
//!
//! Activation masks use strict positivity: a pre-activation of exactly zero
//! switches its unit off. Under Gaussian weights this is a probability-zero
//! event, and no subgradient selection is attempted there.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Matrix, Rng, Vector};

const LAYER_STREAM: u64 = 0x1a7e;

/// How layer variances are chosen when regenerating weights from a seed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceRule {
    /// Entries of layer `i` are `N(0, 1/n_i)`.
    #[default]
    OneOverRows,
}

/// Serialized form of a random network: weights are regenerated from the seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `[k, n_1, …, n_d]`
    pub dims: Vec<usize>,
    pub seed: u64,
    #[serde(default)]
    pub variance_rule: VarianceRule,
}

impl NetworkSpec {
    pub fn build(&self) -> Result<GeneratorNetwork> {
        GeneratorNetwork::random(&self.dims, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct GeneratorNetwork {
    weights: Vec<Matrix>,
}

/// Strict-positivity masks of every layer for one input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivationPattern {
    masks: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn masks(&self) -> &[Vec<bool>] {
        &self.masks
    }

    pub fn layer(&self, i: usize) -> &[bool] {
        &self.masks[i]
    }

    pub fn active_count(&self, i: usize) -> usize {
        self.masks[i].iter().filter(|&&b| b).count()
    }
}

impl GeneratorNetwork {
    pub fn new(weights: Vec<Matrix>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("generator needs at least one layer"));
        }
        for (i, pair) in weights.windows(2).enumerate() {
            if pair[1].cols() != pair[0].rows() {
                return Err(Error::invalid(format!(
                    "layer {} has {} columns but layer {} has {} rows",
                    i + 2,
                    pair[1].cols(),
                    i + 1,
                    pair[0].rows()
                )));
            }
        }
        Ok(GeneratorNetwork { weights })
    }

    /// Random network with `dims = [k, n_1, …, n_d]` and layer `i` drawn from
    /// `N(0, 1/n_i)`. Each layer uses its own substream of `seed`.
    pub fn random(dims: &[usize], seed: u64) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid("dims must list the input and at least one layer"));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::invalid(format!("all dims must be positive, got {dims:?}")));
        }
        let weights = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut rng = Rng::substream(seed, &[LAYER_STREAM, i as u64]);
                gaussian_matrix(w[1], w[0], 1.0 / w[1] as f64, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights)
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].rows()
    }

    /// `[k, n_1, …, n_d]`
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.weights.iter().map(Matrix::rows))
            .collect()
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    fn check_input(&self, x: &Vector) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::invalid(format!(
                "generator input has dimension {}, expected {}",
                x.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// `G(x)` together with the activation masks of every layer.
    pub fn forward(&self, x: &Vector) -> Result<(Vector, ActivationPattern)> {
        self.check_input(x)?;
        let mut pass = ForwardPass::new(self);
        pass.run(self, x.as_slice());
        let masks = pass.masks.clone();
        Ok((Vector::from_raw(pass.output().to_vec()), ActivationPattern { masks }))
    }

    /// `Λ_x = W_{d,+,x} ⋯ W_{1,+,x}`, the Jacobian of `G` on the linear piece
    /// containing `x`. Formed explicitly; intended for diagnostics.
    pub fn active_product(&self, x: &Vector) -> Result<Matrix> {
        self.check_input(x)?;
        if x.is_zero() {
            return Err(Error::invalid("active_product is undefined at x = 0"));
        }
        let (_, pattern) = self.forward(x)?;
        let mut product: Option<Matrix> = None;
        for (w, mask) in self.weights.iter().zip(&pattern.masks) {
            let masked = mask_rows(w, mask);
            product = Some(match product {
                None => masked,
                Some(p) => masked.matmul(&p)?,
            });
        }
        Ok(product.expect("network has at least one layer"))
    }
}

fn mask_rows(w: &Matrix, mask: &[bool]) -> Matrix {
    let mut out = w.clone();
    for (j, &on) in mask.iter().enumerate() {
        if !on {
            for c in 0..w.cols() {
                out.set(j, c, 0.0);
            }
        }
    }
    out
}

/// `W_{+,x}`: `w` with row `j` zeroed unless `preactivation[j] > 0`.
pub fn masked_weights(w: &Matrix, preactivation: &Vector) -> Result<Matrix> {
    if w.rows() != preactivation.dim() {
        return Err(Error::invalid(format!(
            "masked_weights: matrix has {} rows, preactivation has dimension {}",
            w.rows(),
            preactivation.dim()
        )));
    }
    let mask: Vec<bool> = preactivation.iter().map(|&v| v > 0.0).collect();
    Ok(mask_rows(w, &mask))
}

/// Reusable buffers for forward and backward passes through a fixed network.
#[derive(Clone, Debug)]
pub(crate) struct ForwardPass {
    /// Post-activation output of each layer.
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
}

impl ForwardPass {
    pub(crate) fn new(net: &GeneratorNetwork) -> Self {
        ForwardPass {
            activations: net.weights.iter().map(|w| vec![0.0; w.rows()]).collect(),
            masks: net.weights.iter().map(|w| vec![false; w.rows()]).collect(),
        }
    }

    pub(crate) fn run(&mut self, net: &GeneratorNetwork, x: &[f64]) {
        for (i, w) in net.weights.iter().enumerate() {
            let (done, rest) = self.activations.split_at_mut(i);
            let input = if i == 0 { x } else { &done[i - 1] };
            let out = &mut rest[0];
            w.matvec_into(input, out);
            for (v, m) in out.iter_mut().zip(self.masks[i].iter_mut()) {
                *m = *v > 0.0;
                if !*m {
                    *v = 0.0;
                }
            }
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        self.activations.last().expect("at least one layer")
    }

    /// `out = Λ_xᵀ u` for the pattern of the last `run`; `u` is overwritten.
    pub(crate) fn backward(&self, net: &GeneratorNetwork, u: &mut Vec<f64>, out: &mut [f64]) {
        let mut buf = Vec::new();
        for (i, w) in net.weights.iter().enumerate().rev() {
            for (v, &m) in u.iter_mut().zip(&self.masks[i]) {
                if !m {
                    *v = 0.0;
                }
            }
            if i == 0 {
                w.matvec_t_into(u, out);
            } else {
                buf.resize(w.cols(), 0.0);
                w.matvec_t_into(u, &mut buf);
                std::mem::swap(u, &mut buf);
            }
        }
    }
}

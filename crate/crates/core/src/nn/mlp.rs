use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Matrix, Scaling};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    /// Linear while training, clipped to `[0, 1]` at inference.
    ClampedUnit,
}

/// Fully connected ReLU network.
///
/// Parameters are stored flat: for each layer the `out x in` weight matrix in
/// row-major order followed by the `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    output_activation: OutputActivation,
    params: Vec<f64>,
    scaling: Scaling,
}

/// Per-layer activations kept for backpropagation.
pub(crate) struct Trace {
    /// `acts[0]` is the input, `acts[l + 1]` the post-activation output of layer `l`.
    pub acts: Vec<Vec<f64>>,
}

impl MlpModel {
    /// He-normal weights, zero biases.
    pub fn init(layer_sizes: &[usize], output_activation: OutputActivation, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = rng_from_seed(seed);
        let mut params = Vec::with_capacity(Self::count_params(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            params.extend((0..out * fan_in).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, out));
        }
        Ok(MlpModel {
            layer_sizes: layer_sizes.to_vec(),
            output_activation,
            params,
            scaling: Scaling::identity(layer_sizes[0], layer_sizes[layer_sizes.len() - 1]),
        })
    }

    pub fn from_parts(
        layer_sizes: Vec<usize>,
        output_activation: OutputActivation,
        params: Vec<f64>,
        scaling: Scaling,
    ) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::invalid(format!("invalid layer sizes {layer_sizes:?}")));
        }
        if params.len() != Self::count_params(&layer_sizes) {
            return Err(Error::Shape(format!(
                "{} parameters for architecture {layer_sizes:?}, expected {}",
                params.len(),
                Self::count_params(&layer_sizes)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("non-finite parameter"));
        }
        let model = MlpModel { layer_sizes, output_activation, params, scaling };
        model.check_scaling(&model.scaling)?;
        Ok(model)
    }

    fn count_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        self.layer_sizes[self.layer_sizes.len() - 1]
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output_activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    fn check_scaling(&self, scaling: &Scaling) -> Result<()> {
        if scaling.features.len() != self.n_inputs() || scaling.targets.len() != self.n_outputs() {
            return Err(Error::Shape(format!(
                "scaling for {}→{} columns does not fit a {}→{} network",
                scaling.features.len(),
                scaling.targets.len(),
                self.n_inputs(),
                self.n_outputs()
            )));
        }
        Ok(())
    }

    /// Attaches the normalization used to prepare training data.
    pub fn with_scaling(mut self, scaling: Scaling) -> Result<Self> {
        self.check_scaling(&scaling)?;
        self.scaling = scaling;
        Ok(self)
    }

    /// `(weights, biases)` of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.offset(l);
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let w = &self.params[off..off + n_in * n_out];
        (w, &self.params[off + n_in * n_out..off + (n_in + 1) * n_out])
    }

    pub(crate) fn offset(&self, l: usize) -> usize {
        Self::count_params(&self.layer_sizes[..=l])
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// SHA-256 of the little-endian parameter bytes.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Trace {
        let mut acts = Vec::with_capacity(self.layer_sizes.len());
        acts.push(x.to_vec());
        let last = self.n_layers() - 1;
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let input = &acts[l];
            let n_in = input.len();
            let out: Vec<f64> = b
                .iter()
                .enumerate()
                .map(|(o, &bias)| {
                    let z = w[o * n_in..(o + 1) * n_in].iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + bias;
                    if l == last { z } else { z.max(0.0) }
                })
                .collect();
            acts.push(out);
        }
        Trace { acts }
    }

    /// Hidden units that output zero for every row of `x`, per hidden layer.
    pub fn dead_units(&self, x: &Matrix) -> Vec<usize> {
        let hidden = self.n_layers() - 1;
        let mut alive: Vec<Vec<bool>> = self.layer_sizes[1..=hidden].iter().map(|&n| vec![false; n]).collect();
        for row in x.iter_rows() {
            let trace = self.trace(row);
            for (l, flags) in alive.iter_mut().enumerate() {
                for (f, a) in flags.iter_mut().zip(&trace.acts[l + 1]) {
                    *f |= *a > 0.0;
                }
            }
        }
        alive.iter().map(|f| f.iter().filter(|a| !**a).count()).collect()
    }

    /// Output on the normalized scale as used during training (no clipping).
    pub fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).acts.pop().expect("at least one layer")
    }

    /// Output on the normalized scale with the output activation applied.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Shape(format!("{} features for a {}-input network", x.len(), self.n_inputs())));
        }
        let mut y = self.forward_raw(x);
        if self.output_activation == OutputActivation::ClampedUnit {
            y.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        }
        Ok(y)
    }

    /// Normalized-scale outputs for every row.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::empty(self.n_outputs());
        for row in x.iter_rows() {
            out.push_row(&self.forward(row)?)?;
        }
        Ok(out)
    }

    /// Physical-scale predictions from physical-scale features, through the attached scaling.
    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        let z = self.scaling.scale_features(features)?;
        self.scaling.unscale_targets(&self.forward_batch(&z)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_shapes_chain() {
        let m = MlpModel::init(&[1, 8, 8, 2, 1], OutputActivation::Linear, 0).unwrap();
        let shapes: Vec<(usize, usize)> = (0..m.n_layers()).map(|l| (m.layer(l).0.len(), m.layer(l).1.len())).collect();
        assert_eq!(shapes, vec![(8, 8), (64, 8), (16, 2), (2, 1)]);
        assert_eq!(m.params().len(), 16 + 72 + 18 + 3);
    }

    #[test]
    fn identity_and_zero_networks() {
        let zero = MlpModel::from_parts(vec![3, 2], OutputActivation::Linear, vec![0.0; 8], Scaling::identity(3, 2)).unwrap();
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let id = MlpModel::from_parts(
            vec![2, 2],
            OutputActivation::Linear,
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
            Scaling::identity(2, 2),
        )
        .unwrap();
        assert_eq!(id.forward(&[-0.5, 7.0]).unwrap(), vec![-0.5, 7.0]);
    }

    #[test]
    fn clamped_unit_clips_only_at_inference() {
        let m = MlpModel::from_parts(vec![1, 1], OutputActivation::ClampedUnit, vec![2.0, 0.0], Scaling::identity(1, 1)).unwrap();
        assert_eq!(m.forward(&[3.0]).unwrap(), vec![1.0]);
        assert_eq!(m.forward(&[-3.0]).unwrap(), vec![0.0]);
        assert_eq!(m.forward_raw(&[3.0]), vec![6.0]);
    }

    #[test]
    fn dead_units_are_counted_per_layer() {
        // Second hidden unit has a negative weight on a positive-only input.
        let m = MlpModel::from_parts(
            vec![1, 2, 1],
            OutputActivation::Linear,
            vec![1.0, -1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            Scaling::identity(1, 1),
        )
        .unwrap();
        let x = Matrix::new(3, 1, vec![0.5, 1.0, 2.0]).unwrap();
        assert_eq!(m.dead_units(&x), vec![1]);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MlpModel::init(&[3], OutputActivation::Linear, 0).is_err());
        assert!(MlpModel::init(&[3, 0, 1], OutputActivation::Linear, 0).is_err());
        assert!(MlpModel::from_parts(vec![2, 1], OutputActivation::Linear, vec![0.0; 2], Scaling::identity(2, 1)).is_err());
        let m = MlpModel::init(&[2, 1], OutputActivation::Linear, 0).unwrap();
        assert!(m.forward(&[1.0]).is_err());
        assert!(m.with_scaling(Scaling::identity(3, 1)).is_err());
    }
}

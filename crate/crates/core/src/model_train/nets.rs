//! Per-vertex multilayer perceptrons with tanh activations, applied in a
//! Siamese fashion: one registration of the parameters per tape, reused for
//! every shape in the pair.

use crate::autodiff::{Tape, Var};
use crate::scalar::Real;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Dense layer: weight (out × in) and bias (1 × out).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Array2<T>,
    pub b: Array2<T>,
}

/// Plain MLP; tanh between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Dense<T>>,
}

impl<T: Real> Mlp<T> {
    /// Xavier-uniform initialization over the given widths
    /// (first entry = input width).
    pub fn new(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_fn((fan_out, fan_in), |_| {
                T::of((rng.random::<f64>() * 2.0 - 1.0) * bound)
            });
            let b = Array2::zeros((1, fan_out));
            layers.push(Dense { w, b });
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.nrows()
    }

    /// Registers all parameters on a tape, in layer order (w then b).
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        let mut vars = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            vars.push(tape.param(layer.w.clone()));
            vars.push(tape.param(layer.b.clone()));
        }
        vars
    }

    /// Applies the MLP through the tape using previously registered params.
    pub fn apply(&self, tape: &mut Tape<T>, vars: &[Var], mut x: Var) -> Var {
        debug_assert_eq!(vars.len(), self.layers.len() * 2);
        for (li, _) in self.layers.iter().enumerate() {
            let w = vars[2 * li];
            let b = vars[2 * li + 1];
            let wt = tape.transpose(w);
            let z = tape.matmul(x, wt);
            let pre = tape.add_row(z, b);
            x = if li + 1 < self.layers.len() { tape.tanh(pre) } else { pre };
        }
        x
    }

    /// Tape-free forward pass for inference.
    pub fn forward_plain(&self, input: &Array2<T>) -> Array2<T> {
        let mut x = input.clone();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = x.dot(&layer.w.t());
            for mut row in z.rows_mut() {
                for (v, b) in row.iter_mut().zip(layer.b.row(0)) {
                    *v += *b;
                }
            }
            x = if li + 1 < self.layers.len() { z.mapv(|v| v.tanh()) } else { z };
        }
        x
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// The Siamese pair of networks: feature extractor and universe classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Nets<T> {
    pub feature: Mlp<T>,
    pub classifier: Mlp<T>,
}

impl<T: Real> Nets<T> {
    pub fn new(input_dim: usize, d: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut feature_widths = vec![input_dim];
        feature_widths.extend_from_slice(&super::FEATURE_WIDTHS);
        let feature = Mlp::new(&feature_widths, rng);
        let classifier_widths = if super::CLASSIFIER_HIDDEN == 0 {
            vec![feature.output_dim(), d]
        } else {
            vec![feature.output_dim(), super::CLASSIFIER_HIDDEN, d]
        };
        let mut classifier = Mlp::new(&classifier_widths, rng);
        // probe hook, removed after calibration
        if let Ok(scale) = std::env::var("UNIMATCH_CLS_INIT_SCALE") {
            let f: f64 = scale.parse().unwrap_or(1.0);
            if let Some(last) = classifier.layers.last_mut() {
                last.w.mapv_inplace(|x| x * T::of(f));
            }
        }
        Self { feature, classifier }
    }

    pub fn universe_size(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Every parameter tensor in a stable order (feature layers, then
    /// classifier layers; weight before bias).
    pub fn params(&self) -> Vec<&Array2<T>> {
        self.feature
            .layers
            .iter()
            .chain(self.classifier.layers.iter())
            .flat_map(|l| [&l.w, &l.b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<T>> {
        self.feature
            .layers
            .iter_mut()
            .chain(self.classifier.layers.iter_mut())
            .flat_map(|l| [&mut l.w, &mut l.b])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.feature.param_count() + self.classifier.param_count()
    }
}

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, Dense, Layer, MaxPool2, Relu, KERNEL};
use super::{NnError, Scalar, Tensor};
use crate::rng;
use crate::vectorize::Variant;

/// Architecture of one of the three networks:
/// `conv3x3(C->c1) relu pool2 -> conv3x3(c1->c2) relu pool2 -> flatten -> dense(hidden) relu -> dense(classes)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_channels: usize,
    pub side: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl ModelSpec {
    /// The raw network gets a wider first convolution to make up for its
    /// single input channel.
    pub fn for_variant(variant: Variant) -> Self {
        let conv1 = if variant == Variant::Raw { 20 } else { 16 };
        Self { variant, input_channels: variant.channels(), side: 28, conv1, conv2: 32, hidden: 64, classes: 10 }
    }

    fn flat_features(&self) -> usize {
        let after1 = (self.side - (KERNEL - 1)) / 2;
        let after2 = (after1 - (KERNEL - 1)) / 2;
        self.conv2 * after2 * after2
    }

    pub fn param_count(&self) -> usize {
        let k = KERNEL * KERNEL;
        let conv1 = self.conv1 * (self.input_channels * k + 1);
        let conv2 = self.conv2 * (self.conv1 * k + 1);
        let dense1 = self.hidden * (self.flat_features() + 1);
        let dense2 = self.classes * (self.hidden + 1);
        conv1 + conv2 + dense1 + dense2
    }

    /// Human-readable layer list.
    pub fn describe(&self) -> String {
        format!(
            "conv3x3({}->{}) relu maxpool2 | conv3x3({}->{}) relu maxpool2 | flatten({}) dense({}) relu | dense({})",
            self.input_channels, self.conv1, self.conv1, self.conv2, self.flat_features(), self.hidden, self.classes
        )
    }
}

/// A sequential network together with its spec.
#[derive(Debug, Clone)]
pub struct Model<T> {
    pub spec: ModelSpec,
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Model<T> {
    /// Uninitialized (all-zero) parameters.
    pub fn zeros(spec: ModelSpec) -> Self {
        let layers = vec![
            Layer::Conv(Conv2d::new(spec.input_channels, spec.conv1)),
            Layer::Relu(Relu::default()),
            Layer::Pool(MaxPool2::default()),
            Layer::Conv(Conv2d::new(spec.conv1, spec.conv2)),
            Layer::Relu(Relu::default()),
            Layer::Pool(MaxPool2::default()),
            Layer::Dense(Dense::new(spec.flat_features(), spec.hidden)),
            Layer::Relu(Relu::default()),
            Layer::Dense(Dense::new(spec.hidden, spec.classes)),
        ];
        Self { spec, layers }
    }

    /// Kaiming-uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases, one random stream per layer.
    pub fn initialize(&mut self, seed: u64) {
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let fan_in = match layer {
                Layer::Conv(c) => c.in_channels * KERNEL * KERNEL,
                Layer::Dense(d) => d.inputs,
                _ => continue,
            };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut rng = rng::stream(seed, "init", &[idx as u64]);
            for (params, _) in layer.parameters_mut() {
                for p in params.iter_mut() {
                    *p = T::from_f64(rng.gen_range(-bound..bound));
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().flat_map(|l| l.parameters()).map(|p| p.len()).sum()
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>, NnError> {
        if x.shape.len() != 4 || x.shape[1] != self.spec.input_channels {
            return Err(NnError::VariantMismatch { expected: self.spec.input_channels, found: x.shape.get(1).copied().unwrap_or(0) });
        }
        let mut h = self.layers[0].forward(x, train)?;
        for layer in &mut self.layers[1..] {
            h = layer.forward(&h, train)?;
        }
        Ok(h)
    }

    /// Backpropagate the gradient of the loss w.r.t. the logits, accumulating
    /// parameter gradients. The input gradient is not computed.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) {
        let mut grad = grad_logits.clone();
        let last = self.layers.len();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            match layer.backward(&grad, i > 0) {
                Some(g) => grad = g,
                None => debug_assert!(i == 0 || i == last),
            }
        }
    }

    /// Backward pass that also returns the gradient w.r.t. the input.
    pub fn backward_to_input(&mut self, grad_logits: &Tensor<T>) -> Tensor<T> {
        let mut grad = grad_logits.clone();
        for layer in self.layers.iter_mut().rev() {
            grad = layer.backward(&grad, true).expect("input gradient requested");
        }
        grad
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn parameters_mut(&mut self) -> Vec<(&mut [T], &mut [T])> {
        self.layers.iter_mut().flat_map(|l| l.parameters_mut()).collect()
    }

    pub fn parameters(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| l.parameters()).collect()
    }

    /// Argmax class per sample.
    pub fn predict(&mut self, x: &Tensor<T>) -> Result<Vec<usize>, NnError> {
        let logits = self.forward(x, false)?;
        let k = logits.shape[1];
        Ok(logits
            .data
            .chunks_exact(k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }
}

/// The network for `variant` with seeded initial parameters.
pub fn build_model(variant: Variant, seed: u64) -> Model<f32> {
    let mut model = Model::zeros(ModelSpec::for_variant(variant));
    model.initialize(seed);
    model
}

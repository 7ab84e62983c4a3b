use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::softmax_cross_entropy;
use super::model::Model;
use super::optim::{Adam, AdamConfig};
use super::{NnError, Tensor};
use crate::rng;
use crate::vectorize::ModelInput;

/// Samples evaluated per forward pass in [`evaluate`].
const EVAL_CHUNK: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, batch_size: 32, optimizer: AdamConfig::default(), seed: 0 }
    }
}

/// A labelled set of network inputs stored contiguously as `N x C x H x W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub channels: usize,
    pub side: usize,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
}

/// One mini-batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Tensor<f32>,
    pub labels: Vec<usize>,
}

impl LabeledInput {
    pub fn empty(channels: usize, side: usize) -> Self {
        Self { channels, side, data: Vec::new(), labels: Vec::new() }
    }

    pub fn from_inputs(inputs: &[ModelInput], labels: &[usize]) -> Result<Self, NnError> {
        if inputs.len() != labels.len() {
            return Err(NnError::ShapeMismatch { expected: vec![inputs.len()], found: vec![labels.len()] });
        }
        let Some(first) = inputs.first() else {
            return Ok(Self::empty(0, 0));
        };
        let mut set = Self::empty(first.channels(), first.height);
        for (input, &label) in inputs.iter().zip(labels) {
            set.push(input, label)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, input: &ModelInput, label: usize) -> Result<(), NnError> {
        let shape = [input.channels(), input.height, input.width];
        if shape != [self.channels, self.side, self.side] {
            return Err(NnError::ShapeMismatch { expected: vec![self.channels, self.side, self.side], found: shape.to_vec() });
        }
        self.data.extend_from_slice(&input.data);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn sample_len(&self) -> usize {
        self.channels * self.side * self.side
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&self.data[i * n..(i + 1) * n]);
        }
        Batch {
            x: Tensor { shape: vec![indices.len(), self.channels, self.side, self.side], data },
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// What happened during [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Test accuracy after each epoch (empty entries never occur; without a
    /// test set the training accuracy is logged instead).
    pub epoch_accuracies: Vec<f64>,
    /// Mean training loss per epoch.
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first mini-batch, before any update.
    pub first_batch_loss: f64,
}

fn check_channels(model: &Model<f32>, set: &LabeledInput) -> Result<(), NnError> {
    if !set.is_empty() && set.channels != model.spec.input_channels {
        return Err(NnError::VariantMismatch { expected: model.spec.input_channels, found: set.channels });
    }
    Ok(())
}

/// Train with seeded shuffled mini-batches and Adam, evaluating on `test`
/// (or on the training set when `test` is `None`) after every epoch.
pub fn train(model: &mut Model<f32>, train_set: &LabeledInput, test: Option<&LabeledInput>, config: &TrainConfig) -> Result<TrainLog, NnError> {
    check_channels(model, train_set)?;
    if let Some(t) = test {
        check_channels(model, t)?;
    }
    if train_set.is_empty() {
        return Err(NnError::EmptySet);
    }
    let batch_size = config.batch_size.max(1);
    let shapes: Vec<usize> = model.parameters().iter().map(|p| p.len()).collect();
    let mut adam = Adam::<f32>::new(config.optimizer, shapes);
    let mut log = TrainLog { epoch_accuracies: Vec::new(), epoch_losses: Vec::new(), first_batch_loss: f64::NAN };
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut shuffle = rng::stream(config.seed, "shuffle", &[epoch as u64]);
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch = train_set.batch(chunk);
            let logits = model.forward(&batch.x, true)?;
            let (loss, _, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
            if log.first_batch_loss.is_nan() {
                log.first_batch_loss = loss;
            }
            total += loss * chunk.len() as f64;
            model.zero_grad();
            model.backward(&grad);
            adam.update(model.parameters_mut());
        }
        log.epoch_losses.push(total / train_set.len() as f64);
        log.epoch_accuracies.push(evaluate(model, test.unwrap_or(train_set))?);
    }
    Ok(log)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(model: &mut Model<f32>, set: &LabeledInput) -> Result<f64, NnError> {
    if set.is_empty() {
        return Err(NnError::EmptySet);
    }
    check_channels(model, set)?;
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let batch = set.batch(chunk);
        let predicted = model.predict(&batch.x)?;
        correct += predicted.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    }
    Ok(correct as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::build_model;
    use crate::vectorize::Variant;
    use rand::Rng;

    fn random_set(n: usize, channels: usize, seed: u64) -> LabeledInput {
        let mut rng = rng::stream(seed, "test-set", &[]);
        LabeledInput {
            channels,
            side: 28,
            data: (0..n * channels * 784).map(|_| rng.gen::<f32>()).collect(),
            labels: (0..n).map(|i| i % 10).collect(),
        }
    }

    #[test]
    fn empty_evaluation_set() {
        let mut m = build_model(Variant::Raw, 0);
        assert_eq!(evaluate(&mut m, &LabeledInput::empty(1, 28)), Err(NnError::EmptySet));
    }

    #[test]
    fn constant_predictor_scores_a_tenth() {
        let mut m = build_model(Variant::Raw, 0);
        // zero the last layer and bias class 3
        if let Some(crate::nn::Layer::Dense(d)) = m.layers.last_mut() {
            d.weight.iter_mut().for_each(|w| *w = 0.0);
            d.bias.iter_mut().for_each(|b| *b = 0.0);
            d.bias[3] = 1.0;
        }
        let set = random_set(100, 1, 4);
        assert_eq!(evaluate(&mut m, &set).unwrap(), 0.1);
    }

    #[test]
    fn rejects_wrong_variant() {
        let mut m = build_model(Variant::Stitched, 0);
        let set = random_set(4, 1, 1);
        let err = train(&mut m, &set, None, &TrainConfig::default()).unwrap_err();
        assert_eq!(err, NnError::VariantMismatch { expected: 35, found: 1 });
    }

    #[test]
    fn log_length_and_initial_loss() {
        let mut m = build_model(Variant::Raw, 3);
        let set = random_set(20, 1, 2);
        let cfg = TrainConfig { epochs: 3, batch_size: 10, ..TrainConfig::default() };
        let log = train(&mut m, &set, Some(&set), &cfg).unwrap();
        assert_eq!(log.epoch_accuracies.len(), 3);
        assert_eq!(log.epoch_losses.len(), 3);
        assert!((log.first_batch_loss - 10f64.ln()).abs() < 0.15, "{}", log.first_batch_loss);
    }
}

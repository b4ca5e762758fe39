//! One-hidden-layer perceptron: standardized inputs, ReLU hidden units,
//! softmax output, trained with Adam on mini-batch cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{argmax, check_input, ClassifierError, LabeledMatrix};
use crate::rng::stream_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Reshuffle rows every epoch. Off gives fixed batches.
    pub shuffle: bool,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 15,
            epochs: 200,
            batch: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            shuffle: true,
        }
    }
}

/// Weights are row-major: `w1[i * hidden + j]` connects input `i` to hidden
/// unit `j`, `w2[j * n_classes + k]` hidden unit `j` to output `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub n_inputs: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// Training-set feature means and standard deviations (zero-variance
    /// features store 1).
    pub norm_mean: Vec<f64>,
    pub norm_std: Vec<f64>,
    pub class_names: Vec<String>,
    pub seed: u64,
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    fn zeros_like(m: &MlpModel) -> Self {
        Self {
            w1: vec![0.0; m.w1.len()],
            b1: vec![0.0; m.b1.len()],
            w2: vec![0.0; m.w2.len()],
            b2: vec![0.0; m.b2.len()],
        }
    }

    fn parts(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }
}

struct Activations {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_norm: f64,
    logits: Vec<f64>,
}

impl MlpModel {
    /// All-zero network with identity normalization.
    pub fn zeros(n_inputs: usize, hidden: usize, class_names: Vec<String>) -> Self {
        let c = class_names.len();
        Self {
            n_inputs,
            hidden,
            w1: vec![0.0; n_inputs * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * c],
            b2: vec![0.0; c],
            norm_mean: vec![0.0; n_inputs],
            norm_std: vec![1.0; n_inputs],
            class_names,
            seed: 0,
            loss_history: Vec::new(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.norm_mean.iter().zip(&self.norm_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn forward(&self, z: &[f64]) -> Activations {
        let (h, c) = (self.hidden, self.n_classes());
        let mut hidden = self.b1.clone();
        for (i, &zi) in z.iter().enumerate() {
            let row = &self.w1[i * h..(i + 1) * h];
            for (a, w) in hidden.iter_mut().zip(row) {
                *a += zi * w;
            }
        }
        hidden.iter_mut().for_each(|a| *a = a.max(0.0));

        let mut logits = self.b2.clone();
        for (j, &hj) in hidden.iter().enumerate() {
            if hj == 0.0 {
                continue;
            }
            let row = &self.w2[j * c..(j + 1) * c];
            for (o, w) in logits.iter_mut().zip(row) {
                *o += hj * w;
            }
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logits.iter().map(|o| (o - max).exp()).sum();
        let log_norm = max + sum.ln();
        let probs = logits.iter().map(|o| (o - log_norm).exp()).collect();
        Activations {
            hidden,
            probs,
            log_norm,
            logits,
        }
    }

    /// Softmax probabilities for a raw (unstandardized) input; the class is
    /// the argmax with lowest-index tie-break.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
        check_input(x, self.n_inputs)?;
        let act = self.forward(&self.standardize(x));
        Ok((argmax(&act.probs), act.probs))
    }

    /// Mean cross-entropy over a batch of already standardized rows.
    pub fn batch_loss(&self, inputs: &[f64], labels: &[usize]) -> f64 {
        let n = self.n_inputs;
        labels
            .iter()
            .enumerate()
            .map(|(r, &y)| {
                let act = self.forward(&inputs[r * n..(r + 1) * n]);
                act.log_norm - act.logits[y]
            })
            .sum::<f64>()
            / labels.len() as f64
    }

    /// Mean cross-entropy and its exact gradient for a batch of already
    /// standardized rows (`inputs` is row-major, one row per label).
    pub fn batch_loss_and_gradients(&self, inputs: &[f64], labels: &[usize]) -> (f64, Gradients) {
        let (n, h, c) = (self.n_inputs, self.hidden, self.n_classes());
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        let mut d_hidden = vec![0.0; h];
        let scale = 1.0 / labels.len() as f64;

        for (r, &y) in labels.iter().enumerate() {
            let z = &inputs[r * n..(r + 1) * n];
            let act = self.forward(z);
            loss += act.log_norm - act.logits[y];

            let mut d_out = act.probs;
            d_out[y] -= 1.0;
            d_out.iter_mut().for_each(|d| *d *= scale);

            for (gb, d) in grads.b2.iter_mut().zip(&d_out) {
                *gb += d;
            }
            for j in 0..h {
                let hj = act.hidden[j];
                let row = &self.w2[j * c..(j + 1) * c];
                let grow = &mut grads.w2[j * c..(j + 1) * c];
                let mut back = 0.0;
                for k in 0..c {
                    grow[k] += hj * d_out[k];
                    back += row[k] * d_out[k];
                }
                d_hidden[j] = if hj > 0.0 { back } else { 0.0 };
            }
            for (gb, d) in grads.b1.iter_mut().zip(&d_hidden) {
                *gb += d;
            }
            for (i, &zi) in z.iter().enumerate() {
                let grow = &mut grads.w1[i * h..(i + 1) * h];
                for (g, d) in grow.iter_mut().zip(&d_hidden) {
                    *g += zi * d;
                }
            }
        }
        (loss * scale, grads)
    }

    fn params_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        let shapes = [
            model.w1.len(),
            model.b1.len(),
            model.w2.len(),
            model.b2.len(),
        ];
        Self {
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &Gradients, cfg: &MlpConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for ((params, g), (m, v)) in model
            .params_mut()
            .into_iter()
            .zip(grads.parts())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..params.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                params[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

pub fn train_mlp(
    data: &LabeledMatrix,
    config: &MlpConfig,
    seed: u64,
) -> Result<MlpModel, ClassifierError> {
    let (rows, n) = (data.n_rows(), data.n_cols());
    if rows == 0 {
        return Err(ClassifierError::EmptyDataset);
    }
    if config.hidden == 0 || config.batch == 0 {
        return Err(ClassifierError::InvalidConfig(
            "hidden and batch must be at least 1".into(),
        ));
    }

    let mut model = MlpModel::zeros(n, config.hidden, data.class_names().to_vec());
    model.seed = seed;
    for j in 0..n {
        let mean = (0..rows).map(|r| data.value(r, j)).sum::<f64>() / rows as f64;
        let var = (0..rows)
            .map(|r| (data.value(r, j) - mean).powi(2))
            .sum::<f64>()
            / rows as f64;
        model.norm_mean[j] = mean;
        model.norm_std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }

    let mut init_rng = stream_rng(seed, 0);
    let a1 = (6.0 / n.max(1) as f64).sqrt();
    model
        .w1
        .iter_mut()
        .for_each(|w| *w = init_rng.random_range(-a1..a1));
    let a2 = (6.0 / config.hidden as f64).sqrt();
    model
        .w2
        .iter_mut()
        .for_each(|w| *w = init_rng.random_range(-a2..a2));

    let standardized: Vec<f64> = (0..rows)
        .flat_map(|r| model.standardize(data.row(r)))
        .collect();
    let mut order: Vec<usize> = (0..rows).collect();
    let mut shuffle_rng = stream_rng(seed, 1);
    let mut adam = Adam::new(&model);
    let mut batch_x = Vec::with_capacity(config.batch * n);
    let mut batch_y = Vec::with_capacity(config.batch);

    for epoch in 0..config.epochs {
        if config.shuffle {
            order.shuffle(&mut shuffle_rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch) {
            batch_x.clear();
            batch_y.clear();
            for &r in chunk {
                batch_x.extend_from_slice(&standardized[r * n..(r + 1) * n]);
                batch_y.push(data.label(r));
            }
            let (loss, grads) = model.batch_loss_and_gradients(&batch_x, &batch_y);
            if !loss.is_finite() {
                return Err(ClassifierError::DivergedLoss { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut model, &grads, config);
        }
        model.loss_history.push(epoch_loss / rows as f64);
    }
    if [&model.w1, &model.b1, &model.w2, &model.b2]
        .iter()
        .any(|p| p.iter().any(|v| !v.is_finite()))
    {
        return Err(ClassifierError::DivergedLoss {
            epoch: config.epochs,
        });
    }
    Ok(model)
}

pub fn predict_mlp(model: &MlpModel, x: &[f64]) -> Result<(usize, Vec<f64>), ClassifierError> {
    model.predict(x)
}

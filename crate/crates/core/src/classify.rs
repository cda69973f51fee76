//! Fully connected classifier: ReLU hidden layers with inverted dropout, a
//! softmax output, categorical cross-entropy, and Adam.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::reduce::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Dense>,
    pub dropout: f64,
}

/// Gradients laid out like the model: per layer `(weights, biases)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

struct Trace {
    /// Input to each layer (post-activation, post-dropout of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Dropout scale per hidden unit (0 or 1/(1−rate)); empty when inactive.
    masks: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers, for the ReLU derivative.
    pre: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl MlpModel {
    /// He-uniform weights (`U(±√(6/fan_in))`) and zero biases, seeded.
    pub fn new(sizes: &[usize], dropout: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(invalid(format!("invalid layer sizes {sizes:?}")));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(invalid(format!("dropout must be in [0,1), got {dropout}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in as f64).sqrt();
                Dense {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect(),
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers, dropout })
    }

    /// Zeroes the output layer so the initial prediction is uniform.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = 0.0);
            last.biases.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn num_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        Ok(())
    }

    /// Class probabilities. Dropout is applied only when `training` is set,
    /// drawing masks from `rng`.
    pub fn forward(&self, x: &[f64], training: bool, rng: &mut impl Rng) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let masks = if training { self.draw_masks(rng) } else { Vec::new() };
        Ok(self.trace(x, &masks).probs)
    }

    /// Inference-mode probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.trace(x, &[]).probs)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    fn draw_masks(&self, rng: &mut impl Rng) -> Vec<Vec<f64>> {
        if self.dropout == 0.0 {
            return Vec::new();
        }
        let keep = 1.0 - self.dropout;
        let scale = 1.0 / keep;
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| (0..l.outputs).map(|_| if rng.gen_bool(keep) { scale } else { 0.0 }).collect())
            .collect()
    }

    fn trace(&self, x: &[f64], masks: &[Vec<f64>]) -> Trace {
        let last = self.layers.len() - 1;
        let mut inputs = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(last);
        let mut probs = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.affine(&inputs[k]);
            if k == last {
                probs = softmax(&z);
            } else {
                let mut a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
                if let Some(m) = masks.get(k) {
                    a.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
                }
                pre.push(z);
                inputs.push(a);
            }
        }
        Trace {
            inputs,
            masks: masks.to_vec(),
            pre,
            probs,
        }
    }

    /// Mean cross-entropy over the batch, inference mode.
    pub fn loss(&self, xs: &[&[f64]], ys: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            let p = self.predict_proba(x)?;
            total -= p[y].ln();
        }
        Ok(total / xs.len() as f64)
    }

    /// Mean cross-entropy and its gradient over a batch. With `rng`, dropout
    /// masks are drawn per sample (training mode); without, dropout is off.
    pub fn loss_and_gradients(
        &self,
        xs: &[&[f64]],
        ys: &[usize],
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Gradients)> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(invalid("batch inputs and labels must be non-empty and equal in length"));
        }
        let c = self.num_classes();
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            if y >= c {
                return Err(invalid(format!("label {y} out of range for {c} classes")));
            }
        }
        // masks drawn sequentially so the stream is independent of threading
        let masks: Vec<Vec<Vec<f64>>> = match rng {
            Some(r) => xs.iter().map(|_| self.draw_masks(r)).collect(),
            None => vec![Vec::new(); xs.len()],
        };
        let traces: Vec<Trace> = xs
            .par_iter()
            .zip(masks.par_iter())
            .map(|(x, m)| self.trace(x, m))
            .collect();

        let bsz = xs.len() as f64;
        let loss = traces.iter().zip(ys).map(|(t, &y)| -t.probs[y].ln()).sum::<f64>() / bsz;

        // output deltas (p − onehot)/B, then propagate per sample
        let nl = self.layers.len();
        let deltas: Vec<Vec<Vec<f64>>> = traces
            .par_iter()
            .zip(ys.par_iter())
            .map(|(t, &y)| {
                let mut per_layer = vec![Vec::new(); nl];
                let mut d: Vec<f64> = t.probs.iter().map(|p| p / bsz).collect();
                d[y] -= 1.0 / bsz;
                for k in (0..nl).rev() {
                    if k > 0 {
                        let layer = &self.layers[k];
                        let mut back = vec![0.0; layer.inputs];
                        for (o, &dv) in d.iter().enumerate() {
                            if dv != 0.0 {
                                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                                back.iter_mut().zip(row).for_each(|(b, w)| *b += w * dv);
                            }
                        }
                        let h = k - 1;
                        for (i, b) in back.iter_mut().enumerate() {
                            let gate = if t.pre[h][i] > 0.0 { 1.0 } else { 0.0 };
                            let scale = t.masks.get(h).map_or(1.0, |m| m[i]);
                            *b *= gate * scale;
                        }
                        per_layer[k] = std::mem::replace(&mut d, back);
                    } else {
                        per_layer[0] = std::mem::take(&mut d);
                    }
                }
                per_layer
            })
            .collect();

        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(k, layer)| {
                let mut gw = vec![0.0; layer.weights.len()];
                gw.par_chunks_mut(layer.inputs).enumerate().for_each(|(o, row)| {
                    for (t, d) in traces.iter().zip(&deltas) {
                        let dv = d[k][o];
                        if dv != 0.0 {
                            row.iter_mut().zip(&t.inputs[k]).for_each(|(g, a)| *g += dv * a);
                        }
                    }
                });
                let gb = (0..layer.outputs).map(|o| deltas.iter().map(|d| d[k][o]).sum()).collect();
                (gw, gb)
            })
            .collect();
        Ok((loss, Gradients { layers }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub learning_rate: f64,
    t: i32,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(model: &MlpModel, learning_rate: f64, cfg: AdamConfig) -> Self {
        let zeros: Vec<(Vec<f64>, Vec<f64>)> = model
            .layers
            .iter()
            .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
            .collect();
        Self {
            cfg,
            learning_rate,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.t += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        let lr = self.learning_rate;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            p.par_iter_mut()
                .zip(g.par_iter())
                .zip(m.par_iter_mut().zip(v.par_iter_mut()))
                .with_min_len(4096)
                .for_each(|((p, &g), (m, v))| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
                });
        };
        for (k, layer) in model.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            update(&mut layer.weights, gw, mw, vw);
            update(&mut layer.biases, gb, mb, vb);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub adam: AdamConfig,
    /// Shuffling and dropout stream. Not part of the file configuration: the
    /// pipeline derives it from its master seed.
    #[serde(skip, default = "default_train_seed")]
    pub seed: u64,
    pub early_stop_patience: usize,
    /// Start from a zero output layer (uniform initial predictions).
    pub zero_output_layer: bool,
}

fn default_train_seed() -> u64 {
    2021
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![1000, 400],
            max_epochs: 100,
            batch_size: 8,
            learning_rate: 1e-4,
            dropout: 0.2,
            adam: AdamConfig::default(),
            seed: default_train_seed(),
            early_stop_patience: 10,
            zero_output_layer: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("train.hidden sizes must be positive".into());
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("train.max_epochs and train.batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("train.learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("train.dropout must be in [0,1), got {}", self.dropout));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.epsilon > 0.0) {
            return bad("adam betas must be in [0,1) and epsilon positive".into());
        }
        if self.early_stop_patience == 0 {
            return bad("train.early_stop_patience must be positive".into());
        }
        Ok(())
    }

    pub fn layer_sizes(&self, inputs: usize, classes: usize) -> Vec<usize> {
        let mut s = vec![inputs];
        s.extend(&self.hidden);
        s.push(classes);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_acc: f64,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    /// Epoch (1-based) whose weights were retained.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Fraction correct and mean cross-entropy in inference mode.
pub fn score(model: &MlpModel, x: &Matrix, y: &[usize]) -> Result<(f64, f64)> {
    let out: Vec<(f64, bool)> = (0..x.rows)
        .into_par_iter()
        .map(|i| {
            let p = model.predict_proba(x.row(i))?;
            Ok((-p[y[i]].ln(), argmax(&p) == y[i]))
        })
        .collect::<Result<_>>()?;
    let n = out.len() as f64;
    let loss = out.iter().map(|o| o.0).sum::<f64>() / n;
    let acc = out.iter().filter(|o| o.1).count() as f64 / n;
    Ok((acc, loss))
}

/// Minibatch Adam. Keeps the weights with the lowest validation loss (training
/// loss when there is no validation set) and stops after `early_stop_patience`
/// epochs without improvement.
pub fn train(
    mut model: MlpModel,
    x: &Matrix,
    y: &[usize],
    val: Option<(&Matrix, &[usize])>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if x.rows == 0 || x.rows != y.len() {
        return Err(invalid("training set must be non-empty with one label per row"));
    }
    if x.cols != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: x.cols,
        });
    }
    let val = val.filter(|(vx, _)| vx.rows > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7472_6169_6e00);
    let mut adam = Adam::new(&model, cfg.learning_rate, cfg.adam);
    let mut order: Vec<usize> = (0..x.rows).collect();
    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| x.row(i)).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| y[i]).collect();
            let (loss, grads) = model.loss_and_gradients(&xs, &ys, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NumericalDivergence { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            adam.step(&mut model, &grads);
            if !model.is_finite() {
                return Err(Error::NumericalDivergence { epoch });
            }
            for (xi, &yi) in xs.iter().zip(&ys) {
                if model.predict(xi)? == yi {
                    correct += 1;
                }
            }
        }
        let train_loss = loss_sum / x.rows as f64;
        let train_acc = correct as f64 / x.rows as f64;
        let (val_acc, val_loss) = match val {
            Some((vx, vy)) => {
                let (a, l) = score(&model, vx, vy)?;
                (Some(a), Some(l))
            }
            None => (None, None),
        };
        let monitored = val_loss.unwrap_or(train_loss);
        if !monitored.is_finite() {
            return Err(Error::NumericalDivergence { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            train_acc,
            val_acc,
        });
        log::debug!("epoch {epoch}: train {train_loss:.4}/{train_acc:.3} val {val_loss:?}/{val_acc:?}");
        if monitored < best.0 {
            best = (monitored, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    Ok(TrainOutcome {
        model: best.1,
        history,
        best_epoch: best.2,
        stopped_early,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub sensitivity: f64,
    pub f_score: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_sensitivity: f64,
    pub macro_f_score: f64,
    pub support: usize,
    /// Classes that occur in the evaluated labels.
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Metrics from label/prediction pairs; classes absent from `truth` are
/// excluded from the per-class list and the macro averages.
pub fn metrics_from_predictions(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    if truth.len() != predicted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    let mut tp = vec![0usize; classes];
    let mut actual = vec![0usize; classes];
    let mut called = vec![0usize; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(invalid(format!("label out of range for {classes} classes")));
        }
        actual[t] += 1;
        called[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let per_class: Vec<ClassMetrics> = (0..classes)
        .filter(|&c| actual[c] > 0)
        .map(|c| {
            let precision = ratio(tp[c], called[c]);
            let sensitivity = ratio(tp[c], actual[c]);
            let f_score = if precision + sensitivity > 0.0 {
                2.0 * precision * sensitivity / (precision + sensitivity)
            } else {
                0.0
            };
            ClassMetrics {
                class: c,
                precision,
                sensitivity,
                f_score,
                support: actual[c],
            }
        })
        .collect();
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k;
    Ok(Metrics {
        accuracy: ratio(tp.iter().sum(), truth.len()),
        macro_precision: mean(|m| m.precision),
        macro_sensitivity: mean(|m| m.sensitivity),
        macro_f_score: mean(|m| m.f_score),
        support: truth.len(),
        per_class,
    })
}

pub fn evaluate(model: &MlpModel, x: &Matrix, y: &[usize]) -> Result<Metrics> {
    if x.rows != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.rows,
            actual: y.len(),
        });
    }
    let predicted: Vec<usize> = (0..x.rows)
        .into_par_iter()
        .map(|i| model.predict(x.row(i)))
        .collect::<Result<_>>()?;
    metrics_from_predictions(y, &predicted, model.num_classes())
}

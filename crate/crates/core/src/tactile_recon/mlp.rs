use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::labels::CalibrationSample;
use super::{Result, TactileError};

/// Largest angle the model will output, just inside ±π/2.
pub const MAX_ANGLE: f64 = std::f64::consts::FRAC_PI_2 - 1e-6;
/// Below this many samples the model is flagged as likely to overfit.
pub const RECOMMENDED_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: [usize; 3],
    pub epochs: usize,
    pub learning_rate: f64,
    /// Minibatch size; `None` trains on the full batch every step.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// Random subset drawn from larger datasets before splitting.
    pub max_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: [32, 32, 32],
            epochs: 80,
            learning_rate: 3e-3,
            batch_size: Some(128),
            seed: crate::DEFAULT_SEED,
            holdout_fraction: 0.1,
            max_samples: Some(8_000),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn xavier(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            inputs,
            outputs,
            weights,
            biases: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.biases))
        {
            *o = b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

/// Gradient-angle regressor: 4 inputs → three tanh hidden layers → 2 angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibModel {
    pub layer_widths: Vec<usize>,
    pub activation: String,
    pub layers: Vec<DenseLayer>,
    pub seed: u64,
    pub input_mean: [f64; 4],
    pub input_std: [f64; 4],
    /// Mean minibatch loss (mean squared angle error, rad²) per epoch.
    pub loss_history: Vec<f64>,
    /// Held-out RMS angle error in radians.
    pub holdout_rmse: Option<f64>,
    pub train_samples: usize,
    pub warnings: Vec<String>,
    /// Frame size the calibration presses were captured at.
    #[serde(default)]
    pub frame_size: Option<[usize; 2]>,
    /// Largest angle magnitude seen in the labels; predictions never exceed it.
    #[serde(default = "default_angle_limit")]
    pub angle_limit: f64,
}

fn default_angle_limit() -> f64 {
    MAX_ANGLE
}

impl CalibModel {
    fn normalise(&self, f: &[f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| (f[i] - self.input_mean[i]) / self.input_std[i])
    }

    /// Predicted `(d_x, d_y)` in radians, clamped to the calibrated range.
    pub fn predict(&self, features: &[f64; 4]) -> [f64; 2] {
        let mut a: Vec<f64> = self.normalise(features).to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = vec![0.0; layer.outputs];
            layer.forward(&a, &mut z);
            if i < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            a = z;
        }
        let lim = self.angle_limit.min(MAX_ANGLE);
        [a[0].clamp(-lim, lim), a[1].clamp(-lim, lim)]
    }

    pub fn rmse(&self, samples: &[CalibrationSample]) -> f64 {
        let se: f64 = samples
            .iter()
            .map(|s| {
                let p = self.predict(&s.features);
                (p[0] - s.labels[0]).powi(2) + (p[1] - s.labels[1]).powi(2)
            })
            .sum();
        (se / (2 * samples.len()).max(1) as f64).sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: CalibModel = serde_json::from_str(text)?;
        let widths_ok = model.layers.len() == 4
            && model.layers.first().is_some_and(|l| l.inputs == 4)
            && model.layers.last().is_some_and(|l| l.outputs == 2)
            && model.layers.windows(2).all(|w| w[0].outputs == w[1].inputs)
            && model
                .layers
                .iter()
                .all(|l| l.weights.len() == l.inputs * l.outputs && l.biases.len() == l.outputs);
        if !widths_ok || model.input_std.iter().any(|s| !(*s > 0.0)) || !(model.angle_limit >= 0.0)
        {
            return Err(TactileError::InvalidInput(
                "model layers do not chain 4 → … → 2".into(),
            ));
        }
        Ok(model)
    }
}

/// Adam moments for one layer.
struct Moments {
    m_w: Vec<f64>,
    v_w: Vec<f64>,
    m_b: Vec<f64>,
    v_b: Vec<f64>,
}

/// Trains the regressor with mean-squared loss and Adam. Everything random
/// (subset, split, shuffles, initial weights) flows from `cfg.seed`.
pub fn fit_calibration(samples: &[CalibrationSample], cfg: &TrainConfig) -> Result<CalibModel> {
    if samples.is_empty() {
        return Err(TactileError::EmptyDataset);
    }
    if cfg.hidden.contains(&0) || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
        return Err(TactileError::InvalidInput(
            "hidden widths, epochs and learning rate must be positive".into(),
        ));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(TactileError::InvalidInput(
            "holdout fraction must lie in [0, 1)".into(),
        ));
    }
    let mut warnings = Vec::new();
    let first = samples[0].labels;
    if samples.iter().all(|s| s.labels == first) {
        warnings.push("degenerate dataset: every label is identical".to_string());
    }
    if samples.len() < RECOMMENDED_SAMPLES {
        warnings.push(format!(
            "only {} samples (fewer than {RECOMMENDED_SAMPLES}); the model is likely to overfit",
            samples.len()
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut rng);
    if let Some(cap) = cfg.max_samples {
        order.truncate(cap.max(1));
    }
    let n_hold = if order.len() >= 10 {
        (order.len() as f64 * cfg.holdout_fraction).round() as usize
    } else {
        0
    };
    let (hold_idx, train_idx) = order.split_at(n_hold);
    let train: Vec<CalibrationSample> = train_idx.iter().map(|&i| samples[i]).collect();
    let holdout: Vec<CalibrationSample> = hold_idx.iter().map(|&i| samples[i]).collect();

    let mut input_mean = [0.0; 4];
    let mut input_std = [0.0; 4];
    let n = train.len() as f64;
    for s in &train {
        for (m, f) in input_mean.iter_mut().zip(s.features) {
            *m += f / n;
        }
    }
    for s in &train {
        for i in 0..4 {
            input_std[i] += (s.features[i] - input_mean[i]).powi(2) / n;
        }
    }
    let input_std = input_std.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });

    let widths = [4, cfg.hidden[0], cfg.hidden[1], cfg.hidden[2], 2];
    let layers: Vec<DenseLayer> = widths
        .windows(2)
        .map(|w| DenseLayer::xavier(w[0], w[1], &mut rng))
        .collect();
    let mut model = CalibModel {
        layer_widths: widths.to_vec(),
        activation: "tanh".into(),
        layers,
        seed: cfg.seed,
        input_mean,
        input_std,
        loss_history: Vec::with_capacity(cfg.epochs),
        holdout_rmse: None,
        train_samples: train.len(),
        warnings,
        frame_size: None,
        angle_limit: samples
            .iter()
            .flat_map(|s| s.labels)
            .fold(0.0, |m: f64, a| m.max(a.abs())),
    };
    let inputs: Vec<[f64; 4]> = train.iter().map(|s| model.normalise(&s.features)).collect();

    let mut moments: Vec<Moments> = model
        .layers
        .iter()
        .map(|l| Moments {
            m_w: vec![0.0; l.weights.len()],
            v_w: vec![0.0; l.weights.len()],
            m_b: vec![0.0; l.outputs],
            v_b: vec![0.0; l.outputs],
        })
        .collect();
    let mut grads: Vec<(Vec<f64>, Vec<f64>)> = model
        .layers
        .iter()
        .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.outputs]))
        .collect();
    let batch = cfg.batch_size.unwrap_or(train.len()).clamp(1, train.len());
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut acts: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut deltas: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    let mut epoch_order: Vec<usize> = (0..train.len()).collect();

    for _ in 0..cfg.epochs {
        if batch < train.len() {
            epoch_order.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0;
        for chunk in epoch_order.chunks(batch) {
            grads.iter_mut().for_each(|(gw, gb)| {
                gw.iter_mut().for_each(|v| *v = 0.0);
                gb.iter_mut().for_each(|v| *v = 0.0);
            });
            let mut batch_loss = 0.0;
            for &i in chunk {
                acts[0].copy_from_slice(&inputs[i]);
                for (l, layer) in model.layers.iter().enumerate() {
                    let (head, tail) = acts.split_at_mut(l + 1);
                    layer.forward(&head[l], &mut tail[0]);
                    if l + 1 < model.layers.len() {
                        tail[0].iter_mut().for_each(|v| *v = v.tanh());
                    }
                }
                let out = &acts[model.layers.len()];
                let scale = 1.0 / (2.0 * chunk.len() as f64);
                let last = deltas.len() - 1;
                for k in 0..2 {
                    let e = out[k] - train[i].labels[k];
                    batch_loss += e * e / 2.0;
                    deltas[last][k] = 2.0 * e * scale;
                }
                for l in (0..model.layers.len()).rev() {
                    let layer = &model.layers[l];
                    let (gw, gb) = &mut grads[l];
                    let (dhead, dtail) = deltas.split_at_mut(l + 1);
                    let delta_out = &dtail[0];
                    let a_in = &acts[l];
                    let d_in = &mut dhead[l];
                    d_in.iter_mut().for_each(|v| *v = 0.0);
                    for o in 0..layer.outputs {
                        let d = delta_out[o];
                        gb[o] += d;
                        let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
                        row.iter_mut().zip(a_in).for_each(|(g, a)| *g += d * a);
                        if l > 0 {
                            let w_row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                            d_in.iter_mut().zip(w_row).for_each(|(v, w)| *v += w * d);
                        }
                    }
                    if l > 0 {
                        d_in.iter_mut()
                            .zip(a_in)
                            .for_each(|(v, a)| *v *= 1.0 - a * a);
                    }
                }
            }
            epoch_loss += batch_loss;
            step += 1;
            let (c1, c2) = (1.0 - beta1.powi(step), 1.0 - beta2.powi(step));
            for ((layer, mo), (gw, gb)) in model.layers.iter_mut().zip(&mut moments).zip(&grads) {
                let update = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                };
                update(&mut layer.weights, &mut mo.m_w, &mut mo.v_w, gw);
                update(&mut layer.biases, &mut mo.m_b, &mut mo.v_b, gb);
            }
        }
        model.loss_history.push(epoch_loss / train.len() as f64);
    }
    if !holdout.is_empty() {
        model.holdout_rmse = Some(model.rmse(&holdout));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> Vec<CalibrationSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        (0..n)
            .map(|_| {
                let f: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
                CalibrationSample {
                    features: f,
                    labels: [0.8 * f[0], 0.5 * f[1] + 0.1 * f[2]],
                }
            })
            .collect()
    }

    #[test]
    fn learns_a_linear_map() {
        let cfg = TrainConfig {
            epochs: 60,
            ..Default::default()
        };
        let m = fit_calibration(&toy(3000), &cfg).unwrap();
        assert!(m.holdout_rmse.unwrap() < 0.03, "{:?}", m.holdout_rmse);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn constant_zero_labels() {
        let samples: Vec<CalibrationSample> = toy(500)
            .into_iter()
            .map(|s| CalibrationSample {
                labels: [0.0, 0.0],
                ..s
            })
            .collect();
        let m = fit_calibration(
            &samples,
            &TrainConfig {
                epochs: 100,
                ..Default::default()
            },
        )
        .unwrap();
        let worst = samples
            .iter()
            .flat_map(|s| m.predict(&s.features))
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(worst < 0.01, "{worst}");
        assert_eq!(m.warnings.len(), 2);
    }

    #[test]
    fn seeded_training_is_bitwise_repeatable() {
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let a = fit_calibration(&toy(400), &cfg).unwrap();
        let b = fit_calibration(&toy(400), &cfg).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip() {
        let m = fit_calibration(
            &toy(50),
            &TrainConfig {
                epochs: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(CalibModel::from_json(&m.to_json().unwrap()).unwrap(), m);
    }
}

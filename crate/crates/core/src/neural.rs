//! One-hidden-layer sigmoid network trained by full-batch backpropagation
//! with classic momentum on class-weighted cross-entropy.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_HEADER: &str = "proxsel-net";
const MODEL_VERSION: u32 = 1;
/// Training stops once the loss changes by less than this between
/// iterations.
pub const LOSS_PLATEAU: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub num_inputs: usize,
    pub num_hidden: usize,
    pub learning_rate: f64,
    pub max_iterations: usize,
    /// In [0, 1]; 1 keeps every past step undamped.
    pub momentum: f64,
    /// Loss weight of label-1 samples relative to label-0 samples.
    pub pos_class_weight: f64,
    pub seed: u64,
}

impl NetConfig {
    pub fn new(num_inputs: usize, num_hidden: usize) -> Self {
        NetConfig {
            num_inputs,
            num_hidden,
            learning_rate: 0.01,
            max_iterations: 1000,
            momentum: 0.9,
            pos_class_weight: 2.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_inputs == 0 || self.num_hidden == 0 {
            return Err(Error::invalid(
                "network needs at least one input and one hidden node",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning_rate must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::invalid(format!(
                "momentum must be in [0,1], got {}",
                self.momentum
            )));
        }
        if !(self.pos_class_weight >= 1.0) {
            return Err(Error::invalid("pos_class_weight must be >= 1"));
        }
        Ok(())
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Per-input affine map to zero mean and unit (population) variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Always positive; zero-variance inputs get 1.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dims: usize) -> Self {
        Standardizer {
            mean: vec![0.0; dims],
            std: vec![1.0; dims],
        }
    }

    pub fn fit(rows: &[&[f64]]) -> Self {
        let dims = rows.first().map_or(0, |r| r.len());
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dims];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dims];
        for r in rows {
            for d in 0..dims {
                var[d] += (r[d] - mean[d]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 0.0 && s.is_finite() {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralNet {
    pub num_inputs: usize,
    pub num_hidden: usize,
    /// Row-major `num_hidden x num_inputs`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    pub standardizer: Standardizer,
}

/// Gradient with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradient {
    fn zeros(net: &NeuralNet) -> Self {
        Gradient {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: 0.0,
        }
    }

    /// Flattened in parameter order `w1, b1, w2, b2`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w1.len() + self.b1.len() + self.w2.len() + 1);
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }
}

/// One training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: u8) -> Self {
        Sample { features, label }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingLog {
    /// Loss before each parameter update.
    pub losses: Vec<f64>,
    pub stopped_on_plateau: bool,
}

impl NeuralNet {
    /// Weights uniform in [-0.5, 0.5] drawn in the order `w1, b1, w2, b2`.
    pub fn init(config: &NetConfig, standardizer: Standardizer) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut draw =
            |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.5..=0.5)).collect() };
        let w1 = draw(config.num_hidden * config.num_inputs);
        let b1 = draw(config.num_hidden);
        let w2 = draw(config.num_hidden);
        let b2 = draw(1)[0];
        NeuralNet {
            num_inputs: config.num_inputs,
            num_hidden: config.num_hidden,
            w1,
            b1,
            w2,
            b2,
            standardizer,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let (n1, nb1, n2) = (self.w1.len(), self.b1.len(), self.w2.len());
        if i < n1 {
            &mut self.w1[i]
        } else if i < n1 + nb1 {
            &mut self.b1[i - n1]
        } else if i < n1 + nb1 + n2 {
            &mut self.w2[i - n1 - nb1]
        } else {
            &mut self.b2
        }
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_inputs {
            return Err(Error::Dimension {
                expected: self.num_inputs,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Hidden activations and output logit for a standardized input.
    fn hidden_and_logit(&self, z: &[f64]) -> (Vec<f64>, f64) {
        let hidden: Vec<f64> = (0..self.num_hidden)
            .map(|j| {
                let row = &self.w1[j * self.num_inputs..(j + 1) * self.num_inputs];
                let a: f64 = row.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.b1[j];
                sigmoid(a)
            })
            .collect();
        let logit = hidden.iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2;
        (hidden, logit)
    }

    /// Output probability in (0, 1).
    pub fn forward(&self, features: &[f64]) -> Result<f64> {
        self.check_dims(features)?;
        let z = self.standardizer.apply(features);
        Ok(sigmoid(self.hidden_and_logit(&z).1))
    }

    pub fn predict(&self, features: &[f64], threshold: f64) -> Result<u8> {
        Ok(u8::from(self.forward(features)? >= threshold))
    }

    /// Weighted mean cross-entropy, normalized by the total sample weight.
    pub fn loss(&self, samples: &[Sample], pos_class_weight: f64) -> Result<f64> {
        Ok(self.loss_and_gradient(samples, pos_class_weight)?.0)
    }

    /// Loss and its exact gradient by backpropagation.
    pub fn loss_and_gradient(
        &self,
        samples: &[Sample],
        pos_class_weight: f64,
    ) -> Result<(f64, Gradient)> {
        let mut grad = Gradient::zeros(self);
        let mut loss = 0.0;
        let mut total_weight = 0.0;
        for s in samples {
            self.check_dims(&s.features)?;
            let weight = if s.label == 1 { pos_class_weight } else { 1.0 };
            let y = s.label as f64;
            let z = self.standardizer.apply(&s.features);
            let (hidden, logit) = self.hidden_and_logit(&z);
            loss += weight * (softplus(logit) - y * logit);
            total_weight += weight;
            let d_logit = weight * (sigmoid(logit) - y);
            grad.b2 += d_logit;
            for j in 0..self.num_hidden {
                grad.w2[j] += d_logit * hidden[j];
                let delta = d_logit * self.w2[j] * hidden[j] * (1.0 - hidden[j]);
                grad.b1[j] += delta;
                let row = &mut grad.w1[j * self.num_inputs..(j + 1) * self.num_inputs];
                for (g, x) in row.iter_mut().zip(&z) {
                    *g += delta * x;
                }
            }
        }
        if total_weight == 0.0 {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / total_weight;
        grad.w1
            .iter_mut()
            .chain(grad.b1.iter_mut())
            .chain(grad.w2.iter_mut())
            .for_each(|g| *g *= scale);
        grad.b2 *= scale;
        Ok((loss * scale, grad))
    }

    fn apply_step(&mut self, step: &[f64]) {
        for (i, s) in step.iter().enumerate() {
            *self.param_mut(i) += s;
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Self-describing text form; floats use shortest round-trip notation.
    pub fn to_text(&self) -> String {
        fn row(out: &mut String, key: &str, values: &[f64]) {
            out.push_str(key);
            for v in values {
                let _ = write!(out, " {v:?}");
            }
            out.push('\n');
        }
        let mut out = format!("{MODEL_HEADER} {MODEL_VERSION}\n");
        let _ = writeln!(out, "inputs {}", self.num_inputs);
        let _ = writeln!(out, "hidden {}", self.num_hidden);
        row(&mut out, "mean", &self.standardizer.mean);
        row(&mut out, "std", &self.standardizer.std);
        for j in 0..self.num_hidden {
            row(
                &mut out,
                "w1",
                &self.w1[j * self.num_inputs..(j + 1) * self.num_inputs],
            );
        }
        row(&mut out, "b1", &self.b1);
        row(&mut out, "w2", &self.w2);
        row(&mut out, "b2", &[self.b2]);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = ModelLines::new(text);
        let (offset, header) = lines.next_line()?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MODEL_HEADER) {
            return Err(Error::format(offset, "not a network model file"));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(offset, "missing model version"))?;
        if version != MODEL_VERSION {
            return Err(Error::format(
                offset,
                format!("unsupported model version {version}"),
            ));
        }
        let num_inputs = lines.scalar("inputs")?;
        let num_hidden = lines.scalar("hidden")?;
        if num_inputs == 0 || num_hidden == 0 {
            return Err(Error::format(0, "zero-sized network"));
        }
        let mean = lines.row("mean", num_inputs)?;
        let std = lines.row("std", num_inputs)?;
        if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
            return Err(Error::format(
                0,
                format!("standardizer std {s} is not positive"),
            ));
        }
        let mut w1 = Vec::with_capacity(num_inputs * num_hidden);
        for _ in 0..num_hidden {
            w1.extend(lines.row("w1", num_inputs)?);
        }
        let b1 = lines.row("b1", num_hidden)?;
        let w2 = lines.row("w2", num_hidden)?;
        let b2 = lines.row("b2", 1)?[0];
        if let Ok((offset, extra)) = lines.next_line() {
            return Err(Error::format(
                offset,
                format!("unexpected trailing line {extra:?}"),
            ));
        }
        Ok(NeuralNet {
            num_inputs,
            num_hidden,
            w1,
            b1,
            w2,
            b2,
            standardizer: Standardizer { mean, std },
        })
    }
}

struct ModelLines<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> ModelLines<'a> {
    fn new(text: &'a str) -> Self {
        ModelLines { text, pos: 0 }
    }

    fn next_line(&mut self) -> Result<(u64, &'a str)> {
        loop {
            if self.pos >= self.text.len() {
                return Err(Error::format(
                    self.pos as u64,
                    "unexpected end of model file",
                ));
            }
            let start = self.pos;
            let rest = &self.text[start..];
            let end = rest.find('\n').map_or(rest.len(), |i| i + 1);
            self.pos += end;
            let line = rest[..end].trim();
            if !line.is_empty() {
                return Ok((start as u64, line));
            }
        }
    }

    fn keyed(&mut self, key: &str) -> Result<(u64, Vec<&'a str>)> {
        let (offset, line) = self.next_line()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(Error::format(offset, format!("expected `{key}` line")));
        }
        Ok((offset, parts.collect()))
    }

    fn scalar(&mut self, key: &str) -> Result<usize> {
        let (offset, parts) = self.keyed(key)?;
        match parts.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| Error::format(offset, format!("bad {key} value {v:?}"))),
            _ => Err(Error::format(offset, format!("`{key}` takes one value"))),
        }
    }

    fn row(&mut self, key: &str, expected: usize) -> Result<Vec<f64>> {
        let (offset, parts) = self.keyed(key)?;
        if parts.len() != expected {
            return Err(Error::format(
                offset,
                format!("`{key}` has {} values, expected {expected}", parts.len()),
            ));
        }
        parts
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::format(offset, format!("bad number {v:?} in `{key}`")))
            })
            .collect()
    }
}

/// Canonical sample order, so full-batch sums do not depend on input order.
fn canonical_order(samples: &[Sample]) -> Vec<&Sample> {
    let mut sorted: Vec<&Sample> = samples.iter().collect();
    sorted.sort_by(|a, b| {
        a.label.cmp(&b.label).then_with(|| {
            a.features
                .iter()
                .zip(&b.features)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    sorted
}

/// Fits the standardizer and trains a freshly initialized network.
pub fn train(config: &NetConfig, samples: &[Sample]) -> Result<(NeuralNet, TrainingLog)> {
    config.validate()?;
    for class in [0u8, 1] {
        if !samples.iter().any(|s| s.label == class) {
            return Err(Error::MissingClass { missing: class });
        }
    }
    if let Some(bad) = samples
        .iter()
        .find(|s| s.features.len() != config.num_inputs)
    {
        return Err(Error::Dimension {
            expected: config.num_inputs,
            got: bad.features.len(),
        });
    }
    let ordered: Vec<Sample> = canonical_order(samples).into_iter().cloned().collect();
    let rows: Vec<&[f64]> = ordered.iter().map(|s| s.features.as_slice()).collect();
    let net = NeuralNet::init(config, Standardizer::fit(&rows));
    train_from(net, config, &ordered)
}

/// Continues training from `net` with the given hyperparameters.
pub fn train_from(
    mut net: NeuralNet,
    config: &NetConfig,
    samples: &[Sample],
) -> Result<(NeuralNet, TrainingLog)> {
    let mut log = TrainingLog::default();
    let mut velocity = vec![0.0; net.parameter_count()];
    let mut previous: Option<f64> = None;
    for _ in 0..config.max_iterations {
        let (loss, grad) = net.loss_and_gradient(samples, config.pos_class_weight)?;
        log.losses.push(loss);
        if previous.is_some_and(|p| (p - loss).abs() < LOSS_PLATEAU) {
            log.stopped_on_plateau = true;
            break;
        }
        previous = Some(loss);
        for (v, g) in velocity.iter_mut().zip(grad.flatten()) {
            *v = -config.learning_rate * g + config.momentum * *v;
        }
        net.apply_step(&velocity);
    }
    Ok((net, log))
}

/// Largest `|analytic - central difference| / max(1, |analytic|)` over all
/// parameters.
pub fn gradient_check(
    net: &NeuralNet,
    samples: &[Sample],
    pos_class_weight: f64,
    epsilon: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::invalid("epsilon must be in (0, 1e-2]"));
    }
    let analytic = net
        .loss_and_gradient(samples, pos_class_weight)?
        .1
        .flatten();
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let original = *probe.param_mut(i);
        *probe.param_mut(i) = original + epsilon;
        let up = probe.loss(samples, pos_class_weight)?;
        *probe.param_mut(i) = original - epsilon;
        let down = probe.loss(samples, pos_class_weight)?;
        *probe.param_mut(i) = original;
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

/// Confusion counts `[[tn, fp], [fn, tp]]` at `threshold`.
pub fn confusion(net: &NeuralNet, samples: &[Sample], threshold: f64) -> Result<[[usize; 2]; 2]> {
    let mut m = [[0usize; 2]; 2];
    for s in samples {
        let p = net.predict(&s.features, threshold)?;
        m[s.label as usize][p as usize] += 1;
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_net(inputs: usize, hidden: usize) -> NeuralNet {
        NeuralNet {
            num_inputs: inputs,
            num_hidden: hidden,
            w1: vec![0.0; inputs * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
            standardizer: Standardizer::identity(inputs),
        }
    }

    #[test]
    fn zero_weights_give_one_half() {
        assert_eq!(zero_net(3, 4).forward(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
    }

    #[test]
    fn saturated_hidden_layer_decouples_output() {
        let mut net = zero_net(2, 3);
        net.b1 = vec![50.0; 3];
        net.b2 = 0.7;
        assert_eq!(net.forward(&[3.0, -1.0]).unwrap(), sigmoid(0.7));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            zero_net(2, 2).forward(&[1.0]),
            Err(Error::Dimension {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn single_class_rejected() {
        let samples = vec![Sample::new(vec![1.0], 1), Sample::new(vec![2.0], 1)];
        assert!(matches!(
            train(&NetConfig::new(1, 2), &samples),
            Err(Error::MissingClass { missing: 0 })
        ));
    }

    #[test]
    fn constant_feature_guard() {
        let samples: Vec<Sample> = (0..6)
            .map(|i| Sample::new(vec![4.0, i as f64], (i % 2) as u8))
            .collect();
        let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
        let st = Standardizer::fit(&rows);
        assert_eq!(st.std[0], 1.0);
        let mut cfg = NetConfig::new(2, 3);
        cfg.seed = 4;
        let net = NeuralNet::init(&cfg, st);
        let err = gradient_check(&net, &samples, 2.0, 1e-5).unwrap();
        assert!(err.is_finite() && err < 1e-6);
    }

    #[test]
    fn text_round_trip_and_corruption() {
        let mut cfg = NetConfig::new(3, 5);
        cfg.seed = 11;
        let st = Standardizer {
            mean: vec![0.1, -2.0, 1e-3],
            std: vec![1.5, 0.25, 3.0],
        };
        let net = NeuralNet::init(&cfg, st);
        let back = NeuralNet::from_text(&net.to_text()).unwrap();
        assert_eq!(back, net);

        let text = net.to_text();
        assert!(NeuralNet::from_text(&text.replace("proxsel-net 1", "proxsel-net 2")).is_err());
        assert!(NeuralNet::from_text(&text.replace("inputs 3", "inputs 4")).is_err());
        assert!(NeuralNet::from_text(&text[..text.len() / 2]).is_err());
    }

    #[test]
    fn validate_ranges() {
        let mut cfg = NetConfig::new(2, 2);
        cfg.momentum = 1.0;
        assert!(cfg.validate().is_ok());
        cfg.momentum = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = NetConfig::new(2, 2);
        cfg.pos_class_weight = 0.5;
        assert!(cfg.validate().is_err());
    }
}

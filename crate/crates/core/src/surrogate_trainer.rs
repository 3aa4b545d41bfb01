//! Supervised training of the recurrent network by truncated BPTT with a
//! fast-sigmoid surrogate derivative at the spike nonlinearity.
//!
//! The forward pass runs on the same [`SimEngine`] step code as the plain
//! simulator, so trained and untrained networks share spike-level semantics.
//! A linear readout of per-neuron spike counts feeds a softmax
//! cross-entropy loss; gradients flow back through the membrane recursion
//! with the reset path detached and credit assignment truncated to a
//! configurable window. Plain gradient descent with optional momentum;
//! recurrent weights stay clamped to their declared bounds.

use crate::error::{Error, Result};
use crate::lif_sim::{bin_input_pulses, SimConfig, SimEngine, SpikeRaster, StepTrace};
use crate::net_graph::NetworkTopology;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// One supervised sample: external input spikes plus a class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRaster {
    pub input: SpikeRaster,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Slope of the fast-sigmoid surrogate derivative.
    pub surrogate_beta: f64,
    /// Backward window length in steps; gradient flow is cut at window
    /// boundaries.
    pub truncation_length: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub sim: SimConfig,
    /// Coupling from each input channel to its input neuron.
    pub input_weight: f64,
    /// Retain per-epoch weight snapshots for epoch-wise comparisons.
    pub snapshot_weights: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) && self.learning_rate != 0.0 {
            return Err(Error::config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.surrogate_beta > 0.0) {
            return Err(Error::config(format!(
                "surrogate_beta must be > 0, got {}",
                self.surrogate_beta
            )));
        }
        if self.truncation_length < 1 {
            return Err(Error::config("truncation_length must be >= 1".to_string()));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be >= 1".to_string()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        self.sim.validate()?;
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            learning_rate: 0.5,
            surrogate_beta: 10.0,
            truncation_length: 50,
            batch_size: 8,
            momentum: 0.9,
            sim: SimConfig::new(1.0, 100.0),
            input_weight: 15.0,
            snapshot_weights: false,
            seed: 0,
        }
    }
}

/// Fast-sigmoid surrogate derivative `1 / (1 + beta * |v - v_th|)^2`,
/// in (0, 1].
pub fn surrogate_grad(v: f64, v_th: f64, beta: f64) -> f64 {
    let d = 1.0 + beta * (v - v_th).abs();
    1.0 / (d * d)
}

/// Linear (non-spiking) decoder over per-neuron spike counts (normalized by
/// the step count of the window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// classes x neurons
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Readout {
    pub fn zeros(classes: usize, neurons: usize) -> Self {
        Readout {
            weights: vec![vec![0.0; neurons]; classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, counts: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(counts).map(|(w, c)| w * c).sum::<f64>())
            .collect()
    }

    pub fn predict(&self, counts: &[f64]) -> usize {
        let logits = self.logits(counts);
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        best
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
}

/// Weight state captured at an epoch boundary; index 0 is the untrained
/// network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub synapse_weights: Vec<f64>,
    pub readout: Readout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpttOutcome {
    pub net: NetworkTopology,
    pub readout: Readout,
    pub curve: Vec<EpochRecord>,
    /// Present when `snapshot_weights` was set: epochs + 1 entries.
    pub snapshots: Vec<EpochSnapshot>,
}

pub fn write_curve_csv(curve: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "epoch,loss,train_accuracy")?;
    for r in curve {
        writeln!(out, "{},{},{}", r.epoch, r.loss, r.train_accuracy)?;
    }
    Ok(())
}

/// Forward pass of one sample on the shared engine code, recording the
/// per-step trace the backward pass consumes.
struct ForwardRecord {
    traces: Vec<StepTrace>,
    #[cfg_attr(not(test), allow(dead_code))]
    counts: Vec<f64>,
    /// Counts normalized by step count; the decoder's feature vector.
    /// Keeps logits O(1) so the loss surface is well conditioned.
    features: Vec<f64>,
}

fn forward_traced(
    net: &NetworkTopology,
    weights: &[f64],
    sample: &SpikeRaster,
    cfg: &TrainConfig,
) -> Result<ForwardRecord> {
    let input_weights = vec![cfg.input_weight; net.input_ids.len()];
    let pulses = bin_input_pulses(net, sample, &input_weights, &cfg.sim)?;
    let mut engine = SimEngine::new(net, &cfg.sim)?;
    engine.weights.copy_from_slice(weights);
    let n = net.neuron_count;
    let mut traces = Vec::with_capacity(pulses.len());
    let mut counts = vec![0.0f64; n];
    for step_pulses in &pulses {
        let mut trace = StepTrace::default();
        for id in engine.step_traced(step_pulses, &mut trace) {
            counts[id] += 1.0;
        }
        traces.push(trace);
    }
    let steps = pulses.len().max(1) as f64;
    let features = counts.iter().map(|c| c / steps).collect();
    Ok(ForwardRecord { traces, counts, features })
}

/// Per-sample gradients from one BPTT backward sweep.
struct SampleGrads {
    d_weights: Vec<f64>,
    d_readout_w: Vec<Vec<f64>>,
    d_readout_b: Vec<f64>,
    loss: f64,
    predicted: usize,
}

fn backward_sample(
    net: &NetworkTopology,
    weights: &[f64],
    readout: &Readout,
    record: &ForwardRecord,
    label: usize,
    cfg: &TrainConfig,
) -> SampleGrads {
    let n = net.neuron_count;
    let classes = readout.classes();
    let logits = readout.logits(&record.features);
    let probs = softmax(&logits);
    let loss = -(probs[label].max(1e-300)).ln();
    let mut best = 0;
    for (i, &z) in logits.iter().enumerate() {
        if z > logits[best] {
            best = i;
        }
    }

    // Readout path: d_logit = p - y.
    let mut d_logit = probs.clone();
    d_logit[label] -= 1.0;
    let mut d_readout_w = vec![vec![0.0; n]; classes];
    for c in 0..classes {
        for i in 0..n {
            d_readout_w[c][i] = d_logit[c] * record.features[i];
        }
    }
    let d_readout_b = d_logit.clone();

    // dL/d(count_i), entering the spike path at every step; the feature
    // normalization contributes the 1/steps factor.
    let count_scale = 1.0 / record.traces.len().max(1) as f64;
    let mut g_count = vec![0.0f64; n];
    for i in 0..n {
        for c in 0..classes {
            g_count[i] += d_logit[c] * readout.weights[c][i] * count_scale;
        }
    }

    let decay: Vec<f64> = net.neurons.iter().map(|p| (-cfg.sim.dt / p.tau_m).exp()).collect();
    let v_th: Vec<f64> = net.neurons.iter().map(|p| p.v_th).collect();
    let steps = record.traces.len();
    let mut d_weights = vec![0.0f64; weights.len()];
    // Gradient arriving at v_{i,k} from v_{i,k+1} (already scaled by decay).
    let mut future_v = vec![0.0f64; n];
    // dL/dv of step k+1, for routing spike deliveries backward.
    let mut next_g_v = vec![0.0f64; n];
    let mut g_v = vec![0.0f64; n];

    for k in (0..steps).rev() {
        // Truncation boundary: cut all credit flowing past the window edge.
        if (steps - k) % cfg.truncation_length == 0 && k + 1 < steps {
            future_v.iter_mut().for_each(|g| *g = 0.0);
            next_g_v.iter_mut().for_each(|g| *g = 0.0);
        }
        let tr = &record.traces[k];
        for i in 0..n {
            if tr.refractory[i] {
                g_v[i] = 0.0;
                continue;
            }
            // Spikes at k deliver current to posts at k+1.
            let mut g_spike = g_count[i];
            if tr.spiked[i] {
                for s in 0..weights.len() {
                    if net.synapses[s].pre == i {
                        let j = net.synapses[s].post;
                        g_spike += weights[s] * next_g_v[j] * (1.0 - decay[j]);
                    }
                }
            }
            let carried = if tr.spiked[i] { 0.0 } else { future_v[i] };
            g_v[i] = g_spike * surrogate_grad(tr.v_pre[i], v_th[i], cfg.surrogate_beta) + carried;
        }
        // Weight gradients: v_{i,k} saw recurrent input (1 - a_i) * w * s_{pre,k-1}.
        if k > 0 {
            let prev = &record.traces[k - 1];
            for (s, syn) in net.synapses.iter().enumerate() {
                if prev.spiked[syn.pre] && !tr.refractory[syn.post] {
                    d_weights[s] += g_v[syn.post] * (1.0 - decay[syn.post]);
                }
            }
        }
        for i in 0..n {
            future_v[i] = g_v[i] * decay[i];
        }
        std::mem::swap(&mut next_g_v, &mut g_v);
    }

    SampleGrads { d_weights, d_readout_w, d_readout_b, loss, predicted: best }
}

/// Train the network plus a linear count decoder jointly. Labels must be
/// class indices < `classes`. Returns the trained network, the decoder, the
/// training curve, and optional per-epoch snapshots.
pub fn train_bptt(
    net: &NetworkTopology,
    dataset: &[LabeledRaster],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<BpttOutcome> {
    cfg.validate()?;
    net.validate()?;
    if dataset.is_empty() {
        return Err(Error::input("empty dataset".to_string()));
    }
    if classes < 2 {
        return Err(Error::config(format!("need >= 2 classes, got {}", classes)));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.label >= classes {
            return Err(Error::input(format!(
                "sample {} has label {} >= classes {}",
                i, s.label, classes
            )));
        }
        s.input.validate()?;
    }

    let n = net.neuron_count;
    let mut weights: Vec<f64> = net.synapses.iter().map(|s| s.params.weight).collect();
    let mut readout = Readout::zeros(classes, n);
    let mut vel_w = vec![0.0f64; weights.len()];
    let mut vel_rw = vec![vec![0.0f64; n]; classes];
    let mut vel_rb = vec![0.0f64; classes];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let snapshot = |epoch: usize, weights: &[f64], readout: &Readout| EpochSnapshot {
        epoch,
        synapse_weights: weights.to_vec(),
        readout: readout.clone(),
    };
    let mut snapshots = Vec::new();
    if cfg.snapshot_weights {
        snapshots.push(snapshot(0, &weights, &readout));
    }

    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc_w = vec![0.0f64; weights.len()];
            let mut acc_rw = vec![vec![0.0f64; n]; classes];
            let mut acc_rb = vec![0.0f64; classes];
            let mut batch_loss = 0.0;
            for &idx in batch {
                let sample = &dataset[idx];
                let record = forward_traced(net, &weights, &sample.input, cfg)?;
                let grads = backward_sample(net, &weights, &readout, &record, sample.label, cfg);
                if grads.predicted == sample.label {
                    correct += 1;
                }
                batch_loss += grads.loss;
                for (a, g) in acc_w.iter_mut().zip(&grads.d_weights) {
                    *a += g;
                }
                for c in 0..classes {
                    for i in 0..n {
                        acc_rw[c][i] += grads.d_readout_w[c][i];
                    }
                    acc_rb[c] += grads.d_readout_b[c];
                }
            }
            let scale = 1.0 / batch.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    batch: batch_idx,
                    msg: format!("non-finite loss {}", batch_loss),
                });
            }
            epoch_loss += batch_loss * batch.len() as f64;
            // Momentum GD; recurrent weights stay inside their bounds.
            for (s, syn) in net.synapses.iter().enumerate() {
                vel_w[s] = cfg.momentum * vel_w[s] - cfg.learning_rate * acc_w[s] * scale;
                weights[s] =
                    (weights[s] + vel_w[s]).clamp(syn.params.w_min, syn.params.w_max);
            }
            for c in 0..classes {
                for i in 0..n {
                    vel_rw[c][i] =
                        cfg.momentum * vel_rw[c][i] - cfg.learning_rate * acc_rw[c][i] * scale;
                    readout.weights[c][i] += vel_rw[c][i];
                }
                vel_rb[c] = cfg.momentum * vel_rb[c] - cfg.learning_rate * acc_rb[c] * scale;
                readout.bias[c] += vel_rb[c];
            }
        }
        curve.push(EpochRecord {
            epoch,
            loss: epoch_loss / dataset.len() as f64,
            train_accuracy: correct as f64 / dataset.len() as f64,
        });
        if cfg.snapshot_weights {
            snapshots.push(snapshot(epoch, &weights, &readout));
        }
    }

    let mut trained = net.clone();
    for (s, w) in trained.synapses.iter_mut().zip(&weights) {
        s.params.weight = *w;
    }
    Ok(BpttOutcome { net: trained, readout, curve, snapshots })
}

/// Classification accuracy of a (network, readout) pair on a labeled set.
pub fn evaluate(
    net: &NetworkTopology,
    readout: &Readout,
    dataset: &[LabeledRaster],
    cfg: &TrainConfig,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::input("empty dataset".to_string()));
    }
    let weights: Vec<f64> = net.synapses.iter().map(|s| s.params.weight).collect();
    let mut correct = 0usize;
    for sample in dataset {
        let record = forward_traced(net, &weights, &sample.input, cfg)?;
        if readout.predict(&record.features) == sample.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

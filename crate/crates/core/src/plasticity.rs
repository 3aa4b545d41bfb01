//! Online STDP weight updates.
//!
//! Soft-bounded rule: a causal pairing (post after pre, `dt >= 0`) moves the
//! weight toward `w_max` by `eta_plus * (w_max - w) * exp(-|dt|/tau_plus)`;
//! an anti-causal pairing moves it toward `w_min` by
//! `eta_minus * (w - w_min) * exp(-|dt|/tau_minus)`. Pairing is
//! nearest-neighbor: each spike pairs with the most recent opposite-side
//! spike only.

use crate::error::{Error, Result};
use crate::lif_sim::{bin_input_pulses, rate_encode, SimConfig, SimEngine};
use crate::net_graph::{NetworkTopology, SynapseParams};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Weight change for a single spike pairing with `delta_t = t_post - t_pre`.
pub fn stdp_delta(delta_t: f64, p: &SynapseParams, w: f64) -> f64 {
    if delta_t >= 0.0 {
        p.eta_plus * (p.w_max - w) * (-delta_t.abs() / p.tau_plus).exp()
    } else {
        -p.eta_minus * (w - p.w_min) * (-delta_t.abs() / p.tau_minus).exp()
    }
}

/// Settings for one unsupervised STDP training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsupervisedConfig {
    pub epochs: usize,
    pub sim: SimConfig,
    /// Peak Poisson rate (Hz) used to encode feature vectors.
    pub max_rate: f64,
    /// Coupling from each input channel to its input neuron.
    pub input_weight: f64,
    pub seed: u64,
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_abs_dw: f64,
    /// Weight quantiles (0.05, 0.25, 0.5, 0.75, 0.95) at epoch end.
    pub weight_quantiles: [f64; 5],
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainingLog {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("epoch,mean_abs_dw,w_q05,w_q25,w_q50,w_q75,w_q95\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch,
                e.mean_abs_dw,
                e.weight_quantiles[0],
                e.weight_quantiles[1],
                e.weight_quantiles[2],
                e.weight_quantiles[3],
                e.weight_quantiles[4]
            ));
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn quantiles(weights: &[f64]) -> [f64; 5] {
    if weights.is_empty() {
        return [0.0; 5];
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
        sorted[idx]
    };
    [pick(0.05), pick(0.25), pick(0.5), pick(0.75), pick(0.95)]
}

/// Tracks nearest-neighbor spike pairings during one simulated window and
/// applies online STDP to the engine's weights at each spike instant.
pub struct StdpState {
    last_spike: Vec<Option<f64>>,
    /// Sum of |dw| applied since the last `take_abs_dw` call.
    abs_dw: f64,
}

impl StdpState {
    pub fn new(neuron_count: usize) -> Self {
        StdpState {
            last_spike: vec![None; neuron_count],
            abs_dw: 0.0,
        }
    }

    pub fn reset_window(&mut self) {
        self.last_spike.iter_mut().for_each(|s| *s = None);
    }

    pub fn take_abs_dw(&mut self) -> f64 {
        std::mem::take(&mut self.abs_dw)
    }

    /// Apply updates for the spikes emitted at time `t`, after the membrane
    /// update of the step. `spikes` must be ascending neuron ids.
    pub fn apply(&mut self, net: &NetworkTopology, engine: &mut SimEngine, spikes: &[usize], t: f64) {
        if spikes.is_empty() {
            return;
        }
        let spiked = |id: usize| spikes.binary_search(&id).is_ok();
        let (out_synapses, in_synapses, weights) = engine.split_plasticity();
        // Potentiation: each spiking post pairs with the latest pre spike,
        // including a simultaneous one (dt = 0).
        for &post in spikes {
            for &syn_idx in &in_synapses[post] {
                let syn = &net.synapses[syn_idx];
                if !syn.params.plastic {
                    continue;
                }
                let t_pre = if spiked(syn.pre) { Some(t) } else { self.last_spike[syn.pre] };
                if let Some(t_pre) = t_pre {
                    let w = weights[syn_idx];
                    let dw = stdp_delta(t - t_pre, &syn.params, w);
                    weights[syn_idx] = (w + dw).clamp(syn.params.w_min, syn.params.w_max);
                    self.abs_dw += dw.abs();
                }
            }
        }
        // Depression: each spiking pre pairs with the latest post spike.
        // Simultaneous pairs were already handled as dt = 0 above.
        for &pre in spikes {
            for &syn_idx in &out_synapses[pre] {
                let syn = &net.synapses[syn_idx];
                if !syn.params.plastic || spiked(syn.post) {
                    continue;
                }
                if let Some(t_post) = self.last_spike[syn.post] {
                    let w = weights[syn_idx];
                    let dw = stdp_delta(t_post - t, &syn.params, w);
                    weights[syn_idx] = (w + dw).clamp(syn.params.w_min, syn.params.w_max);
                    self.abs_dw += dw.abs();
                }
            }
        }
        for &id in spikes {
            self.last_spike[id] = Some(t);
        }
    }
}

/// Train a network with online STDP over the dataset, one simulation window
/// per sample, plasticity continuous within a window. Weights persist across
/// samples and epochs; membrane state and pairing history reset per sample.
pub fn train_unsupervised(
    net: &NetworkTopology,
    dataset: &[Vec<f64>],
    cfg: &UnsupervisedConfig,
) -> Result<(NetworkTopology, TrainingLog)> {
    if dataset.is_empty() {
        return Err(Error::input("empty dataset".to_string()));
    }
    for s in &net.synapses {
        if s.params.plastic {
            s.params.validate()?;
        }
    }
    let input_weights = vec![cfg.input_weight; net.input_ids.len()];
    let mut weights: Vec<f64> = net.synapses.iter().map(|s| s.params.weight).collect();
    let mut log = TrainingLog::default();
    let mut stdp = StdpState::new(net.neuron_count);

    for epoch in 0..cfg.epochs {
        let mut epoch_abs_dw = 0.0;
        let mut updates = 0usize;
        for (sample_idx, features) in dataset.iter().enumerate() {
            let sample_seed = cfg
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((epoch * dataset.len() + sample_idx) as u64);
            let input = rate_encode(features, cfg.sim.duration, cfg.max_rate, sample_seed)?;
            present_sample(net, &input, &input_weights, cfg, &mut weights, &mut stdp)?;
            epoch_abs_dw += stdp.take_abs_dw();
            updates += 1;
        }
        log.epochs.push(EpochStats {
            epoch,
            mean_abs_dw: epoch_abs_dw / updates as f64,
            weight_quantiles: quantiles(&weights),
        });
    }

    finish_training(net, weights, log)
}

/// Like [`train_unsupervised`] but presents pre-built spike rasters instead
/// of rate-encoding feature vectors, for datasets whose class identity lives
/// in spike timing.
pub fn train_unsupervised_rasters(
    net: &NetworkTopology,
    dataset: &[crate::lif_sim::SpikeRaster],
    cfg: &UnsupervisedConfig,
) -> Result<(NetworkTopology, TrainingLog)> {
    if dataset.is_empty() {
        return Err(Error::input("empty dataset".to_string()));
    }
    for s in &net.synapses {
        if s.params.plastic {
            s.params.validate()?;
        }
    }
    let input_weights = vec![cfg.input_weight; net.input_ids.len()];
    let mut weights: Vec<f64> = net.synapses.iter().map(|s| s.params.weight).collect();
    let mut log = TrainingLog::default();
    let mut stdp = StdpState::new(net.neuron_count);

    for epoch in 0..cfg.epochs {
        let mut epoch_abs_dw = 0.0;
        let mut updates = 0usize;
        for input in dataset {
            present_sample(net, input, &input_weights, cfg, &mut weights, &mut stdp)?;
            epoch_abs_dw += stdp.take_abs_dw();
            updates += 1;
        }
        log.epochs.push(EpochStats {
            epoch,
            mean_abs_dw: epoch_abs_dw / updates as f64,
            weight_quantiles: quantiles(&weights),
        });
    }

    finish_training(net, weights, log)
}

/// One STDP presentation: simulate the sample with plasticity online,
/// carrying `weights` across samples.
fn present_sample(
    net: &NetworkTopology,
    input: &crate::lif_sim::SpikeRaster,
    input_weights: &[f64],
    cfg: &UnsupervisedConfig,
    weights: &mut [f64],
    stdp: &mut StdpState,
) -> Result<()> {
    let pulses = bin_input_pulses(net, input, input_weights, &cfg.sim)?;
    let mut engine = SimEngine::new(net, &cfg.sim)?;
    engine.weights.copy_from_slice(weights);
    stdp.reset_window();
    for step_pulses in &pulses {
        let t = engine.now();
        let spikes = engine.step(step_pulses);
        stdp.apply(net, &mut engine, &spikes, t);
    }
    weights.copy_from_slice(&engine.weights);
    Ok(())
}

fn finish_training(
    net: &NetworkTopology,
    weights: Vec<f64>,
    log: TrainingLog,
) -> Result<(NetworkTopology, TrainingLog)> {
    let mut trained = net.clone();
    for (s, &w) in trained.synapses.iter_mut().zip(weights.iter()) {
        s.params.weight = w;
    }
    trained.validate()?;
    Ok((trained, log))
}

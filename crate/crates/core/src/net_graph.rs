//! Network topology and heterogeneous parameter sampling.
//!
//! Neuron and synapse parameters are drawn per-unit from configured
//! distributions (constant, uniform, lognormal, gamma) with optional
//! clamping. Setting every distribution to the constant family reproduces
//! the homogeneous (MRSNN) model exactly.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

pub const NETWORK_FORMAT_VERSION: u32 = 1;

/// Per-neuron LIF parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    /// Membrane time constant (ms), > 0.
    pub tau_m: f64,
    /// Spike threshold (mV).
    pub v_th: f64,
    /// Resting potential (mV).
    pub v_rest: f64,
    /// Reset potential (mV).
    pub v_reset: f64,
    /// Refractory period (ms), >= 0.
    pub t_ref: f64,
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) {
            return Err(Error::config(format!("tau_m must be > 0, got {}", self.tau_m)));
        }
        if !(self.t_ref >= 0.0) {
            return Err(Error::config(format!("t_ref must be >= 0, got {}", self.t_ref)));
        }
        if !(self.v_th > self.v_reset) {
            return Err(Error::config(format!(
                "v_th ({}) must exceed v_reset ({})",
                self.v_th, self.v_reset
            )));
        }
        if !(self.v_th > self.v_rest) {
            return Err(Error::config(format!(
                "v_th ({}) must exceed v_rest ({})",
                self.v_th, self.v_rest
            )));
        }
        Ok(())
    }
}

/// Per-synapse weight and STDP parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynapseParams {
    pub weight: f64,
    /// Potentiation time constant (ms), > 0.
    pub tau_plus: f64,
    /// Depression time constant (ms), > 0.
    pub tau_minus: f64,
    /// Potentiation learning rate, >= 0.
    pub eta_plus: f64,
    /// Depression learning rate, >= 0.
    pub eta_minus: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub plastic: bool,
}

impl SynapseParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_plus > 0.0) {
            return Err(Error::config(format!("tau_plus must be > 0, got {}", self.tau_plus)));
        }
        if !(self.tau_minus > 0.0) {
            return Err(Error::config(format!("tau_minus must be > 0, got {}", self.tau_minus)));
        }
        if !(self.eta_plus >= 0.0 && self.eta_minus >= 0.0) {
            return Err(Error::config("eta_plus and eta_minus must be >= 0".to_string()));
        }
        if !(self.w_min <= self.weight && self.weight <= self.w_max) {
            return Err(Error::config(format!(
                "weight {} outside [{}, {}]",
                self.weight, self.w_min, self.w_max
            )));
        }
        Ok(())
    }
}

/// A directed synapse `pre -> post`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub pre: usize,
    pub post: usize,
    pub params: SynapseParams,
}

/// Directed weighted graph of LIF neurons.
///
/// Input and output neurons are recurrent members: they participate in
/// recurrent wiring like every other neuron.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub neuron_count: usize,
    pub neurons: Vec<NeuronParams>,
    pub synapses: Vec<Synapse>,
    /// Sorted, distinct ids of neurons receiving external input.
    pub input_ids: Vec<usize>,
    /// Sorted, distinct ids of neurons projected to the readout.
    pub output_ids: Vec<usize>,
}

impl NetworkTopology {
    pub fn validate(&self) -> Result<()> {
        if self.neurons.len() != self.neuron_count {
            return Err(Error::config(format!(
                "neuron list length {} != neuron_count {}",
                self.neurons.len(),
                self.neuron_count
            )));
        }
        for p in &self.neurons {
            p.validate()?;
        }
        if self.input_ids.is_empty() || self.output_ids.is_empty() {
            return Err(Error::config("input_ids and output_ids must be nonempty".to_string()));
        }
        let inputs: HashSet<usize> = self.input_ids.iter().copied().collect();
        let outputs: HashSet<usize> = self.output_ids.iter().copied().collect();
        if inputs.len() != self.input_ids.len() || outputs.len() != self.output_ids.len() {
            return Err(Error::config("duplicate ids in input_ids or output_ids".to_string()));
        }
        if !inputs.is_disjoint(&outputs) {
            return Err(Error::config("input_ids and output_ids overlap".to_string()));
        }
        for &id in inputs.iter().chain(outputs.iter()) {
            if id >= self.neuron_count {
                return Err(Error::config(format!("neuron id {} out of range", id)));
            }
        }
        let mut seen = HashSet::new();
        for s in &self.synapses {
            if s.pre == s.post {
                return Err(Error::config(format!("self-loop synapse on neuron {}", s.pre)));
            }
            if s.pre >= self.neuron_count || s.post >= self.neuron_count {
                return Err(Error::config(format!("synapse ({}, {}) out of range", s.pre, s.post)));
            }
            if !seen.insert((s.pre, s.post)) {
                return Err(Error::config(format!("duplicate synapse ({}, {})", s.pre, s.post)));
            }
            s.params.validate()?;
        }
        Ok(())
    }
}

/// One distribution family for a scalar parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistFamily {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Parameters of the underlying normal (location `mu`, scale `sigma`).
    Lognormal { mu: f64, sigma: f64 },
    Gamma { shape: f64, scale: f64 },
}

/// Distribution plus optional clamp range applied after sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamDist {
    #[serde(flatten)]
    pub dist: DistFamily,
    #[serde(default)]
    pub clamp_min: Option<f64>,
    #[serde(default)]
    pub clamp_max: Option<f64>,
}

impl ParamDist {
    pub fn constant(value: f64) -> Self {
        ParamDist {
            dist: DistFamily::Constant { value },
            clamp_min: None,
            clamp_max: None,
        }
    }

    pub fn uniform(low: f64, high: f64) -> Self {
        ParamDist {
            dist: DistFamily::Uniform { low, high },
            clamp_min: None,
            clamp_max: None,
        }
    }

    fn clamped(&self, x: f64) -> f64 {
        let mut x = x;
        if let Some(lo) = self.clamp_min {
            x = x.max(lo);
        }
        if let Some(hi) = self.clamp_max {
            x = x.min(hi);
        }
        x
    }

    /// Sample one value; errors name `field` so the caller can surface which
    /// configuration entry was invalid.
    pub fn sample(&self, rng: &mut impl Rng, field: &str) -> Result<f64> {
        let raw = match self.dist {
            DistFamily::Constant { value } => value,
            DistFamily::Uniform { low, high } => {
                if !(low <= high) {
                    return Err(Error::config(format!("{}: uniform low {} > high {}", field, low, high)));
                }
                if low == high {
                    low
                } else {
                    Uniform::new(low, high).sample(rng)
                }
            }
            DistFamily::Lognormal { mu, sigma } => LogNormal::new(mu, sigma)
                .map_err(|e| Error::config(format!("{}: lognormal({}, {}): {}", field, mu, sigma, e)))?
                .sample(rng),
            DistFamily::Gamma { shape, scale } => Gamma::new(shape, scale)
                .map_err(|e| Error::config(format!("{}: gamma({}, {}): {}", field, shape, scale, e)))?
                .sample(rng),
        };
        Ok(self.clamped(raw))
    }
}

/// Distribution specs for every heterogeneous parameter plus the shared
/// constants and wiring settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityConfig {
    pub tau_m: ParamDist,
    pub v_th: ParamDist,
    pub tau_plus: ParamDist,
    pub tau_minus: ParamDist,
    pub eta_plus: ParamDist,
    pub eta_minus: ParamDist,
    pub v_rest: f64,
    pub v_reset: f64,
    pub t_ref: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Erdős–Rényi wiring probability, in (0, 1].
    pub connection_probability: f64,
    pub seed: u64,
    /// Optional seed for the wiring stream (edge set and initial weights).
    /// Defaults to `seed`; setting the same value across differently
    /// parameterized models gives them identical connectivity and initial
    /// weights, isolating the learning rule as the only difference.
    #[serde(default)]
    pub wiring_seed: Option<u64>,
}

impl Default for HeterogeneityConfig {
    fn default() -> Self {
        HeterogeneityConfig {
            tau_m: ParamDist {
                dist: DistFamily::Lognormal { mu: 3.0, sigma: 0.3 },
                clamp_min: Some(5.0),
                clamp_max: Some(60.0),
            },
            v_th: ParamDist::uniform(0.9, 1.1),
            tau_plus: ParamDist {
                dist: DistFamily::Gamma { shape: 4.0, scale: 5.0 },
                clamp_min: Some(5.0),
                clamp_max: Some(60.0),
            },
            tau_minus: ParamDist {
                dist: DistFamily::Gamma { shape: 4.0, scale: 5.0 },
                clamp_min: Some(5.0),
                clamp_max: Some(60.0),
            },
            eta_plus: ParamDist {
                dist: DistFamily::Gamma { shape: 2.0, scale: 0.005 },
                clamp_min: Some(1e-4),
                clamp_max: Some(0.05),
            },
            eta_minus: ParamDist {
                dist: DistFamily::Gamma { shape: 2.0, scale: 0.005 },
                clamp_min: Some(1e-4),
                clamp_max: Some(0.05),
            },
            v_rest: 0.0,
            v_reset: 0.0,
            t_ref: 2.0,
            w_min: 0.0,
            w_max: 1.0,
            connection_probability: 0.2,
            seed: 0,
            wiring_seed: None,
        }
    }
}

impl HeterogeneityConfig {
    /// Degenerate configuration where every distribution is constant: the
    /// homogeneous (MRSNN) model.
    pub fn homogeneous(seed: u64) -> Self {
        HeterogeneityConfig {
            tau_m: ParamDist::constant(20.0),
            v_th: ParamDist::constant(1.0),
            tau_plus: ParamDist::constant(20.0),
            tau_minus: ParamDist::constant(20.0),
            eta_plus: ParamDist::constant(0.01),
            eta_minus: ParamDist::constant(0.01),
            seed,
            ..HeterogeneityConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.connection_probability > 0.0 && self.connection_probability <= 1.0) {
            return Err(Error::config(format!(
                "connection_probability must be in (0, 1], got {}",
                self.connection_probability
            )));
        }
        if !(self.w_min <= self.w_max) {
            return Err(Error::config(format!(
                "w_min {} must not exceed w_max {}",
                self.w_min, self.w_max
            )));
        }
        Ok(())
    }
}

/// Draw `n` neuron parameter records from the configured distributions.
///
/// Identical `(cfg, seed)` yields identical output.
pub fn sample_params(cfg: &HeterogeneityConfig, n: usize, seed: u64) -> Result<Vec<NeuronParams>> {
    if n < 1 {
        return Err(Error::input("sample_params requires n >= 1".to_string()));
    }
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let p = NeuronParams {
            tau_m: cfg.tau_m.sample(&mut rng, "tau_m")?,
            v_th: cfg.v_th.sample(&mut rng, "v_th")?,
            v_rest: cfg.v_rest,
            v_reset: cfg.v_reset,
            t_ref: cfg.t_ref,
        };
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

fn sample_synapse_params(
    cfg: &HeterogeneityConfig,
    wiring_rng: &mut impl Rng,
    param_rng: &mut impl Rng,
    plastic: bool,
) -> Result<SynapseParams> {
    let weight = if cfg.w_min == cfg.w_max {
        cfg.w_min
    } else {
        wiring_rng.gen_range(cfg.w_min..cfg.w_max)
    };
    let p = SynapseParams {
        weight,
        tau_plus: cfg.tau_plus.sample(param_rng, "tau_plus")?,
        tau_minus: cfg.tau_minus.sample(param_rng, "tau_minus")?,
        eta_plus: cfg.eta_plus.sample(param_rng, "eta_plus")?,
        eta_minus: cfg.eta_minus.sample(param_rng, "eta_minus")?,
        w_min: cfg.w_min,
        w_max: cfg.w_max,
        plastic,
    };
    p.validate()?;
    Ok(p)
}

/// Build an Erdős–Rényi wired network. Input and output neurons take part in
/// the recurrent wiring; wiring and all parameters are deterministic given
/// `cfg.seed`.
pub fn build_network(
    cfg: &HeterogeneityConfig,
    neuron_count: usize,
    input_ids: &[usize],
    output_ids: &[usize],
) -> Result<NetworkTopology> {
    cfg.validate()?;
    let inputs: HashSet<usize> = input_ids.iter().copied().collect();
    let outputs: HashSet<usize> = output_ids.iter().copied().collect();
    if !inputs.is_disjoint(&outputs) {
        return Err(Error::config("input_ids and output_ids overlap".to_string()));
    }
    if neuron_count < input_ids.len() + output_ids.len() {
        return Err(Error::config(format!(
            "neuron_count {} smaller than |inputs| + |outputs| = {}",
            neuron_count,
            input_ids.len() + output_ids.len()
        )));
    }
    let neurons = sample_params(cfg, neuron_count, cfg.seed)?;

    // Separate streams: the wiring stream decides the edge set and initial
    // weights; the parameter stream draws per-synapse STDP constants. Keeping
    // them apart makes the edge set a function of `wiring_seed` alone, no
    // matter how many draws the parameter distributions consume.
    let wiring_key = cfg.wiring_seed.unwrap_or(cfg.seed);
    let mut wiring_rng = ChaCha8Rng::seed_from_u64(wiring_key.wrapping_add(0x9e3779b97f4a7c15));
    let mut param_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x517cc1b727220a95));
    let mut synapses = Vec::new();
    for pre in 0..neuron_count {
        for post in 0..neuron_count {
            if pre == post {
                continue;
            }
            if cfg.connection_probability >= 1.0
                || wiring_rng.gen::<f64>() < cfg.connection_probability
            {
                synapses.push(Synapse {
                    pre,
                    post,
                    params: sample_synapse_params(cfg, &mut wiring_rng, &mut param_rng, true)?,
                });
            }
        }
    }

    let mut input_ids = input_ids.to_vec();
    let mut output_ids = output_ids.to_vec();
    input_ids.sort_unstable();
    output_ids.sort_unstable();
    let net = NetworkTopology {
        neuron_count,
        neurons,
        synapses,
        input_ids,
        output_ids,
    };
    net.validate()?;
    Ok(net)
}

/// Versioned on-disk network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub version: u32,
    pub neuron_count: usize,
    pub neurons: Vec<NeuronParams>,
    pub synapses: Vec<Synapse>,
    pub input_ids: Vec<usize>,
    pub output_ids: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_echo: Option<HeterogeneityConfig>,
}

impl NetworkDocument {
    pub fn new(net: &NetworkTopology, config_echo: Option<HeterogeneityConfig>) -> Self {
        NetworkDocument {
            version: NETWORK_FORMAT_VERSION,
            neuron_count: net.neuron_count,
            neurons: net.neurons.clone(),
            synapses: net.synapses.clone(),
            input_ids: net.input_ids.clone(),
            output_ids: net.output_ids.clone(),
            config_echo,
        }
    }

    pub fn into_topology(self) -> Result<NetworkTopology> {
        let net = NetworkTopology {
            neuron_count: self.neuron_count,
            neurons: self.neurons,
            synapses: self.synapses,
            input_ids: self.input_ids,
            output_ids: self.output_ids,
        };
        net.validate()?;
        Ok(net)
    }
}

pub fn save_network(
    net: &NetworkTopology,
    config_echo: Option<HeterogeneityConfig>,
    path: &Path,
) -> Result<()> {
    let doc = NetworkDocument::new(net, config_echo);
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<(NetworkTopology, Option<HeterogeneityConfig>)> {
    let text = std::fs::read_to_string(path)?;
    let doc: NetworkDocument = serde_json::from_str(&text)?;
    if doc.version != NETWORK_FORMAT_VERSION {
        return Err(Error::config(format!(
            "unsupported network format version {}",
            doc.version
        )));
    }
    let echo = doc.config_echo.clone();
    Ok((doc.into_topology()?, echo))
}

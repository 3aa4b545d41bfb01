//! Discrete-time LIF simulation with exponential-Euler integration.
//!
//! The membrane update per step is
//! `v <- v_rest + (v - v_rest) * exp(-dt/tau_m) + I * (1 - exp(-dt/tau_m))`,
//! with the threshold checked at step end. Synaptic transmission is a
//! delta-current pulse added to the post-synaptic accumulator at the step
//! after the pre-synaptic spike; external input spikes are delivered at the
//! step containing their timestamp.

use crate::error::{Error, Result};
use crate::net_graph::NetworkTopology;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Strictly increasing spike times (ms) of one neuron over a bounded window.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub times: Vec<f64>,
}

impl SpikeTrain {
    pub fn new(times: Vec<f64>) -> Self {
        SpikeTrain { times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        for (i, &t) in self.times.iter().enumerate() {
            if t < 0.0 || t >= duration {
                return Err(Error::input(format!(
                    "spike time {} outside [0, {})",
                    t, duration
                )));
            }
            if i > 0 && t <= self.times[i - 1] {
                return Err(Error::input(format!(
                    "spike times not strictly increasing at index {}",
                    i
                )));
            }
        }
        Ok(())
    }
}

/// Per-neuron spike trains over a simulation window.
///
/// `dt` records the simulation step that produced the raster; 0 marks
/// continuous (event-time) rasters such as Poisson encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRaster {
    pub duration: f64,
    pub dt: f64,
    pub trains: Vec<SpikeTrain>,
}

impl SpikeRaster {
    pub fn empty(neuron_count: usize, duration: f64, dt: f64) -> Self {
        SpikeRaster {
            duration,
            dt,
            trains: vec![SpikeTrain::default(); neuron_count],
        }
    }

    pub fn neuron_count(&self) -> usize {
        self.trains.len()
    }

    pub fn total_spikes(&self) -> usize {
        self.trains.iter().map(|t| t.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for train in &self.trains {
            train.validate(self.duration)?;
        }
        Ok(())
    }
}

/// Simulation window settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Step size (ms).
    pub dt: f64,
    /// Window length (ms).
    pub duration: f64,
    /// Optional per-neuron constant bias current; empty means zero.
    #[serde(default)]
    pub bias: Vec<f64>,
}

impl SimConfig {
    pub fn new(dt: f64, duration: f64) -> Self {
        SimConfig { dt, duration, bias: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::input(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.duration > 0.0) {
            return Err(Error::input(format!("duration must be > 0, got {}", self.duration)));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

/// Encode a feature vector as independent Poisson spike trains, neuron `i`
/// firing at `features[i] * max_rate` Hz. Deterministic given `seed`.
pub fn rate_encode(
    features: &[f64],
    duration: f64,
    max_rate: f64,
    seed: u64,
) -> Result<SpikeRaster> {
    if !(max_rate > 0.0) {
        return Err(Error::input(format!("max_rate must be > 0, got {}", max_rate)));
    }
    for (i, &f) in features.iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::input(format!(
                "feature[{}] = {} outside [0, 1]",
                i, f
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trains = Vec::with_capacity(features.len());
    for &f in features {
        let rate_per_ms = f * max_rate / 1000.0;
        let mut times = Vec::new();
        if rate_per_ms > 0.0 {
            let exp = Exp::new(rate_per_ms)
                .map_err(|e| Error::input(format!("invalid rate: {}", e)))?;
            let mut t = exp.sample(&mut rng);
            while t < duration {
                times.push(t);
                t += exp.sample(&mut rng);
            }
        }
        trains.push(SpikeTrain::new(times));
    }
    Ok(SpikeRaster { duration, dt: 0.0, trains })
}

/// Stepwise LIF engine shared by the plain simulator, the STDP trainer, and
/// the BPTT trainer's forward pass. Weights live in the engine so plasticity
/// can mutate them online.
pub struct SimEngine {
    pub dt: f64,
    /// Per-synapse weights, indexed like `net.synapses`.
    pub weights: Vec<f64>,
    /// Outgoing synapse indices per neuron.
    pub out_synapses: Vec<Vec<usize>>,
    /// Incoming synapse indices per neuron.
    pub in_synapses: Vec<Vec<usize>>,
    v: Vec<f64>,
    refrac: Vec<f64>,
    /// Current pulses scheduled for the next step (recurrent deliveries).
    pending: Vec<f64>,
    decay: Vec<f64>,
    v_rest: Vec<f64>,
    v_reset: Vec<f64>,
    v_th: Vec<f64>,
    t_ref: Vec<f64>,
    bias: Vec<f64>,
    post_of: Vec<usize>,
    step_index: usize,
}

impl SimEngine {
    pub fn new(net: &NetworkTopology, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        net.validate()?;
        let n = net.neuron_count;
        if !cfg.bias.is_empty() && cfg.bias.len() != n {
            return Err(Error::input(format!(
                "bias length {} != neuron count {}",
                cfg.bias.len(),
                n
            )));
        }
        let min_tau = net
            .neurons
            .iter()
            .map(|p| p.tau_m)
            .fold(f64::INFINITY, f64::min);
        if cfg.dt > min_tau / 5.0 {
            eprintln!(
                "warning: dt = {} ms exceeds min tau_m / 5 = {} ms; integration may be coarse",
                cfg.dt,
                min_tau / 5.0
            );
        }
        let mut out_synapses = vec![Vec::new(); n];
        let mut in_synapses = vec![Vec::new(); n];
        for (idx, s) in net.synapses.iter().enumerate() {
            out_synapses[s.pre].push(idx);
            in_synapses[s.post].push(idx);
        }
        Ok(SimEngine {
            dt: cfg.dt,
            weights: net.synapses.iter().map(|s| s.params.weight).collect(),
            out_synapses,
            in_synapses,
            v: net.neurons.iter().map(|p| p.v_rest).collect(),
            refrac: vec![0.0; n],
            pending: vec![0.0; n],
            decay: net.neurons.iter().map(|p| (-cfg.dt / p.tau_m).exp()).collect(),
            v_rest: net.neurons.iter().map(|p| p.v_rest).collect(),
            v_reset: net.neurons.iter().map(|p| p.v_reset).collect(),
            v_th: net.neurons.iter().map(|p| p.v_th).collect(),
            t_ref: net.neurons.iter().map(|p| p.t_ref).collect(),
            bias: if cfg.bias.is_empty() { vec![0.0; n] } else { cfg.bias.clone() },
            post_of: net.synapses.iter().map(|s| s.post).collect(),
            step_index: 0,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.v.len()
    }

    /// Simultaneous borrows of the synapse index lists and the mutable
    /// weights, for plasticity rules that update weights mid-run.
    pub fn split_plasticity(&mut self) -> (&[Vec<usize>], &[Vec<usize>], &mut [f64]) {
        (&self.out_synapses, &self.in_synapses, &mut self.weights)
    }

    /// Time at the start of the current (not yet executed) step.
    pub fn now(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn membrane(&self, neuron: usize) -> f64 {
        self.v[neuron]
    }

    /// Advance one step. `external` holds per-neuron current pulses delivered
    /// this step (in addition to bias and pending recurrent pulses). Returns
    /// the ids of neurons that spiked, ascending.
    pub fn step(&mut self, external: &[(usize, f64)]) -> Vec<usize> {
        self.step_inner(external, None)
    }

    /// Like [`step`](Self::step) but records the per-neuron state a gradient
    /// pass needs: the post-integration (pre-reset) potential, the spike
    /// flags, and whether the neuron sat out the step in refractory.
    pub fn step_traced(&mut self, external: &[(usize, f64)], trace: &mut StepTrace) -> Vec<usize> {
        self.step_inner(external, Some(trace))
    }

    fn step_inner(&mut self, external: &[(usize, f64)], trace: Option<&mut StepTrace>) -> Vec<usize> {
        let n = self.v.len();
        let mut current = std::mem::replace(&mut self.pending, vec![0.0; n]);
        for &(id, amount) in external {
            current[id] += amount;
        }
        let mut trace = trace;
        if let Some(tr) = trace.as_deref_mut() {
            tr.reset(n);
        }
        let mut spikes = Vec::new();
        for i in 0..n {
            if self.refrac[i] > 0.0 {
                // Clamped at reset during the refractory countdown; input dropped.
                self.v[i] = self.v_reset[i];
                self.refrac[i] -= self.dt;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.refractory[i] = true;
                    tr.v_pre[i] = self.v[i];
                }
                continue;
            }
            let i_total = current[i] + self.bias[i];
            let a = self.decay[i];
            self.v[i] = self.v_rest[i] + (self.v[i] - self.v_rest[i]) * a + i_total * (1.0 - a);
            if let Some(tr) = trace.as_deref_mut() {
                tr.v_pre[i] = self.v[i];
            }
            if self.v[i] >= self.v_th[i] {
                spikes.push(i);
                self.v[i] = self.v_reset[i];
                self.refrac[i] = self.t_ref[i];
                if let Some(tr) = trace.as_deref_mut() {
                    tr.spiked[i] = true;
                }
            }
        }
        for &i in &spikes {
            for &syn in &self.out_synapses[i] {
                self.pending[self.post_of[syn]] += self.weights[syn];
            }
        }
        self.step_index += 1;
        spikes
    }
}

/// Per-step record of the quantities a backward pass reads.
#[derive(Debug, Clone, Default)]
pub struct StepTrace {
    /// Potential after integration, before any reset.
    pub v_pre: Vec<f64>,
    pub spiked: Vec<bool>,
    /// True when the neuron skipped integration this step.
    pub refractory: Vec<bool>,
}

impl StepTrace {
    fn reset(&mut self, n: usize) {
        self.v_pre.clear();
        self.v_pre.resize(n, 0.0);
        self.spiked.clear();
        self.spiked.resize(n, false);
        self.refractory.clear();
        self.refractory.resize(n, false);
    }
}

/// Bin external input spikes into per-step current pulses on the input
/// neurons. Channel `k` of the raster drives `net.input_ids[k]` with weight
/// `input_weights[k]`.
pub fn bin_input_pulses(
    net: &NetworkTopology,
    input: &SpikeRaster,
    input_weights: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<Vec<(usize, f64)>>> {
    if input.trains.len() != net.input_ids.len() {
        return Err(Error::input(format!(
            "input raster has {} trains but network has {} input neurons",
            input.trains.len(),
            net.input_ids.len()
        )));
    }
    if input_weights.len() != net.input_ids.len() {
        return Err(Error::input(format!(
            "input_weights length {} != input neuron count {}",
            input_weights.len(),
            net.input_ids.len()
        )));
    }
    let steps = cfg.steps();
    let mut pulses: Vec<Vec<(usize, f64)>> = vec![Vec::new(); steps];
    for (k, train) in input.trains.iter().enumerate() {
        let neuron = net.input_ids[k];
        let w = input_weights[k];
        for &t in &train.times {
            let step = (t / cfg.dt).floor() as usize;
            if step < steps {
                pulses[step].push((neuron, w));
            }
        }
    }
    Ok(pulses)
}

/// Run a plain (plasticity-off) simulation and collect the spike raster.
pub fn simulate(
    net: &NetworkTopology,
    input: &SpikeRaster,
    input_weights: &[f64],
    cfg: &SimConfig,
) -> Result<SpikeRaster> {
    let pulses = bin_input_pulses(net, input, input_weights, cfg)?;
    let mut engine = SimEngine::new(net, cfg)?;
    let mut raster = SpikeRaster::empty(net.neuron_count, cfg.duration, cfg.dt);
    for step_pulses in &pulses {
        let t = engine.now();
        for id in engine.step(step_pulses) {
            raster.trains[id].times.push(t);
        }
    }
    Ok(raster)
}

/// Per-neuron firing rates (Hz) over the window `[t0, t1)`.
pub fn readout_rates(raster: &SpikeRaster, window: (f64, f64)) -> Result<Vec<f64>> {
    let (t0, t1) = window;
    if !(0.0 <= t0 && t0 < t1 && t1 <= raster.duration) {
        return Err(Error::input(format!(
            "window [{}, {}) invalid for duration {}",
            t0, t1, raster.duration
        )));
    }
    Ok(raster
        .trains
        .iter()
        .map(|train| {
            let count = train.times.iter().filter(|&&t| t >= t0 && t < t1).count();
            count as f64 / (t1 - t0) * 1000.0
        })
        .collect())
}

/// Sidecar metadata stored next to a raster CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterMeta {
    pub duration: f64,
    pub dt: f64,
    pub neuron_count: usize,
}

/// Print a time with at least six decimal places while keeping the full
/// round-trip representation.
fn fmt_time(t: f64) -> String {
    let s = format!("{}", t);
    if s.contains('e') || s.contains('E') {
        return format!("{:.30}", t);
    }
    match s.find('.') {
        None => format!("{}.000000", s),
        Some(pos) => {
            let decimals = s.len() - pos - 1;
            if decimals >= 6 {
                s
            } else {
                format!("{}{}", s, "0".repeat(6 - decimals))
            }
        }
    }
}

/// Write a raster as `neuron_id,time_ms` CSV (sorted by neuron then time)
/// plus a JSON sidecar with `{duration, dt, neuron_count}`.
pub fn save_raster_csv(raster: &SpikeRaster, csv_path: &Path, sidecar_path: &Path) -> Result<()> {
    let mut out = String::from("neuron_id,time_ms\n");
    for (id, train) in raster.trains.iter().enumerate() {
        for &t in &train.times {
            out.push_str(&format!("{},{}\n", id, fmt_time(t)));
        }
    }
    std::fs::write(csv_path, out)?;
    let meta = RasterMeta {
        duration: raster.duration,
        dt: raster.dt,
        neuron_count: raster.neuron_count(),
    };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

/// Load a raster CSV and its sidecar, validating all train invariants.
/// Errors carry the offending 1-based line number.
pub fn load_raster_csv(csv_path: &Path, sidecar_path: &Path) -> Result<SpikeRaster> {
    let meta: RasterMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let text = std::fs::read_to_string(csv_path)?;
    let mut raster = SpikeRaster::empty(meta.neuron_count, meta.duration, meta.dt);
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        if lineno == 1 {
            if line.trim() != "neuron_id,time_ms" {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!("expected header `neuron_id,time_ms`, got `{}`", line),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let id: usize = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "bad neuron_id".to_string(),
            })?;
        let t: f64 = parts
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                line: lineno,
                msg: "bad time_ms".to_string(),
            })?;
        if id >= meta.neuron_count {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("neuron_id {} >= neuron_count {}", id, meta.neuron_count),
            });
        }
        if t < 0.0 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("negative time {}", t),
            });
        }
        if t >= meta.duration {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("time {} >= declared duration {}", t, meta.duration),
            });
        }
        let train = &mut raster.trains[id];
        if let Some(&last) = train.times.last() {
            if t <= last {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("times for neuron {} not strictly increasing", id),
                });
            }
        }
        train.times.push(t);
    }
    Ok(raster)
}

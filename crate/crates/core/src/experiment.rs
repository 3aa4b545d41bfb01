//! Experiment orchestration: dataset synthesis/ingestion, training of the
//! three model families (heterogeneous STDP, homogeneous STDP, surrogate
//! BPTT), response collection on shared stimuli, divergence comparison, and
//! artifact persistence.

use crate::dual_rep::{extract_layers, LayerAssignment};
use crate::error::{Error, Result};
use crate::lif_sim::{
    load_raster_csv, rate_encode, readout_rates, save_raster_csv, simulate, RasterMeta,
    SimConfig, SpikeRaster, SpikeTrain,
};
use crate::net_graph::{build_network, save_network, HeterogeneityConfig, NetworkTopology};
use crate::plasticity::{train_unsupervised_rasters, TrainingLog, UnsupervisedConfig};
use crate::rtd::{rtd_score, RtdReport};
use crate::spike_metrics::{distance_matrix, DistanceMatrix, DistanceMatrixMeta};
use crate::surrogate_trainer::{
    softmax, train_bptt, write_curve_csv, BpttOutcome, LabeledRaster, Readout, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SyntheticSpatial,
    SyntheticTemporal,
    SpikeCsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub classes: usize,
    pub samples_per_class: usize,
    /// Input channels (temporal) or feature dimension (spatial).
    pub channels: usize,
    pub duration: f64,
    pub spikes_per_channel: usize,
    /// Std-dev (ms) of the truncated Gaussian timing jitter.
    pub jitter: f64,
    pub drop_rate: f64,
    pub add_rate: f64,
    /// Gaussian noise std-dev for the spatial prototypes.
    pub noise: f64,
    /// Manifest path for `spike_csv` datasets.
    pub path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            kind: DatasetKind::SyntheticTemporal,
            classes: 2,
            samples_per_class: 12,
            channels: 8,
            duration: 100.0,
            spikes_per_channel: 4,
            jitter: 1.0,
            drop_rate: 0.0,
            add_rate: 0.0,
            noise: 0.05,
            path: None,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    pub neuron_count: usize,
    /// Number of readout-layer (L5) neurons, taken from the top of the id
    /// range.
    pub output_count: usize,
    /// Upper synaptic bound; at dt = 1, tau = 20 a pulse of weight w moves
    /// the membrane by about w / 20.
    pub w_max: f64,
    pub hrsnn: bool,
    pub mrsnn: bool,
    pub bprsnn: bool,
    pub hrsnn_seed: u64,
    pub mrsnn_seed: u64,
    pub bprsnn_seed: u64,
    /// Shared connectivity/initial-weight seed so every model starts from
    /// the same graph and the comparison isolates the learning rule.
    pub wiring_seed: u64,
    pub stdp_epochs: usize,
    pub bp_epochs: usize,
    pub bp_learning_rate: f64,
    pub bp_batch_size: usize,
    pub bp_momentum: f64,
    pub bp_truncation: usize,
    pub bp_surrogate_beta: f64,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            neuron_count: 64,
            output_count: 8,
            w_max: 10.0,
            hrsnn: true,
            mrsnn: true,
            bprsnn: true,
            hrsnn_seed: 11,
            mrsnn_seed: 12,
            bprsnn_seed: 13,
            wiring_seed: 7,
            stdp_epochs: 3,
            bp_epochs: 20,
            bp_learning_rate: 0.5,
            bp_batch_size: 8,
            bp_momentum: 0.9,
            bp_truncation: 50,
            bp_surrogate_beta: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub dt: f64,
    pub duration: f64,
    /// Peak Poisson rate (Hz) for encoding spatial feature vectors.
    pub max_rate: f64,
    pub input_weight: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        // At dt = 1, tau = 20 a pulse moves the membrane by w(1 - e^{-dt/tau})
        // ~= w/20.5, so 22.0 lets a single input spike fire its channel and
        // timing information survives the encoding.
        SimulationConfig { dt: 1.0, duration: 100.0, max_rate: 100.0, input_weight: 22.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub layers: Vec<String>,
    pub bottleneck_fraction: f64,
    pub band_fraction: f64,
    pub bin_width: f64,
    /// Held-out stimuli shared by every model.
    pub holdout: usize,
    /// Transport cost charged when exactly one train of a pair is empty;
    /// defaults to the window duration.
    pub empty_penalty: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            layers: vec!["L3".to_string(), "L5".to_string()],
            bottleneck_fraction: 0.1,
            band_fraction: 0.1,
            bin_width: 10.0,
            holdout: 100,
            empty_penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub neuron_counts: Vec<usize>,
    pub track_epochs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { neuron_counts: vec![40, 64], track_epochs: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub run_name: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("runs"), run_name: "run".to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub models: ModelsConfig,
    pub simulation: SimulationConfig,
    pub analysis: AnalysisConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {}", path.display(), e)))?;
        let cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Rebase every stochastic component on one master seed.
    pub fn override_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.models.hrsnn_seed = seed.wrapping_add(1);
        self.models.mrsnn_seed = seed.wrapping_add(2);
        self.models.bprsnn_seed = seed.wrapping_add(3);
        self.models.wiring_seed = seed.wrapping_add(4);
    }

    pub fn empty_penalty(&self) -> f64 {
        self.analysis.empty_penalty.unwrap_or(self.simulation.duration)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.classes < 2 {
            return Err(Error::config(format!("need >= 2 classes, got {}", d.classes)));
        }
        if d.channels == 0 || d.samples_per_class == 0 {
            return Err(Error::config("channels and samples_per_class must be > 0".to_string()));
        }
        if d.jitter < 0.0 || d.noise < 0.0 || d.drop_rate < 0.0 || d.add_rate < 0.0 {
            return Err(Error::config("jitter/noise/drop_rate/add_rate must be >= 0".to_string()));
        }
        if d.kind == DatasetKind::SpikeCsv && d.path.is_none() {
            return Err(Error::config("spike_csv dataset needs dataset.path".to_string()));
        }
        let m = &self.models;
        if m.neuron_count < d.channels + m.output_count {
            return Err(Error::config(format!(
                "neuron_count {} too small for {} inputs + {} outputs",
                m.neuron_count, d.channels, m.output_count
            )));
        }
        if !(m.hrsnn || m.mrsnn || m.bprsnn) {
            return Err(Error::config("no models enabled".to_string()));
        }
        if self.simulation.duration + 1e-9 < d.duration {
            return Err(Error::config(format!(
                "simulation duration {} shorter than dataset duration {}",
                self.simulation.duration, d.duration
            )));
        }
        for layer in &self.analysis.layers {
            if !matches!(layer.as_str(), "L1" | "L2" | "L3" | "L4" | "L5") {
                return Err(Error::config(format!("unknown layer {}", layer)));
            }
        }
        if self.analysis.holdout < 2 {
            return Err(Error::config("analysis.holdout must be >= 2".to_string()));
        }
        self.simulation_config().validate()?;
        Ok(())
    }

    fn simulation_config(&self) -> SimConfig {
        SimConfig::new(self.simulation.dt, self.simulation.duration)
    }

    fn bp_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.models.bp_epochs,
            learning_rate: self.models.bp_learning_rate,
            surrogate_beta: self.models.bp_surrogate_beta,
            truncation_length: self.models.bp_truncation,
            batch_size: self.models.bp_batch_size,
            momentum: self.models.bp_momentum,
            sim: self.simulation_config(),
            input_weight: self.simulation.input_weight,
            snapshot_weights: false,
            seed: self.models.bprsnn_seed,
        }
    }
}

// ---------------------------------------------------------------------------
// Dataset synthesis and ingestion
// ---------------------------------------------------------------------------

/// Spatial surrogate: fixed random prototypes in [0,1]^d plus clipped
/// Gaussian noise.
pub fn gen_synthetic_spatial(
    classes: usize,
    samples_per_class: usize,
    feature_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if classes < 2 {
        return Err(Error::config(format!("need >= 2 classes, got {}", classes)));
    }
    if noise < 0.0 {
        return Err(Error::config(format!("noise must be >= 0, got {}", noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..feature_dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (c, proto) in prototypes.iter().enumerate() {
        for _ in 0..samples_per_class {
            let sample: Vec<f64> = proto
                .iter()
                .map(|&p| {
                    let delta = if noise > 0.0 {
                        rng.gen_range(-1.0..1.0) * noise * 1.7320508075688772 // uniform, matched variance
                    } else {
                        0.0
                    };
                    (p + delta).clamp(0.0, 1.0)
                })
                .collect();
            features.push(sample);
            labels.push(c);
        }
    }
    Ok((features, labels))
}

fn truncated_gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    // Box-Muller, truncated at 2.5 sigma.
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen::<f64>();
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    (z * sigma).clamp(-2.5 * sigma, 2.5 * sigma)
}

/// Temporal surrogate: per-class fixed templates of per-channel spike times
/// with identical per-channel spike counts across classes, so class
/// identity is carried only by timing. Samples perturb each template spike
/// by truncated Gaussian jitter and drop/add spikes at configured rates.
#[allow(clippy::too_many_arguments)]
pub fn gen_synthetic_temporal(
    classes: usize,
    samples_per_class: usize,
    channels: usize,
    duration: f64,
    spikes_per_channel: usize,
    jitter: f64,
    drop_rate: f64,
    add_rate: f64,
    seed: u64,
) -> Result<Vec<LabeledRaster>> {
    if classes < 2 {
        return Err(Error::config(format!("need >= 2 classes, got {}", classes)));
    }
    if jitter < 0.0 {
        return Err(Error::config(format!("jitter must be >= 0, got {}", jitter)));
    }
    let margin = 0.05 * duration;
    let usable = duration - 2.0 * margin;
    if usable < spikes_per_channel as f64 * 2.0 {
        return Err(Error::config(format!(
            "duration {} too short for {} spikes per channel",
            duration, spikes_per_channel
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Templates first so sample count does not shift them. Every class has
    // the same per-channel spike count; classes differ only in temporal
    // dispersion (tight bursts through broadly spread spikes), so class
    // identity is carried purely by timing.
    let min_width = (spikes_per_channel.max(2) as f64 - 1.0) * 1.5;
    let mut templates: Vec<Vec<Vec<f64>>> = Vec::with_capacity(classes);
    for c in 0..classes {
        let frac = 0.1 + 0.75 * c as f64 / (classes - 1) as f64;
        let width = (usable * frac).clamp(min_width.min(usable), usable);
        let mut per_channel = Vec::with_capacity(channels);
        for _ in 0..channels {
            let hi = duration - margin - width;
            let start = if hi > margin { rng.gen_range(margin..hi) } else { margin };
            let times = loop {
                let mut t: Vec<f64> = (0..spikes_per_channel)
                    .map(|_| rng.gen_range(start..start + width))
                    .collect();
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if t.windows(2).all(|w| w[1] - w[0] >= 1.0) {
                    break t;
                }
            };
            per_channel.push(times);
        }
        templates.push(per_channel);
    }

    let mut out = Vec::new();
    for (c, template) in templates.iter().enumerate() {
        for _ in 0..samples_per_class {
            let trains: Vec<SpikeTrain> = template
                .iter()
                .map(|times| {
                    let mut sample: Vec<f64> = Vec::with_capacity(times.len());
                    for &t in times {
                        let jittered = (t + truncated_gaussian(&mut rng, jitter))
                            .clamp(0.0, duration - 1e-6);
                        let dropped = drop_rate > 0.0 && rng.gen::<f64>() < drop_rate;
                        if !dropped {
                            sample.push(jittered);
                        }
                        if add_rate > 0.0 && rng.gen::<f64>() < add_rate {
                            sample.push(rng.gen_range(0.0..duration - 1e-6));
                        }
                    }
                    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    sample.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
                    SpikeTrain::new(sample)
                })
                .collect();
            out.push(LabeledRaster {
                input: SpikeRaster { duration, dt: 0.0, trains },
                label: c,
            });
        }
    }
    Ok(out)
}

/// Dataset-on-disk layout: one raster CSV per sample plus a manifest JSON
/// carrying the shared raster metadata and per-sample labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub duration: f64,
    pub dt: f64,
    pub channels: usize,
    pub classes: usize,
    pub samples: Vec<SampleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub file: String,
    pub label: usize,
}

pub fn write_spike_dataset(
    dir: &Path,
    samples: &[LabeledRaster],
    classes: usize,
) -> Result<PathBuf> {
    if samples.is_empty() {
        return Err(Error::input("empty dataset".to_string()));
    }
    std::fs::create_dir_all(dir)?;
    let first = &samples[0].input;
    let meta = RasterMeta {
        duration: first.duration,
        dt: first.dt,
        neuron_count: first.neuron_count(),
    };
    let meta_path = dir.join("raster_meta.json");
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?)?;
    let mut entries = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let file = format!("sample_{:04}.csv", i);
        save_raster_csv(&s.input, &dir.join(&file), &meta_path)?;
        entries.push(SampleEntry { file, label: s.label });
    }
    let manifest = DatasetManifest {
        duration: first.duration,
        dt: first.dt,
        channels: first.neuron_count(),
        classes,
        samples: entries,
    };
    let manifest_path = dir.join("dataset.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest_path)
}

/// Load a labeled spike dataset from its manifest.
pub fn ingest_spike_csv(manifest_path: &Path) -> Result<(Vec<LabeledRaster>, usize)> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| {
        Error::config(format!("missing dataset manifest {}: {}", manifest_path.display(), e))
    })?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let meta_path = dir.join("raster_meta.json");
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for entry in &manifest.samples {
        if entry.label >= manifest.classes {
            return Err(Error::input(format!(
                "sample {} label {} >= classes {}",
                entry.file, entry.label, manifest.classes
            )));
        }
        let raster = load_raster_csv(&dir.join(&entry.file), &meta_path)?;
        samples.push(LabeledRaster { input: raster, label: entry.label });
    }
    Ok((samples, manifest.classes))
}

/// Training set plus the held-out stimuli shared by every model.
#[derive(Debug, Clone)]
pub struct MaterializedDataset {
    pub train: Vec<LabeledRaster>,
    pub holdout: Vec<LabeledRaster>,
    pub classes: usize,
}

pub fn materialize_dataset(cfg: &ExperimentConfig) -> Result<MaterializedDataset> {
    let d = &cfg.dataset;
    let holdout_per_class = (cfg.analysis.holdout + d.classes - 1) / d.classes;
    let per_class = d.samples_per_class + holdout_per_class;
    let all: Vec<LabeledRaster> = match d.kind {
        DatasetKind::SyntheticTemporal => gen_synthetic_temporal(
            d.classes,
            per_class,
            d.channels,
            d.duration,
            d.spikes_per_channel,
            d.jitter,
            d.drop_rate,
            d.add_rate,
            d.seed,
        )?,
        DatasetKind::SyntheticSpatial => {
            let (features, labels) =
                gen_synthetic_spatial(d.classes, per_class, d.channels, d.noise, d.seed)?;
            features
                .iter()
                .zip(&labels)
                .enumerate()
                .map(|(i, (f, &label))| {
                    let enc_seed = d.seed.wrapping_mul(31).wrapping_add(i as u64);
                    Ok(LabeledRaster {
                        input: rate_encode(f, d.duration, cfg.simulation.max_rate, enc_seed)?,
                        label,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        DatasetKind::SpikeCsv => {
            let path = d.path.as_ref().expect("validated");
            let (samples, classes) = ingest_spike_csv(path)?;
            if classes != d.classes {
                return Err(Error::config(format!(
                    "manifest declares {} classes, config {}",
                    classes, d.classes
                )));
            }
            samples
        }
    };
    // Per class: first samples_per_class to train, the rest held out.
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    let mut taken = vec![0usize; d.classes];
    for s in all {
        let label = s.label;
        if taken[label] < d.samples_per_class {
            train.push(s);
        } else {
            holdout.push(s);
        }
        taken[label] += 1;
    }
    if holdout.len() < 2 {
        return Err(Error::config(format!(
            "dataset too small: only {} held-out samples",
            holdout.len()
        )));
    }
    Ok(MaterializedDataset { train, holdout, classes: d.classes })
}

/// FNV-1a over the bit patterns of all spike times and labels; pins down
/// the shared-stimulus discipline.
pub fn stimulus_hash(stimuli: &[LabeledRaster]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for s in stimuli {
        eat(&(s.label as u64).to_le_bytes());
        for train in &s.input.trains {
            eat(&(train.len() as u64).to_le_bytes());
            for &t in &train.times {
                eat(&t.to_bits().to_le_bytes());
            }
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

fn io_ids(cfg: &ExperimentConfig) -> (Vec<usize>, Vec<usize>) {
    let n = cfg.models.neuron_count;
    let inputs: Vec<usize> = (0..cfg.dataset.channels).collect();
    let outputs: Vec<usize> = (n - cfg.models.output_count..n).collect();
    (inputs, outputs)
}

fn base_network(cfg: &ExperimentConfig, kind: &str) -> Result<NetworkTopology> {
    let (inputs, outputs) = io_ids(cfg);
    let mut net_cfg = match kind {
        "hrsnn" => HeterogeneityConfig {
            w_max: cfg.models.w_max,
            seed: cfg.models.hrsnn_seed,
            ..HeterogeneityConfig::default()
        },
        "mrsnn" => {
            let mut c = HeterogeneityConfig::homogeneous(cfg.models.mrsnn_seed);
            c.w_max = cfg.models.w_max;
            c
        }
        "bprsnn" => {
            let mut c = HeterogeneityConfig::homogeneous(cfg.models.bprsnn_seed);
            c.w_max = cfg.models.w_max;
            c
        }
        other => return Err(Error::config(format!("unknown model kind {}", other))),
    };
    net_cfg.wiring_seed = Some(cfg.models.wiring_seed);
    build_network(&net_cfg, cfg.models.neuron_count, &inputs, &outputs)
}

fn unsupervised_config(cfg: &ExperimentConfig, seed: u64) -> UnsupervisedConfig {
    UnsupervisedConfig {
        epochs: cfg.models.stdp_epochs,
        sim: cfg.simulation_config(),
        max_rate: cfg.simulation.max_rate,
        input_weight: cfg.simulation.input_weight,
        seed,
    }
}

/// A trained model ready for response collection.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub name: String,
    pub net: NetworkTopology,
    pub layers: LayerAssignment,
    /// BPRSNN's jointly trained decoder; STDP models get a probe instead.
    pub readout: Option<Readout>,
    pub stdp_log: Option<TrainingLog>,
    pub bp_outcome: Option<BpttOutcome>,
}

pub fn train_model(
    cfg: &ExperimentConfig,
    kind: &str,
    train: &[LabeledRaster],
    classes: usize,
) -> Result<TrainedModel> {
    let net = base_network(cfg, kind)?;
    let (trained, readout, stdp_log, bp_outcome) = match kind {
        "hrsnn" | "mrsnn" => {
            let seed = if kind == "hrsnn" { cfg.models.hrsnn_seed } else { cfg.models.mrsnn_seed };
            let rasters: Vec<SpikeRaster> = train.iter().map(|s| s.input.clone()).collect();
            let (trained, log) =
                train_unsupervised_rasters(&net, &rasters, &unsupervised_config(cfg, seed))?;
            (trained, None, Some(log), None)
        }
        "bprsnn" => {
            let outcome = train_bptt(&net, train, classes, &cfg.bp_train_config())?;
            (outcome.net.clone(), Some(outcome.readout.clone()), None, Some(outcome))
        }
        other => return Err(Error::config(format!("unknown model kind {}", other))),
    };
    let layers = extract_layers(
        &trained,
        cfg.analysis.bottleneck_fraction,
        cfg.analysis.band_fraction,
    )?;
    Ok(TrainedModel {
        name: kind.to_string(),
        net: trained,
        layers,
        readout,
        stdp_log,
        bp_outcome,
    })
}

/// Plasticity-off responses of a trained network to a stimulus list.
pub fn collect_responses(
    cfg: &ExperimentConfig,
    net: &NetworkTopology,
    stimuli: &[LabeledRaster],
) -> Result<Vec<SpikeRaster>> {
    let input_weights = vec![cfg.simulation.input_weight; net.input_ids.len()];
    let sim = cfg.simulation_config();
    stimuli
        .iter()
        .map(|s| simulate(net, &s.input, &input_weights, &sim))
        .collect()
}

// ---------------------------------------------------------------------------
// Linear probe for STDP models
// ---------------------------------------------------------------------------

/// Deterministic full-batch softmax regression (zero init, fixed epochs).
pub fn fit_logistic(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    epochs: usize,
    lr: f64,
) -> Result<Readout> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::input("probe feature/label size mismatch".to_string()));
    }
    let dim = features[0].len();
    let mut probe = Readout::zeros(classes, dim);
    let scale = 1.0 / features.len() as f64;
    for _ in 0..epochs {
        let mut gw = vec![vec![0.0f64; dim]; classes];
        let mut gb = vec![0.0f64; classes];
        for (x, &y) in features.iter().zip(labels) {
            let probs = softmax(&probe.logits(x));
            for c in 0..classes {
                let d = probs[c] - if c == y { 1.0 } else { 0.0 };
                gb[c] += d;
                for k in 0..dim {
                    gw[c][k] += d * x[k];
                }
            }
        }
        for c in 0..classes {
            probe.bias[c] -= lr * gb[c] * scale;
            for k in 0..dim {
                probe.weights[c][k] -= lr * gw[c][k] * scale;
            }
        }
    }
    Ok(probe)
}

fn rate_features(cfg: &ExperimentConfig, responses: &[SpikeRaster]) -> Result<Vec<Vec<f64>>> {
    responses
        .iter()
        .map(|r| {
            let rates = readout_rates(r, (0.0, cfg.simulation.duration))?;
            // Hz -> spikes/ms keeps logits O(1).
            Ok(rates.iter().map(|h| h / 1000.0).collect())
        })
        .collect()
}

fn probe_accuracy(probe: &Readout, features: &[Vec<f64>], labels: &[usize]) -> f64 {
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| probe.predict(x) == y)
        .count();
    correct as f64 / features.len() as f64
}

// ---------------------------------------------------------------------------
// Comparison report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub model_a: String,
    pub model_b: String,
    pub layer: String,
    pub report: RtdReport,
}

/// Signed held-out accuracy difference, model_a minus model_b.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDelta {
    pub model_a: String,
    pub model_b: String,
    pub signed_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub version: String,
    pub config: ExperimentConfig,
    pub stimulus_hash: String,
    pub accuracies: BTreeMap<String, f64>,
    pub accuracy_deltas: Vec<AccuracyDelta>,
    pub pairs: Vec<PairReport>,
    pub empty_penalty_counts: BTreeMap<String, usize>,
}

impl ComparisonReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn pair(&self, a: &str, b: &str, layer: &str) -> Option<&PairReport> {
        self.pairs.iter().find(|p| {
            p.layer == layer
                && ((p.model_a == a && p.model_b == b) || (p.model_a == b && p.model_b == a))
        })
    }
}

/// Wall-clock metadata kept out of the deterministic report so reruns stay
/// byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub started_unix_s: u64,
    pub wall_time_ms: u128,
    pub artifacts: Vec<String>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let started_unix = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let out_dir = cfg.output.dir.join(&cfg.output.run_name);
    std::fs::create_dir_all(&out_dir)?;
    let mut artifacts: Vec<String> = Vec::new();

    let data = stage("dataset", materialize_dataset(cfg))?;
    let holdout_hash = stimulus_hash(&data.holdout);
    stage(
        "dataset",
        write_spike_dataset(&out_dir.join("stimuli"), &data.holdout, data.classes).map(|_| ()),
    )?;
    artifacts.push("stimuli/dataset.json".to_string());

    let mut kinds = Vec::new();
    if cfg.models.hrsnn {
        kinds.push("hrsnn");
    }
    if cfg.models.mrsnn {
        kinds.push("mrsnn");
    }
    if cfg.models.bprsnn {
        kinds.push("bprsnn");
    }

    let mut models = Vec::new();
    for kind in &kinds {
        let model = stage(
            &format!("train_{}", kind),
            train_model(cfg, kind, &data.train, data.classes),
        )?;
        let net_path = out_dir.join(format!("{}_network.json", kind));
        save_network(&model.net, None, &net_path)?;
        artifacts.push(format!("{}_network.json", kind));
        if let Some(log) = &model.stdp_log {
            let p = out_dir.join(format!("{}_training.csv", kind));
            log.write_csv(&p)?;
            artifacts.push(format!("{}_training.csv", kind));
        }
        if let Some(outcome) = &model.bp_outcome {
            let p = out_dir.join(format!("{}_curve.csv", kind));
            write_curve_csv(&outcome.curve, &p)?;
            artifacts.push(format!("{}_curve.csv", kind));
        }
        models.push(model);
    }

    // Shared-stimulus discipline: every model answers the identical list.
    let mut responses: BTreeMap<String, Vec<SpikeRaster>> = BTreeMap::new();
    for model in &models {
        assert_eq!(stimulus_hash(&data.holdout), holdout_hash, "stimulus list drifted");
        let r = stage(
            &format!("respond_{}", model.name),
            collect_responses(cfg, &model.net, &data.holdout),
        )?;
        responses.insert(model.name.clone(), r);
    }

    // Accuracy per model.
    let holdout_labels: Vec<usize> = data.holdout.iter().map(|s| s.label).collect();
    let mut accuracies = BTreeMap::new();
    for model in &models {
        let acc = if let Some(readout) = &model.readout {
            let feats = stage(
                &format!("accuracy_{}", model.name),
                rate_features(cfg, &responses[&model.name]),
            )?;
            // counts/steps features, matching the decoder's training scale
            let steps = cfg.simulation_config().steps() as f64;
            let feats: Vec<Vec<f64>> = feats
                .iter()
                .map(|f| f.iter().map(|x| x * cfg.simulation.duration / steps).collect())
                .collect();
            probe_accuracy(readout, &feats, &holdout_labels)
        } else {
            let train_responses = stage(
                &format!("accuracy_{}", model.name),
                collect_responses(cfg, &model.net, &data.train),
            )?;
            let train_feats = rate_features(cfg, &train_responses)?;
            let train_labels: Vec<usize> = data.train.iter().map(|s| s.label).collect();
            let probe = fit_logistic(&train_feats, &train_labels, data.classes, 300, 1.0)?;
            let holdout_feats = rate_features(cfg, &responses[&model.name])?;
            probe_accuracy(&probe, &holdout_feats, &holdout_labels)
        };
        accuracies.insert(model.name.clone(), acc);
    }
    let mut accuracy_deltas = Vec::new();
    for i in 0..models.len() {
        for j in (i + 1)..models.len() {
            accuracy_deltas.push(AccuracyDelta {
                model_a: models[i].name.clone(),
                model_b: models[j].name.clone(),
                signed_delta: accuracies[&models[i].name] - accuracies[&models[j].name],
            });
        }
    }

    // Distance matrices per model and layer, then pairwise divergence.
    let penalty = cfg.empty_penalty();
    let mut matrices: BTreeMap<(String, String), DistanceMatrix> = BTreeMap::new();
    let mut empty_penalty_counts = BTreeMap::new();
    for model in &models {
        for layer in &cfg.analysis.layers {
            let ids = model
                .layers
                .layer(layer)
                .ok_or_else(|| Error::config(format!("unknown layer {}", layer)))?;
            let (dm, penalties) = stage(
                &format!("distances_{}_{}", model.name, layer),
                distance_matrix(&responses[&model.name], ids, penalty),
            )?;
            let csv = out_dir.join(format!("dist_{}_{}.csv", model.name, layer));
            dm.write_csv(&csv)?;
            let meta = DistanceMatrixMeta {
                n: dm.n,
                neuron_subset: ids.to_vec(),
                empty_penalty_count: penalties,
            };
            std::fs::write(
                out_dir.join(format!("dist_{}_{}.meta.json", model.name, layer)),
                serde_json::to_string_pretty(&meta)?,
            )?;
            artifacts.push(format!("dist_{}_{}.csv", model.name, layer));
            empty_penalty_counts.insert(format!("{}_{}", model.name, layer), penalties);
            matrices.insert((model.name.clone(), layer.clone()), dm);
        }
    }

    let mut pairs = Vec::new();
    for i in 0..models.len() {
        for j in i..models.len() {
            for layer in &cfg.analysis.layers {
                let a = &matrices[&(models[i].name.clone(), layer.clone())];
                let b = &matrices[&(models[j].name.clone(), layer.clone())];
                let report = stage(
                    "rtd",
                    rtd_score(a, b, &models[i].name, &models[j].name),
                )?;
                report.save(&out_dir.join(format!(
                    "rtd_{}_{}_{}.json",
                    models[i].name, models[j].name, layer
                )))?;
                artifacts.push(format!(
                    "rtd_{}_{}_{}.json",
                    models[i].name, models[j].name, layer
                ));
                pairs.push(PairReport {
                    model_a: models[i].name.clone(),
                    model_b: models[j].name.clone(),
                    layer: layer.clone(),
                    report,
                });
            }
        }
    }

    let report = ComparisonReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        stimulus_hash: format!("{:016x}", holdout_hash),
        accuracies,
        accuracy_deltas,
        pairs,
        empty_penalty_counts,
    };
    report.save(&out_dir.join("report.json"))?;
    artifacts.push("report.json".to_string());

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started_unix,
        wall_time_ms: started.elapsed().as_millis(),
        artifacts,
    };
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

pub fn sweep_neurons(cfg: &ExperimentConfig, counts: &[usize]) -> Result<Vec<(usize, ComparisonReport)>> {
    if counts.is_empty() {
        return Err(Error::config("empty neuron_counts".to_string()));
    }
    for w in counts.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::config("neuron_counts must be strictly ascending".to_string()));
        }
    }
    if counts[0] < 20 {
        return Err(Error::config("neuron counts must be >= 20".to_string()));
    }
    let mut out = Vec::new();
    let base_name = cfg.output.run_name.clone();
    for &count in counts {
        let mut sub = cfg.clone();
        sub.models.neuron_count = count;
        sub.output.run_name = format!("{}_n{}", base_name, count);
        let report = run_experiment(&sub)?;
        out.push((count, report));
    }
    // Long-format CSV over all runs.
    let dir = cfg.output.dir.join(format!("{}_sweep", base_name));
    std::fs::create_dir_all(&dir)?;
    let mut csv = std::io::BufWriter::new(std::fs::File::create(dir.join("sweep.csv"))?);
    writeln!(csv, "count,pair,layer,rtd")?;
    for (count, report) in &out {
        for p in &report.pairs {
            writeln!(csv, "{},{}-{},{},{}", count, p.model_a, p.model_b, p.layer, p.report.rtd)?;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub epoch: usize,
    pub bp_accuracy: f64,
    pub rtd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackTrace {
    pub rows: Vec<TrackRow>,
    /// rtd of the epoch-0 snapshot against itself; must be 0.
    pub self_control_rtd: f64,
}

/// Epoch-wise divergence of the BPRSNN bottleneck representation from a
/// fully trained HRSNN reference, on shared stimuli.
pub fn track_epochs(cfg: &ExperimentConfig, epochs: usize) -> Result<TrackTrace> {
    cfg.validate()?;
    if epochs == 0 {
        return Err(Error::config("track epochs must be >= 1".to_string()));
    }
    let out_dir = cfg.output.dir.join(format!("{}_track", cfg.output.run_name));
    std::fs::create_dir_all(&out_dir)?;
    let data = stage("dataset", materialize_dataset(cfg))?;
    let penalty = cfg.empty_penalty();

    let hrsnn = stage("train_hrsnn", train_model(cfg, "hrsnn", &data.train, data.classes))?;
    let h_responses = stage(
        "respond_hrsnn",
        collect_responses(cfg, &hrsnn.net, &data.holdout),
    )?;
    let (h_dm, _) = stage(
        "distances_hrsnn_L3",
        distance_matrix(&h_responses, &hrsnn.layers.l3, penalty),
    )?;

    let mut bp_cfg = cfg.bp_train_config();
    bp_cfg.epochs = epochs;
    bp_cfg.snapshot_weights = true;
    let bp_init = base_network(cfg, "bprsnn")?;
    let outcome = stage("train_bprsnn", train_bptt(&bp_init, &data.train, data.classes, &bp_cfg))?;
    if outcome.snapshots.len() != epochs + 1 {
        return Err(Error::input(format!(
            "expected {} snapshots, got {}",
            epochs + 1,
            outcome.snapshots.len()
        ))
        .in_stage("track"));
    }
    // Topology is fixed across snapshots, so the layer assignment is too.
    let bp_layers = extract_layers(
        &bp_init,
        cfg.analysis.bottleneck_fraction,
        cfg.analysis.band_fraction,
    )?;

    let snapshot_dm = |weights: &[f64]| -> Result<DistanceMatrix> {
        let mut net = bp_init.clone();
        for (s, &w) in net.synapses.iter_mut().zip(weights) {
            s.params.weight = w;
        }
        let responses = collect_responses(cfg, &net, &data.holdout)?;
        Ok(distance_matrix(&responses, &bp_layers.l3, penalty)?.0)
    };

    let dm0 = stage("track", snapshot_dm(&outcome.snapshots[0].synapse_weights))?;
    let self_control_rtd = rtd_score(&dm0, &dm0, "bp_epoch0", "bp_epoch0")?.rtd;

    let mut rows = Vec::with_capacity(epochs);
    for e in 1..=epochs {
        let dm = stage("track", snapshot_dm(&outcome.snapshots[e].synapse_weights))?;
        let report = rtd_score(&h_dm, &dm, "hrsnn_L3", &format!("bp_epoch{}_L3", e))?;
        rows.push(TrackRow {
            epoch: e,
            bp_accuracy: outcome.curve[e - 1].train_accuracy,
            rtd: report.rtd,
        });
    }

    let mut csv = std::io::BufWriter::new(std::fs::File::create(out_dir.join("track.csv"))?);
    writeln!(csv, "epoch,bp_accuracy,rtd")?;
    for r in &rows {
        writeln!(csv, "{},{},{}", r.epoch, r.bp_accuracy, r.rtd)?;
    }
    Ok(TrackTrace { rows, self_control_rtd })
}

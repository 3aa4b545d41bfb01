//! Command-line driver for the RSNN topology toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime stage error.

use clap::{Parser, Subcommand};
use rsnn_topo::experiment::{
    ingest_spike_csv, materialize_dataset, run_experiment, sweep_neurons, track_epochs,
    train_model, write_spike_dataset, ExperimentConfig,
};
use rsnn_topo::lif_sim::SpikeRaster;
use rsnn_topo::net_graph::load_network;
use rsnn_topo::plasticity::TrainingLog;
use rsnn_topo::rtd::rtd_score;
use rsnn_topo::spike_metrics::distance_matrix;
use rsnn_topo::surrogate_trainer::{write_curve_csv, LabeledRaster};
use rsnn_topo::{Error, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "rsnn-topo",
    version,
    about = "Recurrent spiking network training, dual feedforward reinterpretation, \
             and topological divergence analysis"
)]
struct Cli {
    /// TOML experiment configuration (see README for the key schema).
    #[arg(short, long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Override every seed in the config from one master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize the configured dataset and write train/holdout splits.
    Gen {
        /// Output directory (defaults to <output.dir>/<run_name>_data).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a single model family and save its network snapshot.
    Train {
        /// Model family: hrsnn, mrsnn, or bprsnn.
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Collect plasticity-off responses of a saved network to a dataset.
    Respond {
        /// Network JSON produced by `train`.
        #[arg(long)]
        network: PathBuf,
        /// Dataset manifest produced by `gen` (dataset.json).
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two response sets: distance matrices plus the symmetrized
    /// divergence score.
    Rtd {
        /// First response-set manifest (dataset.json from `respond`).
        #[arg(long)]
        a: PathBuf,
        /// Second response-set manifest.
        #[arg(long)]
        b: PathBuf,
        /// Comma-separated neuron ids to restrict to (default: all).
        #[arg(long)]
        subset: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full experiment: train all enabled models, compare on shared stimuli.
    Run,
    /// Repeat the full experiment over ascending recurrent-layer sizes.
    Sweep {
        /// Comma-separated neuron counts (default: sweep.neuron_counts).
        #[arg(long)]
        counts: Option<String>,
    },
    /// Epoch-wise divergence of BPRSNN snapshots from a trained HRSNN.
    Track {
        /// Number of BPRSNN epochs (default: sweep.track_epochs).
        #[arg(long)]
        epochs: Option<usize>,
    },
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::config(format!("bad {} entry {:?}: {}", what, s, e)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let default_out = |suffix: &str| cfg.output.dir.join(format!("{}_{}", cfg.output.run_name, suffix));

    match cli.command {
        Command::Gen { out } => {
            let dir = out.unwrap_or_else(|| default_out("data"));
            let data = materialize_dataset(&cfg).map_err(|e| e.in_stage("dataset"))?;
            let train = write_spike_dataset(&dir.join("train"), &data.train, data.classes)?;
            let holdout = write_spike_dataset(&dir.join("holdout"), &data.holdout, data.classes)?;
            println!("wrote {} train samples: {}", data.train.len(), train.display());
            println!("wrote {} holdout samples: {}", data.holdout.len(), holdout.display());
        }
        Command::Train { model, out } => {
            let dir = out.unwrap_or_else(|| default_out("models"));
            std::fs::create_dir_all(&dir)?;
            let data = materialize_dataset(&cfg).map_err(|e| e.in_stage("dataset"))?;
            let trained = train_model(&cfg, &model, &data.train, data.classes)
                .map_err(|e| e.in_stage(&format!("train_{}", model)))?;
            let net_path = dir.join(format!("{}_network.json", model));
            rsnn_topo::net_graph::save_network(&trained.net, None, &net_path)?;
            if let Some(log) = &trained.stdp_log {
                TrainingLog::write_csv(log, &dir.join(format!("{}_training.csv", model)))?;
            }
            if let Some(outcome) = &trained.bp_outcome {
                write_curve_csv(&outcome.curve, &dir.join(format!("{}_curve.csv", model)))?;
            }
            println!("trained {}: {}", model, net_path.display());
        }
        Command::Respond { network, dataset, out } => {
            let dir = out.unwrap_or_else(|| default_out("responses"));
            let (net, _) = load_network(&network)?;
            let (stimuli, classes) = ingest_spike_csv(&dataset)?;
            let responses =
                rsnn_topo::experiment::collect_responses(&cfg, &net, &stimuli)
                    .map_err(|e| e.in_stage("respond"))?;
            let labeled: Vec<LabeledRaster> = responses
                .into_iter()
                .zip(&stimuli)
                .map(|(input, s)| LabeledRaster { input, label: s.label })
                .collect();
            let manifest = write_spike_dataset(&dir, &labeled, classes)?;
            println!("wrote {} responses: {}", labeled.len(), manifest.display());
        }
        Command::Rtd { a, b, subset, out } => {
            let dir = out.unwrap_or_else(|| default_out("rtd"));
            std::fs::create_dir_all(&dir)?;
            let (set_a, _) = ingest_spike_csv(&a)?;
            let (set_b, _) = ingest_spike_csv(&b)?;
            let rasters = |s: &[LabeledRaster]| -> Vec<SpikeRaster> {
                s.iter().map(|x| x.input.clone()).collect()
            };
            let (ra, rb) = (rasters(&set_a), rasters(&set_b));
            let all_ids = |r: &[SpikeRaster]| (0..r[0].neuron_count()).collect::<Vec<_>>();
            let ids = match &subset {
                Some(text) => parse_usize_list(text, "subset")?,
                None => {
                    if ra.is_empty() {
                        return Err(Error::input("empty response set".to_string()));
                    }
                    all_ids(&ra)
                }
            };
            let penalty = cfg.empty_penalty();
            let (dm_a, _) = distance_matrix(&ra, &ids, penalty).map_err(|e| e.in_stage("rtd"))?;
            let (dm_b, _) = distance_matrix(&rb, &ids, penalty).map_err(|e| e.in_stage("rtd"))?;
            let report = rtd_score(&dm_a, &dm_b, "a", "b").map_err(|e| e.in_stage("rtd"))?;
            dm_a.write_csv(&dir.join("dist_a.csv"))?;
            dm_b.write_csv(&dir.join("dist_b.csv"))?;
            report.save(&dir.join("rtd.json"))?;
            println!("rtd = {}", report.rtd);
        }
        Command::Run => {
            let report = run_experiment(&cfg)?;
            for p in &report.pairs {
                println!("{} vs {} @ {}: rtd = {}", p.model_a, p.model_b, p.layer, p.report.rtd);
            }
            for (model, acc) in &report.accuracies {
                println!("{} holdout accuracy = {}", model, acc);
            }
        }
        Command::Sweep { counts } => {
            let counts = match counts {
                Some(text) => parse_usize_list(&text, "counts")?,
                None => cfg.sweep.neuron_counts.clone(),
            };
            let reports = sweep_neurons(&cfg, &counts)?;
            for (count, report) in &reports {
                for p in &report.pairs {
                    println!(
                        "n={} {} vs {} @ {}: rtd = {}",
                        count, p.model_a, p.model_b, p.layer, p.report.rtd
                    );
                }
            }
        }
        Command::Track { epochs } => {
            let epochs = epochs.unwrap_or(cfg.sweep.track_epochs);
            let trace = track_epochs(&cfg, epochs)?;
            for row in &trace.rows {
                println!(
                    "epoch {}: bp_accuracy = {}, rtd = {}",
                    row.epoch, row.bp_accuracy, row.rtd
                );
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e);
        std::process::exit(e.exit_code());
    }
}

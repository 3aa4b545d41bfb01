//! Simulation of recurrent spiking neural networks under three learning
//! regimes (heterogeneous STDP, homogeneous STDP, surrogate-gradient BPTT),
//! reinterpretation of the recurrent layer as a 5-layer feedforward
//! autoencoder via betweenness centrality, and quantification of divergence
//! between learned representations with a Wasserstein spike-train metric and
//! a graph-filtration topology divergence.

pub mod dual_rep;
pub mod error;
pub mod experiment;
pub mod lif_sim;
pub mod net_graph;
pub mod plasticity;
pub mod rtd;
pub mod spike_metrics;
pub mod surrogate_trainer;

pub use error::{Error, Result};

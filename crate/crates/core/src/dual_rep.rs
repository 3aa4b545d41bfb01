//! Dual representation of the recurrent graph as a 5-layer feedforward
//! autoencoder with skip connections.
//!
//! The bottleneck layer L3 is the set of highest betweenness-centrality
//! nodes outside the input (L1) and output (L5) layers. The flanking bands
//! L2 and L4 are the remaining nodes closest (in undirected hop distance) to
//! L1+L3 and L3+L5 respectively. Recurrent edges between non-adjacent layers
//! read as skip connections; they do not influence the assignment.

use crate::error::{Error, Result};
use crate::net_graph::NetworkTopology;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Per-node betweenness centrality scores, indexed by neuron id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralityMap {
    pub scores: Vec<f64>,
}

/// Betweenness centrality on the directed, unweighted graph (edge presence
/// only): `C_b(v) = sum over ordered pairs (s, t), s != v != t, of
/// sigma(s,t|v) / sigma(s,t)`, unreachable pairs contributing 0. Brandes
/// accumulation, no normalization.
pub fn betweenness(net: &NetworkTopology) -> CentralityMap {
    let n = net.neuron_count;
    let mut adj = vec![Vec::new(); n];
    for s in &net.synapses {
        adj[s.pre].push(s.post);
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }

    let mut scores = vec![0.0; n];
    for s in 0..n {
        // BFS shortest-path counts from s.
        let mut dist = vec![usize::MAX; n];
        let mut sigma = vec![0.0f64; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::new();
        dist[s] = 0;
        sigma[s] = 1.0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &w in &adj[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[u] + 1 {
                    sigma[w] += sigma[u];
                    preds[w].push(u);
                }
            }
        }
        // Dependency accumulation in reverse BFS order.
        let mut delta = vec![0.0f64; n];
        for &w in order.iter().rev() {
            for &u in &preds[w] {
                delta[u] += sigma[u] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                scores[w] += delta[w];
            }
        }
    }
    CentralityMap { scores }
}

/// Partition of the nodes into the five autoencoder layers, with the
/// centrality and hop-distance values that drove the assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerAssignment {
    pub l1: Vec<usize>,
    pub l2: Vec<usize>,
    pub l3: Vec<usize>,
    pub l4: Vec<usize>,
    pub l5: Vec<usize>,
    pub centrality: Vec<f64>,
    /// Hop distance to L1 plus hop distance to L3 (undirected skeleton);
    /// unreachable terms use the sentinel `neuron_count`.
    pub d13: Vec<usize>,
    /// Hop distance to L3 plus hop distance to L5.
    pub d35: Vec<usize>,
}

impl LayerAssignment {
    pub fn layer(&self, name: &str) -> Option<&[usize]> {
        match name {
            "L1" => Some(&self.l1),
            "L2" => Some(&self.l2),
            "L3" => Some(&self.l3),
            "L4" => Some(&self.l4),
            "L5" => Some(&self.l5),
            _ => None,
        }
    }

    pub fn validate(&self, net: &NetworkTopology) -> Result<()> {
        let mut seen = vec![0usize; net.neuron_count];
        for layer in [&self.l1, &self.l2, &self.l3, &self.l4, &self.l5] {
            for &id in layer.iter() {
                if id >= net.neuron_count {
                    return Err(Error::input(format!("layer node {} out of range", id)));
                }
                seen[id] += 1;
            }
        }
        if seen.iter().any(|&c| c > 1) {
            return Err(Error::input("layers are not pairwise disjoint".to_string()));
        }
        if self.l1 != net.input_ids || self.l5 != net.output_ids {
            return Err(Error::input("L1/L5 must equal input/output ids".to_string()));
        }
        Ok(())
    }
}

/// Multi-source BFS hop distances on the undirected skeleton. Unreachable
/// nodes get `usize::MAX`.
fn hop_distances(adj: &[Vec<usize>], sources: &[usize]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] == usize::MAX {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Assign every node to one of L1..L5.
///
/// L3 holds the top `ceil(bottleneck_fraction * n)` nodes by centrality
/// among non-input non-output nodes (ties to the lower id, capped at the
/// candidate pool). L2 and L4 each take the top `ceil(band_fraction * c)`
/// of the `c` remaining candidates with the smallest summed hop distances,
/// L2 claiming conflicts.
pub fn extract_layers(
    net: &NetworkTopology,
    bottleneck_fraction: f64,
    band_fraction: f64,
) -> Result<LayerAssignment> {
    if !(bottleneck_fraction > 0.0) || !(band_fraction > 0.0) {
        return Err(Error::config(format!(
            "fractions must be positive, got bottleneck {} band {}",
            bottleneck_fraction, band_fraction
        )));
    }
    let n = net.neuron_count;
    let centrality = betweenness(net);
    let in_l1 = |id: usize| net.input_ids.binary_search(&id).is_ok();
    let in_l5 = |id: usize| net.output_ids.binary_search(&id).is_ok();

    let mut cand3: Vec<usize> = (0..n).filter(|&id| !in_l1(id) && !in_l5(id)).collect();
    if cand3.is_empty() {
        return Err(Error::DegenerateTopology(
            "no candidate nodes for layer L3".to_string(),
        ));
    }
    let k3 = ((bottleneck_fraction * n as f64).ceil() as usize)
        .max(1)
        .min(cand3.len());
    cand3.sort_by(|&a, &b| {
        centrality.scores[b]
            .partial_cmp(&centrality.scores[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut l3: Vec<usize> = cand3[..k3].to_vec();
    l3.sort_unstable();

    // Undirected skeleton for hop distances.
    let mut adj = vec![Vec::new(); n];
    for s in &net.synapses {
        adj[s.pre].push(s.post);
        adj[s.post].push(s.pre);
    }
    for row in &mut adj {
        row.sort_unstable();
        row.dedup();
    }
    let dist1 = hop_distances(&adj, &net.input_ids);
    let dist3 = hop_distances(&adj, &l3);
    let dist5 = hop_distances(&adj, &net.output_ids);
    // Sentinel: unreachable terms count as n and rank last.
    let term = |d: usize| if d == usize::MAX { n } else { d };
    let d13: Vec<usize> = (0..n).map(|i| term(dist1[i]) + term(dist3[i])).collect();
    let d35: Vec<usize> = (0..n).map(|i| term(dist3[i]) + term(dist5[i])).collect();
    let unreachable13: Vec<bool> = (0..n)
        .map(|i| dist1[i] == usize::MAX || dist3[i] == usize::MAX)
        .collect();
    let unreachable35: Vec<bool> = (0..n)
        .map(|i| dist3[i] == usize::MAX || dist5[i] == usize::MAX)
        .collect();

    let in_l3 = |id: usize| l3.binary_search(&id).is_ok();
    let candidates: Vec<usize> = (0..n)
        .filter(|&id| !in_l1(id) && !in_l5(id) && !in_l3(id))
        .collect();
    if candidates.is_empty() {
        return Err(Error::DegenerateTopology(
            "no candidate nodes for layers L2/L4".to_string(),
        ));
    }
    let band = ((band_fraction * candidates.len() as f64).ceil() as usize)
        .max(1)
        .min(candidates.len());

    let mut by_d13 = candidates.clone();
    by_d13.sort_by_key(|&id| (unreachable13[id], d13[id], id));
    let mut l2: Vec<usize> = by_d13[..band].to_vec();
    l2.sort_unstable();

    let in_l2 = |id: usize| l2.binary_search(&id).is_ok();
    let mut remaining: Vec<usize> = candidates.iter().copied().filter(|&id| !in_l2(id)).collect();
    if remaining.is_empty() {
        return Err(Error::DegenerateTopology(
            "no candidate nodes for layer L4".to_string(),
        ));
    }
    remaining.sort_by_key(|&id| (unreachable35[id], d35[id], id));
    let k4 = band.min(remaining.len());
    let mut l4: Vec<usize> = remaining[..k4].to_vec();
    l4.sort_unstable();

    let assignment = LayerAssignment {
        l1: net.input_ids.clone(),
        l2,
        l3,
        l4,
        l5: net.output_ids.clone(),
        centrality: centrality.scores,
        d13,
        d35,
    };
    assignment.validate(net)?;
    Ok(assignment)
}

/// DOT rendering with layer-colored nodes, for eyeballing assignments.
pub fn to_dot(net: &NetworkTopology, assignment: &LayerAssignment) -> String {
    let color = |id: usize| {
        if assignment.l1.binary_search(&id).is_ok() {
            "lightblue"
        } else if assignment.l2.binary_search(&id).is_ok() {
            "palegreen"
        } else if assignment.l3.binary_search(&id).is_ok() {
            "gold"
        } else if assignment.l4.binary_search(&id).is_ok() {
            "salmon"
        } else if assignment.l5.binary_search(&id).is_ok() {
            "plum"
        } else {
            "white"
        }
    };
    let mut out = String::from("digraph g {\n  node [style=filled];\n");
    for id in 0..net.neuron_count {
        out.push_str(&format!("  n{} [fillcolor={}];\n", id, color(id)));
    }
    for s in &net.synapses {
        out.push_str(&format!("  n{} -> n{};\n", s.pre, s.post));
    }
    out.push_str("}\n");
    out
}

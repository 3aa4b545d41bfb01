//! Acceptance suite: every test is one pass/fail gate, checked against
//! independent oracles (min-cost flow, exhaustive path enumeration,
//! threshold-sweep union-find) rather than against the implementation's own
//! internals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsnn_topo::dual_rep::betweenness;
use rsnn_topo::experiment::{run_experiment, track_epochs, train_model, ExperimentConfig};
use rsnn_topo::lif_sim::{simulate, SimConfig, SpikeRaster, SpikeTrain};
use rsnn_topo::net_graph::{NetworkTopology, NeuronParams, Synapse, SynapseParams};
use rsnn_topo::plasticity::stdp_delta;
use rsnn_topo::rtd::{cross_barcode_h0, rtd_score};
use rsnn_topo::spike_metrics::{wasserstein_spike, DistanceMatrix};
use rsnn_topo::surrogate_trainer::{softmax, Readout};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

// ===========================================================================
// Oracles
// ===========================================================================

/// Generic successive-shortest-path min-cost max-flow with integer
/// capacities and float costs.
struct Mcmf {
    // edge: (to, cap, cost); stored with its reverse at id ^ 1
    edges: Vec<(usize, i64, f64)>,
    adj: Vec<Vec<usize>>,
}

impl Mcmf {
    fn new(n: usize) -> Self {
        Mcmf { edges: Vec::new(), adj: vec![Vec::new(); n] }
    }

    fn add_edge(&mut self, u: usize, v: usize, cap: i64, cost: f64) {
        self.adj[u].push(self.edges.len());
        self.edges.push((v, cap, cost));
        self.adj[v].push(self.edges.len());
        self.edges.push((u, 0, -cost));
    }

    fn min_cost_flow(&mut self, s: usize, t: usize) -> (i64, f64) {
        let n = self.adj.len();
        let mut total_flow = 0i64;
        let mut total_cost = 0.0f64;
        loop {
            // Bellman-Ford over the residual graph.
            let mut dist = vec![f64::INFINITY; n];
            let mut parent_edge = vec![usize::MAX; n];
            dist[s] = 0.0;
            for _ in 0..n {
                let mut changed = false;
                for u in 0..n {
                    if !dist[u].is_finite() {
                        continue;
                    }
                    for &eid in &self.adj[u] {
                        let (v, cap, cost) = self.edges[eid];
                        // costs are dyadic rationals, so this arithmetic is
                        // exact and Bellman-Ford terminates cleanly
                        if cap > 0 && dist[u] + cost < dist[v] {
                            dist[v] = dist[u] + cost;
                            parent_edge[v] = eid;
                            changed = true;
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            if !dist[t].is_finite() {
                break;
            }
            let mut bottleneck = i64::MAX;
            let mut v = t;
            while v != s {
                let eid = parent_edge[v];
                bottleneck = bottleneck.min(self.edges[eid].1);
                v = self.edges[eid ^ 1].0;
            }
            let mut v = t;
            while v != s {
                let eid = parent_edge[v];
                self.edges[eid].1 -= bottleneck;
                self.edges[eid ^ 1].1 += bottleneck;
                v = self.edges[eid ^ 1].0;
            }
            total_flow += bottleneck;
            total_cost += bottleneck as f64 * dist[t];
        }
        (total_flow, total_cost)
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Transport the full unit mass of f (1/n per spike) onto g (1/m per spike)
/// at cost |t - s|, solved as an exact min-cost flow.
fn mcf_wasserstein(f: &[f64], g: &[f64]) -> f64 {
    let (n, m) = (f.len(), g.len());
    let l = (n as u64 / gcd(n as u64, m as u64)) * m as u64; // lcm
    let source = 0;
    let sink = n + m + 1;
    let mut net = Mcmf::new(n + m + 2);
    for (i, _) in f.iter().enumerate() {
        net.add_edge(source, 1 + i, (l / n as u64) as i64, 0.0);
    }
    for (j, &t) in g.iter().enumerate() {
        net.add_edge(1 + n + j, sink, (l / m as u64) as i64, 0.0);
        for (i, &s) in f.iter().enumerate() {
            net.add_edge(1 + i, 1 + n + j, l as i64, (s - t).abs());
        }
    }
    let (flow, cost) = net.min_cost_flow(source, sink);
    assert_eq!(flow as u64, l, "oracle failed to route the full mass");
    cost / l as f64
}

/// Exhaustive enumeration of all shortest paths in a directed unweighted
/// graph; betweenness of v = sum over (s, t) of the fraction of s-t shortest
/// paths passing through v.
fn brute_betweenness(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in edges {
        adj[u].push(v);
    }
    // BFS distances from every node.
    let mut dist = vec![vec![usize::MAX; n]; n];
    for s in 0..n {
        let mut queue = std::collections::VecDeque::new();
        dist[s][s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if dist[s][v] == usize::MAX {
                    dist[s][v] = dist[s][u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    fn dfs(
        u: usize,
        s: usize,
        t: usize,
        adj: &[Vec<usize>],
        dist: &[Vec<usize>],
        path: &mut Vec<usize>,
        through: &mut Vec<u64>,
        total: &mut u64,
    ) {
        if u == t {
            *total += 1;
            for &v in path.iter() {
                if v != s && v != t {
                    through[v] += 1;
                }
            }
            return;
        }
        for &w in &adj[u] {
            // stay on a shortest s-t path
            if dist[s][w] == dist[s][u] + 1
                && dist[w][t] != usize::MAX
                && dist[s][w] + dist[w][t] == dist[s][t]
            {
                path.push(w);
                dfs(w, s, t, adj, dist, path, through, total);
                path.pop();
            }
        }
    }
    let mut scores = vec![0.0; n];
    for s in 0..n {
        for t in 0..n {
            if s == t || dist[s][t] == usize::MAX {
                continue;
            }
            let mut through = vec![0u64; n];
            let mut total = 0u64;
            let mut path = vec![s];
            dfs(s, s, t, &adj, &dist, &mut path, &mut through, &mut total);
            assert!(total > 0);
            for v in 0..n {
                scores[v] += through[v] as f64 / total as f64;
            }
        }
    }
    scores
}

/// Threshold-sweep union-find oracle for the dimension-0 cross-barcode:
/// births from a Kruskal pass over the entrywise-min matrix, deaths by
/// scanning the distinct thresholds of the first matrix for reconnection.
fn sweep_cross_barcode(w: &DistanceMatrix, wt: &DistanceMatrix) -> Vec<(f64, f64)> {
    let n = w.n;
    struct Uf(Vec<usize>);
    impl Uf {
        fn find(&mut self, x: usize) -> usize {
            if self.0[x] != x {
                let r = self.find(self.0[x]);
                self.0[x] = r;
            }
            self.0[x]
        }
        fn union(&mut self, a: usize, b: usize) {
            let (ra, rb) = (self.find(a), self.find(b));
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j, w.get(i, j).min(wt.get(i, j))));
        }
    }
    edges.sort_by(|a, b| {
        a.2.partial_cmp(&b.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
    });
    // connectivity in w restricted to edges <= threshold
    let connected_under = |u: usize, v: usize, thr: f64| -> bool {
        let mut seen = vec![false; n];
        let mut stack = vec![u];
        seen[u] = true;
        while let Some(x) = stack.pop() {
            if x == v {
                return true;
            }
            for y in 0..n {
                if y != x && !seen[y] && w.get(x, y) <= thr {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        false
    };
    let mut thresholds: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            thresholds.push(w.get(i, j));
        }
    }
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();

    let mut uf = Uf((0..n).collect());
    let mut bars = Vec::new();
    for (u, v, birth) in edges {
        if uf.find(u) != uf.find(v) {
            uf.union(u, v);
            let death = thresholds
                .iter()
                .copied()
                .find(|&t| connected_under(u, v, t))
                .expect("finite matrix always reconnects");
            bars.push((birth, death.max(birth)));
        }
    }
    bars
}

fn oracle_rtd(a: &DistanceMatrix, b: &DistanceMatrix) -> f64 {
    let total = |bars: &[(f64, f64)]| bars.iter().map(|(x, y)| y - x).sum::<f64>();
    (total(&sweep_cross_barcode(a, b)) + total(&sweep_cross_barcode(b, a))) / 2.0
}

// ===========================================================================
// Shared helpers
// ===========================================================================

fn random_train(rng: &mut ChaCha8Rng, max_len: usize, span: f64) -> SpikeTrain {
    let len = rng.gen_range(1..=max_len);
    let mut t: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..span)).collect();
    t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    SpikeTrain::new(t)
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DistanceMatrix {
    let mut d = DistanceMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            d.set_sym(i, j, rng.gen_range(0.01..10.0));
        }
    }
    d
}

fn net_from_edges(n: usize, edges: &[(usize, usize)]) -> NetworkTopology {
    let neuron = NeuronParams { tau_m: 20.0, v_th: 1.0, v_rest: 0.0, v_reset: 0.0, t_ref: 2.0 };
    let params = SynapseParams {
        weight: 0.5,
        tau_plus: 20.0,
        tau_minus: 20.0,
        eta_plus: 0.01,
        eta_minus: 0.01,
        w_min: 0.0,
        w_max: 1.0,
        plastic: true,
    };
    NetworkTopology {
        neuron_count: n,
        neurons: vec![neuron; n],
        synapses: edges
            .iter()
            .map(|&(pre, post)| Synapse { pre, post, params: params.clone() })
            .collect(),
        input_ids: vec![0],
        output_ids: vec![n - 1],
    }
}

/// Reference configuration for the full-pipeline criteria.
fn pipeline_config(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.samples_per_class = 8;
    cfg.dataset.jitter = 2.0;
    cfg.models.neuron_count = 64;
    cfg.models.stdp_epochs = 3;
    cfg.models.bp_epochs = 20;
    cfg.analysis.layers = vec!["L3".to_string()];
    cfg.analysis.holdout = 20;
    cfg.output.dir = dir.to_path_buf();
    cfg
}

// ===========================================================================
// Criteria
// ===========================================================================

#[test]
fn c01_wasserstein_matches_min_cost_flow() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    // spike times on a 1/64 ms grid: dyadic, hence exactly representable,
    // which keeps the flow oracle's shortest-path arithmetic exact
    let dyadic_train = |rng: &mut ChaCha8Rng| {
        let len = rng.gen_range(1..=6);
        let mut t: Vec<f64> = (0..len).map(|_| rng.gen_range(0..6400) as f64 / 64.0).collect();
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        t.dedup();
        SpikeTrain::new(t)
    };
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let f = dyadic_train(&mut rng);
        let g = dyadic_train(&mut rng);
        let fast = wasserstein_spike(&f, &g).unwrap();
        let lp = mcf_wasserstein(&f.times, &g.times);
        worst = worst.max((fast - lp).abs());
    }
    assert!(worst <= 1e-9, "max abs error {} exceeds 1e-9", worst);
    assert!(start.elapsed().as_secs_f64() < 10.0, "oracle sweep took too long");
}

#[test]
fn c02_metric_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..1000 {
        let a = random_train(&mut rng, 8, 50.0);
        let b = random_train(&mut rng, 8, 50.0);
        let c = random_train(&mut rng, 8, 50.0);
        let dab = wasserstein_spike(&a, &b).unwrap();
        let dba = wasserstein_spike(&b, &a).unwrap();
        assert_eq!(dab, dba, "symmetry must be exact");
        let dac = wasserstein_spike(&a, &c).unwrap();
        let dcb = wasserstein_spike(&c, &b).unwrap();
        assert!(
            dab <= dac + dcb + 1e-12,
            "triangle inequality violated: {} > {} + {}",
            dab,
            dac,
            dcb
        );
        assert_eq!(wasserstein_spike(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn c03_centrality_matches_exhaustive_enumeration() {
    // worked examples: path interior 1, complete digraph 0, star hub 6
    let path = net_from_edges(3, &[(0, 1), (1, 2)]);
    assert_eq!(betweenness(&path).scores[1], 1.0);

    let mut complete = Vec::new();
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                complete.push((i, j));
            }
        }
    }
    let complete_net = net_from_edges(4, &complete);
    assert!(betweenness(&complete_net).scores.iter().all(|&s| s == 0.0));

    let star = net_from_edges(4, &[(0, 1), (1, 0), (0, 2), (2, 0), (0, 3), (3, 0)]);
    assert_eq!(betweenness(&star).scores[0], 6.0);

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..50 {
        let n = rng.gen_range(3..=8);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.gen::<f64>() < 0.35 {
                    edges.push((i, j));
                }
            }
        }
        let got = betweenness(&net_from_edges(n, &edges)).scores;
        let want = brute_betweenness(n, &edges);
        for (v, (g, w)) in got.iter().zip(&want).enumerate() {
            assert!(
                (g - w).abs() <= 1e-9,
                "node {} of {}-node graph: got {}, oracle {}",
                v,
                n,
                g,
                w
            );
        }
    }
}

#[test]
fn c04_barcode_matches_threshold_sweep_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..100 {
        let n = rng.gen_range(2..=7);
        let a = random_matrix(&mut rng, n);
        let b = random_matrix(&mut rng, n);
        let got = cross_barcode_h0(&a, &b).unwrap().bars;
        let want = sweep_cross_barcode(&a, &b);
        assert_eq!(got.len(), want.len());
        for ((gb, gd), (wb, wd)) in got.iter().zip(&want) {
            assert!((gb - wb).abs() <= 1e-12 && (gd - wd).abs() <= 1e-12);
        }
    }

    // worked 3-point examples
    let mut w = DistanceMatrix::zeros(3);
    w.set_sym(0, 1, 1.0);
    w.set_sym(1, 2, 2.0);
    w.set_sym(0, 2, 3.0);
    let mut wt = DistanceMatrix::zeros(3);
    wt.set_sym(0, 1, 2.0);
    wt.set_sym(1, 2, 1.0);
    wt.set_sym(0, 2, 3.0);
    let first = rtd_score(&w, &wt, "w", "wt").unwrap().rtd;
    assert_eq!(first, oracle_rtd(&w, &wt));
    assert_eq!(first, 1.0);

    let mut doubled = DistanceMatrix::zeros(3);
    for i in 0..3 {
        for j in (i + 1)..3 {
            doubled.set_sym(i, j, 2.0 * w.get(i, j));
        }
    }
    let second = rtd_score(&w, &doubled, "w", "2w").unwrap().rtd;
    assert_eq!(second, oracle_rtd(&w, &doubled));
    assert_eq!(second, 1.5);
}

#[test]
fn c05_rtd_axioms() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..50 {
        let n = rng.gen_range(3..=8);
        let a = random_matrix(&mut rng, n);
        let b = random_matrix(&mut rng, n);
        assert_eq!(rtd_score(&a, &a, "a", "a").unwrap().rtd, 0.0);
        let r = rtd_score(&a, &b, "a", "b").unwrap().rtd;
        assert!(r >= 0.0);

        // permutation equivariance: relabeling both matrices together
        // leaves the score unchanged
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            perm.swap(i, j);
        }
        let apply = |d: &DistanceMatrix| {
            let mut p = DistanceMatrix::zeros(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    p.set_sym(perm[i], perm[j], d.get(i, j));
                }
            }
            p
        };
        let rp = rtd_score(&apply(&a), &apply(&b), "a", "b").unwrap().rtd;
        assert!((r - rp).abs() <= 1e-9, "rtd {} changed to {} under relabeling", r, rp);
    }
}

#[test]
fn c06_rtd_noise_monotonicity() {
    let mut base_rng = ChaCha8Rng::seed_from_u64(606);
    // base matrix: pairwise distances of random points in R^3
    let n = 12;
    let points: Vec<[f64; 3]> = (0..n)
        .map(|_| [base_rng.gen::<f64>(), base_rng.gen::<f64>(), base_rng.gen::<f64>()])
        .collect();
    let mut base = DistanceMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d2: f64 = (0..3).map(|k| (points[i][k] - points[j][k]).powi(2)).sum();
            base.set_sym(i, j, d2.sqrt());
        }
    }
    let scale = {
        let mut s = 0.0;
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += base.get(i, j);
                count += 1;
            }
        }
        s / count as f64
    };
    let amplitudes = [0.1, 0.2, 0.4, 0.8];
    let mut medians = Vec::new();
    for &a in &amplitudes {
        let mut scores = Vec::new();
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(6060 + seed);
            let mut noisy = DistanceMatrix::zeros(n);
            for i in 0..n {
                for j in (i + 1)..n {
                    // symmetric zero-mean perturbation, floored at 0
                    let z = rng.gen_range(-1.0..1.0) * a * scale;
                    noisy.set_sym(i, j, (base.get(i, j) + z).max(0.0));
                }
            }
            scores.push(rtd_score(&base, &noisy, "base", "noisy").unwrap().rtd);
        }
        scores.sort_by(|x, y| x.partial_cmp(y).unwrap());
        medians.push((scores[9] + scores[10]) / 2.0);
    }
    // Spearman rank correlation between amplitude and median rtd.
    let rank = |xs: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
        let mut r = vec![0.0; xs.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (ra, rm) = (rank(&amplitudes), rank(&medians));
    let k = amplitudes.len() as f64;
    let d2: f64 = ra.iter().zip(&rm).map(|(x, y)| (x - y).powi(2)).sum();
    let spearman = 1.0 - 6.0 * d2 / (k * (k * k - 1.0));
    assert!(
        spearman >= 0.9,
        "Spearman {} < 0.9; medians {:?}",
        spearman,
        medians
    );
}

#[test]
fn c07_lif_analytic_isi() {
    // one neuron, constant current I = 2, v_th = 1, tau_m = 10 ms
    let isi_error = |dt: f64| -> f64 {
        let net = net_from_edges(2, &[]);
        let mut net = net;
        net.neurons[0].tau_m = 10.0;
        net.neurons[0].t_ref = 0.0;
        let mut cfg = SimConfig::new(dt, 100.0);
        cfg.bias = vec![2.0, 0.0];
        let input = SpikeRaster::empty(1, 100.0, 0.0);
        let out = simulate(&net, &input, &[0.0], &cfg).unwrap();
        let times = &out.trains[0].times;
        assert!(times.len() >= 3);
        let analytic = 10.0 * (2.0f64 / (2.0 - 1.0)).ln();
        let mut worst = 0.0f64;
        for pair in times.windows(2) {
            worst = worst.max(((pair[1] - pair[0]) - analytic).abs());
        }
        worst
    };
    let err = isi_error(0.01);
    assert!(err <= 0.02, "ISI error {} at dt = 0.01", err);
    let err_half = isi_error(0.005);
    assert!(
        err_half <= 0.75 * err,
        "halving dt should halve the error to first order: {} -> {}",
        err,
        err_half
    );
}

#[test]
fn c08_stdp_properties() {
    let params = SynapseParams {
        weight: 0.5,
        tau_plus: 20.0,
        tau_minus: 20.0,
        eta_plus: 0.01,
        eta_minus: 0.01,
        w_min: 0.0,
        w_max: 1.0,
        plastic: true,
    };
    // soft-bound containment over 10^4 random update sequences
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..10_000 {
        let mut w = rng.gen_range(0.0..1.0);
        for _ in 0..20 {
            let dt = rng.gen_range(-50.0..50.0);
            w += stdp_delta(dt, &params, w);
            assert!(
                (0.0..=1.0).contains(&w),
                "weight {} escaped [w_min, w_max]",
                w
            );
        }
    }
    // sign property on isolated pairings
    for _ in 0..1000 {
        let w = rng.gen_range(0.0..1.0);
        let dt = rng.gen_range(0.0..50.0);
        assert!(stdp_delta(dt, &params, w) >= 0.0);
        assert!(stdp_delta(-dt - 1e-9, &params, w) <= 0.0);
    }
    // coincident pairing worked example
    assert_eq!(stdp_delta(0.0, &params, 0.5), 0.005);
}

#[test]
fn c09_bptt_sanity() {
    // readout-path gradient vs central finite differences
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (classes, dim) = (3, 10);
    let mut readout = Readout::zeros(classes, dim);
    for row in readout.weights.iter_mut() {
        for w in row.iter_mut() {
            *w = rng.gen_range(-0.5..0.5);
        }
    }
    let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y = 1usize;
    let loss = |r: &Readout| -> f64 { -softmax(&r.logits(&x))[y].ln() };
    let probs = softmax(&readout.logits(&x));
    for c in 0..classes {
        for k in 0..dim {
            let analytic = (probs[c] - if c == y { 1.0 } else { 0.0 }) * x[k];
            let eps = 1e-5;
            let mut hi = readout.clone();
            hi.weights[c][k] += eps;
            let mut lo = readout.clone();
            lo.weights[c][k] -= eps;
            let fd = (loss(&hi) - loss(&lo)) / (2.0 * eps);
            let rel = (analytic - fd).abs() / fd.abs().max(1e-8);
            assert!(rel <= 1e-4, "grad[{}][{}] rel error {}", c, k, rel);
        }
    }

    // 64-neuron 2-class temporal toy task: >= 90% training accuracy in
    // 20 epochs, well under five minutes
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pipeline_config(dir.path());
    cfg.override_seed(3);
    let data = rsnn_topo::experiment::materialize_dataset(&cfg).unwrap();
    let model = train_model(&cfg, "bprsnn", &data.train, data.classes).unwrap();
    let final_acc = model.bp_outcome.unwrap().curve.last().unwrap().train_accuracy;
    assert!(final_acc >= 0.9, "training accuracy {} < 0.9", final_acc);
    assert!(start.elapsed().as_secs_f64() < 300.0, "toy task exceeded five minutes");
}

#[test]
fn c10_divergence_ordering_over_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let mut wins = 0;
    let mut observed = Vec::new();
    for seed in 1..=5u64 {
        let start = Instant::now();
        let mut cfg = pipeline_config(dir.path());
        cfg.output.run_name = format!("seed{}", seed);
        cfg.override_seed(seed);
        let report = run_experiment(&cfg).unwrap();
        let h_bp = report.pair("hrsnn", "bprsnn", "L3").unwrap().report.rtd;
        let h_m = report.pair("hrsnn", "mrsnn", "L3").unwrap().report.rtd;
        observed.push((seed, h_m, h_bp));
        if h_bp > h_m {
            wins += 1;
        }
        assert!(
            start.elapsed().as_secs_f64() < 1800.0,
            "seed {} run exceeded 30 minutes",
            seed
        );
    }
    assert!(
        wins >= 4,
        "rtd(H,BP) > rtd(H,M) at L3 in only {}/5 replicates: {:?}",
        wins,
        observed
    );
}

#[test]
fn c11_epoch_tracking_trace() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pipeline_config(dir.path());
    cfg.models.mrsnn = false;
    cfg.models.bp_epochs = 5;
    let trace = track_epochs(&cfg, 5).unwrap();
    assert_eq!(trace.rows.len(), 5, "trace must cover every epoch");
    for row in &trace.rows {
        assert!(row.rtd.is_finite(), "epoch {} rtd not finite", row.epoch);
        assert!((0.0..=1.0).contains(&row.bp_accuracy));
    }
    assert_eq!(trace.self_control_rtd, 0.0, "self-comparison control must be 0");
}

#[test]
fn c12_rerun_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = pipeline_config(dir.path());
    cfg.models.bp_epochs = 5;
    cfg.dataset.samples_per_class = 4;
    cfg.analysis.holdout = 8;
    run_experiment(&cfg).unwrap();
    let run_dir = dir.path().join(&cfg.output.run_name);
    let snapshot = read_all(&run_dir);
    run_experiment(&cfg).unwrap();
    let rerun = read_all(&run_dir);
    assert_eq!(snapshot.len(), rerun.len());
    for (path, bytes) in &snapshot {
        if path.ends_with("manifest.json") {
            continue; // carries wall-clock timestamps by design
        }
        assert_eq!(
            bytes,
            rerun.get(path).unwrap_or_else(|| panic!("{} missing on rerun", path)),
            "{} not byte-identical on rerun",
            path
        );
    }
}

fn read_all(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

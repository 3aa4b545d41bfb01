//! Wasserstein spike-train distance and pairwise response distance matrices.
//!
//! A spike train with N spikes is treated as a uniform measure placing mass
//! 1/N on each spike time. The transport program (nonnegative flows, row
//! sums <= 1/N, column sums <= 1/M, total mass 1) between two such measures
//! is solved in closed form as the L1 distance between quantile functions:
//! merge the two quantile partitions and integrate |x_i - y_j| over each
//! shared quantile segment.

use crate::error::{Error, Result};
use crate::lif_sim::{SpikeRaster, SpikeTrain};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Symmetric nonnegative matrix of pairwise response distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub n: usize,
    /// Row-major `n * n` entries.
    entries: Vec<f64>,
}

impl DistanceMatrix {
    pub fn zeros(n: usize) -> Self {
        DistanceMatrix { n, entries: vec![0.0; n * n] }
    }

    pub fn from_entries(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::input(format!(
                "expected {} entries, got {}",
                n * n,
                entries.len()
            )));
        }
        let m = DistanceMatrix { n, entries };
        m.validate()?;
        Ok(m)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Set both `(i, j)` and `(j, i)`.
    pub fn set_sym(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * self.n + j] = v;
        self.entries[j * self.n + i] = v;
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            if self.get(i, i) != 0.0 {
                return Err(Error::input(format!("nonzero diagonal at {}", i)));
            }
            for j in 0..self.n {
                let v = self.get(i, j);
                if !(v >= 0.0) {
                    return Err(Error::input(format!("negative or NaN entry at ({}, {})", i, j)));
                }
                if v != self.get(j, i) {
                    return Err(Error::input(format!("asymmetric at ({}, {})", i, j)));
                }
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{}", self.get(i, j))).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|s| s.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?);
        }
        let n = rows.len();
        let mut entries = Vec::with_capacity(n * n);
        for (lineno, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("row length {} != {}", row.len(), n),
                });
            }
            entries.extend_from_slice(row);
        }
        DistanceMatrix::from_entries(n, entries)
    }
}

/// Sidecar metadata stored next to a distance-matrix CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrixMeta {
    pub n: usize,
    pub neuron_subset: Vec<usize>,
    pub empty_penalty_count: usize,
}

/// Binned per-neuron spike counts (rows are time bins).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStateMatrix {
    pub bin_width: f64,
    /// `bins[b][i]` = spike count of neuron `i` in bin `b`.
    pub bins: Vec<Vec<u64>>,
}

/// Closed-form transport distance between two nonempty sorted spike-time
/// sequences (uniform mass 1/N and 1/M per spike).
pub fn wasserstein_spike(f: &SpikeTrain, g: &SpikeTrain) -> Result<f64> {
    if f.is_empty() || g.is_empty() {
        return Err(Error::input(
            "wasserstein_spike requires nonempty trains; use spike_distance for the penalty rule"
                .to_string(),
        ));
    }
    Ok(quantile_l1(&f.times, &g.times))
}

/// Quantile-function L1 distance between uniform measures on `f` and `g`.
/// Segment boundaries are tracked as integer multiples of 1/(N*M) so the
/// sweep is exact.
fn quantile_l1(f: &[f64], g: &[f64]) -> f64 {
    let n = f.len();
    let m = g.len();
    let scale = (n * m) as f64;
    let mut total = 0.0;
    let mut q = 0u64; // consumed quantile mass in units of 1/(n*m)
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let qf = ((i + 1) * m) as u64;
        let qg = ((j + 1) * n) as u64;
        let qe = qf.min(qg);
        total += (qe - q) as f64 / scale * (f[i] - g[j]).abs();
        q = qe;
        if qf == qe {
            i += 1;
        }
        if qg == qe {
            j += 1;
        }
    }
    total
}

/// Total rule including empty trains: both empty gives 0; exactly one empty
/// gives `empty_penalty` and sets the flag.
pub fn spike_distance(f: &SpikeTrain, g: &SpikeTrain, empty_penalty: f64) -> (f64, bool) {
    match (f.is_empty(), g.is_empty()) {
        (true, true) => (0.0, false),
        (true, false) | (false, true) => (empty_penalty, true),
        (false, false) => (quantile_l1(&f.times, &g.times), false),
    }
}

/// Bin spike counts: entry `(b, i)` counts spikes of neuron `i` in
/// `[b * bin_width, (b + 1) * bin_width)`.
pub fn population_state_vectors(raster: &SpikeRaster, bin_width: f64) -> Result<PopulationStateMatrix> {
    if !(bin_width > 0.0) {
        return Err(Error::input(format!("bin_width must be > 0, got {}", bin_width)));
    }
    let n_bins = (raster.duration / bin_width).ceil() as usize;
    let n = raster.neuron_count();
    let mut bins = vec![vec![0u64; n]; n_bins];
    for (i, train) in raster.trains.iter().enumerate() {
        for &t in &train.times {
            let b = (t / bin_width).floor() as usize;
            if b < n_bins {
                bins[b][i] += 1;
            }
        }
    }
    Ok(PopulationStateMatrix { bin_width, bins })
}

/// Mean over `neuron_subset` of the per-neuron spike distance between two
/// rasters. Returns the distance and how many neuron pairs hit the
/// empty-penalty rule.
pub fn response_distance(
    a: &SpikeRaster,
    b: &SpikeRaster,
    neuron_subset: &[usize],
    empty_penalty: f64,
) -> Result<(f64, usize)> {
    if neuron_subset.is_empty() {
        return Err(Error::input("empty neuron subset".to_string()));
    }
    if a.neuron_count() != b.neuron_count() {
        return Err(Error::input(format!(
            "raster neuron counts differ: {} vs {}",
            a.neuron_count(),
            b.neuron_count()
        )));
    }
    for &id in neuron_subset {
        if id >= a.neuron_count() {
            return Err(Error::input(format!("subset neuron {} out of range", id)));
        }
    }
    let mut sum = 0.0;
    let mut penalties = 0usize;
    for &id in neuron_subset {
        let (d, flagged) = spike_distance(&a.trains[id], &b.trains[id], empty_penalty);
        sum += d;
        if flagged {
            penalties += 1;
        }
    }
    Ok((sum / neuron_subset.len() as f64, penalties))
}

/// Pairwise response distances over a response set, restricted to
/// `neuron_subset`. Returns the matrix and the total empty-penalty count.
pub fn distance_matrix(
    responses: &[SpikeRaster],
    neuron_subset: &[usize],
    empty_penalty: f64,
) -> Result<(DistanceMatrix, usize)> {
    if responses.len() < 2 {
        return Err(Error::input("need at least 2 responses".to_string()));
    }
    let n_neurons = responses[0].neuron_count();
    for r in responses {
        if r.neuron_count() != n_neurons {
            return Err(Error::input("responses have mismatched neuron counts".to_string()));
        }
    }
    let n = responses.len();
    let mut m = DistanceMatrix::zeros(n);
    let mut penalties = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            let (d, p) = response_distance(&responses[i], &responses[j], neuron_subset, empty_penalty)?;
            m.set_sym(i, j, d);
            penalties += p;
        }
    }
    Ok((m, penalties))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn train(times: &[f64]) -> SpikeTrain {
        SpikeTrain::new(times.to_vec())
    }

    fn random_train(rng: &mut ChaCha8Rng, max_len: usize, duration: f64) -> SpikeTrain {
        let len = rng.gen_range(1..=max_len);
        let mut times: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..duration)).collect();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        train(&times)
    }

    #[test]
    fn identity_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let f = random_train(&mut rng, 10, 100.0);
            assert_eq!(wasserstein_spike(&f, &f).unwrap(), 0.0);
        }
    }

    #[test]
    fn worked_pair_examples() {
        // Equal-size pair: flows 1->2 and 3->4, each cost 1 * 1/2.
        let d = wasserstein_spike(&train(&[1.0, 3.0]), &train(&[2.0, 4.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // Unequal sizes: flows 0->1 and 2->1, each 1/2 * 1.
        let d = wasserstein_spike(&train(&[0.0, 2.0]), &train(&[1.0])).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let a = random_train(&mut rng, 8, 50.0);
            let b = random_train(&mut rng, 8, 50.0);
            let c = random_train(&mut rng, 8, 50.0);
            let dab = wasserstein_spike(&a, &b).unwrap();
            let dba = wasserstein_spike(&b, &a).unwrap();
            assert_eq!(dab, dba);
            let dac = wasserstein_spike(&a, &c).unwrap();
            let dcb = wasserstein_spike(&c, &b).unwrap();
            assert!(dab <= dac + dcb + 1e-12, "{} > {} + {}", dab, dac, dcb);
        }
    }

    #[test]
    fn time_shift_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_train(&mut rng, 6, 50.0);
            let b = random_train(&mut rng, 6, 50.0);
            let shift = rng.gen_range(0.0..10.0);
            let a2 = train(&a.times.iter().map(|t| t + shift).collect::<Vec<_>>());
            let b2 = train(&b.times.iter().map(|t| t + shift).collect::<Vec<_>>());
            let d0 = wasserstein_spike(&a, &b).unwrap();
            let d1 = wasserstein_spike(&a2, &b2).unwrap();
            assert!((d0 - d1).abs() < 1e-9);
        }
        // Shifting one singleton train moves the distance by exactly |shift|.
        let a = train(&[10.0]);
        let b = train(&[10.0]);
        let b_shift = train(&[10.0 + 3.25]);
        assert!((wasserstein_spike(&a, &b_shift).unwrap() - wasserstein_spike(&a, &b).unwrap() - 3.25).abs() < 1e-12);
    }

    #[test]
    fn empty_rules() {
        let empty = SpikeTrain::default();
        let full = train(&[1.0, 2.0]);
        assert_eq!(spike_distance(&empty, &empty, 500.0), (0.0, false));
        assert_eq!(spike_distance(&empty, &full, 500.0), (500.0, true));
        assert_eq!(spike_distance(&full, &empty, 500.0), (500.0, true));
    }

    #[test]
    fn population_state_counts() {
        let mut raster = SpikeRaster::empty(2, 4.0, 0.1);
        raster.trains[0].times = vec![1.0, 3.0];
        raster.trains[1].times = vec![2.0];
        let psm = population_state_vectors(&raster, 2.0).unwrap();
        assert_eq!(psm.bins, vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn population_state_empty_raster() {
        let raster = SpikeRaster::empty(3, 10.0, 0.1);
        let psm = population_state_vectors(&raster, 2.5).unwrap();
        assert_eq!(psm.bins.len(), 4);
        assert!(psm.bins.iter().all(|row| row.iter().all(|&c| c == 0)));
    }

    #[test]
    fn population_row_sums_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.gen_range(1..5);
            let duration = 50.0;
            let mut raster = SpikeRaster::empty(n, duration, 0.1);
            for t in &mut raster.trains {
                *t = random_train(&mut rng, 12, duration);
            }
            let bw = rng.gen_range(1.0..10.0);
            let psm = population_state_vectors(&raster, bw).unwrap();
            for (b, row) in psm.bins.iter().enumerate() {
                let lo = b as f64 * bw;
                let hi = lo + bw;
                let mut brute = 0u64;
                for t in &raster.trains {
                    brute += t.times.iter().filter(|&&x| x >= lo && x < hi).count() as u64;
                }
                assert_eq!(row.iter().sum::<u64>(), brute);
            }
        }
    }

    #[test]
    fn response_distance_is_mean() {
        let mut a = SpikeRaster::empty(2, 100.0, 0.1);
        let mut b = SpikeRaster::empty(2, 100.0, 0.1);
        // per-neuron distances 1.0 and 3.0
        a.trains[0].times = vec![5.0];
        b.trains[0].times = vec![6.0];
        a.trains[1].times = vec![10.0];
        b.trains[1].times = vec![13.0];
        let (d, p) = response_distance(&a, &b, &[0, 1], 100.0).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(p, 0);
    }

    #[test]
    fn response_distance_symmetric_and_zero_on_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let mut a = SpikeRaster::empty(4, 60.0, 0.1);
            let mut b = SpikeRaster::empty(4, 60.0, 0.1);
            for t in &mut a.trains {
                *t = random_train(&mut rng, 6, 60.0);
            }
            for t in &mut b.trains {
                *t = random_train(&mut rng, 6, 60.0);
            }
            let subset = [0, 2, 3];
            let (dab, _) = response_distance(&a, &b, &subset, 60.0).unwrap();
            let (dba, _) = response_distance(&b, &a, &subset, 60.0).unwrap();
            assert_eq!(dab, dba);
            let (daa, _) = response_distance(&a, &a, &subset, 60.0).unwrap();
            assert_eq!(daa, 0.0);
        }
    }

    #[test]
    fn empty_subset_rejected() {
        let a = SpikeRaster::empty(2, 10.0, 0.1);
        assert!(response_distance(&a, &a, &[], 10.0).is_err());
    }

    #[test]
    fn distance_matrix_identical_responses_is_zero() {
        let mut r = SpikeRaster::empty(3, 50.0, 0.1);
        r.trains[0].times = vec![1.0, 2.0];
        r.trains[2].times = vec![10.0];
        let responses = vec![r.clone(), r.clone(), r];
        let (m, _) = distance_matrix(&responses, &[0, 1, 2], 50.0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn distance_matrix_matches_pairwise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut responses = Vec::new();
        for _ in 0..5 {
            let mut r = SpikeRaster::empty(3, 40.0, 0.1);
            for t in &mut r.trains {
                *t = random_train(&mut rng, 5, 40.0);
            }
            responses.push(r);
        }
        let subset = [0, 1, 2];
        let (m, _) = distance_matrix(&responses, &subset, 40.0).unwrap();
        m.validate().unwrap();
        for i in 0..responses.len() {
            for j in 0..responses.len() {
                let expected = if i == j {
                    0.0
                } else {
                    response_distance(&responses[i], &responses[j], &subset, 40.0)
                        .unwrap()
                        .0
                };
                assert!((m.get(i, j) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn three_responses_symmetry_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut responses = Vec::new();
        for _ in 0..3 {
            let mut r = SpikeRaster::empty(2, 40.0, 0.1);
            for t in &mut r.trains {
                *t = random_train(&mut rng, 5, 40.0);
            }
            responses.push(r);
        }
        let (m, _) = distance_matrix(&responses, &[0, 1], 40.0).unwrap();
        assert_eq!(m.get(0, 1), m.get(1, 0));
        assert_eq!(m.get(0, 2), m.get(2, 0));
        assert_eq!(m.get(1, 2), m.get(2, 1));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let mut m = DistanceMatrix::zeros(3);
        m.set_sym(0, 1, 1.5);
        m.set_sym(0, 2, 2.25);
        m.set_sym(1, 2, 0.125);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        m.write_csv(&path).unwrap();
        let loaded = DistanceMatrix::read_csv(&path).unwrap();
        assert_eq!(m, loaded);
    }
}

//! Representation Topology Divergence via dimension-0 cross-barcodes.
//!
//! Two distance matrices over the same sample set induce threshold
//! filtrations of complete graphs. The union filtration (entrywise minimum)
//! connects samples at least as early as either single filtration; each of
//! its merge events pairs the merge threshold (birth) with the threshold at
//! which the same pair of samples connects in the reference filtration
//! (death). Summed bar lengths, symmetrized over the two choices of
//! reference, give the divergence score.

use crate::error::{Error, Result};
use crate::spike_metrics::DistanceMatrix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// Multiset of (birth, death) intervals, one per merge event of the union
/// filtration; death ≥ birth for every bar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossBarcode {
    pub bars: Vec<(f64, f64)>,
}

impl CrossBarcode {
    pub fn total_length(&self) -> f64 {
        self.bars.iter().map(|(b, d)| d - b).sum()
    }
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Smallest threshold at which each pair of points is connected in the
/// filtration of `d` (the minimax path weight). O(n^3) closure.
pub fn connection_thresholds(d: &DistanceMatrix) -> Vec<Vec<f64>> {
    let n = d.n;
    let mut t = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                t[i][j] = d.get(i, j);
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = t[i][k].max(t[k][j]);
                if via < t[i][j] {
                    t[i][j] = via;
                }
            }
        }
    }
    t
}

/// Dimension-0 cross-barcode of `w` against the union filtration
/// min(w, w_tilde). Kruskal over the union's edges ascending (ties by
/// lexicographic (i, j)); every accepted edge emits one bar whose death is
/// the connection threshold of its endpoints in `w` alone.
pub fn cross_barcode_h0(w: &DistanceMatrix, w_tilde: &DistanceMatrix) -> Result<CrossBarcode> {
    if w.n != w_tilde.n {
        return Err(Error::input(format!(
            "distance matrix size mismatch: {} vs {}",
            w.n,
            w_tilde.n
        )));
    }
    let n = w.n;
    let deaths = connection_thresholds(w);
    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edges.push((i, j));
        }
    }
    let union_weight = |&(i, j): &(usize, usize)| w.get(i, j).min(w_tilde.get(i, j));
    edges.sort_by(|a, b| {
        union_weight(a)
            .partial_cmp(&union_weight(b))
            .unwrap()
            .then(a.cmp(b))
    });
    let mut dsu = Dsu::new(n);
    let mut bars = Vec::with_capacity(n.saturating_sub(1));
    for e in &edges {
        if dsu.union(e.0, e.1) {
            let birth = union_weight(e);
            bars.push((birth, deaths[e.0][e.1].max(birth)));
        }
    }
    Ok(CrossBarcode { bars })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdDiagnostics {
    pub mean_pairwise_divergence: f64,
}

/// Symmetrized divergence report between two representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtdReport {
    pub rtd: f64,
    pub rtd_ab: f64,
    pub rtd_ba: f64,
    pub bars_ab: Vec<(f64, f64)>,
    pub bars_ba: Vec<(f64, f64)>,
    pub n: usize,
    pub labels: [String; 2],
    pub diagnostics: RtdDiagnostics,
}

impl RtdReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// rtd_ab sums bar lengths with `a` as reference, rtd_ba with `b`;
/// rtd = (rtd_ab + rtd_ba) / 2.
pub fn rtd_score(
    a: &DistanceMatrix,
    b: &DistanceMatrix,
    label_a: &str,
    label_b: &str,
) -> Result<RtdReport> {
    let bars_ab = cross_barcode_h0(a, b)?;
    let bars_ba = cross_barcode_h0(b, a)?;
    let rtd_ab = bars_ab.total_length();
    let rtd_ba = bars_ba.total_length();
    Ok(RtdReport {
        rtd: 0.5 * (rtd_ab + rtd_ba),
        rtd_ab,
        rtd_ba,
        bars_ab: bars_ab.bars,
        bars_ba: bars_ba.bars,
        n: a.n,
        labels: [label_a.to_string(), label_b.to_string()],
        diagnostics: RtdDiagnostics {
            mean_pairwise_divergence: mean_pairwise_divergence(a, b)?,
        },
    })
}

/// Mean absolute entrywise gap over i < j. A sanity diagnostic only; it is
/// not the divergence score.
pub fn mean_pairwise_divergence(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<f64> {
    if a.n != b.n {
        return Err(Error::input(format!(
            "distance matrix size mismatch: {} vs {}",
            a.n,
            b.n
        )));
    }
    let n = a.n;
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += (a.get(i, j) - b.get(i, j)).abs();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Classical multidimensional scaling, for visualization export only.
/// Double-centers −½D², keeps the top `dims` nonnegative eigenpairs
/// (descending eigenvalue, columns sign-fixed so the first nonzero
/// coordinate is positive), zero-pads if fewer are nonnegative.
pub fn classical_mds(d: &DistanceMatrix, dims: usize) -> Result<Vec<Vec<f64>>> {
    let n = d.n;
    if dims < 1 || dims >= n {
        return Err(Error::input(format!(
            "mds dims must satisfy 1 <= dims < n, got dims {} n {}",
            dims, n
        )));
    }
    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * d.get(i, j).powi(2);
        }
    }
    // Double-center: B <- J B J with J = I - 11^T / n.
    let row_means: Vec<f64> = (0..n).map(|i| b.row(i).sum() / n as f64).collect();
    let col_means: Vec<f64> = (0..n).map(|j| b.column(j).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] += grand - row_means[i] - col_means[j];
        }
    }
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[q].partial_cmp(&eig.eigenvalues[p]).unwrap());

    let mut coords = vec![vec![0.0f64; dims]; n];
    for (k, &idx) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 1e-12 {
            continue; // column stays zero
        }
        let col = eig.eigenvectors.column(idx);
        let flip = col
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| if *x < 0.0 { -1.0 } else { 1.0 });
        let scale = lambda.sqrt() * flip;
        for i in 0..n {
            coords[i][k] = col[i] * scale;
        }
    }
    Ok(coords)
}

pub fn write_mds_csv(path: &Path, coords: &[Vec<f64>]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let dims = coords.first().map_or(0, |c| c.len());
    let header: Vec<String> = (0..dims).map(|k| format!("dim{}", k)).collect();
    writeln!(out, "point,{}", header.join(","))?;
    for (i, row) in coords.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|x| format!("{:.12}", x)).collect();
        writeln!(out, "{},{}", i, cells.join(","))?;
    }
    Ok(())
}

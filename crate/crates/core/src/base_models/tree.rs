//! Histogram-binned regression trees with variance-reduction splits.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Feature values quantized into at most `max_bins` bins per feature. When a
/// feature has at most `max_bins` distinct values every value has its own bin,
/// so splits are exact.
pub(crate) struct BinnedMatrix {
    pub n_rows: usize,
    pub n_features: usize,
    /// Column-major bin indices, `bins[f * n_rows + i]`.
    bins: Vec<u16>,
    /// Per feature, ascending cut points; bin `b` holds values in `(cuts[b-1], cuts[b]]`.
    cuts: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn new(x: &[Vec<f64>], max_bins: usize) -> Self {
        let n_rows = x.len();
        let n_features = x.first().map_or(0, Vec::len);
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let mut bins = vec![0u16; n_rows * n_features];
        let mut cuts = Vec::with_capacity(n_features);
        for f in 0..n_features {
            let mut values: Vec<f64> = x.iter().map(|r| r[f]).collect();
            values.sort_by(f64::total_cmp);
            let mut distinct = values.clone();
            distinct.dedup();
            let c: Vec<f64> = if distinct.len() <= max_bins {
                distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            } else {
                let mut c = Vec::with_capacity(max_bins - 1);
                for q in 1..max_bins {
                    let v = values[q * n_rows / max_bins];
                    // first distinct value strictly above v
                    let next = distinct.partition_point(|d| *d <= v);
                    if next < distinct.len() {
                        let cut = 0.5 * (v + distinct[next]);
                        if c.last().is_none_or(|l| *l < cut) {
                            c.push(cut);
                        }
                    }
                }
                c
            };
            for (i, row) in x.iter().enumerate() {
                bins[f * n_rows + i] = c.partition_point(|cut| *cut < row[f]) as u16;
            }
            cuts.push(c);
        }
        BinnedMatrix { n_rows, n_features, bins, cuts }
    }

    #[inline]
    fn bin(&self, f: usize, i: usize) -> usize {
        self.bins[f * self.n_rows + i] as usize
    }

    fn n_bins(&self, f: usize) -> usize {
        self.cuts[f].len() + 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub(crate) enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: f64,
    /// Fraction of features considered at each node; 1.0 uses all.
    pub feature_fraction: f64,
}

struct Best {
    gain: f64,
    feature: usize,
    bin: usize,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Fits `targets` on the rows listed in `rows` with per-row `weights`.
    /// Ties in split gain keep the lowest feature index, then the lowest threshold.
    pub(crate) fn fit<R: Rng>(
        data: &BinnedMatrix,
        targets: &[f64],
        weights: &[f64],
        rows: Vec<u32>,
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = RegressionTree { nodes: Vec::new() };
        tree.grow(data, targets, weights, rows, 0, params, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow<R: Rng>(
        &mut self,
        data: &BinnedMatrix,
        targets: &[f64],
        weights: &[f64],
        rows: Vec<u32>,
        depth: usize,
        params: TreeParams,
        rng: &mut R,
    ) -> usize {
        let (w_total, s_total) = rows.iter().fold((0.0, 0.0), |(w, s), &i| {
            let i = i as usize;
            (w + weights[i], s + weights[i] * targets[i])
        });
        let idx = self.nodes.len();
        let mean = if w_total > 0.0 { s_total / w_total } else { 0.0 };
        self.nodes.push(Node::Leaf(mean));
        if depth >= params.max_depth || w_total < 2.0 * params.min_samples_leaf {
            return idx;
        }
        let Some(best) = best_split(data, targets, weights, &rows, w_total, s_total, params, rng) else {
            return idx;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.iter().partition(|&&i| data.bin(best.feature, i as usize) <= best.bin);
        drop(rows);
        let threshold = data.cuts[best.feature][best.bin];
        let left = self.grow(data, targets, weights, left_rows, depth + 1, params, rng);
        let right = self.grow(data, targets, weights, right_rows, depth + 1, params, rng);
        self.nodes[idx] = Node::Split { feature: best.feature, threshold, left, right };
        idx
    }
}

#[allow(clippy::too_many_arguments)]
fn best_split<R: Rng>(
    data: &BinnedMatrix,
    targets: &[f64],
    weights: &[f64],
    rows: &[u32],
    w_total: f64,
    s_total: f64,
    params: TreeParams,
    rng: &mut R,
) -> Option<Best> {
    let n_features = data.n_features;
    let features: Vec<usize> = if params.feature_fraction >= 1.0 || n_features <= 1 {
        (0..n_features).collect()
    } else {
        let m = ((n_features as f64 * params.feature_fraction).ceil() as usize).clamp(1, n_features);
        let mut f = sample(rng, n_features, m).into_vec();
        f.sort_unstable();
        f
    };
    let parent = s_total * s_total / w_total;
    let mut best: Option<Best> = None;
    let mut hist_w = Vec::new();
    let mut hist_s = Vec::new();
    for f in features {
        let nb = data.n_bins(f);
        if nb < 2 {
            continue;
        }
        hist_w.clear();
        hist_w.resize(nb, 0.0);
        hist_s.clear();
        hist_s.resize(nb, 0.0);
        for &i in rows {
            let i = i as usize;
            let b = data.bin(f, i);
            hist_w[b] += weights[i];
            hist_s[b] += weights[i] * targets[i];
        }
        let (mut wl, mut sl) = (0.0, 0.0);
        for b in 0..nb - 1 {
            wl += hist_w[b];
            sl += hist_s[b];
            let wr = w_total - wl;
            if wl < params.min_samples_leaf || wr < params.min_samples_leaf || hist_w[b] == 0.0 {
                continue;
            }
            let sr = s_total - sl;
            let gain = sl * sl / wl + sr * sr / wr - parent;
            let tol = 1e-12 * parent.abs().max(1e-12);
            if gain > tol && best.as_ref().is_none_or(|bst| gain > bst.gain) {
                best = Some(Best { gain, feature: f, bin: b });
            }
        }
    }
    best
}

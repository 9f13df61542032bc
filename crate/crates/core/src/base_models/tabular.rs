use serde::{Deserialize, Serialize};

/// Saturated lookup model: the prediction for a feature vector seen in
/// training is the mean target of its exact matches; unseen vectors get the
/// global mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMeans {
    keys: Vec<Vec<u64>>,
    means: Vec<f64>,
    global_mean: f64,
}

fn key(row: &[f64]) -> Vec<u64> {
    // -0.0 and 0.0 share a cell
    row.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl TabularMeans {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64]) -> Self {
        let mut cells: Vec<(Vec<u64>, f64)> = x.iter().map(|r| key(r)).zip(y.iter().copied()).collect();
        cells.sort_by(|a, b| a.0.cmp(&b.0));
        let mut keys = Vec::new();
        let mut means = Vec::new();
        let mut i = 0;
        while i < cells.len() {
            let mut j = i;
            let mut sum = 0.0;
            while j < cells.len() && cells[j].0 == cells[i].0 {
                sum += cells[j].1;
                j += 1;
            }
            keys.push(cells[i].0.clone());
            means.push(sum / (j - i) as f64);
            i = j;
        }
        let global_mean = y.iter().sum::<f64>() / y.len() as f64;
        TabularMeans { keys, means, global_mean }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.keys.binary_search(&key(row)) {
            Ok(i) => self.means[i],
            Err(_) => self.global_mean,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.keys.len()
    }
}

//! Fully connected network with tanh hidden units and a linear output,
//! trained by mini-batch Adam on half mean squared error.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MlpParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
}

impl Network {
    /// Xavier-uniform initialisation; biases start at zero.
    pub fn init<R: Rng>(sizes: &[usize], bias: bool, rng: &mut R) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let limit = (6.0 / (n_in + n_out) as f64).sqrt();
                Layer {
                    n_in,
                    n_out,
                    weights: (0..n_in * n_out).map(|_| rng.random_range(-limit..limit)).collect(),
                    bias: bias.then(|| vec![0.0; n_out]),
                }
            })
            .collect();
        Network { layers }
    }

    pub fn zeros(sizes: &[usize], bias: bool) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                n_in: w[0],
                n_out: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: bias.then(|| vec![0.0; w[1]]),
            })
            .collect();
        Network { layers }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.as_ref().map_or(0, Vec::len)).sum()
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(&l.weights);
            if let Some(b) = &l.bias {
                out.extend(b);
            }
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let mut pos = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[pos..pos + n]);
            pos += n;
            if let Some(b) = &mut l.bias {
                let n = b.len();
                b.copy_from_slice(&params[pos..pos + n]);
                pos += n;
            }
        }
    }

    fn forward_all(&self, row: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![row.to_vec()];
        let last = self.layers.len() - 1;
        for (li, l) in self.layers.iter().enumerate() {
            let input = &acts[li];
            let out: Vec<f64> = (0..l.n_out)
                .map(|o| {
                    let w = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                    let z = w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                        + l.bias.as_ref().map_or(0.0, |b| b[o]);
                    if li == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    pub fn forward(&self, row: &[f64]) -> f64 {
        self.forward_all(row).last().unwrap()[0]
    }

    /// Loss `1/(2n) * sum (f(x) - y)^2` and its gradient in [`Network::params`] order.
    pub fn loss_and_gradient(&self, x: &[Vec<f64>], y: &[f64]) -> (f64, Vec<f64>) {
        let n = x.len() as f64;
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> =
            self.layers.iter().map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.n_out])).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (row, target) in x.iter().zip(y) {
            let acts = self.forward_all(row);
            let err = acts[last + 1][0] - target;
            loss += 0.5 * err * err / n;
            let mut delta = vec![err / n];
            for li in (0..=last).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let (gw, gb) = &mut grads[li];
                for o in 0..l.n_out {
                    gb[o] += delta[o];
                    for i in 0..l.n_in {
                        gw[o * l.n_in + i] += delta[o] * input[i];
                    }
                }
                if li > 0 {
                    delta = (0..l.n_in)
                        .map(|i| {
                            let back: f64 = (0..l.n_out).map(|o| l.weights[o * l.n_in + i] * delta[o]).sum();
                            back * (1.0 - input[i] * input[i])
                        })
                        .collect();
                }
            }
        }
        let mut flat = Vec::with_capacity(self.n_params());
        for (l, (gw, gb)) in self.layers.iter().zip(grads) {
            flat.extend(gw);
            if l.bias.is_some() {
                flat.extend(gb);
            }
        }
        (loss, flat)
    }

    /// Central finite-difference gradient with step `h`.
    pub fn numerical_gradient(&self, x: &[Vec<f64>], y: &[f64], h: f64) -> Vec<f64> {
        let base = self.params();
        let mut probe = self.clone();
        (0..base.len())
            .map(|j| {
                let mut p = base.clone();
                p[j] = base[j] + h;
                probe.set_params(&p);
                let up = probe.loss_and_gradient(x, y).0;
                p[j] = base[j] - h;
                probe.set_params(&p);
                let down = probe.loss_and_gradient(x, y).0;
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// Largest relative difference between backprop and central-difference
/// gradients for a network initialised from `params` and `seed`.
pub fn grad_check(params: &MlpParams, x: &[Vec<f64>], y: &[f64], seed: u64) -> f64 {
    use rand::SeedableRng;
    let mut sizes = vec![x[0].len()];
    sizes.extend(&params.hidden);
    sizes.push(1);
    let net = Network::init(&sizes, params.bias, &mut ChaCha8Rng::seed_from_u64(seed));
    max_relative_error(&net, x, y, 1e-5)
}

pub fn max_relative_error(net: &Network, x: &[Vec<f64>], y: &[f64], h: f64) -> f64 {
    let (_, analytic) = net.loss_and_gradient(x, y);
    let numeric = net.numerical_gradient(x, y, h);
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

/// Fitted MLP regressor. Targets are standardized internally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    net: Network,
    y_mean: f64,
    y_std: f64,
}

impl Mlp {
    pub(crate) fn fit(params: &MlpParams, x: &[Vec<f64>], y: &[f64], rng: &mut ChaCha8Rng) -> Self {
        let n = y.len();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_std = if var > 0.0 { var.sqrt() } else { 1.0 };
        let ys: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_std).collect();

        let mut sizes = vec![x[0].len()];
        sizes.extend(&params.hidden);
        sizes.push(1);
        let mut net = Network::init(&sizes, params.bias, rng);
        let mut theta = net.params();
        let mut m = vec![0.0; theta.len()];
        let mut v = vec![0.0; theta.len()];
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..n).collect();
        let batch = params.batch_size.max(1);
        for _ in 0..params.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| x[i].clone()).collect();
                let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
                net.set_params(&theta);
                let (_, g) = net.loss_and_gradient(&bx, &by);
                step += 1;
                let c1 = 1.0 - b1.powi(step);
                let c2 = 1.0 - b2.powi(step);
                for j in 0..theta.len() {
                    m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                    v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                    theta[j] -= params.learning_rate * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                }
            }
        }
        net.set_params(&theta);
        Mlp { net, y_mean, y_std }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.y_mean + self.y_std * self.net.forward(row)
    }
}

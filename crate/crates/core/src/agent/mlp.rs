use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Fully connected network with tanh hidden layers and a linear output.
/// Parameters live in one flat vector: per layer, the row-major weight
/// matrix (out × in) followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Layer activations of one forward pass, input first.
#[derive(Debug, Clone)]
pub struct Cache {
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }
}

impl Mlp {
    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Orthogonal weights (gain `hidden_gain` on hidden layers and
    /// `out_gain` on the last), zero biases.
    pub fn orthogonal<R: Rng>(
        sizes: &[usize],
        hidden_gain: f64,
        out_gain: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "need input and output sizes");
        let mut params = Vec::with_capacity(Self::param_count(sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let gain = if l == last { out_gain } else { hidden_gain };
            params.extend(orthogonal_matrix(w[1], w[0], gain, rng));
            params.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self {
            sizes: sizes.to_vec(),
            params,
        }
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn forward(&self, x: &[f64]) -> Cache {
        assert_eq!(x.len(), self.input_len(), "input width");
        let mut acts = vec![x.to_vec()];
        let mut off = 0;
        let n_layers = self.sizes.len() - 1;
        for (l, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let (wm, rest) = self.params[off..].split_at(n_in * n_out);
            let b = &rest[..n_out];
            let input = acts.last().expect("non-empty");
            let mut out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &wm[o * n_in..(o + 1) * n_in];
                    b[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                })
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Cache { acts }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).acts.pop().expect("non-empty")
    }

    /// Adds d(loss)/d(params) to `grad`, given d(loss)/d(output).
    pub fn backward(&self, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = d_out.to_vec();
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let wm = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&wm[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                // tanh'(z) = 1 - tanh(z)^2, and acts[l] holds tanh(z).
                for (p, a) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - a * a;
                }
                delta = prev;
            }
        }
    }
}

/// A `rows × cols` matrix with orthonormal rows or columns, scaled by `gain`.
fn orthogonal_matrix<R: Rng>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Vec<f64> {
    // Orthonormalize the longer side's vectors with modified Gram-Schmidt.
    let (n, m) = if rows >= cols {
        (cols, rows)
    } else {
        (rows, cols)
    };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(n);
    while vecs.len() < n {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let x = if rows >= cols { vecs[c][r] } else { vecs[r][c] };
            out[r * cols + c] = gain * x;
        }
    }
    out
}

use rand::Rng;

use crate::autodiff::{Tape, TapeModel, Var};
use crate::error::{Error, Result};
use crate::nets::Model;

/// Fully connected ReLU network with linear output scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    /// Per layer, `out × in` row-major.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

struct Cache {
    /// Pre-activations per layer (the last one is the output).
    pre: Vec<Vec<f64>>,
    /// Layer inputs: `x` followed by every hidden activation.
    acts: Vec<Vec<f64>>,
}

impl Mlp {
    /// Random init with every weight and bias drawn from
    /// `U[-1/√fan_in, 1/√fan_in]`.
    pub fn new(widths: &[usize], seed: u64) -> Self {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w > 0), "invalid widths {widths:?}");
        let mut rng = crate::seeded_rng(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let r = 1.0 / (fan_in as f64).sqrt();
            weights.push((0..fan_in * fan_out).map(|_| rng.random_range(-r..r)).collect());
            biases.push((0..fan_out).map(|_| rng.random_range(-r..r)).collect());
        }
        Self {
            widths: widths.to_vec(),
            weights,
            biases,
        }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        let mut net = Self::new(widths, 0);
        net.set_params(&vec![0.0; net.num_params()]);
        net
    }

    pub fn from_layers(weights: Vec<Vec<f64>>, biases: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Domain("layer count mismatch".into()));
        }
        let mut widths = Vec::new();
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let out = b.len();
            if out == 0 || w.len() % out != 0 {
                return Err(Error::Domain(format!("layer {l}: bad shapes")));
            }
            let inp = w.len() / out;
            if l == 0 {
                widths.push(inp);
            } else if widths[l] != inp {
                return Err(Error::Domain(format!("layer {l}: expected {} inputs, got {inp}", widths[l])));
            }
            widths.push(out);
        }
        Ok(Self {
            widths,
            weights,
            biases,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.weights.iter().zip(&self.biases).map(|(w, b)| (w.as_slice(), b.as_slice()))
    }

    fn depth(&self) -> usize {
        self.weights.len()
    }

    /// Scores with input-dimension checking.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.widths[0] {
            return Err(Error::Domain(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.widths[0]
            )));
        }
        Ok(self.forward(x))
    }

    fn run(&self, x: &[f64]) -> Cache {
        let mut pre = Vec::with_capacity(self.depth());
        let mut acts = Vec::with_capacity(self.depth());
        acts.push(x.to_vec());
        for l in 0..self.depth() {
            let inp = &acts[l];
            let n_in = self.widths[l];
            let w = &self.weights[l];
            let z: Vec<f64> = self.biases[l]
                .iter()
                .enumerate()
                .map(|(o, &b)| b + w[o * n_in..(o + 1) * n_in].iter().zip(inp).map(|(w, x)| w * x).sum::<f64>())
                .collect();
            if l + 1 < self.depth() {
                acts.push(z.iter().map(|v| v.max(0.0)).collect());
            }
            pre.push(z);
        }
        Cache { pre, acts }
    }

    /// Backprop of `upstream · scores`; returns the gradient w.r.t. the input.
    fn backprop(&self, cache: &Cache, upstream: &[f64], mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let offsets = self.offsets();
        let mut delta = upstream.to_vec();
        for l in (0..self.depth()).rev() {
            let n_in = self.widths[l];
            let w = &self.weights[l];
            if let Some(g) = grad.as_deref_mut() {
                let (wo, bo) = offsets[l];
                let inp = &cache.acts[l];
                for (o, &dv) in delta.iter().enumerate() {
                    if dv == 0.0 {
                        continue;
                    }
                    g[bo + o] += dv;
                    let row = &mut g[wo + o * n_in..wo + (o + 1) * n_in];
                    for (gi, xi) in row.iter_mut().zip(inp) {
                        *gi += dv * xi;
                    }
                }
            }
            let mut next = vec![0.0; n_in];
            for (o, &dv) in delta.iter().enumerate() {
                if dv == 0.0 {
                    continue;
                }
                for (ni, wi) in next.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *ni += dv * wi;
                }
            }
            if l > 0 {
                for (ni, z) in next.iter_mut().zip(&cache.pre[l - 1]) {
                    if *z <= 0.0 {
                        *ni = 0.0;
                    }
                }
            }
            delta = next;
        }
        delta
    }

    /// `(weight offset, bias offset)` of each layer in the flat parameter vector.
    fn offsets(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.depth());
        let mut o = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push((o, o + w.len()));
            o += w.len() + b.len();
        }
        out
    }

    /// Masked forward products `Q_l = D_l W_l ⋯ D_1 W_1` for `l = 1..L-1`.
    fn jacobian_factors(&self, cache: &Cache) -> Vec<Vec<f64>> {
        let d = self.widths[0];
        let mut qs: Vec<Vec<f64>> = Vec::with_capacity(self.depth());
        for l in 0..self.depth() - 1 {
            let n_out = self.widths[l + 1];
            let n_in = self.widths[l];
            let w = &self.weights[l];
            let mut q = vec![0.0; n_out * d];
            for o in 0..n_out {
                if cache.pre[l][o] <= 0.0 {
                    continue;
                }
                let dst = &mut q[o * d..(o + 1) * d];
                if l == 0 {
                    dst.copy_from_slice(&w[o * n_in..(o + 1) * n_in]);
                } else {
                    let prev = &qs[l - 1];
                    for (i, &wi) in w[o * n_in..(o + 1) * n_in].iter().enumerate() {
                        if wi == 0.0 {
                            continue;
                        }
                        for (dv, pv) in dst.iter_mut().zip(&prev[i * d..(i + 1) * d]) {
                            *dv += wi * pv;
                        }
                    }
                }
            }
            qs.push(q);
        }
        qs
    }
}

impl TapeModel for Mlp {
    fn input_dim(&self) -> usize {
        self.widths[0]
    }

    fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn record<'t>(&self, _tape: &'t Tape, params: &[Var<'t>], x: &[Var<'t>]) -> Vec<Var<'t>> {
        let offsets = self.offsets();
        let mut h: Vec<Var<'t>> = x.to_vec();
        for l in 0..self.depth() {
            let (wo, bo) = offsets[l];
            let n_in = self.widths[l];
            let n_out = self.widths[l + 1];
            let mut z = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let mut acc = params[bo + o];
                for i in 0..n_in {
                    acc = acc + params[wo + o * n_in + i] * h[i];
                }
                z.push(acc);
            }
            h = if l + 1 < self.depth() {
                z.into_iter().map(|v| v.relu()).collect()
            } else {
                z
            };
        }
        h
    }
}

impl Model for Mlp {
    fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w);
            p.extend_from_slice(b);
        }
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let mut o = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&p[o..o + nw]);
            o += nw;
            b.copy_from_slice(&p[o..o + nb]);
            o += nb;
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.run(x).pre.pop().unwrap()
    }

    fn backward(&self, x: &[f64], upstream: &[f64], grad: &mut [f64]) {
        let cache = self.run(x);
        self.backprop(&cache, upstream, Some(grad));
    }

    fn input_grad(&self, x: &[f64], upstream: &[f64]) -> Vec<f64> {
        let cache = self.run(x);
        self.backprop(&cache, upstream, None)
    }

    fn jacobian(&self, x: &[f64]) -> Vec<f64> {
        let cache = self.run(x);
        let d = self.widths[0];
        let n = self.output_dim();
        let last = self.depth() - 1;
        let w = &self.weights[last];
        let n_in = self.widths[last];
        if last == 0 {
            return w.clone();
        }
        let q = &self.jacobian_factors(&cache)[last - 1];
        let mut j = vec![0.0; n * d];
        for k in 0..n {
            let dst = &mut j[k * d..(k + 1) * d];
            for (i, &wi) in w[k * n_in..(k + 1) * n_in].iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                for (dv, qv) in dst.iter_mut().zip(&q[i * d..(i + 1) * d]) {
                    *dv += wi * qv;
                }
            }
        }
        j
    }

    fn jacobian_backward(&self, x: &[f64], g: &[f64], grad: &mut [f64]) {
        let cache = self.run(x);
        let qs = self.jacobian_factors(&cache);
        let offsets = self.offsets();
        let d = self.widths[0];
        // upstream of the current factor product, `n_out(l) × d`
        let mut u = g.to_vec();
        for l in (0..self.depth()).rev() {
            let n_in = self.widths[l];
            let n_out = self.widths[l + 1];
            let w = &self.weights[l];
            let (wo, _) = offsets[l];
            if l + 1 < self.depth() {
                for o in 0..n_out {
                    if cache.pre[l][o] <= 0.0 {
                        u[o * d..(o + 1) * d].iter_mut().for_each(|v| *v = 0.0);
                    }
                }
            }
            // dW_l += U Q_{l-1}^T, with Q_0 = I
            for o in 0..n_out {
                let uo = &u[o * d..(o + 1) * d];
                if uo.iter().all(|v| *v == 0.0) {
                    continue;
                }
                let row = &mut grad[wo + o * n_in..wo + (o + 1) * n_in];
                if l == 0 {
                    for (gi, ui) in row.iter_mut().zip(uo) {
                        *gi += ui;
                    }
                } else {
                    let q = &qs[l - 1];
                    for (i, gi) in row.iter_mut().enumerate() {
                        *gi += uo.iter().zip(&q[i * d..(i + 1) * d]).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            if l == 0 {
                break;
            }
            // U_{l-1} = W_l^T U
            let mut next = vec![0.0; n_in * d];
            for o in 0..n_out {
                let uo = &u[o * d..(o + 1) * d];
                for i in 0..n_in {
                    let wi = w[o * n_in + i];
                    if wi == 0.0 {
                        continue;
                    }
                    for (nv, uv) in next[i * d..(i + 1) * d].iter_mut().zip(uo) {
                        *nv += wi * uv;
                    }
                }
            }
            u = next;
        }
    }
}

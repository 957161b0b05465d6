//! Nonlinear Elman RNN baseline, `h_t = tanh(W_ih e(x_t) + W_hh h_{t-1} + b)`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::ssm::{binary_index, dot, Dense, Head, InputSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct ElmanRnn {
    pub embedding: Dense<f64>,
    pub input_weight: Dense<f64>,
    pub recurrent_weight: Dense<f64>,
    pub bias: Vec<f64>,
    pub head: Head,
}

impl ElmanRnn {
    /// PyTorch-style uniform init in `±1/sqrt(hidden)`, standard normal embedding.
    pub fn random(embedding: usize, hidden: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let mut uni = |_: usize, _: usize| rng.gen_range(-k..k);
        let input_weight = Dense::from_fn(hidden, embedding, &mut uni);
        let recurrent_weight = Dense::from_fn(hidden, hidden, &mut uni);
        let bias = (0..hidden).map(|_| uni(0, 0)).collect();
        let head = Head {
            weight: Dense::from_fn(outputs, hidden, &mut uni),
            bias: (0..outputs).map(|_| uni(0, 0)).collect(),
        };
        let embedding = Dense::from_fn(2, embedding, |_, _| normal.sample(rng));
        Self {
            embedding,
            input_weight,
            recurrent_weight,
            bias,
            head,
        }
    }

    pub fn hidden(&self) -> usize {
        self.bias.len()
    }

    fn cell(&self, tok: usize, h: &[f64], out: &mut [f64]) {
        let e = self.embedding.row(tok);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (dot(self.input_weight.row(i), e) + dot(self.recurrent_weight.row(i), h) + self.bias[i])
                .tanh();
        }
    }

    pub fn final_logits(&self, xs: &InputSequence) -> Result<Vec<f64>> {
        let n = self.hidden();
        let (mut h, mut next) = (vec![0.0; n], vec![0.0; n]);
        for &x in xs.tokens() {
            self.cell(binary_index(x)?, &h, &mut next);
            std::mem::swap(&mut h, &mut next);
        }
        Ok(self.head.apply(&h))
    }

    pub fn step_logits(&self, xs: &InputSequence) -> Result<Vec<Vec<f64>>> {
        let n = self.hidden();
        let (mut h, mut next) = (vec![0.0; n], vec![0.0; n]);
        let mut out = Vec::with_capacity(xs.len());
        for &x in xs.tokens() {
            self.cell(binary_index(x)?, &h, &mut next);
            std::mem::swap(&mut h, &mut next);
            out.push(self.head.apply(&h));
        }
        Ok(out)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(&mut f64)) {
        self.embedding.as_mut_slice().iter_mut().for_each(&mut *f);
        self.input_weight.as_mut_slice().iter_mut().for_each(&mut *f);
        self.recurrent_weight.as_mut_slice().iter_mut().for_each(&mut *f);
        self.bias.iter_mut().for_each(&mut *f);
        self.head.weight.as_mut_slice().iter_mut().for_each(&mut *f);
        self.head.bias.iter_mut().for_each(&mut *f);
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut copy = self.clone();
        let mut out = Vec::new();
        copy.visit_params(&mut |v| out.push(*v));
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        let mut it = params.iter();
        self.visit_params(&mut |v| *v = *it.next().expect("parameter count mismatch"));
    }

    /// Gradient (flattened like [`Self::flat_params`]) for head-output
    /// gradients `dlogits[t]`; empty entries are zero. Returns the head outputs.
    pub fn backprop(
        &self,
        xs: &InputSequence,
        dlogits: impl FnOnce(&[Vec<f64>]) -> Vec<Vec<f64>>,
        grad: &mut ElmanRnn,
    ) -> Result<Vec<Vec<f64>>> {
        let n = self.hidden();
        let toks: Vec<usize> = xs.tokens().iter().map(|&x| binary_index(x)).collect::<Result<_>>()?;
        let mut states = vec![vec![0.0; n]];
        for &tok in &toks {
            let mut next = vec![0.0; n];
            self.cell(tok, states.last().expect("h0"), &mut next);
            states.push(next);
        }
        let logits: Vec<Vec<f64>> = states[1..].iter().map(|h| self.head.apply(h)).collect();
        let dl = dlogits(&logits);

        let mut gh = vec![0.0; n];
        for t in (0..toks.len()).rev() {
            let h = &states[t + 1];
            if let Some(d) = dl.get(t).filter(|d| !d.is_empty()) {
                for (k, &g) in d.iter().enumerate() {
                    grad.head.bias[k] += g;
                    let grow = grad.head.weight.row_mut(k);
                    let wrow = self.head.weight.row(k);
                    for i in 0..n {
                        grow[i] += g * h[i];
                        gh[i] += g * wrow[i];
                    }
                }
            }
            let gpre: Vec<f64> = (0..n).map(|i| gh[i] * (1.0 - h[i] * h[i])).collect();
            let e = self.embedding.row(toks[t]);
            let h_prev = &states[t];
            let mut g_prev = vec![0.0; n];
            let mut g_emb = vec![0.0; e.len()];
            for i in 0..n {
                let g = gpre[i];
                grad.bias[i] += g;
                let gi = grad.input_weight.row_mut(i);
                for (m, em) in e.iter().enumerate() {
                    gi[m] += g * em;
                    g_emb[m] += g * self.input_weight.get(i, m);
                }
                let gr = grad.recurrent_weight.row_mut(i);
                let wr = self.recurrent_weight.row(i);
                for j in 0..n {
                    gr[j] += g * h_prev[j];
                    g_prev[j] += g * wr[j];
                }
            }
            for (g, d) in grad.embedding.row_mut(toks[t]).iter_mut().zip(&g_emb) {
                *g += d;
            }
            gh = g_prev;
        }
        Ok(logits)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_params(&mut |v| *v = 0.0);
        z
    }
}

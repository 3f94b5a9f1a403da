//! Row embedding -> LSTM over days -> concat with time-fixed embeddings ->
//! fully connected head. Gate order in the stacked LSTM matrices is
//! input, forget, cell, output.

use super::dense::{self, Stack};
use super::{BlockRole, EncodedInput, InputShape, Layout, LayoutBuilder, ModelKind, RiskModelSpec};

pub(crate) fn add_blocks(
    b: &mut LayoutBuilder,
    input: &InputShape,
    embedding: usize,
    hidden: usize,
    tf_dim: usize,
    head: &[usize],
) {
    let row = input.row_width();
    b.push("embed.weight".into(), BlockRole::Weight, row, embedding, row * embedding);
    b.push("embed.bias".into(), BlockRole::Bias, row, embedding, embedding);
    b.push("lstm.w_ih".into(), BlockRole::Weight, embedding, 4 * hidden, 4 * hidden * embedding);
    b.push("lstm.w_hh".into(), BlockRole::Weight, hidden, 4 * hidden, 4 * hidden * hidden);
    b.push("lstm.bias".into(), BlockRole::LstmBias, hidden, 4 * hidden, 4 * hidden);
    for (j, &vocab) in input.vocab_sizes.iter().enumerate() {
        b.push(format!("tf.{j}"), BlockRole::Embedding, vocab, tf_dim, vocab * tf_dim);
    }
    dense::add_stack(b, "head", hidden + tf_dim * input.vocab_sizes.len(), head);
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) struct Composite {
    row: usize,
    emb: usize,
    hid: usize,
    tf_dim: usize,
    embed_w: usize,
    embed_b: usize,
    w_ih: usize,
    w_hh: usize,
    bias: usize,
    tf: Vec<usize>,
    head: Stack,
}

pub(crate) struct Step {
    e: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

pub(crate) struct Trace {
    rows: Vec<Vec<f64>>,
    steps: Vec<Step>,
    pub head: dense::Trace,
}

impl Trace {
    pub(crate) fn output(&self) -> f64 {
        self.head.output
    }
}

fn affine(params: &[f64], w: usize, b: usize, n_in: usize, n_out: usize, x: &[f64], out: &mut [f64]) {
    for (o, y) in out.iter_mut().enumerate().take(n_out) {
        let row = &params[w + o * n_in..w + (o + 1) * n_in];
        *y = params[b + o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

fn matvec_acc(params: &[f64], w: usize, n_in: usize, x: &[f64], out: &mut [f64]) {
    for (o, y) in out.iter_mut().enumerate() {
        let row = &params[w + o * n_in..w + (o + 1) * n_in];
        *y += row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

/// `out[c] += sum_r W[r][c] * d[r]` and `G[r][c] += d[r] * x[c]`.
fn backprop_matrix(params: &[f64], grad: &mut [f64], w: usize, n_in: usize, d: &[f64], x: &[f64], out: Option<&mut [f64]>) {
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let g = &mut grad[w + r * n_in..w + (r + 1) * n_in];
        for (gc, xc) in g.iter_mut().zip(x) {
            *gc += dr * xc;
        }
    }
    if let Some(out) = out {
        for (r, &dr) in d.iter().enumerate() {
            if dr == 0.0 {
                continue;
            }
            let row = &params[w + r * n_in..w + (r + 1) * n_in];
            for (oc, wc) in out.iter_mut().zip(row) {
                *oc += dr * wc;
            }
        }
    }
}

impl Composite {
    pub(crate) fn new(spec: &RiskModelSpec, layout: &Layout) -> Self {
        let ModelKind::Composite { embedding, hidden, time_fixed_embedding, .. } = spec.kind else {
            unreachable!("composite network built from a non-composite spec")
        };
        let start = |name: &str| layout.block(name).expect("layout matches spec").start;
        Self {
            row: spec.input.row_width(),
            emb: embedding,
            hid: hidden,
            tf_dim: time_fixed_embedding,
            embed_w: start("embed.weight"),
            embed_b: start("embed.bias"),
            w_ih: start("lstm.w_ih"),
            w_hh: start("lstm.w_hh"),
            bias: start("lstm.bias"),
            tf: (0..spec.input.vocab_sizes.len()).map(|j| start(&format!("tf.{j}"))).collect(),
            head: Stack::from_layout(layout, "head"),
        }
    }

    pub(crate) fn forward(&self, params: &[f64], input: &EncodedInput) -> Trace {
        let m = input.longitudinal;
        let h4 = 4 * self.hid;
        let mut rows = Vec::with_capacity(m.days());
        let mut steps: Vec<Step> = Vec::with_capacity(m.days());
        let zeros = vec![0.0; self.hid];
        for d in 0..m.days() {
            let mut row = Vec::with_capacity(self.row);
            m.push_row(d, &mut row);
            let mut e = vec![0.0; self.emb];
            affine(params, self.embed_w, self.embed_b, self.row, self.emb, &row, &mut e);
            let (h_prev, c_prev) = steps.last().map_or((&zeros, &zeros), |s| (&s.h, &s.c));
            let mut a = params[self.bias..self.bias + h4].to_vec();
            matvec_acc(params, self.w_ih, self.emb, &e, &mut a);
            matvec_acc(params, self.w_hh, self.hid, h_prev, &mut a);
            let n = self.hid;
            let i: Vec<f64> = a[..n].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = a[n..2 * n].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = a[2 * n..3 * n].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = a[3 * n..].iter().map(|&v| sigmoid(v)).collect();
            let c: Vec<f64> = (0..n).map(|u| f[u] * c_prev[u] + i[u] * g[u]).collect();
            let h: Vec<f64> = (0..n).map(|u| o[u] * c[u].tanh()).collect();
            rows.push(row);
            steps.push(Step { e, i, f, g, o, c, h });
        }
        let mut z = steps.last().map_or_else(|| zeros.clone(), |s| s.h.clone());
        for (&start, &level) in self.tf.iter().zip(input.time_fixed) {
            let at = start + level * self.tf_dim;
            z.extend_from_slice(&params[at..at + self.tf_dim]);
        }
        let head = self.head.forward(params, &z);
        Trace { rows, steps, head }
    }

    pub(crate) fn backward(&self, params: &[f64], input: &EncodedInput, trace: &Trace, upstream: f64, grad: &mut [f64]) {
        let n = self.hid;
        let mut dz = vec![0.0; n + self.tf_dim * self.tf.len()];
        self.head.backward(params, &trace.head, upstream, grad, Some(&mut dz));
        for (j, (&start, &level)) in self.tf.iter().zip(input.time_fixed).enumerate() {
            let at = start + level * self.tf_dim;
            let src = &dz[n + j * self.tf_dim..n + (j + 1) * self.tf_dim];
            for (g, d) in grad[at..at + self.tf_dim].iter_mut().zip(src) {
                *g += d;
            }
        }
        let zeros = vec![0.0; n];
        let mut dh = dz[..n].to_vec();
        let mut dc = vec![0.0; n];
        let mut da = vec![0.0; 4 * n];
        for t in (0..trace.steps.len()).rev() {
            let s = &trace.steps[t];
            let (h_prev, c_prev) = if t == 0 { (&zeros, &zeros) } else { (&trace.steps[t - 1].h, &trace.steps[t - 1].c) };
            for u in 0..n {
                let tc = s.c[u].tanh();
                let d_o = dh[u] * tc;
                dc[u] += dh[u] * s.o[u] * (1.0 - tc * tc);
                let d_i = dc[u] * s.g[u];
                let d_g = dc[u] * s.i[u];
                let d_f = dc[u] * c_prev[u];
                da[u] = d_i * s.i[u] * (1.0 - s.i[u]);
                da[n + u] = d_f * s.f[u] * (1.0 - s.f[u]);
                da[2 * n + u] = d_g * (1.0 - s.g[u] * s.g[u]);
                da[3 * n + u] = d_o * s.o[u] * (1.0 - s.o[u]);
                dc[u] *= s.f[u];
            }
            for (g, d) in grad[self.bias..self.bias + 4 * n].iter_mut().zip(&da) {
                *g += d;
            }
            let mut de = vec![0.0; self.emb];
            backprop_matrix(params, grad, self.w_ih, self.emb, &da, &s.e, Some(&mut de));
            let mut dh_prev = vec![0.0; n];
            backprop_matrix(params, grad, self.w_hh, n, &da, h_prev, (t > 0).then_some(dh_prev.as_mut_slice()));
            for (g, d) in grad[self.embed_b..self.embed_b + self.emb].iter_mut().zip(&de) {
                *g += d;
            }
            backprop_matrix(params, grad, self.embed_w, self.row, &de, &trace.rows[t], None);
            dh = dh_prev;
        }
    }
}

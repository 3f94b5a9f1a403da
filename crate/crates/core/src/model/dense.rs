//! Affine/ReLU stacks. Weights are row-major `[out][in]`; every layer but
//! the last is followed by a ReLU whose derivative at 0 is taken as 0.

use super::{BlockRole, Layout, LayoutBuilder};

pub(crate) fn add_stack(b: &mut LayoutBuilder, prefix: &str, n_in: usize, sizes: &[usize]) {
    let mut fan_in = n_in;
    for (l, &out) in sizes.iter().enumerate() {
        b.push(format!("{prefix}.{l}.weight"), BlockRole::Weight, fan_in, out, fan_in * out);
        b.push(format!("{prefix}.{l}.bias"), BlockRole::Bias, fan_in, out, out);
        fan_in = out;
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: usize,
    b: usize,
    n_in: usize,
    n_out: usize,
}

pub(crate) struct Stack {
    layers: Vec<Layer>,
}

pub(crate) struct Trace {
    /// Input to each layer; `acts[0]` is the stack input.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Vec<f64>>,
    pub output: f64,
}

impl Trace {
    pub(crate) fn relu_margin(&self) -> f64 {
        self.pre.iter().flatten().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

impl Stack {
    pub(crate) fn from_layout(layout: &Layout, prefix: &str) -> Self {
        let mut layers = Vec::new();
        for l in 0.. {
            let (Some(w), Some(b)) =
                (layout.block(&format!("{prefix}.{l}.weight")), layout.block(&format!("{prefix}.{l}.bias")))
            else {
                break;
            };
            layers.push(Layer { w: w.start, b: b.start, n_in: w.fan_in, n_out: w.fan_out });
        }
        Self { layers }
    }

    pub(crate) fn forward(&self, params: &[f64], x: &[f64]) -> Trace {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let input = &acts[l];
            debug_assert_eq!(input.len(), layer.n_in);
            let z: Vec<f64> = (0..layer.n_out)
                .map(|o| {
                    let row = &params[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                    params[layer.b + o] + row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>()
                })
                .collect();
            if l == last {
                acts.push(z);
            } else {
                acts.push(z.iter().map(|&v| v.max(0.0)).collect());
                pre.push(z);
            }
        }
        let output = acts.last().unwrap()[0];
        Trace { acts, pre, output }
    }

    /// Accumulates `upstream * d out / d theta` into `grad`, and into `dx`
    /// the gradient with respect to the stack input when requested.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        trace: &Trace,
        upstream: f64,
        grad: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let mut delta = vec![upstream];
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.acts[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grad[layer.b + o] += d;
                let g = &mut grad[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                for (gi, a) in g.iter_mut().zip(input) {
                    *gi += d * a;
                }
            }
            if l == 0 && dx.is_none() {
                break;
            }
            let mut din = vec![0.0; layer.n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &params[layer.w + o * layer.n_in..layer.w + (o + 1) * layer.n_in];
                for (di, w) in din.iter_mut().zip(row) {
                    *di += d * w;
                }
            }
            if l == 0 {
                if let Some(dx) = dx.as_deref_mut() {
                    for (a, b) in dx.iter_mut().zip(&din) {
                        *a += b;
                    }
                }
                break;
            }
            for (di, z) in din.iter_mut().zip(&trace.pre[l - 1]) {
                if *z <= 0.0 {
                    *di = 0.0;
                }
            }
            delta = din;
        }
    }
}

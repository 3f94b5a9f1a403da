//! Differentiable risk functions `r(x)`.
//!
//! Three kinds share one flat parameter vector with a named block layout:
//!
//! - `linear`: `w . flat(x) + b`
//! - `mlp`: affine/ReLU stack over `flat(x)`
//! - `composite`: an affine row embedding feeding an LSTM over the `D`
//!   longitudinal rows; the final hidden state is concatenated with learned
//!   time-fixed embeddings and passed through a fully connected head.
//!
//! `flat(x)` concatenates the matrix rows along the day axis and appends a
//! one-hot encoding of each time-fixed feature.

mod composite;
mod dense;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::{FeatureSchema, LongitudinalMatrix};
use crate::error::{Error, Result};
use crate::seed;

/// One patient's features as seen by a risk model.
#[derive(Debug, Clone, Copy)]
pub struct EncodedInput<'a> {
    pub longitudinal: &'a LongitudinalMatrix,
    pub time_fixed: &'a [usize],
}

impl EncodedInput<'_> {
    /// Rows of the matrix along the day axis, then one-hot time-fixed levels.
    pub fn flattened(&self, vocab_sizes: &[usize]) -> Vec<f64> {
        let m = self.longitudinal;
        let mut out = Vec::with_capacity(m.days() * m.width() * 2 + vocab_sizes.iter().sum::<usize>());
        for d in 0..m.days() {
            m.push_row(d, &mut out);
        }
        for (&level, &size) in self.time_fixed.iter().zip(vocab_sizes) {
            out.extend((0..size).map(|l| if l == level { 1.0 } else { 0.0 }));
        }
        out
    }
}

/// Dimensions of the encoded input a model consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputShape {
    pub days: usize,
    /// `W`; each row has `2W` entries.
    pub n_longitudinal: usize,
    pub vocab_sizes: Vec<usize>,
}

impl InputShape {
    pub fn from_schema(schema: &FeatureSchema, days: usize) -> Self {
        Self { days, n_longitudinal: schema.width(), vocab_sizes: schema.vocab_sizes() }
    }

    pub fn row_width(&self) -> usize {
        2 * self.n_longitudinal
    }

    pub fn flat_dim(&self) -> usize {
        self.days * self.row_width() + self.vocab_sizes.iter().sum::<usize>()
    }

    pub fn check(&self, input: &EncodedInput) -> Result<()> {
        let m = input.longitudinal;
        if m.days() != self.days {
            return Err(Error::Shape { expected: self.days, actual: m.days() });
        }
        if m.width() != self.n_longitudinal {
            return Err(Error::Shape { expected: self.n_longitudinal, actual: m.width() });
        }
        if input.time_fixed.len() != self.vocab_sizes.len() {
            return Err(Error::Shape { expected: self.vocab_sizes.len(), actual: input.time_fixed.len() });
        }
        for (&level, &size) in input.time_fixed.iter().zip(&self.vocab_sizes) {
            if level >= size {
                return Err(Error::Shape { expected: size, actual: level });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    Mlp {
        #[serde(default = "default_mlp_hidden")]
        hidden: Vec<usize>,
    },
    Composite {
        /// Size of the affine embedding of each `2W` row.
        #[serde(default = "default_embedding")]
        embedding: usize,
        /// LSTM hidden size.
        #[serde(default = "default_recurrent_hidden")]
        hidden: usize,
        #[serde(default = "default_time_fixed_embedding")]
        time_fixed_embedding: usize,
        /// Fully connected head; the last entry must be 1.
        #[serde(default = "default_head")]
        head: Vec<usize>,
    },
}

fn default_mlp_hidden() -> Vec<usize> {
    vec![128, 64]
}
fn default_embedding() -> usize {
    15
}
fn default_recurrent_hidden() -> usize {
    32
}
fn default_time_fixed_embedding() -> usize {
    2
}
fn default_head() -> Vec<usize> {
    vec![32, 16, 1]
}

impl ModelKind {
    pub fn mlp() -> Self {
        Self::Mlp { hidden: default_mlp_hidden() }
    }

    pub fn composite() -> Self {
        Self::Composite {
            embedding: default_embedding(),
            hidden: default_recurrent_hidden(),
            time_fixed_embedding: default_time_fixed_embedding(),
            head: default_head(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub input: InputShape,
}

impl RiskModelSpec {
    pub fn new(kind: ModelKind, input: InputShape) -> Result<Self> {
        let spec = Self { kind, input };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid model spec: {what}")));
        if self.input.days == 0 {
            return bad("input must have at least one day");
        }
        match &self.kind {
            ModelKind::Linear => Ok(()),
            ModelKind::Mlp { hidden } if hidden.contains(&0) => bad("hidden sizes must be >= 1"),
            ModelKind::Mlp { .. } => Ok(()),
            ModelKind::Composite { embedding, hidden, time_fixed_embedding, head } => {
                if *embedding == 0 || *hidden == 0 || *time_fixed_embedding == 0 || head.contains(&0) {
                    return bad("sizes must be >= 1");
                }
                if head.last() != Some(&1) {
                    return bad("head must end in a layer of size 1");
                }
                Ok(())
            }
        }
    }

    /// Deterministic block layout of the parameter vector.
    pub fn layout(&self) -> Layout {
        let mut b = LayoutBuilder::default();
        let flat = self.input.flat_dim();
        match &self.kind {
            ModelKind::Linear => dense::add_stack(&mut b, "out", flat, &[1]),
            ModelKind::Mlp { hidden } => {
                let mut sizes = hidden.clone();
                sizes.push(1);
                dense::add_stack(&mut b, "mlp", flat, &sizes);
            }
            ModelKind::Composite { embedding, hidden, time_fixed_embedding, head } => {
                composite::add_blocks(&mut b, &self.input, *embedding, *hidden, *time_fixed_embedding, head)
            }
        }
        b.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockRole {
    Weight,
    Bias,
    /// LSTM bias; the forget-gate quarter starts at 1.
    LstmBias,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub role: BlockRole,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub blocks: Vec<Block>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }

    /// Blocks are contiguous, in order, and cover `0..len`.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for b in &self.blocks {
            if b.start != next {
                return Err(Error::Config(format!("layout block {:?} is not contiguous", b.name)));
            }
            next += b.len;
        }
        Ok(())
    }
}

#[derive(Default)]
pub(crate) struct LayoutBuilder {
    blocks: Vec<Block>,
    next: usize,
}

impl LayoutBuilder {
    pub(crate) fn push(&mut self, name: String, role: BlockRole, fan_in: usize, fan_out: usize, len: usize) -> usize {
        let start = self.next;
        self.blocks.push(Block { name, start, len, role, fan_in, fan_out });
        self.next += len;
        start
    }

    fn finish(self) -> Layout {
        Layout { blocks: self.blocks }
    }
}

/// Flat parameters plus the layout naming their blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Layout) -> Result<Self> {
        layout.validate()?;
        if values.len() != layout.len() {
            return Err(Error::Shape { expected: layout.len(), actual: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameters must be finite".into()));
        }
        Ok(Self { values, layout })
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.values[b.range()])
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.layout.block(name)?.range();
        Some(&mut self.values[range])
    }
}

/// Glorot-uniform weights, zero biases, forget-gate bias 1.
pub fn init_params(spec: &RiskModelSpec, seed: u64) -> ParamVector {
    let layout = spec.layout();
    let mut rng = seed::rng(seed);
    let mut values = vec![0.0; layout.len()];
    for block in &layout.blocks {
        let slot = &mut values[block.range()];
        match block.role {
            BlockRole::Weight | BlockRole::Embedding => {
                let s = (6.0 / (block.fan_in + block.fan_out) as f64).sqrt();
                for v in slot.iter_mut() {
                    *v = rng.gen_range(-s..=s);
                }
            }
            BlockRole::Bias => {}
            BlockRole::LstmBias => {
                let h = slot.len() / 4;
                slot[h..2 * h].fill(1.0);
            }
        }
    }
    ParamVector { values, layout }
}

/// Anything that maps an encoded patient to a scalar risk.
pub trait RiskScorer {
    fn risk(&self, input: &EncodedInput) -> Result<f64>;
}

/// Risks for every input, in input order.
pub fn score_all<S: RiskScorer + Sync + ?Sized>(scorer: &S, inputs: &[EncodedInput]) -> Result<Vec<f64>> {
    use rayon::prelude::*;
    inputs.par_iter().map(|x| scorer.risk(x)).collect()
}

/// A risk scorer that also predicts `S(t | x)`.
pub trait SurvivalPredictor: RiskScorer {
    fn survival(&self, input: &EncodedInput, t: f64) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub spec: RiskModelSpec,
    pub params: ParamVector,
}

impl RiskModel {
    pub fn new(spec: RiskModelSpec, params: ParamVector) -> Result<Self> {
        spec.validate()?;
        if params.layout != spec.layout() {
            return Err(Error::Shape { expected: spec.layout().len(), actual: params.values.len() });
        }
        Ok(Self { spec, params })
    }

    pub fn init(spec: RiskModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_params(&spec, seed);
        Ok(Self { spec, params })
    }

    pub fn n_params(&self) -> usize {
        self.params.values.len()
    }

    pub fn forward(&self, input: &EncodedInput) -> Result<f64> {
        self.forward_with(&self.params.values, input)
    }

    /// Forward pass with an alternative parameter vector of the same layout.
    pub fn forward_with(&self, params: &[f64], input: &EncodedInput) -> Result<f64> {
        self.spec.input.check(input)?;
        if params.len() != self.params.values.len() {
            return Err(Error::Shape { expected: self.params.values.len(), actual: params.len() });
        }
        Ok(match &self.spec.kind {
            ModelKind::Linear | ModelKind::Mlp { .. } => {
                let flat = input.flattened(&self.spec.input.vocab_sizes);
                dense::Stack::from_layout(&self.params.layout, self.dense_prefix()).forward(params, &flat).output
            }
            ModelKind::Composite { .. } => composite::Composite::new(&self.spec, &self.params.layout)
                .forward(params, input)
                .output(),
        })
    }

    fn dense_prefix(&self) -> &'static str {
        match self.spec.kind {
            ModelKind::Linear => "out",
            _ => "mlp",
        }
    }

    /// `upstream * d r / d theta`, as a parameter vector with this layout.
    pub fn backward(&self, input: &EncodedInput, upstream: f64) -> Result<ParamVector> {
        let mut grad = vec![0.0; self.n_params()];
        self.backward_into(&self.params.values, input, upstream, &mut grad)?;
        Ok(ParamVector { values: grad, layout: self.params.layout.clone() })
    }

    /// Accumulates `upstream * d r / d theta` at `params` into `grad` and
    /// returns the risk.
    pub fn backward_into(&self, params: &[f64], input: &EncodedInput, upstream: f64, grad: &mut [f64]) -> Result<f64> {
        self.spec.input.check(input)?;
        if params.len() != grad.len() || params.len() != self.n_params() {
            return Err(Error::Shape { expected: self.n_params(), actual: grad.len() });
        }
        Ok(match &self.spec.kind {
            ModelKind::Linear | ModelKind::Mlp { .. } => {
                let flat = input.flattened(&self.spec.input.vocab_sizes);
                let stack = dense::Stack::from_layout(&self.params.layout, self.dense_prefix());
                let trace = stack.forward(params, &flat);
                stack.backward(params, &trace, upstream, grad, None);
                trace.output
            }
            ModelKind::Composite { .. } => {
                let net = composite::Composite::new(&self.spec, &self.params.layout);
                let trace = net.forward(params, input);
                net.backward(params, input, &trace, upstream, grad);
                trace.output()
            }
        })
    }

    /// Smallest `|pre-activation|` over all ReLU units for this input, or
    /// infinity for models without ReLU. Finite-difference probes need this
    /// margin to stay away from kinks.
    pub fn relu_margin(&self, input: &EncodedInput) -> Result<f64> {
        self.spec.input.check(input)?;
        Ok(match &self.spec.kind {
            ModelKind::Linear | ModelKind::Mlp { .. } => {
                let flat = input.flattened(&self.spec.input.vocab_sizes);
                let stack = dense::Stack::from_layout(&self.params.layout, self.dense_prefix());
                stack.forward(&self.params.values, &flat).relu_margin()
            }
            ModelKind::Composite { .. } => composite::Composite::new(&self.spec, &self.params.layout)
                .forward(&self.params.values, input)
                .head
                .relu_margin(),
        })
    }
}

impl RiskScorer for RiskModel {
    fn risk(&self, input: &EncodedInput) -> Result<f64> {
        self.forward(input)
    }
}

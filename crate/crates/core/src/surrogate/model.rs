use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use super::{feature_scale, SurrogateConfig, TokenVocab, FEATURE_WIDTH};
use crate::autodiff::{AutodiffError, Graph, NodeId, ParamStore, Tensor};
use crate::dataset::BasicBlock;
use crate::math;
use crate::params::{TableLayout, GLOBAL_WIDTH, ROW_WIDTH};

/// Graph store slot holding the surrogate weights.
pub const WEIGHTS_STORE: usize = 0;
/// Graph store slot holding a relaxed parameter table: tensor 0 is the
/// `[opcodes, 15]` row matrix, tensor 1 the two globals.
pub const TABLE_STORE: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurrogateError {
    #[error("surrogate dimensions must all be at least 1")]
    InvalidConfig,
    #[error("opcode {0:?} is not in the parameter table")]
    UnknownOpcode(String),
    #[error("target must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("missing weight tensor {0:?}")]
    MissingWeight(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Where the parameter features of a forward pass come from.
#[derive(Clone, Copy, Debug)]
pub enum TableInput<'t> {
    /// Ready-made features, one row per instruction (see
    /// [`fixed_features`](super::fixed_features)). No gradient flows.
    Fixed(&'t [[f64; FEATURE_WIDTH]]),
    /// The relaxed table in [`TABLE_STORE`]; features are `|v| · scale`.
    Relaxed,
    /// Like `Relaxed`, but `|v|` is rounded before scaling, so the model sees
    /// exactly the features of the table extraction would produce. Gradients
    /// pass straight through the rounding.
    Rounded,
}

/// A block resolved to token ids and parameter-table rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedBlock {
    pub tokens: Vec<Vec<usize>>,
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
struct Cell {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Surrogate {
    config: SurrogateConfig,
    vocab: TokenVocab,
    weights: ParamStore,
    embedding: usize,
    token_cells: Vec<Cell>,
    instr_cells: Vec<Cell>,
    head_w: usize,
    head_b: usize,
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

impl Surrogate {
    /// Fresh weights: uniform in ±1/√hidden, forget-gate bias 1.
    pub fn new(config: SurrogateConfig, vocab: TokenVocab, rng: &mut impl Rng) -> Result<Self, SurrogateError> {
        config.validate()?;
        let h = config.hidden_dim;
        let bound = 1.0 / math::sqrt(h as f64);
        let mut w = ParamStore::new();
        w.push("embedding", uniform(rng, &[vocab.len(), config.embed_dim], 1.0));
        let mut add_stack = |w: &mut ParamStore, prefix: &str, first_in: usize| {
            for l in 0..config.depth {
                let input = if l == 0 { first_in } else { h };
                w.push(format!("{prefix}.{l}.w"), uniform(rng, &[input + h, 4 * h], bound));
                let mut b = uniform(rng, &[4 * h], bound);
                b.data_mut()[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
                w.push(format!("{prefix}.{l}.b"), b);
            }
        };
        add_stack(&mut w, "token", config.embed_dim);
        add_stack(&mut w, "instr", h + FEATURE_WIDTH);
        w.push("head.w", uniform(rng, &[h, 1], bound));
        w.push("head.b", Tensor::vector(vec![0.0]));
        Surrogate::from_weights(config, vocab, w)
    }

    /// Wraps existing weights, checking every expected tensor and its shape.
    pub fn from_weights(config: SurrogateConfig, vocab: TokenVocab, weights: ParamStore) -> Result<Self, SurrogateError> {
        config.validate()?;
        let h = config.hidden_dim;
        let find = |name: String, shape: &[usize]| -> Result<usize, SurrogateError> {
            let i = weights
                .index_of(&name)
                .ok_or_else(|| SurrogateError::MissingWeight(name.clone()))?;
            if weights.get(i).shape() != shape {
                return Err(AutodiffError::ShapeMismatch {
                    op: "load",
                    left: shape.to_vec(),
                    right: weights.get(i).shape().to_vec(),
                }
                .into());
            }
            Ok(i)
        };
        let stack = |prefix: &str, first_in: usize| -> Result<Vec<Cell>, SurrogateError> {
            (0..config.depth)
                .map(|l| {
                    let input = if l == 0 { first_in } else { h };
                    Ok(Cell {
                        w: find(format!("{prefix}.{l}.w"), &[input + h, 4 * h])?,
                        b: find(format!("{prefix}.{l}.b"), &[4 * h])?,
                    })
                })
                .collect()
        };
        Ok(Surrogate {
            embedding: find("embedding".into(), &[vocab.len(), config.embed_dim])?,
            token_cells: stack("token", config.embed_dim)?,
            instr_cells: stack("instr", h + FEATURE_WIDTH)?,
            head_w: find("head.w".into(), &[h, 1])?,
            head_b: find("head.b".into(), &[1])?,
            config,
            vocab,
            weights,
        })
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }

    pub fn vocab(&self) -> &TokenVocab {
        &self.vocab
    }

    pub fn weights(&self) -> &ParamStore {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut ParamStore {
        &mut self.weights
    }

    pub fn set_output_bias(&mut self, v: f64) {
        self.weights.get_mut(self.head_b).data_mut()[0] = v;
    }

    pub fn encode(&self, block: &BasicBlock, layout: &TableLayout) -> Result<EncodedBlock, SurrogateError> {
        let rows = block
            .instructions
            .iter()
            .map(|i| {
                layout
                    .index_of(&i.opcode)
                    .ok_or_else(|| SurrogateError::UnknownOpcode(i.opcode.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(EncodedBlock {
            tokens: block.instructions.iter().map(|i| self.vocab.encode(i)).collect(),
            rows,
        })
    }

    fn cell(&self, g: &mut Graph<'_>, cell: &Cell, x: NodeId, h: NodeId, c: NodeId) -> Result<(NodeId, NodeId), AutodiffError> {
        let hd = self.config.hidden_dim;
        let w = g.param(WEIGHTS_STORE, cell.w);
        let b = g.param(WEIGHTS_STORE, cell.b);
        let xh = g.concat(&[x, h])?;
        let z = g.matmul(xh, w)?;
        let z = g.add(z, b)?;
        let i = g.slice(z, 0, hd)?;
        let i = g.sigmoid(i);
        let f = g.slice(z, hd, hd)?;
        let f = g.sigmoid(f);
        let u = g.slice(z, 2 * hd, hd)?;
        let u = g.tanh(u);
        let o = g.slice(z, 3 * hd, hd)?;
        let o = g.sigmoid(o);
        let fc = g.mul(f, c)?;
        let iu = g.mul(i, u)?;
        let c = g.add(fc, iu)?;
        let tc = g.tanh(c);
        let h = g.mul(o, tc)?;
        Ok((h, c))
    }

    /// Runs a stack over `inputs`, returning the top layer's final output.
    fn run_stack(&self, g: &mut Graph<'_>, cells: &[Cell], inputs: &[NodeId]) -> Result<NodeId, AutodiffError> {
        let zero = g.constant(Tensor::zeros(&[self.config.hidden_dim]));
        let mut state = vec![(zero, zero); cells.len()];
        let mut top = zero;
        for &x in inputs {
            let mut x = x;
            for (cell, st) in cells.iter().zip(state.iter_mut()) {
                *st = self.cell(g, cell, x, st.0, st.1)?;
                x = st.0;
            }
            top = x;
        }
        Ok(top)
    }

    /// One vector per instruction: the token stack's final top-layer output.
    pub fn embed_block(&self, g: &mut Graph<'_>, block: &EncodedBlock) -> Result<Vec<NodeId>, AutodiffError> {
        let table = g.param(WEIGHTS_STORE, self.embedding);
        block
            .tokens
            .iter()
            .map(|toks| {
                let inputs = toks
                    .iter()
                    .map(|&t| g.embedding(table, t))
                    .collect::<Result<Vec<_>, _>>()?;
                self.run_stack(g, &self.token_cells, &inputs)
            })
            .collect()
    }

    /// Instruction vectors as plain tensors, for reuse while the weights stay
    /// fixed (see [`forward_embedded`](Self::forward_embedded)).
    pub fn embed_values(&self, block: &EncodedBlock) -> Result<Vec<Tensor>, AutodiffError> {
        let mut g = Graph::with_trainable(&[&self.weights], &[false]);
        let ids = self.embed_block(&mut g, block)?;
        Ok(ids.into_iter().map(|id| g.value(id).clone()).collect())
    }

    /// Predicted cycles per iteration as a scalar node. The graph must hold
    /// the weights in [`WEIGHTS_STORE`] and, for [`TableInput::Relaxed`], the
    /// table in [`TABLE_STORE`].
    pub fn forward(&self, g: &mut Graph<'_>, block: &EncodedBlock, input: TableInput<'_>) -> Result<NodeId, AutodiffError> {
        let instr = self.embed_block(g, block)?;
        self.forward_embedded(g, &instr, block, input)
    }

    /// The part of [`forward`](Self::forward) after the token stack, given
    /// one vector per instruction (from [`embed_block`](Self::embed_block),
    /// or constants from [`embed_values`](Self::embed_values)).
    pub fn forward_embedded(
        &self,
        g: &mut Graph<'_>,
        instr: &[NodeId],
        block: &EncodedBlock,
        input: TableInput<'_>,
    ) -> Result<NodeId, AutodiffError> {
        if instr.len() != block.rows.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "instructions",
                left: vec![block.rows.len()],
                right: vec![instr.len()],
            });
        }
        let features: Vec<NodeId> = match input {
            TableInput::Fixed(feats) => {
                if feats.len() != block.rows.len() {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "features",
                        left: vec![block.rows.len()],
                        right: vec![feats.len()],
                    });
                }
                feats
                    .iter()
                    .map(|f| g.constant(Tensor::vector(f.to_vec())))
                    .collect()
            }
            TableInput::Relaxed | TableInput::Rounded => {
                let round = matches!(input, TableInput::Rounded);
                let scale = feature_scale();
                let rows = g.param(TABLE_STORE, 0);
                let globals = g.param(TABLE_STORE, 1);
                let gs = g.constant(Tensor::vector(scale[ROW_WIDTH..].to_vec()));
                let rs = g.constant(Tensor::vector(scale[..ROW_WIDTH].to_vec()));
                let mut ga = g.abs(globals);
                if round {
                    ga = g.round_through(ga);
                }
                let gf = g.mul(ga, gs)?;
                debug_assert_eq!(g.value(gf).len(), GLOBAL_WIDTH);
                block
                    .rows
                    .iter()
                    .map(|&r| {
                        let row = g.embedding(rows, r)?;
                        let mut ra = g.abs(row);
                        if round {
                            ra = g.round_through(ra);
                        }
                        let rf = g.mul(ra, rs)?;
                        g.concat(&[rf, gf])
                    })
                    .collect::<Result<_, _>>()?
            }
        };
        let inputs = instr
            .iter()
            .zip(&features)
            .map(|(&v, &f)| g.concat(&[v, f]))
            .collect::<Result<Vec<_>, _>>()?;
        let top = self.run_stack(g, &self.instr_cells, &inputs)?;
        let w = g.param(WEIGHTS_STORE, self.head_w);
        let b = g.param(WEIGHTS_STORE, self.head_b);
        let y = g.matmul(top, w)?;
        let y = g.add(y, b)?;
        Ok(g.sum(y))
    }

    /// Forward pass without gradients.
    pub fn predict(&self, block: &EncodedBlock, input: TableInput<'_>, table: Option<&ParamStore>) -> Result<f64, AutodiffError> {
        let empty = ParamStore::new();
        let table = table.unwrap_or(&empty);
        let mut g = Graph::with_trainable(&[&self.weights, table], &[false, false]);
        let y = self.forward(&mut g, block, input)?;
        Ok(g.scalar(y))
    }

    /// [`predict`](Self::predict) from cached instruction vectors.
    pub fn predict_embedded(
        &self,
        instr: &[Tensor],
        block: &EncodedBlock,
        input: TableInput<'_>,
        table: Option<&ParamStore>,
    ) -> Result<f64, AutodiffError> {
        let empty = ParamStore::new();
        let table = table.unwrap_or(&empty);
        let mut g = Graph::with_trainable(&[&self.weights, table], &[false, false]);
        let ids: Vec<NodeId> = instr.iter().map(|t| g.constant(t.clone())).collect();
        let y = self.forward_embedded(&mut g, &ids, block, input)?;
        Ok(g.scalar(y))
    }

    /// `|prediction − target| / target` as a graph node.
    pub fn loss_node(g: &mut Graph<'_>, prediction: NodeId, target: f64) -> Result<NodeId, SurrogateError> {
        if !(target > 0.0) {
            return Err(SurrogateError::NonPositiveTarget(target));
        }
        let d = g.add_scalar(prediction, -target);
        let a = g.abs(d);
        Ok(g.scale(a, 1.0 / target))
    }
}

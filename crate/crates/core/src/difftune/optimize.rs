use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Diverged, FreezeMask, SamplingSpec};
use crate::autodiff::{Adam, AdamConfig, Gradients, Graph, ParamStore, Tensor};
use crate::dataset::Dataset;
use crate::params::{ParamFamily, RealTable, TableError, TableLayout, GLOBAL_WIDTH, ROW_WIDTH};
use crate::surrogate::{table_from_store, table_store, EncodedBlock, Surrogate, SurrogateError, TableInput, TABLE_STORE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Cosine-anneal the learning rate down to this value when set.
    pub final_lr: Option<f64>,
    /// After every step, pull each learned entry's magnitude back into the
    /// relaxed range this spec samples from (sign kept). The surrogate has
    /// only seen tables from there and is unreliable outside it.
    pub project: Option<SamplingSpec>,
    /// From this epoch on the surrogate reads the table through rounding
    /// (straight-through gradients), so the optimizer scores the integer
    /// table extraction will produce rather than fractional in-between
    /// values the surrogate never saw.
    pub round_after: Option<usize>,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            epochs: 1,
            batch: 256,
            lr: 0.05,
            final_lr: None,
            project: None,
            round_after: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeOutcome {
    pub table: RealTable,
    pub steps: u64,
    /// Mean surrogate-predicted loss over each epoch, taken as the table
    /// changed during that epoch.
    pub epoch_loss: Vec<f64>,
    /// Fingerprint of the surrogate weights, identical before and after.
    pub weights_fingerprint: u64,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error(transparent)]
    Diverged(#[from] Diverged),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Table(#[from] TableError),
}

fn layout_of(table: &RealTable) -> TableLayout {
    TableLayout::new(table.opcodes().map(Into::into).collect())
}

struct Encoded {
    block: EncodedBlock,
    /// The token stack's output; it does not depend on the table, and the
    /// weights stay fixed here.
    instr: Vec<Tensor>,
    timing: f64,
}

fn encode(model: &Surrogate, data: &Dataset, layout: &TableLayout) -> Result<Vec<Encoded>, SurrogateError> {
    data.examples()
        .map(|(b, y)| {
            let block = model.encode(b, layout)?;
            let instr = model.embed_values(&block)?;
            Ok(Encoded { block, instr, timing: y })
        })
        .collect()
}

/// Clamps `|v|` of every trainable entry into the sampling range, measured
/// from the family's lower bound.
fn project(store: &mut ParamStore, trainable: &[Vec<bool>], spec: &SamplingSpec) {
    let clamp = |v: &mut f64, family: ParamFamily| {
        let lb = f64::from(family.lower_bound());
        let (lo, hi) = spec.range(family);
        let m = crate::math::abs(*v).clamp(f64::from(lo) - lb, f64::from(hi) - lb);
        *v = if *v < 0.0 { -m } else { m };
    };
    for (i, v) in store.get_mut(0).data_mut().iter_mut().enumerate() {
        if trainable[0][i] {
            clamp(v, ParamFamily::of_row_index(i % ROW_WIDTH));
        }
    }
    for (i, v) in store.get_mut(1).data_mut().iter_mut().enumerate().take(GLOBAL_WIDTH) {
        if trainable[1][i] {
            clamp(v, ParamFamily::of_global_index(i));
        }
    }
}

/// Mean loss the surrogate predicts for `table` over `data`.
pub fn predicted_mape(model: &Surrogate, table: &RealTable, data: &Dataset) -> Result<f64, OptimizeError> {
    let layout = layout_of(table);
    let store = table_store(&layout, table)?;
    let enc = encode(model, data, &layout)?;
    if enc.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for e in &enc {
        let p = model
            .predict_embedded(&e.instr, &e.block, TableInput::Relaxed, Some(&store))
            .map_err(SurrogateError::from)?;
        total += crate::surrogate::loss(p, e.timing)?;
    }
    Ok(total / enc.len() as f64)
}

/// Gradient descent on a relaxed table through the frozen surrogate,
/// against the measured timings of `data`. The simulator is never
/// consulted; entries frozen by `mask` keep their initial values exactly.
pub fn optimize_parameter_table(
    model: &Surrogate,
    data: &Dataset,
    init: &RealTable,
    mask: &FreezeMask,
    config: &OptimizeConfig,
) -> Result<OptimizeOutcome, OptimizeError> {
    if config.batch == 0 {
        return Err(OptimizeError::ZeroBatch);
    }
    let fingerprint = model.weights().fingerprint();
    let layout = layout_of(init);
    let mut store = table_store(&layout, init)?;
    let trainable = mask.trainable(&layout);
    let enc = encode(model, data, &layout)?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), &store);
    let mut rng = crate::seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..enc.len()).collect();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    let mut steps = 0;
    let total_steps = (config.epochs * enc.len().div_ceil(config.batch)) as u64;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let input = match config.round_after {
            Some(e) if epoch >= e => TableInput::Rounded,
            _ => TableInput::Relaxed,
        };
        let mut total = 0.0;
        for batch in order.chunks(config.batch) {
            let stores: [&ParamStore; 2] = [model.weights(), &store];
            let mut grads = Gradients::new(&stores, &[false, true]);
            let inv = 1.0 / batch.len() as f64;
            for &i in batch {
                let e = &enc[i];
                let mut g = Graph::with_trainable(&stores, &[false, true]);
                let instr: Vec<_> = e.instr.iter().map(|t| g.constant(t.clone())).collect();
                let pred = model
                    .forward_embedded(&mut g, &instr, &e.block, input)
                    .map_err(SurrogateError::from)?;
                let loss = Surrogate::loss_node(&mut g, pred, e.timing)?;
                let l = g.scalar(loss);
                if !l.is_finite() {
                    return Err(Diverged { step: steps, value: l }.into());
                }
                total += l;
                let scaled = g.scale(loss, inv);
                g.backward(scaled, &mut grads).map_err(SurrogateError::from)?;
            }
            let gt = grads.store(TABLE_STORE).expect("table is trainable").clone();
            adam.config.lr = super::train::scheduled_lr(config.lr, config.final_lr, steps, total_steps);
            adam.step_masked(&mut store, &gt, Some(&trainable))
                .map_err(SurrogateError::from)?;
            if let Some(spec) = &config.project {
                project(&mut store, &trainable, spec);
            }
            steps += 1;
        }
        let mean = if enc.is_empty() { 0.0 } else { total / enc.len() as f64 };
        log::info!("table epoch {}: surrogate loss {:.4}", epoch + 1, mean);
        epoch_loss.push(mean);
    }
    debug_assert_eq!(model.weights().fingerprint(), fingerprint);
    Ok(OptimizeOutcome {
        table: table_from_store(&layout, &store),
        steps,
        epoch_loss,
        weights_fingerprint: model.weights().fingerprint(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::difftune::{sample_parameter_table, FreezeEntry};
    use crate::surrogate::{SurrogateConfig, TokenVocab};
    use crate::synth::{opcode_names, random_blocks, SynthConfig};
    use crate::dataset::{Measurement, DEFAULT_REGISTER_COUNT};

    fn setup() -> (Surrogate, Dataset, RealTable) {
        let ops = opcode_names(4);
        let vocab = TokenVocab::build(&ops, &[], DEFAULT_REGISTER_COUNT);
        let cfg = SurrogateConfig {
            embed_dim: 6,
            hidden_dim: 8,
            depth: 1,
        };
        let model = Surrogate::new(cfg, vocab, &mut crate::seeded_rng(1)).unwrap();
        let synth = SynthConfig {
            opcodes: 4,
            blocks: 24,
            memory_slots: 0,
            ..SynthConfig::default()
        };
        let mut rng = crate::seeded_rng(2);
        let blocks = random_blocks(&synth, &mut rng).unwrap();
        let ms = blocks
            .iter()
            .map(|b| Measurement {
                block_id: b.id.clone(),
                timing: 2.0 + b.len() as f64,
            })
            .collect();
        let data = Dataset::new(blocks, ms).unwrap();
        let init = sample_parameter_table(&SamplingSpec::default(), &ops, &mut rng).relax();
        (model, data, init)
    }

    fn config() -> OptimizeConfig {
        OptimizeConfig {
            batch: 4,
            epochs: 2,
            ..OptimizeConfig::default()
        }
    }

    #[test]
    fn everything_frozen_returns_init() {
        let (model, data, init) = setup();
        let out = optimize_parameter_table(&model, &data, &init, &FreezeMask::all(), &config()).unwrap();
        assert_eq!(out.table, init);
        assert_eq!(out.steps, 12);
    }

    #[test]
    fn weights_untouched_and_loss_drops() {
        let (model, data, init) = setup();
        let before = model.weights().fingerprint();
        let cfg = OptimizeConfig { epochs: 6, ..config() };
        let first = predicted_mape(&model, &init, &data).unwrap();
        let out = optimize_parameter_table(&model, &data, &init, &FreezeMask::none(), &cfg).unwrap();
        assert_eq!(model.weights().fingerprint(), before);
        assert_eq!(out.weights_fingerprint, before);
        assert_ne!(out.table, init);
        assert!(predicted_mape(&model, &out.table, &data).unwrap() < first);
    }

    #[test]
    fn frozen_entries_are_bit_identical() {
        let (model, data, init) = setup();
        let mut mask = FreezeMask::except(&[ParamFamily::WriteLatency, ParamFamily::DispatchWidth]);
        mask.insert("write_latency:OP02".parse::<FreezeEntry>().unwrap());
        let out = optimize_parameter_table(&model, &data, &init, &mask, &config()).unwrap();
        for (op, r0) in &init.rows {
            let r1 = &out.table.rows[op];
            assert_eq!(r0.num_micro_ops.to_bits(), r1.num_micro_ops.to_bits());
            assert_eq!(r0.port_map.map(f64::to_bits), r1.port_map.map(f64::to_bits));
            assert_eq!(r0.read_advance.map(f64::to_bits), r1.read_advance.map(f64::to_bits));
            if op == "OP02" {
                assert_eq!(r0.write_latency.to_bits(), r1.write_latency.to_bits());
            }
        }
        assert_eq!(init.reorder_buffer_size.to_bits(), out.table.reorder_buffer_size.to_bits());
        assert_ne!(init.dispatch_width, out.table.dispatch_width);
    }

    #[test]
    fn projection_keeps_sampled_ranges() {
        let (model, data, init) = setup();
        let spec = SamplingSpec::default();
        let cfg = OptimizeConfig {
            lr: 3.0,
            project: Some(spec),
            ..config()
        };
        let out = optimize_parameter_table(&model, &data, &init, &FreezeMask::none(), &cfg).unwrap();
        let within = |f: ParamFamily, v: f64| {
            let (lo, hi) = spec.range(f);
            let lb = f64::from(f.lower_bound());
            let m = v.abs();
            m >= f64::from(lo) - lb && m <= f64::from(hi) - lb
        };
        out.table.map(|f, v| assert!(within(f, v), "{} = {v}", f.name()));
        let e = crate::difftune::extract_parameters(&out.table);
        assert!((1..=10).contains(&e.dispatch_width));
        assert!((50..=250).contains(&e.reorder_buffer_size));
    }

    #[test]
    fn zero_batch_rejected() {
        let (model, data, init) = setup();
        let cfg = OptimizeConfig { batch: 0, ..config() };
        assert!(matches!(
            optimize_parameter_table(&model, &data, &init, &FreezeMask::none(), &cfg),
            Err(OptimizeError::ZeroBatch)
        ));
    }
}

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{Diverged, SimulatedDataset};
use crate::autodiff::{Adam, AdamConfig, Gradients, Graph, ParamStore, Tensor};
use crate::surrogate::{EncodedBlock, Surrogate, SurrogateError, TableInput, WEIGHTS_STORE};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    /// Passes over the simulated dataset.
    pub passes: usize,
    pub batch: usize,
    pub lr: f64,
    /// Triples of one block that share a batch, so the block's token stack
    /// runs once for all of them. A batch holds `batch / group` such groups
    /// (at least one).
    pub group: usize,
    /// When set, the learning rate follows a cosine from `lr` down to this
    /// value over the whole run; otherwise it stays at `lr`.
    pub final_lr: Option<f64>,
    /// Seeds the per-pass shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            passes: 6,
            batch: 256,
            lr: 0.001,
            group: 1,
            final_lr: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub steps: u64,
    /// Mean training loss of each pass.
    pub train_loss: Vec<f64>,
    /// Loss on the validation triples after each pass (empty without a
    /// validation set).
    pub validation_loss: Vec<f64>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("nothing to train on")]
    Empty,
    #[error("batch and group sizes must be at least 1")]
    ZeroBatch,
    #[error(transparent)]
    Diverged(#[from] Diverged),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

fn encode_all(model: &Surrogate, data: &SimulatedDataset) -> Result<Vec<EncodedBlock>, SurrogateError> {
    data.blocks.iter().map(|b| model.encode(b, &data.layout)).collect()
}

/// Mean absolute percentage error of the surrogate against the simulator
/// labels of `data`.
pub fn surrogate_mape(model: &Surrogate, data: &SimulatedDataset) -> Result<f64, SurrogateError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let enc = encode_all(model, data)?;
    let mut cache: Vec<Option<Vec<Tensor>>> = (0..enc.len()).map(|_| None).collect();
    let mut total = 0.0;
    for (i, t) in data.triples.iter().enumerate() {
        let feats = data.features(i);
        let instr = match &mut cache[t.block] {
            Some(v) => v,
            slot => slot.insert(model.embed_values(&enc[t.block])?),
        };
        let p = model.predict_embedded(instr, &enc[t.block], TableInput::Fixed(&feats), None)?;
        total += crate::surrogate::loss(p, t.timing)?;
    }
    Ok(total / data.len() as f64)
}

/// Cosine interpolation from `lr` at step 0 to `final_lr` at `total`.
pub(crate) fn scheduled_lr(lr: f64, final_lr: Option<f64>, step: u64, total: u64) -> f64 {
    match final_lr {
        Some(end) if total > 1 => {
            let t = step as f64 / (total - 1) as f64;
            end + 0.5 * (lr - end) * (1.0 + crate::math::cos(core::f64::consts::PI * t))
        }
        _ => lr,
    }
}

/// Fits the surrogate's weights to the simulated labels with Adam on the
/// mean per-example loss of each minibatch.
pub fn train_surrogate(
    model: &mut Surrogate,
    data: &SimulatedDataset,
    validation: Option<&SimulatedDataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if data.is_empty() {
        return Err(TrainError::Empty);
    }
    if config.batch == 0 || config.group == 0 {
        return Err(TrainError::ZeroBatch);
    }
    let enc = encode_all(model, data)?;
    let mut rng = crate::seeded_rng(config.seed);
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), model.weights());
    let mut by_block: Vec<Vec<usize>> = vec![Vec::new(); enc.len()];
    for (i, t) in data.triples.iter().enumerate() {
        by_block[t.block].push(i);
    }
    by_block.retain(|v| !v.is_empty());
    let n_groups: usize = by_block.iter().map(|v| v.len().div_ceil(config.group)).sum();
    let per_batch = (config.batch / config.group).max(1);
    let mut out = TrainOutcome::default();
    let empty = ParamStore::new();
    let total_steps = (config.passes * n_groups.div_ceil(per_batch)) as u64;

    for pass in 0..config.passes {
        let mut groups: Vec<&[usize]> = Vec::with_capacity(n_groups);
        for v in by_block.iter_mut() {
            v.shuffle(&mut rng);
            groups.extend(v.chunks(config.group));
        }
        groups.shuffle(&mut rng);
        let mut pass_loss = 0.0;
        for batch in groups.chunks(per_batch) {
            let mut grads = Gradients::new(&[model.weights(), &empty], &[true, false]);
            let inv = 1.0 / batch.iter().map(|g| g.len()).sum::<usize>() as f64;
            for group in batch {
                let block = &enc[data.triples[group[0]].block];
                let mut g = Graph::with_trainable(&[model.weights(), &empty], &[true, false]);
                let instr = model.embed_block(&mut g, block).map_err(SurrogateError::from)?;
                let mut sum = None;
                for &i in group.iter() {
                    let feats = data.features(i);
                    let pred = model
                        .forward_embedded(&mut g, &instr, block, TableInput::Fixed(&feats))
                        .map_err(SurrogateError::from)?;
                    let loss = Surrogate::loss_node(&mut g, pred, data.triples[i].timing)?;
                    let l = g.scalar(loss);
                    if !l.is_finite() {
                        return Err(Diverged { step: out.steps, value: l }.into());
                    }
                    pass_loss += l;
                    sum = Some(match sum {
                        None => loss,
                        Some(s) => g.add(s, loss).map_err(SurrogateError::from)?,
                    });
                }
                let scaled = g.scale(sum.expect("groups are non-empty"), inv);
                g.backward(scaled, &mut grads).map_err(SurrogateError::from)?;
            }
            let gw = grads.store(WEIGHTS_STORE).expect("weights are trainable");
            adam.config.lr = scheduled_lr(config.lr, config.final_lr, out.steps, total_steps);
            adam.step(model.weights_mut(), gw).map_err(SurrogateError::from)?;
            out.steps += 1;
        }
        let mean = pass_loss / data.len() as f64;
        out.train_loss.push(mean);
        if let Some(v) = validation {
            let vl = surrogate_mape(model, v)?;
            if !vl.is_finite() {
                return Err(Diverged { step: out.steps, value: vl }.into());
            }
            out.validation_loss.push(vl);
            log::info!("surrogate pass {}: train {:.4}, validation {:.4}", pass + 1, mean, vl);
        } else {
            log::info!("surrogate pass {}: train {:.4}", pass + 1, mean);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{opcode_vocabulary, Measurement, DEFAULT_REGISTER_COUNT};
    use crate::difftune::{generate_simulated_dataset, SamplingSpec};
    use crate::params::TableLayout;
    use crate::sim::PipelineSimulator;
    use crate::surrogate::{SurrogateConfig, TokenVocab};
    use crate::synth::{random_blocks, SynthConfig};
    use crate::Dataset;

    fn setup() -> (Surrogate, SimulatedDataset) {
        let synth = SynthConfig {
            opcodes: 4,
            blocks: 20,
            memory_slots: 0,
            ..SynthConfig::default()
        };
        let mut rng = crate::seeded_rng(3);
        let blocks = random_blocks(&synth, &mut rng).unwrap();
        let ms = blocks
            .iter()
            .map(|b| Measurement {
                block_id: b.id.clone(),
                timing: 1.0,
            })
            .collect();
        let data = Dataset::new(blocks, ms).unwrap();
        let layout = TableLayout::new(opcode_vocabulary(&data));
        let sim = generate_simulated_dataset(&PipelineSimulator::default(), &data, &layout, &SamplingSpec::default(), 3, &mut rng)
            .unwrap();
        let vocab = TokenVocab::build(layout.opcodes(), &[], DEFAULT_REGISTER_COUNT);
        let cfg = SurrogateConfig {
            embed_dim: 6,
            hidden_dim: 8,
            depth: 1,
        };
        let mut model = Surrogate::new(cfg, vocab, &mut rng).unwrap();
        model.set_output_bias(3.0);
        (model, sim)
    }

    #[test]
    fn grouped_batches_share_the_token_stack_without_changing_gradients() {
        let (model, data) = setup();
        let enc = encode_all(&model, &data).unwrap();
        let b = data.triples[0].block;
        let idx: Vec<usize> = (0..data.len()).filter(|&i| data.triples[i].block == b).collect();
        assert!(idx.len() >= 2);
        let empty = ParamStore::new();

        let mut separate = Gradients::new(&[model.weights(), &empty], &[true, false]);
        for &i in &idx {
            let mut g = Graph::with_trainable(&[model.weights(), &empty], &[true, false]);
            let feats = data.features(i);
            let p = model.forward(&mut g, &enc[b], TableInput::Fixed(&feats)).unwrap();
            let l = Surrogate::loss_node(&mut g, p, data.triples[i].timing).unwrap();
            g.backward(l, &mut separate).unwrap();
        }

        let mut shared = Gradients::new(&[model.weights(), &empty], &[true, false]);
        let mut g = Graph::with_trainable(&[model.weights(), &empty], &[true, false]);
        let instr = model.embed_block(&mut g, &enc[b]).unwrap();
        let mut sum = None;
        for &i in &idx {
            let feats = data.features(i);
            let p = model.forward_embedded(&mut g, &instr, &enc[b], TableInput::Fixed(&feats)).unwrap();
            let l = Surrogate::loss_node(&mut g, p, data.triples[i].timing).unwrap();
            sum = Some(match sum {
                None => l,
                Some(s) => g.add(s, l).unwrap(),
            });
        }
        g.backward(sum.unwrap(), &mut shared).unwrap();

        let a = separate.store(WEIGHTS_STORE).unwrap();
        let c = shared.store(WEIGHTS_STORE).unwrap();
        for (name, t) in a.iter() {
            let u = c.by_name(name).unwrap();
            for (x, y) in t.data().iter().zip(u.data()) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{name}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn grouped_training_counts_steps_per_group_batch() {
        let (mut model, data) = setup();
        let cfg = TrainConfig {
            passes: 2,
            batch: 6,
            group: 3,
            ..TrainConfig::default()
        };
        let out = train_surrogate(&mut model, &data, None, &cfg).unwrap();
        let mut per_block = vec![0usize; data.blocks.len()];
        for t in &data.triples {
            per_block[t.block] += 1;
        }
        let groups: usize = per_block.iter().map(|n| n.div_ceil(3)).sum();
        assert_eq!(out.steps, 2 * groups.div_ceil(2) as u64);
        assert_eq!(out.train_loss.len(), 2);
        assert!(out.train_loss.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn cached_embeddings_predict_the_same_value() {
        let (model, data) = setup();
        let enc = encode_all(&model, &data).unwrap();
        for i in 0..5 {
            let t = &data.triples[i];
            let feats = data.features(i);
            let direct = model.predict(&enc[t.block], TableInput::Fixed(&feats), None).unwrap();
            let instr = model.embed_values(&enc[t.block]).unwrap();
            let cached = model.predict_embedded(&instr, &enc[t.block], TableInput::Fixed(&feats), None).unwrap();
            assert_eq!(direct, cached);
        }
    }

    #[test]
    fn zero_passes_leave_the_model_unchanged() {
        let (mut model, data) = setup();
        let before = model.weights().fingerprint();
        let cfg = TrainConfig { passes: 0, ..TrainConfig::default() };
        let out = train_surrogate(&mut model, &data, None, &cfg).unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(model.weights().fingerprint(), before);
    }

    #[test]
    fn training_reduces_loss_and_records_the_curve() {
        let (mut model, data) = setup();
        let first = surrogate_mape(&model, &data).unwrap();
        let cfg = TrainConfig {
            passes: 8,
            batch: 8,
            lr: 0.01,
            group: 1,
            final_lr: Some(0.001),
            seed: 0,
        };
        let out = train_surrogate(&mut model, &data, Some(&data), &cfg).unwrap();
        assert_eq!(out.train_loss.len(), 8);
        assert_eq!(out.validation_loss.len(), 8);
        assert_eq!(out.steps, 8 * data.len().div_ceil(8) as u64);
        assert!(out.validation_loss[7] < first, "{first} -> {:?}", out.validation_loss);
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (m0, data) = setup();
        let cfg = TrainConfig { passes: 1, batch: 4, ..TrainConfig::default() };
        let (mut a, mut b) = (m0.clone(), m0);
        train_surrogate(&mut a, &data, None, &cfg).unwrap();
        train_surrogate(&mut b, &data, None, &cfg).unwrap();
        assert_eq!(a.weights().fingerprint(), b.weights().fingerprint());
    }

    #[test]
    fn rejects_bad_input() {
        let (mut model, mut data) = setup();
        let cfg = TrainConfig { batch: 0, ..TrainConfig::default() };
        assert_eq!(train_surrogate(&mut model.clone(), &data, None, &cfg), Err(TrainError::ZeroBatch));
        let cfg = TrainConfig { group: 0, ..TrainConfig::default() };
        assert!(matches!(train_surrogate(&mut model, &data, None, &cfg), Err(TrainError::ZeroBatch)));
        data.triples.clear();
        assert!(matches!(train_surrogate(&mut model, &data, None, &TrainConfig::default()), Err(TrainError::Empty)));
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(scheduled_lr(0.1, None, 5, 10), 0.1);
        assert_eq!(scheduled_lr(0.1, Some(0.01), 0, 11), 0.1);
        assert!((scheduled_lr(0.1, Some(0.01), 5, 11) - 0.055).abs() < 1e-12);
        assert!((scheduled_lr(0.1, Some(0.01), 10, 11) - 0.01).abs() < 1e-12);
        assert_eq!(scheduled_lr(0.1, Some(0.01), 0, 1), 0.1);
    }
}

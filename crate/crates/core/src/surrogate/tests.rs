use super::*;
use crate::autodiff::{gradient_check_coords, Gradients, Graph, ParamStore};
use crate::dataset::{Instruction, DEFAULT_REGISTER_COUNT};
use crate::difftune::{sample_parameter_table, SamplingSpec};
use crate::params::TableLayout;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use rand::Rng;

fn opcodes() -> Vec<String> {
    (0..6).map(|i| format!("OP{i}")).collect()
}

fn small() -> SurrogateConfig {
    SurrogateConfig {
        embed_dim: 6,
        hidden_dim: 8,
        depth: 2,
    }
}

fn model(config: SurrogateConfig, seed: u64) -> Surrogate {
    let vocab = TokenVocab::build(&opcodes(), &["m0".into()], DEFAULT_REGISTER_COUNT);
    Surrogate::new(config, vocab, &mut crate::seeded_rng(seed)).unwrap()
}

fn block(len: usize, rng: &mut impl Rng) -> BasicBlock {
    // Uses OP0..OP2 only, so OP3..OP5 never appear.
    let insts = (0..len)
        .map(|i| {
            let mut inst = Instruction::new(
                format!("OP{}", rng.gen_range(0..3)),
                vec![rng.gen_range(0..16)],
                vec![rng.gen_range(0..16), rng.gen_range(0..16)],
            );
            if i % 3 == 1 {
                inst = inst.with_load("m0");
            }
            inst
        })
        .collect();
    BasicBlock::new(format!("b{len}"), insts).unwrap()
}

fn layout() -> TableLayout {
    TableLayout::new(opcodes())
}

/// A relaxed table with every entry at least 0.2 away from the kink of |·|.
fn relaxed_store(seed: u64) -> ParamStore {
    let mut rng = crate::seeded_rng(seed);
    let t = sample_parameter_table(&SamplingSpec::default(), &opcodes(), &mut rng)
        .relax()
        .map(|_, v| {
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s * (v + rng.gen_range(0.2..0.8))
        });
    table_store(&layout(), &t).unwrap()
}

#[test]
fn embed_shapes_and_purity() {
    let m = model(SurrogateConfig::default(), 1);
    let mut rng = crate::seeded_rng(2);
    let empty = ParamStore::new();
    for len in [1, 5] {
        let b = m.encode(&block(len, &mut rng), &layout()).unwrap();
        let mut g = Graph::new(&[m.weights(), &empty]);
        let v = m.embed_block(&mut g, &b).unwrap();
        assert_eq!(v.len(), len);
        for &n in &v {
            assert_eq!(g.value(n).shape(), &[64]);
        }
        let mut g2 = Graph::new(&[m.weights(), &empty]);
        let v2 = m.embed_block(&mut g2, &b).unwrap();
        for (a, b) in v.iter().zip(&v2) {
            assert_eq!(g.value(*a), g2.value(*b));
        }
    }
}

#[test]
fn unknown_tokens_fall_back() {
    let m = model(small(), 1);
    let inst = Instruction::new("NEVER_SEEN", vec![3], vec![]).with_store("elsewhere");
    let toks = m.vocab().encode(&inst);
    assert_eq!(toks[0], m.vocab().unk());
    assert_eq!(*toks.last().unwrap(), m.vocab().unk());
    assert!(matches!(
        m.encode(&BasicBlock::new("x", vec![inst]).unwrap(), &layout()),
        Err(SurrogateError::UnknownOpcode(_))
    ));
}

#[test]
fn gradients_stay_local_to_present_opcodes() {
    let m = model(small(), 3);
    let table = relaxed_store(4);
    let b = m.encode(&block(4, &mut crate::seeded_rng(5)), &layout()).unwrap();
    let stores = [m.weights(), &table];
    let mut grads = Gradients::new(&stores, &[false, true]);
    let mut g = Graph::with_trainable(&stores, &[false, true]);
    let y = m.forward(&mut g, &b, TableInput::Relaxed).unwrap();
    g.backward(y, &mut grads).unwrap();
    let gt = grads.store(TABLE_STORE).unwrap();
    let rows = gt.get(0).data();
    for r in 0..opcodes().len() {
        let row = &rows[r * ROW_WIDTH..(r + 1) * ROW_WIDTH];
        if b.rows.contains(&r) {
            assert!(row.iter().any(|&v| v != 0.0), "row {r} has no gradient");
        } else {
            assert!(row.iter().all(|&v| v == 0.0), "row {r} should be untouched");
        }
    }
    assert!(gt.get(1).data().iter().all(|&v| v != 0.0));
}

#[test]
fn finite_over_sampled_tables() {
    let m = model(SurrogateConfig::default(), 6);
    let mut rng = crate::seeded_rng(7);
    let b = block(6, &mut rng);
    let enc = m.encode(&b, &layout()).unwrap();
    for _ in 0..100 {
        let t = sample_parameter_table(&SamplingSpec::default(), &opcodes(), &mut rng);
        let f = fixed_features(&t, &b).unwrap();
        assert!(m.predict(&enc, TableInput::Fixed(&f), None).unwrap().is_finite());
        let s = table_store(&layout(), &t.relax()).unwrap();
        let relaxed = m.predict(&enc, TableInput::Relaxed, Some(&s)).unwrap();
        assert!(relaxed.is_finite());
        // The relaxed path on a relaxed integer table sees the same features.
        let fixed = m.predict(&enc, TableInput::Fixed(&f), None).unwrap();
        assert!((relaxed - fixed).abs() < 1e-12);
    }
}

#[test]
fn rounded_input_matches_the_extracted_table() {
    let m = model(SurrogateConfig::default(), 6);
    let mut rng = crate::seeded_rng(9);
    let b = block(5, &mut rng);
    let enc = m.encode(&b, &layout()).unwrap();
    for _ in 0..20 {
        let t = sample_parameter_table(&SamplingSpec::default(), &opcodes(), &mut rng);
        let noisy = t.relax().map(|_, v| {
            let s = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            s * (v + rng.gen_range(-0.45..0.45)).max(0.0)
        });
        let s = table_store(&layout(), &noisy).unwrap();
        let rounded = m.predict(&enc, TableInput::Rounded, Some(&s)).unwrap();
        let f = fixed_features(&crate::difftune::extract_parameters(&noisy), &b).unwrap();
        let fixed = m.predict(&enc, TableInput::Fixed(&f), None).unwrap();
        assert!((rounded - fixed).abs() < 1e-12, "{rounded} vs {fixed}");
    }
}

#[test]
fn doubling_reorder_buffer_is_deterministic() {
    let m = model(SurrogateConfig::default(), 8);
    let mut rng = crate::seeded_rng(9);
    let b = block(5, &mut rng);
    let enc = m.encode(&b, &layout()).unwrap();
    let t = sample_parameter_table(&SamplingSpec::default(), &opcodes(), &mut rng);
    let mut t2 = t.clone();
    t2.reorder_buffer_size *= 2;
    let run = |t: &IntTable| {
        let f = fixed_features(t, &b).unwrap();
        m.predict(&enc, TableInput::Fixed(&f), None).unwrap()
    };
    let d1 = run(&t2) - run(&t);
    let d2 = run(&t2) - run(&t);
    assert!(d1.is_finite());
    assert_eq!(d1, d2);
}

#[test]
fn loss_examples() {
    assert_eq!(loss(2.0, 2.0).unwrap(), 0.0);
    assert_eq!(loss(4.0, 2.0).unwrap(), 1.0);
    assert_eq!(loss(1.0, 2.0).unwrap(), 0.5);
    assert!(matches!(loss(1.0, 0.0), Err(SurrogateError::NonPositiveTarget(_))));
    assert!(matches!(loss(1.0, -3.0), Err(SurrogateError::NonPositiveTarget(_))));
}

/// Central-difference step. Much smaller steps drown the small weight
/// gradients of the token stack in rounding noise.
const H: f64 = 1e-4;

#[test]
fn loss_gradient_check_on_weights_and_table() {
    let m = model(small(), 10);
    let mut rng = crate::seeded_rng(11);
    for round in 0..3 {
        let b = m.encode(&block(3, &mut rng), &layout()).unwrap();
        let table = relaxed_store(12 + round);
        // Far-away target keeps the loss away from its kink.
        let f = |g: &mut Graph<'_>| {
            let y = m.forward(g, &b, TableInput::Relaxed)?;
            Surrogate::loss_node(g, y, 50.0).map_err(|e| match e {
                SurrogateError::Autodiff(a) => a,
                _ => unreachable!(),
            })
        };
        let stores = [m.weights(), &table];

        let mut table_coords: Vec<(usize, usize)> = b
            .rows
            .iter()
            .flat_map(|&r| (0..ROW_WIDTH).map(move |c| (0, r * ROW_WIDTH + c)))
            .collect();
        table_coords.sort_unstable();
        table_coords.dedup();
        let mut picked: Vec<(usize, usize)> = rand::seq::index::sample(&mut rng, table_coords.len(), 18)
            .into_iter()
            .map(|i| table_coords[i])
            .collect();
        picked.extend([(1, 0), (1, 1)]);
        assert_eq!(picked.len(), 20);
        let err = gradient_check_coords(f, &stores, TABLE_STORE, &picked, H).unwrap();
        assert!(err < 1e-4, "table gradient error {err}");

        let w = m.weights();
        let weight_coords: Vec<(usize, usize)> = (0..w.len())
            .flat_map(|t| {
                let n = w.get(t).len();
                (0..n.min(40)).map(move |i| (t, (i * 7919) % n))
            })
            .collect();
        let err = gradient_check_coords(f, &stores, WEIGHTS_STORE, &weight_coords, H).unwrap();
        assert!(err < 1e-4, "weight gradient error {err}");
    }
}

#[test]
fn handles_block_lengths_up_to_256() {
    let m = model(small(), 13);
    let mut rng = crate::seeded_rng(14);
    let t = sample_parameter_table(&SamplingSpec::default(), &opcodes(), &mut rng);
    for len in [1, 2, 17, 64, 256] {
        let b = block(len, &mut rng);
        let f = fixed_features(&t, &b).unwrap();
        let enc = m.encode(&b, &layout()).unwrap();
        assert!(m.predict(&enc, TableInput::Fixed(&f), None).unwrap().is_finite());
    }
}

#[test]
fn weights_round_trip_through_from_weights() {
    let m = model(small(), 15);
    let again = Surrogate::from_weights(*m.config(), m.vocab().clone(), m.weights().clone()).unwrap();
    assert_eq!(again, m);
    let mut wrong = ParamStore::new();
    wrong.push("embedding", crate::autodiff::Tensor::zeros(&[1, 1]));
    assert!(Surrogate::from_weights(small(), m.vocab().clone(), wrong).is_err());
    assert!(Surrogate::new(
        SurrogateConfig { depth: 0, ..small() },
        m.vocab().clone(),
        &mut crate::seeded_rng(0)
    )
    .is_err());
}

use super::*;
use crate::autodiff::{gradient_check, Tensor};
use alloc::vec;
use rand::Rng;

fn random_store(shapes: &[&[usize]], seed: u64) -> ParamStore {
    let mut rng = crate::seeded_rng(seed);
    let mut s = ParamStore::new();
    for (i, shape) in shapes.iter().enumerate() {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        s.push(alloc::format!("t{i}"), Tensor::new(shape.to_vec(), data).unwrap());
    }
    s
}

#[test]
fn forward_examples() {
    let s = ParamStore::new();
    let mut g = Graph::new(&[&s]);
    let a = g.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = g.constant(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).shape(), &[2, 1]);
    assert_eq!(g.value(c).data(), &[3.0, 7.0]);

    let z = g.constant(Tensor::scalar(0.0));
    let s0 = g.sigmoid(z);
    assert_eq!(g.scalar(s0), 0.5);

    let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
    let y = g.constant(Tensor::vector(vec![3.0]));
    let xy = g.concat(&[x, y]).unwrap();
    assert_eq!(g.value(xy).data(), &[1.0, 2.0, 3.0]);
}

#[test]
fn backward_examples() {
    let mut s = ParamStore::new();
    s.push("x", Tensor::scalar(3.0));
    let mut g = Graph::new(&[&s]);
    let x = g.param(0, 0);
    let l = g.mul(x, x).unwrap();
    let mut grads = Gradients::new(&[&s], &[true]);
    g.backward(l, &mut grads).unwrap();
    assert_eq!(grads.store(0).unwrap().get(0).data(), &[6.0]);

    let mut s = ParamStore::new();
    s.push("x", Tensor::scalar(0.0));
    let mut g = Graph::new(&[&s]);
    let x = g.param(0, 0);
    let l = g.sigmoid(x);
    let mut grads = Gradients::new(&[&s], &[true]);
    g.backward(l, &mut grads).unwrap();
    assert_eq!(grads.store(0).unwrap().get(0).data(), &[0.25]);
}

#[test]
fn errors() {
    let s = random_store(&[&[2, 3], &[2, 3]], 1);
    let mut g = Graph::new(&[&s]);
    let a = g.param(0, 0);
    let b = g.param(0, 1);
    assert!(matches!(g.matmul(a, b), Err(AutodiffError::ShapeMismatch { .. })));
    let v = g.constant(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.add(a, v), Err(AutodiffError::ShapeMismatch { .. })));
    assert!(matches!(g.embedding(a, 5), Err(AutodiffError::IndexOutOfRange { .. })));
    let mut grads = Gradients::new(&[&s], &[true]);
    assert!(matches!(g.backward(a, &mut grads), Err(AutodiffError::NonScalarLoss(_))));
}

/// Reduce a node to a scalar with position-dependent weights so every element
/// of the gradient differs.
fn weighted_sum(g: &mut Graph<'_>, x: NodeId) -> Result<NodeId, AutodiffError> {
    let n = g.value(x).len();
    let shape = g.value(x).shape().to_vec();
    let w: alloc::vec::Vec<f64> = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
    let w = g.constant(Tensor::new(shape, w)?);
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

#[test]
fn every_op_passes_gradient_check() {
    type Case = (&'static str, &'static [&'static [usize]], fn(&mut Graph<'_>) -> Result<NodeId, AutodiffError>);
    let cases: &[Case] = &[
        ("matmul", &[&[3, 4], &[4, 2]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.matmul(a, b)?;
            weighted_sum(g, c)
        }),
        ("matmul_vec", &[&[4], &[4, 5]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.matmul(a, b)?;
            weighted_sum(g, c)
        }),
        ("add", &[&[5], &[5]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.add(a, b)?;
            let c = g.mul(c, c)?;
            weighted_sum(g, c)
        }),
        ("sub_broadcast", &[&[5], &[]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.sub(a, b)?;
            let c = g.mul(c, c)?;
            weighted_sum(g, c)
        }),
        ("mul", &[&[2, 3], &[2, 3]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.mul(a, b)?;
            weighted_sum(g, c)
        }),
        ("mul_scalar", &[&[]], |g| {
            let a = g.param(0, 0);
            let v = g.constant(Tensor::vector(vec![1.0, -2.0, 0.5]));
            let c = g.mul(v, a)?;
            let c = g.mul(c, c)?;
            weighted_sum(g, c)
        }),
        ("concat", &[&[2], &[3]], |g| {
            let (a, b) = (g.param(0, 0), g.param(0, 1));
            let c = g.concat(&[b, a, b])?;
            let c = g.tanh(c);
            weighted_sum(g, c)
        }),
        ("slice", &[&[2, 6]], |g| {
            let a = g.param(0, 0);
            let c = g.slice(a, 2, 3)?;
            let c = g.sigmoid(c);
            weighted_sum(g, c)
        }),
        ("sigmoid", &[&[6]], |g| {
            let a = g.param(0, 0);
            let c = g.sigmoid(a);
            weighted_sum(g, c)
        }),
        ("tanh", &[&[6]], |g| {
            let a = g.param(0, 0);
            let c = g.tanh(a);
            weighted_sum(g, c)
        }),
        ("embedding", &[&[4, 3]], |g| {
            let t = g.param(0, 0);
            let r1 = g.embedding(t, 2)?;
            let r2 = g.embedding(t, 2)?;
            let r3 = g.embedding(t, 0)?;
            let c = g.mul(r1, r2)?;
            let c = g.add(c, r3)?;
            weighted_sum(g, c)
        }),
        ("mean", &[&[7]], |g| {
            let a = g.param(0, 0);
            let s = g.tanh(a);
            let m = g.mean(s);
            g.mul(m, m)
        }),
        ("abs", &[&[6]], |g| {
            let a = g.param(0, 0);
            let c = g.abs(a);
            weighted_sum(g, c)
        }),
        ("scale_add_scalar", &[&[4]], |g| {
            let a = g.param(0, 0);
            let c = g.scale(a, -1.7);
            let c = g.add_scalar(c, 0.4);
            let c = g.mul(c, c)?;
            weighted_sum(g, c)
        }),
    ];
    for (k, (name, shapes, f)) in cases.iter().enumerate() {
        let point = random_store(shapes, 100 + k as u64);
        let err = gradient_check(f, &point, 1e-4).unwrap();
        assert!(err < 1e-4, "{name}: relative error {err}");
    }
}

fn lstm_step(
    g: &mut Graph<'_>,
    w: NodeId,
    b: NodeId,
    x: NodeId,
    h: NodeId,
    c: NodeId,
    hidden: usize,
) -> Result<(NodeId, NodeId), AutodiffError> {
    let xh = g.concat(&[x, h])?;
    let z = g.matmul(xh, w)?;
    let z = g.add(z, b)?;
    let i = g.slice(z, 0, hidden)?;
    let i = g.sigmoid(i);
    let f = g.slice(z, hidden, hidden)?;
    let f = g.sigmoid(f);
    let u = g.slice(z, 2 * hidden, hidden)?;
    let u = g.tanh(u);
    let o = g.slice(z, 3 * hidden, hidden)?;
    let o = g.sigmoid(o);
    let fc = g.mul(f, c)?;
    let iu = g.mul(i, u)?;
    let c2 = g.add(fc, iu)?;
    let tc = g.tanh(c2);
    let h2 = g.mul(o, tc)?;
    Ok((h2, c2))
}

#[test]
fn two_layer_recurrent_cell_matches_finite_differences() {
    let (input, hidden) = (3, 4);
    let point = random_store(
        &[
            &[input + hidden, 4 * hidden],
            &[4 * hidden],
            &[2 * hidden, 4 * hidden],
            &[4 * hidden],
            &[4, input],
        ],
        7,
    );
    let f = |g: &mut Graph<'_>| -> Result<NodeId, AutodiffError> {
        let (w1, b1, w2, b2, xs) = (g.param(0, 0), g.param(0, 1), g.param(0, 2), g.param(0, 3), g.param(0, 4));
        let zero = Tensor::zeros(&[hidden]);
        let (mut h1, mut c1) = (g.constant(zero.clone()), g.constant(zero.clone()));
        let (mut h2, mut c2) = (g.constant(zero.clone()), g.constant(zero));
        for t in 0..4 {
            let x = g.embedding(xs, t)?;
            (h1, c1) = lstm_step(g, w1, b1, x, h1, c1, hidden)?;
            (h2, c2) = lstm_step(g, w2, b2, h1, h2, c2, hidden)?;
        }
        weighted_sum(g, h2)
    };
    let err = gradient_check(f, &point, 1e-4).unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn backward_is_linear_and_deterministic() {
    let point = random_store(&[&[3, 3], &[3]], 11);
    let build = |g: &mut Graph<'_>, a: f64| -> NodeId {
        let (w, x) = (g.param(0, 0), g.param(0, 1));
        let y = g.matmul(x, w).unwrap();
        let y = g.tanh(y);
        let s = weighted_sum(g, y).unwrap();
        g.scale(s, a)
    };
    let run = |a: f64| {
        let mut g = Graph::new(&[&point]);
        let l = build(&mut g, a);
        let mut grads = Gradients::new(&[&point], &[true]);
        g.backward(l, &mut grads).unwrap();
        grads
    };
    let g1 = run(1.0);
    let g3 = run(-3.0);
    for t in 0..2 {
        for (a, b) in g1.store(0).unwrap().get(t).data().iter().zip(g3.store(0).unwrap().get(t).data()) {
            assert!((-3.0 * a - b).abs() < 1e-12);
        }
    }
    assert_eq!(run(1.0), g1);
}

#[test]
fn frozen_store_gets_no_gradient() {
    let a = random_store(&[&[3, 2]], 1);
    let b = random_store(&[&[3]], 2);
    let mut g = Graph::with_trainable(&[&a, &b], &[false, true]);
    let w = g.param(0, 0);
    let x = g.param(1, 0);
    let y = g.matmul(x, w).unwrap();
    let l = g.sum(y);
    let mut grads = Gradients::new(&[&a, &b], &[false, true]);
    g.backward(l, &mut grads).unwrap();
    assert!(grads.store(0).is_none());
    let expected: alloc::vec::Vec<f64> = a.get(0).data().chunks(2).map(|r| r[0] + r[1]).collect();
    assert_eq!(grads.store(1).unwrap().get(0).data(), &expected[..]);
}

#[test]
fn gradient_check_trivia() {
    let mut p = ParamStore::new();
    p.push("x", Tensor::scalar(3.0));
    let err = gradient_check(|g| { let x = g.param(0, 0); g.mul(x, x) }, &p, 1e-4).unwrap();
    assert!(err < 1e-6);
    let err = gradient_check(
        |g| {
            let _ = g.param(0, 0);
            Ok(g.constant(Tensor::scalar(2.0)))
        },
        &p,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4);
}

#[test]
fn round_through_rounds_forward_and_passes_gradient() {
    let mut s = ParamStore::new();
    s.push("x", Tensor::vector(vec![0.4, 0.6, -1.5, 2.49]));
    let mut g = Graph::new(&[&s]);
    let x = g.param(0, 0);
    let r = g.round_through(x);
    assert_eq!(g.value(r).data(), &[0.0, 1.0, -2.0, 2.0]);
    let w = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]));
    let p = g.mul(r, w).unwrap();
    let l = g.sum(p);
    let mut grads = Gradients::new(&[&s], &[true]);
    g.backward(l, &mut grads).unwrap();
    assert_eq!(grads.store(0).unwrap().get(0).data(), &[1.0, 2.0, 3.0, 4.0]);
}

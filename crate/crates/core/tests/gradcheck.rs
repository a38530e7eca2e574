mod support;

use grafenne::tensor::{Activation, Mlp, ParamSet, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::grad::{check, random_tensor};

#[test]
fn matmul_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let leaves = [random_tensor(&mut rng, 4, 3), random_tensor(&mut rng, 3, 2)];
    let err = check(&leaves, |t, v| {
        let p = t.matmul(v[0], v[1]).unwrap();
        let q = t.square(p);
        t.sum(q)
    });
    assert!(err < 1e-5, "{err}");
}

#[test]
fn leaky_relu_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let leaves = [random_tensor(&mut rng, 1, 12), random_tensor(&mut rng, 1, 12)];
    let err = check(&leaves, |t, v| {
        let y = t.leaky_relu(v[0], 0.2);
        let z = t.mul(y, v[1]).unwrap();
        t.sum(z)
    });
    assert!(err < 1e-6, "{err}");
}

#[test]
fn concat_gradient_is_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let leaves = [random_tensor(&mut rng, 2, 3), random_tensor(&mut rng, 2, 2)];
    let mut tape = Tape::new();
    let a = tape.variable(leaves[0].clone());
    let b = tape.variable(leaves[1].clone());
    let c = tape.concat(&[a, b], 1).unwrap();
    let s = tape.sum(c);
    let g = tape.backward(s).unwrap();
    assert_eq!(tape.gradient(&g, a), Tensor::full(&[2, 3], 1.0));
    assert_eq!(tape.gradient(&g, b), Tensor::full(&[2, 2], 1.0));
    let err = check(&leaves, |t, v| {
        let c = t.concat(&[v[0], v[1]], 1).unwrap();
        t.sum(c)
    });
    assert!(err < 1e-8, "{err}");
}

#[test]
fn two_layer_mlp_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = ParamSet::new();
    let mlp = Mlp::new(&mut params, &mut rng, "mlp", &[3, 5, 2], Activation::LeakyRelu(0.2)).unwrap();
    let x = random_tensor(&mut rng, 6, 3);
    let ids: Vec<_> = params.ids().collect();
    let leaves: Vec<Tensor> = std::iter::once(x)
        .chain(ids.iter().map(|&id| params.value(id).clone()))
        .collect();
    let err = check(&leaves, |t, v| {
        let mut p = params.clone();
        for (k, &id) in ids.iter().enumerate() {
            *p.value_mut(id) = t.value(v[k + 1]).clone();
        }
        // Route the weights through the tape variables so gradients reach them.
        let h0 = t.matmul(v[0], v[1]).unwrap();
        let h0 = t.add_bias(h0, v[2]).unwrap();
        let h0 = t.leaky_relu(h0, 0.2);
        let h1 = t.matmul(h0, v[3]).unwrap();
        let out = t.add_bias(h1, v[4]).unwrap();
        let reference = {
            let mut tt = Tape::new();
            let xi = tt.constant(t.value(v[0]).clone());
            let o = mlp.forward(&mut tt, &p, xi).unwrap();
            tt.value(o).clone()
        };
        assert!(reference.max_abs_diff(t.value(out)) < 1e-12);
        let sq = t.square(out);
        t.mean(sq).unwrap()
    });
    assert!(err < 1e-4, "{err}");
}

#[test]
fn cross_entropy_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let logits = random_tensor(&mut rng, 3, 3).map(|x| 3.0 * x);
    let labels = [2usize, 0, 1];
    let mut want = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = logits.row(i);
        let z: f64 = row.iter().map(|x| x.exp()).sum();
        want -= (row[y].exp() / z).ln();
    }
    want /= 3.0;
    let mut tape = Tape::new();
    let l = tape.constant(logits.clone());
    let loss = tape.cross_entropy(l, labels.to_vec()).unwrap();
    assert!((tape.value(loss).item() - want).abs() < 1e-10);
    let err = check(&[logits], |t, v| t.cross_entropy(v[0], labels.to_vec()).unwrap());
    assert!(err < 1e-4, "{err}");
}

#[test]
fn bce_matches_direct_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let scores = random_tensor(&mut rng, 7, 1).map(|x| 4.0 * x);
    let targets: Vec<f64> = (0..7).map(|i| (i % 2) as f64).collect();
    let want: f64 = scores
        .data()
        .iter()
        .zip(&targets)
        .map(|(&s, &y)| {
            let p = 1.0 / (1.0 + (-s).exp());
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / 7.0;
    let mut tape = Tape::new();
    let s = tape.constant(scores.clone());
    let loss = tape.bce_with_logits(s, targets.clone()).unwrap();
    assert!((tape.value(loss).item() - want).abs() < 1e-10);
    let err = check(&[scores], |t, v| t.bce_with_logits(v[0], targets.clone()).unwrap());
    assert!(err < 1e-4, "{err}");
}

#[test]
fn random_composed_graphs() {
    let r = support::grad::suite(2024, 200);
    assert!(r.worst < 1e-4, "case {}: rel err {}", r.worst_case, r.worst);
    assert_eq!(r.ops.len(), 16, "ops exercised: {:?}", r.ops);
    assert_eq!(r.heads, 4);
}

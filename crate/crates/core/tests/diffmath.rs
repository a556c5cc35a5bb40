use std::collections::BTreeMap;

use loco_core::diffmath::{Activation, Adam, Dense, Graph, ParamStore, Var};
use loco_core::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn no_inputs() -> BTreeMap<String, Tensor> {
    BTreeMap::new()
}

fn random_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Tensor {
    let data = (0..r * c)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Tensor::new(r, c, data).unwrap()
}

/// Largest relative error between autodiff and central differences over all
/// scalars of `store`. `build` records the loss on a fresh graph.
fn max_fd_error(store: &mut ParamStore, build: &dyn Fn(&mut Graph, &ParamStore) -> Var) -> f64 {
    let mut g = Graph::new();
    let root = build(&mut g, store);
    store.zero_grad();
    g.backward(root).unwrap().accumulate_into(store);
    let analytic = store.flat_grads();
    let base = store.flat_values();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut eval = |delta: f64| {
            let mut v = base.clone();
            v[k] += delta;
            store.set_flat_values(&v).unwrap();
            g.forward(&[store], &no_inputs()).unwrap().item()
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let a = analytic[k];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    store.set_flat_values(&base).unwrap();
    worst
}

#[test]
fn forward_examples() {
    let mut g = Graph::new();
    let w = g.input("w", Tensor::scalar(3.0));
    let x = g.input("x", Tensor::scalar(2.0));
    g.mul(w, x).unwrap();
    let mut bind = BTreeMap::new();
    bind.insert("w".to_string(), Tensor::scalar(3.0));
    bind.insert("x".to_string(), Tensor::scalar(2.0));
    assert_eq!(g.forward(&[], &bind).unwrap().item(), 6.0);

    let mut g = Graph::new();
    let v = g.constant(Tensor::column(vec![1.0, 2.0, 3.0]));
    let s = g.sum(v);
    assert_eq!(g.value(s).item(), 6.0);

    let mut g = Graph::new();
    let v = g.constant(Tensor::scalar(-2.0));
    let y = g.leaky_relu(v, 0.01);
    assert_eq!(g.value(y).item(), -0.02);
}

#[test]
fn shape_mismatch_names_node() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros(2, 3));
    let b = g.constant(Tensor::zeros(2, 3));
    match g.matmul(a, b) {
        Err(Error::Shape { node, op, .. }) => {
            assert_eq!(node, 2);
            assert_eq!(op, "matmul");
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn unbound_input_is_reported() {
    let mut g = Graph::new();
    let x = g.input("x", Tensor::scalar(1.0));
    g.square(x);
    assert_eq!(
        g.forward(&[], &no_inputs()).unwrap_err(),
        Error::UnboundInput("x".into())
    );
}

#[test]
fn forward_replay_checks_shapes() {
    let mut g = Graph::new();
    let x = g.input("x", Tensor::zeros(2, 2));
    let w = g.constant(Tensor::zeros(2, 1));
    g.matmul(x, w).unwrap();
    let mut bind = BTreeMap::new();
    bind.insert("x".to_string(), Tensor::zeros(2, 3));
    assert!(matches!(
        g.forward(&[], &bind),
        Err(Error::Shape { node: 2, .. })
    ));
}

#[test]
fn backward_examples() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(3.0));
    let mut g = Graph::new();
    let wv = g.param(&store, w);
    let y = g.square(wv);
    g.backward(y).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad(w).item(), 6.0);

    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(0.0));
    let mut g = Graph::new();
    let wv = g.param(&store, w);
    let y = g.tanh(wv);
    g.backward(y).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad(w).item(), 1.0);
}

#[test]
fn clamp_subgradient_matches_differences() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(0.3));
    let build = |g: &mut Graph, s: &ParamStore| {
        let c = g.constant(Tensor::scalar(1.0));
        let wv = g.param(s, w);
        let d = g.sub(c, wv).unwrap();
        g.relu(d)
    };
    let mut g = Graph::new();
    let root = build(&mut g, &store);
    g.backward(root).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad(w).item(), -1.0);
    assert!(max_fd_error(&mut store, &build) < 1e-8);
}

#[test]
fn clamp_at_kink_has_zero_gradient() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(1.0));
    let mut g = Graph::new();
    let c = g.constant(Tensor::scalar(1.0));
    let wv = g.param(&store, w);
    let d = g.sub(c, wv).unwrap();
    let y = g.relu(d);
    g.backward(y).unwrap().accumulate_into(&mut store);
    assert_eq!(store.grad(w).item(), 0.0);
}

#[test]
fn non_scalar_root_fails() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::zeros(2, 1));
    assert_eq!(
        g.backward(v).unwrap_err(),
        Error::NonScalarRoot { rows: 2, cols: 1 }
    );
}

#[test]
fn adam_one_step_through_graph() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::scalar(1.0));
    let mut g = Graph::new();
    let wv = g.param(&store, w);
    let y = g.square(wv);
    g.backward(y).unwrap().accumulate_into(&mut store);
    store.adam_step(&Adam::with_lr(0.01)).unwrap();
    assert!((store.value(w).item() - 0.99).abs() < 1e-9);
    assert_eq!(store.grad(w).item(), 0.0);
}

#[test]
fn dense_layer_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::new();
    let id = Dense::new(&mut store, "id", 2, 2, Activation::Identity, &mut rng).unwrap();
    *store.value_mut(id.weight) = Tensor::identity(2);
    let x = Tensor::from_rows(&[[0.5, -1.5], [2.0, 3.0]]).unwrap();
    assert_eq!(id.eval(&store, &x), x);

    let t = Dense::new(&mut store, "t", 3, 2, Activation::Tanh, &mut rng).unwrap();
    assert_eq!(t.eval(&store, &Tensor::zeros(1, 3)).as_slice(), &[0.0, 0.0]);

    let l = Dense::new(&mut store, "l", 2, 2, Activation::LEAKY, &mut rng).unwrap();
    *store.value_mut(l.weight) = Tensor::identity(2);
    let out = l.eval(&store, &Tensor::row_vector(vec![-1.0, 1.0]));
    assert_eq!(out.as_slice(), &[-0.01, 1.0]);

    assert!(Dense::new(&mut store, "z", 0, 2, Activation::LEAKY, &mut rng).is_err());
}

#[test]
fn dense_init_within_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let d = Dense::new(&mut store, "d", 30, 20, Activation::Tanh, &mut rng).unwrap();
    let limit = (6.0f64 / 50.0).sqrt();
    assert!(store
        .value(d.weight)
        .as_slice()
        .iter()
        .all(|w| w.abs() < limit));
    assert!(store.value(d.bias).as_slice().iter().all(|&b| b == 0.0));
}

#[test]
fn graph_and_eval_agree_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut store = ParamStore::new();
    let d = Dense::new(&mut store, "d", 4, 3, Activation::LEAKY, &mut rng).unwrap();
    let x = random_tensor(&mut rng, 5, 4, 2.0);
    let mut g = Graph::new();
    let xv = g.input("x", x.clone());
    let y = d.forward(&mut g, &store, xv).unwrap();
    assert_eq!(g.value(y), &d.eval(&store, &x));
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut store = ParamStore::new();
    let d1 = Dense::new(&mut store, "a", 3, 6, Activation::Tanh, &mut rng).unwrap();
    let d2 = Dense::new(&mut store, "b", 6, 1, Activation::LEAKY, &mut rng).unwrap();
    let x = random_tensor(&mut rng, 7, 3, 1.0);
    let mut g = Graph::new();
    let xv = g.input("x", x.clone());
    let h = d1.forward(&mut g, &store, xv).unwrap();
    let o = d2.forward(&mut g, &store, h).unwrap();
    let sq = g.square(o);
    g.mean(sq);
    let mut bind = BTreeMap::new();
    bind.insert("x".to_string(), x);
    let a = g.forward(&[&store], &bind).unwrap().clone();
    let b = g.forward(&[&store], &bind).unwrap().clone();
    assert_eq!(a.as_slice()[0].to_bits(), b.as_slice()[0].to_bits());
}

#[test]
fn backward_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mut store = ParamStore::new();
        let w = store.add("w", random_tensor(&mut rng, 3, 2, 1.0));
        let x = random_tensor(&mut rng, 4, 3, 1.0);
        let f = |g: &mut Graph, s: &ParamStore| {
            let xv = g.constant(x.clone());
            let wv = g.param(s, w);
            let h = g.matmul(xv, wv).unwrap();
            let t = g.tanh(h);
            g.sum(t)
        };
        let h = |g: &mut Graph, s: &ParamStore| {
            let wv = g.param(s, w);
            let e = g.exp(wv);
            let q = g.square(e);
            g.mean(q)
        };
        let grad_of = |build: &dyn Fn(&mut Graph, &ParamStore) -> Var, s: &ParamStore| {
            let mut s = s.clone();
            s.zero_grad();
            let mut g = Graph::new();
            let root = build(&mut g, &s);
            g.backward(root).unwrap().accumulate_into(&mut s);
            s.flat_grads()
        };
        let both = |g: &mut Graph, s: &ParamStore| {
            let a = f(g, s);
            let b = h(g, s);
            g.add(a, b).unwrap()
        };
        let gf = grad_of(&f, &store);
        let gh = grad_of(&h, &store);
        let gs = grad_of(&both, &store);
        for k in 0..gs.len() {
            assert!((gs[k] - (gf[k] + gh[k])).abs() <= 1e-12);
        }
        store.zero_grad();
    }
}

/// One randomized graph over at most 50 parameters. Kinked ops get inputs
/// constructed away from their kinks.
fn random_trial(trial: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = rng.random_range(2..=5);
    let d = rng.random_range(1..=3);
    let h = rng.random_range(1..=4);
    let x = random_tensor(rng, n, d, 1.5);
    let mut store = ParamStore::new();
    let w1 = store.add("w1", random_tensor(rng, d, h, 1.0));
    let b1 = store.add("b1", random_tensor(rng, 1, h, 0.5));
    let w2 = store.add("w2", random_tensor(rng, h, 1, 1.0));
    let s = store.add("s", random_tensor(rng, 1, 1, 0.5));
    assert!(store.scalar_count() <= 50);
    let hidden = |g: &mut Graph, st: &ParamStore| {
        let xv = g.constant(x.clone());
        let wv = g.param(st, w1);
        let bv = g.param(st, b1);
        let a = g.matmul(xv, wv).unwrap();
        g.add_bias(a, bv).unwrap()
    };
    match trial % 6 {
        0 => max_fd_error(&mut store, &|g, st| {
            let a = hidden(g, st);
            let t = g.tanh(a);
            let w = g.param(st, w2);
            let o = g.matmul(t, w).unwrap();
            let q = g.square(o);
            g.sum(q)
        }),
        1 => max_fd_error(&mut store, &|g, st| {
            let a = hidden(g, st);
            let sc = g.scale(a, 0.3);
            let e = g.exp(sc);
            let sv = g.param(st, s);
            let m = g.mul_scalar(e, sv).unwrap();
            g.mean(m)
        }),
        2 => {
            // shift the bias so every pre-activation sits at least 0.05 from 0
            let pre = x.matmul(store.value(w1));
            for c in 0..h {
                let col: Vec<f64> = (0..n).map(|r| pre.get(r, c)).collect();
                let mut b = store.value(b1).get(0, c);
                while col.iter().any(|&p| (p + b).abs() < 0.05) {
                    b += 0.05;
                }
                store.value_mut(b1).set(0, c, b);
            }
            max_fd_error(&mut store, &|g, st| {
                let a = hidden(g, st);
                let l = g.leaky_relu(a, 0.01);
                let w = g.param(st, w2);
                let o = g.matmul(l, w).unwrap();
                let t = g.tanh(o);
                g.sum(t)
            })
        }
        3 => max_fd_error(&mut store, &|g, st| {
            let a = hidden(g, st);
            let z = g.tanh(a);
            let d2 = g.pair_sq_dist(z);
            let sv = g.param(st, s);
            let neg = g.scale(sv, -1.0);
            let c = g.exp(neg);
            let c = g.scale(c, -0.5);
            let k = g.mul_scalar(d2, c).unwrap();
            let k = g.exp(k);
            let noise = g.constant(Tensor::scalar(0.1));
            let cov = g.add_diag(k, noise).unwrap();
            let y = g.constant(Tensor::column(
                (0..n).map(|i| i as f64 * 0.3 - 0.4).collect(),
            ));
            g.gaussian_nll(cov, y, 1.0).unwrap()
        }),
        4 => {
            // pairwise hinge with every off-diagonal margin at least 0.01
            // away from the kink and every distance away from zero
            let z0 = {
                let mut g = Graph::new();
                let a = hidden(&mut g, &store);
                let z = g.tanh(a);
                g.value(z).clone()
            };
            let mut c = Tensor::zeros(n, n);
            let mut ok = true;
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let dist: f64 = z0
                        .row(i)
                        .iter()
                        .zip(z0.row(j))
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    ok &= dist > 1e-3;
                    let margin = if (i + j) % 2 == 0 { 0.2 } else { -0.2 };
                    c.set(i, j, dist + margin);
                }
            }
            if !ok {
                return 0.0;
            }
            max_fd_error(&mut store, &|g, st| {
                let a = hidden(g, st);
                let z = g.tanh(a);
                let dist = g.pair_dist(z);
                let cv = g.constant(c.clone());
                let diff = g.sub(cv, dist).unwrap();
                let p = g.relu(diff);
                let wts = g.constant(Tensor::filled(n, n, 0.7));
                let wp = g.mul(p, wts).unwrap();
                g.sum(wp)
            })
        }
        _ => max_fd_error(&mut store, &|g, st| {
            let a = hidden(g, st);
            let t = g.tanh(a);
            let e = g.exp(a);
            let m = g.mul(t, e).unwrap();
            let diff = g.sub(m, t).unwrap();
            let sum = g.add(diff, e).unwrap();
            g.mean(sum)
        }),
    }
}

#[test]
fn random_graphs_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for trial in 0..120 {
        let e = random_trial(trial, &mut rng);
        assert!(e < 1e-4, "trial {trial}: relative error {e:e}");
        worst = worst.max(e);
    }
    assert!(worst.is_finite());
}

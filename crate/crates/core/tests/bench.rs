use loco_core::bench::{
    make_named_pool, make_pool, max_area, rastrigin, sum_exp, Benchmark, RASTRIGIN_BOUND,
};
use loco_core::Error;
use proptest::prelude::*;

#[test]
fn objective_examples() {
    assert_eq!(rastrigin(&[0.0, 0.0]), 0.0);
    assert!((rastrigin(&[0.5, 0.5]) + 40.5).abs() < 1e-12);
    assert!((rastrigin(&[1.0, 0.0]) + 1.0).abs() < 1e-12);
    assert_eq!(sum_exp(&[0.0; 20]), 20.0);
    assert!((sum_exp(&[2f64.ln(), 3f64.ln()]) - 5.0).abs() < 1e-14);
    assert_eq!(max_area(&[0.0; 4096]).unwrap(), 0.0);
    assert_eq!(max_area(&[1.0; 4096]).unwrap(), 4096.0);
}

#[test]
fn rectangle_fixture_area() {
    let mut img = vec![0.0; 64 * 64];
    for r in 30..35 {
        for c in 3..10 {
            img[r * 64 + c] = 1.0;
        }
    }
    assert_eq!(max_area(&img).unwrap(), 35.0);
    img[0] = 2.0;
    assert!(matches!(
        max_area(&img),
        Err(Error::NonBinaryPixel { index: 0, .. })
    ));
}

#[test]
fn pools_are_reproducible() {
    for name in Benchmark::NAMES {
        let a = make_named_pool(name, 50, 9).unwrap();
        let b = make_named_pool(name, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = make_named_pool(name, 50, 10).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }
}

#[test]
fn pool_labels_match_objective() {
    for name in Benchmark::NAMES {
        let pool = make_named_pool(name, 200, 1).unwrap();
        for i in 0..pool.len() {
            let y = pool.benchmark.evaluate(pool.inputs.row(i)).unwrap();
            assert_eq!(y.to_bits(), pool.labels[i].to_bits());
        }
        let max = pool.labels.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(pool.optimum, max);
        assert_eq!(pool.labels[pool.argmax()], max);
        assert!(pool.labels.iter().all(|y| y.is_finite()));
    }
}

#[test]
fn rastrigin_pool_within_box() {
    let pool = make_pool(Benchmark::Rastrigin { dim: 2 }, 2000, 0).unwrap();
    assert_eq!(pool.inputs.shape(), (2000, 2));
    assert!(pool
        .inputs
        .as_slice()
        .iter()
        .all(|v| v.abs() <= RASTRIGIN_BOUND));
    assert!(pool.labels.iter().all(|&y| y <= 0.0));
}

#[test]
fn sum_exp_pool_is_centered() {
    let n = 5000;
    let d = 20;
    let pool = make_pool(Benchmark::SumExp { dim: d }, n, 4).unwrap();
    for c in 0..d {
        let col: Vec<f64> = (0..n).map(|r| pool.inputs.get(r, c)).collect();
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(
            mean.abs() < 5.0 * se,
            "coordinate {c}: mean {mean}, se {se}"
        );
    }
}

#[test]
fn max_area_pool_is_binary() {
    let pool = make_pool(Benchmark::MaxArea { side: 64 }, 30, 2).unwrap();
    assert_eq!(pool.inputs.cols(), 4096);
    assert!(pool.inputs.as_slice().iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(pool.labels.iter().all(|&y| (1.0..=4096.0).contains(&y)));
}

#[test]
fn bad_requests_fail() {
    assert_eq!(
        make_named_pool("water_converter", 10, 0),
        Err(Error::UnknownBenchmark("water_converter".into()))
    );
    assert!(make_pool(Benchmark::Rastrigin { dim: 2 }, 1, 0).is_err());
    assert!(make_pool(Benchmark::SumExp { dim: 0 }, 10, 0).is_err());
}

proptest! {
    #[test]
    fn rastrigin_is_non_positive(x in prop::collection::vec(-5.12f64..5.12, 1..6)) {
        let v = rastrigin(&x);
        prop_assert!(v <= 0.0);
        if x.iter().any(|&c| c != 0.0) {
            prop_assert!(v < 0.0);
        }
    }

    #[test]
    fn sum_exp_is_monotone(x in prop::collection::vec(-3.0f64..3.0, 1..20), k in 0usize..20, bump in 1e-3f64..2.0) {
        let k = k % x.len();
        let mut y = x.clone();
        y[k] += bump;
        prop_assert!(sum_exp(&y) > sum_exp(&x));
    }

    #[test]
    fn max_area_ignores_pixel_order(bits in prop::collection::vec(any::<bool>(), 1..300), rot in 0usize..300) {
        let img: Vec<f64> = bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let mut permuted = img.clone();
        permuted.rotate_left(rot % img.len());
        permuted.reverse();
        prop_assert_eq!(max_area(&img).unwrap(), max_area(&permuted).unwrap());
    }
}

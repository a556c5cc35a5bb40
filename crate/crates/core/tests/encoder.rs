use loco_core::bench::{make_pool, Benchmark};
use loco_core::encoder::{pretrain_autoencoder, Encoder, EncoderSpec, PretrainConfig};
use loco_core::{Error, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn leaky(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.01 * v
    }
}

#[test]
fn small_network_matches_hand_rolled_forward() {
    let spec = EncoderSpec::new(2).with_hidden(vec![4]);
    let enc = Encoder::init(spec, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    let p = enc.params();
    let w1 = p.value(p.find("encoder.0.weight").unwrap());
    let b1 = p.value(p.find("encoder.0.bias").unwrap());
    let w2 = p.value(p.find("encoder.1.weight").unwrap());
    let b2 = p.value(p.find("encoder.1.bias").unwrap());
    let x = [0.7, -1.3];
    let mut hidden = [0.0; 4];
    for (j, h) in hidden.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate() {
            acc += xi * w1.get(i, j);
        }
        *h = leaky(acc + b1.get(0, j));
    }
    let mut out = 0.0;
    for (j, h) in hidden.iter().enumerate() {
        out += h * w2.get(j, 0);
    }
    let out = leaky(out + b2.get(0, 0));
    let z = enc.encode(&x).unwrap();
    assert_eq!(z.len(), 1);
    assert!((z[0] - out).abs() < 1e-12);
}

#[test]
fn identity_layer_passes_inputs_through() {
    let spec = EncoderSpec::new(3).with_hidden(vec![]).with_latent_dim(3);
    let mut enc = Encoder::init(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let id = enc.params().find("encoder.0.weight").unwrap();
    *enc.params_mut().value_mut(id) = Tensor::identity(3);
    let x = [0.25, 1.5, 3.0];
    assert_eq!(enc.encode(&x).unwrap(), x.to_vec());
}

#[test]
fn batch_and_single_encodings_agree() {
    let spec = EncoderSpec::new(3)
        .with_hidden(vec![6, 4])
        .with_latent_dim(2);
    let enc = Encoder::init(spec, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let xs = Tensor::from_rows(&[[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.0, 0.0]]).unwrap();
    let batch = enc.encode_batch(&xs).unwrap();
    for r in 0..3 {
        assert_eq!(batch.row(r), enc.encode(xs.row(r)).unwrap().as_slice());
    }
}

#[test]
fn named_arrays_round_trip() {
    let spec = EncoderSpec::new(4).with_hidden(vec![3]);
    let enc = Encoder::init(spec.clone(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let arrays: Vec<(String, Tensor)> = enc
        .named_arrays()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let back = Encoder::from_named_arrays(
        spec.clone(),
        arrays.iter().map(|(n, t)| (n.as_str(), t.clone())),
    )
    .unwrap();
    assert_eq!(back.params().flat_values(), enc.params().flat_values());

    let missing = Encoder::from_named_arrays(
        spec.clone(),
        arrays.iter().skip(1).map(|(n, t)| (n.as_str(), t.clone())),
    );
    assert!(matches!(missing, Err(Error::Config(_))));
    let wrong_shape = Encoder::from_named_arrays(
        spec,
        arrays
            .iter()
            .map(|(n, _)| (n.as_str(), Tensor::zeros(1, 1))),
    );
    assert!(matches!(wrong_shape, Err(Error::Config(_))));
}

#[test]
fn repeated_point_is_memorized() {
    let data = Tensor::from_rows(&[[0.8, -0.4, 1.2]; 8]).unwrap();
    let spec = EncoderSpec::new(3).with_hidden(vec![8, 4]);
    let cfg = PretrainConfig {
        epochs: 600,
        lr: 1e-2,
    };
    let pre = pretrain_autoencoder(spec, &data, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!(
        pre.final_loss() < 1e-3 * pre.initial_loss(),
        "{} -> {}",
        pre.initial_loss(),
        pre.final_loss()
    );
}

#[test]
fn rastrigin_pool_reconstruction_improves() {
    let pool = make_pool(Benchmark::Rastrigin { dim: 2 }, 100, 5).unwrap();
    let spec = EncoderSpec::new(2).with_hidden(vec![32, 16, 8]);
    let pre = pretrain_autoencoder(
        spec,
        &pool.inputs,
        &PretrainConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(5),
    )
    .unwrap();
    assert_eq!(pre.losses.len(), 201);
    assert!(pre.final_loss() < pre.initial_loss());
    // non-increasing in aggregate: the last tenth averages below the first
    let tenth = pre.losses.len() / 10;
    let head: f64 = pre.losses[..tenth].iter().sum::<f64>() / tenth as f64;
    let tail: f64 = pre.losses[pre.losses.len() - tenth..].iter().sum::<f64>() / tenth as f64;
    assert!(tail < head);
}

#[test]
fn pretraining_is_reproducible() {
    let pool = make_pool(Benchmark::SumExp { dim: 5 }, 40, 2).unwrap();
    let spec = EncoderSpec::new(5).with_hidden(vec![8]);
    let cfg = PretrainConfig {
        epochs: 30,
        lr: 1e-2,
    };
    let a = pretrain_autoencoder(
        spec.clone(),
        &pool.inputs,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(3),
    )
    .unwrap();
    let b =
        pretrain_autoencoder(spec, &pool.inputs, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(
        a.encoder.params().flat_values(),
        b.encoder.params().flat_values()
    );
}

#[test]
fn pretraining_input_checks() {
    let spec = EncoderSpec::new(2).with_hidden(vec![2]);
    let cfg = PretrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        pretrain_autoencoder(spec.clone(), &Tensor::zeros(0, 2), &cfg, &mut rng).unwrap_err(),
        Error::Empty
    );
    assert!(pretrain_autoencoder(spec.clone(), &Tensor::zeros(1, 2), &cfg, &mut rng).is_err());
    assert!(pretrain_autoencoder(spec, &Tensor::zeros(4, 3), &cfg, &mut rng).is_err());
}

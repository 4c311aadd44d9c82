use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use proxsel::neural::{
    confusion, gradient_check, train, NetConfig, NeuralNet, Sample, Standardizer,
};

fn random_net(seed: u64, inputs: usize, hidden: usize) -> NeuralNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let mean: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let std: Vec<f64> = (0..inputs).map(|_| rng.gen_range(0.5..3.0)).collect();
    let mut cfg = NetConfig::new(inputs, hidden);
    cfg.seed = seed;
    NeuralNet::init(&cfg, Standardizer { mean, std })
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> Vec<Sample> {
    (0..n)
        .map(|i| {
            let x: Vec<f64> = (0..dims).map(|_| rng.gen_range(-3.0..3.0)).collect();
            Sample::new(x, (i % 2) as u8)
        })
        .collect()
}

/// Straight-line forward pass written independently of the library.
fn oracle_forward(net: &NeuralNet, x: &[f64]) -> f64 {
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut z = vec![0.0; x.len()];
    for i in 0..x.len() {
        z[i] = (x[i] - net.standardizer.mean[i]) / net.standardizer.std[i];
    }
    let mut out = net.b2;
    for j in 0..net.num_hidden {
        let mut a = net.b1[j];
        for i in 0..net.num_inputs {
            a += net.w1[j * net.num_inputs + i] * z[i];
        }
        out += net.w2[j] * sig(a);
    }
    sig(out)
}

#[test]
fn forward_matches_matrix_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..20 {
        let net = random_net(seed, 4, 7);
        for _ in 0..10 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let y = net.forward(&x).unwrap();
            assert!((y - oracle_forward(&net, &x)).abs() < 1e-12);
            assert!(y > 0.0 && y < 1.0);
        }
    }
    assert!(random_net(1, 4, 3).forward(&[1.0, 2.0]).is_err());
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for seed in 0..20 {
        let net = random_net(seed, 3, 5);
        let samples = random_samples(&mut rng, 10, 3);
        let err = gradient_check(&net, &samples, 2.0, 1e-5).unwrap();
        assert!(err < 1e-6, "net {seed}: {err}");
    }
}

#[test]
fn constant_feature_stays_finite() {
    let samples: Vec<Sample> = (0..8)
        .map(|i| Sample::new(vec![3.0, i as f64], (i % 2) as u8))
        .collect();
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let st = Standardizer::fit(&rows);
    assert_eq!(st.std[0], 1.0);
    let (net, log) = train(&NetConfig::new(2, 3), &samples).unwrap();
    assert!(log.losses.iter().all(|l| l.is_finite()));
    assert!(gradient_check(&net, &samples, 2.0, 1e-5).unwrap() < 1e-6);
}

fn separable(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = (i % 2) as u8;
            let side = if label == 1 { 1.0 } else { -1.0 };
            let x = vec![
                side * rng.gen_range(0.5..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            Sample::new(x, label)
        })
        .collect()
}

#[test]
fn separable_set_is_learned_at_default_rate() {
    let samples = separable(40, 3);
    let cfg = NetConfig::new(3, 6);
    assert_eq!((cfg.learning_rate, cfg.max_iterations), (0.01, 1000));
    let (net, log) = train(&cfg, &samples).unwrap();
    assert!(log.losses.len() <= 1000);
    let m = confusion(&net, &samples, 0.5).unwrap();
    assert_eq!(m[0][1] + m[1][0], 0, "{m:?}");
    assert_eq!(m[1][1], 20);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    net.save(&path).unwrap();
    let back = NeuralNet::load(&path).unwrap();
    assert_eq!(confusion(&back, &samples, 0.5).unwrap(), m);
    for s in &samples {
        assert!(
            (back.forward(&s.features).unwrap() - net.forward(&s.features).unwrap()).abs() < 1e-15
        );
    }
}

#[test]
fn corrupted_model_file_is_rejected() {
    let net = random_net(2, 3, 2);
    let text = net.to_text();
    assert!(NeuralNet::from_text(&text.replacen("hidden", "hidden_x", 1)).is_err());
    let short: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
    assert!(NeuralNet::from_text(&short).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn standardized_training_rows_have_unit_stats(seed in any::<u64>(), n in 3usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen_range(-100.0..100.0)).collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let st = Standardizer::fit(&refs);
        let z: Vec<Vec<f64>> = rows.iter().map(|r| st.apply(r)).collect();
        for d in 0..4 {
            let m = z.iter().map(|r| r[d]).sum::<f64>() / n as f64;
            let v = z.iter().map(|r| (r[d] - m).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((v.sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn training_ignores_sample_order(seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_samples(&mut rng, 12, 3);
        let mut shuffled = samples.clone();
        shuffled.shuffle(&mut rng);
        let mut cfg = NetConfig::new(3, 4);
        cfg.max_iterations = 50;
        let (a, la) = train(&cfg, &samples).unwrap();
        let (b, lb) = train(&cfg, &shuffled).unwrap();
        prop_assert_eq!(la.losses, lb.losses);
        prop_assert_eq!(a, b);
    }
}

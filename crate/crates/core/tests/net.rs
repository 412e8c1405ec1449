use nalgebra::{DMatrix, DVector};
use podflow::net::{
    adamax_update, gradient, init_network, layer_dims, loss_standard, loss_weighted, rollout, train, AdaMaxConfig,
    AdaMaxState, Dataset, LossConfig, LossSpec, Network, Normalization, OutputActivation, Provenance, TrainingConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(d_in: usize, d_out: usize, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(d_in, n, |_, _| rng.gen_range(-1.0..1.0));
    let y = DMatrix::from_fn(d_out, n, |_, _| rng.gen_range(-1.0..1.0));
    let tags = (0..n)
        .map(|j| if j % 3 == 0 { Provenance::Observation } else { Provenance::Simulation })
        .collect();
    Dataset::new(x, y, tags, vec![0; n], (0..n).collect()).unwrap()
}

fn loss_of(net: &Network, ds: &Dataset, spec: LossSpec) -> f64 {
    match spec {
        LossSpec::Standard => loss_standard(net, ds).unwrap(),
        LossSpec::Weighted { w_obs, w_sim } => loss_weighted(net, ds, w_obs, w_sim).unwrap(),
    }
}

/// Largest per-component excess of `|analytic - fd|` over the allowed
/// `rtol * max(|analytic|, |fd|)` plus the rounding floor of the difference
/// quotient. Returns (worst relative error above the floor, pass).
fn gradient_check(net: &Network, ds: &Dataset, spec: LossSpec, h: f64, rtol: f64) -> (f64, bool) {
    let analytic = gradient(net, ds, &spec).unwrap().flat();
    let base = net.flat_params();
    let l0 = loss_of(net, ds, spec);
    // rounding of L(theta +- h) is a few ulps of L, amplified by 1/h
    let floor = 64.0 * f64::EPSILON * l0.abs().max(1.0) / h;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let mut pass = true;
    for (k, a) in analytic.iter().enumerate() {
        let mut p = base.clone();
        p[k] = base[k] + h;
        probe.set_flat_params(&p).unwrap();
        let up = loss_of(&probe, ds, spec);
        p[k] = base[k] - h;
        probe.set_flat_params(&p).unwrap();
        let down = loss_of(&probe, ds, spec);
        let fd = (up - down) / (2.0 * h);
        let diff = (a - fd).abs();
        let scale = a.abs().max(fd.abs());
        if diff > rtol * scale + floor {
            pass = false;
        }
        if scale > floor / rtol {
            worst = worst.max(diff / scale);
        }
    }
    (worst, pass)
}

#[test]
fn gradient_matches_central_differences_up_to_four_by_fifty() {
    let specs = [LossSpec::Standard, LossSpec::Weighted { w_obs: 2.0, w_sim: 0.5 }];
    for (depth, width, seed) in [(1, 8, 1), (2, 20, 2), (3, 30, 3), (4, 50, 4)] {
        let mut net = init_network(&layer_dims(6, depth, width, 3), seed, 0.01, OutputActivation::Linear).unwrap();
        let ds = random_dataset(6, 3, 8, seed + 100);
        for spec in specs {
            let (worst, pass) = gradient_check(&net, &ds, spec, 1e-6, 1e-5);
            assert!(pass, "{depth}x{width} {spec:?}: worst relative error {worst:e}");
        }
        net.set_normalization(Some(Normalization::fit(ds.inputs(), ds.targets())));
        let (worst, pass) = gradient_check(&net, &ds, LossSpec::Standard, 1e-6, 1e-5);
        assert!(pass, "{depth}x{width} normalized: worst relative error {worst:e}");
    }
}

#[test]
fn gradient_with_leaky_output_layer() {
    let net = init_network(&layer_dims(4, 2, 10, 2), 9, 0.1, OutputActivation::LeakyRelu).unwrap();
    let ds = random_dataset(4, 2, 6, 19);
    let (worst, pass) = gradient_check(&net, &ds, LossSpec::Standard, 1e-6, 1e-5);
    assert!(pass, "worst relative error {worst:e}");
}

#[test]
fn adamax_minimizes_scalar_quadratic_within_bound() {
    let cfg = AdaMaxConfig {
        learning_rate: 0.01,
        ..AdaMaxConfig::default()
    };
    let mut state = AdaMaxState::new(1);
    let mut theta = [1.0];
    let mut reached = None;
    for t in 1..=2000 {
        let grad = [2.0 * theta[0]];
        let step = adamax_update(&mut state, &mut theta, &grad, &cfg);
        let bound = cfg.learning_rate / (1.0 - cfg.beta1.powi(t));
        assert!(step <= bound * (1.0 + 1e-12), "step {t}: {step} exceeds {bound}");
        if reached.is_none() && theta[0].abs() < 1e-3 {
            reached = Some(t);
        }
    }
    assert!(reached.is_some(), "final |theta| = {}", theta[0].abs());
    assert!(theta[0].abs() < 1e-3);
}

#[test]
fn training_reduces_loss_on_a_linear_map() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = DMatrix::from_fn(2, 3, |_, _| rng.gen_range(-1.0..1.0));
    let x = DMatrix::from_fn(3, 64, |_, _| rng.gen_range(-1.0..1.0));
    let y = &a * &x;
    let ds = Dataset::new(x, y, vec![Provenance::Simulation; 64], vec![0; 64], vec![0; 64]).unwrap();
    let net = init_network(&layer_dims(3, 2, 16, 2), 1, 0.01, OutputActivation::Linear).unwrap();
    let cfg = TrainingConfig {
        epochs: 200,
        batch_size: 16,
        optimizer: AdaMaxConfig {
            learning_rate: 0.01,
            ..AdaMaxConfig::default()
        },
        ..TrainingConfig::default()
    };
    let before = loss_standard(&net, &ds).unwrap();
    let (trained, history) = train(&net, &ds, &cfg).unwrap();
    assert_eq!(history.losses.len(), 200);
    let after = loss_standard(&trained, &ds).unwrap();
    assert!(after < 1e-2 * before, "{before} -> {after}");
    let (again, _) = train(&net, &ds, &cfg).unwrap();
    assert_eq!(again, trained);
}

#[test]
fn weighted_training_favours_observation_pairs() {
    // same inputs, conflicting targets: the fit lands near the heavier tag
    let n = 40;
    let x = DMatrix::from_fn(1, n, |_, j| (j / 2) as f64 / 20.0);
    let y = DMatrix::from_fn(1, n, |_, j| if j % 2 == 0 { 1.0 } else { 0.0 });
    let tags = (0..n)
        .map(|j| if j % 2 == 0 { Provenance::Observation } else { Provenance::Simulation })
        .collect();
    let ds = Dataset::new(x, y, tags, vec![0; n], vec![0; n]).unwrap();
    let net = init_network(&[1, 8, 1], 2, 0.01, OutputActivation::Linear).unwrap();
    let cfg = TrainingConfig {
        epochs: 300,
        batch_size: n,
        loss: LossConfig::Weighted { w_obs: 9.0, w_sim: 1.0 },
        optimizer: AdaMaxConfig {
            learning_rate: 0.01,
            ..AdaMaxConfig::default()
        },
        ..TrainingConfig::default()
    };
    let (trained, _) = train(&net, &ds, &cfg).unwrap();
    let mean = (0..20)
        .map(|k| trained.predict(&DVector::from_element(1, k as f64 / 20.0)).unwrap()[0])
        .sum::<f64>()
        / 20.0;
    assert!((mean - 0.9).abs() < 0.05, "mean prediction {mean}");
}

/// Forward pass written out layer by layer from the public parameters.
fn forward_oracle(net: &Network, x: &DVector<f64>) -> DVector<f64> {
    let slope = net.slope();
    let mut a = x.clone();
    let last = net.n_layers() - 1;
    for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
        let z = w * &a + b;
        let activate = l < last || net.output_activation() == OutputActivation::LeakyRelu;
        a = if activate { z.map(|v| if v > 0.0 { v } else { slope * v }) } else { z };
    }
    a
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn forward_matches_layerwise_oracle(
        d_in in 1usize..6, depth in 1usize..4, width in 1usize..12, d_out in 1usize..4,
        seed in 0u64..1000, slope in 0.0f64..0.5, leaky_out in any::<bool>(),
        xs in prop::collection::vec(-3.0f64..3.0, 6),
    ) {
        let act = if leaky_out { OutputActivation::LeakyRelu } else { OutputActivation::Linear };
        let net = init_network(&layer_dims(d_in, depth, width, d_out), seed, slope, act).unwrap();
        let x = DVector::from_iterator(d_in, xs.into_iter().take(d_in));
        let got = net.predict(&x).unwrap();
        let want = forward_oracle(&net, &x);
        prop_assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn adamax_steps_never_exceed_bias_corrected_rate(
        grads in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 1..60),
        lr in 1e-4f64..0.1, beta1 in 0.5f64..0.99, beta2 in 0.99f64..0.9999,
    ) {
        let cfg = AdaMaxConfig { learning_rate: lr, beta1, beta2, epsilon: 1e-8 };
        let mut state = AdaMaxState::new(3);
        let mut p = [0.0; 3];
        for (t, g) in grads.iter().enumerate() {
            let step = adamax_update(&mut state, &mut p, g, &cfg);
            let bound = lr / (1.0 - beta1.powi(t as i32 + 1));
            prop_assert!(step <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn equal_weights_reduce_to_standard_loss(seed in 0u64..500, n in 1usize..20) {
        let ds = random_dataset(3, 2, n, seed);
        let net = init_network(&[3, 5, 2], seed, 0.01, OutputActivation::Linear).unwrap();
        let w = 1.0 / n as f64;
        let a = loss_weighted(&net, &ds, w, w).unwrap();
        let b = loss_standard(&net, &ds).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.max(1.0));
    }

    #[test]
    fn bundle_round_trip_is_exact(seed in 0u64..1000, depth in 1usize..4, width in 1usize..10) {
        let mut net = init_network(&layer_dims(4, depth, width, 2), seed, 0.02, OutputActivation::Linear).unwrap();
        let ds = random_dataset(4, 2, 5, seed);
        net.set_normalization(Some(Normalization::fit(ds.inputs(), ds.targets())));
        let back = Network::from_bytes(&net.to_bytes()).unwrap();
        prop_assert_eq!(back, net);
    }

    #[test]
    fn rollout_has_one_state_per_input(steps in 0usize..12, seed in 0u64..100) {
        let net = init_network(&[3, 4, 2], seed, 0.01, OutputActivation::Linear).unwrap();
        let inputs = vec![DVector::from_element(1, 0.5); steps];
        let states = rollout(&net, &DVector::from_element(2, 0.1), &inputs).unwrap();
        prop_assert_eq!(states.len(), steps + 1);
        if steps > 0 {
            let x = DVector::from_vec(vec![states[0][0], states[0][1], 0.5]);
            prop_assert_eq!(&states[1], &net.predict(&x).unwrap());
        }
    }
}

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use weavelab_core::adversary::*;
use weavelab_core::{bit_stats, linf_norm, quantize, QuantSpec, Tensor3};

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Two classes separated by the hyperplane `mean(x) = 0.5`: dark images
/// draw pixels from [0, 0.4], bright ones from [0.6, 1].
fn separable_toy_set(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let lo = if label == 0 { 0.0 } else { 0.6 };
            let image = Tensor3::from_fn(1, 12, 12, |_, _, _| rng.gen_range(lo..=lo + 0.4)).unwrap();
            Sample { image, label }
        })
        .collect()
}

#[test]
fn linearly_separable_toy_set_trains_above_95_percent() {
    let arch = Architecture { num_classes: 2, ..Architecture::default() };
    for seed in 0..5 {
        let data = separable_toy_set(200, seed);
        let cfg = TrainConfig::new(0.1, 10, 8, seed).unwrap();
        let model = train(&TinyCnn::init(&arch, seed).unwrap(), &data, &cfg).unwrap();
        let acc = accuracy(&model, &data).unwrap();
        println!("seed {seed}: train accuracy {acc:.3}");
        assert!(acc >= 0.95, "seed {seed}: {acc}");
    }
}

#[test]
fn fgsm_components_are_signed_epsilon() {
    let model = TinyCnn::init(&Architecture::default(), 9).unwrap();
    let data = SyntheticCorpus::new(1, 12, 12, 6).unwrap().generate(30, 9, 0);
    for eps in [0.0, 0.01, 0.05] {
        let budget = PerturbBudget::normalized(eps).unwrap();
        for s in &data {
            let eta = fgsm(&model, &s.image, s.label, &budget).unwrap();
            assert!(eta.data().iter().all(|&v| v == eps || v == -eps || v == 0.0));
            assert!(linf_norm(&eta) <= eps);
            let adv = adversarial_sample(&s.image, &eta, 0.0, 1.0).unwrap();
            assert!(adv.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn zero_budget_uap_is_zero() {
    let model = TinyCnn::init(&Architecture::default(), 1).unwrap();
    let data = SyntheticCorpus::new(1, 12, 12, 6).unwrap().generate(30, 1, 1);
    let budget = PerturbBudget::normalized(0.0).unwrap();
    let cfg = UapConfig { step: 0.01, ..UapConfig::for_budget(&budget) };
    let out = craft_uap(&model, &data, &budget, &cfg).unwrap();
    assert!(out.perturbation.data().iter().all(|&v| v == 0.0));
    assert_eq!(out.fooling_rate, 0.0);
}

#[test]
fn uap_stays_inside_budget_after_every_step() {
    let model = TinyCnn::init(&Architecture::default(), 2).unwrap();
    let data = SyntheticCorpus::new(1, 12, 12, 6).unwrap().generate(40, 2, 1);
    for eps in [0.01, 0.03, 0.05] {
        let budget = PerturbBudget::normalized(eps).unwrap();
        let cfg = UapConfig { step: eps * 0.7, max_iters: 5, target_fooling_rate: 1.0 };
        let out = craft_uap(&model, &data, &budget, &cfg).unwrap();
        assert!(!out.linf_trace.is_empty());
        assert!(out.linf_trace.iter().all(|&n| n <= eps));
        assert!(linf_norm(&out.perturbation) <= eps);
    }
}

#[test]
fn separation_over_five_seeds() {
    let cfg = ExperimentConfig::default();
    let outcomes: Vec<SeedOutcome> = (0..5).map(|s| run_seed(&cfg, s).unwrap().2).collect();
    for o in &outcomes {
        println!(
            "seed {}: acc {:.3}, fooling uap {:.3} random {:.3} fgsm {:.3}; top1 clean {:.3} random {:.3} uap {:.3}",
            o.seed,
            o.heldout_accuracy,
            o.uap.fooling_rate,
            o.random_low.fooling_rate,
            o.fgsm.fooling_rate,
            o.uap.top1_clean,
            o.random_low.top1_perturbed,
            o.uap.top1_perturbed
        );
        assert!(o.uap_linf <= cfg.epsilon);
        assert!(o.uap.n_samples >= 500);
    }
    let uap_fr = mean(outcomes.iter().map(|o| o.uap.fooling_rate));
    let rnd_fr = mean(outcomes.iter().map(|o| o.random_low.fooling_rate));
    let fgsm_fr = mean(outcomes.iter().map(|o| o.fgsm.fooling_rate));
    let clean_t1 = mean(outcomes.iter().map(|o| o.uap.top1_clean));
    let rnd_t1 = mean(outcomes.iter().map(|o| o.random_low.top1_perturbed));
    let uap_t1 = mean(outcomes.iter().map(|o| o.uap.top1_perturbed));
    assert!(uap_fr > rnd_fr, "uap {uap_fr} vs random {rnd_fr}");
    assert!(fgsm_fr > rnd_fr, "fgsm {fgsm_fr} vs random {rnd_fr}");
    assert!(clean_t1 >= rnd_t1 && rnd_t1 > uap_t1, "{clean_t1} {rnd_t1} {uap_t1}");
}

#[test]
fn interleaved_first_layer_gives_identical_report() {
    let cfg = ExperimentConfig { train_size: 240, heldout_size: 120, craft_size: 60, ..Default::default() };
    let (model, v, _) = run_seed(&cfg, 3).unwrap();
    let data = SyntheticCorpus::new(1, 12, 12, 6).unwrap().generate(300, 3, 7);
    let direct = fooling_report(&model, &data, &v, EvalPath::Direct).unwrap();
    let woven = fooling_report(&model, &data, &v, EvalPath::Interleaved).unwrap();
    assert_eq!(direct, woven);
    assert!(direct.fooling_rate > 0.0);
    for s in data.iter().take(20) {
        let a = perturbed_forward(&model, &s.image, &v, EvalPath::Direct).unwrap();
        let b = perturbed_forward(&model, &s.image, &v, EvalPath::Interleaved).unwrap();
        for (x, y) in a.logits.iter().zip(&b.logits) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
        }
    }
}

#[test]
fn crafted_uap_digitizes_within_four_bits() {
    let cfg = ExperimentConfig { train_size: 240, heldout_size: 60, craft_size: 60, ..Default::default() };
    let (_, v, _) = run_seed(&cfg, 1).unwrap();
    let q = quantize(&v.map(|e| e * 255.0), &QuantSpec::new(4, true, 1.0).unwrap()).unwrap();
    assert!(bit_stats(&q).max_magnitude_bits <= 4);
    let cmp = noise_bit_comparison(&v, 1.0, 5).unwrap();
    assert_eq!(cmp.perturbation, bit_stats(&q));
    println!("{cmp:?}");
}

#[test]
fn random_noise_respects_modes() {
    let budget = PerturbBudget::default();
    for seed in 0..20 {
        let low = random_noise((3, 16, 16), &budget, NoiseMode::Low, seed).unwrap();
        assert!(linf_norm(&low) <= 0.05 * budget.image_max);
        let high = random_noise((3, 16, 16), &budget, NoiseMode::High, seed).unwrap();
        assert!(linf_norm(&high) <= budget.image_max);
    }
}

proptest! {
    #[test]
    fn any_five_percent_perturbation_fits_four_bits(seed in any::<u64>(), eps in 0.0f64..=0.05) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Tensor3::from_fn(3, 8, 8, |_, _, _| rng.gen_range(-eps..=eps)).unwrap();
        let q = quantize(&v, &QuantSpec::noise_on_8bit(4).unwrap()).unwrap();
        prop_assert!(bit_stats(&q).max_magnitude_bits <= 4);
    }

    #[test]
    fn quantize_round_trip_within_half_step(
        vals in proptest::collection::vec(-15.0f64..=15.0, 1..40), scale in 0.01f64..2.0
    ) {
        let q = QuantSpec::new(5, true, scale).unwrap();
        let t = Tensor3::new(1, 1, vals.len(), vals.iter().map(|v| v * scale).collect()).unwrap();
        let back = weavelab_core::tensor::dequantize(&quantize(&t, &q).unwrap(), &q);
        for (a, b) in t.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= scale / 2.0 * (1.0 + 1e-12));
        }
    }

    #[test]
    fn linf_triangle_and_scan(
        a in proptest::collection::vec(-100.0f64..100.0, 12), b in proptest::collection::vec(-100.0f64..100.0, 12)
    ) {
        let ta = Tensor3::new(1, 3, 4, a.clone()).unwrap();
        let tb = Tensor3::new(1, 3, 4, b).unwrap();
        prop_assert!(linf_norm(&ta.add(&tb).unwrap()) <= linf_norm(&ta) + linf_norm(&tb));
        let mut scan = 0.0f64;
        for v in &a {
            if v.abs() > scan {
                scan = v.abs();
            }
        }
        prop_assert_eq!(linf_norm(&ta), scan);
    }

    #[test]
    fn set_bits_monotone_under_magnitude_growth(
        vals in proptest::collection::vec(-1000i32..1000, 1..30), bump in 0usize..30
    ) {
        let t = Tensor3::new(1, 1, vals.len(), vals.clone()).unwrap();
        let mut grown = vals.clone();
        let i = bump % grown.len();
        // Setting an extra high bit never clears set bits.
        grown[i] = grown[i].signum().max(1) * (grown[i].abs() | 1 << 12);
        let g = Tensor3::new(1, 1, grown.len(), grown).unwrap();
        prop_assert!(bit_stats(&g).total_nonzero_bits >= bit_stats(&t).total_nonzero_bits);
        let popcount: u64 = vals.iter().map(|v| u64::from(v.unsigned_abs().count_ones())).sum();
        prop_assert_eq!(bit_stats(&t).total_nonzero_bits, popcount);
    }
}

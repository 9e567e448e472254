use matvae::chem::{encode_onehot, TokenVocab};
use matvae::config::RunConfig;
use matvae::experiments::{first_discovery_cycle, partition, random_expectation, rank_by_scores};
use matvae::generation::bias_latent;
use matvae::inner::{corr_loss, PropertyBinding};
use matvae::latent::LatentGaussian;
use matvae::manifest::Manifest;
use matvae::stats::pearson;
use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOKENS: [&str; 8] = ["[C]", "[N]", "[O]", "[=C]", "[Branch1]", "[Ring1]", "[F]", "[#N]"];

fn selfies_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(0..TOKENS.len(), 1..12).prop_map(|ids| ids.into_iter().map(|i| TOKENS[i]).collect())
}

fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn vocab_ignores_corpus_order(mut corpus in prop::collection::vec(selfies_strategy(), 1..20), seed in any::<u64>()) {
        let a = TokenVocab::build(corpus.iter().map(String::as_str)).unwrap();
        corpus.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let b = TokenVocab::build(corpus.iter().map(String::as_str)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.hash(), b.hash());
        prop_assert_eq!(a.token(0), "<pad>");
        prop_assert_eq!(a.token(1), "<eos>");
    }

    #[test]
    fn onehot_columns_sum_to_one(corpus in prop::collection::vec(selfies_strategy(), 1..10)) {
        let vocab = TokenVocab::build(corpus.iter().map(String::as_str)).unwrap();
        let mols: Vec<_> = corpus.iter().map(|s| vocab.encode(s).unwrap()).collect();
        let batch = encode_onehot(&mols, &vocab, 16).unwrap();
        let sums = batch.data.sum_axis(ndarray::Axis(1));
        prop_assert!(sums.iter().all(|&s| s == 1.0));
        for (i, m) in mols.iter().enumerate() {
            prop_assert_eq!(vocab.ids_to_selfies(&batch.ids.row(i).to_vec()), corpus[i].clone());
            prop_assert_eq!(m.token_ids.len(), m.chem_len() + 1);
        }
    }

    #[test]
    fn correlation_bounded_and_scale_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        scale in 0.01f64..100.0,
        shift in -50.0f64..50.0,
    ) {
        let (z, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let b = [PropertyBinding::new(0, 0)];
        let (c, _) = corr_loss(column(&z).view(), column(&y).view(), &b);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&c));
        let z2: Vec<f64> = z.iter().map(|v| v * scale + shift).collect();
        let (c2, _) = corr_loss(column(&z2).view(), column(&y).view(), &b);
        prop_assert!((c - c2).abs() < 1e-6, "{c} vs {c2}");
        let p = pearson(&z, &y);
        prop_assert!((c - p).abs() < 1e-9);
        let neg = [PropertyBinding { property: 0, component: 0, direction: -1 }];
        let (cn, _) = corr_loss(column(&z).view(), column(&y).view(), &neg);
        prop_assert!((c + cn).abs() < 1e-12);
    }

    #[test]
    fn kl_is_non_negative(
        mu in prop::collection::vec(-5.0f64..5.0, 12),
        logvar in prop::collection::vec(-6.0f64..4.0, 12),
    ) {
        let g = LatentGaussian::new(
            Array2::from_shape_vec((3, 4), mu).unwrap(),
            Array2::from_shape_vec((3, 4), logvar).unwrap(),
        ).unwrap();
        prop_assert!(g.kl() >= 0.0);
        let zero = LatentGaussian::new(Array2::<f64>::zeros((3, 4)), Array2::zeros((3, 4))).unwrap();
        prop_assert_eq!(zero.kl(), 0.0);
    }

    #[test]
    fn bias_touches_only_component_k(
        vals in prop::collection::vec(-3.0f32..3.0, 16),
        k in 0usize..8,
        bias in -4.0f64..4.0,
    ) {
        let z = Array2::from_shape_vec((2, 8), vals).unwrap();
        let out = bias_latent(z.view(), k, bias);
        for ((i, j), &v) in out.indexed_iter() {
            if j == k {
                prop_assert_eq!(v, z[[i, j]] + bias as f32);
            } else {
                prop_assert_eq!(v, z[[i, j]]);
            }
        }
    }

    #[test]
    fn partition_is_exact(scores in prop::collection::vec(-5.0f64..5.0, 1..120), size in 1usize..15) {
        let ranked = rank_by_scores(&scores);
        let parts = partition(&ranked, size);
        prop_assert_eq!(parts.len(), scores.len().div_ceil(size));
        prop_assert!(parts[..parts.len() - 1].iter().all(|p| p.len() == size));
        let mut all: Vec<usize> = parts.concat();
        prop_assert_eq!(&all, &ranked);
        all.sort_unstable();
        prop_assert_eq!(all, (0..scores.len()).collect::<Vec<_>>());
        for w in ranked.windows(2) {
            prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
        }
    }

    #[test]
    fn config_round_trips(seed in 0..=i64::MAX as u64, alpha in 0.0f64..20.0, bias in 0.0f64..5.0, epochs in 1usize..50) {
        let mut cfg = RunConfig { seed, ..RunConfig::default() };
        cfg.inner.alpha = alpha;
        cfg.generate.bias = bias;
        cfg.outer.epochs = epochs;
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn manifest_round_trips(
        seed in any::<u64>(),
        outputs in prop::collection::btree_map("[a-z]{1,8}/[a-z]{1,8}\\.json", "[0-9a-f]{64}", 0..6),
    ) {
        let mut m = Manifest::new("train-inner", seed, "abc");
        m.outputs = outputs;
        m.summary = serde_json::json!({"epochs": 3});
        let back: Manifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }
}

#[test]
fn random_expectation_matches_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (total, size, holdout) in [(30, 5, 2), (40, 10, 3), (20, 4, 1)] {
        let exact = random_expectation(total, size, holdout);
        let mut ranked: Vec<usize> = (0..total).collect();
        let targets: Vec<usize> = (0..holdout).collect();
        let n = 40_000;
        let mut sum = 0.0;
        for _ in 0..n {
            ranked.shuffle(&mut rng);
            sum += first_discovery_cycle(&ranked, size, &targets).unwrap() as f64;
        }
        let mc = sum / n as f64;
        assert!(
            (exact - mc).abs() < 0.03,
            "{total}/{size}/{holdout}: exact {exact} vs sampled {mc}"
        );
    }
}

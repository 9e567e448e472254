//! Acceptance suite, one test per criterion. Each prints a single
//! `criterion N PASS|FAIL: ...` line.
//!
//! Criteria 4 to 6 share the prepared data and outer model under
//! `target/acceptance-cache/<stage hash>`; a cold cache trains the outer model
//! from scratch, which takes on the order of an hour on one CPU core.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use matvae::chem::{selfies_to_smiles, smiles_to_selfies, ChemToolkit, RdkitToolkit, TokenVocab, EOS_ID, PAD_ID};
use matvae::commands::{cmd_prepare, cmd_train_outer, OUTER_CKPT};
use matvae::config::RunConfig;
use matvae::corpus::read_lines;
use matvae::experiments::prepare::{LABELED_FILE, VOCAB_FILE};
use matvae::experiments::{
    random_expectation, run_bias_study, run_correlation_study, run_sublist_experiment, CorrelationOutput,
};
use matvae::generation::ModelPair;
use matvae::inner::LabeledDataset;
use matvae::latent::LatentGaussian;
use matvae::manifest::Manifest;
use matvae::oracle::{SaOracle, ScoreCache};
use matvae::outer::{load_outer, token_cross_entropy, train_outer, OuterModel, OuterModelConfig};
use matvae::rng::substream;

fn verdict(n: u8, pass: bool, detail: String) {
    println!("criterion {n} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn toolkit() -> Arc<RdkitToolkit> {
    RdkitToolkit::shared().expect("RDKit worker")
}

fn corpus_lines() -> Vec<String> {
    read_lines(&manifest_dir().join("../../data/moses_60k.smi.gz")).unwrap()
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_representation() {
    let tk = toolkit();
    let src: Vec<String> = corpus_lines().into_iter().take(5000).collect();
    let selfies: Vec<String> = src.iter().map(|s| smiles_to_selfies(s).unwrap()).collect();
    let vocab = TokenVocab::build(selfies.iter().map(String::as_str)).unwrap();
    let back: Vec<String> = selfies
        .iter()
        .map(|s| {
            let ids = vocab.encode(s).unwrap().token_ids;
            selfies_to_smiles(&vocab.ids_to_selfies(&ids)).unwrap()
        })
        .collect();
    let a = tk.canonical(&src).unwrap();
    let b = tk.canonical(&back).unwrap();
    let round_trip = a.iter().zip(&b).filter(|(x, y)| x.is_some() && x == y).count();

    let mut rng = substream(1, "acceptance-random-tokens");
    let chem: Vec<usize> = (0..vocab.len()).filter(|&i| i != PAD_ID && i != EOS_ID).collect();
    let random: Vec<String> = (0..1000)
        .map(|_| {
            let len = rng.random_range(1..=55);
            let s: String = (0..len)
                .map(|_| vocab.token(chem[rng.random_range(0..chem.len())]))
                .collect();
            selfies_to_smiles(&s).unwrap()
        })
        .collect();
    let valid = tk.validate(&random).unwrap().into_iter().filter(|&v| v).count();
    verdict(
        1,
        round_trip == 5000 && valid == 1000,
        format!("round trip {round_trip}/5000 canonical matches, random sequences {valid}/1000 valid"),
    );
}

#[test]
fn criterion_2_loss_gradients() {
    let outer = (0..10).map(common::outer_point).fold(0.0, f64::max);
    let corr = (0..10).map(common::corr_point).fold(0.0, f64::max);
    let total = (0..10).map(common::inner_total_point).fold(0.0, f64::max);
    let mut mu = ndarray::Array2::<f64>::zeros((1, 4));
    mu[[0, 0]] = 1.0;
    let kl = LatentGaussian::new(mu, ndarray::Array2::zeros((1, 4))).unwrap().kl();
    let worst = outer.max(corr).max(total);
    verdict(
        2,
        worst < 1e-4 && kl == 0.5,
        format!("max relative error vae {outer:.2e}, corr {corr:.2e}, total {total:.2e}; KL(mu=e1, logvar=0) = {kl}"),
    );
}

#[test]
fn criterion_3_overfit() {
    let lines = corpus_lines();
    let selfies: Vec<String> = lines.iter().take(32).map(|s| smiles_to_selfies(s).unwrap()).collect();
    let vocab = TokenVocab::build(selfies.iter().map(String::as_str)).unwrap();
    let mols: Vec<_> = selfies.iter().map(|s| vocab.encode(s).unwrap()).collect();
    let cfg = OuterModelConfig {
        max_len: 56,
        gru_layers: 1,
        gru_hidden: 256,
        epochs: 500,
        batch_size: 32,
        kl_warmup_epochs: 10,
        kl_max_weight: 0.1,
        learning_rate: 3e-3,
        ..OuterModelConfig::default()
    };
    let (model, _) = train_outer(&mols, &[], &vocab, &cfg, 0, "overfit", None).unwrap();
    let ce = token_cross_entropy(&model, &mols).unwrap();
    verdict(
        3,
        ce < 0.05,
        format!("per-token cross-entropy {ce:.4} after 500 epochs on 32 molecules (limit 0.05)"),
    );
}

// ---------------------------------------------------------------------------

struct Pipeline {
    cfg: RunConfig,
    outer: OuterModel<f32>,
    outer_hash: String,
    vocab: TokenVocab,
    labeled: LabeledDataset,
    oracle: SaOracle,
}

fn stage_done(work: &Path, command: &str) -> bool {
    Manifest::load(work, command).is_ok_and(|m| m.verify_outputs(work).is_ok())
}

fn pipeline() -> &'static Pipeline {
    static P: OnceLock<Pipeline> = OnceLock::new();
    P.get_or_init(|| {
        let mut cfg = RunConfig::load(&manifest_dir().join("tests/fixtures/acceptance.toml")).unwrap();
        let key = cfg.outer_stage_hash().unwrap()[..16].to_string();
        cfg.paths.work_dir = std::path::absolute(cfg.work_dir().join(key)).unwrap();
        let work = cfg.work_dir();
        if !stage_done(&work, "prepare") {
            cmd_prepare(&cfg).unwrap();
        }
        if !stage_done(&work, "train-outer") {
            cmd_train_outer(&cfg).unwrap();
        }
        let (outer, _, outer_hash) = load_outer(&work.join(OUTER_CKPT)).unwrap();
        let tk: Arc<dyn ChemToolkit> = toolkit();
        Pipeline {
            outer,
            outer_hash,
            vocab: TokenVocab::load(&work.join("data").join(VOCAB_FILE)).unwrap(),
            labeled: LabeledDataset::read_csv(&work.join("data").join(LABELED_FILE)).unwrap(),
            oracle: SaOracle::new(tk, ScoreCache::open(&cfg.score_cache()).unwrap()),
            cfg,
        }
    })
}

fn correlation() -> &'static CorrelationOutput {
    static C: OnceLock<CorrelationOutput> = OnceLock::new();
    C.get_or_init(|| {
        let p = pipeline();
        run_correlation_study(
            &p.outer,
            &p.outer_hash,
            &p.vocab,
            &p.labeled,
            &p.cfg.inner,
            &p.cfg.correlation,
            None,
        )
        .unwrap()
    })
}

#[test]
fn criterion_4_correlation_loss() {
    let p = pipeline();
    let out = correlation();
    let k = p.cfg.inner.bindings[0].component;
    let at = |a: f64| out.report.summary_for(a).expect("alpha in sweep").mean_abs_val_corr;
    let base = at(0.0);
    let (c5, c10) = (at(5.0), at(10.0));
    let largest = p
        .cfg
        .correlation
        .alphas
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let argmax = out.report.summary_for(largest).unwrap().argmax_component;
    let pass = out.report.failures.is_empty() && c5 - base >= 0.2 && c10 - base >= 0.2 && argmax == k;
    verdict(
        4,
        pass,
        format!(
            "mean validation |corr(z[{k}], S)| over {} seeds: alpha 0 {base:.3}, alpha 5 {c5:.3}, alpha 10 {c10:.3} (need +0.2); argmax at alpha {largest} is {argmax}",
            p.cfg.correlation.seeds.len()
        ),
    );
}

#[test]
fn criterion_5_bias_steering() {
    let p = pipeline();
    let out = correlation();
    let largest = p
        .cfg
        .correlation
        .alphas
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let max_bias = p.cfg.bias.max_bias();
    let tk = toolkit();
    let (mut gain, mut extra, mut n) = (0.0, 0.0, 0.0);
    let mut per_seed = Vec::new();
    for m in out.models.iter().filter(|m| m.alpha == largest) {
        let models = ModelPair {
            outer: &p.outer,
            inner: &m.model,
            vocab: &p.vocab,
        };
        let (report, _) = run_bias_study(models, tk.as_ref(), &p.oracle, &p.labeled, &p.cfg.bias, m.seed).unwrap();
        let s0 = report.level(0.0).expect("bias 0 in sweep").success_rate;
        let top = report.level(max_bias).unwrap();
        per_seed.push(format!(
            "seed {}: {:.3} -> {:.3}, extrapolation {:.3}",
            m.seed, s0, top.success_rate, top.extrapolation_rate
        ));
        gain += top.success_rate - s0;
        extra += top.extrapolation_rate;
        n += 1.0;
    }
    let (gain, extra) = (gain / n, extra / n);
    verdict(
        5,
        n == 3.0 && gain >= 0.15 && extra > 0.0,
        format!(
            "success rate gain at bias {max_bias} vs 0: {:+.1} points (need +15), extrapolation rate {extra:.3} [{}]",
            gain * 100.0,
            per_seed.join("; ")
        ),
    );
}

#[test]
fn criterion_6_sublist_protocol() {
    let p = pipeline();
    let tk = toolkit();
    let spec = &p.cfg.sublist;
    let report = run_sublist_experiment(
        spec,
        &p.labeled,
        p.cfg.inner.bindings[0].property,
        &p.outer,
        &p.outer_hash,
        &p.vocab,
        &p.cfg.inner,
        Some(tk.as_ref() as &dyn ChemToolkit),
        &p.cfg.baseline,
        p.cfg.seed,
    )
    .unwrap();
    let expect = random_expectation(spec.total_records, spec.sublist_size, spec.holdout_count);
    let baseline = report.mean_baseline.expect("baseline ranked");
    let cheating_all_one = report.trials.iter().all(|t| t.cheating_cycle == 1);
    let pass = report.trials.len() >= 20
        && report.mean_proposed < expect
        && report.mean_proposed <= baseline
        && cheating_all_one;
    verdict(
        6,
        pass,
        format!(
            "mean first-discovery cycle over {} trials: proposed {:.2}, baseline {baseline:.2}, random expectation {expect:.4}, cheating ranker at cycle 1 in {}/{} trials",
            report.trials.len(),
            report.mean_proposed,
            report.trials.iter().filter(|t| t.cheating_cycle == 1).count(),
            report.trials.len()
        ),
    );
}

// ---------------------------------------------------------------------------

const TINY: &str = r#"
seed = 11
[paths]
corpus = "CORPUS"
[dataset]
open_count = 300
labeled_count = 40
[outer]
latent_dim = 8
max_len = 56
gru_hidden = 32
gru_layers = 1
epochs = 2
kl_warmup_epochs = 1
[inner]
latent_dim = 4
enc_widths = [16]
dec_widths = [16]
epochs = 15
[generate]
n_candidates = 20
[correlation]
alphas = [0.0, 5.0]
seeds = [0]
[bias]
biases = [0.0, 1.0]
trials = 20
[sublist]
total_records = 20
sublist_size = 5
holdout_count = 2
trials = 2
[baseline]
rounds = 10
"#;

const VERBS: [&str; 7] = [
    "prepare",
    "train-outer",
    "train-inner",
    "generate",
    "study-correlation",
    "study-bias",
    "study-sublist",
];

fn run_pipeline(config: &Path, out: &Path) {
    for verb in VERBS {
        let st = Command::new(env!("CARGO_BIN_EXE_matvae"))
            .args([verb, "--config"])
            .arg(config)
            .arg("--out")
            .arg(out)
            .env("RUST_LOG", "warn")
            .stdout(std::process::Stdio::null())
            .status()
            .unwrap();
        assert!(st.success(), "{verb} exited with {st}");
    }
}

fn files_with_ext(dir: &Path, ext: &str, acc: &mut Vec<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            files_with_ext(&p, ext, acc);
        } else if p.extension().is_some_and(|x| x == ext) && !p.to_string_lossy().ends_with(".timing.json") {
            acc.push(p);
        }
    }
}

#[test]
fn criterion_7_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = manifest_dir().join("../../data/moses_60k.smi.gz");
    let config = dir.path().join("tiny.toml");
    std::fs::write(&config, TINY.replace("CORPUS", &corpus.to_string_lossy())).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&config, &a);
    run_pipeline(&config, &b);
    let mut checked = 0;
    let mut differing = Vec::new();
    for ext in ["json", "ckpt"] {
        let mut files = Vec::new();
        files_with_ext(&a, ext, &mut files);
        for f in files {
            let rel = f.strip_prefix(&a).unwrap();
            if std::fs::read(&f).ok() != std::fs::read(b.join(rel)).ok() {
                differing.push(rel.display().to_string());
            }
            checked += 1;
        }
    }
    let manifests = std::fs::read_dir(a.join("manifests")).unwrap().count() / 2;
    verdict(
        7,
        differing.is_empty() && manifests == VERBS.len(),
        format!("{checked} manifests, reports and checkpoints compared across two runs of {manifests} commands; differing: {differing:?}"),
    );
}

//! The pipeline commands behind the CLI verbs. Each reads its upstream
//! artifacts from the work dir, checks their recorded hashes, and writes its
//! outputs plus a manifest.
//!
//! Work dir layout: `data/`, `outer/`, `inner/`, `generate/`, `reports/`,
//! `manifests/`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::chem::{ChemToolkit, EncodedMolecule, RdkitToolkit, TokenVocab};
use crate::config::{OracleKind, RunConfig};
use crate::corpus::read_lines;
use crate::error::{Error, Result};
use crate::experiments::correlation::{split_indices, write_scatter};
use crate::experiments::prepare::{LABELED_FILE, OPEN_FILE, VOCAB_FILE};
use crate::experiments::{
    bias, plot, prepare_datasets, run_bias_study, run_correlation_study, run_sublist_experiment, sublist,
};
use crate::generation::{
    best_record, component_std, generate_biased, generate_neighborhood, score_candidates, write_candidates,
    GenerationRequest, ModelPair,
};
use crate::inner::{embed_records, load_inner, save_inner, train_inner, InnerModel, LabeledDataset};
use crate::manifest::Manifest;
use crate::oracle::{PropertyOracle, SaOracle, ScoreCache};
use crate::outer::{load_outer, save_outer, train_outer, OuterMeta, OuterModel};
use crate::rng::substream;

pub const OUTER_CKPT: &str = "outer/outer.ckpt";
pub const INNER_CKPT: &str = "inner/inner.ckpt";

fn toolkit() -> Result<Arc<dyn ChemToolkit>> {
    Ok(RdkitToolkit::shared()?)
}

fn oracle(cfg: &RunConfig, tk: Arc<dyn ChemToolkit>) -> Result<Box<dyn PropertyOracle>> {
    match cfg.oracle {
        OracleKind::SaScore => Ok(Box::new(SaOracle::new(tk, ScoreCache::open(&cfg.score_cache())?))),
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads an upstream manifest and checks its outputs are unchanged.
fn upstream(work: &Path, command: &str) -> Result<Manifest> {
    let m = Manifest::load(work, command).map_err(|e| {
        Error::Config(format!(
            "missing `{command}` artifacts in {} (run `{command}` first): {e}",
            work.display()
        ))
    })?;
    m.verify_outputs(work)?;
    Ok(m)
}

struct Run {
    work: PathBuf,
    manifest: Manifest,
    start: Instant,
}

impl Run {
    fn new(cfg: &RunConfig, command: &str) -> Result<Self> {
        let work = cfg.work_dir();
        mkdir(&work)?;
        Ok(Self {
            manifest: Manifest::new(command, cfg.seed, &cfg.hash()?),
            work,
            start: Instant::now(),
        })
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.work.join(rel)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.input(&self.work, path)
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.manifest.output(&self.work, path)
    }

    fn finish(mut self, summary: serde_json::Value) -> Result<Manifest> {
        self.manifest.summary = summary;
        self.manifest.write(&self.work, self.start.elapsed().as_secs_f64())?;
        Ok(self.manifest)
    }
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "prepare")?;
    let corpus = cfg.corpus();
    let lines = read_lines(&corpus)?;
    run.input(&corpus)?;
    let oracle = oracle(cfg, toolkit()?)?;
    let data = prepare_datasets(&lines, &cfg.dataset, cfg.outer.max_len, oracle.as_ref(), cfg.seed)?;
    let dir = run.p("data");
    data.write(&dir)?;
    for f in [OPEN_FILE, LABELED_FILE, VOCAB_FILE] {
        run.output(&dir.join(f))?;
    }
    log::info!(
        "prepared {} open and {} labeled records, vocabulary {}",
        data.open.len(),
        data.labeled.len(),
        data.vocab.len()
    );
    run.finish(serde_json::json!({
        "open": data.open.len(),
        "labeled": data.labeled.len(),
        "vocab_size": data.vocab.len(),
        "filter": [cfg.dataset.filter_low, cfg.dataset.filter_high],
        "stats": data.stats,
    }))
}

struct Prepared {
    vocab: TokenVocab,
    labeled: LabeledDataset,
}

fn load_prepared(run: &mut Run, with_open: bool) -> Result<(Prepared, Option<Vec<String>>)> {
    upstream(&run.work, "prepare")?;
    let vocab_p = run.p("data").join(VOCAB_FILE);
    let lab_p = run.p("data").join(LABELED_FILE);
    run.input(&vocab_p)?;
    run.input(&lab_p)?;
    let open = if with_open {
        let p = run.p("data").join(OPEN_FILE);
        run.input(&p)?;
        Some(read_lines(&p)?)
    } else {
        None
    };
    Ok((
        Prepared {
            vocab: TokenVocab::load(&vocab_p)?,
            labeled: LabeledDataset::read_csv(&lab_p)?,
        },
        open,
    ))
}

/// Outer model whose vocabulary matches the prepared one.
fn load_outer_checked(run: &mut Run, vocab: &TokenVocab) -> Result<(OuterModel<f32>, OuterMeta, String)> {
    upstream(&run.work, "train-outer")?;
    let p = run.p(OUTER_CKPT);
    run.input(&p)?;
    let (model, meta, hash) = load_outer(&p)?;
    if meta.vocab_hash != vocab.hash() {
        return Err(Error::Lineage {
            what: "vocabulary of the outer checkpoint".into(),
            expected: meta.vocab_hash,
            found: vocab.hash(),
        });
    }
    Ok((model, meta, hash))
}

fn load_inner_checked(run: &mut Run, outer_hash: &str) -> Result<InnerModel<f32>> {
    upstream(&run.work, "train-inner")?;
    let p = run.p(INNER_CKPT);
    run.input(&p)?;
    let (model, meta, _) = load_inner(&p)?;
    meta.verify_outer(outer_hash)?;
    Ok(model)
}

pub fn cmd_train_outer(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "train-outer")?;
    let (prep, open) = load_prepared(&mut run, true)?;
    let open = open.expect("open set requested");
    let corpus_hash = crate::checkpoint::file_hash(&run.p("data").join(OPEN_FILE))?;
    let mut mols: Vec<EncodedMolecule> = open.iter().map(|s| prep.vocab.encode(s)).collect::<Result<_>>()?;
    mols.shuffle(&mut substream(cfg.seed, "outer-val-split"));
    let n_val = (mols.len() as f64 * cfg.outer_val_fraction).round() as usize;
    let train = mols.split_off(n_val);
    let dir = run.p("outer");
    mkdir(&dir)?;
    let (model, log) = train_outer(
        &train,
        &mols,
        &prep.vocab,
        &cfg.outer,
        cfg.seed,
        &corpus_hash,
        Some(&dir),
    )?;
    let meta = OuterMeta {
        epoch: cfg.outer.epochs,
        seed: cfg.seed,
        vocab_hash: prep.vocab.hash(),
        vocab_size: prep.vocab.len(),
        corpus_hash,
        selfies_dialect: crate::chem::SELFIES_DIALECT.to_string(),
    };
    let ckpt = run.p(OUTER_CKPT);
    save_outer(&model, &meta, &ckpt)?;
    for scratch in ["outer-latest.ckpt", "outer-train.jsonl"] {
        let _ = std::fs::remove_file(dir.join(scratch));
    }
    let curve: Vec<_> = log
        .iter()
        .map(|l| serde_json::json!({"epoch": l.epoch, "kl_weight": l.kl_weight, "recon": l.recon, "kl": l.kl, "val_recon": l.val_recon, "val_kl": l.val_kl}))
        .collect();
    let log_p = dir.join("train-log.json");
    write_json(&log_p, &curve)?;
    run.output(&ckpt)?;
    run.output(&log_p)?;
    run.finish(serde_json::json!({
        "train": train.len(),
        "val": mols.len(),
        "final": curve.last(),
    }))
}

pub fn cmd_train_inner(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "train-inner")?;
    let (prep, _) = load_prepared(&mut run, false)?;
    let (outer, _, outer_hash) = load_outer_checked(&mut run, &prep.vocab)?;
    let (tr, va) = split_indices(prep.labeled.len(), cfg.inner_val_fraction, cfg.seed);
    let train = prep.labeled.subset(&tr);
    let val = prep.labeled.subset(&va);
    let res = train_inner(
        &outer,
        &outer_hash,
        &prep.vocab,
        &train,
        Some(&val),
        &cfg.inner,
        cfg.seed,
    )?;
    let ckpt = run.p(INNER_CKPT);
    mkdir(ckpt.parent().expect("inner dir"))?;
    save_inner(&res.model, &res.meta, &ckpt)?;
    let curve: Vec<_> = res
        .log
        .iter()
        .map(|l| serde_json::json!({"epoch": l.epoch, "recon": l.recon, "kl": l.kl, "corr": l.corr, "total": l.total, "val_corr": l.val_corr}))
        .collect();
    let log_p = run.p("inner/train-log.json");
    write_json(&log_p, &curve)?;
    run.output(&ckpt)?;
    run.output(&log_p)?;
    let b = cfg.inner.bindings[0];
    let last_val = res
        .log
        .last()
        .and_then(|l| l.val_corr.as_ref())
        .map(|c| c[b.property][b.component]);
    run.finish(serde_json::json!({
        "train_records": train.len(),
        "val_records": val.len(),
        "bound_val_corr": last_val,
    }))
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "generate")?;
    let (prep, _) = load_prepared(&mut run, false)?;
    let (outer, _, outer_hash) = load_outer_checked(&mut run, &prep.vocab)?;
    let inner = load_inner_checked(&mut run, &outer_hash)?;
    let models = ModelPair {
        outer: &outer,
        inner: &inner,
        vocab: &prep.vocab,
    };
    let tk = toolkit()?;
    let oracle = oracle(cfg, tk.clone())?;
    let g = &cfg.generate;
    let b = inner.config.bindings[0];
    let (seed_selfies, conditions) = match &g.seed_selfies {
        Some(s) => (s.clone(), vec![0.0; prep.labeled.condition_names.len()]),
        None => {
            let i = best_record(&prep.labeled, b.property, b.direction)
                .ok_or_else(|| Error::Empty("labeled dataset".into()))?;
            (
                prep.labeled.records[i].selfies.clone(),
                prep.labeled.records[i].conditions.clone(),
            )
        }
    };
    let mut cands = match g.neighborhood_radius {
        Some(r) => generate_neighborhood(
            models,
            tk.as_ref(),
            &seed_selfies,
            &conditions,
            r,
            g.n_candidates,
            g.decode,
            cfg.seed,
        )?,
        None => generate_biased(
            models,
            tk.as_ref(),
            &GenerationRequest {
                seed_selfies: seed_selfies.clone(),
                conditions,
                component: b.component,
                bias: g.bias,
                n_candidates: g.n_candidates,
                decode: g.decode,
            },
            cfg.seed,
        )?,
    };
    score_candidates(oracle.as_ref(), &mut cands)?;
    let x = embed_records(&outer, &prep.vocab, &prep.labeled.records)?;
    let sigma = component_std(&inner, x.view(), b.component)?;
    let out = run.p("generate/candidates.csv");
    mkdir(out.parent().expect("generate dir"))?;
    write_candidates(&out, &cands)?;
    run.output(&out)?;
    let unique = crate::generation::dedup_canonical(tk.as_ref(), &cands)?.len();
    run.finish(serde_json::json!({
        "seed_selfies": seed_selfies,
        "candidates": cands.len(),
        "valid": cands.iter().filter(|c| c.valid).count(),
        "unique_valid": unique,
        "component": b.component,
        "component_std": sigma,
    }))
}

pub fn cmd_study_correlation(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "study-correlation")?;
    let (prep, _) = load_prepared(&mut run, false)?;
    let (outer, _, outer_hash) = load_outer_checked(&mut run, &prep.vocab)?;
    let dir = run.p("reports/correlation");
    let ckpt_dir = dir.join("inner");
    mkdir(&ckpt_dir)?;
    let out = run_correlation_study(
        &outer,
        &outer_hash,
        &prep.vocab,
        &prep.labeled,
        &cfg.inner,
        &cfg.correlation,
        Some(&ckpt_dir),
    )?;
    let report_p = dir.join("report.json");
    write_json(&report_p, &out.report)?;
    let scatter_p = dir.join("scatter.csv");
    write_scatter(&scatter_p, &out.scatter)?;
    let bars_p = dir.join("correlation.svg");
    plot::correlation_bars(&bars_p, &out.report)?;
    let mut files = vec![report_p, scatter_p, bars_p];
    for &alpha in &cfg.correlation.alphas {
        let seed = cfg.correlation.seeds[0];
        let p = dir.join(format!("scatter-a{alpha}-s{seed}.svg"));
        plot::correlation_scatter(&p, &out.scatter, alpha, seed)?;
        files.push(p);
    }
    for r in &out.report.runs {
        files.push(ckpt_dir.join(format!("inner-a{}-s{}.ckpt", r.alpha, r.seed)));
    }
    for f in &files {
        run.output(f)?;
    }
    let summary = serde_json::to_value(&out.report.summary)?;
    if !out.report.failures.is_empty() {
        log::warn!("{} correlation runs failed", out.report.failures.len());
    }
    run.finish(summary)
}

pub fn cmd_study_bias(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "study-bias")?;
    let (prep, _) = load_prepared(&mut run, false)?;
    let (outer, _, outer_hash) = load_outer_checked(&mut run, &prep.vocab)?;
    let inner = load_inner_checked(&mut run, &outer_hash)?;
    let tk = toolkit()?;
    let oracle = oracle(cfg, tk.clone())?;
    let models = ModelPair {
        outer: &outer,
        inner: &inner,
        vocab: &prep.vocab,
    };
    let (report, cands) = run_bias_study(models, tk.as_ref(), oracle.as_ref(), &prep.labeled, &cfg.bias, cfg.seed)?;
    let dir = run.p("reports/bias");
    mkdir(&dir)?;
    let named = vec![("inner".to_string(), report)];
    let files = [
        dir.join("report.json"),
        dir.join("levels.csv"),
        dir.join("candidates.csv"),
        dir.join("success.svg"),
    ];
    write_json(&files[0], &named[0].1)?;
    bias::write_levels(&files[1], &named)?;
    write_candidates(&files[2], &cands)?;
    plot::bias_curves(&files[3], &named)?;
    for f in &files {
        run.output(f)?;
    }
    run.finish(serde_json::to_value(&named[0].1.levels)?)
}

pub fn cmd_study_sublist(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = Run::new(cfg, "study-sublist")?;
    let (prep, _) = load_prepared(&mut run, false)?;
    let (outer, _, outer_hash) = load_outer_checked(&mut run, &prep.vocab)?;
    let tk = toolkit()?;
    let b = cfg.inner.bindings[0];
    let mut spec = cfg.sublist.clone();
    if spec.component != b.component {
        log::warn!(
            "ranking on component {} while property is bound to {}",
            spec.component,
            b.component
        );
    }
    spec.direction = b.direction;
    let report = run_sublist_experiment(
        &spec,
        &prep.labeled,
        b.property,
        &outer,
        &outer_hash,
        &prep.vocab,
        &cfg.inner,
        Some(tk.as_ref()),
        &cfg.baseline,
        cfg.seed,
    )?;
    let dir = run.p("reports/sublist");
    mkdir(&dir)?;
    let files = [dir.join("report.json"), dir.join("trials.csv"), dir.join("cycles.svg")];
    write_json(&files[0], &report)?;
    sublist::write_trials(&files[1], &report)?;
    plot::cycle_histogram(&files[2], &report)?;
    for f in &files {
        run.output(f)?;
    }
    run.finish(serde_json::json!({
        "mean_proposed": report.mean_proposed,
        "mean_baseline": report.mean_baseline,
        "mean_cheating": report.mean_cheating,
        "random_expectation": report.random_expectation,
        "discarded_trials": report.discarded_trials,
    }))
}

//! Ranked-sublist protocol: hold out the best records, train on the rest,
//! rank everything and see in which candidate batch a held-out record first
//! shows up.

use gbdt::config::Config as GbdtConfig;
use gbdt::decision_tree::{Data, DataVec};
use gbdt::gradient_boost::GBDT;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::chem::{selfies_to_smiles, ChemToolkit, TokenVocab};
use crate::error::{Error, Result};
use crate::inner::{embed_records, train_inner, InnerModelConfig, LabeledDataset};
use crate::outer::OuterModel;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SublistExperimentSpec {
    pub total_records: usize,
    pub sublist_size: usize,
    pub holdout_count: usize,
    pub trials: usize,
    /// Inner component used for ranking.
    pub component: usize,
    /// +1 when larger property values are better.
    pub direction: i8,
}

impl Default for SublistExperimentSpec {
    fn default() -> Self {
        Self {
            total_records: 100,
            sublist_size: 10,
            holdout_count: 3,
            trials: 20,
            component: 0,
            direction: 1,
        }
    }
}

impl SublistExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sublist_size == 0 || self.total_records == 0 || !self.total_records.is_multiple_of(self.sublist_size) {
            return Err(Error::Config(format!(
                "total_records {} must be a positive multiple of sublist_size {}",
                self.total_records, self.sublist_size
            )));
        }
        if self.holdout_count == 0 || self.holdout_count >= self.total_records {
            return Err(Error::Config("holdout_count must be in 1..total_records".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.direction != 1 && self.direction != -1 {
            return Err(Error::Config("direction must be +1 or -1".into()));
        }
        Ok(())
    }

    pub fn sublists(&self) -> usize {
        self.total_records / self.sublist_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub radius: u32,
    pub nbits: u32,
    pub max_depth: u32,
    pub rounds: usize,
    pub shrinkage: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            radius: 2,
            nbits: 2048,
            max_depth: 6,
            rounds: 200,
            shrinkage: 0.1,
        }
    }
}

/// Indices ordered by score, highest first; equal scores keep index order.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Consecutive chunks of `size`.
pub fn partition(ranked: &[usize], size: usize) -> Vec<Vec<usize>> {
    ranked.chunks(size.max(1)).map(<[usize]>::to_vec).collect()
}

/// 1-based index of the first sublist containing any of `targets`.
pub fn first_discovery_cycle(ranked: &[usize], size: usize, targets: &[usize]) -> Option<usize> {
    let pos = ranked.iter().position(|i| targets.contains(i))?;
    Some(pos / size + 1)
}

/// Exact expected first-discovery cycle under a uniformly random ranking,
/// enumerating every placement of the held-out records.
pub fn random_expectation(total: usize, size: usize, holdout: usize) -> f64 {
    fn visit(start: usize, left: usize, first: Option<usize>, total: usize, size: usize, acc: &mut (f64, f64)) {
        if left == 0 {
            acc.0 += (first.expect("at least one held-out record") / size + 1) as f64;
            acc.1 += 1.0;
            return;
        }
        for p in start..=total - left {
            visit(p + 1, left - 1, first.or(Some(p)), total, size, acc);
        }
    }
    let mut acc = (0.0, 0.0);
    visit(0, holdout, None, total, size, &mut acc);
    acc.0 / acc.1
}

/// Indices of the `count` best records by property (ties to the lower index).
pub fn top_records(data: &LabeledDataset, property: usize, direction: i8, count: usize) -> Vec<usize> {
    let sign = f64::from(direction.signum());
    let scores: Vec<f64> = data.records.iter().map(|r| sign * r.properties[property]).collect();
    let mut top = rank_by_scores(&scores);
    top.truncate(count);
    top
}

fn fingerprints(
    toolkit: &dyn ChemToolkit,
    data: &LabeledDataset,
    cfg: &BaselineConfig,
) -> Result<Vec<Option<Vec<f32>>>> {
    let smiles: Vec<String> = data
        .records
        .iter()
        .map(|r| selfies_to_smiles(&r.selfies))
        .collect::<Result<_>>()?;
    let bits = toolkit.morgan(&smiles, cfg.radius, cfg.nbits)?;
    Ok(bits
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let b = b.filter(|_| !smiles[i].is_empty());
            if b.is_none() {
                log::warn!("record {i}: no fingerprint for {:?}, ranked last", smiles[i]);
            }
            b.map(|on| {
                let mut v = vec![0.0f32; cfg.nbits as usize];
                for j in on {
                    v[j as usize] = 1.0;
                }
                v
            })
        })
        .collect())
}

/// Fingerprint regressor ranking: gradient-boosted trees fit on the records
/// in `train_idx`, then every record ranked by predicted property
/// (direction-adjusted). Records without a fingerprint go last.
pub fn baseline_rank(
    toolkit: &dyn ChemToolkit,
    data: &LabeledDataset,
    train_idx: &[usize],
    property: usize,
    direction: i8,
    cfg: &BaselineConfig,
) -> Result<Vec<usize>> {
    let fps = fingerprints(toolkit, data, cfg)?;
    let mut train: DataVec = train_idx
        .iter()
        .filter_map(|&i| {
            fps[i]
                .clone()
                .map(|f| Data::new_training_data(f, 1.0, data.records[i].properties[property] as f32, None))
        })
        .collect();
    if train.is_empty() {
        return Err(Error::Empty("baseline training set has no fingerprints".into()));
    }
    let mut gc = GbdtConfig::new();
    gc.set_feature_size(cfg.nbits as usize);
    gc.set_max_depth(cfg.max_depth);
    gc.set_iterations(cfg.rounds);
    gc.set_shrinkage(cfg.shrinkage as f32);
    gc.set_loss("SquaredError");
    let mut model = GBDT::new(&gc);
    model.fit(&mut train);
    let have: Vec<usize> = (0..fps.len()).filter(|&i| fps[i].is_some()).collect();
    let test: DataVec = have
        .iter()
        .map(|&i| Data::new_test_data(fps[i].clone().expect("filtered"), None))
        .collect();
    let pred = model.predict(&test);
    let sign = f64::from(direction.signum());
    let mut scores = vec![f64::NEG_INFINITY; fps.len()];
    for (&i, p) in have.iter().zip(pred) {
        scores[i] = sign * f64::from(p);
    }
    Ok(rank_by_scores(&scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublistTrial {
    pub trial: usize,
    /// Indices into the labeled dataset.
    pub records: Vec<usize>,
    /// Positions within `records`.
    pub held_out: Vec<usize>,
    pub proposed_cycle: usize,
    pub baseline_cycle: Option<usize>,
    pub cheating_cycle: usize,
    pub random_cycle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SublistReport {
    pub spec: SublistExperimentSpec,
    pub seed: u64,
    pub property: String,
    pub trials: Vec<SublistTrial>,
    pub discarded_trials: usize,
    pub random_expectation: f64,
    pub mean_proposed: f64,
    pub mean_baseline: Option<f64>,
    pub mean_cheating: f64,
    pub mean_random: f64,
    pub tie_break: String,
}

fn mean_of(v: impl Iterator<Item = usize>) -> Option<f64> {
    let (s, n) = v.fold((0usize, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s as f64 / n as f64)
}

/// One trial: subsample, hold out the top records, train the inner model on
/// the rest, and compare the first-discovery cycle of each ranker.
#[allow(clippy::too_many_arguments)]
fn run_trial(
    t: usize,
    spec: &SublistExperimentSpec,
    data: &LabeledDataset,
    property: usize,
    outer: &OuterModel<f32>,
    outer_hash: &str,
    vocab: &TokenVocab,
    inner_cfg: &InnerModelConfig,
    toolkit: Option<&dyn ChemToolkit>,
    baseline: &BaselineConfig,
    seed: u64,
) -> Result<SublistTrial> {
    let mut rng = substream(seed, &format!("sublist-trial-{t}"));
    let mut records = sample(&mut rng, data.len(), spec.total_records).into_vec();
    records.sort_unstable();
    let sub = data.subset(&records);
    let held_out = top_records(&sub, property, spec.direction, spec.holdout_count);
    let keep: Vec<usize> = (0..sub.len()).filter(|i| !held_out.contains(i)).collect();
    let train = sub.subset(&keep);
    let run = train_inner(
        outer,
        outer_hash,
        vocab,
        &train,
        None,
        inner_cfg,
        seed.wrapping_add(t as u64),
    )?;
    let x = embed_records(outer, vocab, &sub.records)?;
    let mu = run.model.encode(x.view())?.mu;
    let sign = f64::from(spec.direction.signum());
    let z: Vec<f64> = mu.column(spec.component).iter().map(|&v| sign * f64::from(v)).collect();
    let cycle = |ranked: &[usize]| {
        first_discovery_cycle(ranked, spec.sublist_size, &held_out).expect("held-out records are ranked")
    };
    let proposed_cycle = cycle(&rank_by_scores(&z));
    let truth: Vec<f64> = sub.records.iter().map(|r| sign * r.properties[property]).collect();
    let cheating_cycle = cycle(&rank_by_scores(&truth));
    let mut perm: Vec<usize> = (0..sub.len()).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
    let random_cycle = cycle(&perm);
    let baseline_cycle = match toolkit {
        Some(tk) => Some(cycle(&baseline_rank(
            tk,
            &sub,
            &keep,
            property,
            spec.direction,
            baseline,
        )?)),
        None => None,
    };
    Ok(SublistTrial {
        trial: t,
        records,
        held_out,
        proposed_cycle,
        baseline_cycle,
        cheating_cycle,
        random_cycle,
    })
}

/// Runs every trial; failed trials are logged and discarded. The inner seed
/// of trial `t` is `seed + t`.
#[allow(clippy::too_many_arguments)]
pub fn run_sublist_experiment(
    spec: &SublistExperimentSpec,
    data: &LabeledDataset,
    property: usize,
    outer: &OuterModel<f32>,
    outer_hash: &str,
    vocab: &TokenVocab,
    inner_cfg: &InnerModelConfig,
    toolkit: Option<&dyn ChemToolkit>,
    baseline: &BaselineConfig,
    seed: u64,
) -> Result<SublistReport> {
    spec.validate()?;
    if data.len() < spec.total_records {
        return Err(Error::Config(format!(
            "sublist experiment needs {} records, dataset has {}",
            spec.total_records,
            data.len()
        )));
    }
    if property >= data.property_names.len() {
        return Err(Error::Config(format!("property index {property} out of range")));
    }
    if spec.component >= inner_cfg.latent_dim {
        return Err(Error::Config(format!(
            "ranking component {} out of range for inner latent dimension {}",
            spec.component, inner_cfg.latent_dim
        )));
    }
    let mut trials = Vec::with_capacity(spec.trials);
    let mut discarded = 0;
    for t in 0..spec.trials {
        match run_trial(
            t, spec, data, property, outer, outer_hash, vocab, inner_cfg, toolkit, baseline, seed,
        ) {
            Ok(tr) => {
                log::info!(
                    "sublist trial {t}: proposed {} baseline {:?} cheating {}",
                    tr.proposed_cycle,
                    tr.baseline_cycle,
                    tr.cheating_cycle
                );
                trials.push(tr);
            }
            Err(e) => {
                log::warn!("sublist trial {t} discarded: {e}");
                discarded += 1;
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::Empty("every sublist trial failed".into()));
    }
    Ok(SublistReport {
        spec: spec.clone(),
        seed,
        property: data.property_names[property].clone(),
        random_expectation: random_expectation(spec.total_records, spec.sublist_size, spec.holdout_count),
        mean_proposed: mean_of(trials.iter().map(|t| t.proposed_cycle)).expect("non-empty"),
        mean_baseline: if toolkit.is_some() {
            mean_of(trials.iter().filter_map(|t| t.baseline_cycle))
        } else {
            None
        },
        mean_cheating: mean_of(trials.iter().map(|t| t.cheating_cycle)).expect("non-empty"),
        mean_random: mean_of(trials.iter().map(|t| t.random_cycle)).expect("non-empty"),
        tie_break: "equal scores keep ascending record index".into(),
        trials,
        discarded_trials: discarded,
    })
}

/// Writes one row per trial.
pub fn write_trials(path: &std::path::Path, report: &SublistReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record([
        "trial",
        "proposed_cycle",
        "baseline_cycle",
        "cheating_cycle",
        "random_cycle",
        "held_out_records",
    ])?;
    for t in &report.trials {
        let held: Vec<String> = t.held_out.iter().map(|&p| t.records[p].to_string()).collect();
        w.write_record([
            t.trial.to_string(),
            t.proposed_cycle.to_string(),
            t.baseline_cycle.map_or(String::new(), |c| c.to_string()),
            t.cheating_cycle.to_string(),
            t.random_cycle.to_string(),
            held.join(" "),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranking_is_stable() {
        assert_eq!(rank_by_scores(&[1.0, 3.0, 1.0, 3.0]), vec![1, 3, 0, 2]);
    }

    #[test]
    fn discovery_cycle() {
        let ranked: Vec<usize> = (0..20).collect();
        assert_eq!(first_discovery_cycle(&ranked, 5, &[12, 7]), Some(2));
        assert_eq!(first_discovery_cycle(&ranked, 5, &[0]), Some(1));
        assert_eq!(first_discovery_cycle(&ranked, 5, &[99]), None);
    }

    #[test]
    fn expectation_small_cases() {
        // One held-out record: uniform over sublists.
        assert!((random_expectation(10, 5, 1) - 1.5).abs() < 1e-12);
        // 4 records, sublists of 2, 2 held out: 6 placements, only {2,3} gives cycle 2.
        assert!((random_expectation(4, 2, 2) - 7.0 / 6.0).abs() < 1e-12);
        // sum_j C(100 - 10j, 3) / C(100, 3) = 485100 / 161700.
        assert!((random_expectation(100, 10, 3) - 3.0).abs() < 1e-12);
    }
}

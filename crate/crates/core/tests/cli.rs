//! End-to-end command-line behavior on a small corpus slice.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use matvae::chem::{selfies_to_smiles, ChemToolkit, RdkitToolkit};
use matvae::inner::LabeledDataset;

const SMALL: &str = r#"
seed = 5
[paths]
corpus = "CORPUS"
[dataset]
open_count = 400
labeled_count = 60
[outer]
latent_dim = 8
max_len = 56
gru_hidden = 32
gru_layers = 1
epochs = 1
kl_warmup_epochs = 1
[inner]
latent_dim = 4
enc_widths = [16]
dec_widths = [16]
epochs = 5
[generate]
n_candidates = 10
"#;

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/moses_60k.smi.gz")
}

fn matvae(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_matvae"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

struct Prepared {
    _dir: tempfile::TempDir,
    config: PathBuf,
    work: PathBuf,
}

/// One prepared and outer-trained work dir shared by the tests below.
fn prepared() -> &'static Prepared {
    static P: OnceLock<Prepared> = OnceLock::new();
    P.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = dir.path().join("small.toml");
        std::fs::write(&config, SMALL.replace("CORPUS", &corpus().to_string_lossy())).unwrap();
        let work = dir.path().join("work");
        for verb in ["prepare", "train-outer"] {
            let o = matvae(&[verb], &config, &work);
            assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        }
        Prepared {
            _dir: dir,
            config,
            work,
        }
    })
}

fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for e in std::fs::read_dir(from).unwrap() {
        let p = e.unwrap().path();
        let dst = to.join(p.file_name().unwrap());
        if p.is_dir() {
            copy_dir(&p, &dst);
        } else {
            std::fs::copy(&p, &dst).unwrap();
        }
    }
}

#[test]
fn prepare_summary_and_layout() {
    let p = prepared();
    for rel in [
        "data/open.txt",
        "data/labeled.csv",
        "data/vocab.json",
        "outer/outer.ckpt",
        "manifests/prepare.json",
    ] {
        assert!(p.work.join(rel).is_file(), "{rel} missing");
    }
    let open = std::fs::read_to_string(p.work.join("data/open.txt")).unwrap();
    assert_eq!(open.lines().count(), 400);
}

#[test]
fn labeled_scores_lie_inside_the_filter_window() {
    let p = prepared();
    let data = LabeledDataset::read_csv(&p.work.join("data/labeled.csv")).unwrap();
    assert_eq!(data.len(), 60);
    let smiles: Vec<String> = data
        .records
        .iter()
        .map(|r| selfies_to_smiles(&r.selfies).unwrap())
        .collect();
    let tk = RdkitToolkit::shared().unwrap();
    let fresh = tk.sa_score(&smiles).unwrap();
    for (r, s) in data.records.iter().zip(fresh) {
        let s = s.expect("labeled molecule scores");
        assert!(s > 2.5 && s < 4.5, "{} scored {s}", r.selfies);
        assert!(
            (s - r.properties[0]).abs() < 1e-9,
            "stored {} vs rescored {s}",
            r.properties[0]
        );
    }
}

#[test]
fn downstream_verbs_succeed() {
    let p = prepared();
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    copy_dir(&p.work, &work);
    for verb in ["train-inner", "generate"] {
        let o = matvae(&[verb], &p.config, &work);
        assert!(o.status.success(), "{verb}: {}", String::from_utf8_lossy(&o.stderr));
        let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert!(summary.is_object(), "{verb} printed {summary}");
    }
    let csv = std::fs::read_to_string(work.join("generate/candidates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 11);
}

#[test]
fn train_inner_refuses_a_modified_outer_checkpoint() {
    let p = prepared();
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    copy_dir(&p.work, &work);
    let ckpt = work.join("outer/outer.ckpt");
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    std::fs::write(&ckpt, bytes).unwrap();
    let o = matvae(&["train-inner"], &p.config, &work);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("outer/outer.ckpt"), "{err}");
    assert!(!work.join("inner/inner.ckpt").exists());
}

#[test]
fn missing_upstream_is_a_validation_error() {
    let p = prepared();
    let dir = tempfile::tempdir().unwrap();
    let o = matvae(&["generate"], &p.config, &dir.path().join("empty"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("run `"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "seed = 1\n[outer]\nlatent = 4\n").unwrap();
    let o = matvae(&["show-config"], &config, dir.path());
    assert_eq!(o.status.code(), Some(1));
    std::fs::write(&config, "[dataset]\nfilter_low = 4.0\nfilter_high = 3.0\n").unwrap();
    let o = matvae(&["prepare"], &config, dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("data").exists());
}

#[test]
fn show_config_echoes_hashes() {
    let p = prepared();
    let o = matvae(&["show-config"], &p.config, &p.work);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.starts_with("# config hash "));
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n");
    let back = matvae::config::RunConfig::from_toml(&body).unwrap();
    assert_eq!(back.dataset.open_count, 400);
}

//! Representation checks that need the RDKit-backed toolkit.

use matvae::chem::{selfies_to_smiles, smiles_to_selfies, validate_structure, ChemToolkit, RdkitToolkit};

fn fixture(name: &str) -> Vec<Vec<String>> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn validation_examples() {
    let tk = RdkitToolkit::shared().unwrap();
    assert!(validate_structure(tk.as_ref(), "C1=CNCC1"));
    assert!(!validate_structure(tk.as_ref(), "C1=CN"));
}

#[test]
fn smiles_round_trip_is_canonically_equal() {
    let tk = RdkitToolkit::shared().unwrap();
    let src: Vec<String> = fixture("selfies_parity.tsv")
        .into_iter()
        .skip(21)
        .take(100)
        .map(|r| r[0].clone())
        .collect();
    let back: Vec<String> = src
        .iter()
        .map(|s| selfies_to_smiles(&smiles_to_selfies(s).unwrap()).unwrap())
        .collect();
    let a = tk.canonical(&src).unwrap();
    let b = tk.canonical(&back).unwrap();
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        assert!(x.is_some());
        assert_eq!(x, y, "molecule {}", src[i]);
    }
}

#[test]
fn random_token_sequences_decode_to_valid_structures() {
    let tk = RdkitToolkit::shared().unwrap();
    let smiles: Vec<String> = fixture("random_decode.tsv")
        .iter()
        .map(|r| selfies_to_smiles(&r[0]).unwrap())
        .collect();
    assert_eq!(smiles.len(), 1000);
    assert!(tk.validate(&smiles).unwrap().into_iter().all(|v| v));
}

#[test]
fn sa_scores_match_reference() {
    let tk = RdkitToolkit::shared().unwrap();
    let rows = fixture("sa_scores.tsv");
    let smiles: Vec<String> = rows.iter().map(|r| r[0].clone()).collect();
    let scores = tk.sa_score(&smiles).unwrap();
    for (r, s) in rows.iter().zip(scores) {
        let want: f64 = r[2].parse().unwrap();
        let got = s.unwrap();
        assert!((got - want).abs() < 1e-6, "{}: {got} vs {want}", r[0]);
        assert!((1.0..=10.0).contains(&got));
    }
    assert!(tk
        .sa_score(&["".into(), "C1=CN".into()])
        .unwrap()
        .iter()
        .all(Option::is_none));
}

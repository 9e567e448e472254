//! Encoder/decoder parity with frozen reference outputs.

use matvae::chem::{selfies_to_smiles, smiles_to_selfies};

fn rows(name: &str) -> Vec<Vec<String>> {
    let path = format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

#[test]
fn encoder_matches_reference() {
    let mut mismatches = Vec::new();
    for row in rows("selfies_parity.tsv") {
        let got = smiles_to_selfies(&row[0]).unwrap();
        if got != row[1] {
            mismatches.push((row[0].clone(), got, row[1].clone()));
        }
    }
    assert!(
        mismatches.is_empty(),
        "{} mismatches, first: {:?}",
        mismatches.len(),
        mismatches.first()
    );
}

#[test]
fn decoder_matches_reference() {
    let mut mismatches = Vec::new();
    for row in rows("selfies_parity.tsv") {
        let got = selfies_to_smiles(&row[1]).unwrap();
        if got != row[2] {
            mismatches.push((row[1].clone(), got, row[2].clone()));
        }
    }
    assert!(
        mismatches.is_empty(),
        "{} mismatches, first: {:?}",
        mismatches.len(),
        mismatches.first()
    );
}

#[test]
fn random_token_sequences_match_reference() {
    for row in rows("random_decode.tsv") {
        assert_eq!(selfies_to_smiles(&row[0]).unwrap(), row[1], "decoding {}", row[0]);
    }
}

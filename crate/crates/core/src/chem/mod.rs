//! Molecular string representations: SMILES lexing, SELFIES, token vocabularies
//! and one-hot encodings, plus the bridge to the external toolkit.

mod kekulize;
pub mod onehot;
pub mod selfies;
pub mod smiles;
pub mod toolkit;
pub mod vocab;

pub use onehot::{decode_logits, encode_onehot, DecodeMode, OneHotBatch};
pub use selfies::{selfies_to_smiles, smiles_to_selfies, SELFIES_DIALECT};
pub use toolkit::{validate_structure, ChemToolkit, RdkitToolkit};
pub use vocab::{split_tokens, EncodedMolecule, TokenVocab, EOS, EOS_ID, PAD, PAD_ID};

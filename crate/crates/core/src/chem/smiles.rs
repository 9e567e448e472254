//! Symbol-level SMILES lexing shared by the SELFIES encoder and kekulizer.
//!
//! This is deliberately not a full SMILES parser: it splits a dot-free SMILES
//! into `(bond, symbol, kind)` triples exactly the way the SELFIES 1.0
//! reference encoder does, including its quirk of recording the character
//! after a branch parenthesis as that parenthesis' "bond".

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymbolKind {
    Atom,
    Branch,
    Ring,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmilesSymbol {
    pub bond: String,
    pub symbol: String,
    pub kind: SymbolKind,
}

fn is_bond_char(c: u8) -> bool {
    matches!(c, b'-' | b'/' | b'\\' | b'=' | b'#' | b':')
}

/// Splits a dot-free SMILES string into symbols.
pub fn lex(smiles: &str) -> Result<Vec<SmilesSymbol>> {
    if !smiles.is_ascii() {
        return Err(conv(smiles, "non-ASCII character"));
    }
    let s = smiles.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < s.len() {
        let mut bond = String::new();
        if is_bond_char(s[i]) {
            bond.push(s[i] as char);
            i += 1;
            if i >= s.len() {
                return Err(conv(smiles, "dangling bond symbol"));
            }
        }
        let c = s[i];
        let (symbol, kind) = if c.is_ascii_alphabetic() {
            if smiles[i..].starts_with("Br") || smiles[i..].starts_with("Cl") {
                i += 2;
                (smiles[i - 2..i].to_string(), SymbolKind::Atom)
            } else {
                i += 1;
                (smiles[i - 1..i].to_string(), SymbolKind::Atom)
            }
        } else if c == b'(' || c == b')' {
            bond = smiles.get(i + 1..i + 2).unwrap_or("").to_string();
            i += 1;
            ((c as char).to_string(), SymbolKind::Branch)
        } else if c == b'[' {
            let r = smiles[i + 1..]
                .find(']')
                .map(|p| p + i + 1)
                .ok_or_else(|| conv(smiles, "malformed SMILES, missing ']'"))?;
            let sym = smiles[i..=r].to_string();
            i = r + 1;
            if let Some(ci) = sym.find('@') {
                let next = sym.as_bytes().get(ci + 1).copied().unwrap_or(b']');
                if next.is_ascii_alphabetic() && next != b'H' {
                    return Err(conv(smiles, &format!("chiral specification '{sym}' not supported")));
                }
            }
            (sym, SymbolKind::Atom)
        } else if c.is_ascii_digit() {
            i += 1;
            (smiles[i - 1..i].to_string(), SymbolKind::Ring)
        } else if c == b'%' {
            let digits = smiles
                .get(i + 1..i + 3)
                .filter(|d| d.bytes().all(|b| b.is_ascii_digit()) && d.len() == 2)
                .ok_or_else(|| conv(smiles, "malformed two-digit ring number"))?
                .to_string();
            i += 3;
            (digits, SymbolKind::Ring)
        } else {
            return Err(conv(smiles, &format!("unrecognized symbol '{}'", c as char)));
        };
        out.push(SmilesSymbol { bond, symbol, kind });
    }
    Ok(out)
}

fn conv(input: &str, reason: &str) -> Error {
    Error::Conversion {
        input: input.to_string(),
        reason: reason.to_string(),
    }
}

/// Byte at `i`, or NUL past the end.
fn at(s: &[u8], i: usize) -> u8 {
    s.get(i).copied().unwrap_or(0)
}

/// Byte range of the element inside a SMILES atom symbol.
pub fn find_element(atom: &str) -> (usize, usize) {
    let s = atom.as_bytes();
    if at(s, 0) != b'[' {
        return (0, s.len());
    }
    let mut i = 1;
    while at(s, i).is_ascii_digit() {
        i += 1;
    }
    let next = at(s, i + 1);
    if next.is_ascii_alphabetic() && next != b'H' {
        (i, i + 2)
    } else {
        (i, i + 1)
    }
}

/// Parsed `(element, hydrogen count, charge)` of a SMILES atom symbol.
pub fn parse_atom_symbol(atom: &str) -> (String, u32, i32) {
    let s = atom.as_bytes();
    if at(s, 0) != b'[' {
        return (atom.to_string(), 0, 0);
    }
    let (start, end) = find_element(atom);
    let mut i = end;
    if at(s, i) == b'@' {
        i += 1;
    }
    if at(s, i) == b'@' {
        i += 1;
    }
    let mut h_count = 0;
    if at(s, i) == b'H' {
        h_count = 1;
        i += 1;
        if at(s, i).is_ascii_digit() {
            h_count = u32::from(at(s, i) - b'0');
            i += 1;
        }
    }
    let mut charge = 0i32;
    let c = at(s, i);
    if c == b'+' || c == b'-' {
        charge = if c == b'+' { 1 } else { -1 };
        i += 1;
        let n = at(s, i);
        if n == b'+' || n == b'-' {
            while at(s, i) == b'+' || at(s, i) == b'-' {
                charge += if at(s, i) == b'+' { 1 } else { -1 };
                i += 1;
            }
        } else if n.is_ascii_digit() {
            let st = i;
            while at(s, i).is_ascii_digit() {
                i += 1;
            }
            charge *= atom[st..i].parse::<i32>().unwrap_or(1);
        }
    }
    let element = atom.get(start..end.min(atom.len())).unwrap_or("").to_string();
    (element, h_count, charge)
}

pub fn bond_order(bond: &str) -> u32 {
    match bond {
        "=" => 2,
        "#" => 3,
        _ => 1,
    }
}

pub fn bond_symbol(order: u32) -> &'static str {
    match order {
        2 => "=",
        3 => "#",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexes_branches_rings_and_brackets() {
        let syms = lex("CC(=O)c1cc[nH]c1%10").unwrap();
        let kinds: Vec<_> = syms.iter().map(|s| s.kind).collect();
        assert_eq!(kinds[2], SymbolKind::Branch);
        assert_eq!(syms[2].bond, "=");
        assert_eq!(syms[3].bond, "=");
        assert_eq!(syms[3].symbol, "O");
        assert_eq!(syms[9].symbol, "[nH]");
        assert_eq!(syms.last().unwrap().symbol, "10");
        assert_eq!(syms.last().unwrap().kind, SymbolKind::Ring);
    }

    #[test]
    fn parses_bracket_atoms() {
        assert_eq!(parse_atom_symbol("[nH]"), ("n".into(), 1, 0));
        assert_eq!(parse_atom_symbol("[NH3+]"), ("N".into(), 3, 1));
        assert_eq!(parse_atom_symbol("[O-]"), ("O".into(), 0, -1));
        assert_eq!(parse_atom_symbol("[13C@@H]"), ("C".into(), 1, 0));
        assert_eq!(parse_atom_symbol("[Fe+2]"), ("Fe".into(), 0, 2));
        assert_eq!(parse_atom_symbol("[Cu++]"), ("Cu".into(), 0, 2));
        assert_eq!(parse_atom_symbol("Cl"), ("Cl".into(), 0, 0));
    }

    #[test]
    fn rejects_unsupported_input() {
        assert!(lex("C*C").is_err());
        assert!(lex("C[NH").is_err());
        assert!(lex("[C@TH1]").is_err());
    }
}

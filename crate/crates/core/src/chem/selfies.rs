//! SELFIES 1.0 encoding and decoding.
//!
//! Implements the 1.0 alphabet (`[Branch1_1]`, `[Expl=Ring1]`, `[NHexpl]`, ...)
//! with the default semantic bond constraints. The decoder is a derivation
//! state machine: every token sequence decodes to a SMILES that respects the
//! bond capacities below, which is what makes the representation robust.

use indexmap::IndexMap;

use super::kekulize::kekulize;
use super::smiles::{bond_order, bond_symbol, lex, parse_atom_symbol, SymbolKind};
use crate::error::{Error, Result};

/// Identifier of the grammar implemented here; recorded in checkpoints.
pub const SELFIES_DIALECT: &str = "selfies-1.0/default-constraints";

const INDEX_ALPHABET: [&str; 16] = [
    "[C]",
    "[Ring1]",
    "[Ring2]",
    "[Branch1_1]",
    "[Branch1_2]",
    "[Branch1_3]",
    "[Branch2_1]",
    "[Branch2_2]",
    "[Branch2_3]",
    "[O]",
    "[N]",
    "[=N]",
    "[=C]",
    "[#C]",
    "[S]",
    "[P]",
];

/// Maximum number of bonds an atom or ion may form.
fn bond_capacity(atom_or_ion: &str) -> u32 {
    match atom_or_ion {
        "H" | "F" | "Cl" | "Br" | "I" => 1,
        "O" => 2,
        "O+1" => 3,
        "O-1" => 1,
        "N" => 3,
        "N+1" => 4,
        "N-1" => 2,
        "C" => 4,
        "C+1" => 5,
        "C-1" => 3,
        "P" => 5,
        "P+1" => 6,
        "P-1" => 4,
        "S" => 6,
        "S+1" => 7,
        "S-1" => 5,
        _ => 8,
    }
}

fn index_code(symbol: &str) -> usize {
    INDEX_ALPHABET.iter().position(|s| *s == symbol).unwrap_or(0)
}

/// Interprets symbols as digits of a base-16 number (most significant first).
fn n_from_symbols(symbols: &[String]) -> usize {
    symbols
        .iter()
        .fold(0, |acc, s| acc * INDEX_ALPHABET.len() + index_code(s))
}

fn symbols_from_n(mut n: usize) -> Vec<&'static str> {
    if n == 0 {
        return vec![INDEX_ALPHABET[0]];
    }
    let base = INDEX_ALPHABET.len();
    let mut out = Vec::new();
    while n > 0 {
        out.push(INDEX_ALPHABET[n % base]);
        n /= base;
    }
    out.reverse();
    out
}

fn conversion(input: &str, reason: impl Into<String>) -> Error {
    Error::Conversion {
        input: input.to_string(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// Encoder

/// Converts a SMILES string to its SELFIES 1.0 encoding.
///
/// Aromatic input is kekulized first. Atom and branch order of the input are
/// preserved, so two SMILES of the same molecule may give different SELFIES.
pub fn smiles_to_selfies(smiles: &str) -> Result<String> {
    if smiles.contains('*') {
        return Err(conversion(smiles, "wildcard atom '*' not supported"));
    }
    if smiles.trim().is_empty() {
        return Err(conversion(smiles, "empty SMILES"));
    }
    smiles
        .split('.')
        .map(|frag| translate_smiles(frag).map_err(|e| relabel(e, smiles)))
        .collect::<Result<Vec<_>>>()
        .map(|parts| parts.join("."))
}

fn relabel(err: Error, input: &str) -> Error {
    match err {
        Error::Conversion { reason, .. } => conversion(input, reason),
        other => other,
    }
}

fn translate_smiles(smiles: &str) -> Result<String> {
    let mut symbols = lex(smiles)?;
    if smiles.chars().any(|c| matches!(c, 'c' | 'n' | 'o' | 'p' | 'a' | 's')) {
        kekulize(&mut symbols)?;
    }
    let mut state = EncodeState {
        pos: 0,
        counter: 0,
        rings: std::collections::HashMap::new(),
    };
    let (selfies, _) = state.derive(&symbols)?;
    if !state.rings.is_empty() {
        return Err(conversion(
            smiles,
            "malformed ring numbering or ring numbering across a dot symbol",
        ));
    }
    Ok(selfies)
}

struct EncodeState {
    pos: usize,
    counter: usize,
    rings: std::collections::HashMap<u32, (String, usize)>,
}

impl EncodeState {
    fn derive(&mut self, symbols: &[super::smiles::SmilesSymbol]) -> Result<(String, usize)> {
        let mut selfies = String::new();
        let mut length = 0usize;
        let mut prev_idx: Option<usize> = None;
        while self.pos < symbols.len() {
            let sym = &symbols[self.pos];
            self.pos += 1;
            let bond = if sym.bond == "-" { "" } else { sym.bond.as_str() };
            match sym.kind {
                SymbolKind::Atom => {
                    if let Some(inner) = sym.symbol.strip_prefix('[') {
                        let inner = inner.strip_suffix(']').unwrap_or(inner);
                        selfies.push_str(&format!("[{bond}{inner}expl]"));
                    } else {
                        selfies.push_str(&format!("[{bond}{}]", sym.symbol));
                    }
                    prev_idx = Some(self.counter);
                    self.counter += 1;
                    length += 1;
                }
                SymbolKind::Branch => {
                    if sym.symbol != "(" {
                        break;
                    }
                    let (branch, branch_len) = self.derive(symbols)?;
                    if branch_len == 0 {
                        return Err(conversion("", "empty branch"));
                    }
                    let n_symbols = symbols_from_n(branch_len - 1);
                    selfies.push_str(&format!("[Branch{}_{}]", n_symbols.len(), bond_order(bond)));
                    selfies.push_str(&n_symbols.concat());
                    selfies.push_str(&branch);
                    length += 1 + n_symbols.len() + branch_len;
                }
                SymbolKind::Ring => {
                    let ring_id: u32 = sym.symbol.parse().map_err(|_| conversion("", "bad ring number"))?;
                    let prev = prev_idx.ok_or_else(|| conversion("", "ring bond before any atom"))?;
                    if let Some((left_bond, left_end)) = self.rings.remove(&ring_id) {
                        if prev <= left_end {
                            return Err(conversion("", "ring bond closes on itself"));
                        }
                        let n_symbols = symbols_from_n(prev - left_end - 1);
                        if !left_bond.is_empty() {
                            selfies.push_str(&format!("[Expl{left_bond}Ring{}]", n_symbols.len()));
                        } else if !bond.is_empty() {
                            selfies.push_str(&format!("[Expl{bond}Ring{}]", n_symbols.len()));
                        } else {
                            selfies.push_str(&format!("[Ring{}]", n_symbols.len()));
                        }
                        selfies.push_str(&n_symbols.concat());
                        length += 1 + n_symbols.len();
                    } else {
                        self.rings.insert(ring_id, (bond.to_string(), prev));
                    }
                }
            }
        }
        Ok((selfies, length))
    }
}

// ---------------------------------------------------------------------------
// Decoder

/// Splits a SELFIES fragment into bracketed symbols, dropping `[nop]`.
fn parse_symbols(selfies: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let Some(mut left) = selfies.find('[') else {
        return Ok(out);
    };
    while left < selfies.len() {
        let right = selfies[left + 1..].find(']').map(|r| r + left + 1);
        match right {
            Some(r) if selfies.as_bytes()[left] == b'[' => {
                let sym = &selfies[left..=r];
                if sym != "[nop]" {
                    out.push(sym.to_string());
                }
                left = r + 1;
            }
            _ => {
                return Err(Error::Parse {
                    input: selfies.to_string(),
                    reason: "misplaced or missing brackets".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Symbol source that yields `""` once exhausted.
struct SymbolStream {
    symbols: Vec<String>,
    pos: usize,
}

impl SymbolStream {
    fn new(symbols: Vec<String>) -> Self {
        Self { symbols, pos: 0 }
    }

    fn next(&mut self) -> String {
        let s = self.symbols.get(self.pos).cloned().unwrap_or_default();
        self.pos += 1;
        s
    }

    fn take(&mut self, n: usize) -> Vec<String> {
        (0..n).map(|_| self.next()).collect()
    }
}

struct Derived {
    text: String,
    available: i32,
    prev: Option<usize>,
}

fn digit_at(symbol: &str, from_end: usize) -> Option<u32> {
    symbol
        .len()
        .checked_sub(from_end)
        .and_then(|i| symbol.as_bytes().get(i))
        .and_then(|b| (*b as char).to_digit(10))
}

fn next_atom_state(symbol: &str, state: i32) -> Result<(String, i32)> {
    if symbol == "[epsilon]" {
        return Ok((String::new(), if state == 0 { 0 } else { -1 }));
    }
    let bytes = symbol.as_bytes();
    let mut bond = match bytes.get(1) {
        Some(b'/') => "/",
        Some(b'\\') => "\\",
        Some(b'=') => "=",
        Some(b'#') => "#",
        _ => "",
    };
    let mut order = bond_order(bond) as i32;
    let body_start = 1 + bond.len();
    let smiles_symbol = if symbol.ends_with("expl]") && symbol.len() >= body_start + 5 {
        format!("[{}]", &symbol[body_start..symbol.len() - 5])
    } else if symbol.len() > body_start {
        symbol[body_start..symbol.len() - 1].to_string()
    } else {
        String::new()
    };
    if smiles_symbol.is_empty() {
        return Err(conversion(symbol, "empty atom symbol"));
    }
    let (element, h_count, charge) = parse_atom_symbol(&smiles_symbol);
    let atom_or_ion = if charge == 0 {
        element
    } else {
        format!("{element}{charge:+}")
    };
    let mut max_bonds = bond_capacity(&atom_or_ion) as i32;
    let h = h_count as i32;
    if h > max_bonds || (h == max_bonds && state > 0) {
        return Err(conversion(symbol, "too many Hs in symbol"));
    }
    max_bonds -= h;
    let next_state = if state == 0 {
        bond = "";
        max_bonds
    } else {
        if order > state.min(max_bonds) {
            order = state.min(max_bonds);
            bond = bond_symbol(order as u32);
        }
        let n = max_bonds - order;
        if n == 0 {
            -1
        } else {
            n
        }
    };
    Ok((format!("{bond}{smiles_symbol}"), next_state))
}

fn next_branch_state(symbol: &str, state: i32) -> Result<(i32, i32)> {
    let branch_type = digit_at(symbol, 2)
        .filter(|t| (1..=3).contains(t))
        .ok_or_else(|| conversion(symbol, "unknown branch symbol"))? as i32;
    if (2..=8).contains(&state) {
        let init = (state - 1).min(branch_type);
        Ok((init, state - init))
    } else {
        Ok((-1, state))
    }
}

struct Derivation {
    derived: Vec<Derived>,
    branches: IndexMap<usize, usize>,
    rings: Vec<(usize, usize, String)>,
}

impl Derivation {
    fn derive(&mut self, stream: &mut SymbolStream, init_state: i32, mut prev_idx: Option<usize>) -> Result<()> {
        let mut curr = stream.next();
        let mut state = init_state;
        while !curr.is_empty() && state >= 0 {
            let new_state;
            if curr.contains("Branch") {
                let (branch_init, next) = next_branch_state(&curr, state)?;
                new_state = next;
                if state > 1 {
                    let l = digit_at(&curr, 4).ok_or_else(|| conversion(&curr, "unknown branch symbol"))? as usize;
                    let n = n_from_symbols(&stream.take(l));
                    let branch_symbols: Vec<String> = stream.take(n + 1).into_iter().filter(|s| s != "[nop]").collect();
                    let mut branch_stream = SymbolStream::new(branch_symbols);
                    let mut branch_start = self.derived.len();
                    self.derive(&mut branch_stream, branch_init, prev_idx)?;
                    let branch_end = self.derived.len() as isize - 1;
                    while let Some(&end) = self.branches.get(&branch_start) {
                        branch_start = end + 1;
                    }
                    if branch_start as isize <= branch_end {
                        self.branches.insert(branch_start, branch_end as usize);
                    }
                }
            } else if curr.contains("Ring") {
                new_state = state;
                if state != 0 {
                    let l = digit_at(&curr, 2).ok_or_else(|| conversion(&curr, "unknown ring symbol"))? as usize;
                    let n = n_from_symbols(&stream.take(l));
                    if let Some(right) = prev_idx {
                        let left = right.saturating_sub(n + 1);
                        let bond = if curr.get(1..5) == Some("Expl") {
                            curr.get(5..6).unwrap_or("").to_string()
                        } else {
                            String::new()
                        };
                        self.rings.push((left, right, bond));
                    }
                }
            } else {
                let (symbol, next) = next_atom_state(&curr, state)?;
                new_state = next;
                if !symbol.is_empty() {
                    let order = bond_order(symbol.get(0..1).unwrap_or("")) as i32;
                    self.derived.push(Derived {
                        text: symbol,
                        available: next,
                        prev: prev_idx,
                    });
                    if let Some(p) = prev_idx {
                        self.derived[p].available -= order;
                    }
                    prev_idx = Some(self.derived.len() - 1);
                }
            }
            curr = stream.next();
            state = new_state;
        }
        Ok(())
    }

    fn form_rings(&mut self) {
        let mut ring_locs: IndexMap<(usize, usize), String> = IndexMap::new();
        for (left, right, bond) in std::mem::take(&mut self.rings) {
            if left == right {
                continue;
            }
            let mut bond_sym = bond;
            let mut order = bond_order(&bond_sym) as i32;
            let (l_avail, r_avail) = (self.derived[left].available, self.derived[right].available);
            if l_avail <= 0 || r_avail <= 0 {
                continue;
            }
            if order > l_avail.min(r_avail) {
                order = l_avail.min(r_avail);
                bond_sym = bond_symbol(order as u32).to_string();
            }
            if self.derived[right].prev == Some(left) {
                let text = &self.derived[right].text;
                let old_bond = match text.as_bytes().first() {
                    Some(b'-' | b'/' | b'\\' | b'=' | b'#') => &text[..1],
                    _ => "",
                };
                let new_order = (order + bond_order(old_bond) as i32).min(3);
                let rest = text[old_bond.len()..].to_string();
                self.derived[right].text = format!("{}{rest}", bond_symbol(new_order as u32));
            } else if let Some(existing) = ring_locs.get_mut(&(left, right)) {
                let new_order = (order + bond_order(existing) as i32).min(3);
                *existing = bond_symbol(new_order as u32).to_string();
            } else {
                ring_locs.insert((left, right), bond_sym);
            }
            self.derived[left].available -= order;
            self.derived[right].available -= order;
        }
        for (counter, ((left, right), bond)) in ring_locs.into_iter().enumerate() {
            let mut ring_id = (counter + 1).to_string();
            if ring_id.len() == 2 {
                ring_id.insert(0, '%');
            }
            self.derived[left].text.push_str(&bond);
            self.derived[left].text.push_str(&ring_id);
            self.derived[right].text.push_str(&bond);
            self.derived[right].text.push_str(&ring_id);
        }
    }
}

fn translate_selfies(selfies: &str) -> Result<String> {
    let mut stream = SymbolStream::new(parse_symbols(selfies)?);
    let mut d = Derivation {
        derived: Vec::new(),
        branches: IndexMap::new(),
        rings: Vec::new(),
    };
    d.derive(&mut stream, 0, None)?;
    d.form_rings();
    for (&lb, &rb) in &d.branches {
        d.derived[lb].text.insert(0, '(');
        d.derived[rb].text.push(')');
    }
    Ok(d.derived.into_iter().map(|x| x.text).collect())
}

/// Converts a SELFIES string to SMILES.
///
/// Only lexing (unbalanced or misplaced brackets) can fail; any sequence of
/// well-formed tokens derives to some molecule.
pub fn selfies_to_smiles(selfies: &str) -> Result<String> {
    let mut parts = Vec::new();
    for frag in selfies.split('.') {
        let smiles = translate_selfies(frag).map_err(|e| match e {
            Error::Parse { reason, .. } => Error::Parse {
                input: selfies.to_string(),
                reason,
            },
            other => relabel(other, selfies),
        })?;
        if !smiles.is_empty() {
            parts.push(smiles);
        }
    }
    Ok(parts.join("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encodes_five_membered_ring_example() {
        assert_eq!(
            smiles_to_selfies("C1=CNCC1").unwrap(),
            "[C][=C][N][C][C][Ring1][Branch1_1]"
        );
    }

    #[test]
    fn single_atom_round_trip() {
        assert_eq!(smiles_to_selfies("C").unwrap(), "[C]");
        assert_eq!(selfies_to_smiles("[C]").unwrap(), "C");
    }

    #[test]
    fn decodes_ring_example() {
        assert_eq!(
            selfies_to_smiles("[C][=C][N][C][C][Ring1][Branch1_1]").unwrap(),
            "C1=CNCC1"
        );
    }

    #[test]
    fn bond_capacity_caps_multiplicity() {
        assert_eq!(selfies_to_smiles("[C][=C][F]").unwrap(), "C=CF");
        assert_eq!(selfies_to_smiles("[F][=C]").unwrap(), "FC");
        assert_eq!(selfies_to_smiles("[O][#O]").unwrap(), "O=O");
    }

    #[test]
    fn branches_and_index_symbols() {
        let s = smiles_to_selfies("CC(=O)O").unwrap();
        assert_eq!(s, "[C][C][Branch1_2][C][=O][O]");
        assert_eq!(selfies_to_smiles(&s).unwrap(), "CC(=O)O");
        assert_eq!(symbols_from_n(17), vec!["[Ring1]", "[Ring1]"]);
        assert_eq!(n_from_symbols(&["[Ring1]".into(), "[Ring1]".into()]), 17);
    }

    #[test]
    fn malformed_brackets_are_lex_errors() {
        assert!(matches!(selfies_to_smiles("[C][C"), Err(Error::Parse { .. })));
        assert!(matches!(selfies_to_smiles("[C]x[C]"), Err(Error::Parse { .. })));
    }

    #[test]
    fn aromatic_input_is_kekulized() {
        let s = smiles_to_selfies("c1ccccc1").unwrap();
        assert_eq!(s, "[C][=C][C][=C][C][=C][Ring1][Branch1_2]");
    }
}

//! Kekulization of lexed aromatic SMILES.
//!
//! Builds the pi subgraph of aromatic atoms that still carry an unpaired
//! valence electron and assigns alternating double bonds by depth-first
//! matching. Node and edge orderings follow the SELFIES 1.0 encoder so that
//! the chosen Kekulé structure (and hence the emitted SELFIES) is identical.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;

use super::smiles::{bond_order, find_element, parse_atom_symbol, SmilesSymbol, SymbolKind};
use crate::error::{Error, Result};

fn aromatic_valence(element: &str) -> Option<i32> {
    Some(match element {
        "b" | "al" => 3,
        "c" | "si" => 4,
        "n" | "p" | "as" => 5,
        "o" | "s" | "se" | "te" => 6,
        _ => return None,
    })
}

fn fail(reason: String) -> Error {
    Error::Conversion {
        input: String::new(),
        reason,
    }
}

fn is_aromatic(atom: &str) -> Result<bool> {
    let (s, e) = find_element(atom);
    let element = atom.get(s..e.min(atom.len())).unwrap_or("");
    match element.chars().next() {
        Some(c) if c.is_uppercase() => Ok(false),
        None => Ok(false),
        _ => {
            if aromatic_valence(element).is_none() {
                return Err(fail(format!("unrecognized aromatic symbol '{atom}'")));
            }
            Ok(true)
        }
    }
}

fn capitalize(atom: &str) -> String {
    let (s, _) = find_element(atom);
    let mut out = String::with_capacity(atom.len());
    out.push_str(&atom[..s]);
    if let Some(c) = atom[s..].chars().next() {
        out.push(c.to_ascii_uppercase());
        out.push_str(&atom[s + 1..]);
    }
    out
}

fn in_pi_subgraph(atom: &str, bonds: &[String]) -> Result<bool> {
    let (element, mut h_count, charge) = parse_atom_symbol(atom);
    let mut used: i32 = bonds.iter().map(|b| bond_order(b) as i32).sum();
    if element == "c" && h_count == 0 && charge == 0 && bonds.len() == 2 && !bonds.iter().any(|b| b == "#") {
        h_count += 1;
    }
    if h_count > 1 {
        return Err(fail(format!("unrecognized aromatic symbol '{atom}'")));
    } else if h_count == 1 {
        used += 1;
    }
    let valence =
        aromatic_valence(&element).ok_or_else(|| fail(format!("unrecognized aromatic symbol '{atom}'")))? - charge;
    Ok((valence - used).rem_euclid(2) != 0)
}

#[derive(Debug, Clone)]
struct Edge {
    a: usize,
    b: usize,
    bond: String,
    bond_idx: usize,
}

impl Edge {
    fn other(&self, idx: usize) -> usize {
        if idx == self.a {
            self.b
        } else {
            self.a
        }
    }
}

struct MolGraph<'a> {
    symbols: &'a mut [SmilesSymbol],
    graph: IndexMap<usize, Vec<usize>>,
    edges: Vec<Edge>,
    aromatic: HashSet<usize>,
}

impl<'a> MolGraph<'a> {
    fn add_bond(&mut self, a: usize, b: usize, bond_idx: usize) -> Result<()> {
        let a_aro = self.aromatic.contains(&a) || is_aromatic(&self.symbols[a].symbol)?;
        let b_aro = self.aromatic.contains(&b) || is_aromatic(&self.symbols[b].symbol)?;
        if a_aro {
            self.aromatic.insert(a);
        }
        if b_aro {
            self.aromatic.insert(b);
        }
        let mut bond = self.symbols[bond_idx].bond.clone();
        if bond == ":" {
            self.aromatic.insert(a);
            self.aromatic.insert(b);
            self.symbols[bond_idx].bond.clear();
            bond.clear();
        }
        let id = self.edges.len();
        self.edges.push(Edge { a, b, bond, bond_idx });
        self.graph.entry(a).or_default().push(id);
        self.graph.entry(b).or_default().push(id);
        Ok(())
    }

    fn build(
        &mut self,
        rings: &mut HashMap<String, (usize, usize)>,
        mut prev: Option<usize>,
        mut curr: Option<usize>,
    ) -> Result<Option<usize>> {
        loop {
            let next = curr.map_or(0, |c| c + 1);
            if next >= self.symbols.len() {
                break;
            }
            curr = Some(next);
            let kind = self.symbols[next].kind;
            match kind {
                SymbolKind::Atom => {
                    if let Some(p) = prev {
                        self.add_bond(p, next, next)?;
                    }
                    prev = Some(next);
                }
                SymbolKind::Branch => {
                    if self.symbols[next].symbol == "(" {
                        curr = self.build(rings, prev, curr)?;
                    } else {
                        break;
                    }
                }
                SymbolKind::Ring => {
                    let key = self.symbols[next].symbol.clone();
                    if let Some((left_idx, left_bond_idx)) = rings.remove(&key) {
                        let right_idx = prev.ok_or_else(|| fail("ring bond without an atom".into()))?;
                        let right_bond_idx = next;
                        let bond_idx = if !self.symbols[left_bond_idx].bond.is_empty() {
                            self.symbols[right_bond_idx].bond.clear();
                            left_bond_idx
                        } else {
                            self.symbols[left_bond_idx].bond.clear();
                            right_bond_idx
                        };
                        self.add_bond(left_idx, right_idx, bond_idx)?;
                    } else {
                        let p = prev.ok_or_else(|| fail("ring bond without an atom".into()))?;
                        rings.insert(key, (p, next));
                    }
                }
            }
        }
        Ok(curr)
    }

    fn prune_to_pi_subgraph(&mut self) -> Result<()> {
        let non_aromatic: Vec<usize> = self
            .graph
            .keys()
            .copied()
            .filter(|k| !self.aromatic.contains(k))
            .collect();
        for k in non_aromatic {
            self.graph.shift_remove(&k);
        }
        let mut aro: Vec<usize> = self.aromatic.iter().copied().collect();
        aro.sort_unstable();
        for i in aro {
            let bonds: Vec<String> = self.graph[&i].iter().map(|&e| self.edges[e].bond.clone()).collect();
            if !in_pi_subgraph(&self.symbols[i].symbol, &bonds)? {
                self.graph.shift_remove(&i);
            }
        }
        let keys: Vec<usize> = self.graph.keys().copied().collect();
        for k in keys {
            let kept: Vec<usize> = self.graph[&k]
                .iter()
                .copied()
                .filter(|&e| {
                    let edge = &self.edges[e];
                    self.graph.contains_key(&edge.a) && self.graph.contains_key(&edge.b) && edge.bond.is_empty()
                })
                .collect();
            self.graph[&k] = kept;
        }
        Ok(())
    }

    fn nodes_by_num_edges(&self) -> Vec<usize> {
        let mut ends = Vec::new();
        let mut middles = Vec::new();
        for (&idx, edges) in &self.graph {
            if edges.len() > 1 {
                middles.push(idx);
            } else {
                ends.push(idx);
            }
        }
        ends.extend(middles);
        ends
    }

    fn dfs_assign(
        &mut self,
        idx: usize,
        visited: &mut HashSet<usize>,
        matched_nodes: &mut HashSet<usize>,
        matched_edges: &mut HashSet<usize>,
    ) -> bool {
        if visited.contains(&idx) {
            return true;
        }
        let edges = self.graph[&idx].clone();
        if matched_nodes.contains(&idx) {
            let visited_save = visited.clone();
            visited.insert(idx);
            for e in edges {
                let adj = self.edges[e].other(idx);
                if !self.dfs_assign(adj, visited, matched_nodes, matched_edges) {
                    visited.retain(|v| visited_save.contains(v));
                    return false;
                }
            }
            true
        } else {
            let candidates: Vec<usize> = edges
                .into_iter()
                .filter(|&e| !matched_nodes.contains(&self.edges[e].other(idx)))
                .collect();
            if candidates.is_empty() {
                return false;
            }
            let matched_edges_save = matched_edges.clone();
            for e in candidates {
                let (a, b) = (self.edges[e].a, self.edges[e].b);
                matched_nodes.insert(a);
                matched_nodes.insert(b);
                matched_edges.insert(e);
                if self.dfs_assign(idx, visited, matched_nodes, matched_edges) {
                    self.edges[e].bond = "=".into();
                    return true;
                }
                let added: Vec<usize> = matched_edges.difference(&matched_edges_save).copied().collect();
                for edge in added {
                    self.edges[edge].bond.clear();
                    matched_nodes.remove(&self.edges[edge].a);
                    matched_nodes.remove(&self.edges[edge].b);
                }
                matched_edges.retain(|x| matched_edges_save.contains(x));
            }
            false
        }
    }

    fn write_back(&mut self) {
        for &idx in &self.aromatic {
            self.symbols[idx].symbol = capitalize(&self.symbols[idx].symbol);
        }
        for edge_ids in self.graph.values() {
            for &e in edge_ids {
                let Edge { bond, bond_idx, .. } = &self.edges[e];
                self.symbols[*bond_idx].bond = bond.clone();
                if *bond_idx > 0 && self.symbols[bond_idx - 1].kind == SymbolKind::Branch {
                    self.symbols[bond_idx - 1].bond = bond.clone();
                }
            }
        }
    }
}

/// Rewrites aromatic atoms and bonds of `symbols` into an explicit Kekulé form.
pub fn kekulize(symbols: &mut [SmilesSymbol]) -> Result<()> {
    let mut graph = MolGraph {
        symbols,
        graph: IndexMap::new(),
        edges: Vec::new(),
        aromatic: HashSet::new(),
    };
    let mut rings = HashMap::new();
    graph.build(&mut rings, None, None)?;
    if graph.aromatic.is_empty() {
        return Ok(());
    }
    graph.prune_to_pi_subgraph()?;
    let mut visited = HashSet::new();
    for i in graph.nodes_by_num_edges() {
        let ok = graph.dfs_assign(i, &mut visited, &mut HashSet::new(), &mut HashSet::new());
        if !ok {
            return Err(fail("kekulization algorithm failed".into()));
        }
    }
    graph.write_back();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::smiles::lex;
    use super::*;

    fn kek(s: &str) -> String {
        let mut syms = lex(s).unwrap();
        kekulize(&mut syms).unwrap();
        syms.iter().map(|x| format!("{}{}", x.bond, x.symbol)).collect()
    }

    #[test]
    fn benzene_alternates() {
        let k = kek("c1ccccc1");
        assert_eq!(k.matches('=').count(), 3);
        assert!(!k.contains('c'));
    }

    #[test]
    fn pyrrole_nitrogen_keeps_hydrogen() {
        let k = kek("c1cc[nH]c1");
        assert!(k.contains("[NH]"));
        assert_eq!(k.matches('=').count(), 2);
    }

    #[test]
    fn isolated_aromatic_atom_fails() {
        let mut syms = lex("Cc1CC1").unwrap();
        assert!(kekulize(&mut syms).is_err());
    }
}

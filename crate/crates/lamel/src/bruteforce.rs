//! Exhaustive reference implementations used by tests to cross-check the
//! fast enumeration and canonicalization paths, plus a shared pool of small
//! molecules. Nothing here is used by any production code path: subsets come
//! from bitmask enumeration and isomorphism classes from direct permutation
//! search, not from the ESU or canonical-form code.

use crate::molgraph::{BondOrder, MolecularGraph};

/// All connected vertex subsets with 1..=`max_size` members, by scanning
/// every bitmask. Only sensible for small graphs.
pub fn connected_subsets(graph: &MolecularGraph, max_size: usize) -> Vec<Vec<usize>> {
    let n = graph.atom_count();
    assert!(n <= 20, "bitmask enumeration needs a small graph");
    let mut subsets = Vec::new();
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size > max_size {
            continue;
        }
        let vertices: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        if subset_connected(graph, &vertices) {
            subsets.push(vertices);
        }
    }
    subsets
}

fn subset_connected(graph: &MolecularGraph, vertices: &[usize]) -> bool {
    let mut seen = vec![false; vertices.len()];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(i) = stack.pop() {
        for (j, &u) in vertices.iter().enumerate() {
            if !seen[j] && graph.bond_order_between(vertices[i], u).is_some() {
                seen[j] = true;
                visited += 1;
                stack.push(j);
            }
        }
    }
    visited == vertices.len()
}

fn node_label(graph: &MolecularGraph, v: usize) -> (u8, i8) {
    let atom = graph.atom(v);
    (atom.element.atomic_number(), atom.formal_charge)
}

fn induced_order(
    graph: &MolecularGraph,
    subset: &[usize],
    i: usize,
    j: usize,
) -> Option<BondOrder> {
    graph.bond_order_between(subset[i], subset[j])
}

/// Exact labeled-graph isomorphism between two induced subgraphs, by
/// backtracking over label-respecting vertex mappings.
pub fn induced_isomorphic(graph: &MolecularGraph, a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut label_counts_a: Vec<(u8, i8)> = a.iter().map(|&v| node_label(graph, v)).collect();
    let mut label_counts_b: Vec<(u8, i8)> = b.iter().map(|&v| node_label(graph, v)).collect();
    label_counts_a.sort_unstable();
    label_counts_b.sort_unstable();
    if label_counts_a != label_counts_b {
        return false;
    }
    let mut mapping = vec![usize::MAX; a.len()];
    let mut used = vec![false; b.len()];
    backtrack(graph, a, b, 0, &mut mapping, &mut used)
}

fn backtrack(
    graph: &MolecularGraph,
    a: &[usize],
    b: &[usize],
    position: usize,
    mapping: &mut Vec<usize>,
    used: &mut Vec<bool>,
) -> bool {
    if position == a.len() {
        return true;
    }
    for candidate in 0..b.len() {
        if used[candidate] {
            continue;
        }
        if node_label(graph, a[position]) != node_label(graph, b[candidate]) {
            continue;
        }
        let consistent = (0..position).all(|earlier| {
            induced_order(graph, a, earlier, position)
                == induced_order(graph, b, mapping[earlier], candidate)
        });
        if !consistent {
            continue;
        }
        mapping[position] = candidate;
        used[candidate] = true;
        if backtrack(graph, a, b, position + 1, mapping, used) {
            return true;
        }
        mapping[position] = usize::MAX;
        used[candidate] = false;
    }
    false
}

/// One isomorphism class found by the oracle.
#[derive(Debug, Clone)]
pub struct OracleClass {
    pub size: usize,
    pub count: u64,
    /// one member vertex subset, usable as a witness
    pub representative: Vec<usize>,
}

/// Buckets every connected subset of size 1..=`max_size` by exact
/// isomorphism testing.
pub fn classify(graph: &MolecularGraph, max_size: usize) -> Vec<OracleClass> {
    let mut classes: Vec<OracleClass> = Vec::new();
    for subset in connected_subsets(graph, max_size) {
        match classes.iter_mut().find(|c| {
            c.size == subset.len() && induced_isomorphic(graph, &c.representative, &subset)
        }) {
            Some(class) => class.count += 1,
            None => classes.push(OracleClass {
                size: subset.len(),
                count: 1,
                representative: subset,
            }),
        }
    }
    classes
}

/// Fixed pool of SMILES whose hydrogen-expanded graphs stay at or below
/// twelve atoms.
pub fn small_molecule_pool() -> Vec<&'static str> {
    vec![
        "O",
        "C",
        "CC",
        "CCO",
        "C=O",
        "C#N",
        "CC(=O)C",
        "C1CC1",
        "c1ccccc1",
        "CO",
        "C=C",
        "C#C",
        "OO",
        "N",
        "CN",
        "O=C=O",
        "CC#N",
        "C1CO1",
        "CF",
        "C(F)(F)F",
        "C(Cl)Cl",
        "[NH4+]",
        "[OH-]",
        "CS",
        "O=S=O",
        "c1ccncc1",
        "C1CCC1",
        "CC=O",
        "OC=O",
        "C1=CC1",
        "N#N",
        "[H][H]",
        "CCC",
        "CC(=O)O",
        "C(Cl)(Cl)(Cl)Cl",
        "c1cc[nH]c1",
        "c1ccoc1",
        "C=CC=C",
        "COC",
        "[O-]C=O",
    ]
}

//! Molecular graphs parsed from SMILES, with explicit hydrogens.
//!
//! Atoms are nodes and bonds are edges; this is the substrate the graphlet
//! enumeration in [`crate::graphlets`] operates on. Parsing covers the SMILES
//! organic subset, bracket atoms (charge, explicit hydrogen count, isotope),
//! branches, ring closures, and the four bond symbols `-`, `=`, `#`, `:`.
//! Stereochemistry markers are parsed and discarded; aromatic bonds are kept
//! as a distinct bond type with no kekulization.

mod element;
mod smiles;

pub use element::Element;
pub use smiles::{parse_smiles, SmilesError};

use thiserror::Error;

/// One atom of a molecular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Atom {
    pub element: Element,
    pub formal_charge: i8,
    /// Lowercase-SMILES aromatic flag. Not part of graphlet node labels.
    pub aromatic: bool,
    /// Hydrogens implied by valence rules but not materialized as nodes.
    /// Zero after hydrogen expansion.
    pub implicit_hydrogens: u8,
}

impl Atom {
    /// True when this atom is a hydrogen present as an explicit graph node.
    pub fn is_explicit_hydrogen(&self) -> bool {
        self.element == Element::H
    }
}

/// Bond order; aromatic is a distinct fourth type, never kekulized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integer contribution to an atom's bond-order sum for valence purposes.
    /// Aromatic bonds count 1; aromatic atoms receive a separate +1 increment.
    pub fn valence_contribution(&self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn symbol(&self) -> char {
        match self {
            BondOrder::Single => '-',
            BondOrder::Double => '=',
            BondOrder::Triple => '#',
            BondOrder::Aromatic => ':',
        }
    }
}

/// An undirected bond between two atom indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn new(a: usize, b: usize, order: BondOrder) -> Self {
        Bond { a, b, order }
    }

    /// Endpoints as an ordered pair, smaller index first.
    pub fn endpoints(&self) -> (usize, usize) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("bond endpoint {index} out of range for {atoms} atoms")]
    EndpointOutOfRange { index: usize, atoms: usize },
    #[error("self-loop on atom {0}")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("graph has no atoms")]
    Empty,
    #[error("permutation is not a bijection over {0} atom indices")]
    InvalidPermutation(usize),
}

/// A connected, simple molecular graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, BondOrder)>>,
    source_smiles: String,
}

impl MolecularGraph {
    /// Builds a graph from parts, checking simplicity and connectivity.
    pub fn new(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_smiles: String,
    ) -> Result<Self, GraphError> {
        if atoms.is_empty() {
            return Err(GraphError::Empty);
        }
        let n = atoms.len();
        let mut adjacency: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
        for bond in &bonds {
            for &end in &[bond.a, bond.b] {
                if end >= n {
                    return Err(GraphError::EndpointOutOfRange {
                        index: end,
                        atoms: n,
                    });
                }
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfLoop(bond.a));
            }
            if adjacency[bond.a].iter().any(|&(nb, _)| nb == bond.b) {
                let (lo, hi) = bond.endpoints();
                return Err(GraphError::DuplicateBond(lo, hi));
            }
            adjacency[bond.a].push((bond.b, bond.order));
            adjacency[bond.b].push((bond.a, bond.order));
        }
        let graph = MolecularGraph {
            atoms,
            bonds,
            adjacency,
            source_smiles,
        };
        if !graph.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(graph)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source_smiles(&self) -> &str {
        &self.source_smiles
    }

    /// Neighbors of atom `i` with the connecting bond order.
    pub fn neighbors(&self, i: usize) -> &[(usize, BondOrder)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn bond_order_between(&self, a: usize, b: usize) -> Option<BondOrder> {
        self.adjacency[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, order)| order)
    }

    fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1;
        while let Some(v) = stack.pop() {
            for &(nb, _) in &self.adjacency[v] {
                if !seen[nb] {
                    seen[nb] = true;
                    visited += 1;
                    stack.push(nb);
                }
            }
        }
        visited == n
    }
}

/// Relabels atoms so that atom `i` of `graph` becomes atom `permutation[i]`.
///
/// The result is isomorphic to the input; fingerprints downstream must not
/// change under this operation.
pub fn permute_atoms(
    graph: &MolecularGraph,
    permutation: &[usize],
) -> Result<MolecularGraph, GraphError> {
    let n = graph.atom_count();
    if permutation.len() != n {
        return Err(GraphError::InvalidPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in permutation {
        if p >= n || seen[p] {
            return Err(GraphError::InvalidPermutation(n));
        }
        seen[p] = true;
    }
    let mut atoms = vec![graph.atoms[0]; n];
    for (old, &new) in permutation.iter().enumerate() {
        atoms[new] = graph.atoms[old];
    }
    let bonds = graph
        .bonds
        .iter()
        .map(|b| Bond::new(permutation[b.a], permutation[b.b], b.order))
        .collect();
    MolecularGraph::new(atoms, bonds, graph.source_smiles.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn methane() -> MolecularGraph {
        parse_smiles("C", true).unwrap()
    }

    #[test]
    fn permute_identity_is_noop() {
        let g = methane();
        let identity: Vec<usize> = (0..g.atom_count()).collect();
        assert_eq!(permute_atoms(&g, &identity).unwrap(), g);
    }

    #[test]
    fn permute_then_inverse_restores() {
        let g = parse_smiles("CC(=O)C", true).unwrap();
        let n = g.atom_count();
        let perm: Vec<usize> = (0..n).map(|i| (i + 3) % n).collect();
        let mut inverse = vec![0usize; n];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let permuted = permute_atoms(&g, &perm).unwrap();
        assert_ne!(permuted, g);
        assert_eq!(permute_atoms(&permuted, &inverse).unwrap(), g);
    }

    #[test]
    fn permute_preserves_degree_sequence_and_bond_orders() {
        let g = parse_smiles("c1ccccc1O", true).unwrap();
        let n = g.atom_count();
        let perm: Vec<usize> = (0..n).rev().collect();
        let h = permute_atoms(&g, &perm).unwrap();

        let mut deg_g: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
        let mut deg_h: Vec<usize> = (0..n).map(|i| h.degree(i)).collect();
        deg_g.sort_unstable();
        deg_h.sort_unstable();
        assert_eq!(deg_g, deg_h);

        let mut orders_g: Vec<BondOrder> = g.bonds().iter().map(|b| b.order).collect();
        let mut orders_h: Vec<BondOrder> = h.bonds().iter().map(|b| b.order).collect();
        orders_g.sort_unstable();
        orders_h.sort_unstable();
        assert_eq!(orders_g, orders_h);
    }

    #[test]
    fn permute_rejects_non_bijection() {
        let g = methane();
        let n = g.atom_count();
        let bad = vec![0usize; n];
        assert_eq!(
            permute_atoms(&g, &bad),
            Err(GraphError::InvalidPermutation(n))
        );
        assert_eq!(
            permute_atoms(&g, &[0, 1]),
            Err(GraphError::InvalidPermutation(n))
        );
    }

    #[test]
    fn duplicate_bond_rejected() {
        let atoms = vec![
            Atom {
                element: Element::C,
                formal_charge: 0,
                aromatic: false,
                implicit_hydrogens: 0,
            };
            2
        ];
        let bonds = vec![
            Bond::new(0, 1, BondOrder::Single),
            Bond::new(1, 0, BondOrder::Double),
        ];
        assert_eq!(
            MolecularGraph::new(atoms, bonds, String::new()),
            Err(GraphError::DuplicateBond(0, 1))
        );
    }
}

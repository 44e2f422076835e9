//! Connected-subgraph enumeration.
//!
//! ESU-style recursive extension: every connected vertex subset of size up to
//! the cap is generated exactly once, so occurrence counts need no
//! deduplication. Subgraphs are node-induced: a vertex subset contributes
//! all bonds among its members.

use std::collections::HashMap;

use crate::molgraph::MolecularGraph;

use super::canon::{canonical_form, LabeledSubgraph};
use super::{CanonicalKey, GraphletError, GraphletFingerprint, MAX_GRAPHLET_SIZE};

/// Counts every isomorphism class of connected node-induced subgraph with
/// 1..=`max_size` nodes, keyed by canonical form.
pub fn enumerate_graphlets(
    graph: &MolecularGraph,
    max_size: usize,
) -> Result<GraphletFingerprint, GraphletError> {
    if !(1..=MAX_GRAPHLET_SIZE).contains(&max_size) {
        return Err(GraphletError::MaxSizeOutOfRange(max_size));
    }
    let n = graph.atom_count();
    let mut state = EsuState {
        graph,
        max_size,
        subset: Vec::with_capacity(max_size),
        in_subset: vec![false; n],
        adjacent: vec![false; n],
        counts: HashMap::new(),
        memo: HashMap::new(),
    };
    for root in 0..n {
        state.subset.push(root);
        state.in_subset[root] = true;
        let mut touched = Vec::new();
        for &(u, _) in graph.neighbors(root) {
            if !state.adjacent[u] {
                state.adjacent[u] = true;
                touched.push(u);
            }
        }
        let extension: Vec<usize> = graph
            .neighbors(root)
            .iter()
            .map(|&(u, _)| u)
            .filter(|&u| u > root)
            .collect();
        state.record()?;
        state.extend(root, extension)?;
        for u in touched {
            state.adjacent[u] = false;
        }
        state.in_subset[root] = false;
        state.subset.pop();
    }
    Ok(GraphletFingerprint {
        counts: state.counts,
        max_size,
    })
}

/// Canonical key of the subgraph induced by `vertices`.
pub fn canonical_key(
    graph: &MolecularGraph,
    vertices: &[usize],
) -> Result<CanonicalKey, GraphletError> {
    if vertices.is_empty() {
        return Err(GraphletError::EmptySubgraph);
    }
    if vertices.len() > MAX_GRAPHLET_SIZE {
        return Err(GraphletError::SubgraphTooLarge(vertices.len()));
    }
    let mut sorted = vertices.to_vec();
    sorted.sort_unstable();
    for window in sorted.windows(2) {
        if window[0] == window[1] {
            return Err(GraphletError::DuplicateVertex(window[0]));
        }
    }
    if let Some(&v) = sorted.iter().find(|&&v| v >= graph.atom_count()) {
        return Err(GraphletError::VertexOutOfRange(v));
    }
    let induced = induce(graph, &sorted);
    if !induced.is_connected() {
        return Err(GraphletError::DisconnectedSubgraph);
    }
    Ok(CanonicalKey::from_form(canonical_form(&induced)))
}

fn induce(graph: &MolecularGraph, sorted_vertices: &[usize]) -> LabeledSubgraph {
    let labels = sorted_vertices
        .iter()
        .map(|&v| {
            let atom = graph.atom(v);
            (atom.element, atom.formal_charge)
        })
        .collect();
    let local = |v: usize| sorted_vertices.binary_search(&v).unwrap();
    let mut adjacency = vec![Vec::new(); sorted_vertices.len()];
    let mut edges = Vec::new();
    for (i, &v) in sorted_vertices.iter().enumerate() {
        for &(u, order) in graph.neighbors(v) {
            if u > v && sorted_vertices.binary_search(&u).is_ok() {
                let j = local(u);
                adjacency[i].push((j, order));
                adjacency[j].push((i, order));
                edges.push((i, j, order));
            }
        }
    }
    LabeledSubgraph {
        labels,
        adjacency,
        edges,
    }
}

struct EsuState<'a> {
    graph: &'a MolecularGraph,
    max_size: usize,
    subset: Vec<usize>,
    in_subset: Vec<bool>,
    /// marks vertices in the closed neighborhood of the current subset
    adjacent: Vec<bool>,
    counts: HashMap<CanonicalKey, u64>,
    /// induced-structure encoding -> canonical key, shared across subsets
    memo: HashMap<Vec<u8>, CanonicalKey>,
}

impl EsuState<'_> {
    fn extend(&mut self, root: usize, mut extension: Vec<usize>) -> Result<(), GraphletError> {
        if self.subset.len() == self.max_size {
            return Ok(());
        }
        while let Some(w) = extension.pop() {
            let mut grown = extension.clone();
            for &(u, _) in self.graph.neighbors(w) {
                if u > root && !self.in_subset[u] && !self.adjacent[u] {
                    grown.push(u);
                }
            }
            self.subset.push(w);
            self.in_subset[w] = true;
            let mut touched = Vec::new();
            if !self.adjacent[w] {
                self.adjacent[w] = true;
                touched.push(w);
            }
            for &(u, _) in self.graph.neighbors(w) {
                if !self.adjacent[u] {
                    self.adjacent[u] = true;
                    touched.push(u);
                }
            }
            self.record()?;
            self.extend(root, grown)?;
            for u in touched {
                self.adjacent[u] = false;
            }
            self.in_subset[w] = false;
            self.subset.pop();
        }
        Ok(())
    }

    fn record(&mut self) -> Result<(), GraphletError> {
        let mut sorted = self.subset.clone();
        sorted.sort_unstable();
        let signature = self.structure_signature(&sorted);
        let key = match self.memo.get(&signature) {
            Some(key) => key.clone(),
            None => {
                let induced = induce(self.graph, &sorted);
                let key = CanonicalKey::from_form(canonical_form(&induced));
                self.memo.insert(signature, key.clone());
                key
            }
        };
        *self.counts.entry(key).or_insert(0) += 1;
        Ok(())
    }

    /// Byte encoding of the induced labeled structure relative to the sorted
    /// subset. Subsets with identical local structure share one
    /// canonicalization.
    fn structure_signature(&self, sorted: &[usize]) -> Vec<u8> {
        let mut bytes = Vec::with_capacity(sorted.len() * 4);
        for &v in sorted {
            let atom = self.graph.atom(v);
            bytes.push(atom.element.atomic_number());
            bytes.push(atom.formal_charge as u8);
        }
        bytes.push(0xff);
        for (i, &v) in sorted.iter().enumerate() {
            for &u in &sorted[i + 1..] {
                let tag = match self.graph.bond_order_between(v, u) {
                    None => 0u8,
                    Some(order) => 1 + order.valence_contribution(),
                };
                bytes.push(tag);
            }
        }
        bytes
    }
}

//! Graphlet fingerprints: enumeration of connected subgraphs, canonical
//! isomorphism-class keys, shared vocabularies, and sparse feature matrices.

mod canon;
mod enumerate;
pub mod io;

pub use enumerate::{canonical_key, enumerate_graphlets};

use std::collections::HashMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::util::fnv1a64;

/// Hard cap on graphlet size; exhaustive canonicalization above this gets
/// expensive and nothing in the tooling asks for more.
pub const MAX_GRAPHLET_SIZE: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphletError {
    #[error("max_size {0} outside supported range 1..={MAX_GRAPHLET_SIZE}")]
    MaxSizeOutOfRange(usize),
    #[error("subgraph is disconnected")]
    DisconnectedSubgraph,
    #[error("subgraph has {0} nodes, above the {MAX_GRAPHLET_SIZE}-node cap")]
    SubgraphTooLarge(usize),
    #[error("duplicate vertex {0} in subgraph selection")]
    DuplicateVertex(usize),
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("empty vertex selection")]
    EmptySubgraph,
    #[error("fingerprints mix max_size values {0} and {1}")]
    MixedMaxSize(usize, usize),
    #[error("{ids} row ids for {fingerprints} fingerprints")]
    RowIdMismatch { ids: usize, fingerprints: usize },
    #[error("fingerprint max_size {fingerprint} does not match vocabulary max_size {vocabulary}")]
    VocabularyMismatch {
        fingerprint: usize,
        vocabulary: usize,
    },
    #[error("digest collision between {form_a:?} and {form_b:?}")]
    DigestCollision { form_a: String, form_b: String },
}

/// Identifier of a graphlet isomorphism class.
///
/// The canonical form is the ground truth; the 64-bit key is an FNV-1a
/// digest of it, kept for compact storage. Vocabulary construction verifies
/// that no two distinct forms share a digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalKey {
    key: u64,
    canonical_form: String,
}

impl CanonicalKey {
    pub fn from_form(canonical_form: String) -> Self {
        let key = fnv1a64(canonical_form.as_bytes());
        CanonicalKey {
            key,
            canonical_form,
        }
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn canonical_form(&self) -> &str {
        &self.canonical_form
    }

    /// Node count, recovered from the label section of the canonical form.
    pub fn node_count(&self) -> usize {
        let labels = self.canonical_form.split(';').next().unwrap_or_default();
        if labels.is_empty() {
            0
        } else {
            labels.split('|').count()
        }
    }
}

impl PartialOrd for CanonicalKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CanonicalKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical_form
            .cmp(&other.canonical_form)
            .then(self.key.cmp(&other.key))
    }
}

/// Occurrence counts of every graphlet class in one molecule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphletFingerprint {
    pub counts: HashMap<CanonicalKey, u64>,
    pub max_size: usize,
}

impl GraphletFingerprint {
    /// Total occurrences across classes with exactly `size` nodes.
    pub fn total_at_size(&self, size: usize) -> u64 {
        self.counts
            .iter()
            .filter(|(k, _)| k.node_count() == size)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Cosine similarity between two count fingerprints over the union of
    /// their keys. Independent of any vocabulary.
    pub fn cosine(&self, other: &GraphletFingerprint) -> Option<f64> {
        let dot: f64 = self
            .counts
            .iter()
            .filter_map(|(k, &a)| other.counts.get(k).map(|&b| a as f64 * b as f64))
            .sum();
        let na: f64 = self
            .counts
            .values()
            .map(|&a| (a as f64) * (a as f64))
            .sum::<f64>()
            .sqrt();
        let nb: f64 = other
            .counts
            .values()
            .map(|&b| (b as f64) * (b as f64))
            .sum::<f64>()
            .sqrt();
        if na == 0.0 || nb == 0.0 {
            None
        } else {
            Some((dot / (na * nb)).clamp(-1.0, 1.0))
        }
    }
}

/// Ordered mapping from canonical keys to feature-matrix columns.
///
/// Ordering is by canonical form, so the vocabulary is deterministic for a
/// given molecule set no matter how the fingerprints were produced or merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FingerprintVocabulary {
    columns: Vec<CanonicalKey>,
    index: HashMap<CanonicalKey, usize>,
    max_size: usize,
}

impl FingerprintVocabulary {
    pub fn size(&self) -> usize {
        self.columns.len()
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn columns(&self) -> &[CanonicalKey] {
        &self.columns
    }

    pub fn column_of(&self, key: &CanonicalKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn from_keys(
        keys: impl IntoIterator<Item = CanonicalKey>,
        max_size: usize,
    ) -> Result<Self, GraphletError> {
        let mut columns: Vec<CanonicalKey> = keys.into_iter().collect();
        columns.sort();
        columns.dedup();
        // a digest shared by two distinct forms must trip, never merge
        for window in columns.windows(2) {
            if window[0].key() == window[1].key() {
                return Err(GraphletError::DigestCollision {
                    form_a: window[0].canonical_form().to_string(),
                    form_b: window[1].canonical_form().to_string(),
                });
            }
        }
        let index = columns
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, k)| (k, i))
            .collect();
        Ok(FingerprintVocabulary {
            columns,
            index,
            max_size,
        })
    }
}

/// Union vocabulary over a set of fingerprints, ordered by canonical form.
pub fn build_vocabulary(
    fingerprints: &[GraphletFingerprint],
) -> Result<FingerprintVocabulary, GraphletError> {
    let mut max_size = 0;
    for fp in fingerprints {
        if max_size == 0 {
            max_size = fp.max_size;
        } else if fp.max_size != max_size {
            return Err(GraphletError::MixedMaxSize(max_size, fp.max_size));
        }
    }
    let keys = fingerprints.iter().flat_map(|fp| fp.counts.keys().cloned());
    FingerprintVocabulary::from_keys(keys, max_size)
}

/// One nonzero cell of a sparse count matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SparseEntry {
    pub row: usize,
    pub col: usize,
    pub count: u64,
}

/// Sparse molecules-by-graphlets count matrix over a shared vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<SparseEntry>,
    row_ids: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        mut entries: Vec<SparseEntry>,
        row_ids: Vec<String>,
    ) -> Self {
        assert_eq!(rows, row_ids.len(), "one id per row");
        entries.sort_by_key(|e| (e.row, e.col));
        FeatureMatrix {
            rows,
            cols,
            entries,
            row_ids,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[SparseEntry] {
        &self.entries
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut dense = DMatrix::zeros(self.rows, self.cols);
        for e in &self.entries {
            dense[(e.row, e.col)] = e.count as f64;
        }
        dense
    }

    /// New matrix keeping `rows` in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let position: HashMap<usize, usize> = rows
            .iter()
            .copied()
            .enumerate()
            .map(|(new, old)| (old, new))
            .collect();
        let entries = self
            .entries
            .iter()
            .filter_map(|e| {
                position.get(&e.row).map(|&new| SparseEntry {
                    row: new,
                    col: e.col,
                    count: e.count,
                })
            })
            .collect();
        let row_ids = rows.iter().map(|&r| self.row_ids[r].clone()).collect();
        FeatureMatrix::new(rows.len(), self.cols, entries, row_ids)
    }
}

/// Out-of-vocabulary bookkeeping from [`featurize`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OovReport {
    /// per-row count of dropped graphlet instances
    pub dropped_per_row: Vec<u64>,
    /// distinct keys that had no vocabulary column
    pub dropped_keys: usize,
}

impl OovReport {
    pub fn total_dropped(&self) -> u64 {
        self.dropped_per_row.iter().sum()
    }
}

/// Stacks fingerprints into a sparse matrix over `vocab`. Keys missing from
/// the vocabulary are dropped and reported.
pub fn featurize(
    fingerprints: &[GraphletFingerprint],
    row_ids: &[String],
    vocab: &FingerprintVocabulary,
) -> Result<(FeatureMatrix, OovReport), GraphletError> {
    if fingerprints.len() != row_ids.len() {
        return Err(GraphletError::RowIdMismatch {
            ids: row_ids.len(),
            fingerprints: fingerprints.len(),
        });
    }
    let mut entries = Vec::new();
    let mut report = OovReport {
        dropped_per_row: vec![0; fingerprints.len()],
        dropped_keys: 0,
    };
    let mut dropped: HashMap<&CanonicalKey, ()> = HashMap::new();
    for (row, fp) in fingerprints.iter().enumerate() {
        if fp.max_size != vocab.max_size() {
            return Err(GraphletError::VocabularyMismatch {
                fingerprint: fp.max_size,
                vocabulary: vocab.max_size(),
            });
        }
        for (key, &count) in &fp.counts {
            match vocab.column_of(key) {
                Some(col) => entries.push(SparseEntry { row, col, count }),
                None => {
                    report.dropped_per_row[row] += count;
                    dropped.insert(key, ());
                }
            }
        }
    }
    report.dropped_keys = dropped.len();
    Ok((
        FeatureMatrix::new(fingerprints.len(), vocab.size(), entries, row_ids.to_vec()),
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{parse_smiles, permute_atoms};

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    #[test]
    fn methane_vocabulary_and_row() {
        let g = parse_smiles("C", true).unwrap();
        let fp = enumerate_graphlets(&g, 2).unwrap();
        let vocab = build_vocabulary(std::slice::from_ref(&fp)).unwrap();
        assert_eq!(vocab.size(), 3);
        let (matrix, oov) = featurize(&[fp], &ids(1), &vocab).unwrap();
        assert_eq!(oov.total_dropped(), 0);
        // vocab order: "C;", "C|H;0-1s", "H;"
        let dense = matrix.to_dense();
        assert_eq!(dense.as_slice(), &[1.0, 4.0, 4.0]);
    }

    #[test]
    fn empty_vocabulary() {
        let vocab = build_vocabulary(&[]).unwrap();
        assert_eq!(vocab.size(), 0);
    }

    #[test]
    fn mixed_max_size_rejected() {
        let g = parse_smiles("C", true).unwrap();
        let a = enumerate_graphlets(&g, 1).unwrap();
        let b = enumerate_graphlets(&g, 2).unwrap();
        assert!(matches!(
            build_vocabulary(&[a, b]),
            Err(GraphletError::MixedMaxSize(1, 2))
        ));
    }

    #[test]
    fn oov_keys_dropped_and_reported() {
        let methane = enumerate_graphlets(&parse_smiles("C", true).unwrap(), 2).unwrap();
        let ethanol = enumerate_graphlets(&parse_smiles("CCO", true).unwrap(), 2).unwrap();
        let vocab = build_vocabulary(std::slice::from_ref(&methane)).unwrap();
        let (matrix, oov) = featurize(&[ethanol], &ids(1), &vocab).unwrap();
        assert!(oov.total_dropped() > 0);
        assert!(oov.dropped_keys > 0);
        assert_eq!(matrix.cols(), vocab.size());
    }

    #[test]
    fn isomorphic_relabelings_share_rows() {
        let g = parse_smiles("CC(=O)C", true).unwrap();
        let n = g.atom_count();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
        // (i*7+3) mod 10 is a bijection since gcd(7, 10) = 1
        let h = permute_atoms(&g, &perm).unwrap();
        let fp_g = enumerate_graphlets(&g, 3).unwrap();
        let fp_h = enumerate_graphlets(&h, 3).unwrap();
        assert_eq!(fp_g, fp_h);
        let vocab = build_vocabulary(std::slice::from_ref(&fp_g)).unwrap();
        let (m, _) = featurize(&[fp_g, fp_h], &ids(2), &vocab).unwrap();
        let dense = m.to_dense();
        assert_eq!(dense.row(0), dense.row(1));
    }

    #[test]
    fn vocabulary_monotone_in_max_size() {
        let molecules = ["CCO", "c1ccccc1", "CC(=O)C"];
        for k in 1..4 {
            let small: Vec<GraphletFingerprint> = molecules
                .iter()
                .map(|s| enumerate_graphlets(&parse_smiles(s, true).unwrap(), k).unwrap())
                .collect();
            let large: Vec<GraphletFingerprint> = molecules
                .iter()
                .map(|s| enumerate_graphlets(&parse_smiles(s, true).unwrap(), k + 1).unwrap())
                .collect();
            let vs = build_vocabulary(&small).unwrap();
            let vl = build_vocabulary(&large).unwrap();
            for key in vs.columns() {
                assert!(vl.column_of(key).is_some());
            }
        }
    }

    #[test]
    fn digest_collision_detected() {
        // forged keys with colliding digests but distinct forms
        let a = CanonicalKey {
            key: 42,
            canonical_form: "C;".into(),
        };
        let b = CanonicalKey {
            key: 42,
            canonical_form: "N;".into(),
        };
        assert!(matches!(
            FingerprintVocabulary::from_keys([a, b], 1),
            Err(GraphletError::DigestCollision { .. })
        ));
    }

    #[test]
    fn select_rows_keeps_order() {
        let fps: Vec<GraphletFingerprint> = ["C", "O", "CCO"]
            .iter()
            .map(|s| enumerate_graphlets(&parse_smiles(s, true).unwrap(), 2).unwrap())
            .collect();
        let vocab = build_vocabulary(&fps).unwrap();
        let (m, _) = featurize(&fps, &ids(3), &vocab).unwrap();
        let sub = m.select_rows(&[2, 0]);
        assert_eq!(sub.rows(), 2);
        assert_eq!(sub.row_ids(), &["2".to_string(), "0".to_string()]);
        assert_eq!(sub.to_dense().row(0), m.to_dense().row(2));
        assert_eq!(sub.to_dense().row(1), m.to_dense().row(0));
    }
}

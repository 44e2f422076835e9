//! Exact canonical forms for small labeled graphs.
//!
//! Canonicalization runs iterative color refinement (neighborhood signatures
//! over node and edge labels) and then an individualization search inside the
//! remaining cells, taking the lexicographically smallest serialization over
//! all leaf orderings. Refinement alone is a heuristic and can leave
//! non-trivial cells; the search makes the result an exact isomorphism-class
//! invariant, which is affordable because graphlets are capped at
//! [`super::MAX_GRAPHLET_SIZE`] nodes.

use crate::molgraph::{BondOrder, Element};

/// A small labeled graph extracted from a molecule, in local indices.
#[derive(Debug, Clone)]
pub(crate) struct LabeledSubgraph {
    pub labels: Vec<(Element, i8)>,
    pub adjacency: Vec<Vec<(usize, BondOrder)>>,
    pub edges: Vec<(usize, usize, BondOrder)>,
}

impl LabeledSubgraph {
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1;
        while let Some(v) = stack.pop() {
            for &(u, _) in &self.adjacency[v] {
                if !seen[u] {
                    seen[u] = true;
                    visited += 1;
                    stack.push(u);
                }
            }
        }
        visited == n
    }
}

fn label_text(label: &(Element, i8)) -> String {
    let (element, charge) = label;
    match charge.signum() {
        0 => element.symbol().to_string(),
        1 => format!("{}+{}", element.symbol(), charge),
        _ => format!("{}{}", element.symbol(), charge),
    }
}

fn order_char(order: BondOrder) -> char {
    match order {
        BondOrder::Single => 's',
        BondOrder::Double => 'd',
        BondOrder::Triple => 't',
        BondOrder::Aromatic => 'a',
    }
}

fn order_tag(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 0,
        BondOrder::Double => 1,
        BondOrder::Triple => 2,
        BondOrder::Aromatic => 3,
    }
}

/// Refines `colors` in place until the partition is stable. Colors stay
/// compact (0..k) and ordered consistently with the previous round, so the
/// refinement is isomorphism-invariant.
type RefinementSignature = (usize, Vec<(usize, u8)>, usize);

fn refine(graph: &LabeledSubgraph, colors: &mut Vec<usize>) {
    let n = graph.node_count();
    loop {
        let before = colors.iter().max().copied().unwrap_or(0);
        let mut signatures: Vec<RefinementSignature> = (0..n)
            .map(|v| {
                let mut neighborhood: Vec<(usize, u8)> = graph.adjacency[v]
                    .iter()
                    .map(|&(u, order)| (colors[u], order_tag(order)))
                    .collect();
                neighborhood.sort_unstable();
                (colors[v], neighborhood, v)
            })
            .collect();
        signatures.sort_unstable();
        let mut next = 0usize;
        let mut new_colors = vec![0usize; n];
        for i in 0..n {
            if i > 0
                && (signatures[i].0, &signatures[i].1)
                    != (signatures[i - 1].0, &signatures[i - 1].1)
            {
                next += 1;
            }
            new_colors[signatures[i].2] = next;
        }
        *colors = new_colors;
        if next == before {
            return;
        }
    }
}

fn initial_colors(graph: &LabeledSubgraph) -> Vec<usize> {
    let mut distinct: Vec<(Element, i8)> = graph.labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    graph
        .labels
        .iter()
        .map(|l| distinct.binary_search(l).unwrap())
        .collect()
}

fn encode(graph: &LabeledSubgraph, position: &[usize]) -> String {
    let n = graph.node_count();
    let mut by_position = vec![0usize; n];
    for (node, &pos) in position.iter().enumerate() {
        by_position[pos] = node;
    }
    let labels: Vec<String> = by_position
        .iter()
        .map(|&v| label_text(&graph.labels[v]))
        .collect();
    let mut edges: Vec<(usize, usize, char)> = graph
        .edges
        .iter()
        .map(|&(a, b, order)| {
            let (x, y) = (position[a], position[b]);
            (x.min(y), x.max(y), order_char(order))
        })
        .collect();
    edges.sort_unstable();
    let edge_text: Vec<String> = edges
        .iter()
        .map(|(a, b, c)| format!("{a}-{b}{c}"))
        .collect();
    format!("{};{}", labels.join("|"), edge_text.join(","))
}

fn search(graph: &LabeledSubgraph, colors: &[usize], best: &mut Option<String>) {
    let n = graph.node_count();
    let distinct = colors.iter().max().copied().unwrap_or(0) + 1;
    if distinct == n {
        let candidate = encode(graph, colors);
        match best {
            Some(current) if *current <= candidate => {}
            _ => *best = Some(candidate),
        }
        return;
    }
    // first non-singleton cell in color order
    let mut counts = vec![0usize; distinct];
    for &c in colors {
        counts[c] += 1;
    }
    let cell = counts.iter().position(|&c| c > 1).expect("non-discrete");
    for v in 0..n {
        if colors[v] != cell {
            continue;
        }
        let mut branched: Vec<usize> = colors
            .iter()
            .map(|&c| if c > cell { c + 1 } else { c })
            .collect();
        for (u, c) in branched.iter_mut().enumerate() {
            if u != v && colors[u] == cell {
                *c = cell + 1;
            }
        }
        refine(graph, &mut branched);
        search(graph, &branched, best);
    }
}

/// Canonical serialization of a connected labeled graph: equal strings iff
/// the graphs are isomorphic respecting node labels (element, charge) and
/// edge labels (bond order).
pub(crate) fn canonical_form(graph: &LabeledSubgraph) -> String {
    debug_assert!(graph.is_connected());
    let mut colors = initial_colors(graph);
    refine(graph, &mut colors);
    let mut best = None;
    search(graph, &colors, &mut best);
    best.expect("at least one ordering")
}

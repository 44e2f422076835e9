use std::collections::HashMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, Element, GraphError, MolecularGraph};

/// SMILES parse failure, with the character offset where it was detected.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum SmilesError {
    #[error("empty SMILES")]
    Empty,
    #[error("unknown element symbol at offset {offset}")]
    UnknownSymbol { offset: usize },
    #[error("unbalanced parenthesis at offset {offset}")]
    UnbalancedParenthesis { offset: usize },
    #[error("dangling ring-closure {label} at offset {offset}")]
    DanglingRingClosure { label: u16, offset: usize },
    #[error("valence overflow on {symbol} at offset {offset}")]
    ValenceOverflow { symbol: &'static str, offset: usize },
    #[error("multi-fragment SMILES ('.') at offset {offset}")]
    MultiFragment { offset: usize },
    #[error("unclosed bracket atom opened at offset {offset}")]
    UnclosedBracket { offset: usize },
    #[error("conflicting ring-closure bond symbols at offset {offset}")]
    RingBondConflict { offset: usize },
    #[error("ring closure bonds an atom to itself at offset {offset}")]
    RingSelfBond { offset: usize },
    #[error("duplicate bond between atoms {a} and {b} at offset {offset}")]
    DuplicateBond { a: usize, b: usize, offset: usize },
    #[error("bond symbol with no preceding atom at offset {offset}")]
    BondWithoutAtom { offset: usize },
    #[error("bond symbol at offset {offset} is not followed by an atom")]
    TrailingBond { offset: usize },
    #[error("ring closure before any atom at offset {offset}")]
    RingClosureWithoutAtom { offset: usize },
    #[error("branch opened before any atom at offset {offset}")]
    BranchWithoutAtom { offset: usize },
    #[error("invalid charge specification at offset {offset}")]
    InvalidCharge { offset: usize },
    #[error("unexpected character {ch:?} at offset {offset}")]
    UnexpectedChar { ch: char, offset: usize },
    #[error("invalid molecular graph: {0}")]
    Graph(#[from] GraphError),
}

struct PendingAtom {
    element: Element,
    charge: i8,
    aromatic: bool,
    bracket: bool,
    bracket_hydrogens: u8,
    offset: usize,
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    atoms: Vec<PendingAtom>,
    bonds: Vec<Bond>,
    bond_pairs: HashMap<(usize, usize), ()>,
    prev: Option<usize>,
    pending_bond: Option<(BondOrder, usize)>,
    branch_stack: Vec<(usize, usize)>,
    ring_open: HashMap<u16, (usize, Option<BondOrder>, usize)>,
}

/// Parses a SMILES string into a [`MolecularGraph`].
///
/// With `add_hydrogens` set, hydrogens implied by standard valence rules are
/// materialized as explicit H atoms joined by single bonds; otherwise each
/// atom keeps its implied count in [`Atom::implicit_hydrogens`].
pub fn parse_smiles(smiles: &str, add_hydrogens: bool) -> Result<MolecularGraph, SmilesError> {
    let trimmed = smiles.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::Empty);
    }
    let mut parser = Parser {
        chars: trimmed.chars().collect(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        bond_pairs: HashMap::new(),
        prev: None,
        pending_bond: None,
        branch_stack: Vec::new(),
        ring_open: HashMap::new(),
    };
    parser.run()?;
    parser.finish(smiles, add_hydrogens)
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        while let Some(c) = self.peek() {
            let offset = self.pos;
            match c {
                'B' | 'C' | 'N' | 'O' | 'P' | 'S' | 'F' | 'I' => {
                    self.bump();
                    // Cl and Br are the two-letter members of the organic subset.
                    let element = match (c, self.peek()) {
                        ('C', Some('l')) => {
                            self.bump();
                            Element::Cl
                        }
                        ('B', Some('r')) => {
                            self.bump();
                            Element::Br
                        }
                        _ => Element::from_symbol(&c.to_string()).unwrap(),
                    };
                    self.push_atom(PendingAtom {
                        element,
                        charge: 0,
                        aromatic: false,
                        bracket: false,
                        bracket_hydrogens: 0,
                        offset,
                    })?;
                }
                'b' | 'c' | 'n' | 'o' | 'p' | 's' => {
                    self.bump();
                    let element = Element::from_symbol(&c.to_uppercase().to_string()).unwrap();
                    self.push_atom(PendingAtom {
                        element,
                        charge: 0,
                        aromatic: true,
                        bracket: false,
                        bracket_hydrogens: 0,
                        offset,
                    })?;
                }
                '[' => {
                    self.bump();
                    let atom = self.parse_bracket(offset)?;
                    self.push_atom(atom)?;
                }
                '-' | '=' | '#' | ':' | '/' | '\\' => {
                    self.bump();
                    if self.prev.is_none() {
                        return Err(SmilesError::BondWithoutAtom { offset });
                    }
                    if let Some((_, first)) = self.pending_bond {
                        return Err(SmilesError::TrailingBond { offset: first });
                    }
                    let order = match c {
                        '=' => BondOrder::Double,
                        '#' => BondOrder::Triple,
                        ':' => BondOrder::Aromatic,
                        // '/' and '\' carry cis/trans marks we discard.
                        _ => BondOrder::Single,
                    };
                    self.pending_bond = Some((order, offset));
                }
                '0'..='9' => {
                    self.bump();
                    let label = c.to_digit(10).unwrap() as u16;
                    self.ring_closure(label, offset)?;
                }
                '%' => {
                    self.bump();
                    let mut label = 0u16;
                    for _ in 0..2 {
                        match self.peek() {
                            Some(d @ '0'..='9') => {
                                self.bump();
                                label = label * 10 + d.to_digit(10).unwrap() as u16;
                            }
                            other => {
                                return Err(SmilesError::UnexpectedChar {
                                    ch: other.unwrap_or('%'),
                                    offset: self.pos.min(self.chars.len().saturating_sub(1)),
                                })
                            }
                        }
                    }
                    self.ring_closure(label, offset)?;
                }
                '(' => {
                    self.bump();
                    if self.pending_bond.is_some() {
                        return Err(SmilesError::UnexpectedChar { ch: '(', offset });
                    }
                    match self.prev {
                        Some(p) => self.branch_stack.push((p, offset)),
                        None => return Err(SmilesError::BranchWithoutAtom { offset }),
                    }
                }
                ')' => {
                    self.bump();
                    if let Some((_, first)) = self.pending_bond {
                        return Err(SmilesError::TrailingBond { offset: first });
                    }
                    match self.branch_stack.pop() {
                        Some((p, _)) => self.prev = Some(p),
                        None => return Err(SmilesError::UnbalancedParenthesis { offset }),
                    }
                }
                '.' => return Err(SmilesError::MultiFragment { offset }),
                other => return Err(SmilesError::UnexpectedChar { ch: other, offset }),
            }
        }
        Ok(())
    }

    fn push_atom(&mut self, atom: PendingAtom) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        let aromatic_new = atom.aromatic;
        self.atoms.push(atom);
        if let Some(p) = self.prev {
            let order = match self.pending_bond.take() {
                Some((order, _)) => order,
                None => {
                    if self.atoms[p].aromatic && aromatic_new {
                        BondOrder::Aromatic
                    } else {
                        BondOrder::Single
                    }
                }
            };
            self.add_bond(p, idx, order, self.atoms[idx].offset)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        order: BondOrder,
        offset: usize,
    ) -> Result<(), SmilesError> {
        let key = (a.min(b), a.max(b));
        if self.bond_pairs.insert(key, ()).is_some() {
            return Err(SmilesError::DuplicateBond {
                a: key.0,
                b: key.1,
                offset,
            });
        }
        self.bonds.push(Bond::new(a, b, order));
        Ok(())
    }

    fn ring_closure(&mut self, label: u16, offset: usize) -> Result<(), SmilesError> {
        let here = match self.prev {
            Some(p) => p,
            None => return Err(SmilesError::RingClosureWithoutAtom { offset }),
        };
        let this_bond = self.pending_bond.take().map(|(order, _)| order);
        match self.ring_open.remove(&label) {
            Some((there, that_bond, _)) => {
                if there == here {
                    return Err(SmilesError::RingSelfBond { offset });
                }
                let order = match (this_bond, that_bond) {
                    (Some(x), Some(y)) if x != y => {
                        return Err(SmilesError::RingBondConflict { offset })
                    }
                    (Some(x), _) => x,
                    (None, Some(y)) => y,
                    (None, None) => {
                        if self.atoms[here].aromatic && self.atoms[there].aromatic {
                            BondOrder::Aromatic
                        } else {
                            BondOrder::Single
                        }
                    }
                };
                self.add_bond(there, here, order, offset)
            }
            None => {
                self.ring_open.insert(label, (here, this_bond, offset));
                Ok(())
            }
        }
    }

    fn parse_bracket(&mut self, open_offset: usize) -> Result<PendingAtom, SmilesError> {
        // Isotope digits are accepted and discarded; isotopes never enter
        // graphlet labels.
        while matches!(self.peek(), Some('0'..='9')) {
            self.bump();
        }

        let sym_offset = self.pos;
        let (element, aromatic) = match self.peek() {
            Some(c) if c.is_ascii_uppercase() => {
                self.bump();
                let mut sym = c.to_string();
                if let Some(l) = self.peek() {
                    if l.is_ascii_lowercase() {
                        let two: String = format!("{c}{l}");
                        if Element::from_symbol(&two).is_some() {
                            self.bump();
                            sym = two;
                        }
                    }
                }
                match Element::from_symbol(&sym) {
                    Some(e) => (e, false),
                    None => return Err(SmilesError::UnknownSymbol { offset: sym_offset }),
                }
            }
            Some(c) if c.is_ascii_lowercase() => {
                self.bump();
                let elem = match (c, self.peek()) {
                    ('s', Some('e')) => {
                        self.bump();
                        Element::Se
                    }
                    ('a', Some('s')) => {
                        self.bump();
                        Element::As
                    }
                    _ => match Element::from_symbol(&c.to_uppercase().to_string()) {
                        Some(e) if e.supports_aromatic() => e,
                        _ => return Err(SmilesError::UnknownSymbol { offset: sym_offset }),
                    },
                };
                (elem, true)
            }
            Some(_) => return Err(SmilesError::UnknownSymbol { offset: sym_offset }),
            None => {
                return Err(SmilesError::UnclosedBracket {
                    offset: open_offset,
                })
            }
        };

        // Chirality marks are parsed and discarded.
        if self.peek() == Some('@') {
            self.bump();
            if self.peek() == Some('@') {
                self.bump();
            } else if let Some(c) = self.peek() {
                if c.is_ascii_uppercase() {
                    let class: String = self.chars[self.pos..].iter().take(2).collect();
                    if matches!(class.as_str(), "TH" | "AL" | "SP" | "TB" | "OH") {
                        self.bump();
                        self.bump();
                        while matches!(self.peek(), Some('0'..='9')) {
                            self.bump();
                        }
                    }
                }
            }
        }

        let mut hydrogens = 0u8;
        if self.peek() == Some('H') {
            self.bump();
            hydrogens = 1;
            if let Some(d @ '0'..='9') = self.peek() {
                self.bump();
                hydrogens = d.to_digit(10).unwrap() as u8;
            }
        }

        let mut charge = 0i8;
        if let Some(sign @ ('+' | '-')) = self.peek() {
            let charge_offset = self.pos;
            self.bump();
            let unit: i8 = if sign == '+' { 1 } else { -1 };
            let mut magnitude = 1i16;
            if let Some(d @ '0'..='9') = self.peek() {
                self.bump();
                magnitude = d.to_digit(10).unwrap() as i16;
                if let Some(d2 @ '0'..='9') = self.peek() {
                    self.bump();
                    magnitude = magnitude * 10 + d2.to_digit(10).unwrap() as i16;
                }
            } else {
                while self.peek() == Some(sign) {
                    self.bump();
                    magnitude += 1;
                }
            }
            if magnitude > 15 {
                return Err(SmilesError::InvalidCharge {
                    offset: charge_offset,
                });
            }
            charge = (unit as i16 * magnitude) as i8;
        }

        // Atom-class annotations are accepted and discarded.
        if self.peek() == Some(':') {
            self.bump();
            while matches!(self.peek(), Some('0'..='9')) {
                self.bump();
            }
        }

        match self.bump() {
            Some(']') => Ok(PendingAtom {
                element,
                charge,
                aromatic,
                bracket: true,
                bracket_hydrogens: hydrogens,
                offset: open_offset,
            }),
            Some(ch) => Err(SmilesError::UnexpectedChar {
                ch,
                offset: self.pos - 1,
            }),
            None => Err(SmilesError::UnclosedBracket {
                offset: open_offset,
            }),
        }
    }

    fn finish(self, source: &str, add_hydrogens: bool) -> Result<MolecularGraph, SmilesError> {
        if let Some((_, first)) = self.pending_bond {
            return Err(SmilesError::TrailingBond { offset: first });
        }
        if let Some(&(_, offset)) = self.branch_stack.last() {
            return Err(SmilesError::UnbalancedParenthesis { offset });
        }
        if let Some((&label, &(_, _, offset))) = self
            .ring_open
            .iter()
            .min_by_key(|(_, &(_, _, offset))| offset)
        {
            return Err(SmilesError::DanglingRingClosure { label, offset });
        }
        if self.atoms.is_empty() {
            return Err(SmilesError::Empty);
        }

        let mut bond_sums = vec![0u16; self.atoms.len()];
        for bond in &self.bonds {
            let contribution = bond.order.valence_contribution() as u16;
            bond_sums[bond.a] += contribution;
            bond_sums[bond.b] += contribution;
        }

        let mut atoms = Vec::with_capacity(self.atoms.len());
        for (i, pending) in self.atoms.iter().enumerate() {
            let implicit = if pending.bracket {
                // Bracket atoms carry their hydrogen count explicitly; still
                // reject impossible totals for elements with known valences.
                let valences = pending.element.allowed_valences(pending.charge);
                if let Some(&max) = valences.iter().max() {
                    let total = bond_sums[i] + pending.bracket_hydrogens as u16;
                    if total > max as u16 {
                        return Err(SmilesError::ValenceOverflow {
                            symbol: pending.element.symbol(),
                            offset: pending.offset,
                        });
                    }
                }
                pending.bracket_hydrogens
            } else {
                let effective = bond_sums[i];
                let valences = pending.element.allowed_valences(0);
                match valences.iter().find(|&&v| v as u16 >= effective) {
                    // One bond of an aromatic atom belongs to the
                    // delocalized system, so its hydrogen count drops by
                    // one, floored at zero (benzene c gets 1 H, furan o
                    // and pyridine n get none).
                    Some(&v) => {
                        let spare = v as u16 - effective;
                        if pending.aromatic {
                            spare.saturating_sub(1) as u8
                        } else {
                            spare as u8
                        }
                    }
                    None => {
                        return Err(SmilesError::ValenceOverflow {
                            symbol: pending.element.symbol(),
                            offset: pending.offset,
                        })
                    }
                }
            };
            atoms.push(Atom {
                element: pending.element,
                formal_charge: pending.charge,
                aromatic: pending.aromatic,
                implicit_hydrogens: implicit,
            });
        }

        let mut bonds = self.bonds;
        if add_hydrogens {
            let heavy = atoms.len();
            for i in 0..heavy {
                for _ in 0..atoms[i].implicit_hydrogens {
                    let h = atoms.len();
                    atoms.push(Atom {
                        element: Element::H,
                        formal_charge: 0,
                        aromatic: false,
                        implicit_hydrogens: 0,
                    });
                    bonds.push(Bond::new(i, h, BondOrder::Single));
                }
                atoms[i].implicit_hydrogens = 0;
            }
        }

        Ok(MolecularGraph::new(atoms, bonds, source.to_string())?)
    }
}

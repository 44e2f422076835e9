use std::fmt;

macro_rules! periodic_table {
    ( $(($element:ident, $symbol:literal, $number:literal),)* ) => {
        /// A chemical element, ordered by atomic number.
        #[derive(Debug, Copy, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum Element {
            $( $element, )*
        }

        impl Element {
            pub fn symbol(&self) -> &'static str {
                match self {
                    $( Element::$element => $symbol, )*
                }
            }

            pub fn atomic_number(&self) -> u8 {
                match self {
                    $( Element::$element => $number, )*
                }
            }

            pub fn from_symbol(s: &str) -> Option<Element> {
                match s {
                    $( $symbol => Some(Element::$element), )*
                    _ => None,
                }
            }
        }
    };
}

periodic_table!(
    (H, "H", 1),
    (He, "He", 2),
    (Li, "Li", 3),
    (Be, "Be", 4),
    (B, "B", 5),
    (C, "C", 6),
    (N, "N", 7),
    (O, "O", 8),
    (F, "F", 9),
    (Ne, "Ne", 10),
    (Na, "Na", 11),
    (Mg, "Mg", 12),
    (Al, "Al", 13),
    (Si, "Si", 14),
    (P, "P", 15),
    (S, "S", 16),
    (Cl, "Cl", 17),
    (Ar, "Ar", 18),
    (K, "K", 19),
    (Ca, "Ca", 20),
    (Sc, "Sc", 21),
    (Ti, "Ti", 22),
    (V, "V", 23),
    (Cr, "Cr", 24),
    (Mn, "Mn", 25),
    (Fe, "Fe", 26),
    (Co, "Co", 27),
    (Ni, "Ni", 28),
    (Cu, "Cu", 29),
    (Zn, "Zn", 30),
    (Ga, "Ga", 31),
    (Ge, "Ge", 32),
    (As, "As", 33),
    (Se, "Se", 34),
    (Br, "Br", 35),
    (Kr, "Kr", 36),
    (Rb, "Rb", 37),
    (Sr, "Sr", 38),
    (Y, "Y", 39),
    (Zr, "Zr", 40),
    (Nb, "Nb", 41),
    (Mo, "Mo", 42),
    (Tc, "Tc", 43),
    (Ru, "Ru", 44),
    (Rh, "Rh", 45),
    (Pd, "Pd", 46),
    (Ag, "Ag", 47),
    (Cd, "Cd", 48),
    (In, "In", 49),
    (Sn, "Sn", 50),
    (Sb, "Sb", 51),
    (Te, "Te", 52),
    (I, "I", 53),
    (Xe, "Xe", 54),
    (Cs, "Cs", 55),
    (Ba, "Ba", 56),
    (La, "La", 57),
    (Ce, "Ce", 58),
    (Pr, "Pr", 59),
    (Nd, "Nd", 60),
    (Pm, "Pm", 61),
    (Sm, "Sm", 62),
    (Eu, "Eu", 63),
    (Gd, "Gd", 64),
    (Tb, "Tb", 65),
    (Dy, "Dy", 66),
    (Ho, "Ho", 67),
    (Er, "Er", 68),
    (Tm, "Tm", 69),
    (Yb, "Yb", 70),
    (Lu, "Lu", 71),
    (Hf, "Hf", 72),
    (Ta, "Ta", 73),
    (W, "W", 74),
    (Re, "Re", 75),
    (Os, "Os", 76),
    (Ir, "Ir", 77),
    (Pt, "Pt", 78),
    (Au, "Au", 79),
    (Hg, "Hg", 80),
    (Tl, "Tl", 81),
    (Pb, "Pb", 82),
    (Bi, "Bi", 83),
    (Po, "Po", 84),
    (At, "At", 85),
    (Rn, "Rn", 86),
    (Fr, "Fr", 87),
    (Ra, "Ra", 88),
    (Ac, "Ac", 89),
    (Th, "Th", 90),
    (Pa, "Pa", 91),
    (U, "U", 92),
    (Np, "Np", 93),
    (Pu, "Pu", 94),
    (Am, "Am", 95),
    (Cm, "Cm", 96),
);

impl fmt::Display for Element {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl Element {
    /// Default valences used for implicit-hydrogen assignment, charge-adjusted.
    ///
    /// Covers the SMILES organic subset plus hydrogen; for every other element
    /// no default is known and an empty slice is returned, which disables both
    /// hydrogen assignment and valence checking.
    pub fn allowed_valences(&self, charge: i8) -> Vec<u8> {
        let base: &[u8] = match self {
            Element::H => &[1],
            Element::B => &[3],
            Element::C => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::P => &[3, 5],
            Element::S => &[2, 4, 6],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            _ => &[],
        };
        // Cations of N/O/P/S/halogens gain a bond, anions lose one; boron is
        // the reverse; carbon and hydrogen lose capacity in either direction.
        let shift: i16 = match self {
            Element::N
            | Element::O
            | Element::P
            | Element::S
            | Element::F
            | Element::Cl
            | Element::Br
            | Element::I => charge as i16,
            Element::B => -(charge as i16),
            Element::C | Element::H => -(charge.unsigned_abs() as i16),
            _ => 0,
        };
        base.iter()
            .map(|&v| (v as i16 + shift).max(0) as u8)
            .collect()
    }

    /// True for elements that may be written lowercase (aromatic) in SMILES.
    pub fn supports_aromatic(&self) -> bool {
        matches!(
            self,
            Element::B
                | Element::C
                | Element::N
                | Element::O
                | Element::P
                | Element::S
                | Element::Se
                | Element::As
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_round_trip() {
        for e in [Element::H, Element::C, Element::Cl, Element::Br, Element::U] {
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
        }
        assert_eq!(Element::from_symbol("Xx"), None);
    }

    #[test]
    fn charge_adjusted_valences() {
        assert_eq!(Element::N.allowed_valences(0), vec![3]);
        assert_eq!(Element::N.allowed_valences(1), vec![4]);
        assert_eq!(Element::N.allowed_valences(-1), vec![2]);
        assert_eq!(Element::C.allowed_valences(1), vec![3]);
        assert_eq!(Element::C.allowed_valences(-1), vec![3]);
        assert_eq!(Element::B.allowed_valences(-1), vec![4]);
        assert_eq!(Element::O.allowed_valences(-1), vec![1]);
        assert_eq!(Element::S.allowed_valences(0), vec![2, 4, 6]);
        assert!(Element::Fe.allowed_valences(2).is_empty());
    }
}

//! Pauli-string observables, the Hamiltonian text format, and qubit-wise
//! commuting grouping.
//!
//! Text format: one term per line, `<coefficient> <label>`, labels over
//! `IXYZ` with qubit 0 as the leftmost character. `#` starts a comment and
//! blank lines are ignored. Duplicate labels are merged by summing their
//! coefficients.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum Pauli {
    I = 0,
    X = 1,
    Y = 2,
    Z = 3,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Row index into a dual table (`I, X, Y, Z` order).
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }
}

/// Tensor product of single-qubit Paulis; entry `i` acts on qubit `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PauliString(Vec<Pauli>);

impl PauliString {
    pub fn new(labels: Vec<Pauli>) -> Self {
        Self(labels)
    }

    pub fn identity(num_qubits: usize) -> Self {
        Self(vec![Pauli::I; num_qubits])
    }

    pub fn labels(&self) -> &[Pauli] {
        &self.0
    }

    pub fn num_qubits(&self) -> usize {
        self.0.len()
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.0.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn is_identity(&self) -> bool {
        self.weight() == 0
    }

    /// Bit masks `(x, z)` of the symplectic representation; `Y` sets both.
    /// Only valid for strings of at most 64 qubits.
    pub fn masks(&self) -> (u64, u64) {
        let mut x = 0u64;
        let mut z = 0u64;
        for (q, p) in self.0.iter().enumerate() {
            match p {
                Pauli::I => {}
                Pauli::X => x |= 1 << q,
                Pauli::Y => {
                    x |= 1 << q;
                    z |= 1 << q;
                }
                Pauli::Z => z |= 1 << q,
            }
        }
        (x, z)
    }

    /// Qubit-wise compatibility: equal or identity at every position.
    pub fn qubitwise_compatible(&self, other: &PauliString) -> bool {
        self.0
            .iter()
            .zip(&other.0)
            .all(|(&a, &b)| a == Pauli::I || b == Pauli::I || a == b)
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.0 {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                Pauli::from_char(c).ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: format!("invalid Pauli label character {c:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliString)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub string: PauliString,
}

/// Real linear combination of Pauli strings with no duplicate strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauliObservable {
    num_qubits: usize,
    terms: Vec<PauliTerm>,
}

impl PauliObservable {
    /// Build from `(coefficient, string)` pairs, merging duplicates in order
    /// of first appearance.
    pub fn new(num_qubits: usize, terms: impl IntoIterator<Item = (f64, PauliString)>) -> Result<Self> {
        let mut merged: Vec<PauliTerm> = Vec::new();
        let mut seen: HashMap<PauliString, usize> = HashMap::new();
        for (coeff, string) in terms {
            if string.num_qubits() != num_qubits {
                return Err(Error::DimensionMismatch {
                    expected: num_qubits,
                    got: string.num_qubits(),
                });
            }
            if !coeff.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite coefficient for {string}")));
            }
            match seen.get(&string) {
                Some(&i) => merged[i].coeff += coeff,
                None => {
                    seen.insert(string.clone(), merged.len());
                    merged.push(PauliTerm { coeff, string });
                }
            }
        }
        if merged.is_empty() {
            return Err(Error::EmptyObservable);
        }
        Ok(Self { num_qubits, terms: merged })
    }

    /// Convenience constructor from `(coefficient, "label")` pairs.
    pub fn from_labels(terms: &[(f64, &str)]) -> Result<Self> {
        let parsed = terms
            .iter()
            .map(|(c, l)| Ok((*c, l.parse::<PauliString>()?)))
            .collect::<Result<Vec<_>>>()?;
        let n = parsed.first().map(|(_, s)| s.num_qubits()).ok_or(Error::EmptyObservable)?;
        Self::new(n, parsed)
    }

    /// `c · I^{⊗n}`.
    pub fn scaled_identity(num_qubits: usize, c: f64) -> Self {
        Self {
            num_qubits,
            terms: vec![PauliTerm { coeff: c, string: PauliString::identity(num_qubits) }],
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of identity-term coefficients.
    pub fn constant_offset(&self) -> f64 {
        self.terms.iter().filter(|t| t.string.is_identity()).map(|t| t.coeff).sum()
    }

    /// Terms with at least one non-identity factor.
    pub fn non_identity_terms(&self) -> impl Iterator<Item = &PauliTerm> {
        self.terms.iter().filter(|t| !t.string.is_identity())
    }

    pub fn is_constant(&self) -> bool {
        self.non_identity_terms().all(|t| t.coeff == 0.0)
    }

    /// Serialize in the text format accepted by [`parse_observable`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.terms {
            // `{:?}` prints the shortest representation that round-trips.
            out.push_str(&format!("{:?} {}\n", t.coeff, t.string));
        }
        out
    }
}

pub fn parse_observable(text: &str) -> Result<PauliObservable> {
    let mut terms = Vec::new();
    let mut width: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let coeff_str = parts.next().unwrap_or_default();
        let label = parts.next().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `<coefficient> <label>`".into(),
        })?;
        if parts.next().is_some() {
            return Err(Error::Parse { line: line_no, msg: "trailing tokens".into() });
        }
        let coeff: f64 = coeff_str.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("malformed coefficient {coeff_str:?}"),
        })?;
        let string: PauliString = label.parse().map_err(|e| match e {
            Error::Parse { msg, .. } => Error::Parse { line: line_no, msg },
            other => other,
        })?;
        match width {
            None => width = Some(string.num_qubits()),
            Some(w) if w != string.num_qubits() => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("label length {} differs from {}", string.num_qubits(), w),
                })
            }
            _ => {}
        }
        terms.push((coeff, string));
    }
    let n = width.ok_or(Error::EmptyObservable)?;
    PauliObservable::new(n, terms)
}

/// Measurement setting for one qubit in a grouped-Pauli basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BasisLabel {
    X,
    Y,
    Z,
    /// No member string acts on this qubit.
    Free,
}

impl BasisLabel {
    pub fn from_pauli(p: Pauli) -> Self {
        match p {
            Pauli::I => BasisLabel::Free,
            Pauli::X => BasisLabel::X,
            Pauli::Y => BasisLabel::Y,
            Pauli::Z => BasisLabel::Z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliGroup {
    /// Indices into [`PauliObservable::terms`].
    pub members: Vec<usize>,
    pub basis: Vec<BasisLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauliGrouping {
    pub groups: Vec<PauliGroup>,
}

impl PauliGrouping {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Greedy first-fit partition of the non-identity terms into qubit-wise
/// commuting groups. Terms are visited by descending `|c|` (stable for ties).
/// Identity terms are not measured and belong to no group.
pub fn group_qubitwise(obs: &PauliObservable) -> PauliGrouping {
    let mut order: Vec<usize> = (0..obs.len())
        .filter(|&i| !obs.terms()[i].string.is_identity())
        .collect();
    order.sort_by(|&a, &b| {
        obs.terms()[b]
            .coeff
            .abs()
            .partial_cmp(&obs.terms()[a].coeff.abs())
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let n = obs.num_qubits();
    let mut groups: Vec<PauliGroup> = Vec::new();
    for idx in order {
        let labels = obs.terms()[idx].string.labels();
        let fits = |g: &PauliGroup| {
            g.basis.iter().zip(labels).all(|(b, &p)| {
                p == Pauli::I || *b == BasisLabel::Free || *b == BasisLabel::from_pauli(p)
            })
        };
        match groups.iter_mut().find(|g| fits(g)) {
            Some(g) => {
                g.members.push(idx);
                for (b, &p) in g.basis.iter_mut().zip(labels) {
                    if p != Pauli::I {
                        *b = BasisLabel::from_pauli(p);
                    }
                }
            }
            None => groups.push(PauliGroup {
                members: vec![idx],
                basis: (0..n).map(|q| BasisLabel::from_pauli(labels[q])).collect(),
            }),
        }
    }
    PauliGrouping { groups }
}

/// Transverse-field Ising chain `-J Σ Z_i Z_{i+1} - h Σ X_i`.
pub fn transverse_field_ising(n: usize, coupling: f64, field: f64, periodic: bool) -> Result<PauliObservable> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one qubit".into()));
    }
    let mut terms = Vec::new();
    for (a, b) in chain_bonds(n, periodic) {
        terms.push((-coupling, two_site(n, a, b, Pauli::Z)));
    }
    for i in 0..n {
        let mut l = vec![Pauli::I; n];
        l[i] = Pauli::X;
        terms.push((-field, PauliString::new(l)));
    }
    PauliObservable::new(n, terms)
}

/// Heisenberg XXZ chain `J Σ (X X + Y Y + Δ Z Z)`.
pub fn heisenberg(n: usize, coupling: f64, anisotropy: f64, periodic: bool) -> Result<PauliObservable> {
    if n < 2 {
        return Err(Error::InvalidArgument("Heisenberg chain needs at least two qubits".into()));
    }
    let mut terms = Vec::new();
    for (a, b) in chain_bonds(n, periodic) {
        terms.push((coupling, two_site(n, a, b, Pauli::X)));
        terms.push((coupling, two_site(n, a, b, Pauli::Y)));
        terms.push((coupling * anisotropy, two_site(n, a, b, Pauli::Z)));
    }
    PauliObservable::new(n, terms)
}

fn chain_bonds(n: usize, periodic: bool) -> Vec<(usize, usize)> {
    let mut bonds: Vec<_> = (0..n.saturating_sub(1)).map(|i| (i, i + 1)).collect();
    if periodic && n > 2 {
        bonds.push((n - 1, 0));
    }
    bonds
}

fn two_site(n: usize, a: usize, b: usize, p: Pauli) -> PauliString {
    let mut l = vec![Pauli::I; n];
    l[a] = p;
    l[b] = p;
    PauliString::new(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_terms() {
        let o = parse_observable("1.0 ZZ\n-0.5 XI").unwrap();
        assert_eq!(o.num_qubits(), 2);
        assert_eq!(o.len(), 2);
        assert_eq!(o.terms()[1].coeff, -0.5);
        assert_eq!(o.terms()[1].string.to_string(), "XI");
    }

    #[test]
    fn merges_duplicates() {
        let o = parse_observable("0.5 Z\n0.5 Z").unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o.terms()[0].coeff, 1.0);
    }

    #[test]
    fn rejects_inconsistent_lengths() {
        let err = parse_observable("1.0 ZZ\n1.0 XYZ").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_bad_coefficient_and_empty() {
        assert!(matches!(parse_observable("abc ZZ"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_observable("# nothing\n\n"), Err(Error::EmptyObservable)));
        assert!(matches!(parse_observable("1.0 ZQ"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn comments_and_blank_lines() {
        let o = parse_observable("# header\n\n  2.0 XZ  # trailing\n").unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o.terms()[0].coeff, 2.0);
    }

    #[test]
    fn weight_and_masks() {
        let s: PauliString = "IXYZ".parse().unwrap();
        assert_eq!(s.weight(), 3);
        assert_eq!(s.masks(), (0b0110, 0b1100));
        assert_eq!(PauliString::identity(5).weight(), 0);
    }

    #[test]
    fn grouping_all_compatible() {
        let o = PauliObservable::from_labels(&[(1.0, "ZZ"), (0.5, "ZI"), (0.25, "IZ")]).unwrap();
        let g = group_qubitwise(&o);
        assert_eq!(g.len(), 1);
        assert_eq!(g.groups[0].basis, vec![BasisLabel::Z, BasisLabel::Z]);
    }

    #[test]
    fn grouping_incompatible() {
        let o = PauliObservable::from_labels(&[(1.0, "ZZ"), (1.0, "XX")]).unwrap();
        assert_eq!(group_qubitwise(&o).len(), 2);
    }

    /// Smallest number of qubit-wise commuting cliques, by enumerating all
    /// set partitions.
    fn brute_force_min_groups(strings: &[PauliString]) -> usize {
        fn rec(i: usize, strings: &[PauliString], parts: &mut Vec<Vec<usize>>, best: &mut usize) {
            if parts.len() >= *best {
                return;
            }
            if i == strings.len() {
                *best = parts.len();
                return;
            }
            for p in 0..parts.len() {
                if parts[p].iter().all(|&j| strings[j].qubitwise_compatible(&strings[i])) {
                    parts[p].push(i);
                    rec(i + 1, strings, parts, best);
                    parts[p].pop();
                }
            }
            parts.push(vec![i]);
            rec(i + 1, strings, parts, best);
            parts.pop();
        }
        let mut best = usize::MAX;
        rec(0, strings, &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn grouping_four_term_instance_is_optimal() {
        let o = PauliObservable::from_labels(&[(1.0, "XI"), (1.0, "IZ"), (1.0, "XZ"), (1.0, "YY")]).unwrap();
        let g = group_qubitwise(&o);
        let strings: Vec<_> = o.terms().iter().map(|t| t.string.clone()).collect();
        assert_eq!(brute_force_min_groups(&strings), 2);
        assert_eq!(g.len(), 2);
        assert_eq!(g.groups[0].members, vec![0, 1, 2]);
        assert_eq!(g.groups[1].members, vec![3]);
    }

    #[test]
    fn grouping_skips_identity() {
        let o = PauliObservable::from_labels(&[(3.0, "II"), (1.0, "ZI")]).unwrap();
        let g = group_qubitwise(&o);
        assert_eq!(g.len(), 1);
        assert_eq!(g.groups[0].members, vec![1]);
        assert_eq!(o.constant_offset(), 3.0);
    }

    #[test]
    fn generators() {
        let t = transverse_field_ising(4, 1.0, 0.5, false).unwrap();
        assert_eq!(t.len(), 7);
        let p = transverse_field_ising(4, 1.0, 0.5, true).unwrap();
        assert_eq!(p.len(), 8);
        let h = heisenberg(3, 1.0, 1.0, false).unwrap();
        assert_eq!(h.len(), 6);
    }

    fn arb_observable() -> impl Strategy<Value = PauliObservable> {
        (1usize..6).prop_flat_map(|n| {
            prop::collection::vec(
                (-10.0f64..10.0, prop::collection::vec(0u8..4, n)),
                1..12,
            )
            .prop_map(move |raw| {
                let terms = raw.into_iter().map(|(c, l)| {
                    (c, PauliString::new(l.into_iter().map(|i| Pauli::ALL[i as usize]).collect()))
                });
                PauliObservable::new(n, terms).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(o in arb_observable()) {
            prop_assert_eq!(parse_observable(&o.to_text()).unwrap(), o);
        }

        #[test]
        fn grouping_is_valid_partition(o in arb_observable()) {
            let g = group_qubitwise(&o);
            let mut seen = vec![0usize; o.len()];
            for grp in &g.groups {
                for q in 0..o.num_qubits() {
                    let mut labels: Vec<Pauli> = grp.members.iter()
                        .map(|&i| o.terms()[i].string.labels()[q])
                        .filter(|&p| p != Pauli::I)
                        .collect();
                    labels.dedup();
                    labels.sort();
                    labels.dedup();
                    prop_assert!(labels.len() <= 1);
                }
                for &m in &grp.members { seen[m] += 1; }
            }
            for (i, t) in o.terms().iter().enumerate() {
                prop_assert_eq!(seen[i], usize::from(!t.string.is_identity()));
            }
            prop_assert!(g.len() <= o.len());
        }
    }
}

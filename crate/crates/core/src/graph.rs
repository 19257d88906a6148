//! Signed directed interaction state and balance predicates.
//!
//! An [`InteractionMatrix`] holds `s_ij` for every ordered pair of distinct
//! agents. The diagonal is not stored: a self-interaction is undefined, which
//! is different from being neutral.

use std::fmt;
use std::ops::{Index, Mul, Neg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ternary interaction value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Negative,
    Neutral,
    Positive,
}

impl Sign {
    pub const ALL: [Sign; 3] = [Sign::Negative, Sign::Neutral, Sign::Positive];
    /// Values permitted at initialization.
    pub const SIGNED: [Sign; 2] = [Sign::Negative, Sign::Positive];

    pub fn value(self) -> i8 {
        match self {
            Sign::Negative => -1,
            Sign::Neutral => 0,
            Sign::Positive => 1,
        }
    }

    pub fn from_value(v: i64) -> Result<Sign> {
        match v {
            -1 => Ok(Sign::Negative),
            0 => Ok(Sign::Neutral),
            1 => Ok(Sign::Positive),
            other => Err(Error::InvalidSign(other)),
        }
    }

    /// Sign of an integer sum; zero maps to `Neutral`.
    pub fn of_sum(sum: i64) -> Sign {
        match sum.signum() {
            1 => Sign::Positive,
            -1 => Sign::Negative,
            _ => Sign::Neutral,
        }
    }

    /// Word used when the sign is shown to an agent.
    pub fn word(self) -> &'static str {
        match self {
            Sign::Negative => "negative",
            Sign::Neutral => "neutral",
            Sign::Positive => "positive",
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Negative => '-',
            Sign::Neutral => '0',
            Sign::Positive => '+',
        }
    }

    pub fn is_neutral(self) -> bool {
        self == Sign::Neutral
    }
}

impl Mul for Sign {
    type Output = Sign;

    fn mul(self, rhs: Sign) -> Sign {
        Sign::of_sum(i64::from(self.value() * rhs.value()))
    }
}

impl Neg for Sign {
    type Output = Sign;

    fn neg(self) -> Sign {
        Sign::of_sum(-i64::from(self.value()))
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        s.value()
    }
}

impl TryFrom<i8> for Sign {
    type Error = Error;

    fn try_from(v: i8) -> Result<Sign> {
        Sign::from_value(i64::from(v))
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.word())
    }
}

/// Directed signed interactions among `m` agents at a single iteration.
///
/// Entries are stored in canonical order: `(0,1), (0,2), …, (0,m-1), (1,0),
/// (1,2), …`, i.e. row-major with the diagonal skipped.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix")]
pub struct InteractionMatrix {
    m: usize,
    entries: Vec<Sign>,
}

#[derive(Deserialize)]
struct RawMatrix {
    m: usize,
    entries: Vec<Sign>,
}

impl TryFrom<RawMatrix> for InteractionMatrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        InteractionMatrix::from_entries(raw.m, raw.entries)
    }
}

impl InteractionMatrix {
    pub fn from_entries(m: usize, entries: Vec<Sign>) -> Result<Self> {
        if m < 3 {
            return Err(Error::PopulationTooSmall(m));
        }
        let expected = m * (m - 1);
        if entries.len() != expected {
            return Err(Error::EntryCount {
                m,
                expected,
                got: entries.len(),
            });
        }
        Ok(InteractionMatrix { m, entries })
    }

    pub fn uniform(m: usize, sign: Sign) -> Result<Self> {
        Self::from_fn(m, |_, _| sign)
    }

    /// Builds a matrix by evaluating `f(i, j)` for every ordered pair, in canonical order.
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> Sign) -> Result<Self> {
        if m < 3 {
            return Err(Error::PopulationTooSmall(m));
        }
        let entries = ordered_pairs(m).map(|(i, j)| f(i, j)).collect();
        Ok(InteractionMatrix { m, entries })
    }

    /// Builds a symmetric matrix where `dyad(i, j)` (with `i < j`) sets both directions.
    pub fn symmetric_from_fn(m: usize, mut dyad: impl FnMut(usize, usize) -> Sign) -> Result<Self> {
        Self::from_fn(m, |i, j| if i < j { dyad(i, j) } else { dyad(j, i) })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Entries in canonical order.
    pub fn entries(&self) -> &[Sign] {
        &self.entries
    }

    /// `(i, j, s_ij)` for every ordered pair, in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Sign)> + '_ {
        ordered_pairs(self.m).zip(self.entries.iter().copied()).map(|((i, j), s)| (i, j, s))
    }

    fn offset(&self, i: usize, j: usize) -> Result<usize> {
        for index in [i, j] {
            if index >= self.m {
                return Err(Error::IndexOutOfRange { index, m: self.m });
            }
        }
        if i == j {
            return Err(Error::SelfInteraction(i));
        }
        Ok(i * (self.m - 1) + if j < i { j } else { j - 1 })
    }

    /// `s_ij`, or `None` for a self-interaction or an out-of-range index.
    pub fn get(&self, i: usize, j: usize) -> Option<Sign> {
        self.offset(i, j).ok().map(|o| self.entries[o])
    }

    pub fn try_get(&self, i: usize, j: usize) -> Result<Sign> {
        self.offset(i, j).map(|o| self.entries[o])
    }

    pub fn set(&mut self, i: usize, j: usize, sign: Sign) -> Result<()> {
        let o = self.offset(i, j)?;
        self.entries[o] = sign;
        Ok(())
    }

    pub fn has_neutral(&self) -> bool {
        self.entries.iter().any(|s| s.is_neutral())
    }

    /// Rejects matrices that are not valid initial states.
    pub fn check_initial(&self) -> Result<()> {
        match self.iter().find(|(_, _, s)| s.is_neutral()) {
            Some((i, j, _)) => Err(Error::NeutralAtInit(i, j)),
            None => Ok(()),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().filter(|(i, j, _)| i < j).all(|(i, j, s)| self[(j, i)] == s)
    }

    /// `s_ij · s_jk · s_ki`.
    pub fn cycle_product(&self, i: usize, j: usize, k: usize) -> Result<Sign> {
        if i == j || j == k || i == k {
            return Err(Error::DegenerateTriad(i, j, k));
        }
        Ok(self.try_get(i, j)? * self.try_get(j, k)? * self.try_get(k, i)?)
    }

    pub fn triad(&self, i: usize, j: usize, k: usize) -> Result<TriadView> {
        let mut idx = [i, j, k];
        idx.sort_unstable();
        let [a, b, c] = idx;
        if a == b || b == c {
            return Err(Error::DegenerateTriad(i, j, k));
        }
        Ok(TriadView {
            indices: idx,
            signs: [
                self.try_get(a, b)?,
                self.try_get(a, c)?,
                self.try_get(b, a)?,
                self.try_get(b, c)?,
                self.try_get(c, a)?,
                self.try_get(c, b)?,
            ],
        })
    }

    /// All `C(m,3)` triads in lexicographic order.
    pub fn triads(&self) -> impl Iterator<Item = TriadView> + '_ {
        triad_indices(self.m).map(move |[i, j, k]| {
            self.triad(i, j, k).expect("lexicographic triad indices are valid")
        })
    }

    /// Symmetric, neutral-free, and every triad has a positive cycle product.
    pub fn is_structurally_balanced(&self) -> bool {
        self.is_symmetric()
            && !self.has_neutral()
            && self.triads().all(|t| t.cycle_product() == Sign::Positive)
    }

    /// Like structural balance, but all-negative triads are also admitted.
    pub fn is_clustering_balanced(&self) -> bool {
        self.is_symmetric()
            && !self.has_neutral()
            && self
                .triads()
                .all(|t| t.cycle_product() == Sign::Positive || t.is_all_negative())
    }

    pub fn edge_and_cycle_counts(&self) -> EdgeCycleCounts {
        let positive_edges = self.entries.iter().filter(|s| **s == Sign::Positive).count();
        let negative_edges = self.entries.iter().filter(|s| **s == Sign::Negative).count();
        let positive_cycles = triad_indices(self.m)
            .map(|[i, j, k]| {
                let forward = self[(i, j)] * self[(j, k)] * self[(k, i)];
                let backward = self[(i, k)] * self[(k, j)] * self[(j, i)];
                [forward, backward].iter().filter(|s| **s == Sign::Positive).count()
            })
            .sum();
        EdgeCycleCounts {
            positive_edges,
            negative_edges,
            positive_cycles,
        }
    }

    /// Compact `+`/`-`/`0` rendering of the entries in canonical order.
    pub fn compact(&self) -> String {
        self.entries.iter().map(|s| s.symbol()).collect()
    }
}

impl Index<(usize, usize)> for InteractionMatrix {
    type Output = Sign;

    /// Panics on a self-interaction or an out-of-range index.
    fn index(&self, (i, j): (usize, usize)) -> &Sign {
        match self.offset(i, j) {
            Ok(o) => &self.entries[o],
            Err(e) => panic!("{e}"),
        }
    }
}

impl fmt::Display for InteractionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.m {
            for j in 0..self.m {
                let c = if i == j { '.' } else { self[(i, j)].symbol() };
                write!(f, "{c}")?;
            }
            if i + 1 < self.m {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCycleCounts {
    pub positive_edges: usize,
    pub negative_edges: usize,
    /// Directed 3-cycles (both orientations of every triad) with product +1.
    pub positive_cycles: usize,
}

/// The six directed signs among agents `i < j < k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TriadView {
    indices: [usize; 3],
    // order: ij, ik, ji, jk, ki, kj
    signs: [Sign; 6],
}

impl TriadView {
    pub fn indices(&self) -> [usize; 3] {
        self.indices
    }

    /// Directed sign between two members of the triad, by position (0, 1, 2).
    pub fn sign(&self, from: usize, to: usize) -> Sign {
        match (from, to) {
            (0, 1) => self.signs[0],
            (0, 2) => self.signs[1],
            (1, 0) => self.signs[2],
            (1, 2) => self.signs[3],
            (2, 0) => self.signs[4],
            (2, 1) => self.signs[5],
            _ => panic!("invalid triad positions ({from}, {to})"),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.sign(0, 1) == self.sign(1, 0)
            && self.sign(1, 2) == self.sign(2, 1)
            && self.sign(2, 0) == self.sign(0, 2)
    }

    pub fn has_neutral(&self) -> bool {
        self.signs.iter().any(|s| s.is_neutral())
    }

    /// `(s_ij, s_jk, s_ki)`.
    pub fn cycle(&self) -> (Sign, Sign, Sign) {
        (self.sign(0, 1), self.sign(1, 2), self.sign(2, 0))
    }

    pub fn cycle_product(&self) -> Sign {
        let (a, b, c) = self.cycle();
        a * b * c
    }

    fn is_all_negative(&self) -> bool {
        let (a, b, c) = self.cycle();
        [a, b, c].iter().all(|s| *s == Sign::Negative)
    }

    pub fn is_clustering_balanced(&self) -> bool {
        self.is_symmetric()
            && !self.has_neutral()
            && (self.cycle_product() == Sign::Positive || self.is_all_negative())
    }

    pub fn balanced_class(&self) -> Option<BalancedTriadClass> {
        if !self.is_clustering_balanced() {
            return None;
        }
        let (a, b, c) = self.cycle();
        BalancedTriadClass::from_dyads(a, b, c)
    }
}

/// The five balanced triad configurations, keyed by `(s_ij, s_jk, s_ki)` on
/// symmetric dyads. The first four are structurally balanced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BalancedTriadClass {
    MinusMinusPlus,
    MinusPlusMinus,
    PlusMinusMinus,
    AllPlus,
    AllMinus,
}

impl BalancedTriadClass {
    pub const ALL: [BalancedTriadClass; 5] = [
        BalancedTriadClass::MinusMinusPlus,
        BalancedTriadClass::MinusPlusMinus,
        BalancedTriadClass::PlusMinusMinus,
        BalancedTriadClass::AllPlus,
        BalancedTriadClass::AllMinus,
    ];

    pub fn dyads(self) -> (Sign, Sign, Sign) {
        use Sign::{Negative as N, Positive as P};
        match self {
            BalancedTriadClass::MinusMinusPlus => (N, N, P),
            BalancedTriadClass::MinusPlusMinus => (N, P, N),
            BalancedTriadClass::PlusMinusMinus => (P, N, N),
            BalancedTriadClass::AllPlus => (P, P, P),
            BalancedTriadClass::AllMinus => (N, N, N),
        }
    }

    pub fn from_dyads(a: Sign, b: Sign, c: Sign) -> Option<Self> {
        Self::ALL.into_iter().find(|class| class.dyads() == (a, b, c))
    }

    pub fn is_structural(self) -> bool {
        self != BalancedTriadClass::AllMinus
    }

    /// Position in [`BalancedTriadClass::ALL`].
    pub fn bin(self) -> usize {
        self as usize
    }

    /// `(-,-,+)` style label.
    pub fn label(self) -> String {
        let (a, b, c) = self.dyads();
        format!("({},{},{})", a.symbol(), b.symbol(), c.symbol())
    }

    /// The symmetric three-agent matrix with this configuration.
    pub fn matrix(self) -> InteractionMatrix {
        let (a, b, c) = self.dyads();
        InteractionMatrix::symmetric_from_fn(3, |i, j| match (i, j) {
            (0, 1) => a,
            (1, 2) => b,
            _ => c,
        })
        .expect("three agents")
    }
}

impl fmt::Display for BalancedTriadClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

fn ordered_pairs(m: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..m).flat_map(move |i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
}

fn triad_indices(m: usize) -> impl Iterator<Item = [usize; 3]> {
    (0..m).flat_map(move |i| {
        (i + 1..m).flat_map(move |j| (j + 1..m).map(move |k| [i, j, k]))
    })
}

/// All unordered triples `i < j < k` in lexicographic order.
pub fn enumerate_triads(m: usize) -> Result<Vec<[usize; 3]>> {
    if m < 3 {
        return Err(Error::PopulationTooSmall(m));
    }
    Ok(triad_indices(m).collect())
}

pub const TRIAD_INITIALIZATIONS: usize = 64;

/// The three-agent initial state with the given index (`0..64`).
///
/// Entry `e` in canonical order `(0,1), (0,2), (1,0), (1,2), (2,0), (2,1)`
/// reads bit `5 - e` of the index, so the binary spelling of the index lists
/// the entries left to right. A clear bit is `-1`, a set bit `+1`: index 0 is
/// all-negative and index 63 all-positive.
pub fn triad_initialization(index: usize) -> Option<InteractionMatrix> {
    if index >= TRIAD_INITIALIZATIONS {
        return None;
    }
    let entries = (0..6)
        .map(|e| {
            if index >> (5 - e) & 1 == 1 {
                Sign::Positive
            } else {
                Sign::Negative
            }
        })
        .collect();
    Some(InteractionMatrix { m: 3, entries })
}

/// Inverse of [`triad_initialization`]; `None` for anything but a neutral-free 3-agent matrix.
pub fn initialization_index(matrix: &InteractionMatrix) -> Option<usize> {
    if matrix.m != 3 || matrix.has_neutral() {
        return None;
    }
    Some(
        matrix
            .entries
            .iter()
            .fold(0, |acc, s| acc << 1 | usize::from(*s == Sign::Positive)),
    )
}

pub fn enumerate_triad_initializations() -> Vec<InteractionMatrix> {
    (0..TRIAD_INITIALIZATIONS)
        .map(|i| triad_initialization(i).expect("index in range"))
        .collect()
}

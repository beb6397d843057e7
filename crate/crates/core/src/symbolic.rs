//! Golden-mean shift on three symbols: admissible words, circle cylinders,
//! the left-to-right order on words, and the boundary coupling words.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::{FieldElement, GoldenInt, Real};

/// Adjacency matrix, rows and columns indexed by symbols 1, 2, 3.
pub const ADJACENCY: [[u8; 3]; 3] = [[1, 0, 1], [1, 0, 1], [0, 1, 0]];

/// Symbols in geometric (left-to-right) order.
pub const SYMBOLS_IN_ORDER: [u8; 3] = [1, 3, 2];

pub fn allowed(a: u8, b: u8) -> bool {
    ADJACENCY[(a - 1) as usize][(b - 1) as usize] == 1
}

/// Successors of `a` listed left to right.
pub fn successors(a: u8) -> &'static [u8] {
    match a {
        1 | 2 => &[1, 3],
        3 => &[2],
        _ => &[],
    }
}

fn rank(s: u8) -> u8 {
    match s {
        1 => 0,
        3 => 1,
        _ => 2,
    }
}

/// A nonempty admissible word over {1, 2, 3}.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::NotAdmissible("empty word".into()));
        }
        if let Some(s) = symbols.iter().find(|s| !(1..=3).contains(*s)) {
            return Err(Error::NotAdmissible(format!("symbol {s} outside {{1,2,3}}")));
        }
        for (i, pair) in symbols.windows(2).enumerate() {
            if !allowed(pair[0], pair[1]) {
                return Err(Error::NotAdmissible(format!(
                    "transition {}->{} at position {}",
                    pair[0],
                    pair[1],
                    i + 1
                )));
            }
        }
        Ok(Word(symbols))
    }

    pub(crate) fn from_vec_unchecked(symbols: Vec<u8>) -> Self {
        Word(symbols)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last(&self) -> u8 {
        *self.0.last().expect("words are nonempty")
    }

    /// Symbol at 1-based position `i`.
    pub fn at(&self, i: usize) -> u8 {
        self.0[i - 1]
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n].to_vec())
    }

    pub fn extended(&self, s: u8) -> Result<Word> {
        let mut v = self.0.clone();
        v.push(s);
        Word::new(v)
    }

    pub fn shifted(&self) -> Option<Word> {
        (self.0.len() > 1).then(|| Word(self.0[1..].to_vec()))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({self})")
    }
}

impl FromStr for Word {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Parse(format!("bad word `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        Word::new(symbols)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// The three Markov intervals as `[lo, hi)` in Z[phi].
pub fn partition_interval(s: u8) -> (GoldenInt, GoldenInt) {
    let inv2 = GoldenInt::inv_phi_pow(2);
    let inv1 = GoldenInt::inv_phi_pow(1);
    match s {
        1 => (GoldenInt::ZERO, inv2),
        3 => (inv2, inv1),
        2 => (inv1, GoldenInt::ONE),
        _ => panic!("symbol {s} outside {{1,2,3}}"),
    }
}

/// A cylinder `[lo, hi)` of the circle together with its word.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cylinder {
    pub word: Word,
    pub lo: GoldenInt,
    pub hi: GoldenInt,
}

impl Cylinder {
    pub fn lo_field(&self) -> FieldElement {
        self.lo.to_field()
    }

    pub fn hi_field(&self) -> FieldElement {
        self.hi.to_field()
    }

    pub fn length(&self) -> GoldenInt {
        self.hi - self.lo
    }

    pub fn depth(&self) -> usize {
        self.word.len()
    }

    pub fn contains<R: Real>(&self, x: &R) -> bool {
        R::from_golden(self.lo) <= *x && *x < R::from_golden(self.hi)
    }

    /// The children cylinders, left to right.
    pub fn children(&self) -> Vec<Cylinder> {
        child_cylinders(&self.word, self.lo, self.hi)
    }
}

/// Children of `[lo, hi)` coded by `word`, left to right.
///
/// After symbol 3 the only continuation is 2 (same interval). After 1 or 2 the
/// interval splits at `lo + |C|/phi` into the `1` and `3` children.
pub(crate) fn child_cylinders(word: &Word, lo: GoldenInt, hi: GoldenInt) -> Vec<Cylinder> {
    let ext = |s: u8| {
        let mut v = word.0.clone();
        v.push(s);
        Word(v)
    };
    match word.last() {
        3 => vec![Cylinder { word: ext(2), lo, hi }],
        _ => {
            let mid = lo + (hi - lo).div_phi();
            vec![Cylinder { word: ext(1), lo, hi: mid }, Cylinder { word: ext(3), lo: mid, hi }]
        }
    }
}

/// Split point between the `1` and `3` children of an interval (meaningful
/// when the last symbol is 1 or 2).
pub(crate) fn split_point(lo: GoldenInt, hi: GoldenInt) -> GoldenInt {
    lo + (hi - lo).div_phi()
}

/// Exact cylinder of an admissible word.
pub fn cylinder_of(word: &Word) -> Result<Cylinder> {
    let w = Word::new(word.0.clone())?;
    // Compose inverse branches right to left: T_1 = T_3 = x/phi, T_2 = (x+1)/phi.
    let (mut lo, mut hi) = partition_interval(w.last());
    for &s in w.0.iter().rev().skip(1) {
        let shift = if s == 2 { GoldenInt::ONE } else { GoldenInt::ZERO };
        lo = (lo + shift).div_phi();
        hi = (hi + shift).div_phi();
    }
    Ok(Cylinder { word: w, lo, hi })
}

/// All admissible words of length `n`, left to right.
pub fn enumerate_words(n: usize) -> Vec<Word> {
    let mut out = Vec::new();
    for_each_cylinder(n, |c| out.push(c.word.clone()));
    out
}

/// All cylinders of depth `n`, left to right.
pub fn enumerate_cylinders(n: usize) -> Vec<Cylinder> {
    let mut out = Vec::new();
    for_each_cylinder(n, |c| out.push(c.clone()));
    out
}

/// Depth-first visit of the depth-`n` cylinders in order.
pub fn for_each_cylinder(n: usize, mut f: impl FnMut(&Cylinder)) {
    if n == 0 {
        return;
    }
    fn rec(c: &Cylinder, n: usize, f: &mut dyn FnMut(&Cylinder)) {
        if c.depth() == n {
            f(c);
            return;
        }
        for child in c.children() {
            rec(&child, n, f);
        }
    }
    for s in SYMBOLS_IN_ORDER {
        let (lo, hi) = partition_interval(s);
        rec(&Cylinder { word: Word(vec![s]), lo, hi }, n, &mut f);
    }
}

/// Number of admissible words of length `n`.
pub fn word_count(n: usize) -> u128 {
    // words ending in 1, 2, 3
    let (mut e1, mut e2, mut e3) = (1u128, 1u128, 1u128);
    if n == 0 {
        return 0;
    }
    for _ in 1..n {
        let n1 = e1 + e2;
        let n3 = e1 + e2;
        let n2 = e3;
        (e1, e2, e3) = (n1, n2, n3);
    }
    e1 + e2 + e3
}

/// `w ≺ z`: at the first disagreement `w` carries the symbol further left.
pub fn precede(w: &Word, z: &Word) -> bool {
    w.0.iter()
        .zip(z.0.iter())
        .find(|(a, b)| a != b)
        .is_some_and(|(a, b)| rank(*a) < rank(*b))
}

/// Itinerary of `x` in `[0,1)` to depth `n`, with the cylinder endpoints at each depth.
///
/// Descends by comparing against exact split points, so no precision is lost
/// to repeated application of the expanding map.
pub fn itinerary<R: Real>(x: &R, n: usize) -> Vec<Cylinder> {
    let mut out: Vec<Cylinder> = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let first = if *x < R::from_golden(GoldenInt::inv_phi_pow(2)) {
        1
    } else if *x < R::from_golden(GoldenInt::inv_phi_pow(1)) {
        3
    } else {
        2
    };
    let (lo, hi) = partition_interval(first);
    out.push(Cylinder { word: Word(vec![first]), lo, hi });
    while out.len() < n {
        let c = out.last().expect("nonempty");
        let next = match c.word.last() {
            3 => Cylinder { word: Word([c.word.0.as_slice(), &[2]].concat()), lo: c.lo, hi: c.hi },
            _ => {
                let mid = split_point(c.lo, c.hi);
                if *x < R::from_golden(mid) {
                    Cylinder { word: Word([c.word.0.as_slice(), &[1]].concat()), lo: c.lo, hi: mid }
                } else {
                    Cylinder { word: Word([c.word.0.as_slice(), &[3]].concat()), lo: mid, hi: c.hi }
                }
            }
        };
        out.push(next);
    }
    out
}

/// Horizontal boundary levels of the fundamental domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    /// `y = phi^2/(phi+2)` over `[0, 1/phi)`.
    Top,
    /// `y = 1/(phi+2)` over `[1/phi, 1)`.
    Middle,
    /// `y = -phi/(phi+2)` over `[0, 1)`.
    Bottom,
}

impl Level {
    pub fn y(self) -> FieldElement {
        let d = (FieldElement::phi() + FieldElement::from_int(2)).inv().expect("nonzero");
        match self {
            Level::Top => FieldElement::phi().pow(2) * d,
            Level::Middle => d,
            Level::Bottom => -(FieldElement::phi() * d),
        }
    }
}

/// One side of a coupling segment: a cylinder on a boundary level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Side {
    pub level: Level,
    pub word: Word,
    pub lo: FieldElement,
    pub hi: FieldElement,
}

/// The identified pair of boundary intervals `V_j`, coupled at time `j + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSegment {
    pub j: usize,
    pub upper: Side,
    pub lower: Side,
}

impl CouplingSegment {
    pub fn coupling_time(&self) -> usize {
        self.j + 1
    }
}

/// The upper and lower coupling words of index `j`.
pub fn coupling_words(j: usize) -> (Word, Word) {
    assert!(j >= 1, "coupling index starts at 1");
    let (w, wt) = match j {
        1 => ("2".to_string(), "1".to_string()),
        2 => ("11".into(), "32".into()),
        3 => ("132".into(), "211".into()),
        4 => ("3211".into(), "2132".into()),
        _ if j % 2 == 1 => ("32".repeat((j - 3) / 2) + "132", "23".repeat((j - 3) / 2) + "211"),
        _ => ("32".repeat((j - 4) / 2) + "3211", "23".repeat((j - 4) / 2) + "2132"),
    };
    (w.parse().expect("admissible"), wt.parse().expect("admissible"))
}

/// `V_j` with both sides. For `j = 1` the upper side sits on the middle level.
pub fn coupling_segment(j: usize) -> CouplingSegment {
    let (w, wt) = coupling_words(j);
    let cw = cylinder_of(&w).expect("admissible");
    let cwt = cylinder_of(&wt).expect("admissible");
    let upper_level = if j == 1 { Level::Middle } else { Level::Top };
    CouplingSegment {
        j,
        upper: Side { level: upper_level, word: w, lo: cw.lo_field(), hi: cw.hi_field() },
        lower: Side { level: Level::Bottom, word: wt, lo: cwt.lo_field(), hi: cwt.hi_field() },
    }
}

/// Largest coupling index kept in the lookup table; points beyond it are
/// treated as never coupled within any evaluable depth.
pub const MAX_COUPLING_INDEX: usize = 90;

#[derive(Clone, Debug)]
pub(crate) struct Piece {
    pub level: Level,
    pub j: usize,
    pub lo: GoldenInt,
    pub hi: GoldenInt,
}

fn piece_table() -> &'static Vec<Piece> {
    static TABLE: OnceLock<Vec<Piece>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = Vec::new();
        for j in 1..=MAX_COUPLING_INDEX {
            let (w, wt) = coupling_words(j);
            let cw = cylinder_of(&w).expect("admissible");
            let cwt = cylinder_of(&wt).expect("admissible");
            let upper_level = if j == 1 { Level::Middle } else { Level::Top };
            out.push(Piece { level: upper_level, j, lo: cw.lo, hi: cw.hi });
            out.push(Piece { level: Level::Bottom, j, lo: cwt.lo, hi: cwt.hi });
        }
        out
    })
}

/// The boundary piece containing `x` on `level`: `(j, lo, hi)` of its cylinder.
///
/// Returns `None` when `x` lies beyond the table (within `phi^-90` of an
/// accumulation point) or off the level's horizontal extent.
pub(crate) fn boundary_piece<R: Real>(level: Level, x: &R) -> Option<&'static Piece> {
    piece_table()
        .iter()
        .filter(|p| p.level == level)
        .find(|p| R::from_golden(p.lo) <= *x && *x < R::from_golden(p.hi))
}

/// Pieces of one boundary level, in increasing coupling index.
pub(crate) fn level_pieces(level: Level) -> impl Iterator<Item = &'static Piece> {
    piece_table().iter().filter(move |p| p.level == level)
}

/// Coupling index of a point on a boundary level.
pub fn coupling_index<R: Real>(level: Level, x: &R) -> Option<usize> {
    boundary_piece(level, x).map(|p| p.j)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Word {
        s.parse().unwrap()
    }

    #[test]
    fn first_two_levels() {
        assert_eq!(enumerate_words(1), vec![w("1"), w("3"), w("2")]);
        assert_eq!(enumerate_words(2), vec![w("11"), w("13"), w("32"), w("21"), w("23")]);
        assert_eq!(enumerate_words(3).len(), 8);
    }

    #[test]
    fn counts_follow_fibonacci() {
        let mut fib = vec![1u128, 1];
        for i in 2..40 {
            fib.push(fib[i - 1] + fib[i - 2]);
        }
        for n in 1..=30 {
            assert_eq!(word_count(n), fib[n + 2], "n = {n}");
        }
        for n in 1..=12 {
            assert_eq!(enumerate_words(n).len() as u128, word_count(n));
        }
    }

    #[test]
    fn named_cylinders() {
        let c = cylinder_of(&w("1")).unwrap();
        assert_eq!((c.lo, c.hi), (GoldenInt::ZERO, GoldenInt::inv_phi_pow(2)));
        let c = cylinder_of(&w("32")).unwrap();
        assert_eq!((c.lo, c.hi), (GoldenInt::inv_phi_pow(2), GoldenInt::inv_phi_pow(1)));
        let c = cylinder_of(&w("11")).unwrap();
        assert_eq!((c.lo, c.hi), (GoldenInt::ZERO, GoldenInt::inv_phi_pow(3)));
        assert!(cylinder_of(&Word(vec![3, 3])).is_err());
        assert!("12".parse::<Word>().is_err());
    }

    #[test]
    fn order_examples() {
        assert!(precede(&w("13"), &w("32")));
        assert!(precede(&w("32"), &w("21")));
        assert!(!precede(&w("21"), &w("21")));
        assert!(!precede(&w("21"), &w("213")));
    }

    #[test]
    fn itinerary_matches_cylinders() {
        for c in enumerate_cylinders(9) {
            let mid = (c.lo.to_f64() + c.hi.to_f64()) / 2.0;
            let it = itinerary(&mid, 9);
            assert_eq!(it.last().unwrap(), &c);
            let exact = itinerary(&c.lo_field(), 9);
            assert_eq!(exact.last().unwrap(), &c);
        }
    }

    #[test]
    fn coupling_words_small_indices() {
        let (a, b) = coupling_words(5);
        assert_eq!((a.to_string(), b.to_string()), ("32132".into(), "23211".into()));
        let (a, b) = coupling_words(6);
        assert_eq!((a.to_string(), b.to_string()), ("323211".into(), "232132".into()));
        assert_eq!(coupling_segment(1).coupling_time(), 2);
        let v2 = coupling_segment(2);
        assert_eq!(v2.upper.hi, FieldElement::inv_phi().pow(3));
        assert_eq!(v2.lower.lo, FieldElement::inv_phi().pow(2));
    }

    #[test]
    fn pieces_tile_the_levels() {
        // the upper pieces j >= 2 cover [0, 1/phi) up to phi^-MAX
        let top: Vec<_> = piece_table().iter().filter(|p| p.level == Level::Top).collect();
        let mut sorted = top.clone();
        sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
        assert_eq!(sorted[0].lo, GoldenInt::ZERO);
        for pair in sorted.windows(2) {
            assert_eq!(pair[0].hi, pair[1].lo);
        }
        let bottom: Vec<_> = piece_table().iter().filter(|p| p.level == Level::Bottom).collect();
        let mut sorted = bottom.clone();
        sorted.sort_by(|a, b| a.lo.cmp(&b.lo));
        for pair in sorted.windows(2) {
            assert_eq!(pair[0].hi, pair[1].lo);
        }
        assert_eq!(coupling_index(Level::Top, &0.1), Some(2));
        assert_eq!(coupling_index(Level::Bottom, &0.1), Some(1));
        assert_eq!(coupling_index(Level::Bottom, &0.5), Some(2));
        assert_eq!(coupling_index(Level::Middle, &0.9), Some(1));
    }
}

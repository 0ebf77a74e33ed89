//! Binary genealogy words and division tuples.
//!
//! A [`TreeWord`] names a node of the infinite binary tree: the root is the
//! empty word, and every word `e` has the two successors `e-` and `e+`.
//! A [`TreeTuple`] `(r_0, ..., r_2k)` records the order in which `k`
//! divisions happened: `r_0` is the root and each pair `(r_2l-1, r_2l)`
//! holds the two successors of an earlier entry.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One letter of a tree word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Minus,
    Plus,
}

impl Sign {
    pub fn as_char(self) -> char {
        match self {
            Sign::Minus => '-',
            Sign::Plus => '+',
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("invalid tuple: {0}")]
    InvalidTuple(String),
    #[error("prefix length {requested} exceeds tuple order {order}")]
    OutOfRange { requested: usize, order: usize },
    #[error("word `{0}` is not a leaf of the tuple")]
    NotALeaf(TreeWord),
    #[error("enumeration of order {0} exceeds the supported maximum of {MAX_ENUMERATION_ORDER}")]
    TooLarge(usize),
    #[error("invalid word character `{0}`")]
    BadChar(char),
}

/// Largest `k` accepted by [`enumerate_theta`] (8! = 40320 tuples).
pub const MAX_ENUMERATION_ORDER: usize = 8;

/// A finite word over `{-, +}` stored as a packed bit sequence.
///
/// Bit `i` of the word lives in `blocks[i / 64]` at position `63 - i % 64`,
/// with `-` encoded as 0. Unused trailing bits are always zero, which makes
/// block-wise comparison agree with lexicographic comparison.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct TreeWord {
    blocks: Vec<u64>,
    len: usize,
}

impl TreeWord {
    /// The root word `o`.
    pub fn root() -> Self {
        Self::default()
    }

    pub fn from_signs(signs: &[Sign]) -> Self {
        let mut w = Self::root();
        for &s in signs {
            w.push(s);
        }
        w
    }

    pub fn level(&self) -> usize {
        self.len
    }

    pub fn is_root(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> Option<Sign> {
        if i >= self.len {
            return None;
        }
        let bit = (self.blocks[i / 64] >> (63 - i % 64)) & 1;
        Some(if bit == 1 { Sign::Plus } else { Sign::Minus })
    }

    pub fn signs(&self) -> impl Iterator<Item = Sign> + '_ {
        (0..self.len).map(move |i| self.get(i).unwrap())
    }

    fn push(&mut self, s: Sign) {
        if self.len % 64 == 0 {
            self.blocks.push(0);
        }
        if s == Sign::Plus {
            let i = self.len;
            self.blocks[i / 64] |= 1u64 << (63 - i % 64);
        }
        self.len += 1;
    }

    /// The word extended by one letter.
    pub fn child(&self, s: Sign) -> Self {
        let mut w = self.clone();
        w.push(s);
        w
    }

    pub fn minus(&self) -> Self {
        self.child(Sign::Minus)
    }

    pub fn plus(&self) -> Self {
        self.child(Sign::Plus)
    }

    /// `Pred(e)`; `None` for the root.
    pub fn parent(&self) -> Option<Self> {
        if self.len == 0 {
            return None;
        }
        let mut w = self.clone();
        let i = w.len - 1;
        w.blocks[i / 64] &= !(1u64 << (63 - i % 64));
        w.len -= 1;
        if w.len % 64 == 0 {
            w.blocks.pop();
        }
        Some(w)
    }

    /// True if `self` is `other` or one of its descendants.
    pub fn has_prefix(&self, other: &TreeWord) -> bool {
        other.len <= self.len && (0..other.len).all(|i| self.get(i) == other.get(i))
    }
}

impl Ord for TreeWord {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.blocks.cmp(&other.blocks))
    }
}

impl PartialOrd for TreeWord {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for TreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.signs() {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl fmt::Debug for TreeWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_root() {
            write!(f, "o")
        } else {
            write!(f, "{self}")
        }
    }
}

impl FromStr for TreeWord {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut w = TreeWord::root();
        for c in s.chars() {
            match c {
                '-' => w.push(Sign::Minus),
                '+' => w.push(Sign::Plus),
                other => return Err(TreeError::BadChar(other)),
            }
        }
        Ok(w)
    }
}

impl Serialize for TreeWord {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TreeWord {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// An ordered division protocol `(r_0, ..., r_2k)`, always valid.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TreeTuple {
    entries: Vec<TreeWord>,
}

impl TreeTuple {
    /// The tuple `(o)` of order zero.
    pub fn root() -> Self {
        Self {
            entries: vec![TreeWord::root()],
        }
    }

    /// Validates an arbitrary entry sequence.
    pub fn new(entries: Vec<TreeWord>) -> Result<Self, TreeError> {
        validate(&entries)?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[TreeWord] {
        &self.entries
    }

    /// The number of divisions `k`.
    pub fn order(&self) -> usize {
        (self.entries.len() - 1) / 2
    }

    /// The word divided at step `s` (`r*_s`), for `s < order()`.
    pub fn divided_at(&self, s: usize) -> Option<TreeWord> {
        self.entries.get(2 * s + 1).and_then(TreeWord::parent)
    }

    /// Entries without successors in the tuple, in increasing word order.
    pub fn leaves(&self) -> Vec<TreeWord> {
        let set: BTreeSet<&TreeWord> = self.entries.iter().collect();
        // Successors always appear as a pair, so testing `e-` suffices.
        let mut out: Vec<TreeWord> = self
            .entries
            .iter()
            .filter(|e| !set.contains(&e.minus()))
            .cloned()
            .collect();
        out.sort();
        out
    }

    /// `R^(s) = (r_0, ..., r_2s)`.
    pub fn prefix(&self, s: usize) -> Result<TreeTuple, TreeError> {
        if s > self.order() {
            return Err(TreeError::OutOfRange {
                requested: s,
                order: self.order(),
            });
        }
        Ok(TreeTuple {
            entries: self.entries[..2 * s + 1].to_vec(),
        })
    }

    /// Appends the successors of `leaf`.
    pub fn extend(&self, leaf: &TreeWord) -> Result<TreeTuple, TreeError> {
        if !self.entries.contains(leaf) || self.entries.contains(&leaf.minus()) {
            return Err(TreeError::NotALeaf(leaf.clone()));
        }
        let mut entries = self.entries.clone();
        entries.push(leaf.minus());
        entries.push(leaf.plus());
        Ok(TreeTuple { entries })
    }
}

fn validate(entries: &[TreeWord]) -> Result<(), TreeError> {
    if entries.is_empty() || entries.len() % 2 == 0 {
        return Err(TreeError::InvalidTuple(format!(
            "length {} is not of the form 2k+1",
            entries.len()
        )));
    }
    if !entries[0].is_root() {
        return Err(TreeError::InvalidTuple("first entry is not the root".into()));
    }
    let distinct: BTreeSet<&TreeWord> = entries.iter().collect();
    if distinct.len() != entries.len() {
        return Err(TreeError::InvalidTuple("entries are not pairwise distinct".into()));
    }
    for l in 1..=(entries.len() - 1) / 2 {
        let (a, b) = (&entries[2 * l - 1], &entries[2 * l]);
        let ok = match a.parent() {
            Some(p) => *a == p.minus() && *b == p.plus() && entries[..2 * l - 1].contains(&p),
            None => false,
        };
        if !ok {
            return Err(TreeError::InvalidTuple(format!(
                "pair ({a:?}, {b:?}) at step {l} is not the successor pair of an earlier entry"
            )));
        }
    }
    Ok(())
}

/// All tuples of order `k`, generated by extending every leaf in turn.
pub fn enumerate_theta(k: usize) -> Result<Vec<TreeTuple>, TreeError> {
    if k > MAX_ENUMERATION_ORDER {
        return Err(TreeError::TooLarge(k));
    }
    let mut level = vec![TreeTuple::root()];
    for _ in 0..k {
        level = level
            .iter()
            .flat_map(|r| {
                r.leaves()
                    .into_iter()
                    .map(move |leaf| r.extend(&leaf).expect("leaf of its own tuple"))
            })
            .collect();
    }
    Ok(level)
}

//! Ground universe and subset representation.
//!
//! All set functions in this crate are functions of a [`SubsetMask`] over a
//! fixed [`Universe`] of `d` elements indexed `0..d`. The element ordering
//! used by every deterministic procedure is the ascending index order.

use std::fmt;

use crate::error::{Error, Result};

/// A finite ground set of `d` elements, ordered by ascending index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Universe {
    size: usize,
}

impl Universe {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("universe must be non-empty".into()));
        }
        Ok(Universe { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Elements in the fixed ascending order.
    pub fn elements(&self) -> impl Iterator<Item = usize> {
        0..self.size
    }

    pub fn empty_mask(&self) -> SubsetMask {
        SubsetMask::empty(self.size)
    }

    pub fn full_mask(&self) -> SubsetMask {
        SubsetMask::full(self.size)
    }
}

/// A subset of a universe of size `d`, stored as a packed bit vector.
///
/// All binary operations require both operands to live in the same universe
/// (equal `d`); mixing universes is a programming error and panics.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SubsetMask {
    d: usize,
    words: Vec<u64>,
}

fn word_count(d: usize) -> usize {
    d.div_ceil(64)
}

impl SubsetMask {
    pub fn empty(d: usize) -> Self {
        assert!(d > 0, "universe must be non-empty");
        SubsetMask {
            d,
            words: vec![0; word_count(d)],
        }
    }

    pub fn full(d: usize) -> Self {
        let mut m = Self::empty(d);
        for w in &mut m.words {
            *w = u64::MAX;
        }
        m.clear_tail();
        m
    }

    pub fn singleton(d: usize, index: usize) -> Self {
        let mut m = Self::empty(d);
        m.insert(index);
        m
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(d: usize, indices: I) -> Self {
        let mut m = Self::empty(d);
        for i in indices {
            m.insert(i);
        }
        m
    }

    /// Zero any bits at positions `>= d` in the last word.
    fn clear_tail(&mut self) {
        let extra = self.words.len() * 64 - self.d;
        if extra > 0 {
            let last = self.words.len() - 1;
            self.words[last] &= u64::MAX >> extra;
        }
    }

    pub fn universe_size(&self) -> usize {
        self.d
    }

    pub fn contains(&self, index: usize) -> bool {
        assert!(index < self.d, "element index {} out of range", index);
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < self.d, "element index {} out of range", index);
        self.words[index / 64] |= 1u64 << (index % 64);
    }

    pub fn remove(&mut self, index: usize) {
        assert!(index < self.d, "element index {} out of range", index);
        self.words[index / 64] &= !(1u64 << (index % 64));
    }

    pub fn with(&self, index: usize) -> Self {
        let mut m = self.clone();
        m.insert(index);
        m
    }

    pub fn without(&self, index: usize) -> Self {
        let mut m = self.clone();
        m.remove(index);
        m
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    fn check_same_universe(&self, other: &Self) {
        assert_eq!(self.d, other.d, "masks from different universes");
    }

    pub fn union(&self, other: &Self) -> Self {
        self.check_same_universe(other);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a | b)
            .collect();
        SubsetMask { d: self.d, words }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.check_same_universe(other);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a & b)
            .collect();
        SubsetMask { d: self.d, words }
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.check_same_universe(other);
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a & !b)
            .collect();
        SubsetMask { d: self.d, words }
    }

    /// Complement within the universe.
    pub fn complement(&self) -> Self {
        let words = self.words.iter().map(|w| !w).collect();
        let mut m = SubsetMask { d: self.d, words };
        m.clear_tail();
        m
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.check_same_universe(other);
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }

    pub fn is_disjoint_from(&self, other: &Self) -> bool {
        self.check_same_universe(other);
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    /// Indices of set bits, ascending.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    None
                } else {
                    let b = bits.trailing_zeros() as usize;
                    bits &= bits - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }

    /// The lowest `64` elements as a plain word; only valid for `d <= 64`.
    pub fn as_u64(&self) -> u64 {
        assert!(self.d <= 64, "mask wider than 64 bits");
        self.words[0]
    }

    pub fn from_u64(d: usize, bits: u64) -> Self {
        assert!(d <= 64, "mask wider than 64 bits");
        let mut m = Self::empty(d);
        m.words[0] = bits;
        m.clear_tail();
        m
    }

    /// Canonical lowercase hex encoding: `ceil(d/4)` nibbles, most
    /// significant first.
    pub fn to_hex(&self) -> String {
        let nibbles = self.d.div_ceil(4);
        let mut out = String::with_capacity(nibbles);
        for i in (0..nibbles).rev() {
            let nibble = (self.words[i / 16] >> ((i % 16) * 4)) & 0xf;
            out.push(char::from_digit(nibble as u32, 16).unwrap());
        }
        out
    }

    pub fn from_hex(d: usize, hex: &str) -> Result<Self> {
        let nibbles = d.div_ceil(4);
        if hex.len() != nibbles {
            return Err(Error::Parse(format!(
                "mask hex '{}' has {} nibbles, expected {} for universe size {}",
                hex,
                hex.len(),
                nibbles,
                d
            )));
        }
        let mut m = Self::empty(d);
        for (pos, c) in hex.chars().rev().enumerate() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::Parse(format!("bad hex digit '{}' in mask", c)))? as u64;
            m.words[pos / 16] |= v << ((pos % 16) * 4);
        }
        let mut checked = m.clone();
        checked.clear_tail();
        if checked != m {
            return Err(Error::Parse(format!(
                "mask hex '{}' sets bits beyond universe size {}",
                hex, d
            )));
        }
        Ok(m)
    }

    /// Iterate over all `2^d` masks of a small universe, ascending as integers.
    pub fn enumerate_all(d: usize) -> Result<impl Iterator<Item = SubsetMask>> {
        if d > 25 {
            return Err(Error::Capacity(format!(
                "exhaustive enumeration over 2^{} masks refused",
                d
            )));
        }
        Ok((0u64..(1u64 << d)).map(move |bits| SubsetMask::from_u64(d, bits)))
    }

    /// A stable 64-bit fingerprint, used to derive per-mask RNG streams.
    /// Independent of platform and of `std` hasher seeds.
    pub fn fingerprint(&self, salt: u64) -> u64 {
        let mut h = splitmix64(salt ^ self.d as u64);
        for &w in &self.words {
            h = splitmix64(h ^ w);
        }
        h
    }
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl fmt::Debug for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SubsetMask({}:{})", self.d, self.to_hex())
    }
}

impl fmt::Display for SubsetMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

// Big-endian word order so that masks sort as integers; gives every
// structure a canonical, seed-independent iteration order.
impl Ord for SubsetMask {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.d
            .cmp(&other.d)
            .then_with(|| self.words.iter().rev().cmp(other.words.iter().rev()))
    }
}

impl PartialOrd for SubsetMask {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn universe_rejects_empty() {
        assert!(Universe::new(0).is_err());
        assert!(Universe::new(1).is_ok());
    }

    #[test]
    fn basic_ops() {
        let mut m = SubsetMask::empty(70);
        assert!(m.is_empty());
        m.insert(0);
        m.insert(69);
        assert_eq!(m.len(), 2);
        assert!(m.contains(69));
        assert!(!m.contains(68));
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![0, 69]);
        m.remove(69);
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn complement_respects_universe() {
        let m = SubsetMask::from_indices(10, [0, 3]);
        let c = m.complement();
        assert_eq!(c.len(), 8);
        assert!(m.is_disjoint_from(&c));
        assert_eq!(m.union(&c), SubsetMask::full(10));
    }

    #[test]
    fn hex_round_trip_fixed() {
        let m = SubsetMask::from_indices(12, [0, 1, 11]);
        assert_eq!(m.to_hex(), "803");
        assert_eq!(SubsetMask::from_hex(12, "803").unwrap(), m);
        assert!(SubsetMask::from_hex(12, "f000").is_err());
        // Bits beyond d are rejected.
        assert!(SubsetMask::from_hex(10, "fff").is_err());
    }

    #[test]
    fn ordering_matches_integer_order() {
        let a = SubsetMask::from_u64(8, 3);
        let b = SubsetMask::from_u64(8, 4);
        assert!(a < b);
    }

    proptest! {
        #[test]
        fn hex_round_trip(d in 1usize..130, bits in any::<u64>()) {
            let mut m = SubsetMask::empty(d);
            for i in 0..d.min(64) {
                if bits >> i & 1 == 1 {
                    m.insert(i);
                }
            }
            let hex = m.to_hex();
            prop_assert_eq!(SubsetMask::from_hex(d, &hex).unwrap(), m);
        }

        #[test]
        fn union_intersection_laws(a in any::<u32>(), b in any::<u32>()) {
            let d = 32;
            let ma = SubsetMask::from_u64(d, a as u64);
            let mb = SubsetMask::from_u64(d, b as u64);
            prop_assert_eq!(ma.union(&mb).len() + ma.intersection(&mb).len(), ma.len() + mb.len());
            prop_assert!(ma.intersection(&mb).is_subset_of(&ma));
            prop_assert!(ma.is_subset_of(&ma.union(&mb)));
            prop_assert_eq!(ma.difference(&mb).union(&ma.intersection(&mb)), ma.clone());
        }

        #[test]
        fn complement_is_involution(a in any::<u64>()) {
            let m = SubsetMask::from_u64(64, a);
            prop_assert_eq!(m.complement().complement(), m);
        }
    }
}

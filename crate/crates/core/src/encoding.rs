//! Turning state-label paths into key bits.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// A key as an ordered sequence of bits. Displays as ASCII `0`/`1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString(pub Vec<bool>);

impl BitString {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn count_ones(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        Self(self.0.iter().map(|b| !b).collect())
    }

    /// Packed MSB-first, zero padded to a whole byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.0
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i))))
            .collect()
    }

    pub fn from_bytes(bytes: &[u8], n_bits: usize) -> Result<Self> {
        if n_bits > bytes.len() * 8 {
            return Err(Error::Format(format!("{n_bits} bits requested from {} bytes", bytes.len())));
        }
        Ok(Self((0..n_bits).map(|i| bytes[i / 8] >> (7 - i % 8) & 1 == 1).collect()))
    }

    fn push_value(&mut self, value: usize, width: usize) {
        for i in (0..width).rev() {
            self.0.push(value >> i & 1 == 1);
        }
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.0.iter().map(|&b| if b { '1' } else { '0' }).collect();
        f.write_str(&s)
    }
}

impl FromStr for BitString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self)
    }
}

impl From<Vec<bool>> for BitString {
    fn from(v: Vec<bool>) -> Self {
        Self(v)
    }
}

impl Serialize for BitString {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    OneHot,
    Huffman,
    Gray,
    SwitchingGray,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [Self::OneHot, Self::Huffman, Self::Gray, Self::SwitchingGray];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::OneHot => "OneHot",
            Self::Huffman => "Huffman",
            Self::Gray => "Gray",
            Self::SwitchingGray => "SwitchingGray",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown encoding scheme {s:?}")))
    }
}

/// Bits needed for `n` distinct values, never less than one.
fn width_for(n: usize) -> usize {
    let n = n.max(2);
    (usize::BITS - (n - 1).leading_zeros()) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingScheme {
    pub kind: SchemeKind,
    pub alphabet_size: usize,
    /// Symbol frequencies for Huffman.
    pub weights: Option<Vec<f64>>,
}

impl EncodingScheme {
    pub fn new(kind: SchemeKind, alphabet_size: usize) -> Result<Self> {
        let s = Self { kind, alphabet_size, weights: None };
        s.validate()?;
        Ok(s)
    }

    pub fn huffman(weights: Vec<f64>) -> Result<Self> {
        let s = Self { kind: SchemeKind::Huffman, alphabet_size: weights.len(), weights: Some(weights) };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet_size == 0 {
            return Err(Error::Config("alphabet size must be at least 1".into()));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.alphabet_size {
                return Err(Error::Config(format!("{} weights for alphabet of {}", w.len(), self.alphabet_size)));
            }
            if w.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::Config("Huffman weights must be positive and finite".into()));
            }
        }
        Ok(())
    }

    /// Codeword width for the fixed-width schemes; `None` for Huffman.
    pub fn bits_per_state(&self) -> Option<usize> {
        match self.kind {
            SchemeKind::OneHot => Some(self.alphabet_size),
            SchemeKind::Gray => Some(width_for(self.alphabet_size)),
            SchemeKind::SwitchingGray => Some(width_for(2 * self.alphabet_size)),
            SchemeKind::Huffman => None,
        }
    }

    /// Canonical Huffman codebook, one codeword per symbol.
    pub fn huffman_codebook(&self) -> Result<Vec<BitString>> {
        let c = self.alphabet_size;
        if c == 1 {
            return Ok(vec![BitString(vec![false])]);
        }
        let weights = self
            .weights
            .as_ref()
            .ok_or_else(|| Error::Config("Huffman encoding needs symbol weights".into()))?;
        Ok(canonical_codes(&huffman_lengths(weights)))
    }
}

/// Code lengths from the usual two-smallest merge. Ties go to the node created first.
fn huffman_lengths(weights: &[f64]) -> Vec<usize> {
    // (weight, creation order, member symbols)
    let mut nodes: Vec<(f64, usize, Vec<usize>)> =
        weights.iter().enumerate().map(|(i, &w)| (w, i, vec![i])).collect();
    let mut lengths = vec![0usize; weights.len()];
    let mut next_id = weights.len();
    while nodes.len() > 1 {
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (wa, _, mut a) = nodes.remove(0);
        let (wb, _, b) = nodes.remove(0);
        for &s in a.iter().chain(&b) {
            lengths[s] += 1;
        }
        a.extend(b);
        nodes.push((wa + wb, next_id, a));
        next_id += 1;
    }
    lengths
}

fn canonical_codes(lengths: &[usize]) -> Vec<BitString> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by_key(|&s| (lengths[s], s));
    let mut codes = vec![BitString::default(); lengths.len()];
    let mut code = 0usize;
    let mut prev_len = lengths[order[0]];
    for (i, &s) in order.iter().enumerate() {
        if i > 0 {
            code = (code + 1) << (lengths[s] - prev_len);
        }
        prev_len = lengths[s];
        let mut b = BitString::default();
        b.push_value(code, lengths[s]);
        codes[s] = b;
    }
    codes
}

/// Reflected binary Gray code of `n` in `width` bits, MSB first.
pub fn gray_code(n: usize, width: usize) -> Result<BitString> {
    if width < usize::BITS as usize && n >> width != 0 {
        return Err(Error::Range(format!("{n} does not fit in {width} bits")));
    }
    let mut b = BitString::default();
    b.push_value(n ^ (n >> 1), width);
    Ok(b)
}

fn inverse_gray(mut g: usize) -> usize {
    let mut n = g;
    while g > 0 {
        g >>= 1;
        n ^= g;
    }
    n
}

/// Encode a path of state labels.
///
/// SwitchingGray gives state `s` the Gray codes of `2s + 1` and `2s` and
/// alternates between them on successive occurrences of `s`, starting with
/// `2s + 1`.
pub fn encode_path(path: &[usize], scheme: &EncodingScheme) -> Result<BitString> {
    scheme.validate()?;
    let c = scheme.alphabet_size;
    if let Some(&bad) = path.iter().find(|&&s| s >= c) {
        return Err(Error::Range(format!("state label {bad} outside alphabet of {c}")));
    }
    let mut out = BitString::default();
    match scheme.kind {
        SchemeKind::OneHot => {
            for &s in path {
                out.0.extend((0..c).map(|i| i == s));
            }
        }
        SchemeKind::Gray => {
            let w = width_for(c);
            for &s in path {
                out.0.extend(gray_code(s, w)?.0);
            }
        }
        SchemeKind::SwitchingGray => {
            let w = width_for(2 * c);
            let mut parity = vec![0usize; c];
            for &s in path {
                out.0.extend(gray_code(2 * s + 1 - parity[s], w)?.0);
                parity[s] ^= 1;
            }
        }
        SchemeKind::Huffman => {
            let book = scheme.huffman_codebook()?;
            for &s in path {
                out.0.extend_from_slice(&book[s].0);
            }
        }
    }
    Ok(out)
}

/// Inverse of [`encode_path`].
pub fn decode_path(bits: &BitString, scheme: &EncodingScheme) -> Result<Vec<usize>> {
    scheme.validate()?;
    let c = scheme.alphabet_size;
    let bad = |msg: &str| Error::Format(format!("cannot decode {} key: {msg}", scheme.kind));
    let value = |chunk: &[bool]| chunk.iter().fold(0usize, |acc, &b| acc << 1 | b as usize);
    match scheme.kind {
        SchemeKind::Huffman => {
            let book = scheme.huffman_codebook()?;
            let mut path = Vec::new();
            let mut pos = 0;
            while pos < bits.len() {
                let rest = &bits.0[pos..];
                let s = (0..c)
                    .find(|&s| rest.starts_with(&book[s].0))
                    .ok_or_else(|| bad("no codeword matches"))?;
                path.push(s);
                pos += book[s].len();
            }
            Ok(path)
        }
        _ => {
            let w = scheme.bits_per_state().unwrap_or(1);
            if !bits.len().is_multiple_of(w) {
                return Err(bad("length is not a whole number of codewords"));
            }
            bits.0
                .chunks(w)
                .map(|chunk| {
                    let s = match scheme.kind {
                        SchemeKind::OneHot => {
                            if chunk.iter().filter(|&&b| b).count() != 1 {
                                return Err(bad("one-hot block without a single 1"));
                            }
                            chunk.iter().position(|&b| b).unwrap_or(0)
                        }
                        SchemeKind::Gray => inverse_gray(value(chunk)),
                        _ => inverse_gray(value(chunk)) / 2,
                    };
                    if s >= c {
                        Err(bad("codeword outside alphabet"))
                    } else {
                        Ok(s)
                    }
                })
                .collect()
        }
    }
}

/// Seeded uniform shuffle of bit positions.
pub fn permute_bits(bits: &BitString, seed: u64) -> BitString {
    let mut v = bits.0.clone();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    BitString(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn gray_examples() {
        assert_eq!(gray_code(0, 2).unwrap(), bs("00"));
        assert_eq!(gray_code(2, 2).unwrap(), bs("11"));
        assert_eq!(gray_code(3, 2).unwrap(), bs("10"));
        assert!(matches!(gray_code(4, 2), Err(Error::Range(_))));
    }

    #[test]
    fn path_examples() {
        let gray = EncodingScheme::new(SchemeKind::Gray, 2).unwrap();
        assert_eq!(encode_path(&[0, 1, 1, 0], &gray).unwrap(), bs("0110"));
        let sw = EncodingScheme::new(SchemeKind::SwitchingGray, 2).unwrap();
        assert_eq!(encode_path(&[1, 1], &sw).unwrap(), bs("1011"));
        let oh = EncodingScheme::new(SchemeKind::OneHot, 3).unwrap();
        assert_eq!(encode_path(&[0], &oh).unwrap(), bs("100"));
        assert!(matches!(encode_path(&[3], &oh), Err(Error::Range(_))));
    }

    #[test]
    fn huffman_needs_weights() {
        let h = EncodingScheme::new(SchemeKind::Huffman, 3).unwrap();
        assert!(matches!(encode_path(&[0], &h), Err(Error::Config(_))));
        let h1 = EncodingScheme::new(SchemeKind::Huffman, 1).unwrap();
        assert_eq!(encode_path(&[0, 0], &h1).unwrap(), bs("00"));
        assert!(EncodingScheme::huffman(vec![0.5, 0.0]).is_err());
    }

    #[test]
    fn huffman_matches_textbook_lengths() {
        // Frequencies 45,13,12,16,9,5 give lengths 1,3,3,3,4,4.
        let h = EncodingScheme::huffman(vec![45.0, 13.0, 12.0, 16.0, 9.0, 5.0]).unwrap();
        let book = h.huffman_codebook().unwrap();
        let lengths: Vec<usize> = book.iter().map(BitString::len).collect();
        assert_eq!(lengths, vec![1, 3, 3, 3, 4, 4]);
        assert_eq!(book[0], bs("0"));
        // Kraft equality for a full tree.
        let kraft: f64 = lengths.iter().map(|&l| 0.5f64.powi(l as i32)).sum();
        assert!((kraft - 1.0).abs() < 1e-12);
    }

    #[test]
    fn byte_packing() {
        let b = bs("1010000011");
        assert_eq!(b.to_bytes(), vec![0b1010_0000, 0b1100_0000]);
        assert_eq!(BitString::from_bytes(&b.to_bytes(), 10).unwrap(), b);
        assert!(BitString::from_bytes(&[0], 9).is_err());
    }

    #[test]
    fn permute_examples() {
        assert!(permute_bits(&BitString::default(), 3).is_empty());
        assert_eq!(permute_bits(&bs("1111"), 3), bs("1111"));
        let p = permute_bits(&bs("0011"), 11);
        assert_eq!((p.len(), p.count_ones()), (4, 2));
        assert_eq!(permute_bits(&bs("0011010"), 5), permute_bits(&bs("0011010"), 5));
    }

    fn scheme_strategy() -> impl Strategy<Value = EncodingScheme> {
        (1usize..9, 0usize..4).prop_flat_map(|(c, k)| {
            let kind = SchemeKind::ALL[k];
            prop::collection::vec(0.01f64..1.0, c).prop_map(move |w| EncodingScheme {
                kind,
                alphabet_size: c,
                weights: (kind == SchemeKind::Huffman).then_some(w),
            })
        })
    }

    proptest! {
        #[test]
        fn gray_neighbours_differ_in_one_bit((width, n) in (1usize..12).prop_flat_map(|w| (Just(w), 0usize..(1 << w) - 1))) {
            let a = gray_code(n, width).unwrap();
            let b = gray_code(n + 1, width).unwrap();
            prop_assert_eq!(a.0.iter().zip(&b.0).filter(|(x, y)| x != y).count(), 1);
        }

        #[test]
        fn every_scheme_decodes(
            scheme in scheme_strategy(),
            raw in prop::collection::vec(0usize..1000, 0..60),
        ) {
            let path: Vec<usize> = raw.iter().map(|v| v % scheme.alphabet_size).collect();
            let bits = encode_path(&path, &scheme).unwrap();
            if let Some(w) = scheme.bits_per_state() {
                prop_assert_eq!(bits.len(), path.len() * w);
            }
            prop_assert_eq!(decode_path(&bits, &scheme).unwrap(), path);
        }

        #[test]
        fn switching_gray_never_repeats_a_state_codeword(
            c in 1usize..8,
            raw in prop::collection::vec(0usize..1000, 1..60),
        ) {
            let scheme = EncodingScheme::new(SchemeKind::SwitchingGray, c).unwrap();
            let path: Vec<usize> = raw.iter().map(|v| v % c).collect();
            let w = scheme.bits_per_state().unwrap();
            let bits = encode_path(&path, &scheme).unwrap();
            let words: Vec<&[bool]> = bits.0.chunks(w).collect();
            for s in 0..c {
                let occ: Vec<&[bool]> = path.iter().zip(&words).filter(|(p, _)| **p == s).map(|(_, w)| *w).collect();
                for pair in occ.windows(2) {
                    prop_assert_ne!(pair[0], pair[1]);
                }
            }
        }

        #[test]
        fn permutation_preserves_weight(bits in prop::collection::vec(any::<bool>(), 0..200), seed: u64) {
            let b = BitString(bits);
            let p = permute_bits(&b, seed);
            prop_assert_eq!(p.len(), b.len());
            prop_assert_eq!(p.count_ones(), b.count_ones());
        }

        #[test]
        fn display_round_trips(bits in prop::collection::vec(any::<bool>(), 0..100)) {
            let b = BitString(bits);
            prop_assert_eq!(b.to_string().parse::<BitString>().unwrap(), b.clone());
            prop_assert_eq!(BitString::from_bytes(&b.to_bytes(), b.len()).unwrap(), b);
        }
    }
}

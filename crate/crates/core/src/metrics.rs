//! Bit error rate and key generation rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::encoding::BitString;
use crate::{Error, Result};

/// Fraction of differing bits.
pub fn ber(a: &BitString, b: &BitString) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Shape(format!("cannot compare keys of {} and {} bits", a.len(), b.len())));
    }
    Ok(mismatches(a, b) as f64 / a.len() as f64)
}

fn mismatches(a: &BitString, b: &BitString) -> usize {
    a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyPairResult {
    pub ber: f64,
    pub mismatched_bits: usize,
    pub key_len_bits: usize,
    /// CSI samples charged to this pair.
    pub samples_used: f64,
}

impl KeyPairResult {
    pub fn new(a: &BitString, b: &BitString, samples_used: f64) -> Result<Self> {
        let ber = ber(a, b)?;
        Ok(Self { ber, mismatched_bits: mismatches(a, b), key_len_bits: a.len(), samples_used })
    }

    /// Whether the mismatch rate, in percent, is at most `threshold`.
    pub fn succeeds_at(&self, threshold: f64) -> bool {
        // Integer comparison keeps exact thresholds exact.
        (self.mismatched_bits as f64) * 100.0 <= threshold * self.key_len_bits as f64
    }

    pub fn mismatch_ok(&self, thresholds: &[f64]) -> BTreeMap<String, bool> {
        thresholds.iter().map(|&t| (format!("{t}"), self.succeeds_at(t))).collect()
    }
}

/// Bits of successful keys per sample, over all results.
pub fn kgr(results: &[KeyPairResult], threshold: f64) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::Shape("no key pairs to aggregate".into()));
    }
    let samples: f64 = results.iter().map(|r| r.samples_used).sum();
    if !(samples > 0.0) {
        return Err(Error::Shape("key pairs used no samples".into()));
    }
    let bits: usize = results.iter().filter(|r| r.succeeds_at(threshold)).map(|r| r.key_len_bits).sum();
    Ok(bits as f64 / samples)
}

/// KGR at each threshold, in the given (ascending) order.
pub fn kgr_curve(results: &[KeyPairResult], thresholds: &[f64]) -> Result<Vec<(f64, f64)>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Param("thresholds must be sorted ascending".into()));
    }
    thresholds.iter().map(|&t| Ok((t, kgr(results, t)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bs(s: &str) -> BitString {
        s.parse().unwrap()
    }

    #[test]
    fn ber_examples() {
        assert_eq!(ber(&bs("0101"), &bs("0101")).unwrap(), 0.0);
        assert_eq!(ber(&bs("0101"), &bs("1010")).unwrap(), 1.0);
        assert_eq!(ber(&bs("0011"), &bs("0010")).unwrap(), 0.25);
        assert!(matches!(ber(&bs("01"), &bs("011")), Err(Error::Shape(_))));
        assert!(matches!(ber(&bs(""), &bs("")), Err(Error::Shape(_))));
    }

    #[test]
    fn kgr_examples() {
        let key = BitString(vec![true; 10]);
        let ok = KeyPairResult::new(&key, &key, 100.0).unwrap();
        assert_eq!(kgr(std::slice::from_ref(&ok), 0.0).unwrap(), 0.1);
        let bad = KeyPairResult::new(&key, &key.complement(), 100.0).unwrap();
        assert_eq!(kgr(std::slice::from_ref(&bad), 20.0).unwrap(), 0.0);
        assert_eq!(kgr(&[ok, bad], 0.0).unwrap(), 0.05);
        assert!(kgr(&[], 0.0).is_err());
    }

    #[test]
    fn curve_shapes() {
        let key = bs("0000000000");
        let r = KeyPairResult::new(&key, &key, 50.0).unwrap();
        let c = kgr_curve(std::slice::from_ref(&r), &[0.0, 5.0, 10.0, 15.0, 20.0]).unwrap();
        assert_eq!(c.len(), 5);
        assert!(c.iter().all(|&(_, v)| v == 0.2));
        assert!(kgr_curve(std::slice::from_ref(&r), &[]).unwrap().is_empty());
        assert!(matches!(kgr_curve(&[r], &[5.0, 0.0]), Err(Error::Param(_))));
    }

    #[test]
    fn threshold_boundary_is_inclusive() {
        let r = KeyPairResult::new(&bs("00000"), &bs("00001"), 1.0).unwrap();
        assert!(r.succeeds_at(20.0));
        assert!(!r.succeeds_at(19.99));
    }

    fn pairs() -> impl Strategy<Value = Vec<(Vec<bool>, Vec<bool>, f64)>> {
        prop::collection::vec(
            (1usize..40).prop_flat_map(|n| {
                (prop::collection::vec(any::<bool>(), n), prop::collection::vec(any::<bool>(), n), 1.0f64..500.0)
            }),
            1..12,
        )
    }

    proptest! {
        #[test]
        fn ber_is_symmetric(a in prop::collection::vec(any::<bool>(), 1..64), seed: u64) {
            let a = BitString(a);
            let b = crate::encoding::permute_bits(&a, seed);
            prop_assert_eq!(ber(&a, &b).unwrap(), ber(&b, &a).unwrap());
        }

        #[test]
        fn curve_is_monotone_and_saturates(p in pairs()) {
            let results: Vec<KeyPairResult> = p
                .into_iter()
                .map(|(a, b, s)| KeyPairResult::new(&BitString(a), &BitString(b), s).unwrap())
                .collect();
            let c = kgr_curve(&results, &[0.0, 5.0, 10.0, 15.0, 20.0, 50.0, 100.0]).unwrap();
            for w in c.windows(2) {
                prop_assert!(w[0].1 <= w[1].1);
            }
            let total_bits: usize = results.iter().map(|r| r.key_len_bits).sum();
            let total_samples: f64 = results.iter().map(|r| r.samples_used).sum();
            prop_assert!((c.last().unwrap().1 - total_bits as f64 / total_samples).abs() < 1e-12);
        }
    }
}

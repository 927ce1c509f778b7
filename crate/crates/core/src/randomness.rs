//! Statistical randomness tests from NIST SP 800-22, at significance 0.01.

use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::checked_gamma_ur;

use crate::encoding::{permute_bits, BitString};
use crate::{Error, Result};

pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestId {
    ApproxEntropy,
    Frequency,
    BlockFrequency,
    CumulativeSums,
    Runs,
    LongestRunOfOnes,
    Fft,
    Serial,
}

impl TestId {
    pub const ALL: [TestId; 8] = [
        Self::ApproxEntropy,
        Self::Frequency,
        Self::BlockFrequency,
        Self::CumulativeSums,
        Self::Runs,
        Self::LongestRunOfOnes,
        Self::Fft,
        Self::Serial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ApproxEntropy => "ApproxEntropy",
            Self::Frequency => "Frequency",
            Self::BlockFrequency => "BlockFrequency",
            Self::CumulativeSums => "CumulativeSums",
            Self::Runs => "Runs",
            Self::LongestRunOfOnes => "LongestRunOfOnes",
            Self::Fft => "Fft",
            Self::Serial => "Serial",
        }
    }

    pub fn min_length(self) -> usize {
        match self {
            Self::Fft => 64,
            Self::LongestRunOfOnes | Self::Serial | Self::ApproxEntropy => 128,
            _ => 100,
        }
    }
}

impl fmt::Display for TestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown test {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestParams {
    /// Block length for BlockFrequency.
    pub block_len: usize,
    /// Pattern length for Serial.
    pub serial_m: usize,
    /// Pattern length for ApproxEntropy.
    pub apen_m: usize,
}

impl Default for TestParams {
    fn default() -> Self {
        Self { block_len: 20, serial_m: 2, apen_m: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test_id: TestId,
    /// The deciding p-value (the smaller one for Serial).
    pub p_value: f64,
    /// Every p-value the test produces.
    pub p_values: Vec<f64>,
    pub pass: bool,
    pub params: TestParams,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Ran(TestReport),
    Skipped { test_id: TestId, reason: String },
}

impl Outcome {
    pub fn test_id(&self) -> TestId {
        match self {
            Self::Ran(r) => r.test_id,
            Self::Skipped { test_id, .. } => *test_id,
        }
    }

    pub fn passed(&self) -> Option<bool> {
        match self {
            Self::Ran(r) => Some(r.pass),
            Self::Skipped { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub raw: Vec<Outcome>,
    pub permuted: Option<Vec<Outcome>>,
}

impl Battery {
    pub fn raw_passes(&self) -> usize {
        count_passes(&self.raw)
    }

    pub fn permuted_passes(&self) -> Option<usize> {
        self.permuted.as_deref().map(count_passes)
    }
}

pub fn count_passes(outcomes: &[Outcome]) -> usize {
    outcomes.iter().filter(|o| o.passed() == Some(true)).count()
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    checked_gamma_ur(a, x).unwrap_or(0.0)
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        0.0
    } else {
        p.clamp(0.0, 1.0)
    }
}

pub fn frequency(bits: &[bool]) -> f64 {
    let n = bits.len() as f64;
    let s: f64 = bits.iter().map(|&b| if b { 1.0 } else { -1.0 }).sum();
    clamp_p(erfc(s.abs() / n.sqrt() / std::f64::consts::SQRT_2))
}

pub fn block_frequency(bits: &[bool], m: usize) -> f64 {
    let blocks = bits.len() / m;
    let chi2: f64 = bits
        .chunks_exact(m)
        .take(blocks)
        .map(|b| {
            let pi = b.iter().filter(|&&v| v).count() as f64 / m as f64;
            (pi - 0.5).powi(2)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    clamp_p(igamc(blocks as f64 / 2.0, chi2 / 2.0))
}

/// Returns (forward, backward) p-values.
pub fn cumulative_sums(bits: &[bool]) -> (f64, f64) {
    let n = bits.len() as f64;
    let p_for = |walk: &mut dyn Iterator<Item = bool>| {
        let mut s = 0i64;
        let mut z = 0i64;
        for b in walk {
            s += if b { 1 } else { -1 };
            z = z.max(s.abs());
        }
        if z == 0 {
            return 1.0;
        }
        let z = z as f64;
        let sn = n.sqrt();
        let mut sum1 = 0.0;
        let mut k = ((-n / z + 1.0) / 4.0).floor();
        while k <= ((n / z - 1.0) / 4.0).floor() {
            sum1 += normal_cdf((4.0 * k + 1.0) * z / sn) - normal_cdf((4.0 * k - 1.0) * z / sn);
            k += 1.0;
        }
        let mut sum2 = 0.0;
        let mut k = ((-n / z - 3.0) / 4.0).floor();
        while k <= ((n / z - 1.0) / 4.0).floor() {
            sum2 += normal_cdf((4.0 * k + 3.0) * z / sn) - normal_cdf((4.0 * k + 1.0) * z / sn);
            k += 1.0;
        }
        clamp_p(1.0 - sum1 + sum2)
    };
    (p_for(&mut bits.iter().copied()), p_for(&mut bits.iter().rev().copied()))
}

pub fn runs(bits: &[bool]) -> f64 {
    let n = bits.len() as f64;
    let pi = bits.iter().filter(|&&b| b).count() as f64 / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return 0.0;
    }
    let v = 1 + bits.windows(2).filter(|w| w[0] != w[1]).count();
    let num = (v as f64 - 2.0 * n * pi * (1.0 - pi)).abs();
    let den = 2.0 * (2.0 * n).sqrt() * pi * (1.0 - pi);
    clamp_p(erfc(num / den))
}

pub fn longest_run_of_ones(bits: &[bool]) -> f64 {
    let n = bits.len();
    let (m, lo, probs): (usize, usize, &[f64]) = if n < 6272 {
        (8, 1, &[0.2148, 0.3672, 0.2305, 0.1875])
    } else if n < 750_000 {
        (128, 4, &[0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124])
    } else {
        (10_000, 10, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    };
    let k = probs.len() - 1;
    let mut counts = vec![0usize; probs.len()];
    for block in bits.chunks_exact(m) {
        let (mut run, mut longest) = (0usize, 0usize);
        for &b in block {
            run = if b { run + 1 } else { 0 };
            longest = longest.max(run);
        }
        counts[longest.clamp(lo, lo + k) - lo] += 1;
    }
    let blocks = (n / m) as f64;
    let chi2: f64 = counts
        .iter()
        .zip(probs)
        .map(|(&v, &p)| (v as f64 - blocks * p).powi(2) / (blocks * p))
        .sum();
    clamp_p(igamc(k as f64 / 2.0, chi2 / 2.0))
}

pub fn spectral(bits: &[bool]) -> f64 {
    let n = bits.len();
    let mut buf: Vec<Complex<f64>> =
        bits.iter().map(|&b| Complex::new(if b { 1.0 } else { -1.0 }, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nf = n as f64;
    let threshold = ((1.0f64 / 0.05).ln() * nf).sqrt();
    let n0 = 0.95 * nf / 2.0;
    let n1 = buf[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let d = (n1 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    clamp_p(erfc(d.abs() / std::f64::consts::SQRT_2))
}

/// Frequencies of all overlapping `m`-bit patterns, with wrap-around.
fn pattern_counts(bits: &[bool], m: usize) -> Vec<usize> {
    let n = bits.len();
    let mut counts = vec![0usize; 1 << m];
    if m == 0 {
        counts[0] = n;
        return counts;
    }
    for i in 0..n {
        let v = (0..m).fold(0usize, |acc, j| acc << 1 | bits[(i + j) % n] as usize);
        counts[v] += 1;
    }
    counts
}

fn psi_sq(bits: &[bool], m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let n = bits.len() as f64;
    let sum: f64 = pattern_counts(bits, m).iter().map(|&c| (c * c) as f64).sum();
    sum * (1usize << m) as f64 / n - n
}

/// Returns (p1, p2).
pub fn serial(bits: &[bool], m: usize) -> (f64, f64) {
    let (a, b, c) = (psi_sq(bits, m), psi_sq(bits, m - 1), psi_sq(bits, m.saturating_sub(2)));
    let d1 = a - b;
    let d2 = a - 2.0 * b + c;
    let p1 = igamc(2f64.powi(m as i32 - 2), d1 / 2.0);
    let p2 = igamc(2f64.powi(m as i32 - 3), d2 / 2.0);
    (clamp_p(p1), clamp_p(p2))
}

pub fn approximate_entropy(bits: &[bool], m: usize) -> f64 {
    let n = bits.len() as f64;
    let phi = |m: usize| -> f64 {
        pattern_counts(bits, m)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi2 = 2.0 * n * (std::f64::consts::LN_2 - apen);
    clamp_p(igamc(2f64.powi(m as i32 - 1), chi2 / 2.0))
}

/// Run one test with the documented minimum lengths and parameter checks.
pub fn run_test(bits: &BitString, test_id: TestId, params: &TestParams) -> Result<TestReport> {
    let b = bits.bits();
    let n = b.len();
    let needed = test_id.min_length();
    if n < needed {
        return Err(Error::Length { test: test_id.as_str(), needed, got: n });
    }
    let log2n = (usize::BITS - 1 - n.leading_zeros()) as usize;
    let p_values = match test_id {
        TestId::Frequency => vec![frequency(b)],
        TestId::BlockFrequency => {
            if params.block_len < 2 || params.block_len > n {
                return Err(Error::Param(format!("block length {} for {n} bits", params.block_len)));
            }
            vec![block_frequency(b, params.block_len)]
        }
        TestId::CumulativeSums => {
            let (f, r) = cumulative_sums(b);
            vec![f, r]
        }
        TestId::Runs => vec![runs(b)],
        TestId::LongestRunOfOnes => vec![longest_run_of_ones(b)],
        TestId::Fft => vec![spectral(b)],
        TestId::Serial => {
            if params.serial_m < 2 || params.serial_m + 2 > log2n {
                return Err(Error::Param(format!("serial m={} for {n} bits", params.serial_m)));
            }
            let (p1, p2) = serial(b, params.serial_m);
            vec![p1, p2]
        }
        TestId::ApproxEntropy => {
            if params.apen_m < 1 || params.apen_m + 5 > log2n {
                return Err(Error::Param(format!("approximate entropy m={} for {n} bits", params.apen_m)));
            }
            vec![approximate_entropy(b, params.apen_m)]
        }
    };
    // Cumulative sums decides on the forward walk.
    let p_value = match test_id {
        TestId::CumulativeSums => p_values[0],
        _ => p_values.iter().copied().fold(1.0, f64::min),
    };
    Ok(TestReport { test_id, p_value, p_values, pass: p_value >= ALPHA, params: *params, n })
}

fn run_all(bits: &BitString, params: &TestParams) -> Vec<Outcome> {
    TestId::ALL
        .iter()
        .map(|&t| match run_test(bits, t, params) {
            Ok(r) => Outcome::Ran(r),
            Err(e) => Outcome::Skipped { test_id: t, reason: e.to_string() },
        })
        .collect()
}

/// All eight tests on `bits` and, with a seed, on a seeded permutation of it.
pub fn run_battery(bits: &BitString, permute_seed: Option<u64>, params: &TestParams) -> Battery {
    Battery {
        raw: run_all(bits, params),
        permuted: permute_seed.map(|s| run_all(&permute_bits(bits, s), params)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn bits(s: &str) -> Vec<bool> {
        s.bytes().map(|c| c == b'1').collect()
    }

    #[test]
    fn closed_form_examples() {
        let zeros = BitString(vec![false; 128]);
        let r = run_test(&zeros, TestId::Frequency, &TestParams::default()).unwrap();
        approx::assert_relative_eq!(r.p_value, erfc(128f64.sqrt() / 2f64.sqrt()), max_relative = 1e-8);
        assert!(r.p_value < 1e-10 && !r.pass);

        let alt = BitString((0..128).map(|i| i % 2 == 1).collect());
        let r = run_test(&alt, TestId::Frequency, &TestParams::default()).unwrap();
        assert_eq!(r.p_value, 1.0);
        let r = run_test(&alt, TestId::Runs, &TestParams::default()).unwrap();
        assert!(!r.pass);
    }

    #[test]
    fn length_and_param_errors() {
        let short = BitString(vec![true; 99]);
        assert!(matches!(
            run_test(&short, TestId::Frequency, &TestParams::default()),
            Err(Error::Length { needed: 100, got: 99, .. })
        ));
        let ok = BitString(vec![true; 200]);
        let bad = TestParams { block_len: 0, ..TestParams::default() };
        assert!(matches!(run_test(&ok, TestId::BlockFrequency, &bad), Err(Error::Param(_))));
    }

    #[test]
    fn empty_input_skips_everything() {
        let b = run_battery(&BitString::default(), Some(1), &TestParams::default());
        assert_eq!(b.raw.len(), 8);
        assert!(b.raw.iter().all(|o| matches!(o, Outcome::Skipped { .. })));
        assert_eq!(b.permuted_passes(), Some(0));
    }

    #[test]
    fn all_zero_key_fails_counting_tests() {
        let b = run_battery(&BitString(vec![false; 2048]), None, &TestParams::default());
        for o in &b.raw {
            if matches!(
                o.test_id(),
                TestId::Frequency | TestId::Runs | TestId::ApproxEntropy | TestId::CumulativeSums
            ) {
                assert_eq!(o.passed(), Some(false), "{:?}", o.test_id());
            }
        }
    }

    #[test]
    fn igamc_edges() {
        assert_eq!(igamc(1.0, 0.0), 1.0);
        assert_eq!(igamc(1.0, f64::INFINITY), 0.0);
        // Q(1, x) = exp(-x)
        assert_abs_diff_eq!(igamc(1.0, 2.0), (-2.0f64).exp(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn p_values_in_unit_interval(v in prop::collection::vec(any::<bool>(), 128..600)) {
            let b = BitString(v);
            for o in run_battery(&b, None, &TestParams::default()).raw {
                if let Outcome::Ran(r) = o {
                    prop_assert!(r.p_values.iter().all(|p| (0.0..=1.0).contains(p)));
                    prop_assert_eq!(r.pass, r.p_value >= ALPHA);
                }
            }
        }

        #[test]
        fn frequency_is_complement_symmetric(v in prop::collection::vec(any::<bool>(), 100..400)) {
            let b = BitString(v);
            prop_assert_eq!(frequency(b.bits()), frequency(b.complement().bits()));
        }

        #[test]
        fn frequency_ignores_order(v in prop::collection::vec(any::<bool>(), 100..400), seed: u64) {
            let b = BitString(v);
            prop_assert_eq!(frequency(b.bits()), frequency(permute_bits(&b, seed).bits()));
        }
    }

    #[test]
    fn tiny_vectors_from_the_standard() {
        assert_abs_diff_eq!(frequency(&bits("1011010101")), 0.527089, epsilon = 1e-6);
        assert_abs_diff_eq!(block_frequency(&bits("0110011010"), 3), 0.801252, epsilon = 1e-6);
        assert_abs_diff_eq!(runs(&bits("1001101011")), 0.147232, epsilon = 1e-6);
        let (p1, p2) = serial(&bits("0011011101"), 3);
        assert_abs_diff_eq!(p1, 0.808792, epsilon = 1e-6);
        assert_abs_diff_eq!(p2, 0.670320, epsilon = 1e-6);
        assert_abs_diff_eq!(approximate_entropy(&bits("0100110101"), 3), 0.261961, epsilon = 1e-6);
    }
}

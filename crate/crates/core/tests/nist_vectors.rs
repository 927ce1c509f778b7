//! Worked examples from the NIST SP 800-22 test descriptions.

use approx::assert_abs_diff_eq;
use skg_core::randomness::*;
use skg_core::BitString;

// First 100 bits of the binary expansion of pi.
const PI_100: &str = "1100100100001111110110101010001000100001011010001100001000110100110001001100011001100010100010111000";

const LONGEST_RUN_128: &str =
    "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";

fn bits(s: &str) -> Vec<bool> {
    s.bytes().map(|c| c == b'1').collect()
}

#[test]
fn pi_prefix_examples() {
    let e = bits(PI_100);
    assert_abs_diff_eq!(frequency(&e), 0.109599, epsilon = 1e-6);
    assert_abs_diff_eq!(block_frequency(&e, 10), 0.706438, epsilon = 1e-6);
    assert_abs_diff_eq!(runs(&e), 0.500798, epsilon = 1e-6);
    let (fwd, rev) = cumulative_sums(&e);
    assert_abs_diff_eq!(fwd, 0.219194, epsilon = 1e-6);
    assert_abs_diff_eq!(rev, 0.114866, epsilon = 1e-6);
    assert_abs_diff_eq!(approximate_entropy(&e, 2), 0.235301, epsilon = 1e-6);
    // The published DFT examples do not follow from their own bits under the
    // current threshold and variance; these values come from a plain FFT.
    assert_abs_diff_eq!(spectral(&e), 0.646355, epsilon = 1e-6);
}

#[test]
fn short_dft_example() {
    assert_abs_diff_eq!(spectral(&bits("1001010011")), 0.468160, epsilon = 1e-6);
}

#[test]
fn longest_run_example() {
    assert_abs_diff_eq!(longest_run_of_ones(&bits(LONGEST_RUN_128)), 0.180598, epsilon = 1e-6);
}

#[test]
fn run_test_reports_the_same_values() {
    let b = BitString(bits(PI_100));
    let params = TestParams { block_len: 10, ..TestParams::default() };
    let r = run_test(&b, TestId::BlockFrequency, &params).unwrap();
    assert_abs_diff_eq!(r.p_value, 0.706438, epsilon = 1e-6);
    assert!(r.pass);
    let r = run_test(&b, TestId::CumulativeSums, &params).unwrap();
    assert_eq!(r.p_values.len(), 2);
    assert_abs_diff_eq!(r.p_value, 0.219194, epsilon = 1e-6);
}

use skg_core::channel::{pearson, simulate_capture};
use skg_core::scattering::{build_filter_bank, mean_correlation_by_order, path_correlations, scatter};
use skg_core::{seed, ChannelConfig, ScatteringConfig};

#[test]
fn correlation_drops_with_order_and_for_the_eavesdropper() {
    let bank = build_filter_bank::<f64>(&ScatteringConfig::default(), 9000).unwrap();
    let (mut sta, mut eve) = ([0.0; 3], [0.0; 3]);
    let mut n = 0.0;
    for s in 0..3 {
        let cfg = ChannelConfig { seed: seed::derive(41, &[s]), ..ChannelConfig::default() };
        let (a, b, e) = simulate_capture::<f64>(&cfg).unwrap();
        for k in 0..cfg.n_subcarriers {
            let fa = scatter(a.subcarrier(k), &bank).unwrap();
            let fb = scatter(b.subcarrier(k), &bank).unwrap();
            let fe = scatter(e.subcarrier(k), &bank).unwrap();
            let rs = mean_correlation_by_order(&fa.paths, &path_correlations(&fa, &fb).unwrap());
            let re = mean_correlation_by_order(&fa.paths, &path_correlations(&fa, &fe).unwrap());
            for o in 0..3 {
                sta[o] += rs[o].unwrap();
                eve[o] += re[o].unwrap();
            }
            n += 1.0;
        }
    }
    let (sta, eve) = (sta.map(|v| v / n), eve.map(|v| v / n));
    assert!(sta[0] > sta[1] && sta[1] > sta[2], "{sta:?}");
    assert!(eve[0] < sta[0] - 0.2, "{eve:?} vs {sta:?}");
}

#[test]
fn raw_eavesdropper_fading_is_weakly_correlated() {
    let cfg = ChannelConfig { seed: 8, snr_db: 60.0, jitter_max: 0.0, am_depth: 0.0, ..ChannelConfig::default() };
    let (a, b, e) = simulate_capture::<f64>(&cfg).unwrap();
    let rb = pearson(a.subcarrier(0), b.subcarrier(0)).unwrap();
    let re = pearson(a.subcarrier(0), e.subcarrier(0)).unwrap();
    assert!(rb > 0.99, "{rb}");
    assert!(re.abs() < 0.5, "{re}");
}

use ndarray::Array1;
use skg_core::channel::simulate_capture;
use skg_core::scattering::{build_filter_bank, scatter};
use skg_core::{seed, ChannelConfig, ScatteringConfig};

fn shift(x: &Array1<f64>, tau: usize) -> Array1<f64> {
    let n = x.len();
    Array1::from_shape_fn(n, |t| x[t.saturating_sub(tau).min(n - 1)])
}

#[test]
fn small_shifts_barely_move_the_features() {
    let sc = ScatteringConfig::default();
    let bank = build_filter_bank::<f64>(&sc, 9000).unwrap();
    let mut worst: f64 = 0.0;
    for s in 0..6 {
        let cfg = ChannelConfig { seed: seed::derive(17, &[s]), ..ChannelConfig::default() };
        let (ap, _, _) = simulate_capture::<f64>(&cfg).unwrap();
        let x = ap.subcarrier(0).to_owned();
        let base = scatter(x.view(), &bank).unwrap().coeffs;
        let norm = base.iter().map(|v| v * v).sum::<f64>().sqrt();
        for tau in [1, 4, sc.invariance_scale / 16] {
            let moved = scatter(shift(&x, tau).view(), &bank).unwrap().coeffs;
            let diff = (&moved - &base).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(diff / norm);
        }
    }
    assert!(worst <= 0.05, "relative change {worst}");
}

#[test]
fn order_zero_carries_most_of_the_energy() {
    let cfg = ChannelConfig { seed: 3, ..ChannelConfig::default() };
    let (ap, _, _) = simulate_capture::<f64>(&cfg).unwrap();
    let bank = build_filter_bank::<f64>(&ScatteringConfig::default(), 9000).unwrap();
    let f = scatter(ap.subcarrier(1), &bank).unwrap();
    let energy = |order: u8| -> f64 {
        f.paths.iter().zip(f.coeffs.rows()).filter(|(p, _)| p.order == order).map(|(_, r)| r.iter().map(|v| v * v).sum::<f64>()).sum()
    };
    let (e0, e1, e2) = (energy(0), energy(1), energy(2));
    assert!(e0 > e1 && e1 > e2 && e2 > 0.0, "{e0} {e1} {e2}");
}

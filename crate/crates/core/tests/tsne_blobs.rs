use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use skg_core::embedding::{tsne, PointSet, TsneInit};
use skg_core::scattering::RepTag;
use skg_core::TsneConfig;

fn blobs(seed: u64, per: usize, dim: usize) -> (PointSet<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 3 * per;
    let mut x = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i / per;
        for j in 0..dim {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[[i, j]] = z + if j == k { 12.0 } else { 0.0 };
        }
        labels.push(k);
    }
    let tag = RepTag { timestamp_id: "blobs".into(), subcarrier: 0 };
    (PointSet { points: x, provenance: vec![tag; n] }, labels)
}

fn silhouette(y: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = y.nrows();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if i != j {
                let d = ((y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2)).sqrt();
                sums[labels[j]] += d;
                counts[labels[j]] += 1;
            }
        }
        let a = sums[labels[i]] / counts[labels[i]] as f64;
        let b = (0..k).filter(|&c| c != labels[i]).map(|c| sums[c] / counts[c] as f64).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

#[test]
fn separated_blobs_stay_separated() {
    let (ps, labels) = blobs(3, 60, 10);
    for init in [TsneInit::Pca, TsneInit::Random] {
        let cfg = TsneConfig { perplexity: 20.0, n_iter: 600, init, seed: 9, ..TsneConfig::default() };
        let e = tsne(&ps, &cfg).unwrap();
        let s = silhouette(&e.points, &labels);
        assert!(s > 0.7, "{init:?}: silhouette {s}");
        let after = e.kl_after_exaggeration(cfg.exaggeration_iters).unwrap();
        assert!(e.final_kl().unwrap() <= after);
    }
}

#[test]
fn single_precision_finds_the_same_structure() {
    let (ps, labels) = blobs(4, 40, 6);
    let ps32 = PointSet { points: ps.points.mapv(|v| v as f32), provenance: ps.provenance.clone() };
    let cfg = TsneConfig { perplexity: 15.0, n_iter: 500, ..TsneConfig::default() };
    let e = tsne(&ps32, &cfg).unwrap();
    assert!(silhouette(&e.points.mapv(f64::from), &labels) > 0.7);
}

#[test]
fn fixed_seed_is_deterministic() {
    let (ps, _) = blobs(5, 30, 5);
    let cfg = TsneConfig { perplexity: 10.0, n_iter: 300, init: TsneInit::Random, seed: 2, ..TsneConfig::default() };
    assert_eq!(tsne(&ps, &cfg).unwrap().points, tsne(&ps, &cfg).unwrap().points);
}

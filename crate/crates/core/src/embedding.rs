//! Exact t-SNE on stacked scattering frames.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scattering::{RepTag, ScatteringFeatures};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsneInit {
    /// Leading principal components with a fixed sign convention.
    Pca,
    /// Small isotropic Gaussian drawn from the seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub n_iter: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub seed: u64,
    pub init: TsneInit,
    /// Iterations between KL checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 250.0,
            n_iter: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            seed: 0,
            init: TsneInit::Pca,
            checkpoint_every: 50,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.perplexity >= 1.0) {
            return Err(Error::Config(format!("perplexity must be >= 1, got {}", self.perplexity)));
        }
        if self.exaggeration_iters > self.n_iter {
            return Err(Error::Config("exaggeration_iters exceeds n_iter".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.early_exaggeration >= 1.0) {
            return Err(Error::Config("learning_rate must be > 0 and early_exaggeration >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Frames of one or more representations as points, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet<F> {
    pub points: Array2<F>,
    pub provenance: Vec<RepTag>,
}

impl<F: Real> PointSet<F> {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    /// Per-dimension z-scores. Constant dimensions are only centred.
    pub fn standardized(&self) -> Self {
        let mut p = self.points.clone();
        for mut col in p.columns_mut() {
            let n = F::of_usize(col.len());
            let mean = col.sum() / n;
            let var = col.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let sd = var.sqrt();
            let scale = if sd > F::zero() { F::one() / sd } else { F::one() };
            col.mapv_inplace(|v| (v - mean) * scale);
        }
        Self { points: p, provenance: self.provenance.clone() }
    }

    /// Element-wise `ln(eps + v)`, a common companion to scattering features.
    pub fn log_compressed(&self, eps: F) -> Self {
        Self { points: self.points.mapv(|v| (eps + v).ln()), provenance: self.provenance.clone() }
    }
}

/// Concatenate the frames of `reps` along the point axis.
pub fn stack_representations<F: Real>(reps: &[ScatteringFeatures<F>]) -> Result<PointSet<F>> {
    let first = reps.first().ok_or_else(|| Error::Shape("no representations to stack".into()))?;
    for r in reps {
        if r.paths != first.paths {
            return Err(Error::Shape(format!(
                "representations have different path tables ({} vs {} paths)",
                first.n_paths(),
                r.n_paths()
            )));
        }
    }
    let views: Vec<ArrayView2<'_, F>> = reps.iter().map(|r| r.coeffs.t()).collect();
    let points = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?;
    let provenance = reps
        .iter()
        .flat_map(|r| {
            let tag = r.tag.clone().unwrap_or(RepTag { timestamp_id: String::new(), subcarrier: 0 });
            std::iter::repeat_n(tag, r.n_frames())
        })
        .collect();
    Ok(PointSet { points, provenance })
}

/// Remove each path's mean over frames and scale the whole matrix to unit
/// RMS, so representations captured at different levels stack on one scale.
pub fn normalize_representation<F: Real>(f: &ScatteringFeatures<F>) -> ScatteringFeatures<F> {
    let mut out = f.clone();
    if out.coeffs.is_empty() {
        return out;
    }
    for mut row in out.coeffs.rows_mut() {
        let mean = row.sum() / F::of_usize(row.len());
        row.mapv_inplace(|v| v - mean);
    }
    let rms = (out.coeffs.iter().map(|&v| v * v).sum::<F>() / F::of_usize(out.coeffs.len())).sqrt();
    if rms > F::zero() {
        out.coeffs.mapv_inplace(|v| v / rms);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D<F> {
    /// `[n_points × 2]`.
    pub points: Array2<F>,
    pub source: Vec<RepTag>,
    /// `(iteration, KL)` checkpoints; the iteration counts completed steps.
    pub kl_trace: Vec<(usize, f64)>,
}

impl<F: Real> Embedding2D<F> {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn point(&self, i: usize) -> [F; 2] {
        [self.points[[i, 0]], self.points[[i, 1]]]
    }

    /// KL at the last checkpoint of the exaggeration phase.
    pub fn kl_after_exaggeration(&self, exaggeration_iters: usize) -> Option<f64> {
        self.kl_trace.iter().find(|(it, _)| *it == exaggeration_iters).map(|&(_, kl)| kl)
    }

    pub fn final_kl(&self) -> Option<f64> {
        self.kl_trace.last().map(|&(_, kl)| kl)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,y,timestamp_id,subcarrier\n");
        for i in 0..self.len() {
            let tag = self.source.get(i);
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.points[[i, 0]],
                self.points[[i, 1]],
                tag.map_or("", |t| t.timestamp_id.as_str()),
                tag.map_or(0, |t| t.subcarrier)
            );
        }
        s
    }

    pub fn from_csv(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "x,y,timestamp_id,subcarrier" => {}
            _ => return Err(err(1, "expected header x,y,timestamp_id,subcarrier".into())),
        }
        let mut coords = Vec::new();
        let mut source = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err(i + 1, format!("expected 4 fields, found {}", f.len())));
            }
            for v in &f[..2] {
                let x: f64 = v.trim().parse().map_err(|_| err(i + 1, format!("bad coordinate {v:?}")))?;
                if !x.is_finite() {
                    return Err(err(i + 1, "non-finite coordinate".into()));
                }
                coords.push(F::of(x));
            }
            let subcarrier = f[3].trim().parse().map_err(|_| err(i + 1, format!("bad subcarrier {:?}", f[3])))?;
            source.push(RepTag { timestamp_id: f[2].to_string(), subcarrier });
        }
        if source.is_empty() {
            return Err(err(1, "no points".into()));
        }
        let points = Array2::from_shape_vec((source.len(), 2), coords).map_err(|e| Error::Shape(e.to_string()))?;
        Ok(Self { points, source, kl_trace: Vec::new() })
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv(&text, path)
    }
}

/// `sum p log(p / q)` over the common support, with `0 log 0 = 0`.
pub fn kl_divergence<F: Real>(p: &[F], q: &[F]) -> Result<F> {
    if p.len() != q.len() {
        return Err(Error::Shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let mut kl = F::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > F::zero() {
            if qi <= F::zero() {
                return Err(Error::Domain("q vanishes where p is positive".into()));
            }
            kl = kl + pi * (pi / qi).ln();
        }
    }
    Ok(kl)
}

fn squared_distances<F: Real>(x: ArrayView2<'_, F>) -> Array2<F> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        let xi = x.row(i);
        for j in i + 1..n {
            let v: F = xi.iter().zip(x.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Fill `row` with `p(j | i)` whose entropy matches `target` (natural log of
/// the perplexity) to 1e-5, by bisection on the precision.
fn conditional_row(di: &[f64], i: usize, target: f64, row: &mut [f64]) {
    let n = di.len();
    let dmin = (0..n).filter(|&j| j != i).map(|j| di[j]).fold(f64::INFINITY, f64::min);
    let (mut beta, mut lo, mut hi) = (1.0f64, f64::NEG_INFINITY, f64::INFINITY);
    // Distances are shifted by the row minimum, which leaves the normalized
    // distribution unchanged and keeps the exponentials in range.
    for _ in 0..50 {
        let mut sum = 0.0;
        let mut dsum = 0.0;
        for j in 0..n {
            row[j] = if j == i { 0.0 } else { (-(di[j] - dmin) * beta).exp() };
            sum += row[j];
            dsum += (di[j] - dmin) * row[j];
        }
        let diff = sum.ln() + beta * dsum / sum - target;
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Conditional affinities with per-row bandwidths matched to `perplexity`,
/// then symmetrized and normalized to a joint distribution.
pub fn joint_probabilities<F: Real>(x: ArrayView2<'_, F>, perplexity: f64) -> Array2<F> {
    let n = x.nrows();
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut p = Array2::<f64>::zeros((n, n));
    let mut row = vec![0.0f64; n];
    for i in 0..n {
        let di: Vec<f64> = (0..n).map(|j| d[[i, j]].as_f64()).collect();
        conditional_row(&di, i, target, &mut row);
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    let total = 2.0 * n as f64;
    let mut out = Array2::<F>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = F::of(((p[[i, j]] + p[[j, i]]) / total).max(1e-12));
        }
        out[[i, i]] = F::zero();
    }
    out
}

/// Eigenvectors of a small symmetric matrix by cyclic Jacobi rotations,
/// sorted by descending eigenvalue.
fn symmetric_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    let mut v = Array2::<f64>::eye(n);
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[[i, j]].powi(2)).sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[[k, p]], a[[k, q]]);
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[[p, k]], a[[q, k]]);
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[[k, p]], v[[k, q]]);
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let vals = order.iter().map(|&i| a[[i, i]]).collect();
    let vecs = v.select(Axis(1), &order);
    (vals, vecs)
}

/// Projection on the two leading principal axes, scaled so the first
/// coordinate has standard deviation 1e-4. Each axis is oriented so its
/// largest-magnitude loading is positive.
pub fn pca_init<F: Real>(x: ArrayView2<'_, F>) -> Array2<F> {
    let n = x.nrows();
    let xd = x.mapv(|v| v.as_f64());
    let mean = xd.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let centred = &xd - &mean;
    let cov = centred.t().dot(&centred) / n.max(1) as f64;
    let (_, vecs) = symmetric_eigen(cov);
    let mut axes = Array2::<f64>::zeros((x.ncols(), 2));
    for k in 0..2.min(x.ncols()) {
        let mut col = vecs.column(k).to_owned();
        let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        axes.column_mut(k).assign(&col);
    }
    let y = centred.dot(&axes);
    let sd = (y.column(0).mapv(|v| v * v).sum() / n.max(1) as f64).sqrt();
    let scale = if sd > 0.0 { 1e-4 / sd } else { 0.0 };
    y.mapv(|v| F::of(v * scale))
}

struct Pairwise<F> {
    z: F,
    grad: Vec<[F; 2]>,
}

/// Gradient of KL(P || Q) in a single pass over point pairs.
/// `grad_i = 4 (A_i - R_i / Z)` with `A_i = sum_j p_ij w_ij (y_i - y_j)`,
/// `R_i = sum_j w_ij^2 (y_i - y_j)` and `w_ij = 1 / (1 + |y_i - y_j|^2)`.
fn gradient<F: Real>(p: &Array2<F>, ys: &[[F; 2]], exaggeration: F) -> Pairwise<F> {
    let n = ys.len();
    let mut attr = vec![[F::zero(); 2]; n];
    let mut rep = vec![[F::zero(); 2]; n];
    let mut z = F::zero();
    for i in 0..n {
        let [yi0, yi1] = ys[i];
        let prow = p.row(i);
        let prow = prow.as_slice().expect("standard layout");
        let (mut a0, mut a1, mut r0, mut r1, mut zi) = (F::zero(), F::zero(), F::zero(), F::zero(), F::zero());
        for j in i + 1..n {
            let d0 = yi0 - ys[j][0];
            let d1 = yi1 - ys[j][1];
            let w = F::one() / (F::one() + d0 * d0 + d1 * d1);
            let pw = prow[j] * w;
            let ww = w * w;
            zi = zi + w;
            a0 = a0 + pw * d0;
            a1 = a1 + pw * d1;
            r0 = r0 + ww * d0;
            r1 = r1 + ww * d1;
            attr[j][0] = attr[j][0] - pw * d0;
            attr[j][1] = attr[j][1] - pw * d1;
            rep[j][0] = rep[j][0] - ww * d0;
            rep[j][1] = rep[j][1] - ww * d1;
        }
        attr[i][0] = attr[i][0] + a0;
        attr[i][1] = attr[i][1] + a1;
        rep[i][0] = rep[i][0] + r0;
        rep[i][1] = rep[i][1] + r1;
        z = z + zi;
    }
    let z = z + z;
    let four = F::of(4.0);
    let grad = attr
        .iter()
        .zip(&rep)
        .map(|(a, r)| [four * (exaggeration * a[0] - r[0] / z), four * (exaggeration * a[1] - r[1] / z)])
        .collect();
    Pairwise { z, grad }
}

fn embedding_kl<F: Real>(p: &Array2<F>, ys: &[[F; 2]]) -> f64 {
    let n = ys.len();
    let mut z = 0.0f64;
    let mut w = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d0 = (ys[i][0] - ys[j][0]).as_f64();
            let d1 = (ys[i][1] - ys[j][1]).as_f64();
            let v = 1.0 / (1.0 + d0 * d0 + d1 * d1);
            w[i * n + j] = v;
            z += 2.0 * v;
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let pij = p[[i, j]].as_f64();
            if pij > 0.0 {
                kl += 2.0 * pij * (pij / (w[i * n + j] / z)).ln();
            }
        }
    }
    kl
}

/// Embed `points` in two dimensions.
pub fn tsne<F: Real>(points: &PointSet<F>, cfg: &TsneConfig) -> Result<Embedding2D<F>> {
    cfg.validate()?;
    let n = points.len();
    if (n as f64) < 3.0 * cfg.perplexity {
        return Err(Error::Size(format!(
            "t-SNE with perplexity {} needs at least {} points, got {n}",
            cfg.perplexity,
            (3.0 * cfg.perplexity).ceil()
        )));
    }
    if points.points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("t-SNE input contains non-finite values".into()));
    }
    let p = joint_probabilities(points.points.view(), cfg.perplexity);

    let init = match cfg.init {
        TsneInit::Pca => pca_init(points.points.view()),
        TsneInit::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let normal = Normal::new(0.0, 1e-4).expect("valid normal");
            Array2::from_shape_fn((n, 2), |_| F::of(normal.sample(&mut rng)))
        }
    };
    let mut ys: Vec<[F; 2]> = init.rows().into_iter().map(|r| [r[0], r[1]]).collect();
    let mut update = vec![[F::zero(); 2]; n];
    let mut gains = vec![[F::one(); 2]; n];
    let lr = F::of(cfg.learning_rate);
    let min_gain = F::of(0.01);
    let mut kl_trace = Vec::new();

    for it in 0..cfg.n_iter {
        let exaggerating = it < cfg.exaggeration_iters;
        let ex = if exaggerating { F::of(cfg.early_exaggeration) } else { F::one() };
        let momentum = F::of(if exaggerating { cfg.momentum_initial } else { cfg.momentum_final });
        let Pairwise { z, grad } = gradient(&p, &ys, ex);
        if !z.is_finite() {
            return Err(Error::Data("t-SNE diverged".into()));
        }
        for i in 0..n {
            for k in 0..2 {
                let g = grad[i][k];
                gains[i][k] = if (g > F::zero()) != (update[i][k] > F::zero()) {
                    gains[i][k] + F::of(0.2)
                } else {
                    (gains[i][k] * F::of(0.8)).max(min_gain)
                };
                update[i][k] = momentum * update[i][k] - lr * gains[i][k] * g;
                ys[i][k] = ys[i][k] + update[i][k];
            }
        }
        let n_f = F::of_usize(n);
        for k in 0..2 {
            let mean = ys.iter().map(|y| y[k]).sum::<F>() / n_f;
            ys.iter_mut().for_each(|y| y[k] = y[k] - mean);
        }
        let done = it + 1;
        if done % cfg.checkpoint_every == 0 || done == cfg.exaggeration_iters || done == cfg.n_iter {
            kl_trace.push((done, embedding_kl(&p, &ys)));
        }
    }
    if ys.iter().any(|y| !y[0].is_finite() || !y[1].is_finite()) {
        return Err(Error::Data("t-SNE produced non-finite coordinates".into()));
    }
    let mut out = Array2::zeros((n, 2));
    for (i, y) in ys.iter().enumerate() {
        out.slice_mut(s![i, ..]).assign(&Array1::from(vec![y[0], y[1]]));
    }
    Ok(Embedding2D { points: out, source: points.provenance.clone(), kl_trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::{Path as SPath, ScatteringConfig};
    use approx::assert_abs_diff_eq;

    fn feature(values: Array2<f64>, ts: &str) -> ScatteringFeatures<f64> {
        let paths = (0..values.nrows())
            .map(|i| SPath { order: if i == 0 { 0 } else { 1 }, lambda1: (i > 0).then(|| i - 1), lambda2: None })
            .collect();
        ScatteringFeatures { coeffs: values, paths, config: ScatteringConfig::default(), tag: None }.with_tag(ts, 3)
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln(), epsilon = 1e-15);
        assert!(matches!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn stacking_concatenates_frames() {
        let a = feature(Array2::from_shape_fn((24, 563), |(i, j)| (i * 1000 + j) as f64), "t0");
        let one = stack_representations(std::slice::from_ref(&a)).unwrap();
        assert_eq!((one.len(), one.dim()), (563, 24));
        assert_eq!(one.points[[5, 2]], 2005.0);
        let two = stack_representations(&[a.clone(), a.clone()]).unwrap();
        assert_eq!(two.len(), 1126);
        assert_eq!(two.points.slice(s![..563, ..]), two.points.slice(s![563.., ..]));
        assert_eq!(two.provenance[600].timestamp_id, "t0");
        assert!(matches!(stack_representations::<f64>(&[]), Err(Error::Shape(_))));
        let b = feature(Array2::zeros((3, 10)), "t1");
        assert!(matches!(stack_representations(&[a, b]), Err(Error::Shape(_))));
    }

    #[test]
    fn perplexity_is_matched_per_row() {
        let n = 60;
        let x = Array2::from_shape_fn((n, 3), |(i, j)| ((i * 7 + j * 13) % 17) as f64 + i as f64 * 0.1);
        let d = squared_distances(x.view());
        let mut row = vec![0.0; n];
        for i in [0, 17, 59] {
            let di: Vec<f64> = d.row(i).to_vec();
            conditional_row(&di, i, 10f64.ln(), &mut row);
            let h: f64 = -row.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>();
            assert_abs_diff_eq!(h.exp(), 10.0, epsilon = 1e-3);
        }
        let p = joint_probabilities(x.view(), 10.0);
        assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-9);
        for i in 0..n {
            assert_eq!(p[[i, i]], 0.0);
            for j in 0..n {
                assert_eq!(p[[i, j]], p[[j, i]]);
            }
        }
    }

    #[test]
    fn eigen_of_diagonal_and_rotated() {
        let (vals, vecs) = symmetric_eigen(ndarray::arr2(&[[1.0, 0.0], [0.0, 3.0]]));
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vecs[[1, 0]].abs(), 1.0, epsilon = 1e-12);
        let (vals, _) = symmetric_eigen(ndarray::arr2(&[[2.0, 1.0], [1.0, 2.0]]));
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_small_and_non_finite_inputs() {
        let cfg = TsneConfig { perplexity: 30.0, ..TsneConfig::default() };
        let few = PointSet { points: Array2::<f64>::zeros((50, 3)), provenance: vec![] };
        assert!(matches!(tsne(&few, &cfg), Err(Error::Size(_))));
        let mut bad = Array2::<f64>::zeros((100, 3));
        bad[[4, 1]] = f64::INFINITY;
        assert!(matches!(tsne(&PointSet { points: bad, provenance: vec![] }, &cfg), Err(Error::Data(_))));
    }

    #[test]
    fn near_duplicate_points_stay_finite() {
        let points = Array2::from_shape_fn((10, 4), |(i, j)| 1.0 + 1e-9 * ((i * 4 + j) % 7) as f64);
        let cfg = TsneConfig { perplexity: 3.0, n_iter: 300, exaggeration_iters: 100, ..TsneConfig::default() };
        let e = tsne(&PointSet { points, provenance: vec![] }, &cfg).unwrap();
        assert!(e.points.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn csv_round_trip() {
        let e = Embedding2D {
            points: ndarray::arr2(&[[0.1, -2.5e-7], [3.0, 1.0 / 3.0]]),
            source: vec![
                RepTag { timestamp_id: "a".into(), subcarrier: 0 },
                RepTag { timestamp_id: "b".into(), subcarrier: 4 },
            ],
            kl_trace: vec![],
        };
        let back = Embedding2D::<f64>::from_csv(&e.to_csv(), Path::new("e.csv")).unwrap();
        assert_eq!(back, e);
        let err = Embedding2D::<f64>::from_csv("x,y,timestamp_id,subcarrier\n1,2,a\n", Path::new("e.csv"));
        assert!(matches!(err, Err(Error::Parse { line: 2, .. })));
    }
}

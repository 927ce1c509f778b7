//! Two-dimensional Gaussian mixtures fitted by EM.

use ndarray::ArrayView2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Real, Result};

/// Iteration cap for EM.
pub const MAX_EM_ITERS: usize = 500;
/// EM stops once the mean per-point log-likelihood gain drops below this.
pub const EM_TOL: f64 = 1e-6;
/// Covariance eigenvalues are floored at this fraction of the data covariance trace.
pub const COV_FLOOR_FRACTION: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmComponent<F> {
    pub mean: [F; 2],
    /// Row-major symmetric covariance.
    pub cov: [[F; 2]; 2],
    pub mixing: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<F> {
    pub components: Vec<GmmComponent<F>>,
    /// Total log-likelihood before the first M-step and after each one.
    pub loglik_trace: Vec<f64>,
    pub seed: u64,
}

/// 2x2 symmetric matrix helpers, all in f64.
#[derive(Debug, Clone, Copy)]
struct Sym {
    a: f64,
    b: f64,
    d: f64,
}

impl Sym {
    fn det(self) -> f64 {
        self.a * self.d - self.b * self.b
    }

    fn eigen(self) -> ([f64; 2], [[f64; 2]; 2]) {
        let tr = self.a + self.d;
        let disc = ((self.a - self.d) * (self.a - self.d) / 4.0 + self.b * self.b).sqrt();
        let (l1, l2) = (tr / 2.0 + disc, tr / 2.0 - disc);
        let v1 = if self.b.abs() > 1e-300 {
            let v = [l1 - self.d, self.b];
            let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
            [v[0] / n, v[1] / n]
        } else if self.a >= self.d {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        };
        ([l1, l2], [v1, [-v1[1], v1[0]]])
    }

    /// Clip eigenvalues from below, keeping eigenvectors.
    fn floored(self, floor: f64) -> Sym {
        let ([l1, l2], [v1, v2]) = self.eigen();
        if l2 >= floor {
            return self;
        }
        let (l1, l2) = (l1.max(floor), l2.max(floor));
        Sym {
            a: l1 * v1[0] * v1[0] + l2 * v2[0] * v2[0],
            b: l1 * v1[0] * v1[1] + l2 * v2[0] * v2[1],
            d: l1 * v1[1] * v1[1] + l2 * v2[1] * v2[1],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Comp {
    mean: [f64; 2],
    cov: Sym,
    mixing: f64,
}

impl Comp {
    fn log_weighted_density(&self, y: [f64; 2]) -> f64 {
        let det = self.cov.det();
        let (dx, dy) = (y[0] - self.mean[0], y[1] - self.mean[1]);
        let maha = (self.cov.d * dx * dx - 2.0 * self.cov.b * dx * dy + self.cov.a * dy * dy) / det;
        self.mixing.ln() - LN_2PI - 0.5 * det.ln() - 0.5 * maha
    }
}

impl<F: Real> GmmComponent<F> {
    fn to_f64(self) -> Comp {
        Comp {
            mean: [self.mean[0].as_f64(), self.mean[1].as_f64()],
            cov: Sym { a: self.cov[0][0].as_f64(), b: self.cov[0][1].as_f64(), d: self.cov[1][1].as_f64() },
            mixing: self.mixing.as_f64(),
        }
    }

    fn from_f64(c: &Comp) -> Self {
        Self {
            mean: [F::of(c.mean[0]), F::of(c.mean[1])],
            cov: [[F::of(c.cov.a), F::of(c.cov.b)], [F::of(c.cov.b), F::of(c.cov.d)]],
            mixing: F::of(c.mixing),
        }
    }

    /// Eigenvalues of the covariance, largest first.
    pub fn cov_eigenvalues(&self) -> [F; 2] {
        let (l, _) = self.to_f64().cov.eigen();
        [F::of(l[0]), F::of(l[1])]
    }

    pub fn is_spd(&self) -> bool {
        let c = self.cov;
        c[0][1] == c[1][0] && c[0][0] > F::zero() && c[0][0] * c[1][1] - c[0][1] * c[1][0] > F::zero()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl<F: Real> GmmModel<F> {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn mixings(&self) -> Vec<F> {
        self.components.iter().map(|c| c.mixing).collect()
    }

    fn comps(&self) -> Vec<Comp> {
        self.components.iter().map(|c| c.to_f64()).collect()
    }

    /// Total log-likelihood of `points`.
    pub fn log_likelihood(&self, points: ArrayView2<'_, F>) -> f64 {
        let comps = self.comps();
        let mut buf = vec![0.0; comps.len()];
        rows(points)
            .map(|y| {
                for (b, c) in buf.iter_mut().zip(&comps) {
                    *b = c.log_weighted_density(y);
                }
                log_sum_exp(&buf)
            })
            .sum()
    }

    /// Bayesian information criterion, `6C - 1` free parameters.
    pub fn bic(&self, points: ArrayView2<'_, F>) -> f64 {
        let n = points.nrows() as f64;
        let k = (6 * self.n_components() - 1) as f64;
        -2.0 * self.log_likelihood(points) + k * n.ln()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let comps: Vec<serde_json::Value> = self
            .components
            .iter()
            .map(|c| {
                serde_json::json!({
                    "mean": [c.mean[0].as_f64(), c.mean[1].as_f64()],
                    "cov": [c.cov[0][0].as_f64(), c.cov[0][1].as_f64(), c.cov[1][0].as_f64(), c.cov[1][1].as_f64()],
                    "mixing": c.mixing.as_f64(),
                })
            })
            .collect();
        serde_json::json!({ "components": comps, "seed": self.seed, "loglik_trace": self.loglik_trace })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        #[derive(Deserialize)]
        struct C {
            mean: [f64; 2],
            cov: [f64; 4],
            mixing: f64,
        }
        #[derive(Deserialize)]
        struct M {
            components: Vec<C>,
            seed: u64,
            loglik_trace: Vec<f64>,
        }
        let m: M = serde_json::from_value(v.clone())?;
        if m.components.is_empty() {
            return Err(Error::Format("mixture without components".into()));
        }
        let components = m
            .components
            .iter()
            .map(|c| GmmComponent {
                mean: [F::of(c.mean[0]), F::of(c.mean[1])],
                cov: [[F::of(c.cov[0]), F::of(c.cov[1])], [F::of(c.cov[2]), F::of(c.cov[3])]],
                mixing: F::of(c.mixing),
            })
            .collect();
        Ok(Self { components, loglik_trace: m.loglik_trace, seed: m.seed })
    }
}

impl<F: Real> Serialize for GmmModel<F> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de, F: Real> Deserialize<'de> for GmmModel<F> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Self::from_json(&v).map_err(serde::de::Error::custom)
    }
}

fn rows<F: Real>(points: ArrayView2<'_, F>) -> impl Iterator<Item = [f64; 2]> + '_ {
    (0..points.nrows()).map(move |i| [points[[i, 0]].as_f64(), points[[i, 1]].as_f64()])
}

/// Posterior component probabilities of `y`.
pub fn responsibilities<F: Real>(model: &GmmModel<F>, y: [F; 2]) -> Vec<F> {
    let y = [y[0].as_f64(), y[1].as_f64()];
    let logs: Vec<f64> = model.comps().iter().map(|c| c.log_weighted_density(y)).collect();
    let lse = log_sum_exp(&logs);
    logs.iter().map(|l| F::of((l - lse).exp())).collect()
}

/// Most probable component of `y`; the lower index wins ties.
pub fn most_likely<F: Real>(model: &GmmModel<F>, y: [F; 2]) -> usize {
    let y = [y[0].as_f64(), y[1].as_f64()];
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in model.comps().iter().enumerate() {
        let l = c.log_weighted_density(y);
        if l > best.1 {
            best = (i, l);
        }
    }
    best.0
}

fn data_covariance(ys: &[[f64; 2]]) -> ([f64; 2], Sym) {
    let n = ys.len() as f64;
    let mx = ys.iter().map(|y| y[0]).sum::<f64>() / n;
    let my = ys.iter().map(|y| y[1]).sum::<f64>() / n;
    let mut s = Sym { a: 0.0, b: 0.0, d: 0.0 };
    for y in ys {
        let (dx, dy) = (y[0] - mx, y[1] - my);
        s.a += dx * dx / n;
        s.b += dx * dy / n;
        s.d += dy * dy / n;
    }
    ([mx, my], s)
}

fn kmeans_pp<R: Rng>(ys: &[[f64; 2]], c: usize, rng: &mut R) -> Vec<[f64; 2]> {
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    let mut centers = vec![ys[rng.random_range(0..ys.len())]];
    let mut dist: Vec<f64> = ys.iter().map(|&y| d2(y, centers[0])).collect();
    while centers.len() < c {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = ys.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            ys[pick]
        } else {
            ys[rng.random_range(0..ys.len())]
        };
        centers.push(next);
        for (d, &y) in dist.iter_mut().zip(ys) {
            *d = d.min(d2(y, next));
        }
    }
    centers
}

/// M-step from a responsibility matrix stored row-major `[n × c]`.
fn m_step(ys: &[[f64; 2]], resp: &[f64], prev: &[Comp], floor: f64) -> Vec<Comp> {
    let c = prev.len();
    let n = ys.len() as f64;
    (0..c)
        .map(|k| {
            let nk: f64 = (0..ys.len()).map(|i| resp[i * c + k]).sum();
            if nk < 1e-12 * n {
                // An emptied component keeps its shape with a negligible weight.
                return Comp { mixing: 1e-300_f64.max(nk / n), ..prev[k] };
            }
            let mut mean = [0.0; 2];
            for (i, y) in ys.iter().enumerate() {
                mean[0] += resp[i * c + k] * y[0];
                mean[1] += resp[i * c + k] * y[1];
            }
            mean = [mean[0] / nk, mean[1] / nk];
            let mut s = Sym { a: 0.0, b: 0.0, d: 0.0 };
            for (i, y) in ys.iter().enumerate() {
                let r = resp[i * c + k];
                let (dx, dy) = (y[0] - mean[0], y[1] - mean[1]);
                s.a += r * dx * dx;
                s.b += r * dx * dy;
                s.d += r * dy * dy;
            }
            let cov = Sym { a: s.a / nk, b: s.b / nk, d: s.d / nk }.floored(floor);
            Comp { mean, cov, mixing: nk / n }
        })
        .collect()
}

/// E-step: fills `resp` and returns the total log-likelihood.
fn e_step(ys: &[[f64; 2]], comps: &[Comp], resp: &mut [f64]) -> f64 {
    let c = comps.len();
    let mut ll = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let row = &mut resp[i * c..(i + 1) * c];
        for (r, comp) in row.iter_mut().zip(comps) {
            *r = comp.log_weighted_density(y);
        }
        let lse = log_sum_exp(row);
        ll += lse;
        row.iter_mut().for_each(|r| *r = (*r - lse).exp());
    }
    ll
}

/// Fit a `c`-component mixture with full covariances.
///
/// Initial means come from k-means++ seeding; initial covariances and
/// weights from the hard assignment to those means.
pub fn fit_gmm<F: Real>(points: ArrayView2<'_, F>, c: usize, seed_value: u64) -> Result<GmmModel<F>> {
    if points.ncols() != 2 {
        return Err(Error::Shape(format!("mixtures are fitted to 2-D points, got {} columns", points.ncols())));
    }
    if c == 0 || points.nrows() < 5 * c {
        return Err(Error::Size(format!("{} points cannot support {c} components (need 5 per component)", points.nrows())));
    }
    let ys: Vec<[f64; 2]> = rows(points).collect();
    if ys.iter().any(|y| !y[0].is_finite() || !y[1].is_finite()) {
        return Err(Error::Data("mixture input contains non-finite points".into()));
    }
    let (_, data_cov) = data_covariance(&ys);
    let floor = (COV_FLOOR_FRACTION * (data_cov.a + data_cov.d)).max(f64::MIN_POSITIVE);

    let mut rng = seed::rng(seed_value, &[c as u64]);
    let centers = kmeans_pp(&ys, c, &mut rng);
    let mut resp = vec![0.0; ys.len() * c];
    for (i, y) in ys.iter().enumerate() {
        let k = (0..c)
            .min_by(|&a, &b| {
                let da = (y[0] - centers[a][0]).powi(2) + (y[1] - centers[a][1]).powi(2);
                let db = (y[0] - centers[b][0]).powi(2) + (y[1] - centers[b][1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or(0);
        resp[i * c + k] = 1.0;
    }
    let fallback: Vec<Comp> =
        centers.iter().map(|&m| Comp { mean: m, cov: data_cov.floored(floor), mixing: 1.0 / c as f64 }).collect();
    let mut comps = m_step(&ys, &resp, &fallback, floor);
    // Hard assignment can leave a component with a single point; give it the
    // data covariance instead of the floor so EM starts from a sane shape.
    let mut fixed = false;
    for (k, comp) in comps.iter_mut().enumerate() {
        let nk: f64 = (0..ys.len()).map(|i| resp[i * c + k]).sum();
        if nk < 2.0 {
            *comp = Comp { mean: centers[k], cov: data_cov.floored(floor), mixing: (nk.max(1.0)) / ys.len() as f64 };
            fixed = true;
        }
    }
    if fixed {
        let total: f64 = comps.iter().map(|c| c.mixing).sum();
        comps.iter_mut().for_each(|c| c.mixing /= total);
    }

    let n = ys.len() as f64;
    let mut trace = vec![e_step(&ys, &comps, &mut resp)];
    for _ in 0..MAX_EM_ITERS {
        comps = m_step(&ys, &resp, &comps, floor);
        let ll = e_step(&ys, &comps, &mut resp);
        let gain = (ll - trace[trace.len() - 1]) / n;
        trace.push(ll);
        if gain < EM_TOL {
            break;
        }
    }
    Ok(GmmModel {
        components: comps.iter().map(GmmComponent::from_f64).collect(),
        loglik_trace: trace,
        seed: seed_value,
    })
}

/// BIC for every `c` in `1..=c_max` and the minimizing count (smaller on ties).
pub fn select_components<F: Real>(points: ArrayView2<'_, F>, c_max: usize, seed_value: u64) -> Result<(usize, Vec<f64>)> {
    if c_max == 0 {
        return Err(Error::Param("c_max must be at least 1".into()));
    }
    let mut bics = Vec::with_capacity(c_max);
    for c in 1..=c_max {
        bics.push(fit_gmm(points, c, seed_value)?.bic(points));
    }
    let mut best = 0;
    for (i, &b) in bics.iter().enumerate() {
        if b < bics[best] {
            best = i;
        }
    }
    Ok((best + 1, bics))
}

//! One-dimensional wavelet scattering transform (orders 0, 1 and 2).
//!
//! ```text
//! S0          = x * phi
//! S1(l1)      = |x * psi_l1| * phi
//! S2(l1, l2)  = ||x * psi_l1| * psi_l2| * phi      (xi(l2) < xi(l1))
//! ```
//!
//! Band-pass filters are analytic Morlet wavelets built in the frequency
//! domain; `phi` is a unit-sum Hann window whose length is the invariance
//! scale. Averaged outputs are sampled every `frame_stride` samples, with
//! frame `i` centred on sample `i * frame_stride`, so a signal of `n` samples
//! yields `ceil(n / frame_stride)` frames. Signals are extended by symmetric
//! reflection before filtering.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::{Array2, ArrayView1};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::channel::pearson;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatteringConfig {
    /// Support of the averaging window `phi`, in samples.
    pub invariance_scale: usize,
    pub frame_stride: usize,
    /// Wavelets per octave in the first filter bank.
    pub q1: usize,
    /// Wavelets per octave in the second filter bank.
    pub q2: usize,
    pub max_order: u8,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        Self {
            invariance_scale: 256,
            frame_stride: 16,
            q1: 3,
            q2: 1,
            max_order: 2,
        }
    }
}

impl ScatteringConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_stride == 0 || self.invariance_scale < self.frame_stride {
            return Err(Error::Config(format!(
                "need invariance_scale >= frame_stride >= 1, got {} and {}",
                self.invariance_scale, self.frame_stride
            )));
        }
        if self.q1 == 0 || self.q2 == 0 {
            return Err(Error::Config("q1 and q2 must be at least 1".into()));
        }
        if !(1..=2).contains(&self.max_order) {
            return Err(Error::Config(format!("max_order must be 1 or 2, got {}", self.max_order)));
        }
        Ok(())
    }

    /// Octaves covered by each filter bank: `floor(log2(invariance_scale))`.
    pub fn octaves(&self) -> usize {
        (usize::BITS - 1 - self.invariance_scale.leading_zeros()) as usize
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        signal_len.div_ceil(self.frame_stride)
    }
}

/// One scattering path. `lambda1` / `lambda2` index the first / second filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Path {
    pub order: u8,
    pub lambda1: Option<usize>,
    pub lambda2: Option<usize>,
}

/// Where a feature representation came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepTag {
    pub timestamp_id: String,
    pub subcarrier: usize,
}

#[derive(Debug, Clone)]
pub struct Wavelet<F> {
    /// Centre frequency in cycles per sample.
    pub xi: f64,
    /// Gaussian bandwidth in cycles per sample.
    pub sigma: f64,
    /// Real frequency response on the FFT grid.
    response: Vec<F>,
}

impl<F: Real> Wavelet<F> {
    pub fn response(&self) -> &[F] {
        &self.response
    }
}

/// Filters for one signal length. Immutable and cheap to share across threads.
#[derive(Clone)]
pub struct FilterBank<F: Real> {
    config: ScatteringConfig,
    signal_len: usize,
    pad: usize,
    phi: Vec<F>,
    psi1: Vec<Wavelet<F>>,
    psi2: Vec<Wavelet<F>>,
    forward: Arc<dyn Fft<F>>,
    inverse: Arc<dyn Fft<F>>,
}

impl<F: Real> fmt::Debug for FilterBank<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FilterBank")
            .field("config", &self.config)
            .field("signal_len", &self.signal_len)
            .field("fft_len", &self.fft_len())
            .field("psi1", &self.psi1.len())
            .field("psi2", &self.psi2.len())
            .finish()
    }
}

impl<F: Real> FilterBank<F> {
    pub fn config(&self) -> &ScatteringConfig {
        &self.config
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn fft_len(&self) -> usize {
        self.forward.len()
    }

    /// Time-domain averaging window; sums to one.
    pub fn phi(&self) -> &[F] {
        &self.phi
    }

    pub fn first_order(&self) -> &[Wavelet<F>] {
        &self.psi1
    }

    pub fn second_order(&self) -> &[Wavelet<F>] {
        &self.psi2
    }

    /// Paths produced by [`scatter`] with this bank, in row order.
    pub fn paths(&self) -> Vec<Path> {
        let mut paths = vec![Path { order: 0, lambda1: None, lambda2: None }];
        for l1 in 0..self.psi1.len() {
            paths.push(Path { order: 1, lambda1: Some(l1), lambda2: None });
        }
        if self.config.max_order == 2 {
            for (l1, w1) in self.psi1.iter().enumerate() {
                for (l2, w2) in self.psi2.iter().enumerate() {
                    if w2.xi < w1.xi {
                        paths.push(Path { order: 2, lambda1: Some(l1), lambda2: Some(l2) });
                    }
                }
            }
        }
        paths
    }
}

fn gaussian(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp()
}

/// Signed frequency of FFT bin `m`, in cycles per sample.
fn bin_freq(m: usize, n: usize) -> f64 {
    if m <= n / 2 {
        m as f64 / n as f64
    } else {
        m as f64 / n as f64 - 1.0
    }
}

/// Analytic Morlet responses for `octaves * q` wavelets, before normalization.
fn morlet_bank(octaves: usize, q: usize, scale: usize, fft_len: usize) -> Vec<(f64, f64, Vec<f64>)> {
    let qf = q as f64;
    let xi_max = (1.0 / (1.0 + 2f64.powf(3.0 / qf))).max(0.35);
    let ratio = 2f64.powf(-1.0 / qf);
    // Half-power crossing between neighbours; floored so no wavelet is much
    // longer than the averaging window.
    let sigma_floor = 0.1 / scale as f64;
    (0..octaves * q)
        .map(|k| {
            let xi = xi_max * 2f64.powf(-(k as f64) / qf);
            let sigma = (xi * (1.0 - ratio) / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())).max(sigma_floor);
            let kappa = gaussian(xi, sigma);
            let resp = (0..fft_len)
                .map(|m| {
                    let w = bin_freq(m, fft_len);
                    if w < 0.0 {
                        0.0
                    } else {
                        gaussian(w - xi, sigma) - kappa * gaussian(w, sigma)
                    }
                })
                .collect();
            (xi, sigma, resp)
        })
        .collect()
}

/// |phi_hat|^2 on the FFT grid for a centred window.
fn lowpass_power(phi: &[f64], fft_len: usize) -> Vec<f64> {
    (0..fft_len)
        .map(|m| {
            let w = 2.0 * std::f64::consts::PI * bin_freq(m, fft_len);
            let (mut re, mut im) = (0.0, 0.0);
            for (k, &p) in phi.iter().enumerate() {
                let (s, c) = (w * k as f64).sin_cos();
                re += p * c;
                im -= p * s;
            }
            re * re + im * im
        })
        .collect()
}

/// Scale the wavelets so that `|phi_hat|^2 + 1/2 sum |psi_hat|^2 <= 1` at every
/// frequency (the 1/2 accounts for analytic filters seeing half the spectrum
/// of a real input). This makes each layer non-expansive.
fn normalize(bank: Vec<(f64, f64, Vec<f64>)>, phi_power: &[f64]) -> Vec<Wavelet<f64>> {
    if bank.is_empty() {
        return Vec::new();
    }
    let fft_len = phi_power.len();
    let mut gain2 = f64::INFINITY;
    for m in 0..fft_len {
        let lp: f64 = bank.iter().map(|(_, _, r)| r[m] * r[m]).sum::<f64>() / 2.0;
        if lp > 1e-12 {
            gain2 = gain2.min((1.0 - phi_power[m]).max(0.0) / lp);
        }
    }
    let gain = gain2.sqrt();
    bank.into_iter()
        .map(|(xi, sigma, r)| Wavelet { xi, sigma, response: r.into_iter().map(|v| v * gain).collect() })
        .collect()
}

/// Build the filters for signals of `signal_len` samples.
///
/// Each bank holds `J * q` Morlet wavelets with `J = floor(log2(invariance_scale))`.
pub fn build_filter_bank<F: Real>(config: &ScatteringConfig, signal_len: usize) -> Result<FilterBank<F>> {
    config.validate()?;
    let scale = config.invariance_scale;
    if signal_len < scale {
        return Err(Error::Scale { signal_len, scale });
    }
    let octaves = config.octaves();
    let pad = (signal_len - 1).min(4 * scale);
    let fft_len = (signal_len + 2 * pad).next_power_of_two();

    let phi: Vec<f64> = if scale == 1 {
        vec![1.0]
    } else {
        let w: Vec<f64> = (0..scale)
            .map(|k| {
                let t = (k as f64 + 0.5) / scale as f64;
                (std::f64::consts::PI * t).sin().powi(2)
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    };
    let phi_power = lowpass_power(&phi, fft_len);

    let psi1 = normalize(morlet_bank(octaves, config.q1, scale, fft_len), &phi_power);
    let psi2 = if config.max_order == 2 {
        normalize(morlet_bank(octaves, config.q2, scale, fft_len), &phi_power)
    } else {
        Vec::new()
    };
    let cast = |w: Wavelet<f64>| Wavelet {
        xi: w.xi,
        sigma: w.sigma,
        response: w.response.into_iter().map(F::of).collect(),
    };

    let mut planner = FftPlanner::<F>::new();
    Ok(FilterBank {
        config: config.clone(),
        signal_len,
        pad,
        phi: phi.into_iter().map(F::of).collect(),
        psi1: psi1.into_iter().map(cast).collect(),
        psi2: psi2.into_iter().map(cast).collect(),
        forward: planner.plan_fft_forward(fft_len),
        inverse: planner.plan_fft_inverse(fft_len),
    })
}

/// Scattering coefficients `[n_paths × n_frames]` with their path table.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringFeatures<F> {
    pub coeffs: Array2<F>,
    pub paths: Vec<Path>,
    pub config: ScatteringConfig,
    pub tag: Option<RepTag>,
}

impl<F: Real> ScatteringFeatures<F> {
    pub fn n_paths(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn with_tag(mut self, timestamp_id: impl Into<String>, subcarrier: usize) -> Self {
        self.tag = Some(RepTag { timestamp_id: timestamp_id.into(), subcarrier });
        self
    }

    pub fn orders(&self) -> Vec<u8> {
        let mut o: Vec<u8> = self.paths.iter().map(|p| p.order).collect();
        o.dedup();
        o
    }
}

/// Symmetric extension of `x` into a buffer of `len` samples starting `pad` before `x[0]`.
fn reflect_pad<F: Real>(x: &[F], pad: usize, len: usize) -> Vec<Complex<F>> {
    let n = x.len() as isize;
    let period = if n > 1 { 2 * (n - 1) } else { 1 };
    (0..len)
        .map(|i| {
            let mut j = (i as isize - pad as isize).rem_euclid(period);
            if j >= n {
                j = period - j;
            }
            Complex::new(x[j as usize], F::zero())
        })
        .collect()
}

struct Workspace<'a, F: Real> {
    bank: &'a FilterBank<F>,
    n_frames: usize,
    scratch: Vec<Complex<F>>,
}

impl<F: Real> Workspace<'_, F> {
    fn average_into(&self, u: &[F], out: &mut [F]) {
        let bank = self.bank;
        let half = (bank.phi.len() - 1) / 2;
        let stride = bank.config.frame_stride;
        for (i, o) in out.iter_mut().enumerate().take(self.n_frames) {
            let start = bank.pad + i * stride - half;
            *o = bank.phi.iter().zip(&u[start..start + bank.phi.len()]).map(|(&p, &v)| p * v).sum();
        }
    }

    /// `|IFFT(spectrum * response)|`, normalized by the FFT length.
    fn modulus(&mut self, spectrum: &[Complex<F>], response: &[F]) -> Vec<F> {
        let norm = F::one() / F::of_usize(spectrum.len());
        self.scratch.clear();
        self.scratch.extend(spectrum.iter().zip(response).map(|(&s, &r)| s * r));
        self.bank.inverse.process(&mut self.scratch);
        self.scratch.iter().map(|c| c.norm() * norm).collect()
    }

    fn spectrum(&self, u: &[F]) -> Vec<Complex<F>> {
        let mut buf: Vec<Complex<F>> = u.iter().map(|&v| Complex::new(v, F::zero())).collect();
        self.bank.forward.process(&mut buf);
        buf
    }
}

/// Scattering transform of one CSI series.
pub fn scatter<F: Real>(x: ArrayView1<'_, F>, bank: &FilterBank<F>) -> Result<ScatteringFeatures<F>> {
    if x.len() != bank.signal_len {
        return Err(Error::Shape(format!(
            "filter bank built for {} samples, got {}",
            bank.signal_len,
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("scattering input contains non-finite samples".into()));
    }
    let x: Vec<F> = x.to_vec();
    let cfg = &bank.config;
    let n_frames = cfg.n_frames(x.len());
    let paths = bank.paths();
    let mut coeffs = Array2::<F>::zeros((paths.len(), n_frames));
    let mut ws = Workspace { bank, n_frames, scratch: Vec::with_capacity(bank.fft_len()) };

    let mut padded = reflect_pad(&x, bank.pad, bank.fft_len());
    let real: Vec<F> = padded.iter().map(|c| c.re).collect();
    let mut row = vec![F::zero(); n_frames];
    ws.average_into(&real, &mut row);
    coeffs.row_mut(0).assign(&ArrayView1::from(&row));

    bank.forward.process(&mut padded);
    let spectrum = padded;
    let mut r = 1;
    let mut first: Vec<Vec<F>> = Vec::with_capacity(bank.psi1.len());
    for w in &bank.psi1 {
        let u1 = ws.modulus(&spectrum, &w.response);
        ws.average_into(&u1, &mut row);
        coeffs.row_mut(r).assign(&ArrayView1::from(&row));
        r += 1;
        if cfg.max_order == 2 {
            first.push(u1);
        }
    }
    if cfg.max_order == 2 {
        for (u1, w1) in first.iter().zip(&bank.psi1) {
            let spec1 = ws.spectrum(u1);
            for w2 in bank.psi2.iter().filter(|w2| w2.xi < w1.xi) {
                let u2 = ws.modulus(&spec1, &w2.response);
                ws.average_into(&u2, &mut row);
                coeffs.row_mut(r).assign(&ArrayView1::from(&row));
                r += 1;
            }
        }
    }
    debug_assert_eq!(r, paths.len());
    Ok(ScatteringFeatures { coeffs, paths, config: cfg.clone(), tag: None })
}

/// Keep only the rows whose order is in `orders`, preserving row order.
pub fn select_orders<F: Real>(f: &ScatteringFeatures<F>, orders: &[u8]) -> Result<ScatteringFeatures<F>> {
    if orders.is_empty() {
        return Err(Error::Selection("no orders requested".into()));
    }
    for &o in orders {
        if !f.paths.iter().any(|p| p.order == o) {
            return Err(Error::Selection(format!("order {o} is not present in these features")));
        }
    }
    let keep: Vec<usize> = (0..f.paths.len()).filter(|&i| orders.contains(&f.paths[i].order)).collect();
    let coeffs = f.coeffs.select(ndarray::Axis(0), &keep);
    Ok(ScatteringFeatures {
        coeffs,
        paths: keep.iter().map(|&i| f.paths[i]).collect(),
        config: f.config.clone(),
        tag: f.tag.clone(),
    })
}

/// Per-path Pearson correlation between two feature matrices. `None` marks
/// paths where either row is constant.
pub fn path_correlations<F: Real>(a: &ScatteringFeatures<F>, b: &ScatteringFeatures<F>) -> Result<Vec<Option<F>>> {
    if a.paths != b.paths || a.n_frames() != b.n_frames() {
        return Err(Error::Shape(format!(
            "features differ: {}x{} vs {}x{} (or different path tables)",
            a.n_paths(),
            a.n_frames(),
            b.n_paths(),
            b.n_frames()
        )));
    }
    Ok(a.coeffs.rows().into_iter().zip(b.coeffs.rows()).map(|(x, y)| pearson(x, y)).collect())
}

/// Mean of the defined correlations of each order (index 0, 1, 2).
pub fn mean_correlation_by_order<F: Real>(paths: &[Path], r: &[Option<F>]) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    for (order, slot) in out.iter_mut().enumerate() {
        let vals: Vec<f64> = paths
            .iter()
            .zip(r)
            .filter(|(p, _)| p.order as usize == order)
            .filter_map(|(_, v)| v.map(Real::as_f64))
            .collect();
        if !vals.is_empty() {
            *slot = Some(vals.iter().sum::<f64>() / vals.len() as f64);
        }
    }
    out
}

const MAGIC: &[u8; 4] = b"SKGF";
const VERSION: u32 = 1;

/// Binary container: magic, version, config, optional tag, `n_paths`,
/// `n_frames`, path table, then row-major little-endian `f64` coefficients.
pub fn write_features<F: Real, W: Write>(f: &ScatteringFeatures<F>, mut out: W) -> Result<()> {
    let c = &f.config;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(c.invariance_scale as u64).to_le_bytes())?;
    out.write_all(&(c.frame_stride as u64).to_le_bytes())?;
    out.write_all(&(c.q1 as u32).to_le_bytes())?;
    out.write_all(&(c.q2 as u32).to_le_bytes())?;
    out.write_all(&[c.max_order])?;
    match &f.tag {
        Some(tag) => {
            out.write_all(&[1])?;
            out.write_all(&(tag.subcarrier as u64).to_le_bytes())?;
            out.write_all(&(tag.timestamp_id.len() as u32).to_le_bytes())?;
            out.write_all(tag.timestamp_id.as_bytes())?;
        }
        None => out.write_all(&[0])?,
    }
    out.write_all(&(f.n_paths() as u64).to_le_bytes())?;
    out.write_all(&(f.n_frames() as u64).to_le_bytes())?;
    let idx = |l: Option<usize>| l.map_or(-1i64, |v| v as i64);
    for p in &f.paths {
        out.write_all(&[p.order])?;
        out.write_all(&idx(p.lambda1).to_le_bytes())?;
        out.write_all(&idx(p.lambda2).to_le_bytes())?;
    }
    for v in f.coeffs.iter() {
        out.write_all(&v.as_f64().to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Format(format!("truncated feature container: {e}")))?;
    Ok(buf)
}

pub fn read_features<F: Real, R: Read>(mut r: R) -> Result<ScatteringFeatures<F>> {
    if &take::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("not a scattering feature container".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let u64_ = |r: &mut R| -> Result<u64> { Ok(u64::from_le_bytes(take(r)?)) };
    let config = ScatteringConfig {
        invariance_scale: u64_(&mut r)? as usize,
        frame_stride: u64_(&mut r)? as usize,
        q1: u32::from_le_bytes(take(&mut r)?) as usize,
        q2: u32::from_le_bytes(take(&mut r)?) as usize,
        max_order: take::<1, _>(&mut r)?[0],
    };
    let tag = match take::<1, _>(&mut r)?[0] {
        0 => None,
        1 => {
            let subcarrier = u64_(&mut r)? as usize;
            let len = u32::from_le_bytes(take(&mut r)?) as usize;
            let mut s = vec![0u8; len];
            r.read_exact(&mut s).map_err(|e| Error::Format(format!("truncated tag: {e}")))?;
            let timestamp_id = String::from_utf8(s).map_err(|_| Error::Format("tag is not UTF-8".into()))?;
            Some(RepTag { timestamp_id, subcarrier })
        }
        other => return Err(Error::Format(format!("bad tag flag {other}"))),
    };
    let n_paths = u64_(&mut r)? as usize;
    let n_frames = u64_(&mut r)? as usize;
    let lambda = |v: i64| if v < 0 { None } else { Some(v as usize) };
    let mut paths = Vec::with_capacity(n_paths);
    for _ in 0..n_paths {
        let order = take::<1, _>(&mut r)?[0];
        let l1 = i64::from_le_bytes(take(&mut r)?);
        let l2 = i64::from_le_bytes(take(&mut r)?);
        paths.push(Path { order, lambda1: lambda(l1), lambda2: lambda(l2) });
    }
    let mut data = Vec::with_capacity(n_paths * n_frames);
    for _ in 0..n_paths * n_frames {
        data.push(F::of(f64::from_le_bytes(take(&mut r)?)));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after coefficients".into()));
    }
    let coeffs = Array2::from_shape_vec((n_paths, n_frames), data).map_err(|e| Error::Format(e.to_string()))?;
    Ok(ScatteringFeatures { coeffs, paths, config, tag })
}

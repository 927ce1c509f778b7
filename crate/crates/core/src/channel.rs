//! Reciprocal CSI capture simulator and CSV ingestion.
//!
//! AP and STA observe one shared Rayleigh fading process per subcarrier. The
//! STA copy is time-warped by a slowly varying delay, each device multiplies in
//! its own amplitude modulation (local multipath recombination), and each adds
//! independent receiver noise. EVE sees a fading process that is only
//! partially correlated with the shared one.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Real, Result};

/// Spacing, in samples, between the knots of the piecewise-linear STA delay.
const JITTER_KNOT_SPACING: usize = 256;
/// Length, in samples, of the crossfade between two scatterer configurations.
const REGIME_CROSSFADE: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Role {
    Ap,
    Sta,
    Eve,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Ap, Role::Sta, Role::Eve];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Ap => "AP",
            Role::Sta => "STA",
            Role::Eve => "EVE",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AP" => Ok(Role::Ap),
            "STA" => Ok(Role::Sta),
            "EVE" => Ok(Role::Eve),
            other => Err(Error::Config(format!("unknown role `{other}`"))),
        }
    }
}

/// CSI magnitudes of one device over one capture, `[n_subcarriers × n_samples]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiBlock<F> {
    pub samples: Array2<F>,
    pub timestamp_id: String,
    pub role: Role,
    /// Seconds between consecutive samples.
    pub sample_interval: f64,
}

impl<F: Real> CsiBlock<F> {
    pub fn new(
        samples: Array2<F>,
        timestamp_id: impl Into<String>,
        role: Role,
        sample_interval: f64,
    ) -> Result<Self> {
        let block = Self {
            samples,
            timestamp_id: timestamp_id.into(),
            role,
            sample_interval,
        };
        block.validate()?;
        Ok(block)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.nrows() == 0 {
            return Err(Error::Data("capture has no subcarriers".into()));
        }
        if self.samples.ncols() == 0 {
            return Err(Error::EmptyCapture);
        }
        if let Some(bad) = self.samples.iter().find(|v| !v.is_finite() || **v < F::zero()) {
            return Err(Error::Data(format!("CSI magnitude {bad} is not a finite non-negative value")));
        }
        if self.timestamp_id.contains([',', '\n', '\r']) {
            return Err(Error::Data("timestamp_id may not contain commas or line breaks".into()));
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return Err(Error::Data(format!("sample interval {} must be positive", self.sample_interval)));
        }
        Ok(())
    }

    pub fn n_subcarriers(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    pub fn subcarrier(&self, k: usize) -> ArrayView1<'_, F> {
        self.samples.row(k)
    }
}

/// Parameters of the simulated capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub n_subcarriers: usize,
    pub n_samples: usize,
    /// Receiver SNR in dB; `inf` disables noise.
    pub snr_db: f64,
    /// Rays in the sum-of-sinusoids fading model.
    pub n_paths: usize,
    /// Maximum Doppler shift from device mobility, in cycles per sample.
    pub doppler_norm: f64,
    /// Maximum Doppler shift from scatterers moving around static devices,
    /// in cycles per sample. Adds to `doppler_norm`.
    pub ambient_rate: f64,
    /// Largest AP/STA sampling offset, in samples.
    pub jitter_max: f64,
    pub am_depth: f64,
    /// Bandwidth of the amplitude modulation, in cycles per sample, for
    /// static devices. Device mobility adds `doppler_norm`.
    pub am_rate: f64,
    /// Number of discrete scatterer configurations the environment switches
    /// between (people standing in different places, doors, ...). 0 disables.
    pub scatterer_states: usize,
    /// Mean dwell time in one configuration, in samples.
    pub dwell_mean: f64,
    /// Fraction of the fading power carried by the configuration component.
    pub regime_power: f64,
    /// Target envelope correlation between the AP and EVE fading processes.
    pub eve_corr_target: f64,
    pub sample_interval: f64,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_subcarriers: 2,
            n_samples: 9000,
            snr_db: 10.0,
            n_paths: 16,
            doppler_norm: 0.0,
            ambient_rate: 4.0e-4,
            jitter_max: 24.0,
            am_depth: 0.15,
            am_rate: 4.0e-3,
            scatterer_states: 2,
            dwell_mean: 1500.0,
            regime_power: 0.97,
            eve_corr_target: 0.2,
            sample_interval: 0.1333,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_subcarriers == 0 {
            return bad("n_subcarriers must be at least 1");
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad("snr_db must be a number (use inf to disable noise)");
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1");
        }
        if !(self.doppler_norm.is_finite() && self.doppler_norm >= 0.0) {
            return bad("doppler_norm must be finite and non-negative");
        }
        if !(self.ambient_rate.is_finite() && self.ambient_rate >= 0.0) {
            return bad("ambient_rate must be finite and non-negative");
        }
        if !(self.jitter_max.is_finite() && self.jitter_max >= 0.0) {
            return bad("jitter_max must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.am_depth) {
            return bad("am_depth must lie in [0, 1]");
        }
        if !(self.am_rate.is_finite() && self.am_rate >= 0.0) {
            return bad("am_rate must be finite and non-negative");
        }
        if !(self.dwell_mean.is_finite() && self.dwell_mean >= 1.0) {
            return bad("dwell_mean must be at least one sample");
        }
        if !(0.0..=1.0).contains(&self.regime_power) {
            return bad("regime_power must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.eve_corr_target) {
            return bad("eve_corr_target must lie in [0, 1)");
        }
        if !(self.sample_interval.is_finite() && self.sample_interval > 0.0) {
            return bad("sample_interval must be positive");
        }
        Ok(())
    }

    fn fading_rate(&self) -> f64 {
        self.ambient_rate + self.doppler_norm
    }
}

/// One complex Rayleigh fading process as a sum of `n` Gaussian-weighted
/// sinusoids with Jakes-distributed Doppler shifts. Unit average power.
struct SumOfSinusoids {
    amp: Vec<(f64, f64)>,
    freq: Vec<f64>,
    phase: Vec<f64>,
}

impl SumOfSinusoids {
    fn new(n_paths: usize, max_doppler: f64, rng: &mut ChaCha8Rng) -> Self {
        let scale = (1.0 / (2.0 * n_paths as f64)).sqrt();
        let mut amp = Vec::with_capacity(n_paths);
        let mut freq = Vec::with_capacity(n_paths);
        let mut phase = Vec::with_capacity(n_paths);
        for _ in 0..n_paths {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            amp.push((re * scale, im * scale));
            let aoa = rng.random::<f64>() * 2.0 * PI;
            freq.push(max_doppler * aoa.cos());
            phase.push(rng.random::<f64>() * 2.0 * PI);
        }
        Self { amp, freq, phase }
    }

    fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let mut out = vec![(0.0, 0.0); n];
        for ((&(ar, ai), &f), &p) in self.amp.iter().zip(&self.freq).zip(&self.phase) {
            // Rotate a phasor instead of calling sin/cos per sample.
            let (ds, dc) = (2.0 * PI * f).sin_cos();
            let (mut s, mut c) = p.sin_cos();
            for v in out.iter_mut() {
                v.0 += ar * c - ai * s;
                v.1 += ar * s + ai * c;
                let c2 = c * dc - s * ds;
                s = s * dc + c * ds;
                c = c2;
            }
        }
        out
    }
}

/// Complex gain of an environment that dwells in one of `k` scatterer
/// configurations for exponentially distributed times and crossfades
/// between them. Unit average power.
fn regime_process(n: usize, k: usize, dwell_mean: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    if k == 0 {
        return vec![(0.0, 0.0); n];
    }
    let gains: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            (re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
        })
        .collect();
    let dwell = Exp::new(1.0 / dwell_mean).expect("dwell_mean validated");
    let mut out = Vec::with_capacity(n);
    let mut state = rng.random_range(0..k);
    let mut prev = gains[state];
    let mut since = REGIME_CROSSFADE;
    let mut left = (dwell.sample(rng).ceil() as usize).max(1);
    while out.len() < n {
        if left == 0 {
            prev = out.last().copied().unwrap_or(gains[state]);
            if k > 1 {
                state = (state + rng.random_range(1..k)) % k;
            }
            since = 0;
            left = (dwell.sample(rng).ceil() as usize).max(1);
        }
        let g = gains[state];
        let w = (since as f64 / REGIME_CROSSFADE as f64).min(1.0);
        out.push((prev.0 + (g.0 - prev.0) * w, prev.1 + (g.1 - prev.1) * w));
        since += 1;
        left -= 1;
    }
    out
}

/// `sqrt(1 - w) * a + sqrt(w) * b`.
fn blend(a: &[(f64, f64)], b: &[(f64, f64)], w: f64) -> Vec<(f64, f64)> {
    let (ca, cb) = ((1.0 - w).sqrt(), w.sqrt());
    a.iter().zip(b).map(|(x, y)| (ca * x.0 + cb * y.0, ca * x.1 + cb * y.1)).collect()
}

/// Piecewise-linear random delay in `[-max, max]` samples.
fn random_delay(n: usize, max: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if max == 0.0 {
        return vec![0.0; n];
    }
    let n_knots = n / JITTER_KNOT_SPACING + 2;
    let knots: Vec<f64> = (0..n_knots).map(|_| rng.random_range(-max..=max)).collect();
    (0..n)
        .map(|t| {
            let k = t / JITTER_KNOT_SPACING;
            let frac = (t % JITTER_KNOT_SPACING) as f64 / JITTER_KNOT_SPACING as f64;
            knots[k] * (1.0 - frac) + knots[k + 1] * frac
        })
        .collect()
}

/// Linear interpolation of `x` at fractional positions `t - delay[t]`, clamped to the record.
fn warp(x: &[(f64, f64)], delay: &[f64]) -> Vec<(f64, f64)> {
    let last = (x.len() - 1) as f64;
    delay
        .iter()
        .enumerate()
        .map(|(t, &d)| {
            let pos = (t as f64 - d).clamp(0.0, last);
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            if frac == 0.0 {
                x[i]
            } else {
                let (a, b) = (x[i], x[i + 1]);
                (a.0 + (b.0 - a.0) * frac, a.1 + (b.1 - a.1) * frac)
            }
        })
        .collect()
}

/// Multiplicative amplitude modulation `max(1 + d * x, 0)` with `x` a
/// unit-variance Gaussian process of the given bandwidth.
fn amplitude_modulation(cfg: &ChannelConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = cfg.n_samples;
    if cfg.am_depth == 0.0 {
        return vec![1.0; n];
    }
    let h = SumOfSinusoids::new(cfg.n_paths, cfg.am_rate + cfg.doppler_norm, rng).sample(n);
    h.iter()
        .map(|&(re, _)| (1.0 + cfg.am_depth * re * SQRT_2).max(0.0))
        .collect()
}

fn receive<F: Real>(
    fading: &[(f64, f64)],
    am: &[f64],
    noise_std: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<F> {
    fading
        .iter()
        .zip(am)
        .map(|(&(re, im), &m)| {
            let (mut re, mut im) = (re * m, im * m);
            if noise_std > 0.0 {
                let nr: f64 = StandardNormal.sample(rng);
                let ni: f64 = StandardNormal.sample(rng);
                re += nr * noise_std;
                im += ni * noise_std;
            }
            F::of(re.hypot(im))
        })
        .collect()
}

/// Simulate one capture and return the `(AP, STA, EVE)` blocks.
///
/// Each subcarrier draws from its own substream `hash(seed, subcarrier)`, so
/// the result does not depend on the order subcarriers are generated in.
pub fn simulate_capture<F: Real>(cfg: &ChannelConfig) -> Result<(CsiBlock<F>, CsiBlock<F>, CsiBlock<F>)> {
    cfg.validate()?;
    if cfg.n_samples == 0 {
        return Err(Error::EmptyCapture);
    }
    let n = cfg.n_samples;
    // Complex noise with total power 1/SNR against unit-power fading.
    let noise_std = if cfg.snr_db.is_infinite() {
        0.0
    } else {
        (0.5 / 10f64.powf(cfg.snr_db / 10.0)).sqrt()
    };
    let rho = cfg.eve_corr_target;

    let mut ap = Array2::<F>::zeros((cfg.n_subcarriers, n));
    let mut sta = Array2::<F>::zeros((cfg.n_subcarriers, n));
    let mut eve = Array2::<F>::zeros((cfg.n_subcarriers, n));
    for k in 0..cfg.n_subcarriers {
        let mut rng = seed::rng(cfg.seed, &[k as u64]);
        let process = |rng: &mut ChaCha8Rng| {
            let jakes = SumOfSinusoids::new(cfg.n_paths, cfg.fading_rate(), rng).sample(n);
            if cfg.scatterer_states == 0 {
                return jakes;
            }
            let regime = regime_process(n, cfg.scatterer_states, cfg.dwell_mean, rng);
            blend(&jakes, &regime, cfg.regime_power)
        };
        let shared = process(&mut rng);
        let private = process(&mut rng);
        let delay = random_delay(n, cfg.jitter_max, &mut rng);
        let sta_fading = warp(&shared, &delay);
        let eve_fading: Vec<(f64, f64)> = shared
            .iter()
            .zip(&private)
            .map(|(&(fr, fi), &(gr, gi))| {
                let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
                (a * fr + b * gr, a * fi + b * gi)
            })
            .collect();
        let am: Vec<Vec<f64>> = (0..3).map(|_| amplitude_modulation(cfg, &mut rng)).collect();

        for (block, fading, am) in [
            (&mut ap, &shared, &am[0]),
            (&mut sta, &sta_fading, &am[1]),
            (&mut eve, &eve_fading, &am[2]),
        ] {
            let row = receive::<F>(fading, am, noise_std, &mut rng);
            block.row_mut(k).assign(&ArrayView1::from(&row));
        }
    }

    let ts = format!("sim-{}", cfg.seed);
    Ok((
        CsiBlock::new(ap, ts.clone(), Role::Ap, cfg.sample_interval)?,
        CsiBlock::new(sta, ts.clone(), Role::Sta, cfg.sample_interval)?,
        CsiBlock::new(eve, ts, Role::Eve, cfg.sample_interval)?,
    ))
}

/// Parse a CSI CSV document. `path` only labels error messages.
pub fn parse_csi_csv<F: Real>(text: &str, path: &Path) -> Result<CsiBlock<F>> {
    let err = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (_, header) = lines.next().ok_or_else(|| err(1, "missing header row".into()))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 5 {
        return Err(err(
            1,
            format!("header needs 5 fields (role,timestamp_id,n_subcarriers,n_samples,sample_interval), found {}", fields.len()),
        ));
    }
    let role: Role = fields[0].parse().map_err(|e: Error| err(1, e.to_string()))?;
    let timestamp_id = fields[1].to_string();
    let n_sub: usize = fields[2].trim().parse().map_err(|_| err(1, format!("bad n_subcarriers `{}`", fields[2])))?;
    let n_samples: usize = fields[3].trim().parse().map_err(|_| err(1, format!("bad n_samples `{}`", fields[3])))?;
    let interval: f64 = fields[4].trim().parse().map_err(|_| err(1, format!("bad sample_interval `{}`", fields[4])))?;

    let rows: Vec<(usize, &str)> = lines.filter(|(_, l)| !l.trim().is_empty()).collect();
    if rows.is_empty() || n_samples == 0 {
        return Err(Error::EmptyCapture);
    }
    if rows.len() != n_sub {
        let line = rows.last().map_or(2, |r| r.0);
        return Err(err(line, format!("header declares {n_sub} subcarriers, found {} rows", rows.len())));
    }

    let mut samples = Array2::<F>::zeros((n_sub, n_samples));
    for (k, (line, row)) in rows.into_iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        if cells.len() != n_samples {
            return Err(err(line, format!("expected {n_samples} values, found {}", cells.len())));
        }
        for (t, cell) in cells.into_iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| err(line, format!("non-numeric value `{cell}` in column {}", t + 1)))?;
            if !v.is_finite() || v < 0.0 {
                return Err(err(line, format!("magnitude {v} in column {} is not finite and non-negative", t + 1)));
            }
            samples[[k, t]] = F::of(v);
        }
    }
    CsiBlock::new(samples, timestamp_id, role, interval).map_err(|e| err(1, e.to_string()))
}

pub fn load_csi_csv<F: Real>(path: &Path) -> Result<CsiBlock<F>> {
    let text = fs::read_to_string(path)?;
    parse_csi_csv(&text, path)
}

/// Write `block` in canonical form: shortest round-trip decimal for every value.
pub fn write_csi_csv<F: Real, W: Write>(block: &CsiBlock<F>, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{},{},{},{},{}",
        block.role,
        block.timestamp_id,
        block.n_subcarriers(),
        block.n_samples(),
        block.sample_interval
    )?;
    for row in block.samples.rows() {
        let mut first = true;
        for v in row {
            if !first {
                out.write_all(b",")?;
            }
            first = false;
            write!(out, "{}", v.as_f64())?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_csi_csv<F: Real>(block: &CsiBlock<F>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_csi_csv(block, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Pearson correlation of two equal-length series; `None` if either is constant.
pub fn pearson<F: Real>(a: ArrayView1<'_, F>, b: ArrayView1<'_, F>) -> Option<F> {
    assert_eq!(a.len(), b.len(), "pearson needs equal-length series");
    let n = F::of_usize(a.len());
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (F::zero(), F::zero(), F::zero());
    for (&x, &y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if saa.is_zero() || sbb.is_zero() {
        return None;
    }
    let r = sab / (saa * sbb).sqrt();
    Some(r.max(-F::one()).min(F::one()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_config() -> ChannelConfig {
        ChannelConfig {
            n_samples: 2000,
            snr_db: f64::INFINITY,
            jitter_max: 0.0,
            am_depth: 0.0,
            seed: 3,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn distortion_free_capture_is_reciprocal() {
        let (ap, sta, _) = simulate_capture::<f64>(&quiet_config()).unwrap();
        assert_eq!(ap.samples, sta.samples);
    }

    #[test]
    fn simulation_is_deterministic() {
        let cfg = ChannelConfig { n_samples: 1500, seed: 11, ..ChannelConfig::default() };
        let a = simulate_capture::<f64>(&cfg).unwrap();
        let b = simulate_capture::<f64>(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_errors() {
        let empty = ChannelConfig { n_samples: 0, ..ChannelConfig::default() };
        assert!(matches!(simulate_capture::<f64>(&empty), Err(Error::EmptyCapture)));
        for bad in [
            ChannelConfig { am_depth: 1.5, ..ChannelConfig::default() },
            ChannelConfig { eve_corr_target: 1.0, ..ChannelConfig::default() },
            ChannelConfig { jitter_max: -1.0, ..ChannelConfig::default() },
            ChannelConfig { snr_db: f64::NAN, ..ChannelConfig::default() },
            ChannelConfig { n_subcarriers: 0, ..ChannelConfig::default() },
        ] {
            assert!(matches!(simulate_capture::<f64>(&bad), Err(Error::Config(_))), "{bad:?}");
        }
    }

    #[test]
    fn magnitudes_are_non_negative() {
        let cfg = ChannelConfig { n_samples: 3000, snr_db: 0.0, seed: 5, ..ChannelConfig::default() };
        let (ap, sta, eve) = simulate_capture::<f32>(&cfg).unwrap();
        for b in [ap, sta, eve] {
            assert!(b.samples.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn csv_small_example() {
        let text = "AP,t1,2,3,0.5\n1,2,3\n4,5,6\n";
        let b: CsiBlock<f64> = parse_csi_csv(text, Path::new("x.csv")).unwrap();
        assert_eq!(b.samples, ndarray::array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(b.role, Role::Ap);
        assert_eq!(b.timestamp_id, "t1");
        let mut out = Vec::new();
        write_csi_csv(&b, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let p = Path::new("c.csv");
        let neg = parse_csi_csv::<f64>("STA,t,2,2\n", p);
        assert!(matches!(neg, Err(Error::Parse { line: 1, .. })));
        let neg = parse_csi_csv::<f64>("STA,t,2,2,1\n1,2\n3,-4\n", p);
        assert!(matches!(neg, Err(Error::Parse { line: 3, .. })), "{neg:?}");
        let ragged = parse_csi_csv::<f64>("STA,t,2,2,1\n1,2,9\n3,4\n", p);
        assert!(matches!(ragged, Err(Error::Parse { line: 2, .. })));
        let nonnum = parse_csi_csv::<f64>("EVE,t,1,2,1\n1,x\n", p);
        assert!(matches!(nonnum, Err(Error::Parse { line: 2, .. })));
        let empty = parse_csi_csv::<f64>("AP,t,1,0,1\n", p);
        assert!(matches!(empty, Err(Error::EmptyCapture)));
        let empty = parse_csi_csv::<f64>("AP,t,1,4,1\n\n", p);
        assert!(matches!(empty, Err(Error::EmptyCapture)));
    }

    #[test]
    fn pearson_flags_constant_rows() {
        let a = ndarray::array![1.0f64, 1.0, 1.0];
        let b = ndarray::array![1.0f64, 2.0, 3.0];
        assert!(pearson(a.view(), b.view()).is_none());
        assert!((pearson(b.view(), b.view()).unwrap() - 1.0).abs() < 1e-12);
    }
}

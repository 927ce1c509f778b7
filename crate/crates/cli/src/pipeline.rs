//! The experiment stages. Each stage reads only the files written by the
//! stages before it, under one output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skg_core::channel::{load_csi_csv, save_csi_csv, simulate_capture, Role};
use skg_core::clustering::GmmModel;
use skg_core::embedding::{normalize_representation, stack_representations, tsne, Embedding2D};
use skg_core::metrics::{kgr_curve, KeyPairResult};
use skg_core::protocol::{run_agreement, write_transcript, AgreementConfig, ComponentCount, Identity, KeyMaterial};
use skg_core::randomness::{count_passes, run_battery, Battery, TestId, TestParams};
use skg_core::scattering::{
    build_filter_bank, mean_correlation_by_order, path_correlations, read_features, scatter, select_orders,
    write_features, ScatteringFeatures,
};
use skg_core::{seed, BitString, SchemeKind};

use crate::config::ExperimentConfig;
use crate::error::{Stage, StageError, StageResult};

pub const ROLES: [Role; 3] = [Role::Ap, Role::Sta, Role::Eve];

// First element of every derived seed path, one per stage.
const SIMULATE_STREAM: u64 = 1;
const EMBED_STREAM: u64 = 3;
const KEYGEN_STREAM: u64 = 4;
const NIST_STREAM: u64 = 5;

/// Where each stage keeps its files.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

fn role_name(role: Role) -> String {
    role.as_str().to_ascii_lowercase()
}

fn timestamp_id(t: usize) -> String {
    format!("t{t}")
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn capture(&self, s: usize, t: usize, role: Role) -> PathBuf {
        self.root.join(format!("captures/seed{s}/t{t}_{}.csv", role_name(role)))
    }

    pub fn features(&self, s: usize, t: usize, role: Role, k: usize) -> PathBuf {
        self.root.join(format!("features/seed{s}/t{t}_{}_k{k}.bin", role_name(role)))
    }

    pub fn embedding(&self, s: usize, p: usize, role: Role) -> PathBuf {
        self.root.join(format!("embeddings/seed{s}/p{p}_{}.csv", role_name(role)))
    }

    pub fn kl_traces(&self) -> PathBuf {
        self.root.join("embeddings/kl_traces.json")
    }

    pub fn keys(&self, s: usize, p: usize) -> PathBuf {
        self.root.join(format!("keys/seed{s}/p{p}.json"))
    }

    pub fn transcript(&self, s: usize, p: usize) -> PathBuf {
        self.root.join(format!("keys/seed{s}/p{p}_transcript.bin"))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// Progress notes on stderr.
#[derive(Debug, Clone, Copy)]
pub struct Log {
    pub quiet: bool,
}

impl Log {
    fn note(&self, stage: Stage, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("[{stage}] {msg}");
        }
    }
}

fn ensure_parent(stage: Stage, path: &Path) -> StageResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| StageError::at(stage, dir, e))?;
    }
    Ok(())
}

fn write_text(stage: Stage, path: &Path, text: &str) -> StageResult<()> {
    ensure_parent(stage, path)?;
    fs::write(path, text).map_err(|e| StageError::at(stage, path, e))
}

fn write_json<T: Serialize>(stage: Stage, path: &Path, value: &T) -> StageResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| StageError::at(stage, path, e))?;
    text.push('\n');
    write_text(stage, path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(stage: Stage, path: &Path) -> StageResult<T> {
    let text = fs::read_to_string(path).map_err(|e| StageError::at(stage, path, e))?;
    serde_json::from_str(&text).map_err(|e| StageError::at(stage, path, e))
}

fn seed_grid(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    (0..cfg.n_seeds).flat_map(|s| (0..cfg.timestamps).map(move |t| (s, t))).collect()
}

fn pair_grid(cfg: &ExperimentConfig) -> Vec<(usize, usize)> {
    let n = cfg.pairs().len();
    (0..cfg.n_seeds).flat_map(|s| (0..n).map(move |p| (s, p))).collect()
}

fn distinct_subcarriers(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut ks = cfg.subcarriers.clone();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn csv_f64(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn cmd_simulate(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<()> {
    let stage = Stage::Simulate;
    log.note(stage, format!("{} seeds x {} timestamps", cfg.n_seeds, cfg.timestamps));
    seed_grid(cfg).par_iter().try_for_each(|&(s, t)| {
        let channel = skg_core::ChannelConfig {
            seed: seed::derive(cfg.seed, &[SIMULATE_STREAM, s as u64, t as u64]),
            ..cfg.channel.clone()
        };
        let (ap, sta, eve) = simulate_capture::<f64>(&channel).map_err(|e| StageError::new(stage, e))?;
        for mut block in [ap, sta, eve] {
            block.timestamp_id = timestamp_id(t);
            let path = layout.capture(s, t, block.role);
            ensure_parent(stage, &path)?;
            save_csi_csv(&block, &path).map_err(|e| StageError::at(stage, &path, e))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// Mean AP-STA correlation for orders 0, 1, 2.
    pub sta: [Option<f64>; 3],
    /// Mean AP-EVE correlation for orders 0, 1, 2.
    pub eve: [Option<f64>; 3],
}

fn mean_rows(rows: &[[Option<f64>; 3]]) -> [Option<f64>; 3] {
    std::array::from_fn(|o| {
        let v: Vec<f64> = rows.iter().filter_map(|r| r[o]).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    })
}

pub fn cmd_scatter(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<CorrelationSummary> {
    let stage = Stage::Scatter;
    let ks = distinct_subcarriers(cfg);
    let bank = build_filter_bank::<f64>(&cfg.scattering, cfg.channel.n_samples).map_err(|e| StageError::new(stage, e))?;
    log.note(stage, format!("{} paths per representation", bank.paths().len()));
    type Rows = Vec<(usize, usize, usize, [Option<f64>; 3], [Option<f64>; 3])>;
    let rows: Vec<Rows> = seed_grid(cfg)
        .par_iter()
        .map(|&(s, t)| {
            let mut feats = Vec::new();
            for role in ROLES {
                let path = layout.capture(s, t, role);
                let block = load_csi_csv::<f64>(&path).map_err(|e| StageError::at(stage, &path, e))?;
                if block.role != role || block.n_samples() != cfg.channel.n_samples {
                    return Err(StageError::at(stage, &path, "capture does not match the configuration"));
                }
                let mut per_k = Vec::new();
                for &k in &ks {
                    if k >= block.n_subcarriers() {
                        return Err(StageError::at(stage, &path, format!("no subcarrier {k}")));
                    }
                    let f = scatter(block.subcarrier(k), &bank)
                        .map_err(|e| StageError::at(stage, &path, e))?
                        .with_tag(timestamp_id(t), k);
                    let out = layout.features(s, t, role, k);
                    ensure_parent(stage, &out)?;
                    let file = fs::File::create(&out).map_err(|e| StageError::at(stage, &out, e))?;
                    write_features(&f, BufWriter::new(file)).map_err(|e| StageError::at(stage, &out, e))?;
                    per_k.push(f);
                }
                feats.push(per_k);
            }
            let mut rows = Vec::new();
            for (i, &k) in ks.iter().enumerate() {
                let corr = |other: &ScatteringFeatures<f64>| -> StageResult<[Option<f64>; 3]> {
                    let r = path_correlations(&feats[0][i], other).map_err(|e| StageError::new(stage, e))?;
                    Ok(mean_correlation_by_order(&feats[0][i].paths, &r))
                };
                rows.push((s, t, k, corr(&feats[1][i])?, corr(&feats[2][i])?));
            }
            Ok(rows)
        })
        .collect::<StageResult<_>>()?;
    let rows: Rows = rows.into_iter().flatten().collect();

    let mut csv = String::from("seed,timestamp,subcarrier,listener,order0,order1,order2\n");
    for (s, t, k, sta, eve) in &rows {
        for (who, r) in [("STA", sta), ("EVE", eve)] {
            let _ = writeln!(csv, "{s},{},{k},{who},{},{},{}", timestamp_id(*t), csv_f64(r[0]), csv_f64(r[1]), csv_f64(r[2]));
        }
    }
    write_text(stage, &layout.file("fig3_corr.csv"), &csv)?;
    let sta: Vec<_> = rows.iter().map(|r| r.3).collect();
    let eve: Vec<_> = rows.iter().map(|r| r.4).collect();
    Ok(CorrelationSummary { sta: mean_rows(&sta), eve: mean_rows(&eve) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRecord {
    pub seed: usize,
    pub pair: usize,
    pub role: Role,
    pub kl_trace: Vec<(usize, f64)>,
}

fn load_features(stage: Stage, path: &Path) -> StageResult<ScatteringFeatures<f64>> {
    let file = fs::File::open(path).map_err(|e| StageError::at(stage, path, e))?;
    read_features(BufReader::new(file)).map_err(|e| StageError::at(stage, path, e))
}

pub fn cmd_embed(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<Vec<KlRecord>> {
    let stage = Stage::Embed;
    let pairs = cfg.pairs();
    let jobs: Vec<(usize, usize, usize)> =
        pair_grid(cfg).into_iter().flat_map(|(s, p)| (0..ROLES.len()).map(move |r| (s, p, r))).collect();
    log.note(stage, format!("{} t-SNE runs", jobs.len()));
    let records = jobs
        .par_iter()
        .map(|&(s, p, r)| {
            let role = ROLES[r];
            let reps = pairs[p]
                .iter()
                .enumerate()
                .map(|(t, &k)| {
                    let path = layout.features(s, t, role, k);
                    let f = load_features(stage, &path)?;
                    let f = select_orders(&f, &cfg.feature_orders).map_err(|e| StageError::at(stage, &path, e))?;
                    Ok(normalize_representation(&f))
                })
                .collect::<StageResult<Vec<_>>>()?;
            let points = stack_representations(&reps).map_err(|e| StageError::new(stage, e))?;
            let tsne_cfg = skg_core::TsneConfig {
                seed: seed::derive(cfg.seed, &[EMBED_STREAM, s as u64, p as u64, r as u64]),
                ..cfg.tsne.clone()
            };
            let emb = tsne(&points, &tsne_cfg).map_err(|e| StageError::new(stage, e))?;
            let out = layout.embedding(s, p, role);
            ensure_parent(stage, &out)?;
            emb.save_csv(&out).map_err(|e| StageError::at(stage, &out, e))?;
            Ok(KlRecord { seed: s, pair: p, role, kl_trace: emb.kl_trace })
        })
        .collect::<StageResult<Vec<_>>>()?;
    write_json(stage, &layout.kl_traces(), &records)?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeKeys {
    pub scheme: SchemeKind,
    pub ap: KeyMaterial,
    pub sta: KeyMaterial,
    pub eve: KeyMaterial,
}

/// Everything keygen produced for one cluster-set pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairKeys {
    pub seed: usize,
    pub pair: usize,
    pub subcarriers: Vec<usize>,
    pub c: usize,
    /// This pair's share of the seed's CSI samples.
    pub samples_used: f64,
    pub ap_gmm: GmmModel<f64>,
    pub keys: Vec<SchemeKeys>,
}

pub fn cmd_keygen(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<()> {
    let stage = Stage::Keygen;
    let pairs = cfg.pairs();
    let share = cfg.samples_per_seed() as f64 / pairs.len() as f64;
    log.note(stage, format!("{} pairs x {} schemes", cfg.n_seeds * pairs.len(), cfg.schemes.len()));
    pair_grid(cfg).par_iter().try_for_each(|&(s, p)| {
        let embs = ROLES
            .iter()
            .map(|&role| {
                let path = layout.embedding(s, p, role);
                Embedding2D::<f64>::load_csv(&path).map_err(|e| StageError::at(stage, &path, e))
            })
            .collect::<StageResult<Vec<_>>>()?;
        let agreement_seed = seed::derive(cfg.seed, &[KEYGEN_STREAM, s as u64, p as u64]);
        let mut keys = Vec::new();
        let mut first = None;
        for &scheme in &cfg.schemes {
            let acfg = AgreementConfig::new(ComponentCount::Auto { c_max: cfg.c_max }, cfg.key_length_l, scheme, agreement_seed);
            let out = run_agreement(&embs[0], &embs[1], &embs[2], &acfg, &Identity).map_err(|e| StageError::new(stage, e))?;
            keys.push(SchemeKeys { scheme, ap: out.ap, sta: out.sta, eve: out.eve });
            first.get_or_insert((out.transcript, out.ap_gmm));
        }
        let (transcript, ap_gmm) = first.expect("at least one scheme");
        let tpath = layout.transcript(s, p);
        ensure_parent(stage, &tpath)?;
        write_transcript(&tpath, &transcript).map_err(|e| StageError::at(stage, &tpath, e))?;
        let record = PairKeys {
            seed: s,
            pair: p,
            subcarriers: pairs[p].clone(),
            c: ap_gmm.n_components(),
            samples_used: share,
            ap_gmm,
            keys,
        };
        write_json(stage, &layout.keys(s, p), &record)
    })
}

fn load_keys(stage: Stage, cfg: &ExperimentConfig, layout: &Layout) -> StageResult<Vec<PairKeys>> {
    pair_grid(cfg).iter().map(|&(s, p)| read_json(stage, &layout.keys(s, p))).collect()
}

fn scheme_keys<'a>(stage: Stage, pk: &'a PairKeys, scheme: SchemeKind, layout: &Layout) -> StageResult<&'a SchemeKeys> {
    pk.keys
        .iter()
        .find(|k| k.scheme == scheme)
        .ok_or_else(|| StageError::at(stage, &layout.keys(pk.seed, pk.pair), format!("no {scheme} keys")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub seed: usize,
    pub pair: usize,
    pub scheme: SchemeKind,
    pub c: usize,
    pub sta: KeyPairResult,
    pub eve: KeyPairResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: SchemeKind,
    pub ber_sta: f64,
    pub ber_eve: f64,
    /// `(threshold %, bits per CSI sample)`.
    pub kgr: Vec<(f64, f64)>,
    /// The same curve per seed, in seed order.
    pub kgr_per_seed: Vec<Vec<(f64, f64)>>,
    pub ber_sta_per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub pairs: Vec<PairResult>,
    pub schemes: Vec<SchemeSummary>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<Evaluation> {
    let stage = Stage::Evaluate;
    let all = load_keys(stage, cfg, layout)?;
    let mut pairs = Vec::new();
    for pk in &all {
        for &scheme in &cfg.schemes {
            let k = scheme_keys(stage, pk, scheme, layout)?;
            let path = layout.keys(pk.seed, pk.pair);
            let sta = KeyPairResult::new(&k.ap.bits, &k.sta.bits, pk.samples_used).map_err(|e| StageError::at(stage, &path, e))?;
            let eve = KeyPairResult::new(&k.ap.bits, &k.eve.bits, pk.samples_used).map_err(|e| StageError::at(stage, &path, e))?;
            pairs.push(PairResult { seed: pk.seed, pair: pk.pair, scheme, c: pk.c, sta, eve });
        }
    }
    let curve = |rs: Vec<KeyPairResult>| kgr_curve(&rs, &cfg.thresholds).map_err(|e| StageError::new(stage, e));
    let mut schemes = Vec::new();
    for &scheme in &cfg.schemes {
        let mine: Vec<&PairResult> = pairs.iter().filter(|r| r.scheme == scheme).collect();
        let per_seed = |s: usize| mine.iter().filter(move |r| r.seed == s);
        schemes.push(SchemeSummary {
            scheme,
            ber_sta: mean(mine.iter().map(|r| r.sta.ber)),
            ber_eve: mean(mine.iter().map(|r| r.eve.ber)),
            kgr: curve(mine.iter().map(|r| r.sta.clone()).collect())?,
            kgr_per_seed: (0..cfg.n_seeds)
                .map(|s| curve(per_seed(s).map(|r| r.sta.clone()).collect()))
                .collect::<StageResult<_>>()?,
            ber_sta_per_seed: (0..cfg.n_seeds).map(|s| mean(per_seed(s).map(|r| r.sta.ber))).collect(),
        });
    }

    let mut table = String::from("scenario,scheme,ber_ap_sta,ber_ap_eve,pairs\n");
    let mut fig = String::from("scenario,scheme,threshold_pct,kgr_per_sample,kgr_per_subcarrier_sample\n");
    let n_sub = distinct_subcarriers(cfg).len() as f64;
    for sm in &schemes {
        let n = pairs.iter().filter(|r| r.scheme == sm.scheme).count();
        let _ = writeln!(table, "{},{},{},{},{n}", cfg.name, sm.scheme, sm.ber_sta, sm.ber_eve);
        for &(t, k) in &sm.kgr {
            let _ = writeln!(fig, "{},{},{t},{k},{}", cfg.name, sm.scheme, k / n_sub);
        }
    }
    write_text(stage, &layout.file("table1_ber.csv"), &table)?;
    write_text(stage, &layout.file("fig7_kgr.csv"), &fig)?;

    #[derive(Serialize)]
    struct Report<'a> {
        config: &'a ExperimentConfig,
        pairs: &'a [PairResult],
        kgr_curve: Vec<(SchemeKind, &'a [(f64, f64)])>,
        ber_summary: Vec<(SchemeKind, f64, f64)>,
    }
    let report = Report {
        config: cfg,
        pairs: &pairs,
        kgr_curve: schemes.iter().map(|s| (s.scheme, s.kgr.as_slice())).collect(),
        ber_summary: schemes.iter().map(|s| (s.scheme, s.ber_sta, s.ber_eve)).collect(),
    };
    write_json(stage, &layout.file("report.json"), &report)?;
    for sm in &schemes {
        log.note(stage, format!("{}: BER sta {:.3} eve {:.3}", sm.scheme, sm.ber_sta, sm.ber_eve));
    }
    Ok(Evaluation { pairs, schemes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistSequence {
    pub seed: usize,
    pub scheme: SchemeKind,
    pub n_bits: usize,
    pub battery: Battery,
}

impl NistSequence {
    pub fn raw_passes(&self) -> usize {
        self.battery.raw_passes()
    }

    pub fn permuted_passes(&self) -> usize {
        self.battery.permuted_passes().unwrap_or(0)
    }
}

pub fn cmd_nist(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<Vec<NistSequence>> {
    let stage = Stage::Nist;
    let all = load_keys(stage, cfg, layout)?;
    let params = TestParams::default();
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_seeds).flat_map(|s| (0..cfg.schemes.len()).map(move |i| (s, i))).collect();
    let seqs = jobs
        .par_iter()
        .map(|&(s, i)| {
            let scheme = cfg.schemes[i];
            let mut bits = Vec::new();
            for pk in all.iter().filter(|pk| pk.seed == s) {
                bits.extend_from_slice(scheme_keys(stage, pk, scheme, layout)?.ap.bits.bits());
            }
            let permute = seed::derive(cfg.seed, &[NIST_STREAM, s as u64, i as u64]);
            let battery = run_battery(&BitString(bits.clone()), Some(permute), &params);
            Ok(NistSequence { seed: s, scheme, n_bits: bits.len(), battery })
        })
        .collect::<StageResult<Vec<_>>>()?;

    let mut csv = String::from("scenario,scheme,test,raw_pass_rate,permuted_pass_rate,sequences\n");
    for &scheme in &cfg.schemes {
        let mine: Vec<&NistSequence> = seqs.iter().filter(|q| q.scheme == scheme).collect();
        for (ti, test) in TestId::ALL.iter().enumerate() {
            let rate = |pick: &dyn Fn(&Battery) -> Option<bool>| {
                mean(mine.iter().map(|q| f64::from(u8::from(pick(&q.battery) == Some(true)))))
            };
            let raw = rate(&|b| b.raw[ti].passed());
            let permuted = rate(&|b| b.permuted.as_ref().and_then(|p| p[ti].passed()));
            let _ = writeln!(csv, "{},{scheme},{test},{raw},{permuted},{}", cfg.name, mine.len());
        }
        let avg = mean(mine.iter().map(|q| q.permuted_passes() as f64));
        log.note(stage, format!("{scheme}: {avg:.2}/8 tests passed after permutation"));
    }
    write_text(stage, &layout.file("table2_nist.csv"), &csv)?;
    write_json(stage, &layout.file("nist.json"), &seqs)?;
    Ok(seqs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NistSummary {
    pub scheme: SchemeKind,
    pub mean_raw_passes: f64,
    pub mean_permuted_passes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub correlation: CorrelationSummary,
    pub schemes: Vec<SchemeSummary>,
    pub nist: Vec<NistSummary>,
}

/// Every stage in order, then `summary.json`.
pub fn cmd_all(cfg: &ExperimentConfig, layout: &Layout, log: Log) -> StageResult<Summary> {
    cfg.validate().map_err(|e| StageError::new(Stage::Config, e))?;
    write_text(Stage::Config, &layout.file("config.toml"), &cfg.to_toml())?;
    cmd_simulate(cfg, layout, log)?;
    let correlation = cmd_scatter(cfg, layout, log)?;
    cmd_embed(cfg, layout, log)?;
    cmd_keygen(cfg, layout, log)?;
    let evaluation = cmd_evaluate(cfg, layout, log)?;
    let seqs = cmd_nist(cfg, layout, log)?;
    let nist = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let mine: Vec<&NistSequence> = seqs.iter().filter(|q| q.scheme == scheme).collect();
            NistSummary {
                scheme,
                mean_raw_passes: mean(mine.iter().map(|q| count_passes(&q.battery.raw) as f64)),
                mean_permuted_passes: mean(mine.iter().map(|q| q.permuted_passes() as f64)),
            }
        })
        .collect();
    let summary = Summary { name: cfg.name.clone(), correlation, schemes: evaluation.schemes, nist };
    write_json(Stage::Evaluate, &layout.file("summary.json"), &summary)?;
    Ok(summary)
}

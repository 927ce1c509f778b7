//! The public AP/STA exchange, with an eavesdropper listening in.
//!
//! AP fits a mixture to its embedding, builds the HMM, emits `L` observations
//! and publishes `(C, O)`. STA (and EVE) fit their own mixture with the
//! published `C` and map each observation to a state.
//!
//! Messages are UTF-8 JSON, framed by a little-endian `u32` length.

use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{channel, Receiver, Sender};

use serde::{Deserialize, Serialize};

use crate::channel::Role;
use crate::clustering::{fit_gmm, select_components, GmmModel};
use crate::embedding::Embedding2D;
use crate::encoding::{encode_path, BitString, EncodingScheme, SchemeKind};
use crate::hmm::{build_hmm, emit_decodable_sequence, infer_states, ObservationSequence, StatePath, TransitionSpec};
use crate::{seed, Error, Real, Result};

/// Frames above this size are rejected as malformed.
pub const MAX_FRAME_LEN: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Message {
    Params { c: usize },
    Obs { points: Vec<[f64; 2]> },
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    let len = u32::try_from(payload.len()).map_err(|_| Error::Transport("payload exceeds u32 length".into()))?;
    w.write_all(&len.to_le_bytes()).and_then(|_| w.write_all(payload)).map_err(|e| Error::Transport(e.to_string()))
}

/// Read one frame; `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut len[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(Error::Transport("truncated frame header".into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(Error::Transport(e.to_string())),
        }
    }
    let len = u32::from_le_bytes(len) as usize;
    if len > MAX_FRAME_LEN {
        return Err(Error::Transport(format!("frame of {len} bytes exceeds limit")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|_| Error::Transport("truncated frame body".into()))?;
    Ok(Some(buf))
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>> {
    Ok(serde_json::to_vec(m)?)
}

pub fn decode_message(payload: &[u8]) -> Result<Message> {
    serde_json::from_slice(payload).map_err(|e| Error::Transport(format!("malformed message: {e}")))
}

/// One end of a public channel.
pub trait Endpoint {
    fn send(&mut self, payload: &[u8]) -> Result<()>;
    fn recv(&mut self) -> Result<Vec<u8>>;

    fn send_message(&mut self, m: &Message) -> Result<()> {
        self.send(&encode_message(m)?)
    }

    fn recv_message(&mut self) -> Result<Message> {
        decode_message(&self.recv()?)
    }
}

/// In-process endpoint. Frames cross the channel as raw bytes.
#[derive(Debug)]
pub struct Loopback {
    tx: Option<Sender<Vec<u8>>>,
    rx: Receiver<Vec<u8>>,
    closed: bool,
}

impl Loopback {
    /// Two connected endpoints.
    pub fn pair() -> (Loopback, Loopback) {
        let (ta, ra) = channel();
        let (tb, rb) = channel();
        (Loopback { tx: Some(ta), rx: rb, closed: false }, Loopback { tx: Some(tb), rx: ra, closed: false })
    }

    pub fn close(&mut self) {
        self.closed = true;
        self.tx = None;
    }
}

impl Endpoint for Loopback {
    fn send(&mut self, payload: &[u8]) -> Result<()> {
        let tx = self.tx.as_ref().ok_or_else(|| Error::Transport("endpoint closed".into()))?;
        let mut frame = Vec::with_capacity(payload.len() + 4);
        write_frame(&mut frame, payload)?;
        tx.send(frame).map_err(|_| Error::Transport("peer closed".into()))
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        if self.closed {
            return Err(Error::Transport("endpoint closed".into()));
        }
        let frame = self.rx.recv().map_err(|_| Error::Transport("peer closed".into()))?;
        read_frame(&mut frame.as_slice())?.ok_or_else(|| Error::Transport("empty frame".into()))
    }
}

/// Endpoint backed by a file of frames: sends append, receives read in order.
#[derive(Debug)]
pub struct FileEndpoint {
    path: PathBuf,
    reader: Option<BufReader<File>>,
}

impl FileEndpoint {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), reader: None }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Endpoint for FileEndpoint {
    fn send(&mut self, payload: &[u8]) -> Result<()> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| Error::Transport(format!("{}: {e}", self.path.display())))?;
        write_frame(&mut f, payload)
    }

    fn recv(&mut self) -> Result<Vec<u8>> {
        if self.reader.is_none() {
            let f = File::open(&self.path).map_err(|e| Error::Transport(format!("{}: {e}", self.path.display())))?;
            self.reader = Some(BufReader::new(f));
        }
        let r = self.reader.as_mut().expect("reader opened above");
        read_frame(r)?.ok_or_else(|| Error::Transport(format!("{}: no more messages", self.path.display())))
    }
}

/// Read a whole transcript file.
pub fn read_transcript(path: &Path) -> Result<Vec<Message>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    while let Some(frame) = read_frame(&mut r)? {
        out.push(decode_message(&frame)?);
    }
    Ok(out)
}

pub fn write_transcript(path: &Path, transcript: &[Message]) -> Result<()> {
    let mut buf = Vec::new();
    for m in transcript {
        write_frame(&mut buf, &encode_message(m)?)?;
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Post-agreement error correction. The shipped implementation does nothing.
pub trait Reconciler {
    fn reconcile(&self, role: Role, bits: BitString, transcript: &[Message]) -> BitString;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Reconciler for Identity {
    fn reconcile(&self, _role: Role, bits: BitString, _transcript: &[Message]) -> BitString {
        bits
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ComponentCount {
    Fixed(usize),
    /// AP picks `C` by BIC over `1..=c_max`.
    Auto { c_max: usize },
}

/// Public protocol parameters, known to every party.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementConfig {
    pub components: ComponentCount,
    pub l: usize,
    pub scheme: SchemeKind,
    pub transition: TransitionSpec,
    pub seed: u64,
}

impl AgreementConfig {
    pub fn new(components: ComponentCount, l: usize, scheme: SchemeKind, seed: u64) -> Self {
        Self { components, l, scheme, transition: TransitionSpec::Uniform, seed }
    }

    fn fit_seed(&self) -> u64 {
        seed::derive(self.seed, &[1])
    }

    fn emit_seed(&self) -> u64 {
        seed::derive(self.seed, &[2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyMaterial {
    pub role: Role,
    pub state_labels: StatePath,
    pub bits: BitString,
    pub scheme: SchemeKind,
    pub c: usize,
}

#[derive(Debug, Clone)]
pub struct AgreementOutcome<F> {
    pub ap: KeyMaterial,
    pub sta: KeyMaterial,
    pub eve: KeyMaterial,
    pub transcript: Vec<Message>,
    pub ap_gmm: GmmModel<F>,
}

/// Encoding for a party's own mixture; Huffman uses its mixings in label order.
fn scheme_for<F: Real>(kind: SchemeKind, gmm: &GmmModel<F>, labels: &[usize]) -> Result<EncodingScheme> {
    let c = gmm.n_components();
    if kind == SchemeKind::Huffman && c > 1 {
        let mut w = vec![0.0; c];
        for (k, comp) in gmm.components.iter().enumerate() {
            w[labels[k]] = comp.mixing.as_f64().max(f64::MIN_POSITIVE);
        }
        return EncodingScheme::huffman(w);
    }
    EncodingScheme::new(kind, c)
}

fn key<F: Real>(role: Role, path: StatePath, gmm: &GmmModel<F>, cfg: &AgreementConfig) -> Result<KeyMaterial> {
    let labels = crate::hmm::label_states(gmm);
    let scheme = scheme_for(cfg.scheme, gmm, &labels)?;
    let bits = encode_path(&path.states, &scheme)?;
    Ok(KeyMaterial { role, state_labels: path, bits, scheme: cfg.scheme, c: gmm.n_components() })
}

/// AP side: fit, build the HMM, emit, and produce the public messages.
pub fn ap_session<F: Real>(ap: &Embedding2D<F>, cfg: &AgreementConfig) -> Result<(KeyMaterial, Vec<Message>, GmmModel<F>)> {
    if cfg.l == 0 {
        return Err(Error::Param("key length L must be at least 1".into()));
    }
    let pts = ap.points.view();
    let c = match cfg.components {
        ComponentCount::Fixed(c) => c,
        ComponentCount::Auto { c_max } => select_components(pts, c_max, cfg.fit_seed())?.0,
    };
    let gmm = fit_gmm(pts, c, cfg.fit_seed())?;
    let hmm = build_hmm(gmm, &cfg.transition)?;
    let (obs, path) = emit_decodable_sequence(&hmm, cfg.l, cfg.emit_seed());
    let transcript = vec![
        Message::Params { c },
        Message::Obs { points: obs.points.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect() },
    ];
    let km = key(Role::Ap, path, &hmm.gmm, cfg)?;
    Ok((km, transcript, hmm.gmm))
}

/// Listener side: everything STA (or EVE) needs is its embedding, the
/// public transcript and the protocol configuration.
pub fn sta_from_transcript<F: Real>(
    role: Role,
    emb: &Embedding2D<F>,
    transcript: &[Message],
    cfg: &AgreementConfig,
) -> Result<KeyMaterial> {
    let mut c = None;
    let mut obs = None;
    for m in transcript {
        match m {
            Message::Params { c: v } => c = Some(*v),
            Message::Obs { points } => {
                obs = Some(ObservationSequence { points: points.iter().map(|p| [F::of(p[0]), F::of(p[1])]).collect() })
            }
        }
    }
    let c = c.ok_or_else(|| Error::Transport("transcript lacks a params message".into()))?;
    let obs = obs.ok_or_else(|| Error::Transport("transcript lacks an obs message".into()))?;
    obs.validate()?;
    let gmm = fit_gmm(emb.points.view(), c, cfg.fit_seed())?;
    let path = infer_states(&gmm, &obs);
    key(role, path, &gmm, cfg)
}

fn listen<E: Endpoint>(end: &mut E, expected: usize) -> Result<Vec<Message>> {
    (0..expected).map(|_| end.recv_message()).collect()
}

/// Full exchange over in-process loopbacks.
pub fn run_agreement<F: Real>(
    ap: &Embedding2D<F>,
    sta: &Embedding2D<F>,
    eve: &Embedding2D<F>,
    cfg: &AgreementConfig,
    reconciler: &dyn Reconciler,
) -> Result<AgreementOutcome<F>> {
    let (ap_key, transcript, ap_gmm) = ap_session(ap, cfg)?;
    let (mut to_sta, mut sta_end) = Loopback::pair();
    let (mut to_eve, mut eve_end) = Loopback::pair();
    for m in &transcript {
        to_sta.send_message(m)?;
        to_eve.send_message(m)?;
    }
    let sta_seen = listen(&mut sta_end, transcript.len())?;
    let eve_seen = listen(&mut eve_end, transcript.len())?;
    let mut sta_key = sta_from_transcript(Role::Sta, sta, &sta_seen, cfg)?;
    let eve_key = sta_from_transcript(Role::Eve, eve, &eve_seen, cfg)?;

    let ap_bits = reconciler.reconcile(Role::Ap, ap_key.bits.clone(), &transcript);
    sta_key.bits = reconciler.reconcile(Role::Sta, sta_key.bits, &sta_seen);
    Ok(AgreementOutcome { ap: KeyMaterial { bits: ap_bits, ..ap_key }, sta: sta_key, eve: eve_key, transcript, ap_gmm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scattering::RepTag;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn blob_embedding(seed: u64) -> Embedding2D<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centres = [([0.0, 0.0], 120), ([15.0, 0.0], 60), ([0.0, 15.0], 30)];
        let n: usize = centres.iter().map(|c| c.1).sum();
        let mut pts = Array2::zeros((n, 2));
        let mut i = 0;
        for (m, count) in centres {
            for _ in 0..count {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                pts[[i, 0]] = m[0] + a;
                pts[[i, 1]] = m[1] + b;
                i += 1;
            }
        }
        Embedding2D { points: pts, source: vec![RepTag { timestamp_id: "t".into(), subcarrier: 0 }; n], kl_trace: vec![] }
    }

    #[test]
    fn loopback_round_trips_and_closes() {
        let (mut a, mut b) = Loopback::pair();
        a.send(b"hello").unwrap();
        a.send(b"").unwrap();
        assert_eq!(b.recv().unwrap(), b"hello");
        assert_eq!(b.recv().unwrap(), b"");
        b.close();
        assert!(matches!(b.recv(), Err(Error::Transport(_))));
        a.close();
        assert!(matches!(a.send(b"x"), Err(Error::Transport(_))));
    }

    #[test]
    fn malformed_frames_are_transport_errors() {
        assert!(matches!(read_frame(&mut &[5u8, 0, 0, 0, 1][..]), Err(Error::Transport(_))));
        assert!(matches!(read_frame(&mut &[5u8, 0][..]), Err(Error::Transport(_))));
        assert!(read_frame(&mut &[][..]).unwrap().is_none());
        assert!(matches!(decode_message(b"{\"type\":\"keys\"}"), Err(Error::Transport(_))));
    }

    #[test]
    fn wire_format() {
        let m = Message::Params { c: 3 };
        assert_eq!(String::from_utf8(encode_message(&m).unwrap()).unwrap(), r#"{"type":"params","c":3}"#);
        let o = Message::Obs { points: vec![[1.0, -0.5]] };
        assert_eq!(String::from_utf8(encode_message(&o).unwrap()).unwrap(), r#"{"type":"obs","points":[[1.0,-0.5]]}"#);
    }

    #[test]
    fn file_endpoint_replays_in_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        let mut w = FileEndpoint::new(&p);
        w.send_message(&Message::Params { c: 2 }).unwrap();
        w.send_message(&Message::Obs { points: vec![] }).unwrap();
        let mut r = FileEndpoint::new(&p);
        assert_eq!(r.recv_message().unwrap(), Message::Params { c: 2 });
        assert_eq!(r.recv_message().unwrap(), Message::Obs { points: vec![] });
        assert!(matches!(r.recv(), Err(Error::Transport(_))));
        assert_eq!(read_transcript(&p).unwrap().len(), 2);
    }

    #[test]
    fn identical_embeddings_agree_and_transcript_replays() {
        let e = blob_embedding(1);
        let other = blob_embedding(2);
        let cfg = AgreementConfig::new(ComponentCount::Auto { c_max: 4 }, 64, SchemeKind::SwitchingGray, 11);
        let out = run_agreement(&e, &e, &other, &cfg, &Identity).unwrap();
        assert_eq!(out.ap.c, 3);
        assert_eq!(out.ap.bits, out.sta.bits);
        assert_eq!(out.ap.state_labels, out.sta.state_labels);
        assert_eq!(out.transcript.len(), 2);
        let again = sta_from_transcript(Role::Sta, &e, &out.transcript, &cfg).unwrap();
        assert_eq!(again, out.sta);
    }

    #[test]
    fn zero_length_key_is_rejected() {
        let e = blob_embedding(1);
        let cfg = AgreementConfig::new(ComponentCount::Fixed(2), 0, SchemeKind::Gray, 0);
        assert!(matches!(run_agreement(&e, &e, &e, &cfg, &Identity), Err(Error::Param(_))));
    }
}

//! Hidden Markov models whose states are the components of a fitted mixture.

use std::cmp::Ordering;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clustering::{most_likely, GmmComponent, GmmModel};
use crate::{seed, Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TransitionSpec {
    Uniform,
    /// Row-stochastic `C × C` matrix.
    Custom(Vec<Vec<f64>>),
}

/// A sequence of state labels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatePath {
    pub states: Vec<usize>,
}

impl StatePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

impl AsRef<[usize]> for StatePath {
    fn as_ref(&self) -> &[usize] {
        &self.states
    }
}

impl From<Vec<usize>> for StatePath {
    fn from(states: Vec<usize>) -> Self {
        Self { states }
    }
}

/// Points emitted by an HMM. Serializes as `[[x, y], ...]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationSequence<F> {
    pub points: Vec<[F; 2]>,
}

impl<F: Real> ObservationSequence<F> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Data("observation sequence contains non-finite points".into()));
        }
        Ok(())
    }
}

impl<F: Real> Serialize for ObservationSequence<F> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<[f64; 2]> = self.points.iter().map(|p| [p[0].as_f64(), p[1].as_f64()]).collect();
        v.serialize(s)
    }
}

impl<'de, F: Real> Deserialize<'de> for ObservationSequence<F> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(Self { points: v.into_iter().map(|p| [F::of(p[0]), F::of(p[1])]).collect() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel<F> {
    pub gmm: GmmModel<F>,
    pub transition: Vec<Vec<f64>>,
    /// `labels[k]` is the label of component `k`.
    pub labels: Vec<usize>,
}

impl<F: Real> HmmModel<F> {
    pub fn n_states(&self) -> usize {
        self.gmm.n_components()
    }
}

/// Rank components by ascending mixing proportion; equal mixings fall back
/// to the lexicographic order of the means.
pub fn label_states<F: Real>(gmm: &GmmModel<F>) -> Vec<usize> {
    let c = &gmm.components;
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by(|&i, &j| {
        let key = |k: usize| (c[k].mixing, c[k].mean[0], c[k].mean[1]);
        let (a, b) = (key(i), key(j));
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal))
            .then(a.2.partial_cmp(&b.2).unwrap_or(Ordering::Equal))
            .then(i.cmp(&j))
    });
    let mut labels = vec![0; c.len()];
    for (rank, &k) in order.iter().enumerate() {
        labels[k] = rank;
    }
    labels
}

pub fn build_hmm<F: Real>(gmm: GmmModel<F>, spec: &TransitionSpec) -> Result<HmmModel<F>> {
    let c = gmm.n_components();
    if c == 0 {
        return Err(Error::Matrix("mixture has no components".into()));
    }
    let transition = match spec {
        TransitionSpec::Uniform => vec![vec![1.0 / c as f64; c]; c],
        TransitionSpec::Custom(m) => {
            if m.len() != c || m.iter().any(|r| r.len() != c) {
                return Err(Error::Matrix(format!("transition matrix must be {c}x{c}")));
            }
            for (i, row) in m.iter().enumerate() {
                if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Matrix(format!("row {i} has a negative or non-finite entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > 1e-12 {
                    return Err(Error::Matrix(format!("row {i} sums to {s}")));
                }
            }
            m.clone()
        }
    };
    let labels = label_states(&gmm);
    Ok(HmmModel { gmm, transition, labels })
}

fn sample_index<R: Rng>(weights: impl Iterator<Item = f64> + Clone, rng: &mut R) -> usize {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
    }
    last
}

fn sample_component<F: Real, R: Rng>(c: &GmmComponent<F>, rng: &mut R) -> [F; 2] {
    let (a, b, d) = (c.cov[0][0].as_f64(), c.cov[0][1].as_f64(), c.cov[1][1].as_f64());
    let l11 = a.sqrt();
    let l21 = b / l11;
    let l22 = (d - l21 * l21).max(0.0).sqrt();
    let z0: f64 = StandardNormal.sample(rng);
    let z1: f64 = StandardNormal.sample(rng);
    [F::of(c.mean[0].as_f64() + l11 * z0), F::of(c.mean[1].as_f64() + l21 * z0 + l22 * z1)]
}

/// Walk the chain for `l` steps, emitting one point per step. The returned
/// path holds state labels.
pub fn emit_sequence<F: Real>(hmm: &HmmModel<F>, l: usize, seed_value: u64) -> (ObservationSequence<F>, StatePath) {
    let mut rng = seed::rng(seed_value, &[]);
    let mut points = Vec::with_capacity(l);
    let mut states = Vec::with_capacity(l);
    let mut k = 0;
    for step in 0..l {
        k = if step == 0 {
            sample_index(hmm.gmm.components.iter().map(|c| c.mixing.as_f64()), &mut rng)
        } else {
            sample_index(hmm.transition[k].iter().copied(), &mut rng)
        };
        points.push(sample_component(&hmm.gmm.components[k], &mut rng));
        states.push(hmm.labels[k]);
    }
    (ObservationSequence { points }, StatePath { states })
}

/// Redraws allowed per point before [`emit_decodable_sequence`] gives up on it.
pub const MAX_REDRAWS: usize = 1000;

/// Like [`emit_sequence`], but a point that the mixture would attribute to a
/// different state is redrawn from its own state, so decoding the sequence
/// with the same mixture recovers the path exactly. A state that never wins
/// keeps its last draw after [`MAX_REDRAWS`] attempts.
pub fn emit_decodable_sequence<F: Real>(
    hmm: &HmmModel<F>,
    l: usize,
    seed_value: u64,
) -> (ObservationSequence<F>, StatePath) {
    let (mut obs, path) = emit_sequence(hmm, l, seed_value);
    let mut component = vec![0; hmm.labels.len()];
    for (k, &label) in hmm.labels.iter().enumerate() {
        component[label] = k;
    }
    let mut rng = seed::rng(seed_value, &[1]);
    for (y, &label) in obs.points.iter_mut().zip(&path.states) {
        let k = component[label];
        let mut tries = 0;
        while most_likely(&hmm.gmm, *y) != k && tries < MAX_REDRAWS {
            *y = sample_component(&hmm.gmm.components[k], &mut rng);
            tries += 1;
        }
    }
    (obs, path)
}

/// Emit one point from each listed component index.
pub fn emit_along_path<F: Real>(gmm: &GmmModel<F>, components: &[usize], seed_value: u64) -> Result<ObservationSequence<F>> {
    let mut rng = seed::rng(seed_value, &[]);
    let c = gmm.n_components();
    components
        .iter()
        .map(|&k| {
            if k >= c {
                return Err(Error::Range(format!("component {k} outside mixture of {c}")));
            }
            Ok(sample_component(&gmm.components[k], &mut rng))
        })
        .collect::<Result<Vec<_>>>()
        .map(|points| ObservationSequence { points })
}

/// Most probable component for each observation, as raw component indices.
pub fn infer_components<F: Real>(gmm: &GmmModel<F>, obs: &ObservationSequence<F>) -> Vec<usize> {
    obs.points.iter().map(|&y| most_likely(gmm, y)).collect()
}

/// Map each observation to its most probable state and return the labels.
pub fn infer_states<F: Real>(gmm: &GmmModel<F>, obs: &ObservationSequence<F>) -> StatePath {
    let labels = label_states(gmm);
    StatePath { states: infer_components(gmm, obs).into_iter().map(|k| labels[k]).collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comp(mean: [f64; 2], sd: f64, mixing: f64) -> GmmComponent<f64> {
        GmmComponent { mean, cov: [[sd * sd, 0.0], [0.0, sd * sd]], mixing }
    }

    fn model(c: Vec<GmmComponent<f64>>) -> GmmModel<f64> {
        GmmModel { components: c, loglik_trace: vec![], seed: 0 }
    }

    #[test]
    fn uniform_and_custom_transitions() {
        let g2 = model(vec![comp([0.0, 0.0], 1.0, 0.5), comp([9.0, 0.0], 1.0, 0.5)]);
        assert_eq!(build_hmm(g2.clone(), &TransitionSpec::Uniform).unwrap().transition, vec![vec![0.5; 2]; 2]);
        let g1 = model(vec![comp([0.0, 0.0], 1.0, 1.0)]);
        assert_eq!(build_hmm(g1, &TransitionSpec::Uniform).unwrap().transition, vec![vec![1.0]]);
        let bad = TransitionSpec::Custom(vec![vec![0.5, 0.4], vec![0.5, 0.5]]);
        assert!(matches!(build_hmm(g2, &bad), Err(Error::Matrix(_))));
    }

    #[test]
    fn labels_follow_mixing_then_mean() {
        let g = model(vec![comp([0.0, 0.0], 1.0, 0.6), comp([5.0, 0.0], 1.0, 0.4)]);
        assert_eq!(label_states(&g), vec![1, 0]);
        let g = model(vec![comp([1.0, 0.0], 1.0, 0.5), comp([0.0, 0.0], 1.0, 0.5)]);
        assert_eq!(label_states(&g), vec![1, 0]);
        assert_eq!(label_states(&model(vec![comp([3.0, 3.0], 1.0, 1.0)])), vec![0]);
    }

    #[test]
    fn empty_emission() {
        let h = build_hmm(model(vec![comp([0.0, 0.0], 1.0, 1.0)]), &TransitionSpec::Uniform).unwrap();
        let (o, p) = emit_sequence(&h, 0, 1);
        assert!(o.is_empty() && p.is_empty());
        assert!(infer_states(&h.gmm, &o).is_empty());
    }

    #[test]
    fn two_state_worked_example() {
        // State 1 is the rarer component, state 2 the more common one.
        let g = model(vec![comp([0.0, 0.0], 0.5, 0.3), comp([6.0, 6.0], 0.5, 0.7)]);
        let obs = emit_along_path(&g, &[0, 1, 1, 0], 5).unwrap();
        let ap = infer_states(&g, &obs);
        assert_eq!(ap.states, vec![0, 1, 1, 0]);
        let at_means = ObservationSequence { points: vec![[0.0, 0.0], [6.0, 6.0], [6.0, 6.0], [0.0, 0.0]] };
        assert_eq!(infer_states(&g, &at_means).states, vec![0, 1, 1, 0]);
    }

    #[test]
    fn observation_json_shape() {
        let o = ObservationSequence { points: vec![[1.5, -2.0], [0.25, 3.0]] };
        let s = serde_json::to_string(&o).unwrap();
        assert_eq!(s, "[[1.5,-2.0],[0.25,3.0]]");
        assert_eq!(serde_json::from_str::<ObservationSequence<f64>>(&s).unwrap(), o);
    }
}

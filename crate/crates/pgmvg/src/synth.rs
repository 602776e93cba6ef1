//! Synthetic embedding worlds with known speakers.
//!
//! Each speaker is a point on the unit sphere; utterances scatter around it.
//! Every model sees the same utterances through its own random orthogonal
//! transform plus its own noise, which mimics ensembles of extractors that
//! agree on structure but disagree on details, so cross-model voting has
//! something real to vote on.
//!
//! Noise scales are expressed as expected vector length: a scale of `s` adds
//! a perturbation whose Euclidean norm is about `s` regardless of dimension
//! (per-component sigma is `s/sqrt(dim)`). That keeps "intra_noise = 0.45"
//! meaning the same geometry at dim 8 and dim 512.

use crate::config::{parse_kv_text, ConfigError};
use crate::embedding::{normalize_rows, EmbeddingMatrix, PseudoLabels, UtteranceSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// World recipe. `utts_per_speaker` is inclusive; equal bounds mean a fixed
/// size, unequal bounds draw each speaker's size uniformly (imbalance).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_speakers: usize,
    pub utts_per_speaker: (usize, usize),
    pub dim: usize,
    pub intra_noise: f64,
    pub model_count: usize,
    pub model_rotation: bool,
    pub model_noise: f64,
    pub outlier_frac: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_speakers: 50,
            utts_per_speaker: (40, 40),
            dim: 64,
            intra_noise: 0.45,
            model_count: 3,
            model_rotation: true,
            model_noise: 0.1,
            outlier_frac: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        fn bad(field: &'static str, reason: String) -> SynthError {
            SynthError::Invalid { field, reason }
        }
        if self.num_speakers < 2 {
            return Err(bad("num_speakers", "need at least 2".into()));
        }
        if self.dim < 8 {
            return Err(bad("dim", format!("{} is below 8", self.dim)));
        }
        let (lo, hi) = self.utts_per_speaker;
        if lo < 1 || lo > hi {
            return Err(bad(
                "utts_per_speaker",
                format!("bad range {lo}..{hi}"),
            ));
        }
        for (field, v) in [
            ("intra_noise", self.intra_noise),
            ("model_noise", self.model_noise),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(field, format!("{v} is negative")));
            }
        }
        if self.model_count < 1 {
            return Err(bad("model_count", "need at least 1".into()));
        }
        if !self.outlier_frac.is_finite() || !(0.0..1.0).contains(&self.outlier_frac) {
            return Err(bad(
                "outlier_frac",
                format!("{} outside [0, 1)", self.outlier_frac),
            ));
        }
        Ok(())
    }

    /// Parses `key = value` lines; `utts_per_speaker` accepts `40` or `10..120`.
    pub fn from_kv_text(text: &str) -> Result<Self, SynthError> {
        let mut spec = SynthSpec::default();
        for (key, value) in parse_kv_text(text)? {
            let bad = || ConfigError::BadValue {
                key: key.clone(),
                value: value.clone(),
            };
            match key.as_str() {
                "num_speakers" => spec.num_speakers = value.parse().map_err(|_| bad())?,
                "utts_per_speaker" => {
                    spec.utts_per_speaker = match value.split_once("..") {
                        Some((lo, hi)) => (
                            lo.trim().parse().map_err(|_| bad())?,
                            hi.trim().parse().map_err(|_| bad())?,
                        ),
                        None => {
                            let n = value.parse().map_err(|_| bad())?;
                            (n, n)
                        }
                    }
                }
                "dim" => spec.dim = value.parse().map_err(|_| bad())?,
                "intra_noise" => spec.intra_noise = value.parse().map_err(|_| bad())?,
                "model_count" => spec.model_count = value.parse().map_err(|_| bad())?,
                "model_rotation" => spec.model_rotation = value.parse().map_err(|_| bad())?,
                "model_noise" => spec.model_noise = value.parse().map_err(|_| bad())?,
                "outlier_frac" => spec.outlier_frac = value.parse().map_err(|_| bad())?,
                "seed" => spec.seed = value.parse().map_err(|_| bad())?,
                _ => return Err(ConfigError::UnknownKey(key).into()),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Orthonormal columns; applying it is a rigid transform of the sphere.
struct Orthogonal {
    cols: Vec<Vec<f64>>,
}

impl Orthogonal {
    fn identity(dim: usize) -> Self {
        let cols = (0..dim)
            .map(|c| {
                let mut v = vec![0.0; dim];
                v[c] = 1.0;
                v
            })
            .collect();
        Self { cols }
    }

    /// Gram-Schmidt over random Gaussian columns. Near-dependent draws are
    /// resampled, so the result is always full rank.
    fn random(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
        while cols.len() < dim {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for q in &cols {
                let proj: f64 = v.iter().zip(q.iter()).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q.iter()) {
                    *vi -= proj * qi;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-8 {
                continue;
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            cols.push(v);
        }
        Self { cols }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let dim = self.cols.len();
        let mut out = vec![0.0; dim];
        for (c, q) in self.cols.iter().enumerate() {
            let vc = v[c];
            if vc == 0.0 {
                continue;
            }
            for (o, qi) in out.iter_mut().zip(q.iter()) {
                *o += vc * qi;
            }
        }
        out
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn gaussian_vec(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Generates the world: N matrices over the same utterances, the id list,
/// and the ground-truth labels (junk utterances carry -1).
///
/// Identical specs produce bitwise-identical output. Shared structure
/// (centers, per-utterance scatter) comes from one random stream; each model
/// draws its transform and private noise from its own stream, so models are
/// independent of each other but stable across runs.
pub fn generate(
    spec: &SynthSpec,
) -> Result<(Vec<EmbeddingMatrix>, UtteranceSet, PseudoLabels), SynthError> {
    spec.validate()?;
    let dim = spec.dim;
    let sigma_intra = spec.intra_noise / (dim as f64).sqrt();
    let sigma_model = spec.model_noise / (dim as f64).sqrt();
    let sigma_junk = 0.05 / (dim as f64).sqrt();

    let mut shared = ChaCha8Rng::seed_from_u64(spec.seed);
    shared.set_stream(0);

    let centers: Vec<Vec<f64>> = (0..spec.num_speakers)
        .map(|_| unit_vector(dim, &mut shared))
        .collect();
    let (lo, hi) = spec.utts_per_speaker;
    let sizes: Vec<usize> = (0..spec.num_speakers)
        .map(|_| shared.gen_range(lo..=hi))
        .collect();
    let clean: usize = sizes.iter().sum();
    let junk = (spec.outlier_frac * clean as f64).floor() as usize;
    let total = clean + junk;

    // base point of every utterance before any model-specific effect
    let mut base = Vec::with_capacity(total);
    let mut truth = Vec::with_capacity(total);
    let mut ids = Vec::with_capacity(total);
    for (s, &count) in sizes.iter().enumerate() {
        for u in 0..count {
            let g = gaussian_vec(dim, &mut shared);
            let point: Vec<f64> = centers[s]
                .iter()
                .zip(g.iter())
                .map(|(c, n)| c + sigma_intra * n)
                .collect();
            base.push(point);
            truth.push(s as i64);
            ids.push(format!("spk{s:04}-utt{u:04}"));
        }
    }
    let junk_anchor = unit_vector(dim, &mut shared);
    for j in 0..junk {
        let g = gaussian_vec(dim, &mut shared);
        let point: Vec<f64> = junk_anchor
            .iter()
            .zip(g.iter())
            .map(|(c, n)| c + sigma_junk * n)
            .collect();
        base.push(point);
        truth.push(-1);
        ids.push(format!("junk-{j:04}"));
    }

    let mut matrices = Vec::with_capacity(spec.model_count);
    for n in 0..spec.model_count {
        let mut private = ChaCha8Rng::seed_from_u64(spec.seed);
        private.set_stream(n as u64 + 1);
        let transform = if spec.model_rotation {
            Orthogonal::random(dim, &mut private)
        } else {
            Orthogonal::identity(dim)
        };
        let mut data = Vec::with_capacity(total * dim);
        for point in &base {
            let h = gaussian_vec(dim, &mut private);
            let noisy: Vec<f64> = point
                .iter()
                .zip(h.iter())
                .map(|(p, n)| p + sigma_model * n)
                .collect();
            data.extend(transform.apply(&noisy));
        }
        let m = EmbeddingMatrix::new(n, dim, data).expect("generated data is finite");
        matrices.push(normalize_rows(&m).expect("noise keeps rows off zero"));
    }

    let set = UtteranceSet::new(ids).expect("generated ids are unique");
    let labels = PseudoLabels::new(truth).expect("speaker labels are dense");
    Ok((matrices, set, labels))
}

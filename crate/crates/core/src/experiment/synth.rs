//! Synthetic judgment data generated from a known factor, for checking
//! that training recovers a metric it should be able to find.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{EmbeddingStore, Normalization, Provenance, SimilarityDataset, WordPair};
use crate::error::{Error, Result};
use crate::metric::{metric_cosine, Embedding, MetricFactor, SquareMatrix};
use crate::training::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub n_words: usize,
    /// The hidden factor is `I + scale·G` with `G` standard normal; 0 gives
    /// the identity.
    pub hidden_factor_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("synthetic dimension must be at least 2, got {}", self.dim)));
        }
        if self.n_words < 3 {
            return Err(Error::Config(format!("need at least 3 words, got {}", self.n_words)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !self.hidden_factor_scale.is_finite() {
            return Err(Error::Config("hidden factor scale must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub store: EmbeddingStore,
    pub dataset: SimilarityDataset,
    pub hidden: MetricFactor,
}

const EMBED_STREAM: u64 = 1;
const FACTOR_STREAM: u64 = 2;
const NOISE_STREAM: u64 = 3;

/// Samples standard-normal embeddings, a hidden factor and all
/// `C(n_words, 2)` pairs with targets `(s + 1)/2 + noise`, clipped to
/// `[0, 1]`, where `s` is the hidden-metric cosine.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.dim;
    let width = (spec.n_words - 1).to_string().len();

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[EMBED_STREAM]));
    let mut store = EmbeddingStore::new("synthetic", d, Normalization::Lowercase);
    let mut words = Vec::with_capacity(spec.n_words);
    while words.len() < spec.n_words {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let word = format!("w{:0width$}", words.len());
        if let Ok(e) = Embedding::new(word, v) {
            store.insert(e.clone())?;
            words.push(e);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[FACTOR_STREAM]));
    let mut hidden = SquareMatrix::identity(d);
    for v in hidden.as_mut_slice() {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v += spec.hidden_factor_scale * g;
    }
    let hidden = MetricFactor::from_matrix(hidden)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[NOISE_STREAM]));
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut pairs = Vec::with_capacity(spec.n_words * (spec.n_words - 1) / 2);
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let s = metric_cosine(&words[i], &words[j], &hidden)?;
            let mut target = (s + 1.0) / 2.0;
            if spec.noise_sigma > 0.0 {
                target += noise.sample(&mut rng);
            }
            pairs.push(WordPair {
                word_a: words[i].word().to_string(),
                word_b: words[j].word().to_string(),
                target: target.clamp(0.0, 1.0),
                group: None,
            });
        }
    }
    let dataset = SimilarityDataset::new("synthetic", pairs, Provenance::Plain)?;
    Ok(SyntheticData { store, dataset, hidden })
}

#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub embeddings: PathBuf,
    pub judgments: PathBuf,
    pub hidden_factor: PathBuf,
    pub config: PathBuf,
}

/// Writes `embeddings.txt`, `judgments.csv` (unit scale), `hidden_factor.txt`
/// and a one-cell `config.toml` into `out`.
pub fn write_synthetic(spec: &SyntheticSpec, out: &Path, learning_rate: f64, folds: usize) -> Result<SyntheticFiles> {
    let data = generate(spec)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let files = SyntheticFiles {
        embeddings: out.join("embeddings.txt"),
        judgments: out.join("judgments.csv"),
        hidden_factor: out.join("hidden_factor.txt"),
        config: out.join("config.toml"),
    };
    data.store.write_text(&files.embeddings)?;
    let mut csv = String::from("word1,word2,rating\n");
    for p in data.dataset.pairs() {
        let _ = writeln!(csv, "{},{},{}", p.word_a, p.word_b, p.target);
    }
    fs::write(&files.judgments, csv).map_err(|e| Error::io(&files.judgments, e))?;
    data.hidden.write(&files.hidden_factor)?;
    let config = format!(
        r#"embeddings_path = "embeddings.txt"
representation = "synthetic"
seed = {seed}
output_dir = "results"
scale = "unit"
init_mode = "identity"

[grid]
learning_rates = [{learning_rate:e}]
fold_counts = [{folds}]

[[dataset_paths]]
name = "synthetic"
path = "judgments.csv"
role = "all"
"#,
        seed = spec.seed
    );
    fs::write(&files.config, config).map_err(|e| Error::io(&files.config, e))?;
    Ok(files)
}

//! Skip-gram with negative sampling, single worker.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, TextError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `lr * 1e-4` over training.
    pub learning_rate: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 50, window: 4, negatives: 5, epochs: 5, learning_rate: 0.025 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    /// Mean negative-sampling loss per (center, context) pair for each epoch.
    pub epoch_losses: Vec<f64>,
}

const NOISE_TABLE_SIZE: usize = 1 << 20;
const NOISE_POWER: f64 = 0.75;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Trains input vectors for every token of `corpus`. Each document is a
/// token sequence; context windows never cross documents.
pub fn train_embeddings<S: AsRef<str>>(
    corpus: &[Vec<S>],
    config: &EmbeddingConfig,
    seed: u64,
) -> Result<TrainedEmbeddings, TextError> {
    if config.dim == 0 {
        return Err(TextError::ZeroDim);
    }
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for doc in corpus {
        for t in doc {
            *counts.entry(t.as_ref()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(TextError::EmptyCorpus);
    }
    let words: Vec<&str> = counts.keys().copied().collect();
    let index: BTreeMap<&str, usize> = words.iter().enumerate().map(|(i, w)| (*w, i)).collect();
    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|d| d.iter().map(|t| index[t.as_ref()]).collect())
        .collect();

    let noise = noise_table(&words.iter().map(|w| counts[w]).collect::<Vec<_>>());
    let dim = config.dim;
    let n_words = words.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut input: Vec<f64> = (0..n_words * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; n_words * dim];
    let mut grad = vec![0.0f64; dim];

    let total_tokens: usize = docs.iter().map(Vec::len).sum();
    let total_steps = (total_tokens * config.epochs).max(1) as f64;
    let min_lr = config.learning_rate * 1e-4;
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for _ in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut pairs = 0usize;
        for doc in &docs {
            for (pos, &center) in doc.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / total_steps)).max(min_lr);
                processed += 1;
                // Reduced window as in word2vec: b in [1, window].
                let span = if config.window == 0 { 0 } else { rng.random_range(1..=config.window) };
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(doc.len() - 1);
                for ctx_pos in lo..=hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = doc[ctx_pos];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let in_row = center * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = noise[rng.random_range(0..noise.len())];
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = target * dim;
                        let dot: f64 = (0..dim).map(|j| input[in_row + j] * output[out_row + j]).sum();
                        let p = sigmoid(dot);
                        loss_sum -= if label > 0.0 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                        let g = lr * (label - p);
                        for j in 0..dim {
                            grad[j] += g * output[out_row + j];
                            output[out_row + j] += g * input[in_row + j];
                        }
                    }
                    for j in 0..dim {
                        input[in_row + j] += grad[j];
                    }
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs == 0 { 0.0 } else { loss_sum / pairs as f64 });
    }

    let mut table = EmbeddingTable::new(dim);
    for (i, w) in words.iter().enumerate() {
        table.insert(*w, input[i * dim..(i + 1) * dim].to_vec())?;
    }
    Ok(TrainedEmbeddings { table, epoch_losses })
}

fn noise_table(counts: &[u64]) -> Vec<usize> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(NOISE_POWER)).collect();
    let total: f64 = weights.iter().sum();
    let size = NOISE_TABLE_SIZE.min(counts.len() * 1000).max(counts.len());
    let mut table = Vec::with_capacity(size);
    let mut cumulative = 0.0;
    for (i, w) in weights.iter().enumerate() {
        cumulative += w / total;
        let upto = ((cumulative * size as f64).round() as usize).min(size);
        while table.len() < upto {
            table.push(i);
        }
    }
    while table.len() < size {
        table.push(counts.len() - 1);
    }
    table
}

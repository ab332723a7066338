//! Text processing: normalization, wordpiece vocabulary and tokenizer, URL
//! handling, and word embeddings.

mod embedding;
mod sgns;
mod url;
mod wordpiece;

pub use embedding::{embed_text, load_embeddings, read_embeddings, write_embeddings, EmbeddingTable};
pub use sgns::{train_embeddings, EmbeddingConfig, TrainedEmbeddings};
pub use url::{extract_domain, url_path_text, url_text};
pub use wordpiece::{learn_vocab, load_vocab, tokenize, tokenize_word, Vocab, CONTINUATION, UNK};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TextError {
    #[error("target below alphabet size: target {target}, need at least {needed}")]
    TargetBelowAlphabet { target: usize, needed: usize },
    #[error("embedding corpus is empty")]
    EmptyCorpus,
    #[error("embedding dimension must be >= 1")]
    ZeroDim,
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn normalize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}

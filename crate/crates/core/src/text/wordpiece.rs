use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use super::{normalize_words, TextError};

pub const UNK: &str = "[UNK]";
pub const CONTINUATION: &str = "##";

/// A wordpiece vocabulary. Continuation pieces carry the `##` prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
    max_piece_chars: usize,
}

impl Vocab {
    /// Builds a vocabulary from an explicit piece list. `[UNK]` is added
    /// in front when missing.
    pub fn from_pieces<I, S>(pieces: I) -> Result<Self, TextError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab { pieces: Vec::new(), index: HashMap::new(), max_piece_chars: 0 };
        let list: Vec<String> = pieces.into_iter().map(Into::into).collect();
        if !list.iter().any(|p| p == UNK) {
            vocab.push(UNK.to_string());
        }
        for (i, piece) in list.into_iter().enumerate() {
            if piece.is_empty() || piece == CONTINUATION {
                return Err(TextError::Format { line: i + 1, message: "empty piece".into() });
            }
            if vocab.index.contains_key(&piece) {
                return Err(TextError::Format {
                    line: i + 1,
                    message: format!("duplicate piece {piece:?}"),
                });
            }
            vocab.push(piece);
        }
        Ok(vocab)
    }

    fn unk_only() -> Self {
        Self::from_pieces([UNK]).expect("static vocabulary")
    }

    fn push(&mut self, piece: String) -> u32 {
        let id = self.pieces.len() as u32;
        self.max_piece_chars = self.max_piece_chars.max(piece.chars().count());
        self.index.insert(piece.clone(), id);
        self.pieces.push(piece);
        id
    }

    pub fn size(&self) -> usize {
        self.pieces.len()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.pieces[id as usize]
    }

    pub fn contains(&self, piece: &str) -> bool {
        self.index.contains_key(piece)
    }

    pub fn unk_id(&self) -> u32 {
        self.index[UNK]
    }

    /// One piece per line.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for p in &self.pieces {
            writeln!(w, "{p}")?;
        }
        Ok(())
    }
}

pub fn load_vocab<R: BufRead>(reader: R) -> Result<Vocab, TextError> {
    let mut pieces = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let piece = line.trim_end_matches('\r');
        if !piece.is_empty() {
            pieces.push(piece.to_string());
        }
    }
    Vocab::from_pieces(pieces)
}

/// Learns a vocabulary of at most `target_size` pieces by greedy pair merging.
///
/// The vocabulary starts with `[UNK]` and every observed character, then adds
/// continuation characters (`##c`) by frequency, then merges the most frequent
/// adjacent symbol pair until the target is reached or no pair remains.
/// Frequency ties go to the lexicographically smallest candidate.
pub fn learn_vocab<S: AsRef<str>>(corpus: &[S], target_size: usize) -> Result<Vocab, TextError> {
    let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
    for text in corpus {
        for w in normalize_words(text.as_ref()) {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Ok(Vocab::unk_only());
    }

    let mut char_freq: BTreeMap<char, u64> = BTreeMap::new();
    let mut cont_freq: BTreeMap<char, u64> = BTreeMap::new();
    for (w, &n) in &word_counts {
        for (i, c) in w.chars().enumerate() {
            *char_freq.entry(c).or_default() += n;
            if i > 0 {
                *cont_freq.entry(c).or_default() += n;
            }
        }
    }
    let needed = char_freq.len() + 1;
    if target_size < needed {
        return Err(TextError::TargetBelowAlphabet { target: target_size, needed });
    }

    let mut vocab = Vocab::unk_only();
    for c in by_frequency(char_freq) {
        vocab.push(c.to_string());
    }
    for c in by_frequency(cont_freq) {
        if vocab.size() >= target_size {
            return Ok(vocab);
        }
        vocab.push(format!("{CONTINUATION}{c}"));
    }

    // Each word type as a symbol sequence of piece ids.
    let mut words: Vec<(Vec<u32>, u64)> = word_counts
        .iter()
        .map(|(w, &n)| {
            let syms = w
                .chars()
                .enumerate()
                .map(|(i, c)| {
                    let p = if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") };
                    vocab.id(&p).expect("alphabet piece present")
                })
                .collect();
            (syms, n)
        })
        .collect();

    while vocab.size() < target_size {
        let mut pair_counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (syms, n) in &words {
            for pair in syms.windows(2) {
                *pair_counts.entry((pair[0], pair[1])).or_default() += n;
            }
        }
        let best = pair_counts.into_iter().max_by(|(pa, ca), (pb, cb)| {
            ca.cmp(cb).then_with(|| {
                let ka = (vocab.piece(pa.0), vocab.piece(pa.1));
                let kb = (vocab.piece(pb.0), vocab.piece(pb.1));
                kb.cmp(&ka)
            })
        });
        let Some(((left, right), _)) = best else { break };
        let merged = format!("{}{}", vocab.piece(left), &vocab.piece(right)[CONTINUATION.len()..]);
        let merged_id = match vocab.id(&merged) {
            Some(id) => id,
            None => vocab.push(merged),
        };
        for (syms, _) in &mut words {
            if syms.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(syms.len());
            let mut i = 0;
            while i < syms.len() {
                if i + 1 < syms.len() && syms[i] == left && syms[i + 1] == right {
                    out.push(merged_id);
                    i += 2;
                } else {
                    out.push(syms[i]);
                    i += 1;
                }
            }
            *syms = out;
        }
    }
    Ok(vocab)
}

fn by_frequency(freq: BTreeMap<char, u64>) -> Vec<char> {
    let mut v: Vec<(char, u64)> = freq.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(c, _)| c).collect()
}

/// Greedy longest-match-first segmentation of one already-normalized word.
/// Returns `[UNK]` alone when the word cannot be fully segmented.
pub fn tokenize_word(word: &str, vocab: &Vocab) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start < chars.len() {
        let mut end = chars.len().min(start + vocab.max_piece_chars);
        let mut found = None;
        while end > start {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION);
            }
            candidate.extend(&chars[start..end]);
            if vocab.contains(&candidate) {
                found = Some(candidate.clone());
                break;
            }
            end -= 1;
        }
        match found {
            Some(p) => {
                pieces.push(p);
                start = end;
            }
            None => return vec![UNK.to_string()],
        }
    }
    pieces
}

/// Normalizes `text` and segments every word.
pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<String> {
    normalize_words(text)
        .iter()
        .flat_map(|w| tokenize_word(w, vocab))
        .collect()
}

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use super::TextError;

/// Piece-to-vector map with a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self { dim, vectors: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, piece: &str) -> Option<&[f64]> {
        self.vectors.get(piece).map(Vec::as_slice)
    }

    pub fn insert(&mut self, piece: impl Into<String>, vector: Vec<f64>) -> Result<(), TextError> {
        if vector.len() != self.dim {
            return Err(TextError::Format {
                line: 0,
                message: format!("vector length {} != dim {}", vector.len(), self.dim),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(TextError::Format { line: 0, message: "non-finite vector value".into() });
        }
        self.vectors.insert(piece.into(), vector);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

/// Mean of the vectors of in-table pieces; the zero vector when none are found.
pub fn embed_text<S: AsRef<str>>(pieces: &[S], table: &EmbeddingTable) -> Vec<f64> {
    let mut acc = vec![0.0; table.dim()];
    let mut n = 0usize;
    for p in pieces {
        if let Some(v) = table.get(p.as_ref()) {
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x;
            }
            n += 1;
        }
    }
    if n > 0 {
        let inv = 1.0 / n as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
    }
    acc
}

/// Reads the `piece v1 .. vd` text format. An empty input yields an empty
/// table of dimension `default_dim`.
pub fn read_embeddings<R: BufRead>(reader: R, default_dim: usize) -> Result<EmbeddingTable, TextError> {
    let mut table: Option<EmbeddingTable> = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let piece = parts.next().expect("non-blank line has a field");
        let values = parts
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| TextError::Format { line: lineno, message: format!("bad number: {e}") })?;
        if values.is_empty() {
            return Err(TextError::Format { line: lineno, message: "no vector values".into() });
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
        if values.len() != t.dim {
            return Err(TextError::Format {
                line: lineno,
                message: format!("expected {} values, found {}", t.dim, values.len()),
            });
        }
        t.insert(piece, values).map_err(|e| match e {
            TextError::Format { message, .. } => TextError::Format { line: lineno, message },
            other => other,
        })?;
    }
    Ok(table.unwrap_or_else(|| EmbeddingTable::new(default_dim)))
}

pub fn load_embeddings(path: &Path, default_dim: usize) -> Result<EmbeddingTable, TextError> {
    let f = std::fs::File::open(path)?;
    read_embeddings(std::io::BufReader::new(f), default_dim)
}

pub fn write_embeddings<W: Write>(mut w: W, table: &EmbeddingTable) -> std::io::Result<()> {
    for (piece, v) in table.iter() {
        write!(w, "{piece}")?;
        for x in v {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(entries: &[(&str, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(entries[0].1.len());
        for (k, v) in entries {
            t.insert(*k, v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn mean_of_pieces() {
        let t = table(&[("p", &[1.0, 0.0]), ("q", &[0.0, 1.0])]);
        assert_eq!(embed_text(&["p", "q"], &t), vec![0.5, 0.5]);
        assert_eq!(embed_text(&["x", "y"], &t), vec![0.0, 0.0]);
        let t = table(&[("p", &[2.0, 4.0])]);
        assert_eq!(embed_text(&["p", "oov"], &t), vec![2.0, 4.0]);
    }

    #[test]
    fn reads_text_format() {
        let t = read_embeddings("a 1.0 2.0\nb 3.0 4.0".as_bytes(), 7).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("b"), Some(&[3.0, 4.0][..]));
    }

    #[test]
    fn inconsistent_rows_name_the_line() {
        let err = read_embeddings("a 1 2\nb 1 2 3\n".as_bytes(), 2).unwrap_err();
        match err {
            TextError::Format { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_uses_configured_dim() {
        let t = read_embeddings("".as_bytes(), 50).unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dim(), 50);
    }

    #[test]
    fn write_then_read() {
        let t = table(&[("a", &[0.1, -2.5e-3]), ("##b", &[1.0 / 3.0, 7.0])]);
        let mut buf = Vec::new();
        write_embeddings(&mut buf, &t).unwrap();
        assert_eq!(read_embeddings(buf.as_slice(), 2).unwrap(), t);
    }

    proptest! {
        #[test]
        fn mean_is_order_invariant(
            vecs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 1..6),
            seq in prop::collection::vec(0usize..8, 0..10),
            rot in 0usize..10,
        ) {
            let mut t = EmbeddingTable::new(3);
            for (i, v) in vecs.iter().enumerate() {
                t.insert(format!("p{i}"), v.clone()).unwrap();
            }
            let pieces: Vec<String> = seq.iter().map(|i| format!("p{i}")).collect();
            let mut permuted = pieces.clone();
            permuted.reverse();
            if !permuted.is_empty() {
                let r = rot % permuted.len();
                permuted.rotate_left(r);
            }
            let a = embed_text(&pieces, &t);
            let b = embed_text(&permuted, &t);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

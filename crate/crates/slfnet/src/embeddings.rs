//! Whitespace text vectors: one `token v1 ... vd` line per token.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use slfnet_core::encoders::{EmbeddingTable, Vocab, UNK};
use slfnet_core::rng::XorShift64Star;
use slfnet_core::Tensor;

use crate::error::{IoError, IoResult};

/// Which vocabulary entries came from the file and which were drawn at random.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EmbeddingReport {
    pub from_file: usize,
    /// Vocabulary tokens absent from the file, in vocabulary order.
    pub random: Vec<String>,
}

/// Read `path` and build a table for `vocab`. Tokens absent from the file get
/// uniform values in [-0.1, 0.1] drawn from `seed`; the unknown-token row is zero.
pub fn load_pretrained_embeddings(
    path: &Path,
    vocab: &Vocab,
    seed: u64,
) -> IoResult<(EmbeddingTable, EmbeddingReport)> {
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    let mut file_vectors: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (i, line) in text.lines().enumerate() {
        let at = |message: String| IoError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let values = fields
            .map(|f| f.parse::<f64>().map_err(|e| at(format!("value {f:?}: {e}"))))
            .collect::<IoResult<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(at(format!("token {token:?} has no vector")));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(at(format!(
                    "vector for {token:?} has {} values, expected {d}",
                    values.len()
                )))
            }
            Some(_) => {}
        }
        file_vectors.insert(token, values);
    }
    let d = dim.ok_or_else(|| IoError::format(path, "no vectors in file"))?;

    let mut rng = XorShift64Star::new(seed);
    let mut vectors = Tensor::zeros(&[vocab.len(), d]);
    let mut report = EmbeddingReport::default();
    for (row, token) in vocab.tokens().iter().enumerate() {
        if token == UNK {
            continue;
        }
        let dst = &mut vectors.data_mut()[row * d..(row + 1) * d];
        match file_vectors.get(token.as_str()) {
            Some(v) => {
                dst.copy_from_slice(v);
                report.from_file += 1;
            }
            None => {
                for x in dst {
                    *x = rng.uniform(-0.1, 0.1);
                }
                report.random.push(token.clone());
            }
        }
    }
    let table = EmbeddingTable {
        vocab: vocab.clone(),
        vectors,
    };
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn rows_match_file_values() {
        let f = file("open 0.5 -1 2 0.25\ndoor 1e-3 0 0 -7\n");
        let vocab = Vocab::new(["door", "open"]);
        let (table, report) = load_pretrained_embeddings(f.path(), &vocab, 1).unwrap();
        assert_eq!(table.dim(), 4);
        assert_eq!(table.row("open"), &[0.5, -1.0, 2.0, 0.25]);
        assert_eq!(table.row("door"), &[1e-3, 0.0, 0.0, -7.0]);
        assert_eq!(table.row(UNK), &[0.0; 4]);
        assert_eq!(report.from_file, 2);
        assert!(report.random.is_empty());
    }

    #[test]
    fn missing_tokens_are_random_and_reported() {
        let f = file("open 1 2\n");
        let vocab = Vocab::new(["open", "window"]);
        let (table, report) = load_pretrained_embeddings(f.path(), &vocab, 9).unwrap();
        assert_eq!(report.random, ["window"]);
        assert!(table.row("window").iter().all(|v| v.abs() <= 0.1));
        assert_ne!(table.row("window"), &[0.0, 0.0]);
        let (again, _) = load_pretrained_embeddings(f.path(), &vocab, 9).unwrap();
        assert_eq!(again, table);
    }

    #[test]
    fn dimension_mismatch_names_line() {
        let f = file("a 1 2 3\nb 4 5 6\nc 7 8\n");
        let err = load_pretrained_embeddings(f.path(), &Vocab::new(["a"]), 0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, IoError::Line { line: 3, .. }), "{msg}");
        assert!(msg.contains("expected 3"), "{msg}");
    }
}

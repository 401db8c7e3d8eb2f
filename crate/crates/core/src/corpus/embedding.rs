//! Pretrained word vectors in the plain-text word2vec/GloVe layout.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;

use super::LabeledSentence;
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tensor::Tensor;

/// Standard deviation of the freshly drawn UNK row.
pub const UNK_STD: f64 = 0.1;

/// Word vectors plus one trailing row for unknown words.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    matrix: Tensor,
    unk_index: usize,
}

/// A loaded table together with loader diagnostics.
#[derive(Debug, Clone)]
pub struct EmbeddingLoad {
    pub table: EmbeddingTable,
    pub duplicates: usize,
}

impl EmbeddingTable {
    /// Builds a table from known rows; the UNK row is appended last.
    pub fn from_parts(words: Vec<String>, word_rows: Tensor, unk_row: Vec<f64>) -> Result<Self> {
        let dim = unk_row.len();
        if dim == 0 {
            return Err(Error::arg("embedding dimension must be positive"));
        }
        let v = words.len();
        if v > 0 && (word_rows.rows() != v || word_rows.cols() != dim) {
            return Err(Error::dim("embedding table", word_rows.shape(), &[v, dim]));
        }
        let mut data = Vec::with_capacity((v + 1) * dim);
        if v > 0 {
            data.extend_from_slice(word_rows.data());
        }
        data.extend_from_slice(&unk_row);
        let mut index = HashMap::with_capacity(v);
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::arg(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        Ok(EmbeddingTable {
            dim,
            words,
            index,
            matrix: Tensor::new(vec![v + 1, dim], data)?,
            unk_index: v,
        })
    }

    /// Random `N(0, std^2)` vectors for the given words, plus an UNK row.
    pub fn random(words: Vec<String>, dim: usize, std: f64, rng: &mut Prng) -> Result<Self> {
        let n = words.len();
        let rows = if n == 0 {
            Tensor::zeros(&[1, dim])
        } else {
            Tensor::new(vec![n, dim], (0..n * dim).map(|_| rng.normal(0.0, std)).collect())?
        };
        let unk = (0..dim).map(|_| rng.normal(0.0, UNK_STD)).collect();
        Self::from_parts(words, rows, unk)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Rows including UNK.
    pub fn num_rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn unk_index(&self) -> usize {
        self.unk_index
    }

    pub fn unk_row(&self) -> &[f64] {
        self.matrix.row(self.unk_index)
    }

    /// Exact match, then the lowercased form, then UNK.
    pub fn lookup(&self, word: &str) -> usize {
        if let Some(&i) = self.index.get(word) {
            return i;
        }
        let lower = word.to_lowercase();
        self.index.get(&lower).copied().unwrap_or(self.unk_index)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    /// Row indices for a token sequence.
    pub fn indices<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    /// Text form with a `V d` header; the UNK row is not written.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.words.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            out.push_str(w);
            for v in self.row(i) {
                out.push(' ');
                out.push_str(&v.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// `T x d` matrix whose row `t` is the vector of token `t`.
    pub fn embed_sentence(&self, sentence: &LabeledSentence) -> Tensor {
        let mut data = Vec::with_capacity(sentence.len() * self.dim);
        for i in self.indices(sentence.tokens()) {
            data.extend_from_slice(self.row(i));
        }
        Tensor::new(vec![sentence.len(), self.dim], data).expect("sentence is non-empty")
    }
}

fn format_error(line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        line,
        message: message.into(),
    }
}

fn parse_text<R: BufRead>(reader: R, dim: usize, rng: &mut Prng) -> Result<EmbeddingLoad> {
    let mut words = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut data = Vec::new();
    let mut duplicates = 0usize;

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let mut fields = line.split_ascii_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();

        if line_no == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), rest[0].parse::<usize>()) {
                if d != dim {
                    return Err(format_error(1, format!("header declares dimension {d}, expected {dim}")));
                }
                continue;
            }
        }

        if rest.len() != dim {
            return Err(format_error(
                line_no,
                format!("vector for `{word}` has {} components, expected {dim}", rest.len()),
            ));
        }
        if seen.contains_key(word) {
            duplicates += 1;
            continue;
        }
        for v in rest {
            let x: f64 = v
                .parse()
                .map_err(|_| format_error(line_no, format!("`{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(format_error(line_no, format!("non-finite component `{v}`")));
            }
            data.push(x);
        }
        seen.insert(word.to_string(), ());
        words.push(word.to_string());
    }

    if duplicates > 0 {
        warn!("embedding file: {duplicates} duplicate word(s) ignored, first occurrence kept");
    }
    let n = words.len();
    let rows = if n == 0 {
        Tensor::zeros(&[1, dim])
    } else {
        Tensor::new(vec![n, dim], data)?
    };
    let unk = (0..dim).map(|_| rng.normal(0.0, UNK_STD)).collect();
    Ok(EmbeddingLoad {
        table: EmbeddingTable::from_parts(words, rows, unk)?,
        duplicates,
    })
}

/// Reads a text embedding file with an optional `V d` header line.
pub fn load_embedding_text(path: impl AsRef<Path>, dim: usize, rng: &mut Prng) -> Result<EmbeddingLoad> {
    if dim == 0 {
        return Err(Error::arg("embedding dimension must be positive"));
    }
    let file = File::open(path)?;
    parse_text(BufReader::new(file), dim, rng)
}

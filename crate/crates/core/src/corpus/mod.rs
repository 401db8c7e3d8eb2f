//! Labeled sentences, documents and the data tooling around them.

mod conll;
mod embedding;
mod sampling;

pub use conll::{parse_conll, serialize_conll};
pub use embedding::{load_embedding_text, EmbeddingLoad, EmbeddingTable, UNK_STD};
pub use sampling::{split_validation, undersample};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tag::Tag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    tokens: Vec<String>,
    tags: Vec<Tag>,
    rel_pos: f64,
    argumentative: bool,
}

impl LabeledSentence {
    pub fn new(tokens: Vec<String>, tags: Vec<Tag>, rel_pos: f64) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::arg("a sentence needs at least one token"));
        }
        if tokens.len() != tags.len() {
            return Err(Error::dim("sentence", &[tokens.len()], &[tags.len()]));
        }
        if !(0.0..=1.0).contains(&rel_pos) {
            return Err(Error::arg(format!("relative position {rel_pos} outside [0, 1]")));
        }
        let argumentative = tags.iter().any(|t| t.is_component());
        Ok(LabeledSentence {
            tokens,
            tags,
            rel_pos,
            argumentative,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag_indices(&self) -> Vec<usize> {
        self.tags.iter().map(|t| t.index()).collect()
    }

    pub fn rel_pos(&self) -> f64 {
        self.rel_pos
    }

    pub fn argumentative(&self) -> bool {
        self.argumentative
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Same tokens and position with a different tag sequence.
    pub fn with_tags(&self, tags: Vec<Tag>) -> Result<Self> {
        LabeledSentence::new(self.tokens.clone(), tags, self.rel_pos)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<LabeledSentence>,
}

impl Document {
    /// Builds a document, assigning each sentence its relative position.
    pub fn new(id: impl Into<String>, sentences: Vec<(Vec<String>, Vec<Tag>)>) -> Result<Self> {
        let n = sentences.len();
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, (tokens, tags))| LabeledSentence::new(tokens, tags, relative_position(i, n)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Document {
            id: id.into(),
            sentences,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::arg(format!("duplicate document id `{}`", d.id)));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn sentences(&self) -> impl Iterator<Item = &LabeledSentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences().map(LabeledSentence::len).sum()
    }
}

/// `i / (N - 1)`, or 0.0 for a single-sentence document.
pub fn relative_position(index: usize, doc_len: usize) -> Result<f64> {
    if index >= doc_len {
        return Err(Error::arg(format!(
            "sentence index {index} out of range for a document of {doc_len}"
        )));
    }
    if doc_len == 1 {
        return Ok(0.0);
    }
    Ok(index as f64 / (doc_len - 1) as f64)
}

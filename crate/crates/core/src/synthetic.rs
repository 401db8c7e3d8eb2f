//! Seeded toy corpus with deterministically cued components.
//!
//! Every component is wrapped in the marker tokens `[[` and `]]`, which are
//! themselves tagged `O`; the first wrapped token is `B` and the rest `I`.
//! Fillers inside and outside components come from the same pool, so the
//! tagger has to track the markers rather than memorise words.

use crate::corpus::{Corpus, Document, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng::Prng;
use crate::tag::Tag;

pub const OPEN_MARKER: &str = "[[";
pub const CLOSE_MARKER: &str = "]]";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub seed: u64,
    /// Total vocabulary size including the two markers.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub train_sentences: usize,
    pub test_sentences: usize,
    pub sentences_per_document: usize,
    /// Probability that a sentence carries at least one component.
    pub argumentative_rate: f64,
    pub min_filler: usize,
    pub max_filler: usize,
    pub max_component: usize,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            seed: 0,
            vocab_size: 50,
            embedding_dim: 16,
            train_sentences: 200,
            test_sentences: 50,
            sentences_per_document: 5,
            argumentative_rate: 0.5,
            min_filler: 3,
            max_filler: 10,
            max_component: 4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub train: Corpus,
    pub test: Corpus,
    pub embeddings: EmbeddingTable,
}

pub fn vocabulary(vocab_size: usize) -> Vec<String> {
    let mut words = vec![OPEN_MARKER.to_string(), CLOSE_MARKER.to_string()];
    words.extend((0..vocab_size.saturating_sub(2)).map(|i| format!("w{i:02}")));
    words
}

fn sentence(opts: &SyntheticOptions, fillers: &[String], rng: &mut Prng) -> (Vec<String>, Vec<Tag>) {
    let mut tokens = Vec::new();
    let mut tags = Vec::new();
    let filler = |rng: &mut Prng| fillers[rng.below(fillers.len())].clone();
    let span = opts.max_filler - opts.min_filler + 1;
    let n_fill = opts.min_filler + rng.below(span);
    let components = if rng.bernoulli(opts.argumentative_rate) {
        1 + rng.below(2)
    } else {
        0
    };
    // Component insertion points among the filler gaps, ascending.
    let mut slots: Vec<usize> = (0..components).map(|_| rng.below(n_fill + 1)).collect();
    slots.sort_unstable();
    let mut next = 0;
    for gap in 0..=n_fill {
        while next < slots.len() && slots[next] == gap {
            tokens.push(OPEN_MARKER.to_string());
            tags.push(Tag::O);
            let len = 1 + rng.below(opts.max_component);
            for j in 0..len {
                tokens.push(filler(rng));
                tags.push(if j == 0 { Tag::B } else { Tag::I });
            }
            tokens.push(CLOSE_MARKER.to_string());
            tags.push(Tag::O);
            next += 1;
        }
        if gap < n_fill {
            tokens.push(filler(rng));
            tags.push(Tag::O);
        }
    }
    (tokens, tags)
}

fn corpus(opts: &SyntheticOptions, n: usize, prefix: &str, fillers: &[String], rng: &mut Prng) -> Result<Corpus> {
    let sentences: Vec<_> = (0..n).map(|_| sentence(opts, fillers, rng)).collect();
    let docs = sentences
        .chunks(opts.sentences_per_document)
        .enumerate()
        .map(|(i, chunk)| Document::new(format!("{prefix}{i:03}"), chunk.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(docs)
}

pub fn generate(opts: &SyntheticOptions) -> Result<SyntheticData> {
    if opts.vocab_size < 3
        || opts.embedding_dim == 0
        || opts.train_sentences == 0
        || opts.test_sentences == 0
        || opts.sentences_per_document == 0
        || opts.max_component == 0
        || opts.min_filler > opts.max_filler
    {
        return Err(Error::Config(format!("invalid synthetic corpus options {opts:?}")));
    }
    let mut root = Prng::new(opts.seed);
    let mut emb_rng = root.fork();
    let mut train_rng = root.fork();
    let mut test_rng = root.fork();
    let words = vocabulary(opts.vocab_size);
    let fillers = words[2..].to_vec();
    let embeddings = EmbeddingTable::random(words, opts.embedding_dim, 1.0, &mut emb_rng)?;
    Ok(SyntheticData {
        train: corpus(opts, opts.train_sentences, "train", &fillers, &mut train_rng)?,
        test: corpus(opts, opts.test_sentences, "test", &fillers, &mut test_rng)?,
        embeddings,
    })
}

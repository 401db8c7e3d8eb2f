//! Two-column CoNLL-style reader and writer.
//!
//! ```text
//! # newdoc id=essay01
//! Smoking\tB
//! kills\tI
//! .\tO
//!
//! It\tO
//! ...
//! ```
//!
//! A blank line ends a sentence; `# newdoc` starts a document; any other
//! line starting with `#` is a comment. Sentences before the first header
//! belong to an implicit document.

use std::collections::HashSet;
use std::fmt::Write as _;

use super::{Corpus, Document};
use crate::error::{Error, Result};
use crate::tag::Tag;

const NEWDOC: &str = "# newdoc";

struct PendingDoc {
    id: String,
    header_line: usize,
    sentences: Vec<(Vec<String>, Vec<Tag>)>,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn newdoc_id(line: &str) -> Option<Option<String>> {
    let rest = line.strip_prefix(NEWDOC)?;
    let rest = rest.trim();
    if rest.is_empty() {
        return Some(None);
    }
    let id = rest.strip_prefix("id")?.trim_start().strip_prefix('=')?.trim();
    Some((!id.is_empty()).then(|| id.to_string()))
}

pub fn parse_conll(text: &str) -> Result<Corpus> {
    let mut docs: Vec<Document> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut current: Option<PendingDoc> = None;
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();

    let mut close_doc = |doc: PendingDoc, docs: &mut Vec<Document>| -> Result<()> {
        if doc.sentences.is_empty() {
            return Err(parse_error(doc.header_line, format!("document `{}` has no sentences", doc.id)));
        }
        if !seen_ids.insert(doc.id.clone()) {
            return Err(parse_error(doc.header_line, format!("duplicate document id `{}`", doc.id)));
        }
        docs.push(Document::new(doc.id, doc.sentences)?);
        Ok(())
    };

    let implicit_id = |n: usize| format!("doc{n}");

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let in_sentence = !tokens.is_empty();

        if line.trim().is_empty() {
            if in_sentence {
                let doc = current.get_or_insert_with(|| PendingDoc {
                    id: implicit_id(docs.len()),
                    header_line: line_no,
                    sentences: Vec::new(),
                });
                doc.sentences.push((std::mem::take(&mut tokens), std::mem::take(&mut tags)));
            }
            continue;
        }

        if line.starts_with('#') {
            if in_sentence {
                continue;
            }
            if let Some(id) = newdoc_id(line) {
                if let Some(doc) = current.take() {
                    close_doc(doc, &mut docs)?;
                }
                current = Some(PendingDoc {
                    id: id.unwrap_or_else(|| implicit_id(docs.len())),
                    header_line: line_no,
                    sentences: Vec::new(),
                });
            }
            continue;
        }

        let mut fields = line.split('\t');
        let (Some(token), Some(tag), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_error(
                line_no,
                "token line must be `<token>\\t<tag>` with exactly one tab",
            ));
        };
        if token.is_empty() {
            return Err(parse_error(line_no, "empty token"));
        }
        let tag: Tag = tag.trim().parse().map_err(|e: String| parse_error(line_no, e))?;
        tokens.push(token.to_string());
        tags.push(tag);
    }

    if !tokens.is_empty() {
        let n = docs.len();
        current
            .get_or_insert_with(|| PendingDoc {
                id: implicit_id(n),
                header_line: 1,
                sentences: Vec::new(),
            })
            .sentences
            .push((tokens, tags));
    }
    if let Some(doc) = current.take() {
        close_doc(doc, &mut docs)?;
    }
    Corpus::new(docs)
}

pub fn serialize_conll(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        let _ = writeln!(out, "{NEWDOC} id={}", doc.id);
        for s in &doc.sentences {
            for (tok, tag) in s.tokens().iter().zip(s.tags()) {
                let _ = writeln!(out, "{tok}\t{tag}");
            }
            out.push('\n');
        }
    }
    out
}

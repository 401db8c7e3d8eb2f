//! JSON checkpoints, optionally with parameter data in a binary sidecar.
//!
//! Sidecar layout (all integers little-endian):
//!
//! ```text
//! magic  b"ACBDBIN1"
//! u32    entry count
//! per entry: u32 name length, name bytes (UTF-8), u32 rank, u64 extent per axis
//! then the f64 data of every entry, in header order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::models::{Model, ModelKind};
use crate::rng::Prng;
use crate::tensor::Tensor;
use crate::training::TrainConfig;

pub const FORMAT_VERSION: u32 = 1;
pub const SIDECAR_MAGIC: &[u8; 8] = b"ACBDBIN1";
/// Parameter name under which the frozen word vectors are stored.
pub const WORDS_PARAM: &str = "embedding.words";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub config: TrainConfig,
    /// Epoch the parameters come from; 0 for an untrained model.
    pub epoch: usize,
    /// Best validation score; `None` when no epoch was run.
    pub best_score: Option<f64>,
    pub vocabulary: Vec<String>,
    /// File name (relative to the JSON file) holding the parameter data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<String>,
    pub parameters: BTreeMap<String, Tensor>,
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::ModelMismatch(msg.into())
}

impl Checkpoint {
    pub fn from_model(model: &Model, config: &TrainConfig, epoch: usize, best_score: Option<f64>) -> Self {
        let table = model.net.table();
        let mut parameters: BTreeMap<String, Tensor> = model
            .params
            .iter()
            .map(|(_, p)| (p.name.clone(), p.value.clone()))
            .collect();
        let v = table.words().len();
        if v > 0 {
            let d = table.dim();
            let words = Tensor::new(vec![v, d], table.matrix().data()[..v * d].to_vec())
                .expect("table rows are well formed");
            parameters.insert(WORDS_PARAM.to_string(), words);
        }
        Checkpoint {
            format_version: FORMAT_VERSION,
            model_kind: model.kind(),
            config: config.clone(),
            epoch,
            best_score,
            vocabulary: table.words().to_vec(),
            sidecar: None,
            parameters,
        }
    }

    fn tensor(&self, name: &str) -> Result<&Tensor> {
        let t = self
            .parameters
            .get(name)
            .ok_or_else(|| mismatch(format!("checkpoint has no parameter `{name}`")))?;
        let expected: usize = t.shape().iter().product();
        if expected != t.len() || t.shape().contains(&0) {
            return Err(mismatch(format!(
                "parameter `{name}` has shape {:?} but {} values",
                t.shape(),
                t.len()
            )));
        }
        Ok(t)
    }

    /// Rebuilds the model, checking vocabulary, dimensions and parameter names.
    pub fn to_model(&self) -> Result<Model> {
        if self.format_version != FORMAT_VERSION {
            return Err(mismatch(format!(
                "unsupported checkpoint format_version {}",
                self.format_version
            )));
        }
        if self.model_kind != self.config.model {
            return Err(mismatch(format!(
                "model_kind {} disagrees with config model {}",
                self.model_kind, self.config.model
            )));
        }
        self.config.validate()?;
        let d = self.config.embedding_dim;
        let v = self.vocabulary.len();

        let unk = self.tensor("embedding.unk")?;
        if unk.shape() != [1, d] {
            return Err(mismatch(format!(
                "embedding.unk has shape {:?}, config embedding_dim is {d}",
                unk.shape()
            )));
        }
        let words = if v > 0 {
            let w = self.tensor(WORDS_PARAM)?;
            if w.shape() != [v, d] {
                return Err(mismatch(format!(
                    "{WORDS_PARAM} has shape {:?}, expected [{v}, {d}] from vocabulary and config",
                    w.shape()
                )));
            }
            w.clone()
        } else {
            if self.parameters.contains_key(WORDS_PARAM) {
                return Err(mismatch("word vectors present but vocabulary is empty"));
            }
            Tensor::zeros(&[1, d])
        };
        let table = EmbeddingTable::from_parts(self.vocabulary.clone(), words, unk.data().to_vec())
            .map_err(|e| mismatch(e.to_string()))?;

        let mut model = Model::new(self.config.model_config(), table, &mut Prng::new(0))?;
        let ids: Vec<_> = model.params.iter().map(|(id, p)| (id, p.name.clone())).collect();
        for (id, name) in &ids {
            let stored = self.tensor(name)?;
            let slot = model.params.value_mut(*id);
            if stored.shape() != slot.shape() {
                return Err(mismatch(format!(
                    "parameter `{name}` has shape {:?}, architecture needs {:?}",
                    stored.shape(),
                    slot.shape()
                )));
            }
            *slot = stored.clone();
        }
        let expected = ids.len() + usize::from(v > 0);
        if self.parameters.len() != expected {
            let extra: Vec<&String> = self
                .parameters
                .keys()
                .filter(|k| k.as_str() != WORDS_PARAM && model.params.id(k).is_none())
                .collect();
            return Err(mismatch(format!("unexpected parameters {extra:?}")));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes the checkpoint; with `binary` the parameter data goes to `<file>.bin` next to it.
    pub fn save(&self, path: impl AsRef<Path>, binary: bool) -> Result<()> {
        let path = path.as_ref();
        if !binary {
            let mut plain = self.clone();
            plain.sidecar = None;
            if plain.parameters.is_empty() {
                return Err(Error::arg("checkpoint has no parameter data to write"));
            }
            fs::write(path, plain.to_json()?)?;
            return Ok(());
        }
        let file_name = path
            .file_name()
            .ok_or_else(|| Error::arg(format!("checkpoint path {} has no file name", path.display())))?
            .to_string_lossy()
            .into_owned();
        let sidecar_name = format!("{file_name}.bin");
        fs::write(sidecar_path(path, &sidecar_name), encode_sidecar(&self.parameters))?;
        let head = Checkpoint {
            sidecar: Some(sidecar_name),
            parameters: BTreeMap::new(),
            ..self.clone()
        };
        fs::write(path, head.to_json()?)?;
        Ok(())
    }

    /// Reads a checkpoint and, if it names one, its sidecar.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut ckpt = Self::from_json(&fs::read_to_string(path)?)?;
        if let Some(name) = &ckpt.sidecar {
            if !ckpt.parameters.is_empty() {
                return Err(mismatch("checkpoint has both inline parameters and a sidecar"));
            }
            let bytes = fs::read(sidecar_path(path, name))?;
            ckpt.parameters = decode_sidecar(&bytes)?;
        }
        Ok(ckpt)
    }
}

fn sidecar_path(json: &Path, name: &str) -> PathBuf {
    json.parent().map_or_else(|| PathBuf::from(name), |dir| dir.join(name))
}

pub fn encode_sidecar(params: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SIDECAR_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
    }
    for t in params.values() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| mismatch("sidecar is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_sidecar(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != SIDECAR_MAGIC {
        return Err(mismatch("sidecar has the wrong magic bytes"));
    }
    let count = r.u32()? as usize;
    let mut header = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| mismatch("sidecar parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|e| e as usize))
            .collect::<Result<Vec<_>>>()?;
        header.push((name, shape));
    }
    let mut out = BTreeMap::new();
    for (name, shape) in header {
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| mismatch(format!("sidecar shape of `{name}` overflows")))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| mismatch("sidecar is truncated"))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| mismatch(format!("sidecar entry `{name}`: {e}")))?;
        if out.insert(name.clone(), t).is_some() {
            return Err(mismatch(format!("sidecar repeats parameter `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(mismatch("sidecar has trailing bytes"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabeledSentence;
    use crate::tag::Tag;

    fn sample(kind: ModelKind) -> (Checkpoint, Model) {
        let mut rng = Prng::new(21);
        let words = ["one", "two", "three"].map(String::from).to_vec();
        let table = EmbeddingTable::random(words, 4, 1.0, &mut rng).unwrap();
        let config = TrainConfig {
            hidden: 3,
            attention_hidden: 2,
            embedding_dim: 4,
            ..TrainConfig::for_model(kind)
        };
        let model = Model::new(config.model_config(), table, &mut rng).unwrap();
        (Checkpoint::from_model(&model, &config, 4, Some(0.5)), model)
    }

    fn sentence() -> LabeledSentence {
        let toks = ["two", "Three", "unseen"].map(String::from).to_vec();
        LabeledSentence::new(toks, vec![Tag::B, Tag::I, Tag::O], 0.0).unwrap()
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        for kind in ModelKind::ALL {
            let (ckpt, _) = sample(kind);
            let text = ckpt.to_json().unwrap();
            let again = Checkpoint::from_json(&text).unwrap().to_json().unwrap();
            assert_eq!(text, again);
        }
    }

    #[test]
    fn reloaded_model_predicts_identically() {
        for kind in ModelKind::ALL {
            let (ckpt, model) = sample(kind);
            let back = Checkpoint::from_json(&ckpt.to_json().unwrap()).unwrap().to_model().unwrap();
            assert_eq!(model.predict(&sentence()).unwrap(), back.predict(&sentence()).unwrap());
            assert_eq!(model.loss(&sentence()).unwrap().to_bits(), back.loss(&sentence()).unwrap().to_bits());
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ckpt, _) = sample(ModelKind::Joint);
        let path = dir.path().join("model.json");
        ckpt.save(&path, true).unwrap();
        assert!(dir.path().join("model.json.bin").exists());
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.parameters, ckpt.parameters);
        back.save(dir.path().join("again.json"), false).unwrap();
        let plain = Checkpoint::load(dir.path().join("again.json")).unwrap();
        assert_eq!(plain, ckpt);
    }

    #[test]
    fn file_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (ckpt, _) = sample(ModelKind::BilstmCrf);
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        ckpt.save(&a, false).unwrap();
        Checkpoint::load(&a).unwrap().save(&b, false).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn mismatches_are_reported() {
        let (ckpt, _) = sample(ModelKind::Tagger);

        let mut wrong_dim = ckpt.clone();
        wrong_dim.config.embedding_dim = 5;
        assert!(matches!(wrong_dim.to_model(), Err(Error::ModelMismatch(_))));

        let mut wrong_vocab = ckpt.clone();
        wrong_vocab.vocabulary.push("four".into());
        assert!(matches!(wrong_vocab.to_model(), Err(Error::ModelMismatch(_))));

        let mut missing = ckpt.clone();
        missing.parameters.remove("tagger.w");
        assert!(matches!(missing.to_model(), Err(Error::ModelMismatch(_))));

        let mut extra = ckpt.clone();
        extra.parameters.insert("stray".into(), Tensor::zeros(&[1, 1]));
        assert!(matches!(extra.to_model(), Err(Error::ModelMismatch(_))));

        let mut kind = ckpt;
        kind.model_kind = ModelKind::Joint;
        assert!(matches!(kind.to_model(), Err(Error::ModelMismatch(_))));
    }

    #[test]
    fn corrupt_sidecars_are_rejected() {
        let (ckpt, _) = sample(ModelKind::Classifier);
        let bytes = encode_sidecar(&ckpt.parameters);
        assert_eq!(decode_sidecar(&bytes).unwrap(), ckpt.parameters);
        assert!(decode_sidecar(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_sidecar(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(decode_sidecar(&long).is_err());
    }
}

//! Binary model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MFRW" | version u32 | kind u8 | tag str | vocab_hash u64 |
//! embed_hash_seed u64 | embed_dim u32 | hidden_dim u32 | attn_dim u32 |
//! max_len u32 | vocab (count u32, tokens as str) |
//! params (count u32, each: name str, rows u32, cols u32, f32 data)
//! ```
//!
//! where `str` is a u32 byte length followed by UTF-8 bytes. The vocabulary
//! hash is recomputed on load and must match, so weights can never be paired
//! with the wrong token table.

use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::nn::model::{ModelConfig, RewriterPolicy, ScorerModel};
use crate::nn::params::ParamStore;
use crate::nn::vocab::Vocab;

const MAGIC: &[u8; 4] = b"MFRW";
const VERSION: u32 = 1;
// generous upper bound used only to reject corrupt length fields
const MAX_ELEMENTS: u64 = 64 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid checkpoint: {0}")]
    Format(String),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    WrongKind { expected: String, found: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rewriter,
    Scorer,
}

impl ModelKind {
    fn to_byte(self) -> u8 {
        match self {
            ModelKind::Rewriter => 0,
            ModelKind::Scorer => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self, CheckpointError> {
        match b {
            0 => Ok(ModelKind::Rewriter),
            1 => Ok(ModelKind::Scorer),
            other => Err(CheckpointError::Format(format!(
                "unknown model kind {other}"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            ModelKind::Rewriter => "rewriter",
            ModelKind::Scorer => "scorer",
        }
    }
}

/// Everything needed to reconstruct a model, plus provenance fields that tie
/// it to the run that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    /// Free-form label ("init", "ppo", "rm:d_plus", ...).
    pub tag: String,
    /// Hash seed of the retrieval embedder active during training.
    pub embed_hash_seed: u64,
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_policy(policy: &RewriterPolicy<f32>, tag: &str, embed_hash_seed: u64) -> Self {
        Self {
            kind: ModelKind::Rewriter,
            tag: tag.to_string(),
            embed_hash_seed,
            config: policy.config,
            vocab: policy.vocab.clone(),
            params: policy.params.clone(),
        }
    }

    pub fn from_scorer(scorer: &ScorerModel<f32>, tag: &str, embed_hash_seed: u64) -> Self {
        Self {
            kind: ModelKind::Scorer,
            tag: tag.to_string(),
            embed_hash_seed,
            config: scorer.config,
            vocab: scorer.vocab.clone(),
            params: scorer.params.clone(),
        }
    }

    pub fn into_policy(self) -> Result<RewriterPolicy<f32>, CheckpointError> {
        if self.kind != ModelKind::Rewriter {
            return Err(CheckpointError::WrongKind {
                expected: ModelKind::Rewriter.name().into(),
                found: self.kind.name().into(),
            });
        }
        Ok(RewriterPolicy {
            config: self.config,
            vocab: self.vocab,
            params: self.params,
        })
    }

    pub fn into_scorer(self) -> Result<ScorerModel<f32>, CheckpointError> {
        if self.kind != ModelKind::Scorer {
            return Err(CheckpointError::WrongKind {
                expected: ModelKind::Scorer.name().into(),
                found: self.kind.name().into(),
            });
        }
        Ok(ScorerModel {
            config: self.config,
            vocab: self.vocab,
            params: self.params,
        })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut w = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    write_all(&mut w, checkpoint).map_err(io_err)
}

fn write_all(w: &mut impl Write, cp: &Checkpoint) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&[cp.kind.to_byte()])?;
    write_str(w, &cp.tag)?;
    w.write_all(&cp.vocab.fingerprint().to_le_bytes())?;
    w.write_all(&cp.embed_hash_seed.to_le_bytes())?;
    for dim in [
        cp.config.embed_dim,
        cp.config.hidden_dim,
        cp.config.attn_dim,
        cp.config.max_len,
    ] {
        w.write_all(&(dim as u32).to_le_bytes())?;
    }
    w.write_all(&(cp.vocab.len() as u32).to_le_bytes())?;
    for token in cp.vocab.tokens() {
        write_str(w, token)?;
    }
    let count = cp.params.names().count() as u32;
    w.write_all(&count.to_le_bytes())?;
    for (name, tensor) in cp.params.iter() {
        write_str(w, name)?;
        w.write_all(&(tensor.rows as u32).to_le_bytes())?;
        w.write_all(&(tensor.cols as u32).to_le_bytes())?;
        for v in &tensor.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut r = BufReader::new(fs::File::open(path).map_err(io_err)?);
    read_all(&mut r)
}

fn read_all(r: &mut impl Read) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::Format("bad magic bytes".into()));
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let mut kind = [0u8; 1];
    read_exact(r, &mut kind)?;
    let kind = ModelKind::from_byte(kind[0])?;
    let tag = read_str(r)?;
    let vocab_hash = read_u64(r)?;
    let embed_hash_seed = read_u64(r)?;
    let config = ModelConfig {
        embed_dim: read_u32(r)? as usize,
        hidden_dim: read_u32(r)? as usize,
        attn_dim: read_u32(r)? as usize,
        max_len: read_u32(r)? as usize,
    };
    config
        .validate()
        .map_err(|e| CheckpointError::Format(format!("bad model config: {e}")))?;

    let token_count = read_len(r, "vocab size")?;
    if token_count < 6 {
        return Err(CheckpointError::Format(
            "vocabulary too small for special tokens".into(),
        ));
    }
    let mut tokens = Vec::with_capacity(token_count);
    for _ in 0..token_count {
        tokens.push(read_str(r)?);
    }
    if tokens[0] != "[PAD]" || tokens[1] != "[CLS]" {
        return Err(CheckpointError::Format(
            "vocabulary missing special prefix".into(),
        ));
    }
    let vocab = Vocab::from_tokens(tokens);
    if vocab.fingerprint() != vocab_hash {
        return Err(CheckpointError::Format("vocabulary hash mismatch".into()));
    }

    let param_count = read_len(r, "parameter count")?;
    let mut params = ParamStore::new();
    for _ in 0..param_count {
        let name = read_str(r)?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if (rows as u64).saturating_mul(cols as u64) > MAX_ELEMENTS {
            return Err(CheckpointError::Format(format!(
                "parameter {name} implausibly large ({rows}x{cols})"
            )));
        }
        let mut data = vec![0f32; rows * cols];
        for v in &mut data {
            let mut buf = [0u8; 4];
            read_exact(r, &mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        params.insert_data(&name, rows, cols, data);
    }

    Ok(Checkpoint {
        kind,
        tag,
        embed_hash_seed,
        config,
        vocab,
        params,
    })
}

fn write_str(w: &mut impl Write, s: &str) -> io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Format("unexpected end of file".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut buf = [0u8; 4];
    read_exact(r, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64, CheckpointError> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_len(r: &mut impl Read, what: &str) -> Result<usize, CheckpointError> {
    let len = read_u32(r)? as u64;
    if len > MAX_ELEMENTS {
        return Err(CheckpointError::Format(format!("{what} implausibly large")));
    }
    Ok(len as usize)
}

fn read_str(r: &mut impl Read) -> Result<String, CheckpointError> {
    let len = read_len(r, "string length")?;
    let mut buf = vec![0u8; len];
    read_exact(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| CheckpointError::Format("invalid utf-8".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stage_rng;

    fn sample_policy() -> RewriterPolicy<f32> {
        let vocab = Vocab::build(["what is the height of the old harbor"]);
        let config = ModelConfig {
            embed_dim: 4,
            hidden_dim: 5,
            attn_dim: 3,
            max_len: 6,
        };
        RewriterPolicy::new(config, vocab, &mut stage_rng(8, "test", 0))
    }

    #[test]
    fn policy_round_trip_is_exact() {
        let policy = sample_policy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.mfrw");
        save_checkpoint(&path, &Checkpoint::from_policy(&policy, "init", 99)).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.tag, "init");
        assert_eq!(loaded.embed_hash_seed, 99);
        let restored = loaded.into_policy().unwrap();
        assert_eq!(restored.params, policy.params);
        assert_eq!(restored.vocab, policy.vocab);
        assert_eq!(restored.config, policy.config);
    }

    #[test]
    fn scorer_round_trip_and_kind_check() {
        let policy = sample_policy();
        let scorer = ScorerModel::from_encoder(&policy);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rm.mfrw");
        save_checkpoint(&path, &Checkpoint::from_scorer(&scorer, "rm:d_plus", 7)).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert!(matches!(
            loaded.clone().into_policy(),
            Err(CheckpointError::WrongKind { .. })
        ));
        let restored = loaded.into_scorer().unwrap();
        assert_eq!(restored.params, scorer.params);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.mfrw");
        fs::write(&path, b"NOPE rest of file").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(msg)) if msg.contains("magic")
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let policy = sample_policy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.mfrw");
        save_checkpoint(&path, &Checkpoint::from_policy(&policy, "init", 0)).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(msg)) if msg.contains("end of file")
        ));
    }

    #[test]
    fn tampered_vocabulary_fails_the_hash_check() {
        let policy = sample_policy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.mfrw");
        save_checkpoint(&path, &Checkpoint::from_policy(&policy, "init", 0)).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let needle = b"harbor";
        let pos = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("token present in file");
        bytes[pos] = b'x';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::Format(msg)) if msg.contains("hash mismatch")
        ));
    }
}

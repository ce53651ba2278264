//! Checkpoint container: an 8-byte magic, a JSON header (config, vocabulary
//! manifest, tensor directory), the raw little-endian f64 blob, and a
//! SHA-256 trailer over everything before it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use super::{ModelConfig, ModelParams, ParamLayout, SurrogateError};
use crate::hash::sha256_hex;
use crate::serialization::VocabManifest;

const MAGIC: &[u8; 8] = b"OLTCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct TensorDirEntry {
    name: String,
    shape: Vec<usize>,
    offset_bytes: u64,
    dtype: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    vocab_manifest: VocabManifest,
    vocab_sha256: String,
    tensors: Vec<TensorDirEntry>,
    blob_len_bytes: u64,
}

/// Serializes params + config + vocabulary manifest to `path`.
pub fn save_checkpoint(
    params: &ModelParams,
    cfg: &ModelConfig,
    vocab: &VocabManifest,
    path: impl AsRef<Path>,
) -> Result<(), SurrogateError> {
    let path = path.as_ref();
    let tensors = params
        .layout()
        .specs()
        .iter()
        .map(|s| TensorDirEntry {
            name: s.name.clone(),
            shape: s.shape.clone(),
            offset_bytes: (s.offset * 8) as u64,
            dtype: "f64".into(),
        })
        .collect();
    let header = Header {
        format_version: 1,
        config: cfg.clone(),
        vocab_manifest: vocab.clone(),
        vocab_sha256: sha256_hex(&vocab.canonical_bytes()),
        tensors,
        blob_len_bytes: (params.data().len() * 8) as u64,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| SurrogateError::CorruptCheckpoint(e.to_string()))?;

    let mut bytes = Vec::with_capacity(8 + 8 + header_json.len() + params.data().len() * 8 + 32);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header_json);
    for &w in params.data() {
        bytes.extend_from_slice(&w.to_le_bytes());
    }
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    bytes.extend_from_slice(&digest);

    fs::write(path, bytes).map_err(|source| SurrogateError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// A checkpoint read back from disk, checksum verified.
#[derive(Debug)]
pub struct LoadedCheckpoint {
    pub params: ModelParams,
    pub config: ModelConfig,
    pub vocab_manifest: VocabManifest,
}

impl LoadedCheckpoint {
    /// Byte-compares the stored vocabulary manifest against an expected one.
    pub fn require_vocab(&self, expected: &VocabManifest) -> Result<(), SurrogateError> {
        if self.vocab_manifest.canonical_bytes() != expected.canonical_bytes() {
            return Err(SurrogateError::ManifestMismatch(
                "checkpoint vocabulary differs from the expected manifest".into(),
            ));
        }
        Ok(())
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<LoadedCheckpoint, SurrogateError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| SurrogateError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let corrupt = |m: &str| SurrogateError::CorruptCheckpoint(m.to_string());

    if bytes.len() < 8 + 8 + 32 || &bytes[..8] != MAGIC {
        return Err(corrupt("missing or truncated magic"));
    }
    let body_len = bytes.len() - 32;
    let (body, trailer) = bytes.split_at(body_len);
    let mut hasher = Sha256::new();
    hasher.update(body);
    if hasher.finalize().as_slice() != trailer {
        return Err(corrupt("checksum mismatch"));
    }

    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if 16 + header_len > body_len {
        return Err(corrupt("header extends past file"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])
        .map_err(|e| corrupt(&format!("bad header json: {e}")))?;
    if header.format_version != 1 {
        return Err(corrupt(&format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    if sha256_hex(&header.vocab_manifest.canonical_bytes()) != header.vocab_sha256 {
        return Err(corrupt("vocabulary manifest hash mismatch"));
    }
    header
        .config
        .validate()
        .map_err(|e| corrupt(&format!("invalid config: {e}")))?;

    let blob = &bytes[16 + header_len..body_len];
    if blob.len() as u64 != header.blob_len_bytes {
        return Err(corrupt("blob length mismatch"));
    }
    let layout = ParamLayout::for_config(&header.config);
    if blob.len() != layout.total_len() * 8 {
        return Err(corrupt("blob does not match config shapes"));
    }
    // verify the stored directory against the layout derived from config
    for (stored, derived) in header.tensors.iter().zip(layout.specs()) {
        if stored.name != derived.name
            || stored.shape != derived.shape
            || stored.offset_bytes != (derived.offset * 8) as u64
            || stored.dtype != "f64"
        {
            return Err(corrupt(&format!(
                "tensor directory mismatch at '{}'",
                stored.name
            )));
        }
    }

    let mut data = Vec::with_capacity(layout.total_len());
    for chunk in blob.chunks_exact(8) {
        data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let params = ModelParams::from_flat(&header.config, data)
        .ok_or_else(|| corrupt("parameter vector length mismatch"))?;
    Ok(LoadedCheckpoint {
        params,
        config: header.config,
        vocab_manifest: header.vocab_manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::init_params;
    use crate::Vocabulary;

    fn toy_manifest() -> VocabManifest {
        Vocabulary::new(
            vec!["a".into(), "b".into(), "c".into()],
            (1..=10).map(|i| 10.0 * i as f64).collect(),
            4,
        )
        .manifest()
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.olt");
        save_checkpoint(&params, &cfg, &toy_manifest(), &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.params.data(), params.data());
        assert_eq!(loaded.config, cfg);
        loaded.require_vocab(&toy_manifest()).unwrap();
    }

    #[test]
    fn vocab_mismatch_detected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.olt");
        save_checkpoint(&params, &cfg, &toy_manifest(), &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        let other = Vocabulary::new(
            vec!["x".into(), "y".into(), "z".into()],
            (1..=10).map(|i| 10.0 * i as f64).collect(),
            4,
        )
        .manifest();
        assert!(matches!(
            loaded.require_vocab(&other),
            Err(SurrogateError::ManifestMismatch(_))
        ));
    }

    #[test]
    fn truncation_detected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.olt");
        save_checkpoint(&params, &cfg, &toy_manifest(), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 100]).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(SurrogateError::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn bitflip_detected() {
        let cfg = ModelConfig::tiny();
        let params = init_params(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.olt");
        save_checkpoint(&params, &cfg, &toy_manifest(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(SurrogateError::CorruptCheckpoint(_))
        ));
    }
}

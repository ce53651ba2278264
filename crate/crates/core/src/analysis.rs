//! File exports behind the interpretability workflow: labeled embedding
//! vectors, attention maps, and field-distribution grids, all as CSV for
//! external plotting (dimensionality reduction such as t-SNE is left to
//! downstream tools).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use thiserror::Error;

use crate::materials::MaterialDb;
use crate::serialization::{tokenize, vocab_label, TokenError, VocabManifest};
use crate::surrogate::{forward, load_checkpoint, SurrogateError};
use crate::tmm::{field_distribution, AmbientConfig, Structure, TmmError, WavelengthGrid};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("bad index: {0}")]
    BadIndex(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Surrogate(#[from] SurrogateError),

    #[error(transparent)]
    Tmm(#[from] TmmError),

    #[error(transparent)]
    Token(#[from] TokenError),
}

fn write_file(path: &Path, text: &str) -> Result<(), AnalysisError> {
    fs::write(path, text).map_err(|source| AnalysisError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// One CSV row per vocabulary token: id, label, thickness, then the raw
/// embedding vector. Floats print in shortest round-trip form, so reparsing
/// reproduces the stored bits. Returns the data row count.
pub fn export_embeddings(
    checkpoint_path: impl AsRef<Path>,
    expected_vocab: Option<&VocabManifest>,
    out_csv: impl AsRef<Path>,
) -> Result<usize, AnalysisError> {
    let ckpt = load_checkpoint(&checkpoint_path)?;
    if let Some(expected) = expected_vocab {
        ckpt.require_vocab(expected)?;
    }
    let vocab = ckpt.vocab_manifest.to_vocabulary();
    let embedding = ckpt.params.view2("token_embedding");
    let hidden = embedding.ncols();

    let mut text = String::new();
    text.push_str("token_id,label,thickness_nm");
    for c in 0..hidden {
        write!(text, ",e{c}").unwrap();
    }
    text.push('\n');
    for id in 0..vocab.total_size() as u32 {
        let label = vocab_label(&vocab, id)?;
        match label.thickness_nm {
            Some(t) => write!(text, "{id},{},{t}", label.name).unwrap(),
            None => write!(text, "{id},{},", label.name).unwrap(),
        }
        for c in 0..hidden {
            write!(text, ",{}", embedding[[id as usize, c]]).unwrap();
        }
        text.push('\n');
    }
    write_file(out_csv.as_ref(), &text)?;
    Ok(vocab.total_size())
}

/// Attention weights of one (block, head) for one structure, with axis
/// labels `BoS`, `material:thickness`, `EoS`.
pub fn export_attention(
    checkpoint_path: impl AsRef<Path>,
    structure: &Structure,
    block: usize,
    head: usize,
    out_csv: impl AsRef<Path>,
) -> Result<(), AnalysisError> {
    let ckpt = load_checkpoint(&checkpoint_path)?;
    if block >= ckpt.config.num_blocks || head >= ckpt.config.num_heads {
        return Err(AnalysisError::BadIndex(format!(
            "block {block} / head {head} outside {} blocks × {} heads",
            ckpt.config.num_blocks, ckpt.config.num_heads
        )));
    }
    let vocab = ckpt.vocab_manifest.to_vocabulary();
    let seq = tokenize(&vocab, structure)?;
    let labels: Vec<String> = seq
        .ids
        .iter()
        .map(|&id| {
            let l = vocab_label(&vocab, id)?;
            Ok(match l.thickness_nm {
                Some(t) => format!("{}:{t}", l.name),
                None => l.name,
            })
        })
        .collect::<Result<_, TokenError>>()?;

    let out = forward(&ckpt.params, &ckpt.config, &[seq], true)?;
    let records = out.attention.expect("capture requested");
    let record = records
        .into_iter()
        .find(|r| r.block == block && r.head == head)
        .expect("record exists for validated indices");

    let mut text = String::new();
    text.push_str("query\\key");
    for l in &labels {
        write!(text, ",{l}").unwrap();
    }
    text.push('\n');
    for (i, row) in record.weights.rows().into_iter().enumerate() {
        write!(text, "{}", labels[i]).unwrap();
        for w in row.iter() {
            write!(text, ",{w}").unwrap();
        }
        text.push('\n');
    }
    write_file(out_csv.as_ref(), &text)
}

/// |E(z, λ)| grid: header row of depth positions, one row per wavelength.
pub fn export_field(
    db: &MaterialDb,
    structure: &Structure,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    z_step_nm: f64,
    out_csv: impl AsRef<Path>,
) -> Result<(), AnalysisError> {
    let map = field_distribution(db, structure, grid, amb, z_step_nm)?;
    let mut text = String::new();
    text.push_str("lambda_nm");
    for z in &map.z_nm {
        write!(text, ",{z}").unwrap();
    }
    text.push('\n');
    for (wl, row) in map.grid.values().iter().zip(&map.magnitude) {
        write!(text, "{wl}").unwrap();
        for m in row {
            write!(text, ",{m}").unwrap();
        }
        text.push('\n');
    }
    write_file(out_csv.as_ref(), &text)
}

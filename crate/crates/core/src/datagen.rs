//! Labeled dataset generation: seeded random structures, transfer-matrix
//! labels, JSON Lines on disk with a checksummed manifest sidecar.
//!
//! Sampling is a single sequential RNG stream for reproducibility; labeling
//! runs through the parallel batch solver. Two runs with the same
//! (seed, config, database) produce byte-identical files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::hash::sha256_hex;
use crate::materials::MaterialDb;
use crate::serialization::{detokenize, tokenize, TokenError, TokenSeq, VocabManifest, Vocabulary};
use crate::tmm::{
    simulate, simulate_batch, AmbientConfig, Layer, Structure, TmmError, WavelengthGrid,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: bad record: {reason}")]
    BadRecord {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("invalid sampler config: {0}")]
    BadConfig(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("data file checksum does not match manifest")]
    ChecksumMismatch,

    #[error("record {record}: stored label differs from re-simulation by {max_err:e}")]
    LabelMismatch { record: usize, max_err: f64 },

    #[error("record {record}: tokens do not round-trip to the stored structure")]
    TokenMismatch { record: usize },

    #[error(transparent)]
    Tmm(#[from] TmmError),

    #[error(transparent)]
    Token(#[from] TokenError),
}

/// Random structure sampling policy. Layer counts are drawn from
/// `layer_count_weights`; materials and thickness bins uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub max_layers: usize,
    /// Weight of drawing N layers sits at index N−1.
    pub layer_count_weights: Vec<f64>,
    pub seed: u64,
    pub count: usize,
    /// Resample exact duplicate token sequences. Off by default: the
    /// structure space is big enough that collisions do not matter.
    #[serde(default)]
    pub dedup: bool,
}

impl SamplerConfig {
    /// Weights proportional to the layer count (P(N) ∝ N).
    pub fn linear(max_layers: usize, seed: u64, count: usize) -> Self {
        Self {
            max_layers,
            layer_count_weights: (1..=max_layers).map(|n| n as f64).collect(),
            seed,
            count,
            dedup: false,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.max_layers == 0 {
            return Err(DataError::BadConfig("max_layers must be >= 1".into()));
        }
        if self.layer_count_weights.len() != self.max_layers {
            return Err(DataError::BadConfig(format!(
                "need {} layer-count weights, got {}",
                self.max_layers,
                self.layer_count_weights.len()
            )));
        }
        if self
            .layer_count_weights
            .iter()
            .any(|&w| w < 0.0 || !w.is_finite())
        {
            return Err(DataError::BadConfig(
                "weights must be finite and >= 0".into(),
            ));
        }
        if self.layer_count_weights.iter().sum::<f64>() <= 0.0 {
            return Err(DataError::BadConfig("weights must not all be zero".into()));
        }
        Ok(())
    }
}

/// Draws one structure: layer count from the weights, then uniform material
/// ids and uniform thickness bins.
pub fn sample_structure(
    cfg: &SamplerConfig,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Structure {
    let total: f64 = cfg.layer_count_weights.iter().sum();
    let mut pick = rng.random_range(0.0..total);
    let mut n_layers = cfg.max_layers;
    for (i, &w) in cfg.layer_count_weights.iter().enumerate() {
        if pick < w {
            n_layers = i + 1;
            break;
        }
        pick -= w;
    }
    let layers = (0..n_layers)
        .map(|_| Layer {
            material: rng.random_range(0..vocab.num_materials()),
            thickness_nm: vocab.thickness_bins_nm()[rng.random_range(0..vocab.bin_count())],
        })
        .collect();
    Structure { layers }
}

/// One labeled pair on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub tokens: Vec<u32>,
    pub materials: Vec<String>,
    pub thicknesses_nm: Vec<f64>,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
}

impl DatasetRecord {
    /// Flattened regression target `[R…, T…]`.
    pub fn target(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.r.len() + self.t.len());
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.t);
        v
    }
}

/// Sidecar describing one data file; everything needed to reproduce or
/// verify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub record_count: usize,
    pub config_sha256: String,
    pub sampler: SamplerConfig,
    pub grid: WavelengthGrid,
    pub ambient: AmbientConfig,
    pub vocab: VocabManifest,
    pub data_sha256: String,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    data_path.with_extension("manifest.json")
}

fn config_hash(
    sampler: &SamplerConfig,
    grid: &WavelengthGrid,
    ambient: &AmbientConfig,
    vocab: &VocabManifest,
) -> String {
    #[derive(Serialize)]
    struct ConfigDoc<'a> {
        sampler: &'a SamplerConfig,
        grid: &'a WavelengthGrid,
        ambient: &'a AmbientConfig,
        vocab: &'a VocabManifest,
    }
    sha256_hex(
        &serde_json::to_vec(&ConfigDoc {
            sampler,
            grid,
            ambient,
            vocab,
        })
        .expect("config serialization cannot fail"),
    )
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Samples `cfg.count` structures, labels them with the transfer-matrix
/// solver, and writes JSONL plus a manifest sidecar. Returns the manifest.
pub fn generate_dataset(
    db: &MaterialDb,
    cfg: &SamplerConfig,
    vocab: &Vocabulary,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    out_path: impl AsRef<Path>,
) -> Result<DatasetManifest, DataError> {
    let writers = generate_inner(db, cfg, vocab, grid, amb, &[(out_path.as_ref(), None)])?;
    Ok(writers.into_iter().next().unwrap())
}

/// Like [`generate_dataset`] but splits records into two disjoint files by
/// a per-index hash: record i lands in the validation file when
/// `hash(seed, i) < val_fraction`.
#[allow(clippy::too_many_arguments)]
pub fn generate_split(
    db: &MaterialDb,
    cfg: &SamplerConfig,
    vocab: &Vocabulary,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    train_path: impl AsRef<Path>,
    val_path: impl AsRef<Path>,
    val_fraction: f64,
) -> Result<(DatasetManifest, DatasetManifest), DataError> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(DataError::BadConfig(format!(
            "val_fraction must be in [0, 1), got {val_fraction}"
        )));
    }
    let mut out = generate_inner(
        db,
        cfg,
        vocab,
        grid,
        amb,
        &[
            (train_path.as_ref(), Some((val_fraction, false))),
            (val_path.as_ref(), Some((val_fraction, true))),
        ],
    )?;
    let val = out.pop().unwrap();
    let train = out.pop().unwrap();
    Ok((train, val))
}

/// True when record `index` belongs to the validation split.
fn in_val_split(seed: u64, index: usize, val_fraction: f64) -> bool {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let x = u64::from_le_bytes(digest[..8].try_into().unwrap());
    (x as f64) / (u64::MAX as f64) < val_fraction
}

fn generate_inner(
    db: &MaterialDb,
    cfg: &SamplerConfig,
    vocab: &Vocabulary,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    sinks: &[(&Path, Option<(f64, bool)>)],
) -> Result<Vec<DatasetManifest>, DataError> {
    cfg.validate()?;
    if vocab.material_names() != db.names().as_slice() {
        return Err(DataError::ManifestMismatch(
            "vocabulary materials differ from the database".into(),
        ));
    }
    if cfg.max_layers > vocab.max_layers() {
        return Err(DataError::BadConfig(format!(
            "sampler max_layers {} exceeds vocabulary max_layers {}",
            cfg.max_layers,
            vocab.max_layers()
        )));
    }

    // sequential sampling pass
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut structures = Vec::with_capacity(cfg.count);
    let mut seen = HashSet::new();
    while structures.len() < cfg.count {
        let s = sample_structure(cfg, vocab, &mut rng);
        if cfg.dedup {
            let key = tokenize(vocab, &s)?.ids;
            if !seen.insert(key) {
                continue;
            }
        }
        structures.push(s);
    }

    let mut files: Vec<HashingWriter<BufWriter<fs::File>>> = sinks
        .iter()
        .map(|(path, _)| {
            Ok(HashingWriter {
                inner: BufWriter::new(fs::File::create(path).map_err(io_err(path))?),
                hasher: Sha256::new(),
            })
        })
        .collect::<Result<_, DataError>>()?;
    let mut counts = vec![0usize; sinks.len()];

    // parallel labeling in bounded chunks, single-writer output
    const CHUNK: usize = 1024;
    for (chunk_idx, chunk) in structures.chunks(CHUNK).enumerate() {
        let spectra = simulate_batch(db, chunk, grid, amb).map_err(|e| match e {
            TmmError::Batch { index, source } => TmmError::Batch {
                index: chunk_idx * CHUNK + index,
                source,
            },
            other => other,
        })?;
        for (offset, (s, sp)) in chunk.iter().zip(&spectra).enumerate() {
            let index = chunk_idx * CHUNK + offset;
            let record = DatasetRecord {
                tokens: tokenize(vocab, s)?.ids,
                materials: s
                    .layers
                    .iter()
                    .map(|l| vocab.material_names()[l.material].clone())
                    .collect(),
                thicknesses_nm: s.layers.iter().map(|l| l.thickness_nm).collect(),
                r: sp.r.clone(),
                t: sp.t.clone(),
            };
            let line = serde_json::to_vec(&record).expect("record serialization cannot fail");
            for (sink_idx, (path, split)) in sinks.iter().enumerate() {
                let selected = match split {
                    None => true,
                    Some((frac, val_side)) => in_val_split(cfg.seed, index, *frac) == *val_side,
                };
                if selected {
                    let w = &mut files[sink_idx];
                    w.write_all(&line).map_err(io_err(path))?;
                    w.write_all(b"\n").map_err(io_err(path))?;
                    counts[sink_idx] += 1;
                }
            }
        }
    }

    let mut manifests = Vec::with_capacity(sinks.len());
    let vocab_manifest = vocab.manifest();
    for (sink_idx, (path, _)) in sinks.iter().enumerate() {
        let mut w = files.remove(0);
        w.flush().map_err(io_err(path))?;
        let digest = w.hasher.finalize();
        let mut data_sha256 = String::with_capacity(64);
        for b in digest {
            data_sha256.push_str(&format!("{b:02x}"));
        }
        let manifest = DatasetManifest {
            seed: cfg.seed,
            record_count: counts[sink_idx],
            config_sha256: config_hash(cfg, grid, amb, &vocab_manifest),
            sampler: cfg.clone(),
            grid: *grid,
            ambient: *amb,
            vocab: vocab_manifest.clone(),
            data_sha256,
        };
        let mpath = manifest_path(path);
        fs::write(
            &mpath,
            serde_json::to_vec_pretty(&manifest).expect("manifest serialization cannot fail"),
        )
        .map_err(io_err(&mpath))?;
        manifests.push(manifest);
    }
    Ok(manifests)
}

pub fn read_manifest(data_path: impl AsRef<Path>) -> Result<DatasetManifest, DataError> {
    let mpath = manifest_path(data_path.as_ref());
    let bytes = fs::read(&mpath).map_err(io_err(&mpath))?;
    serde_json::from_slice(&bytes).map_err(|e| DataError::BadRecord {
        path: mpath.display().to_string(),
        line: 0,
        reason: e.to_string(),
    })
}

/// Loads every record of a JSONL data file.
pub fn load_dataset(data_path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>, DataError> {
    let path = data_path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| DataError::BadRecord {
                path: path.display().to_string(),
                line: lineno + 1,
                reason: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

/// Outcome of a dataset audit.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub record_count: usize,
    pub records_checked: usize,
    pub max_label_error: f64,
    pub checksum_ok: bool,
}

/// Verifies a generated dataset: manifest checksum, record count, token
/// round-trips, and re-simulated labels on a deterministic sample.
pub fn validate_dataset(
    db: &MaterialDb,
    data_path: impl AsRef<Path>,
    sample_fraction: f64,
    tolerance: f64,
) -> Result<ValidationReport, DataError> {
    let path = data_path.as_ref();
    let manifest = read_manifest(path)?;
    let bytes = fs::read(path).map_err(io_err(path))?;
    if sha256_hex(&bytes) != manifest.data_sha256 {
        return Err(DataError::ChecksumMismatch);
    }
    let vocab = manifest.vocab.to_vocabulary();
    if vocab.material_names() != db.names().as_slice() {
        return Err(DataError::ManifestMismatch(
            "dataset vocabulary materials differ from the database".into(),
        ));
    }
    let records = load_dataset(path)?;
    if records.len() != manifest.record_count {
        return Err(DataError::ManifestMismatch(format!(
            "manifest promises {} records, file holds {}",
            manifest.record_count,
            records.len()
        )));
    }

    // deterministic sample of indices
    let n_check = ((records.len() as f64 * sample_fraction).ceil() as usize)
        .clamp(usize::from(!records.is_empty()), records.len());
    let mut rng = ChaCha8Rng::seed_from_u64(manifest.seed ^ 0x5eed_da7a);
    let mut indices: Vec<usize> = (0..records.len()).collect();
    for i in (1..indices.len()).rev() {
        indices.swap(i, rng.random_range(0..=i));
    }
    indices.truncate(n_check);

    let mut max_err = 0.0f64;
    for &idx in &indices {
        let rec = &records[idx];
        let seq = TokenSeq {
            ids: rec.tokens.clone(),
        };
        let structure = detokenize(&vocab, &seq)?;
        let names: Vec<String> = structure
            .layers
            .iter()
            .map(|l| vocab.material_names()[l.material].clone())
            .collect();
        let thicknesses: Vec<f64> = structure.layers.iter().map(|l| l.thickness_nm).collect();
        if names != rec.materials || thicknesses != rec.thicknesses_nm {
            return Err(DataError::TokenMismatch { record: idx });
        }
        let sp = simulate(db, &structure, &manifest.grid, &manifest.ambient)?;
        let err =
            sp.r.iter()
                .zip(&rec.r)
                .chain(sp.t.iter().zip(&rec.t))
                .map(|(&a, &b)| (a - b).abs())
                .fold(0.0f64, f64::max);
        max_err = max_err.max(err);
        if err > tolerance {
            return Err(DataError::LabelMismatch {
                record: idx,
                max_err: err,
            });
        }
    }
    Ok(ValidationReport {
        record_count: records.len(),
        records_checked: n_check,
        max_label_error: max_err,
        checksum_ok: true,
    })
}

//! Accuracy evaluation against the physical solver — global, and per
//! structure family — plus the single-vs-batched inference benchmark.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

use crate::datagen::{load_dataset, read_manifest, DataError};
use crate::materials::MaterialDb;
use crate::serialization::{tokenize, TokenError, TokenSeq};
use crate::surrogate::{forward, load_checkpoint, ModelConfig, ModelParams, SurrogateError};
use crate::tmm::{
    simulate, simulate_batch, AmbientConfig, Layer, Structure, TmmError, WavelengthGrid,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("invalid evaluation config: {0}")]
    ConfigError(String),

    #[error(transparent)]
    Surrogate(#[from] SurrogateError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Tmm(#[from] TmmError),

    #[error(transparent)]
    Token(#[from] TokenError),
}

/// Forward in bounded chunks; squared error against targets with
/// predictions clamped to the physical range [0, 1].
pub(crate) fn mse_against_targets(
    params: &ModelParams,
    cfg: &ModelConfig,
    seqs: &[TokenSeq],
    targets: &Array2<f64>,
    chunk_size: usize,
) -> Result<f64, SurrogateError> {
    debug_assert_eq!(seqs.len(), targets.nrows());
    if seqs.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (chunk_idx, chunk) in seqs.chunks(chunk_size.max(1)).enumerate() {
        let out = forward(params, cfg, chunk, false)?;
        for (row_idx, row) in out.predictions.rows().into_iter().enumerate() {
            let target_row = targets.row(chunk_idx * chunk_size.max(1) + row_idx);
            for (p, t) in row.iter().zip(target_row.iter()) {
                let clamped = p.clamp(0.0, 1.0);
                sum += (clamped - t) * (clamped - t);
                count += 1;
            }
        }
    }
    Ok(sum / count as f64)
}

/// Mean squared error of a constant predictor that always answers the mean
/// of `train_targets`; the floor any learned model must beat.
pub fn mean_predictor_mse(train_targets: &Array2<f64>, eval_targets: &Array2<f64>) -> f64 {
    let dims = train_targets.ncols();
    let mut mean = vec![0.0; dims];
    for row in train_targets.rows() {
        for (m, &v) in mean.iter_mut().zip(row.iter()) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= train_targets.nrows() as f64;
    }
    let mut sum = 0.0;
    for row in eval_targets.rows() {
        for (m, &v) in mean.iter().zip(row.iter()) {
            sum += (v - m) * (v - m);
        }
    }
    sum / (eval_targets.nrows() * dims) as f64
}

/// Loads a labeled dataset into model inputs and a target matrix.
pub fn dataset_tensors(
    data_path: impl AsRef<Path>,
) -> Result<(Vec<TokenSeq>, Array2<f64>), EvalError> {
    let records = load_dataset(&data_path)?;
    let dim = records.first().map(|r| r.r.len() + r.t.len()).unwrap_or(0);
    let mut targets = Array2::zeros((records.len(), dim));
    let mut seqs = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        for (j, v) in rec.target().into_iter().enumerate() {
            targets[[i, j]] = v;
        }
        seqs.push(TokenSeq {
            ids: rec.tokens.clone(),
        });
    }
    Ok((seqs, targets))
}

/// Global clamped MSE of a checkpoint over a labeled dataset. The dataset's
/// vocabulary manifest must byte-match the checkpoint's.
pub fn eval_mse(
    checkpoint_path: impl AsRef<Path>,
    dataset_path: impl AsRef<Path>,
) -> Result<f64, EvalError> {
    let ckpt = load_checkpoint(&checkpoint_path)?;
    let manifest = read_manifest(&dataset_path)?;
    ckpt.require_vocab(&manifest.vocab)?;
    let (seqs, targets) = dataset_tensors(&dataset_path)?;
    if targets.nrows() > 0 && targets.ncols() != ckpt.config.output_dim {
        return Err(EvalError::ManifestMismatch(format!(
            "dataset spectra have {} dims, model outputs {}",
            targets.ncols(),
            ckpt.config.output_dim
        )));
    }
    Ok(mse_against_targets(
        &ckpt.params,
        &ckpt.config,
        &seqs,
        &targets,
        256,
    )?)
}

/// A structure family: fixed material sequence, thicknesses free within
/// per-layer ranges (inclusive, restricted to the vocabulary bin grid).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub materials: Vec<String>,
    pub thickness_ranges_nm: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyResult {
    pub name: String,
    pub layers: usize,
    pub mse: f64,
}

/// Per-family evaluation: samples `per_family_count` structures per family
/// (uniform over the bin grid within each range), labels via the solver,
/// and reports the averaged clamped MSE.
#[allow(clippy::too_many_arguments)]
pub fn eval_families(
    checkpoint_path: impl AsRef<Path>,
    db: &MaterialDb,
    families: &[FamilySpec],
    per_family_count: usize,
    seed: u64,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> Result<Vec<FamilyResult>, EvalError> {
    if per_family_count == 0 {
        return Err(EvalError::ConfigError(
            "per_family_count must be >= 1".into(),
        ));
    }
    let ckpt = load_checkpoint(&checkpoint_path)?;
    let vocab = ckpt.vocab_manifest.to_vocabulary();
    if vocab.material_names() != db.names().as_slice() {
        return Err(EvalError::ManifestMismatch(
            "checkpoint vocabulary materials differ from the database".into(),
        ));
    }
    if grid_output_dim(grid) != ckpt.config.output_dim {
        return Err(EvalError::ManifestMismatch(format!(
            "grid yields {} output dims, model expects {}",
            grid_output_dim(grid),
            ckpt.config.output_dim
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::with_capacity(families.len());
    for family in families {
        if family.materials.is_empty() || family.materials.len() != family.thickness_ranges_nm.len()
        {
            return Err(EvalError::ConfigError(format!(
                "family '{}': materials and thickness ranges must align",
                family.name
            )));
        }
        if family.materials.len() > vocab.max_layers() {
            return Err(EvalError::ConfigError(format!(
                "family '{}' has {} layers, vocabulary allows {}",
                family.name,
                family.materials.len(),
                vocab.max_layers()
            )));
        }
        let material_ids: Vec<usize> = family
            .materials
            .iter()
            .map(|name| {
                db.id_of(name).ok_or_else(|| {
                    EvalError::ConfigError(format!(
                        "family '{}': unknown material '{name}'",
                        family.name
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        let per_layer_bins: Vec<Vec<f64>> = family
            .thickness_ranges_nm
            .iter()
            .enumerate()
            .map(|(i, &(lo, hi))| {
                let bins: Vec<f64> = vocab
                    .thickness_bins_nm()
                    .iter()
                    .copied()
                    .filter(|&b| b >= lo && b <= hi)
                    .collect();
                if bins.is_empty() {
                    Err(EvalError::ConfigError(format!(
                        "family '{}': no thickness bins inside [{lo}, {hi}] for layer {i}",
                        family.name
                    )))
                } else {
                    Ok(bins)
                }
            })
            .collect::<Result<_, _>>()?;

        let structures: Vec<Structure> = (0..per_family_count)
            .map(|_| Structure {
                layers: material_ids
                    .iter()
                    .zip(&per_layer_bins)
                    .map(|(&material, bins)| Layer {
                        material,
                        thickness_nm: bins[rng.random_range(0..bins.len())],
                    })
                    .collect(),
            })
            .collect();
        let spectra = simulate_batch(db, &structures, grid, amb)?;
        let mut targets = Array2::zeros((structures.len(), ckpt.config.output_dim));
        let mut seqs = Vec::with_capacity(structures.len());
        for (i, (s, sp)) in structures.iter().zip(&spectra).enumerate() {
            for (j, v) in sp.flattened().into_iter().enumerate() {
                targets[[i, j]] = v;
            }
            seqs.push(tokenize(&vocab, s)?);
        }
        let mse = mse_against_targets(&ckpt.params, &ckpt.config, &seqs, &targets, 256)?;
        results.push(FamilyResult {
            name: family.name.clone(),
            layers: family.materials.len(),
            mse,
        });
    }
    Ok(results)
}

fn grid_output_dim(grid: &WavelengthGrid) -> usize {
    2 * grid.count
}

/// Reference timings of the original full-scale deployment (GPU inference,
/// Python solver baseline). Hardware-dependent context only; nothing here
/// is ever asserted against.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceTimings {
    pub single_oracle_s: f64,
    pub single_model_s: f64,
    pub batch_model_s_per_item: f64,
    pub speedup_single: f64,
    pub speedup_batch: f64,
    pub mse: f64,
}

impl Default for ReferenceTimings {
    fn default() -> Self {
        Self {
            single_oracle_s: 0.057,
            single_model_s: 0.010,
            batch_model_s_per_item: 1.5e-5,
            speedup_single: 5.7,
            speedup_batch: 3800.0,
            mse: 5.7e-5,
        }
    }
}

/// Wall-clock comparison of the solver and the surrogate, single item and
/// batched, plus the surrogate's MSE against the solver on the same pool.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub single_oracle_s: f64,
    pub single_model_s: f64,
    pub batch_model_s_per_item: f64,
    pub speedup_single: f64,
    pub speedup_batch: f64,
    pub mse_global: f64,
    pub n_single: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    pub hardware_note: String,
    pub reference: ReferenceTimings,
}

impl BenchReport {
    pub fn text_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28}{:>14}{:>14}\n",
            "attribute", "measured", "reference"
        ));
        out.push_str(&format!(
            "{:<28}{:>14.6e}{:>14.6e}\n",
            "single oracle (s)", self.single_oracle_s, self.reference.single_oracle_s
        ));
        out.push_str(&format!(
            "{:<28}{:>14.6e}{:>14.6e}\n",
            "single model (s)", self.single_model_s, self.reference.single_model_s
        ));
        out.push_str(&format!(
            "{:<28}{:>14.6e}{:>14.6e}\n",
            "batch model (s/item)",
            self.batch_model_s_per_item,
            self.reference.batch_model_s_per_item
        ));
        out.push_str(&format!(
            "{:<28}{:>14.3}{:>14.3}\n",
            "speedup single", self.speedup_single, self.reference.speedup_single
        ));
        out.push_str(&format!(
            "{:<28}{:>14.3}{:>14.3}\n",
            "speedup batch", self.speedup_batch, self.reference.speedup_batch
        ));
        out.push_str(&format!(
            "{:<28}{:>14.6e}{:>14.6e}\n",
            "mse vs oracle", self.mse_global, self.reference.mse
        ));
        out
    }
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    samples[samples.len() / 2]
}

/// Times the oracle (strictly serial) against the surrogate. Reported
/// values are medians over `repetitions` timed passes after a warmup.
#[allow(clippy::too_many_arguments)]
pub fn bench(
    checkpoint_path: impl AsRef<Path>,
    db: &MaterialDb,
    n_single: usize,
    batch_size: usize,
    repetitions: usize,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    seed: u64,
) -> Result<BenchReport, EvalError> {
    if n_single == 0 || batch_size == 0 || repetitions == 0 {
        return Err(EvalError::ConfigError(
            "n_single, batch_size, repetitions must all be >= 1".into(),
        ));
    }
    let ckpt = load_checkpoint(&checkpoint_path)?;
    let vocab = ckpt.vocab_manifest.to_vocabulary();
    if vocab.material_names() != db.names().as_slice() {
        return Err(EvalError::ManifestMismatch(
            "checkpoint vocabulary materials differ from the database".into(),
        ));
    }

    // shared structure pool, on the bin grid
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pool_size = n_single.max(batch_size);
    let structures: Vec<Structure> = (0..pool_size)
        .map(|_| Structure {
            layers: (0..rng.random_range(1..=vocab.max_layers()))
                .map(|_| Layer {
                    material: rng.random_range(0..vocab.num_materials()),
                    thickness_nm: vocab.thickness_bins_nm()[rng.random_range(0..vocab.bin_count())],
                })
                .collect(),
        })
        .collect();
    let seqs: Vec<TokenSeq> = structures
        .iter()
        .map(|s| tokenize(&vocab, s))
        .collect::<Result<_, _>>()?;

    // warmup both paths
    simulate(db, &structures[0], grid, amb)?;
    forward(&ckpt.params, &ckpt.config, &seqs[..1], false)?;
    forward(
        &ckpt.params,
        &ckpt.config,
        &seqs[..batch_size.min(seqs.len())],
        false,
    )?;

    let mut oracle_times = Vec::with_capacity(repetitions);
    let mut model_single_times = Vec::with_capacity(repetitions);
    let mut model_batch_times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        for s in structures.iter().take(n_single) {
            std::hint::black_box(simulate(db, s, grid, amb)?);
        }
        oracle_times.push(start.elapsed().as_secs_f64() / n_single as f64);

        let start = Instant::now();
        for seq in seqs.iter().take(n_single) {
            std::hint::black_box(forward(
                &ckpt.params,
                &ckpt.config,
                std::slice::from_ref(seq),
                false,
            )?);
        }
        model_single_times.push(start.elapsed().as_secs_f64() / n_single as f64);

        let batch = &seqs[..batch_size.min(seqs.len())];
        let start = Instant::now();
        std::hint::black_box(forward(&ckpt.params, &ckpt.config, batch, false)?);
        model_batch_times.push(start.elapsed().as_secs_f64() / batch.len() as f64);
    }

    // accuracy on the same pool
    let spectra = simulate_batch(db, &structures, grid, amb)?;
    let mut targets = Array2::zeros((pool_size, 2 * grid.count));
    for (i, sp) in spectra.iter().enumerate() {
        for (j, v) in sp.flattened().into_iter().enumerate() {
            targets[[i, j]] = v;
        }
    }
    let mse_global = mse_against_targets(&ckpt.params, &ckpt.config, &seqs, &targets, 256)?;

    let single_oracle_s = median(&mut oracle_times);
    let single_model_s = median(&mut model_single_times);
    let batch_model_s_per_item = median(&mut model_batch_times);
    Ok(BenchReport {
        single_oracle_s,
        single_model_s,
        batch_model_s_per_item,
        speedup_single: single_oracle_s / single_model_s,
        speedup_batch: single_oracle_s / batch_model_s_per_item,
        mse_global,
        n_single,
        batch_size,
        repetitions,
        hardware_note: format!(
            "cpu threads: {}; wall-clock medians of {} repetitions",
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            repetitions
        ),
        reference: ReferenceTimings::default(),
    })
}

//! Mini-batch Adam training loop with gradient clipping, metrics logging,
//! and best/final checkpointing. Fully reproducible under a fixed seed.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::datagen::{read_manifest, DataError};
use crate::evalbench::{dataset_tensors, mse_against_targets, EvalError};
use crate::serialization::TokenSeq;
use crate::surrogate::{
    backward, init_params, save_checkpoint, ModelConfig, ModelParams, SurrogateError,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step}: {diagnostic}")]
    NonFiniteLoss { step: usize, diagnostic: String },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Surrogate(#[from] SurrogateError),

    #[error(transparent)]
    Data(#[from] DataError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global L2 clip threshold; non-positive disables clipping.
    pub grad_clip_norm: f64,
    pub seed: u64,
    /// Validation cadence in optimizer steps; 0 evaluates per epoch only.
    pub eval_every: usize,
    pub checkpoint_dir: PathBuf,
}

impl TrainConfig {
    pub fn new(checkpoint_dir: impl Into<PathBuf>) -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 3e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip_norm: 1.0,
            seed: 0,
            eval_every: 500,
            checkpoint_dir: checkpoint_dir.into(),
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::ManifestMismatch(
                "batch_size must be >= 1".into(),
            ));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::ManifestMismatch(
                "learning_rate must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Adam with bias correction over the flat parameter vector.
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(n_params: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            epsilon: cfg.adam_epsilon,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let data = params.data_mut();
        for (i, &g) in grads.data().iter().enumerate() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            data[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Scales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(grads: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grads.data().iter().map(|&g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.data_mut() {
            *g *= scale;
        }
    }
    norm
}

/// One metrics row; the CSV mirrors these fields as `step,split,mse`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricPoint {
    pub step: usize,
    pub split: &'static str,
    pub mse: f64,
}

#[derive(Debug)]
pub struct TrainReport {
    pub steps: usize,
    pub final_train_loss: f64,
    pub best_val_mse: f64,
    pub final_val_mse: f64,
    pub best_checkpoint: PathBuf,
    pub final_checkpoint: PathBuf,
    pub metrics_path: PathBuf,
    pub metrics: Vec<MetricPoint>,
    pub mean_predictor_val_mse: f64,
}

/// In-memory training set.
pub struct LoadedSplit {
    pub seqs: Vec<TokenSeq>,
    pub targets: Array2<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Trains a fresh model (seeded init from `model_cfg.seed`) on a generated
/// dataset; writes `best.olt`, `final.olt`, and `metrics.csv` into the
/// checkpoint directory.
pub fn train(
    dataset_path: impl AsRef<Path>,
    val_path: impl AsRef<Path>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    train_cfg.validate()?;
    model_cfg.validate()?;

    let train_manifest = read_manifest(&dataset_path)?;
    let val_manifest = read_manifest(&val_path)?;
    if train_manifest.vocab.canonical_bytes() != val_manifest.vocab.canonical_bytes() {
        return Err(TrainError::ManifestMismatch(
            "train and validation vocabularies differ".into(),
        ));
    }
    let vocab = train_manifest.vocab.to_vocabulary();
    if vocab.total_size() != model_cfg.vocab_size {
        return Err(TrainError::ManifestMismatch(format!(
            "dataset vocabulary has {} tokens, model expects {}",
            vocab.total_size(),
            model_cfg.vocab_size
        )));
    }
    if vocab.max_seq_len() > model_cfg.max_seq_len {
        return Err(TrainError::ManifestMismatch(format!(
            "dataset sequences may reach {} tokens, model caps at {}",
            vocab.max_seq_len(),
            model_cfg.max_seq_len
        )));
    }
    if 2 * train_manifest.grid.count != model_cfg.output_dim {
        return Err(TrainError::ManifestMismatch(format!(
            "dataset spectra have {} dims, model outputs {}",
            2 * train_manifest.grid.count,
            model_cfg.output_dim
        )));
    }

    let (train_seqs, train_targets) = dataset_tensors(&dataset_path)?;
    let (val_seqs, val_targets) = dataset_tensors(&val_path)?;
    if train_seqs.is_empty() {
        return Err(TrainError::ManifestMismatch("training set is empty".into()));
    }
    let split = LoadedSplit {
        seqs: train_seqs,
        targets: train_targets,
    };
    let val = LoadedSplit {
        seqs: val_seqs,
        targets: val_targets,
    };
    train_in_memory(&split, &val, &train_manifest.vocab, model_cfg, train_cfg)
}

/// Core loop over already-loaded tensors; exposed for synthetic tests.
pub fn train_in_memory(
    train: &LoadedSplit,
    val: &LoadedSplit,
    vocab_manifest: &crate::serialization::VocabManifest,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainReport, TrainError> {
    train_cfg.validate()?;
    fs::create_dir_all(&train_cfg.checkpoint_dir).map_err(io_err(&train_cfg.checkpoint_dir))?;
    let metrics_path = train_cfg.checkpoint_dir.join("metrics.csv");
    let best_path = train_cfg.checkpoint_dir.join("best.olt");
    let final_path = train_cfg.checkpoint_dir.join("final.olt");
    let mut metrics_file =
        BufWriter::new(fs::File::create(&metrics_path).map_err(io_err(&metrics_path))?);
    writeln!(metrics_file, "step,split,mse").map_err(io_err(&metrics_path))?;

    let mut params = init_params(model_cfg);
    let mut adam = Adam::new(params.data().len(), train_cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(train_cfg.seed);
    let mut indices: Vec<usize> = (0..train.seqs.len()).collect();
    let mut metrics = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut step = 0usize;
    let mut last_loss = f64::NAN;

    let eval_and_log = |params: &ModelParams,
                        step: usize,
                        metrics: &mut Vec<MetricPoint>,
                        metrics_file: &mut BufWriter<fs::File>,
                        best_val: &mut f64|
     -> Result<f64, TrainError> {
        let mse = mse_against_targets(
            params,
            model_cfg,
            &val.seqs,
            &val.targets,
            train_cfg.batch_size.max(64),
        )?;
        metrics.push(MetricPoint {
            step,
            split: "val",
            mse,
        });
        writeln!(metrics_file, "{step},val,{mse}").map_err(io_err(&metrics_path))?;
        if mse < *best_val {
            *best_val = mse;
            save_checkpoint(params, model_cfg, vocab_manifest, &best_path)?;
        }
        Ok(mse)
    };

    for _epoch in 0..train_cfg.epochs {
        indices.shuffle(&mut rng);
        for batch_indices in indices.chunks(train_cfg.batch_size) {
            let batch: Vec<TokenSeq> = batch_indices
                .iter()
                .map(|&i| train.seqs[i].clone())
                .collect();
            let mut targets = Array2::zeros((batch_indices.len(), model_cfg.output_dim));
            for (row, &i) in batch_indices.iter().enumerate() {
                targets.row_mut(row).assign(&train.targets.row(i));
            }
            let (loss, mut grads) = backward(&params, model_cfg, &batch, &targets)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    diagnostic: format!(
                        "batch of {} sequences, first index {}",
                        batch.len(),
                        batch_indices.first().copied().unwrap_or(0)
                    ),
                });
            }
            clip_grad_norm(&mut grads, train_cfg.grad_clip_norm);
            adam.step(&mut params, &grads, train_cfg.learning_rate);
            step += 1;
            last_loss = loss;
            metrics.push(MetricPoint {
                step,
                split: "train",
                mse: loss,
            });
            writeln!(metrics_file, "{step},train,{loss}").map_err(io_err(&metrics_path))?;

            if train_cfg.eval_every > 0 && step.is_multiple_of(train_cfg.eval_every) && !val.seqs.is_empty()
            {
                eval_and_log(
                    &params,
                    step,
                    &mut metrics,
                    &mut metrics_file,
                    &mut best_val,
                )?;
            }
        }
        if !val.seqs.is_empty() {
            eval_and_log(
                &params,
                step,
                &mut metrics,
                &mut metrics_file,
                &mut best_val,
            )?;
        }
    }

    let final_val = if val.seqs.is_empty() {
        f64::NAN
    } else {
        mse_against_targets(
            &params,
            model_cfg,
            &val.seqs,
            &val.targets,
            train_cfg.batch_size.max(64),
        )?
    };
    if !final_val.is_nan() && final_val < best_val {
        best_val = final_val;
        save_checkpoint(&params, model_cfg, vocab_manifest, &best_path)?;
    }
    save_checkpoint(&params, model_cfg, vocab_manifest, &final_path)?;
    if best_val.is_infinite() {
        // no validation data: the final model is also the best one
        save_checkpoint(&params, model_cfg, vocab_manifest, &best_path)?;
    }
    metrics_file.flush().map_err(io_err(&metrics_path))?;

    let baseline = if val.seqs.is_empty() {
        f64::NAN
    } else {
        crate::evalbench::mean_predictor_mse(&train.targets, &val.targets)
    };
    Ok(TrainReport {
        steps: step,
        final_train_loss: last_loss,
        best_val_mse: best_val,
        final_val_mse: final_val,
        best_checkpoint: best_path,
        final_checkpoint: final_path,
        metrics_path,
        metrics,
        mean_predictor_val_mse: baseline,
    })
}

//! Encoder-only transformer surrogate: token sequences in, spectra out.
//!
//! Input ids pass through a token ("physical") embedding plus a learned
//! positional embedding, a stack of pre-norm self-attention blocks, and a
//! final layer norm; the position-0 (BoS) vector is decoded by a small
//! fully connected head into the flattened `[R…, T…]` spectrum.
//!
//! Forward and backward passes are written out by hand in double precision
//! so gradients can be validated against finite differences.

mod backward;
mod checkpoint;
mod forward;
mod params;

pub use backward::backward;
pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint};
pub use forward::{forward, loss_mse, AttentionRecord, ForwardOutput};
pub use params::{init_params, param_count, ModelParams, ParamLayout, TensorSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SeqTooLong { len: usize, max: usize },

    #[error("token id {id} out of range (vocab size {vocab_size})")]
    BadTokenId { id: u32, vocab_size: usize },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid model config: {0}")]
    BadConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

/// Architecture hyperparameters. `head_dims` lists the fully connected
/// decoder widths from its input (the hidden size) to the output dimension,
/// so `[1024, 1024, 142]` is one hidden decoder layer over a 1024-wide
/// encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub num_heads: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub head_dims: Vec<usize>,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Full-scale configuration: 12 blocks of 16 heads at hidden size 1024
    /// over the 902-token production vocabulary, ~65M parameters.
    pub fn production() -> Self {
        Self {
            num_blocks: 12,
            num_heads: 16,
            hidden_dim: 1024,
            // Sized so the total parameter budget lands at ~65M.
            ffn_dim: 512,
            head_dims: vec![1024, 1024, 142],
            max_seq_len: 22,
            vocab_size: 902,
            output_dim: 142,
            seed: 0,
        }
    }

    /// Desk-scale preset: trains on a CPU in minutes. Matches the toy
    /// vocabulary (3 materials × 10 bins + 2 specials) and stacks of at
    /// most 4 layers.
    pub fn tiny() -> Self {
        Self {
            num_blocks: 2,
            num_heads: 4,
            hidden_dim: 64,
            ffn_dim: 256,
            head_dims: vec![64, 64, 142],
            max_seq_len: 6,
            vocab_size: 32,
            output_dim: 142,
            seed: 0,
        }
    }

    pub fn head_width(&self) -> usize {
        self.hidden_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::BadConfig(m));
        if self.num_blocks == 0 || self.num_heads == 0 || self.hidden_dim == 0 || self.ffn_dim == 0
        {
            return bad("block/head/hidden/ffn dimensions must be positive".into());
        }
        if !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "hidden_dim {} not divisible by num_heads {}",
                self.hidden_dim, self.num_heads
            ));
        }
        if self.head_dims.len() < 2 {
            return bad("head_dims needs at least input and output widths".into());
        }
        if self.head_dims[0] != self.hidden_dim {
            return bad(format!(
                "head input width {} must equal hidden_dim {}",
                self.head_dims[0], self.hidden_dim
            ));
        }
        if *self.head_dims.last().unwrap() != self.output_dim {
            return bad(format!(
                "last head width {} must equal output_dim {}",
                self.head_dims.last().unwrap(),
                self.output_dim
            ));
        }
        if self.max_seq_len < 3 {
            return bad("max_seq_len must fit BoS + 1 layer + EoS".into());
        }
        if self.vocab_size < 3 {
            return bad("vocab_size must cover specials plus one token".into());
        }
        Ok(())
    }
}

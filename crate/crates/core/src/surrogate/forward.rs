//! Forward pass: embeddings, pre-norm attention blocks, BoS pooling, and
//! the fully connected decoder head.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{ModelConfig, ModelParams, SurrogateError};
use crate::serialization::{TokenSeq, EOS_ID};

pub(crate) const LN_EPS: f64 = 1e-5;
const GELU_A: f64 = 0.044715;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_prime(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Attention weights of one head on one input, rows = query positions.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub block: usize,
    pub head: usize,
    pub weights: Array2<f64>,
}

#[derive(Debug)]
pub(crate) struct LnCache {
    pub xhat: Array2<f64>,
    pub inv_std: Array1<f64>,
}

/// Row-wise layer norm over the feature axis.
pub(crate) fn layer_norm(
    x: &Array2<f64>,
    gain: ArrayView1<f64>,
    bias: ArrayView1<f64>,
) -> (Array2<f64>, LnCache) {
    let (rows, cols) = x.dim();
    let mut xhat = Array2::zeros((rows, cols));
    let mut inv_std = Array1::zeros(rows);
    let mut out = Array2::zeros((rows, cols));
    let x_s = x.as_slice().expect("standard layout");
    let xhat_s = xhat.as_slice_mut().expect("standard layout");
    let out_s = out.as_slice_mut().expect("standard layout");
    let gain = gain.as_slice().expect("contiguous");
    let bias = bias.as_slice().expect("contiguous");
    for r in 0..rows {
        let row = &x_s[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[r] = is;
        let xhat_row = &mut xhat_s[r * cols..(r + 1) * cols];
        let out_row = &mut out_s[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let h = (row[c] - mean) * is;
            xhat_row[c] = h;
            out_row[c] = h * gain[c] + bias[c];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// Row-wise softmax; `valid` columns participate, the rest become exact 0.
fn masked_softmax_rows(scores: &mut Array2<f64>, valid: usize) {
    let (rows, cols) = scores.dim();
    let s = scores.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        let row = &mut s[r * cols..(r + 1) * cols];
        let mut max = f64::NEG_INFINITY;
        for &v in &row[..valid] {
            max = max.max(v);
        }
        let mut sum = 0.0;
        for v in row[..valid].iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row[..valid].iter_mut() {
            *v /= sum;
        }
        for v in row[valid..].iter_mut() {
            *v = 0.0;
        }
    }
}

#[derive(Debug)]
pub(crate) struct BlockCache {
    pub ln1: LnCache,
    pub normed1: Array2<f64>,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    /// One `[L, L]` matrix per (sequence, head), index `b * num_heads + a`.
    pub probs: Vec<Array2<f64>>,
    pub concat: Array2<f64>,
    pub ln2: LnCache,
    pub normed2: Array2<f64>,
    pub ffn_pre: Array2<f64>,
    pub ffn_act: Array2<f64>,
}

#[derive(Debug)]
pub(crate) struct HeadCache {
    pub input: Array2<f64>,
    pub pre: Array2<f64>,
}

#[derive(Debug)]
pub(crate) struct ForwardCache {
    pub padded_ids: Vec<u32>,
    pub lens: Vec<usize>,
    pub batch: usize,
    pub seq_len: usize,
    pub blocks: Vec<BlockCache>,
    pub final_ln: LnCache,
    pub head: Vec<HeadCache>,
    pub predictions: Array2<f64>,
}

/// Pads every sequence to the batch maximum with EoS repeats. A sequence's
/// attended length ends at its first EoS, so explicit EoS padding and batch
/// padding are indistinguishable to the model.
pub(crate) fn pad_batch(
    cfg: &ModelConfig,
    batch: &[TokenSeq],
) -> Result<(Vec<u32>, Vec<usize>, usize), SurrogateError> {
    let mut seq_len = 0;
    for seq in batch {
        if seq.ids.is_empty() {
            return Err(SurrogateError::BadConfig("empty token sequence".into()));
        }
        if seq.ids.len() > cfg.max_seq_len {
            return Err(SurrogateError::SeqTooLong {
                len: seq.ids.len(),
                max: cfg.max_seq_len,
            });
        }
        for &id in &seq.ids {
            if id as usize >= cfg.vocab_size {
                return Err(SurrogateError::BadTokenId {
                    id,
                    vocab_size: cfg.vocab_size,
                });
            }
        }
        seq_len = seq_len.max(seq.ids.len());
    }
    let mut padded = vec![EOS_ID; batch.len() * seq_len];
    let mut lens = Vec::with_capacity(batch.len());
    for (b, seq) in batch.iter().enumerate() {
        padded[b * seq_len..b * seq_len + seq.ids.len()].copy_from_slice(&seq.ids);
        let attended = seq
            .ids
            .iter()
            .position(|&id| id == EOS_ID)
            .map(|p| p + 1)
            .unwrap_or(seq.ids.len());
        lens.push(attended);
    }
    Ok((padded, lens, seq_len))
}

/// `x·W + b` for row-major activations.
fn affine(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let mut out = x.dot(&w);
    out += &b;
    out
}

pub(crate) fn forward_cached(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[TokenSeq],
    capture_attention: bool,
) -> Result<(ForwardCache, Option<Vec<AttentionRecord>>), SurrogateError> {
    cfg.validate()?;
    let (padded_ids, lens, seq_len) = pad_batch(cfg, batch)?;
    let bsz = batch.len();
    let h = cfg.hidden_dim;
    let heads = cfg.num_heads;
    let dh = cfg.head_width();
    let scale = 1.0 / (dh as f64).sqrt();

    let tok_emb = params.view2("token_embedding");
    let pos_emb = params.view2("positional_embedding");
    let mut x = Array2::zeros((bsz * seq_len, h));
    {
        let x_s = x.as_slice_mut().expect("standard layout");
        let tok_s = tok_emb.to_slice().expect("contiguous");
        let pos_s = pos_emb.to_slice().expect("contiguous");
        for b in 0..bsz {
            for p in 0..seq_len {
                let row = b * seq_len + p;
                let id = padded_ids[row] as usize;
                let dst = &mut x_s[row * h..(row + 1) * h];
                let tok = &tok_s[id * h..(id + 1) * h];
                let pos = &pos_s[p * h..(p + 1) * h];
                for c in 0..h {
                    dst[c] = tok[c] + pos[c];
                }
            }
        }
    }

    let mut records = capture_attention.then(Vec::new);
    let mut blocks = Vec::with_capacity(cfg.num_blocks);
    for blk in 0..cfg.num_blocks {
        let (normed1, ln1) = layer_norm(
            &x,
            params.view1(&format!("block{blk}.ln1.gain")),
            params.view1(&format!("block{blk}.ln1.bias")),
        );
        let q = affine(
            &normed1,
            params.view2(&format!("block{blk}.attn.wq")),
            params.view1(&format!("block{blk}.attn.bq")),
        );
        let k = affine(
            &normed1,
            params.view2(&format!("block{blk}.attn.wk")),
            params.view1(&format!("block{blk}.attn.bk")),
        );
        let v = affine(
            &normed1,
            params.view2(&format!("block{blk}.attn.wv")),
            params.view1(&format!("block{blk}.attn.bv")),
        );

        let mut probs = Vec::with_capacity(bsz * heads);
        let mut concat = Array2::zeros((bsz * seq_len, h));
        {
            // hand-rolled per-head kernels: the [L, dh] tiles are too small
            // for the general matmul path to pay off
            let q_s = q.as_slice().expect("standard layout");
            let k_s = k.as_slice().expect("standard layout");
            let v_s = v.as_slice().expect("standard layout");
            let concat_s = concat.as_slice_mut().expect("standard layout");
            for b in 0..bsz {
                let valid = lens[b];
                for a in 0..heads {
                    let col0 = a * dh;
                    let mut scores = Array2::zeros((seq_len, seq_len));
                    {
                        let sc = scores.as_slice_mut().expect("standard layout");
                        for i in 0..seq_len {
                            let q_row = &q_s
                                [(b * seq_len + i) * h + col0..(b * seq_len + i) * h + col0 + dh];
                            for j in 0..valid {
                                let k_row = &k_s[(b * seq_len + j) * h + col0
                                    ..(b * seq_len + j) * h + col0 + dh];
                                let mut acc = 0.0;
                                for c in 0..dh {
                                    acc += q_row[c] * k_row[c];
                                }
                                sc[i * seq_len + j] = acc * scale;
                            }
                        }
                    }
                    masked_softmax_rows(&mut scores, valid);
                    {
                        let sc = scores.as_slice().expect("standard layout");
                        for i in 0..seq_len {
                            let dst = &mut concat_s
                                [(b * seq_len + i) * h + col0..(b * seq_len + i) * h + col0 + dh];
                            for j in 0..valid {
                                let w = sc[i * seq_len + j];
                                let v_row = &v_s[(b * seq_len + j) * h + col0
                                    ..(b * seq_len + j) * h + col0 + dh];
                                for c in 0..dh {
                                    dst[c] += w * v_row[c];
                                }
                            }
                        }
                    }
                    if let (Some(recs), 0) = (&mut records, b) {
                        recs.push(AttentionRecord {
                            block: blk,
                            head: a,
                            weights: scores.clone(),
                        });
                    }
                    probs.push(scores);
                }
            }
        }
        let attn_out = affine(
            &concat,
            params.view2(&format!("block{blk}.attn.wo")),
            params.view1(&format!("block{blk}.attn.bo")),
        );
        let x_mid = &x + &attn_out;

        let (normed2, ln2) = layer_norm(
            &x_mid,
            params.view1(&format!("block{blk}.ln2.gain")),
            params.view1(&format!("block{blk}.ln2.bias")),
        );
        let ffn_pre = affine(
            &normed2,
            params.view2(&format!("block{blk}.ffn.w1")),
            params.view1(&format!("block{blk}.ffn.b1")),
        );
        let ffn_act = ffn_pre.mapv(gelu);
        let ffn_out = affine(
            &ffn_act,
            params.view2(&format!("block{blk}.ffn.w2")),
            params.view1(&format!("block{blk}.ffn.b2")),
        );
        let x_out = &x_mid + &ffn_out;

        blocks.push(BlockCache {
            ln1,
            normed1,
            q,
            k,
            v,
            probs,
            concat,
            ln2,
            normed2,
            ffn_pre,
            ffn_act,
        });
        x = x_out;
    }

    let (normed, final_ln) = layer_norm(
        &x,
        params.view1("final_ln.gain"),
        params.view1("final_ln.bias"),
    );
    let mut pooled = Array2::zeros((bsz, h));
    for b in 0..bsz {
        pooled.row_mut(b).assign(&normed.row(b * seq_len));
    }

    let mut head = Vec::new();
    let n_affines = cfg.head_dims.len() - 1;
    let mut act = pooled;
    for i in 0..n_affines {
        let pre = affine(
            &act,
            params.view2(&format!("head.w{i}")),
            params.view1(&format!("head.b{i}")),
        );
        let next = if i + 1 < n_affines {
            pre.mapv(gelu)
        } else {
            pre.clone()
        };
        head.push(HeadCache { input: act, pre });
        act = next;
    }
    let predictions = act;

    Ok((
        ForwardCache {
            padded_ids,
            lens,
            batch: bsz,
            seq_len,
            blocks,
            final_ln,
            head,
            predictions,
        },
        records,
    ))
}

/// Model output for a batch of sequences.
#[derive(Debug)]
pub struct ForwardOutput {
    /// One row per input sequence, `output_dim` columns.
    pub predictions: Array2<f64>,
    /// Attention of every block/head for the first sequence, when captured.
    pub attention: Option<Vec<AttentionRecord>>,
}

/// Runs the surrogate on a batch of token sequences.
pub fn forward(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[TokenSeq],
    capture_attention: bool,
) -> Result<ForwardOutput, SurrogateError> {
    if batch.is_empty() {
        return Ok(ForwardOutput {
            predictions: Array2::zeros((0, cfg.output_dim)),
            attention: capture_attention.then(Vec::new),
        });
    }
    let (cache, attention) = forward_cached(params, cfg, batch, capture_attention)?;
    Ok(ForwardOutput {
        predictions: cache.predictions,
        attention,
    })
}

/// Mean over batch and output dimensions of the squared error.
pub fn loss_mse(predictions: &Array2<f64>, targets: &Array2<f64>) -> Result<f64, SurrogateError> {
    if predictions.dim() != targets.dim() {
        return Err(SurrogateError::ShapeMismatch {
            expected: targets.dim(),
            got: predictions.dim(),
        });
    }
    let n = predictions.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets.iter())
        .map(|(&p, &t)| (p - t) * (p - t))
        .sum();
    Ok(sum / n as f64)
}

//! Reverse-mode gradients of `loss_mse ∘ forward` with respect to every
//! parameter tensor.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::forward::{forward_cached, gelu_prime, loss_mse, LnCache};
use super::{ModelConfig, ModelParams, SurrogateError};
use crate::serialization::TokenSeq;

/// d(layer_norm) / d(input), also accumulating gain/bias gradients.
fn layer_norm_backward(
    d_out: &Array2<f64>,
    cache: &LnCache,
    gain: ArrayView1<f64>,
) -> (Array2<f64>, Array1<f64>, Array1<f64>) {
    let (rows, cols) = d_out.dim();
    let mut d_in = Array2::zeros((rows, cols));
    let mut d_gain = Array1::zeros(cols);
    let mut d_bias = Array1::zeros(cols);
    let d_out_s = d_out.as_slice().expect("standard layout");
    let xhat_s = cache.xhat.as_slice().expect("standard layout");
    let d_in_s = d_in.as_slice_mut().expect("standard layout");
    let d_gain_s = d_gain.as_slice_mut().expect("contiguous");
    let d_bias_s = d_bias.as_slice_mut().expect("contiguous");
    let gain = gain.as_slice().expect("contiguous");
    for r in 0..rows {
        let dy = &d_out_s[r * cols..(r + 1) * cols];
        let xhat = &xhat_s[r * cols..(r + 1) * cols];
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for c in 0..cols {
            let g = dy[c] * gain[c];
            m1 += g;
            m2 += g * xhat[c];
            d_gain_s[c] += dy[c] * xhat[c];
            d_bias_s[c] += dy[c];
        }
        m1 /= cols as f64;
        m2 /= cols as f64;
        let is = cache.inv_std[r];
        let dst = &mut d_in_s[r * cols..(r + 1) * cols];
        for c in 0..cols {
            let g = dy[c] * gain[c];
            dst[c] = (g - m1 - xhat[c] * m2) * is;
        }
    }
    (d_in, d_gain, d_bias)
}

fn col_sum(m: &Array2<f64>) -> Array1<f64> {
    m.sum_axis(Axis(0))
}

/// Softmax jacobian application, row-wise: `dS = P ⊙ (dP − Σ_j dP⊙P)`.
fn softmax_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let (rows, cols) = probs.dim();
    let mut d_scores = Array2::zeros((rows, cols));
    let p_s = probs.as_slice().expect("standard layout");
    let dp_s = d_probs.as_slice().expect("standard layout");
    let ds_s = d_scores.as_slice_mut().expect("standard layout");
    for r in 0..rows {
        let p = &p_s[r * cols..(r + 1) * cols];
        let dp = &dp_s[r * cols..(r + 1) * cols];
        let dot: f64 = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
        let dst = &mut ds_s[r * cols..(r + 1) * cols];
        for c in 0..cols {
            dst[c] = p[c] * (dp[c] - dot);
        }
    }
    d_scores
}

/// Computes the loss and its exact gradient for a labeled batch. The
/// returned container shares the parameter layout.
pub fn backward(
    params: &ModelParams,
    cfg: &ModelConfig,
    batch: &[TokenSeq],
    targets: &Array2<f64>,
) -> Result<(f64, ModelParams), SurrogateError> {
    let (cache, _) = forward_cached(params, cfg, batch, false)?;
    let loss = loss_mse(&cache.predictions, targets)?;
    let mut grads = ModelParams::zeros(cfg);

    let bsz = cache.batch;
    let seq_len = cache.seq_len;
    let h = cfg.hidden_dim;
    let heads = cfg.num_heads;
    let dh = cfg.head_width();
    let scale = 1.0 / (dh as f64).sqrt();
    let n = (cache.predictions.len()) as f64;

    // dL/dpred for the mean-squared loss
    let mut g = (&cache.predictions - targets) * (2.0 / n);

    // decoder head, last affine first
    let n_affines = cfg.head_dims.len() - 1;
    for i in (0..n_affines).rev() {
        let hc = &cache.head[i];
        let d_pre = if i + 1 < n_affines {
            let mut d = g;
            d.zip_mut_with(&hc.pre, |dv, &p| *dv *= gelu_prime(p));
            d
        } else {
            g
        };
        let dw = hc.input.t().dot(&d_pre);
        grads.view2_mut(&format!("head.w{i}")).scaled_add(1.0, &dw);
        grads
            .view1_mut(&format!("head.b{i}"))
            .scaled_add(1.0, &col_sum(&d_pre));
        g = d_pre.dot(&params.view2(&format!("head.w{i}")).t());
    }

    // scatter the pooled gradient back to position 0 of every sequence
    let mut d_normed = Array2::zeros((bsz * seq_len, h));
    for b in 0..bsz {
        d_normed.row_mut(b * seq_len).assign(&g.row(b));
    }
    let (mut dx, d_gain, d_bias) =
        layer_norm_backward(&d_normed, &cache.final_ln, params.view1("final_ln.gain"));
    grads.view1_mut("final_ln.gain").scaled_add(1.0, &d_gain);
    grads.view1_mut("final_ln.bias").scaled_add(1.0, &d_bias);

    for blk in (0..cfg.num_blocks).rev() {
        let bc = &cache.blocks[blk];

        // feed-forward branch
        let d_ffn_out = &dx;
        let dw2 = bc.ffn_act.t().dot(d_ffn_out);
        grads
            .view2_mut(&format!("block{blk}.ffn.w2"))
            .scaled_add(1.0, &dw2);
        grads
            .view1_mut(&format!("block{blk}.ffn.b2"))
            .scaled_add(1.0, &col_sum(d_ffn_out));
        let mut d_pre = d_ffn_out.dot(&params.view2(&format!("block{blk}.ffn.w2")).t());
        d_pre.zip_mut_with(&bc.ffn_pre, |dv, &p| *dv *= gelu_prime(p));
        let dw1 = bc.normed2.t().dot(&d_pre);
        grads
            .view2_mut(&format!("block{blk}.ffn.w1"))
            .scaled_add(1.0, &dw1);
        grads
            .view1_mut(&format!("block{blk}.ffn.b1"))
            .scaled_add(1.0, &col_sum(&d_pre));
        let d_normed2 = d_pre.dot(&params.view2(&format!("block{blk}.ffn.w1")).t());
        let (d_ln2, d_gain2, d_bias2) = layer_norm_backward(
            &d_normed2,
            &bc.ln2,
            params.view1(&format!("block{blk}.ln2.gain")),
        );
        grads
            .view1_mut(&format!("block{blk}.ln2.gain"))
            .scaled_add(1.0, &d_gain2);
        grads
            .view1_mut(&format!("block{blk}.ln2.bias"))
            .scaled_add(1.0, &d_bias2);
        let d_x_mid = &dx + &d_ln2;

        // attention branch
        let dwo = bc.concat.t().dot(&d_x_mid);
        grads
            .view2_mut(&format!("block{blk}.attn.wo"))
            .scaled_add(1.0, &dwo);
        grads
            .view1_mut(&format!("block{blk}.attn.bo"))
            .scaled_add(1.0, &col_sum(&d_x_mid));
        let d_concat = d_x_mid.dot(&params.view2(&format!("block{blk}.attn.wo")).t());

        let mut dq = Array2::zeros((bsz * seq_len, h));
        let mut dk = Array2::zeros((bsz * seq_len, h));
        let mut dv = Array2::zeros((bsz * seq_len, h));
        {
            // mirror of the forward micro-kernels, per (sequence, head) tile
            let q_s = bc.q.as_slice().expect("standard layout");
            let k_s = bc.k.as_slice().expect("standard layout");
            let v_s = bc.v.as_slice().expect("standard layout");
            let dc_s = d_concat.as_slice().expect("standard layout");
            let dq_s = dq.as_slice_mut().expect("standard layout");
            let dk_s = dk.as_slice_mut().expect("standard layout");
            let dv_s = dv.as_slice_mut().expect("standard layout");
            let row = |i: usize, col0: usize| i * h + col0;
            for b in 0..bsz {
                let valid = cache.lens[b];
                for a in 0..heads {
                    let col0 = a * dh;
                    let probs = &bc.probs[b * heads + a];
                    let p_s = probs.as_slice().expect("standard layout");

                    let mut d_probs = Array2::zeros((seq_len, seq_len));
                    {
                        let dp = d_probs.as_slice_mut().expect("standard layout");
                        for i in 0..seq_len {
                            let dh_row = &dc_s[row(b * seq_len + i, col0)..][..dh];
                            for j in 0..valid {
                                let v_row = &v_s[row(b * seq_len + j, col0)..][..dh];
                                let mut acc = 0.0;
                                for c in 0..dh {
                                    acc += dh_row[c] * v_row[c];
                                }
                                dp[i * seq_len + j] = acc;
                            }
                            // dv[j] += p[i][j] * d_head[i]
                            for j in 0..valid {
                                let w = p_s[i * seq_len + j];
                                let dv_row = &mut dv_s[row(b * seq_len + j, col0)..][..dh];
                                for c in 0..dh {
                                    dv_row[c] += w * dh_row[c];
                                }
                            }
                        }
                    }
                    let d_scores = softmax_backward(probs, &d_probs);
                    let ds = d_scores.as_slice().expect("standard layout");
                    for i in 0..seq_len {
                        let dq_row = &mut dq_s[row(b * seq_len + i, col0)..][..dh];
                        for j in 0..valid {
                            let w = ds[i * seq_len + j] * scale;
                            let k_row = &k_s[row(b * seq_len + j, col0)..][..dh];
                            for c in 0..dh {
                                dq_row[c] += w * k_row[c];
                            }
                        }
                    }
                    for j in 0..valid {
                        let dk_row = &mut dk_s[row(b * seq_len + j, col0)..][..dh];
                        for i in 0..seq_len {
                            let w = ds[i * seq_len + j] * scale;
                            let q_row = &q_s[row(b * seq_len + i, col0)..][..dh];
                            for c in 0..dh {
                                dk_row[c] += w * q_row[c];
                            }
                        }
                    }
                }
            }
        }

        let mut d_normed1 = Array2::zeros((bsz * seq_len, h));
        for (proj, d_proj) in [("q", &dq), ("k", &dk), ("v", &dv)] {
            let dw = bc.normed1.t().dot(d_proj);
            grads
                .view2_mut(&format!("block{blk}.attn.w{proj}"))
                .scaled_add(1.0, &dw);
            grads
                .view1_mut(&format!("block{blk}.attn.b{proj}"))
                .scaled_add(1.0, &col_sum(d_proj));
            d_normed1 += &d_proj.dot(&params.view2(&format!("block{blk}.attn.w{proj}")).t());
        }
        let (d_ln1, d_gain1, d_bias1) = layer_norm_backward(
            &d_normed1,
            &bc.ln1,
            params.view1(&format!("block{blk}.ln1.gain")),
        );
        grads
            .view1_mut(&format!("block{blk}.ln1.gain"))
            .scaled_add(1.0, &d_gain1);
        grads
            .view1_mut(&format!("block{blk}.ln1.bias"))
            .scaled_add(1.0, &d_bias1);

        dx = &d_x_mid + &d_ln1;
    }

    // embeddings
    {
        let mut d_tok = grads.view2_mut("token_embedding");
        for b in 0..bsz {
            for p in 0..seq_len {
                let row = b * seq_len + p;
                let id = cache.padded_ids[row] as usize;
                let src = dx.row(row);
                let mut dst = d_tok.row_mut(id);
                dst += &src;
            }
        }
    }
    {
        let mut d_pos = grads.view2_mut("positional_embedding");
        for b in 0..bsz {
            for p in 0..seq_len {
                let src = dx.row(b * seq_len + p);
                let mut dst = d_pos.row_mut(p);
                dst += &src;
            }
        }
    }

    Ok((loss, grads))
}

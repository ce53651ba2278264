//! Flat parameter storage with a named tensor directory.
//!
//! All weights live in one contiguous `Vec<f64>`; a [`ParamLayout`] maps
//! tensor names to (shape, offset) slices. The flat layout keeps the
//! optimizer, gradient clipping, checkpointing, and finite-difference
//! probing trivial: they all operate on one slice.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;

use super::ModelConfig;

/// One entry of the tensor directory. `offset` counts elements, not bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
    by_name: HashMap<String, usize>,
    total_len: usize,
}

impl ParamLayout {
    pub fn for_config(cfg: &ModelConfig) -> Self {
        let h = cfg.hidden_dim;
        let f = cfg.ffn_dim;
        let mut specs: Vec<TensorSpec> = Vec::new();
        let mut offset = 0usize;
        let mut push = |name: String, shape: Vec<usize>| {
            let len: usize = shape.iter().product();
            specs.push(TensorSpec {
                name,
                shape,
                offset,
            });
            offset += len;
        };

        push("token_embedding".into(), vec![cfg.vocab_size, h]);
        push("positional_embedding".into(), vec![cfg.max_seq_len, h]);
        for b in 0..cfg.num_blocks {
            push(format!("block{b}.ln1.gain"), vec![h]);
            push(format!("block{b}.ln1.bias"), vec![h]);
            for proj in ["q", "k", "v", "o"] {
                push(format!("block{b}.attn.w{proj}"), vec![h, h]);
                push(format!("block{b}.attn.b{proj}"), vec![h]);
            }
            push(format!("block{b}.ln2.gain"), vec![h]);
            push(format!("block{b}.ln2.bias"), vec![h]);
            push(format!("block{b}.ffn.w1"), vec![h, f]);
            push(format!("block{b}.ffn.b1"), vec![f]);
            push(format!("block{b}.ffn.w2"), vec![f, h]);
            push(format!("block{b}.ffn.b2"), vec![h]);
        }
        push("final_ln.gain".into(), vec![h]);
        push("final_ln.bias".into(), vec![h]);
        for (i, pair) in cfg.head_dims.windows(2).enumerate() {
            push(format!("head.w{i}"), vec![pair[0], pair[1]]);
            push(format!("head.b{i}"), vec![pair[1]]);
        }

        let by_name = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.name.clone(), i))
            .collect();
        ParamLayout {
            specs,
            by_name,
            total_len: offset,
        }
    }

    pub fn total_len(&self) -> usize {
        self.total_len
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> &TensorSpec {
        let idx = self
            .by_name
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor '{name}'"));
        &self.specs[*idx]
    }
}

/// Total parameter count for a config, by shape arithmetic alone.
pub fn param_count(cfg: &ModelConfig) -> usize {
    ParamLayout::for_config(cfg).total_len()
}

/// All model weights. Doubles as the gradient container: gradients share
/// the layout of the parameters they belong to.
#[derive(Debug, Clone)]
pub struct ModelParams {
    layout: ParamLayout,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let layout = ParamLayout::for_config(cfg);
        let data = vec![0.0; layout.total_len()];
        Self { layout, data }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_flat(cfg: &ModelConfig, data: Vec<f64>) -> Option<Self> {
        let layout = ParamLayout::for_config(cfg);
        (data.len() == layout.total_len()).then_some(Self { layout, data })
    }

    fn slice(&self, name: &str) -> (&TensorSpec, &[f64]) {
        let spec = self.layout.spec(name);
        (spec, &self.data[spec.offset..spec.offset + spec.len()])
    }

    pub fn view2(&self, name: &str) -> ArrayView2<'_, f64> {
        let (spec, slice) = self.slice(name);
        debug_assert_eq!(spec.shape.len(), 2);
        ArrayView2::from_shape((spec.shape[0], spec.shape[1]), slice).unwrap()
    }

    pub fn view1(&self, name: &str) -> ArrayView1<'_, f64> {
        let (spec, slice) = self.slice(name);
        debug_assert_eq!(spec.shape.len(), 1);
        ArrayView1::from_shape(spec.shape[0], slice).unwrap()
    }

    pub fn view2_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        let spec = self.layout.spec(name).clone();
        let slice = &mut self.data[spec.offset..spec.offset + spec.len()];
        ArrayViewMut2::from_shape((spec.shape[0], spec.shape[1]), slice).unwrap()
    }

    pub fn view1_mut(&mut self, name: &str) -> ArrayViewMut1<'_, f64> {
        let spec = self.layout.spec(name).clone();
        let slice = &mut self.data[spec.offset..spec.offset + spec.len()];
        ArrayViewMut1::from_shape(spec.shape[0], slice).unwrap()
    }
}

/// Seeded initialization: layer-norm gains 1, biases 0, embeddings and
/// weight matrices zero-mean normal with scale 1/√fan_in (1/√hidden for the
/// embeddings and the square attention projections).
pub fn init_params(cfg: &ModelConfig) -> ModelParams {
    let mut params = ModelParams::zeros(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let hidden = cfg.hidden_dim as f64;
    let specs: Vec<TensorSpec> = params.layout.specs.clone();
    for spec in specs {
        let slice = &mut params.data[spec.offset..spec.offset + spec.len()];
        if spec.name.ends_with(".gain") {
            slice.fill(1.0);
        } else if spec.shape.len() == 1 {
            // biases stay zero
        } else {
            let fan_in = if spec.name.ends_with("_embedding") {
                hidden
            } else {
                spec.shape[0] as f64
            };
            let normal = Normal::new(0.0, 1.0 / fan_in.sqrt()).unwrap();
            for w in slice.iter_mut() {
                *w = normal.sample(&mut rng);
            }
        }
    }
    params
}

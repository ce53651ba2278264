//! Structure serialization: the bijective mapping between layer stacks and
//! token sequences.
//!
//! Ids 0 and 1 are the BoS/EoS specials; each (material m, thickness bin b)
//! pair maps to `2 + m·bin_count + b`. A stack of N layers serializes to
//! N + 2 tokens: `[BoS, layer tokens…, EoS]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::MaterialDb;
use crate::tmm::{Layer, Structure};

pub const BOS_ID: u32 = 0;
pub const EOS_ID: u32 = 1;

#[derive(Debug, Error)]
pub enum TokenError {
    #[error("structure has {0} layers, vocabulary allows at most {1}")]
    TooManyLayers(usize, usize),

    #[error("material id {0} not covered by vocabulary of {1} materials")]
    MaterialOutOfVocab(usize, usize),

    #[error("thickness {0:.2} nm too far from any bin (grid [{1:.0}, {2:.0}] nm)")]
    ThicknessOutOfRange(f64, f64, f64),

    #[error("malformed token sequence: {0}")]
    MalformedSequence(String),

    #[error("token id {0} out of range (vocabulary size {1})")]
    BadId(u32, usize),
}

/// Fixed vocabulary: special tokens plus one token per (material, bin) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    material_names: Vec<String>,
    thickness_bins_nm: Vec<f64>,
    max_layers: usize,
}

impl Vocabulary {
    /// Default bin grid: 10, 20, …, 500 nm.
    pub fn default_bins() -> Vec<f64> {
        (1..=50).map(|i| 10.0 * i as f64).collect()
    }

    pub fn new(
        material_names: Vec<String>,
        thickness_bins_nm: Vec<f64>,
        max_layers: usize,
    ) -> Self {
        assert!(!material_names.is_empty() && !thickness_bins_nm.is_empty() && max_layers >= 1);
        Self {
            material_names,
            thickness_bins_nm,
            max_layers,
        }
    }

    pub fn from_db(db: &MaterialDb, thickness_bins_nm: Vec<f64>, max_layers: usize) -> Self {
        Self::new(db.names(), thickness_bins_nm, max_layers)
    }

    pub fn num_materials(&self) -> usize {
        self.material_names.len()
    }

    pub fn bin_count(&self) -> usize {
        self.thickness_bins_nm.len()
    }

    pub fn material_names(&self) -> &[String] {
        &self.material_names
    }

    pub fn thickness_bins_nm(&self) -> &[f64] {
        &self.thickness_bins_nm
    }

    pub fn max_layers(&self) -> usize {
        self.max_layers
    }

    /// Specials + structure tokens.
    pub fn total_size(&self) -> usize {
        2 + self.num_materials() * self.bin_count()
    }

    /// Structure tokens + EoS (the size quoted without BoS).
    pub fn structure_and_eos_count(&self) -> usize {
        self.num_materials() * self.bin_count() + 1
    }

    /// Longest legal sequence: BoS + max_layers + EoS.
    pub fn max_seq_len(&self) -> usize {
        self.max_layers + 2
    }

    pub fn token_id(&self, material: usize, bin: usize) -> u32 {
        debug_assert!(material < self.num_materials() && bin < self.bin_count());
        (2 + material * self.bin_count() + bin) as u32
    }

    /// Inverse of [`Vocabulary::token_id`] for structure tokens.
    pub fn decode_id(&self, id: u32) -> Result<(usize, usize), TokenError> {
        if (id as usize) < 2 || (id as usize) >= self.total_size() {
            return Err(TokenError::BadId(id, self.total_size()));
        }
        let idx = id as usize - 2;
        Ok((idx / self.bin_count(), idx % self.bin_count()))
    }

    /// Nearest bin index for a thickness; exact midpoints round up.
    pub fn snap_bin(&self, thickness_nm: f64) -> Result<usize, TokenError> {
        let bins = &self.thickness_bins_nm;
        let last = bins.len() - 1;
        let i = bins.partition_point(|&b| b < thickness_nm);
        let bin = if i == 0 {
            0
        } else if i > last {
            last
        } else {
            // ties (equidistant) round up
            if thickness_nm - bins[i - 1] < bins[i] - thickness_nm {
                i - 1
            } else {
                i
            }
        };
        // allow at most half the local bin spacing of slack outside the grid
        let spacing = if bin == 0 {
            bins[1.min(last)] - bins[0]
        } else {
            bins[bin] - bins[bin - 1]
        };
        let tol = if last == 0 { 0.0 } else { spacing / 2.0 };
        if (thickness_nm - bins[bin]).abs() > tol + 1e-9 {
            return Err(TokenError::ThicknessOutOfRange(
                thickness_nm,
                bins[0],
                bins[last],
            ));
        }
        Ok(bin)
    }

    /// Canonical manifest bytes. Artifacts that must agree on a vocabulary
    /// (datasets, checkpoints) embed and byte-compare this document.
    pub fn manifest(&self) -> VocabManifest {
        VocabManifest {
            material_names: self.material_names.clone(),
            thickness_bins_nm: self.thickness_bins_nm.clone(),
            max_layers: self.max_layers,
            specials: Specials {
                bos: BOS_ID,
                eos: EOS_ID,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Specials {
    pub bos: u32,
    pub eos: u32,
}

/// Persisted description of a [`Vocabulary`]; serialization is canonical
/// (fixed field order) so equality can be checked on bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabManifest {
    pub material_names: Vec<String>,
    pub thickness_bins_nm: Vec<f64>,
    pub max_layers: usize,
    pub specials: Specials,
}

impl VocabManifest {
    pub fn to_vocabulary(&self) -> Vocabulary {
        Vocabulary::new(
            self.material_names.clone(),
            self.thickness_bins_nm.clone(),
            self.max_layers,
        )
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("manifest serialization cannot fail")
    }
}

/// A validated token sequence: `[BoS, structure tokens…, EoS]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
}

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.ids.len().saturating_sub(2)
    }

    /// Checks the sequence invariants against a vocabulary.
    pub fn validate(&self, vocab: &Vocabulary) -> Result<(), TokenError> {
        let malformed = |m: &str| TokenError::MalformedSequence(m.to_string());
        if self.ids.len() < 3 {
            return Err(malformed("sequence must hold at least one layer token"));
        }
        if self.ids.len() > vocab.max_seq_len() {
            return Err(TokenError::TooManyLayers(
                self.ids.len() - 2,
                vocab.max_layers(),
            ));
        }
        if self.ids[0] != BOS_ID {
            return Err(malformed("sequence must begin with BoS"));
        }
        if *self.ids.last().unwrap() != EOS_ID {
            return Err(malformed("sequence must end with EoS"));
        }
        for &id in &self.ids[1..self.ids.len() - 1] {
            if id == BOS_ID || id == EOS_ID {
                return Err(malformed("special token inside the body"));
            }
            vocab.decode_id(id)?;
        }
        Ok(())
    }
}

/// Serializes a structure: each layer's thickness snaps to the nearest bin
/// and the (material, bin) pair maps through the id bijection.
pub fn tokenize(vocab: &Vocabulary, s: &Structure) -> Result<TokenSeq, TokenError> {
    if s.layers.is_empty() || s.layers.len() > vocab.max_layers() {
        return Err(TokenError::TooManyLayers(
            s.layers.len(),
            vocab.max_layers(),
        ));
    }
    let mut ids = Vec::with_capacity(s.layers.len() + 2);
    ids.push(BOS_ID);
    for l in &s.layers {
        if l.material >= vocab.num_materials() {
            return Err(TokenError::MaterialOutOfVocab(
                l.material,
                vocab.num_materials(),
            ));
        }
        let bin = vocab.snap_bin(l.thickness_nm)?;
        ids.push(vocab.token_id(l.material, bin));
    }
    ids.push(EOS_ID);
    Ok(TokenSeq { ids })
}

/// Inverse mapping; thicknesses are the bin grid values themselves.
pub fn detokenize(vocab: &Vocabulary, seq: &TokenSeq) -> Result<Structure, TokenError> {
    seq.validate(vocab)?;
    let layers = seq.ids[1..seq.ids.len() - 1]
        .iter()
        .map(|&id| {
            let (material, bin) = vocab.decode_id(id)?;
            Ok(Layer {
                material,
                thickness_nm: vocab.thickness_bins_nm()[bin],
            })
        })
        .collect::<Result<Vec<_>, TokenError>>()?;
    Ok(Structure { layers })
}

/// Human-readable meaning of one token id.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLabel {
    pub name: String,
    pub thickness_nm: Option<f64>,
}

pub fn vocab_label(vocab: &Vocabulary, id: u32) -> Result<TokenLabel, TokenError> {
    match id {
        BOS_ID => Ok(TokenLabel {
            name: "BoS".into(),
            thickness_nm: None,
        }),
        EOS_ID => Ok(TokenLabel {
            name: "EoS".into(),
            thickness_nm: None,
        }),
        _ => {
            let (material, bin) = vocab.decode_id(id)?;
            Ok(TokenLabel {
                name: vocab.material_names()[material].clone(),
                thickness_nm: Some(vocab.thickness_bins_nm()[bin]),
            })
        }
    }
}

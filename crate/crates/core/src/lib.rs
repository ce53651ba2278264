//! Optolayer: fast simulation of optical multilayer thin films and a
//! transformer surrogate that learns to replace the solver.
//!
//! The crate is organized around one physical oracle and one learned model:
//!
//! * [`materials`] — tabulated complex refractive indices, loaded from CSV.
//! * [`tmm`] — the transfer-matrix solver: reflection/transmission spectra
//!   and intra-stack electric fields at normal incidence.
//! * [`serialization`] — the bijection between layer stacks and token
//!   sequences consumed by the surrogate.
//! * [`datagen`] — seeded random structure sampling and labeled dataset
//!   generation (JSONL + manifest).
//! * [`surrogate`] — an encoder-only transformer predicting spectra from
//!   token sequences, with hand-written forward and backward passes.
//! * [`trainer`] — Adam training loop with metrics logging and checkpoints.
//! * [`evalbench`] — accuracy evaluation (global and per structure family)
//!   and the single-vs-batched timing benchmark.
//! * [`analysis`] — CSV exports of embeddings, attention maps, and field
//!   distributions for external plotting.

pub mod analysis;
pub mod datagen;
pub mod evalbench;
mod hash;
pub mod materials;
pub mod serialization;
pub mod surrogate;
pub mod tmm;
pub mod trainer;

pub use materials::{load_material_db, Material, MaterialDb, MaterialError};
pub use serialization::{TokenSeq, Vocabulary};
pub use surrogate::{ModelConfig, ModelParams};
pub use tmm::{simulate, simulate_batch, AmbientConfig, Spectrum, Structure, WavelengthGrid};

/// Caps the worker pool used by batched simulation and evaluation.
///
/// Returns an error if a global pool was already installed. Without this
/// call the pool defaults to the number of logical CPUs.
#[cfg(feature = "parallel")]
pub fn set_worker_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn set_worker_threads(_n: usize) -> Result<(), String> {
    Ok(())
}

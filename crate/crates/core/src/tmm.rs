//! Transfer-matrix solver for multilayer stacks at normal incidence.
//!
//! Characteristic-matrix formulation: per layer, with complex index ñ and
//! phase δ = 2π·ñ·d/λ, the layer matrix relating tangential (E, H) across
//! the layer is
//!
//! ```text
//! M = | cos δ        −(i/ñ)·sin δ |
//!     | −i·ñ·sin δ    cos δ       |
//! ```
//!
//! and `(B, C)ᵀ = (M₁·M₂·…·M_N)·(1, ñ_exit)ᵀ` gives the amplitude
//! coefficients `r = (ñ_inc·B − C)/(ñ_inc·B + C)`, `t = 2·ñ_inc/(ñ_inc·B + C)`.
//!
//! Time convention is e^{−iωt} with forward waves e^{+i·ñ·k₀·z}, so
//! extinction k ≥ 0 means absorption; the off-diagonal signs above follow
//! from that choice.

pub use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::materials::{MaterialDb, MaterialError};

pub const MIN_THICKNESS_NM: f64 = 10.0;
pub const MAX_THICKNESS_NM: f64 = 500.0;
pub const DEFAULT_MAX_LAYERS: usize = 20;

#[derive(Debug, Error)]
pub enum TmmError {
    #[error(transparent)]
    Material(#[from] MaterialError),

    #[error("non-finite result at {wavelength_nm:.1} nm (overflow in complex trig)")]
    NonFiniteResult { wavelength_nm: f64 },

    #[error("incidence medium must be lossless (Im = {0})")]
    LossyIncidenceMedium(f64),

    #[error("structure has {0} layers, allowed 1..={1}")]
    BadLayerCount(usize, usize),

    #[error("layer {index}: thickness {thickness_nm:.2} nm outside [{min:.0}, {max:.0}] nm")]
    BadThickness {
        index: usize,
        thickness_nm: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid wavelength grid: {0}")]
    BadGrid(String),

    #[error("structure {index} in batch failed: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<TmmError>,
    },

    #[error("z step must be positive, got {0}")]
    BadZStep(f64),

    #[error("unknown material '{0}'")]
    UnknownMaterial(String),
}

/// One layer: a material database id plus a physical thickness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub material: usize,
    pub thickness_nm: f64,
}

/// An ordered stack, front (light-incident side) first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Structure {
    pub layers: Vec<Layer>,
}

impl Structure {
    pub fn new(layers: Vec<Layer>) -> Self {
        Self { layers }
    }

    pub fn from_pairs(pairs: &[(usize, f64)]) -> Self {
        Self {
            layers: pairs
                .iter()
                .map(|&(material, thickness_nm)| Layer {
                    material,
                    thickness_nm,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn total_thickness_nm(&self) -> f64 {
        self.layers.iter().map(|l| l.thickness_nm).sum()
    }

    /// Checks the dataset-facing invariants: 1..=max_layers layers, every
    /// thickness within [10, 500] nm, every material id present in `db`.
    ///
    /// The solver itself also accepts an empty stack (bare interface).
    pub fn validate(&self, db: &MaterialDb, max_layers: usize) -> Result<(), TmmError> {
        if self.layers.is_empty() || self.layers.len() > max_layers {
            return Err(TmmError::BadLayerCount(self.layers.len(), max_layers));
        }
        for (index, l) in self.layers.iter().enumerate() {
            if !(l.thickness_nm >= MIN_THICKNESS_NM && l.thickness_nm <= MAX_THICKNESS_NM) {
                return Err(TmmError::BadThickness {
                    index,
                    thickness_nm: l.thickness_nm,
                    min: MIN_THICKNESS_NM,
                    max: MAX_THICKNESS_NM,
                });
            }
            db.get(l.material)?;
        }
        Ok(())
    }
}

/// A stack described by material names, the JSON interchange form
/// (`{"layers":[{"material":"SiO2","thickness_nm":120.0}, …]}`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedStructure {
    pub layers: Vec<NamedLayer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedLayer {
    pub material: String,
    pub thickness_nm: f64,
}

impl NamedStructure {
    /// Maps material names to ids through `lookup` (a database or a
    /// vocabulary).
    pub fn resolve<F>(&self, lookup: F) -> Result<Structure, TmmError>
    where
        F: Fn(&str) -> Option<usize>,
    {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                lookup(&l.material)
                    .map(|material| Layer {
                        material,
                        thickness_nm: l.thickness_nm,
                    })
                    .ok_or_else(|| TmmError::UnknownMaterial(l.material.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Structure { layers })
    }

    pub fn from_structure(s: &Structure, names: &[String]) -> Self {
        Self {
            layers: s
                .layers
                .iter()
                .map(|l| NamedLayer {
                    material: names[l.material].clone(),
                    thickness_nm: l.thickness_nm,
                })
                .collect(),
        }
    }
}

/// Uniform wavelength grid `start + j·step`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavelengthGrid {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
    pub count: usize,
}

impl WavelengthGrid {
    pub fn new(start_nm: f64, stop_nm: f64, step_nm: f64) -> Result<Self, TmmError> {
        if !step_nm.is_finite() || step_nm <= 0.0 || stop_nm.is_nan() || stop_nm < start_nm {
            return Err(TmmError::BadGrid(format!(
                "need stop >= start and step > 0, got {start_nm}:{stop_nm}:{step_nm}"
            )));
        }
        let steps = (stop_nm - start_nm) / step_nm;
        if (steps - steps.round()).abs() > 1e-9 {
            return Err(TmmError::BadGrid(format!(
                "step {step_nm} does not divide span [{start_nm}, {stop_nm}]"
            )));
        }
        Ok(Self {
            start_nm,
            stop_nm,
            step_nm,
            count: steps.round() as usize + 1,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|j| self.start_nm + j as f64 * self.step_nm)
            .collect()
    }
}

impl Default for WavelengthGrid {
    /// 400–1100 nm in 10 nm steps: 71 points.
    fn default() -> Self {
        Self::new(400.0, 1100.0, 10.0).unwrap()
    }
}

/// Semi-infinite incidence and exit media. The incidence medium must be
/// lossless. Defaults: air in front, non-dispersive glass-like substrate
/// behind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientConfig {
    pub incident_index: Complex64,
    pub exit_index: Complex64,
}

impl AmbientConfig {
    pub fn new(incident_re: f64, exit_index: Complex64) -> Self {
        Self {
            incident_index: Complex64::new(incident_re, 0.0),
            exit_index,
        }
    }

    fn check(&self) -> Result<(), TmmError> {
        if self.incident_index.im != 0.0 {
            return Err(TmmError::LossyIncidenceMedium(self.incident_index.im));
        }
        Ok(())
    }
}

impl Default for AmbientConfig {
    fn default() -> Self {
        Self {
            incident_index: Complex64::new(1.0, 0.0),
            exit_index: Complex64::new(1.45, 0.0),
        }
    }
}

/// Reflection and transmission sampled on a wavelength grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub grid: WavelengthGrid,
    #[serde(rename = "R")]
    pub r: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<f64>,
}

impl Spectrum {
    /// Flattened target vector `[R…, T…]` of dimension `2 × grid.count`.
    pub fn flattened(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.r.len() + self.t.len());
        v.extend_from_slice(&self.r);
        v.extend_from_slice(&self.t);
        v
    }

    pub fn dim(&self) -> usize {
        self.r.len() + self.t.len()
    }
}

/// 2×2 complex matrix, row major.
#[derive(Clone, Copy)]
struct Mat2 {
    a: Complex64,
    b: Complex64,
    c: Complex64,
    d: Complex64,
}

impl Mat2 {
    const IDENTITY: Mat2 = Mat2 {
        a: Complex64::new(1.0, 0.0),
        b: Complex64::new(0.0, 0.0),
        c: Complex64::new(0.0, 0.0),
        d: Complex64::new(1.0, 0.0),
    };

    fn mul(self, o: Mat2) -> Mat2 {
        Mat2 {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }
}

const I: Complex64 = Complex64::new(0.0, 1.0);

fn characteristic_matrix(n: Complex64, thickness_nm: f64, wavelength_nm: f64) -> Mat2 {
    let delta = Complex64::new(
        2.0 * std::f64::consts::PI * thickness_nm / wavelength_nm,
        0.0,
    ) * n;
    let (sin_d, cos_d) = (delta.sin(), delta.cos());
    Mat2 {
        a: cos_d,
        b: -I * sin_d / n,
        c: -I * n * sin_d,
        d: cos_d,
    }
}

/// Amplitude coefficients (r, t) for one wavelength.
fn amplitudes(
    db: &MaterialDb,
    s: &Structure,
    amb: &AmbientConfig,
    wavelength_nm: f64,
) -> Result<(Complex64, Complex64), TmmError> {
    let mut m = Mat2::IDENTITY;
    for l in &s.layers {
        let n = db.refractive_index(l.material, wavelength_nm)?;
        m = m.mul(characteristic_matrix(n, l.thickness_nm, wavelength_nm));
    }
    let n_inc = amb.incident_index;
    let n_exit = amb.exit_index;
    let b = m.a + m.b * n_exit;
    let c = m.c + m.d * n_exit;
    let den = n_inc * b + c;
    let r = (n_inc * b - c) / den;
    let t = 2.0 * n_inc / den;
    Ok((r, t))
}

/// Reflection/transmission spectrum of `s`. An empty stack is the bare
/// incidence/exit interface.
pub fn simulate(
    db: &MaterialDb,
    s: &Structure,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> Result<Spectrum, TmmError> {
    amb.check()?;
    let mut r_out = Vec::with_capacity(grid.count);
    let mut t_out = Vec::with_capacity(grid.count);
    for wavelength_nm in grid.values() {
        let (r, t) = amplitudes(db, s, amb, wavelength_nm)?;
        let refl = r.norm_sqr();
        let trans = amb.exit_index.re / amb.incident_index.re * t.norm_sqr();
        if !refl.is_finite() || !trans.is_finite() {
            return Err(TmmError::NonFiniteResult { wavelength_nm });
        }
        r_out.push(refl);
        t_out.push(trans);
    }
    Ok(Spectrum {
        grid: *grid,
        r: r_out,
        t: t_out,
    })
}

/// Simulates every structure of `batch`; output order matches input order
/// and each result is bit-identical to a serial [`simulate`] call.
pub fn simulate_batch(
    db: &MaterialDb,
    batch: &[Structure],
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> Result<Vec<Spectrum>, TmmError> {
    let results = run_batch(db, batch, grid, amb);
    let mut out = Vec::with_capacity(results.len());
    for (index, res) in results.into_iter().enumerate() {
        match res {
            Ok(sp) => out.push(sp),
            Err(source) => {
                return Err(TmmError::Batch {
                    index,
                    source: Box::new(source),
                })
            }
        }
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn run_batch(
    db: &MaterialDb,
    batch: &[Structure],
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> Vec<Result<Spectrum, TmmError>> {
    use rayon::prelude::*;
    batch
        .par_iter()
        .map(|s| simulate(db, s, grid, amb))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn run_batch(
    db: &MaterialDb,
    batch: &[Structure],
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> Vec<Result<Spectrum, TmmError>> {
    batch.iter().map(|s| simulate(db, s, grid, amb)).collect()
}

/// Forward/backward wave amplitudes in one medium, referenced to its left
/// edge (`start_nm`).
#[derive(Debug, Clone, Copy)]
struct LayerWave {
    n: Complex64,
    start_nm: f64,
    thickness_nm: f64,
    fwd: Complex64,
    bwd: Complex64,
}

impl LayerWave {
    /// E(z) at local depth ζ from the layer start.
    fn field_at(&self, zeta_nm: f64, wavelength_nm: f64) -> Complex64 {
        let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;
        let phase = I * self.n * Complex64::new(k0 * zeta_nm, 0.0);
        self.fwd * phase.exp() + self.bwd * (-phase).exp()
    }
}

/// Complex field amplitudes through a stack at one wavelength, normalized
/// to unit incident amplitude.
#[derive(Debug, Clone)]
pub struct FieldProfile {
    pub wavelength_nm: f64,
    pub total_thickness_nm: f64,
    /// Amplitude reflection coefficient at the front interface.
    pub r: Complex64,
    waves: Vec<LayerWave>,
    exit: LayerWave,
}

impl FieldProfile {
    /// |E(z)| at depth z ∈ [0, total] from the front interface. Depths past
    /// the back interface evaluate in the exit medium.
    pub fn magnitude_at(&self, z_nm: f64) -> f64 {
        for w in &self.waves {
            if z_nm <= w.start_nm + w.thickness_nm {
                return w.field_at(z_nm - w.start_nm, self.wavelength_nm).norm();
            }
        }
        self.exit
            .field_at(z_nm - self.exit.start_nm, self.wavelength_nm)
            .norm()
    }
}

/// Solves the wave amplitudes of `s` at a single wavelength by marching the
/// interface conditions front to back, starting from (1, r) in the
/// incidence medium.
pub fn field_profile(
    db: &MaterialDb,
    s: &Structure,
    amb: &AmbientConfig,
    wavelength_nm: f64,
) -> Result<FieldProfile, TmmError> {
    amb.check()?;
    let (r, _) = amplitudes(db, s, amb, wavelength_nm)?;
    if !r.is_finite() {
        return Err(TmmError::NonFiniteResult { wavelength_nm });
    }
    let k0 = 2.0 * std::f64::consts::PI / wavelength_nm;

    // Right-edge values in the incidence medium (zero-thickness reference).
    let mut n_a = amb.incident_index;
    let mut u = Complex64::new(1.0, 0.0);
    let mut v = r;

    let mut waves = Vec::with_capacity(s.layers.len());
    let mut z = 0.0;
    for l in &s.layers {
        let n_b = db.refractive_index(l.material, wavelength_nm)?;
        let ratio = n_a / n_b;
        let fwd = ((1.0 + ratio) * u + (1.0 - ratio) * v) / 2.0;
        let bwd = ((1.0 - ratio) * u + (1.0 + ratio) * v) / 2.0;
        waves.push(LayerWave {
            n: n_b,
            start_nm: z,
            thickness_nm: l.thickness_nm,
            fwd,
            bwd,
        });
        // propagate to the right edge of this layer
        let phase = I * n_b * Complex64::new(k0 * l.thickness_nm, 0.0);
        u = fwd * phase.exp();
        v = bwd * (-phase).exp();
        n_a = n_b;
        z += l.thickness_nm;
    }
    let n_b = amb.exit_index;
    let ratio = n_a / n_b;
    let fwd = ((1.0 + ratio) * u + (1.0 - ratio) * v) / 2.0;
    let bwd = ((1.0 - ratio) * u + (1.0 + ratio) * v) / 2.0;
    if !fwd.is_finite() || !bwd.is_finite() {
        return Err(TmmError::NonFiniteResult { wavelength_nm });
    }
    Ok(FieldProfile {
        wavelength_nm,
        total_thickness_nm: z,
        r,
        waves,
        exit: LayerWave {
            n: n_b,
            start_nm: z,
            thickness_nm: f64::INFINITY,
            fwd,
            bwd,
        },
    })
}

/// |E(z, λ)| on a uniform depth grid spanning the stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMap {
    pub grid: WavelengthGrid,
    pub z_nm: Vec<f64>,
    /// Row per wavelength, column per depth.
    pub magnitude: Vec<Vec<f64>>,
}

/// Field magnitude over the whole stack for every grid wavelength. The depth
/// grid has `ceil(total/z_step) + 1` points with the last one clamped to the
/// back interface.
pub fn field_distribution(
    db: &MaterialDb,
    s: &Structure,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
    z_step_nm: f64,
) -> Result<FieldMap, TmmError> {
    if !z_step_nm.is_finite() || z_step_nm <= 0.0 {
        return Err(TmmError::BadZStep(z_step_nm));
    }
    let total = s.total_thickness_nm();
    let n_steps = (total / z_step_nm).ceil() as usize;
    let z_nm: Vec<f64> = (0..=n_steps)
        .map(|i| (i as f64 * z_step_nm).min(total))
        .collect();
    let mut magnitude = Vec::with_capacity(grid.count);
    for wavelength_nm in grid.values() {
        let profile = field_profile(db, s, amb, wavelength_nm)?;
        magnitude.push(z_nm.iter().map(|&z| profile.magnitude_at(z)).collect());
    }
    Ok(FieldMap {
        grid: *grid,
        z_nm,
        magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::materials::Material;

    fn toy() -> MaterialDb {
        MaterialDb::toy()
    }

    fn glass_amb() -> AmbientConfig {
        AmbientConfig::new(1.0, Complex64::new(1.5, 0.0))
    }

    #[test]
    fn bare_interface_fresnel() {
        let db = toy();
        let grid = WavelengthGrid::default();
        let sp = simulate(&db, &Structure::default(), &grid, &glass_amb()).unwrap();
        for j in 0..grid.count {
            assert!((sp.r[j] - 0.04).abs() < 1e-12);
            assert!((sp.t[j] - 0.96).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_wave_reflectance() {
        // n=2 layer, d = 700/(4*2) nm, air -> n=1.5 substrate.
        // Admittance formula: R = ((n_inc*n_exit - n^2)/(n_inc*n_exit + n^2))^2.
        let db = toy();
        let s = Structure::from_pairs(&[(2, 87.5)]);
        let grid = WavelengthGrid::new(700.0, 700.0, 10.0).unwrap();
        let sp = simulate(&db, &s, &grid, &glass_amb()).unwrap();
        let expect = ((1.5 - 4.0) / (1.5 + 4.0_f64)).powi(2);
        assert!((sp.r[0] - expect).abs() < 1e-12, "R = {}", sp.r[0]);
        assert!((sp.t[0] - (1.0 - expect)).abs() < 1e-12);
    }

    #[test]
    fn lossless_energy_conservation() {
        let db = toy();
        let s = Structure::from_pairs(&[(1, 120.0), (2, 80.0), (1, 310.0), (2, 45.0)]);
        let grid = WavelengthGrid::default();
        let sp = simulate(&db, &s, &grid, &glass_amb()).unwrap();
        for j in 0..grid.count {
            assert!((sp.r[j] + sp.t[j] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn absorber_dissipates() {
        let db = toy();
        let s = Structure::from_pairs(&[(0, 200.0)]); // toy_absorber, k = 0.5
        let grid = WavelengthGrid::default();
        let sp = simulate(&db, &s, &grid, &glass_amb()).unwrap();
        for j in 0..grid.count {
            assert!(sp.r[j] + sp.t[j] < 1.0 - 1e-3);
            assert!(sp.r[j] >= 0.0 && sp.t[j] >= 0.0);
        }
    }

    #[test]
    fn layer_split_invariance() {
        let db = toy();
        let grid = WavelengthGrid::default();
        let amb = glass_amb();
        let whole = Structure::from_pairs(&[(1, 100.0), (2, 240.0), (1, 60.0)]);
        let split = Structure::from_pairs(&[(1, 100.0), (2, 90.0), (2, 150.0), (1, 60.0)]);
        let a = simulate(&db, &whole, &grid, &amb).unwrap();
        let b = simulate(&db, &split, &grid, &amb).unwrap();
        for j in 0..grid.count {
            assert!((a.r[j] - b.r[j]).abs() < 1e-10);
            assert!((a.t[j] - b.t[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn batch_matches_serial_and_preserves_order() {
        let db = toy();
        let grid = WavelengthGrid::default();
        let amb = glass_amb();
        let batch: Vec<Structure> = (0..16)
            .map(|i| Structure::from_pairs(&[(i % 3, 20.0 + 30.0 * i as f64 % 480.0), (1, 55.0)]))
            .collect();
        let results = simulate_batch(&db, &batch, &grid, &amb).unwrap();
        for (s, got) in batch.iter().zip(&results) {
            let want = simulate(&db, s, &grid, &amb).unwrap();
            assert_eq!(got, &want);
        }
    }

    #[test]
    fn batch_error_carries_index() {
        let db = toy();
        let grid = WavelengthGrid::default();
        let amb = glass_amb();
        let batch = vec![
            Structure::from_pairs(&[(1, 100.0)]),
            Structure::from_pairs(&[(7, 100.0)]), // bad material id
        ];
        match simulate_batch(&db, &batch, &grid, &amb) {
            Err(TmmError::Batch { index: 1, .. }) => {}
            other => panic!("expected batch error at index 1, got {other:?}"),
        }
    }

    #[test]
    fn overflow_reports_non_finite() {
        let mut mats = toy().materials().to_vec();
        mats.push(Material::constant("toy_superabsorber", 2.0, 30.0));
        let db = MaterialDb::new(mats).unwrap();
        let s = Structure::from_pairs(&[(3, 500.0); 20]);
        let grid = WavelengthGrid::new(400.0, 400.0, 10.0).unwrap();
        assert!(matches!(
            simulate(&db, &s, &grid, &glass_amb()),
            Err(TmmError::NonFiniteResult { .. })
        ));
    }

    #[test]
    fn grid_construction() {
        let g = WavelengthGrid::default();
        assert_eq!(g.count, 71);
        assert_eq!(g.values().len(), 71);
        assert_eq!(g.values()[70], 1100.0);
        assert!(WavelengthGrid::new(400.0, 1100.0, 13.0).is_err());
        assert!(WavelengthGrid::new(400.0, 300.0, 10.0).is_err());
    }

    #[test]
    fn structure_validation() {
        let db = toy();
        assert!(Structure::default().validate(&db, 20).is_err());
        assert!(Structure::from_pairs(&[(0, 5.0)])
            .validate(&db, 20)
            .is_err());
        assert!(Structure::from_pairs(&[(0, 501.0)])
            .validate(&db, 20)
            .is_err());
        assert!(Structure::from_pairs(&[(9, 100.0)])
            .validate(&db, 20)
            .is_err());
        assert!(Structure::from_pairs(&[(0, 100.0); 21])
            .validate(&db, 20)
            .is_err());
        assert!(Structure::from_pairs(&[(0, 100.0)])
            .validate(&db, 20)
            .is_ok());
    }

    #[test]
    fn lossy_incidence_rejected() {
        let db = toy();
        let amb = AmbientConfig {
            incident_index: Complex64::new(1.0, 0.1),
            exit_index: Complex64::new(1.5, 0.0),
        };
        assert!(matches!(
            simulate(&db, &Structure::default(), &WavelengthGrid::default(), &amb),
            Err(TmmError::LossyIncidenceMedium(_))
        ));
    }

    #[test]
    fn index_matched_field_is_unity() {
        // n = 1 everywhere: no interfaces, unit traveling wave.
        let mut mats = vec![Material::constant("vacuumish", 1.0, 0.0)];
        mats.extend(toy().materials().to_vec());
        let db = MaterialDb::new(mats).unwrap();
        let amb = AmbientConfig::new(1.0, Complex64::new(1.0, 0.0));
        let s = Structure::from_pairs(&[(0, 150.0), (0, 75.0)]);
        let map = field_distribution(&db, &s, &WavelengthGrid::default(), &amb, 25.0).unwrap();
        for row in &map.magnitude {
            for &m in row {
                assert!((m - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_stack_field_is_unity_when_matched() {
        let db = toy();
        let amb = AmbientConfig::new(1.0, Complex64::new(1.0, 0.0));
        let map = field_distribution(
            &db,
            &Structure::default(),
            &WavelengthGrid::default(),
            &amb,
            10.0,
        )
        .unwrap();
        assert_eq!(map.z_nm, vec![0.0]);
        for row in &map.magnitude {
            assert!((row[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn front_boundary_amplitude_identity() {
        let db = toy();
        let s = Structure::from_pairs(&[(2, 90.0), (1, 160.0)]);
        let amb = glass_amb();
        for wl in [430.0, 700.0, 1020.0] {
            let p = field_profile(&db, &s, &amb, wl).unwrap();
            let expect = (Complex64::new(1.0, 0.0) + p.r).norm();
            assert!((p.magnitude_at(0.0) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn field_continuity_at_interfaces() {
        let db = toy();
        let s = Structure::from_pairs(&[(0, 80.0), (2, 130.0), (1, 210.0)]);
        let amb = glass_amb();
        // small enough that |dE/dz|·2ε stays well under the tolerance
        let eps = 1e-9;
        for wl in [450.0, 780.0, 1100.0] {
            let p = field_profile(&db, &s, &amb, wl).unwrap();
            let mut z = 0.0;
            for l in &s.layers {
                z += l.thickness_nm;
                let below = p.magnitude_at(z - eps);
                let above = p.magnitude_at((z + eps).min(p.total_thickness_nm));
                assert!(
                    (below - above).abs() < 1e-8,
                    "discontinuity {} at z={z} λ={wl}",
                    (below - above).abs()
                );
            }
        }
    }

    #[test]
    fn field_grid_shape() {
        let db = toy();
        let s = Structure::from_pairs(&[(1, 175.0), (2, 175.0)]);
        let grid = WavelengthGrid::default();
        let map = field_distribution(&db, &s, &grid, &glass_amb(), 100.0).unwrap();
        // ceil(350/100)+1 = 5 columns, last clamped to 350.
        assert_eq!(map.z_nm.len(), 5);
        assert_eq!(*map.z_nm.last().unwrap(), 350.0);
        assert_eq!(map.magnitude.len(), grid.count);
    }

    #[test]
    fn exit_medium_backward_wave_vanishes() {
        let db = toy();
        let s = Structure::from_pairs(&[(0, 100.0), (2, 300.0)]);
        let p = field_profile(&db, &s, &glass_amb(), 633.0).unwrap();
        assert!(p.exit.bwd.norm() < 1e-12);
    }
}

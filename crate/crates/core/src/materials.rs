//! Material database: tabulated wavelength-dependent complex refractive
//! indices, one CSV file per material.
//!
//! File format: UTF-8, header `wavelength_nm,n,k`, one sample per line,
//! LF endings. The material name is the filename stem. Database ordering
//! is lexicographic by filename so token ids derived from it are
//! reproducible across machines.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Wavelength span every material must cover, in nm.
pub const REQUIRED_COVERAGE_NM: (f64, f64) = (400.0, 1100.0);

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("material '{name}' covers [{min:.1}, {max:.1}] nm, required [{req_min:.1}, {req_max:.1}] nm")]
    MissingCoverage {
        name: String,
        min: f64,
        max: f64,
        req_min: f64,
        req_max: f64,
    },

    #[error("{file}:{line}: malformed dispersion row: {reason}")]
    MalformedRow {
        file: String,
        line: usize,
        reason: String,
    },

    #[error("duplicate material name '{0}'")]
    DuplicateName(String),

    #[error(
        "wavelength {wavelength_nm:.1} nm outside material '{name}' range [{min:.1}, {max:.1}] nm"
    )]
    OutOfRange {
        name: String,
        wavelength_nm: f64,
        min: f64,
        max: f64,
    },

    #[error("material id {0} out of range (database holds {1})")]
    BadMaterialId(usize, usize),

    #[error("no dispersion files found in {0}")]
    EmptyDirectory(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One tabulated sample of a dispersion curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionSample {
    pub wavelength_nm: f64,
    pub n: f64,
    pub k: f64,
}

/// A named material with samples sorted strictly ascending in wavelength.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub samples: Vec<DispersionSample>,
}

impl Material {
    /// Validates ordering, positivity, and coverage invariants.
    pub fn new(
        name: impl Into<String>,
        samples: Vec<DispersionSample>,
    ) -> Result<Self, MaterialError> {
        let name = name.into();
        let malformed = |reason: String| MaterialError::MalformedRow {
            file: name.clone(),
            line: 0,
            reason,
        };
        if samples.is_empty() {
            return Err(malformed("no samples".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.wavelength_nm.is_finite() || s.wavelength_nm <= 0.0 {
                return Err(malformed(format!(
                    "sample {i}: wavelength must be positive"
                )));
            }
            if !s.n.is_finite() || s.n <= 0.0 {
                return Err(malformed(format!("sample {i}: n must be > 0")));
            }
            if !s.k.is_finite() || s.k < 0.0 {
                return Err(malformed(format!("sample {i}: k must be >= 0")));
            }
            if i > 0 && s.wavelength_nm <= samples[i - 1].wavelength_nm {
                return Err(malformed(format!(
                    "sample {i}: wavelengths must be strictly ascending"
                )));
            }
        }
        let (min, max) = (
            samples.first().unwrap().wavelength_nm,
            samples.last().unwrap().wavelength_nm,
        );
        let (req_min, req_max) = REQUIRED_COVERAGE_NM;
        if min > req_min || max < req_max {
            return Err(MaterialError::MissingCoverage {
                name,
                min,
                max,
                req_min,
                req_max,
            });
        }
        Ok(Self { name, samples })
    }

    /// Constant-index material sampled at the coverage endpoints.
    pub fn constant(name: impl Into<String>, n: f64, k: f64) -> Self {
        let (lo, hi) = REQUIRED_COVERAGE_NM;
        Self {
            name: name.into(),
            samples: vec![
                DispersionSample {
                    wavelength_nm: lo,
                    n,
                    k,
                },
                DispersionSample {
                    wavelength_nm: hi,
                    n,
                    k,
                },
            ],
        }
    }

    pub fn wavelength_range(&self) -> (f64, f64) {
        (
            self.samples.first().unwrap().wavelength_nm,
            self.samples.last().unwrap().wavelength_nm,
        )
    }

    /// ñ(λ) = n + i·k by piecewise-linear interpolation of n and k
    /// independently. Exact at sample points.
    pub fn refractive_index(&self, wavelength_nm: f64) -> Result<Complex64, MaterialError> {
        let (min, max) = self.wavelength_range();
        if !(wavelength_nm >= min && wavelength_nm <= max) {
            return Err(MaterialError::OutOfRange {
                name: self.name.clone(),
                wavelength_nm,
                min,
                max,
            });
        }
        // partition_point: first sample with wavelength >= target
        let idx = self
            .samples
            .partition_point(|s| s.wavelength_nm < wavelength_nm);
        let hi = &self.samples[idx.min(self.samples.len() - 1)];
        if hi.wavelength_nm == wavelength_nm {
            return Ok(Complex64::new(hi.n, hi.k));
        }
        let lo = &self.samples[idx - 1];
        let f = (wavelength_nm - lo.wavelength_nm) / (hi.wavelength_nm - lo.wavelength_nm);
        Ok(Complex64::new(
            lo.n + f * (hi.n - lo.n),
            lo.k + f * (hi.k - lo.k),
        ))
    }
}

/// Immutable, ordered material database. Token ids depend on the ordering,
/// so it is fixed at load time and persisted with every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaterialDb {
    materials: Vec<Material>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    /// True for the built-in toy database; never set for data loaded from disk.
    pub synthetic: bool,
}

impl MaterialDb {
    pub fn new(materials: Vec<Material>) -> Result<Self, MaterialError> {
        let mut index = HashMap::new();
        for (i, m) in materials.iter().enumerate() {
            if index.insert(m.name.clone(), i).is_some() {
                return Err(MaterialError::DuplicateName(m.name.clone()));
            }
        }
        Ok(Self {
            materials,
            index,
            synthetic: false,
        })
    }

    /// Built-in synthetic materials for deterministic tests. Not meant for
    /// production datasets.
    pub fn toy() -> Self {
        let mut db = Self::new(vec![
            Material::constant("toy_absorber", 2.0, 0.5),
            Material::constant("toy_n1.5", 1.5, 0.0),
            Material::constant("toy_n2.0", 2.0, 0.0),
        ])
        .unwrap();
        db.synthetic = true;
        db
    }

    /// Lossless-only variant of [`MaterialDb::toy`] (k = 0 everywhere).
    pub fn toy_lossless() -> Self {
        let mut db = Self::new(vec![
            Material::constant("toy_n1.5", 1.5, 0.0),
            Material::constant("toy_n2.0", 2.0, 0.0),
        ])
        .unwrap();
        db.synthetic = true;
        db
    }

    pub fn len(&self) -> usize {
        self.materials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.materials.is_empty()
    }

    pub fn materials(&self) -> &[Material] {
        &self.materials
    }

    pub fn names(&self) -> Vec<String> {
        self.materials.iter().map(|m| m.name.clone()).collect()
    }

    pub fn get(&self, id: usize) -> Result<&Material, MaterialError> {
        self.materials
            .get(id)
            .ok_or(MaterialError::BadMaterialId(id, self.materials.len()))
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// ñ(λ) for material `id`.
    pub fn refractive_index(
        &self,
        id: usize,
        wavelength_nm: f64,
    ) -> Result<Complex64, MaterialError> {
        self.get(id)?.refractive_index(wavelength_nm)
    }

    /// Rebuilds the name index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .materials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.name.clone(), i))
            .collect();
    }
}

impl fmt::Display for MaterialDb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MaterialDb[{}]", self.names().join(", "))
    }
}

/// Parses one dispersion CSV. The header line must be `wavelength_nm,n,k`.
pub fn parse_dispersion_csv(name: &str, text: &str) -> Result<Material, MaterialError> {
    let mut lines = text.lines().enumerate();
    let header = lines
        .next()
        .ok_or_else(|| MaterialError::MalformedRow {
            file: name.to_string(),
            line: 1,
            reason: "empty file".into(),
        })?
        .1
        .trim();
    if header != "wavelength_nm,n,k" {
        return Err(MaterialError::MalformedRow {
            file: name.to_string(),
            line: 1,
            reason: format!("expected header 'wavelength_nm,n,k', got '{header}'"),
        });
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(MaterialError::MalformedRow {
                file: name.to_string(),
                line: lineno + 1,
                reason: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| MaterialError::MalformedRow {
                    file: name.to_string(),
                    line: lineno + 1,
                    reason: format!("bad {what} value '{s}'"),
                })
        };
        samples.push(DispersionSample {
            wavelength_nm: parse(fields[0], "wavelength")?,
            n: parse(fields[1], "n")?,
            k: parse(fields[2], "k")?,
        });
    }
    Material::new(name, samples)
}

/// Loads every `*.csv` file in `dir` as one material, in lexicographic
/// filename order.
pub fn load_material_db(dir: impl AsRef<Path>) -> Result<MaterialDb, MaterialError> {
    let dir = dir.as_ref();
    let io_err = |source| MaterialError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    paths.sort_by_key(|p| p.file_name().map(|s| s.to_os_string()));
    if paths.is_empty() {
        return Err(MaterialError::EmptyDirectory(dir.display().to_string()));
    }
    let mut materials = Vec::with_capacity(paths.len());
    for p in paths {
        let name = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let text = fs::read_to_string(&p).map_err(|source| MaterialError::Io {
            path: p.display().to_string(),
            source,
        })?;
        materials.push(parse_dispersion_csv(&name, &text)?);
    }
    MaterialDb::new(materials)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(w: f64, n: f64, k: f64) -> DispersionSample {
        DispersionSample {
            wavelength_nm: w,
            n,
            k,
        }
    }

    #[test]
    fn constant_material_interpolates_to_itself() {
        let m = Material::constant("toy_n1.5", 1.5, 0.0);
        let v = m.refractive_index(700.0).unwrap();
        assert_eq!(v, Complex64::new(1.5, 0.0));
    }

    #[test]
    fn linear_midpoint() {
        let m = Material::new(
            "two_point",
            vec![
                sample(400.0, 2.0, 0.1),
                sample(500.0, 3.0, 0.3),
                sample(1100.0, 3.0, 0.3),
            ],
        )
        .unwrap();
        let v = m.refractive_index(450.0).unwrap();
        assert!((v.re - 2.5).abs() < 1e-15);
        assert!((v.im - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exact_at_sample_points() {
        let m = Material::new(
            "pts",
            vec![
                sample(390.0, 1.7, 0.0),
                sample(612.3, 1.9, 0.02),
                sample(1105.0, 2.1, 0.4),
            ],
        )
        .unwrap();
        for s in &m.samples {
            let v = m.refractive_index(s.wavelength_nm).unwrap();
            assert_eq!(v.re, s.n);
            assert_eq!(v.im, s.k);
        }
    }

    #[test]
    fn coverage_violation_rejected() {
        let err = Material::new(
            "narrow",
            vec![sample(500.0, 1.5, 0.0), sample(900.0, 1.5, 0.0)],
        );
        assert!(matches!(err, Err(MaterialError::MissingCoverage { .. })));
    }

    #[test]
    fn unsorted_samples_rejected() {
        let err = Material::new(
            "unsorted",
            vec![
                sample(400.0, 1.5, 0.0),
                sample(400.0, 1.6, 0.0),
                sample(1100.0, 1.5, 0.0),
            ],
        );
        assert!(matches!(err, Err(MaterialError::MalformedRow { .. })));
    }

    #[test]
    fn negative_k_rejected() {
        let err = Material::new(
            "gain",
            vec![sample(400.0, 1.5, -0.1), sample(1100.0, 1.5, 0.0)],
        );
        assert!(matches!(err, Err(MaterialError::MalformedRow { .. })));
    }

    #[test]
    fn out_of_range_query() {
        let m = Material::constant("c", 1.5, 0.0);
        assert!(matches!(
            m.refractive_index(2000.0),
            Err(MaterialError::OutOfRange { .. })
        ));
    }

    #[test]
    fn csv_parse_roundtrip() {
        let text = "wavelength_nm,n,k\n400,1.5,0\n750.5,1.6,0.01\n1100,1.7,0.02\n";
        let m = parse_dispersion_csv("demo", text).unwrap();
        assert_eq!(m.samples.len(), 3);
        assert_eq!(m.samples[1].wavelength_nm, 750.5);
        assert_eq!(m.samples[1].k, 0.01);
    }

    #[test]
    fn csv_bad_header_rejected() {
        let err = parse_dispersion_csv("demo", "lambda,n,k\n400,1.5,0\n");
        assert!(matches!(
            err,
            Err(MaterialError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn csv_bad_field_count_rejected() {
        let err = parse_dispersion_csv("demo", "wavelength_nm,n,k\n400,1.5\n");
        assert!(matches!(
            err,
            Err(MaterialError::MalformedRow { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_names_rejected() {
        let err = MaterialDb::new(vec![
            Material::constant("a", 1.5, 0.0),
            Material::constant("a", 1.6, 0.0),
        ]);
        assert!(matches!(err, Err(MaterialError::DuplicateName(_))));
    }

    #[test]
    fn toy_db_lookup() {
        let db = MaterialDb::toy();
        assert_eq!(db.len(), 3);
        assert!(db.synthetic);
        assert_eq!(db.id_of("toy_n1.5"), Some(1));
        assert!(matches!(
            db.refractive_index(99, 500.0),
            Err(MaterialError::BadMaterialId(99, 3))
        ));
    }

    #[test]
    fn load_directory_lexicographic_and_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, n: f64| {
            std::fs::write(
                dir.path().join(name),
                format!("wavelength_nm,n,k\n380,{n},0\n1120,{n},0\n"),
            )
            .unwrap();
        };
        write("TiO2.csv", 2.4);
        write("SiO2.csv", 1.45);
        write("notes.txt", 0.0); // ignored: not .csv
        let db1 = load_material_db(dir.path()).unwrap();
        assert_eq!(db1.names(), vec!["SiO2", "TiO2"]);
        assert!(!db1.synthetic);
        let db2 = load_material_db(dir.path()).unwrap();
        assert_eq!(
            serde_json::to_vec(&db1).unwrap(),
            serde_json::to_vec(&db2).unwrap()
        );
    }

    #[test]
    fn load_directory_coverage_error() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("narrow.csv"),
            "wavelength_nm,n,k\n500,1.5,0\n900,1.5,0\n",
        )
        .unwrap();
        assert!(matches!(
            load_material_db(dir.path()),
            Err(MaterialError::MissingCoverage { .. })
        ));
    }

    #[test]
    fn interpolation_within_bracketing_bounds() {
        let m = Material::new(
            "zig",
            vec![
                sample(400.0, 1.5, 0.00),
                sample(600.0, 2.5, 0.10),
                sample(800.0, 1.8, 0.05),
                sample(1100.0, 2.0, 0.00),
            ],
        )
        .unwrap();
        for i in 0..m.samples.len() - 1 {
            let (a, b) = (m.samples[i], m.samples[i + 1]);
            for f in [0.1, 0.5, 0.9] {
                let w = a.wavelength_nm + f * (b.wavelength_nm - a.wavelength_nm);
                let v = m.refractive_index(w).unwrap();
                assert!(v.re >= a.n.min(b.n) - 1e-12 && v.re <= a.n.max(b.n) + 1e-12);
                assert!(v.im >= a.k.min(b.k) - 1e-12 && v.im <= a.k.max(b.k) + 1e-12);
            }
        }
    }
}

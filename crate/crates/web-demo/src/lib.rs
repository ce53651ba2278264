//! Browser demo bindings. Three interactive operations over a bundled
//! sample material set: spectrum simulation, field-distribution maps, and
//! structure tokenization. All inputs and outputs are JSON strings.
//!
//! The `*_impl` functions hold the logic and compile on any target; the
//! `#[wasm_bindgen]` wrappers only translate errors into `JsValue`.

use std::sync::OnceLock;

use serde::Serialize;
use wasm_bindgen::prelude::*;

use optolayer::materials::{parse_dispersion_csv, MaterialDb};
use optolayer::serialization::{tokenize, vocab_label, Vocabulary};
use optolayer::tmm::{
    field_distribution, simulate, AmbientConfig, Complex64, NamedStructure, Structure,
    WavelengthGrid,
};

const SAMPLE_CSVS: &[(&str, &str)] = &[
    ("Ag", include_str!("../../../data/materials/Ag.csv")),
    ("MgF2", include_str!("../../../data/materials/MgF2.csv")),
    ("Si3N4", include_str!("../../../data/materials/Si3N4.csv")),
    ("SiO2", include_str!("../../../data/materials/SiO2.csv")),
    ("TiO2", include_str!("../../../data/materials/TiO2.csv")),
];

fn db() -> &'static MaterialDb {
    static DB: OnceLock<MaterialDb> = OnceLock::new();
    DB.get_or_init(|| {
        let mats = SAMPLE_CSVS
            .iter()
            .map(|(name, text)| parse_dispersion_csv(name, text).expect("bundled data is valid"))
            .collect();
        MaterialDb::new(mats).expect("bundled names are unique")
    })
}

fn vocab() -> &'static Vocabulary {
    static VOCAB: OnceLock<Vocabulary> = OnceLock::new();
    VOCAB.get_or_init(|| Vocabulary::from_db(db(), Vocabulary::default_bins(), 20))
}

fn demo_grid() -> WavelengthGrid {
    WavelengthGrid::new(400.0, 1100.0, 5.0).expect("static grid")
}

fn ambient(exit_index: f64) -> AmbientConfig {
    AmbientConfig::new(1.0, Complex64::new(exit_index, 0.0))
}

fn parse_structure(structure_json: &str) -> Result<Structure, String> {
    let named: NamedStructure = serde_json::from_str(structure_json).map_err(|e| e.to_string())?;
    named
        .resolve(|name| db().id_of(name))
        .map_err(|e| e.to_string())
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn materials_impl() -> Result<String, String> {
    to_json(&db().names())
}

#[derive(Serialize)]
struct SpectrumOut {
    wavelength_nm: Vec<f64>,
    r: Vec<f64>,
    t: Vec<f64>,
}

fn simulate_spectrum_impl(structure_json: &str, exit_index: f64) -> Result<String, String> {
    let s = parse_structure(structure_json)?;
    let grid = demo_grid();
    let sp = simulate(db(), &s, &grid, &ambient(exit_index)).map_err(|e| e.to_string())?;
    to_json(&SpectrumOut {
        wavelength_nm: grid.values(),
        r: sp.r,
        t: sp.t,
    })
}

#[derive(Serialize)]
struct FieldOut {
    wavelength_nm: Vec<f64>,
    z_nm: Vec<f64>,
    /// Row per wavelength, column per depth.
    magnitude: Vec<Vec<f64>>,
}

fn field_map_impl(structure_json: &str, z_step_nm: f64, exit_index: f64) -> Result<String, String> {
    let s = parse_structure(structure_json)?;
    let grid = demo_grid();
    let map = field_distribution(db(), &s, &grid, &ambient(exit_index), z_step_nm)
        .map_err(|e| e.to_string())?;
    to_json(&FieldOut {
        wavelength_nm: grid.values(),
        z_nm: map.z_nm,
        magnitude: map.magnitude,
    })
}

#[derive(Serialize)]
struct TokensOut {
    ids: Vec<u32>,
    labels: Vec<String>,
    vocab_size: usize,
}

fn tokenize_structure_impl(structure_json: &str) -> Result<String, String> {
    let s = parse_structure(structure_json)?;
    let v = vocab();
    let seq = tokenize(v, &s).map_err(|e| e.to_string())?;
    let labels = seq
        .ids
        .iter()
        .map(|&id| {
            let l = vocab_label(v, id).map_err(|e| e.to_string())?;
            Ok(match l.thickness_nm {
                Some(t) => format!("{}:{t}nm", l.name),
                None => l.name,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&TokensOut {
        ids: seq.ids,
        labels,
        vocab_size: v.total_size(),
    })
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// Names of the bundled materials, as a JSON array.
#[wasm_bindgen]
pub fn materials() -> Result<String, JsValue> {
    materials_impl().map_err(js_err)
}

/// Reflection/transmission of a structure on the demo grid (400–1100 nm,
/// 5 nm steps). Input: `{"layers":[{"material":"SiO2","thickness_nm":120}]}`.
#[wasm_bindgen]
pub fn simulate_spectrum(structure_json: &str, exit_index: f64) -> Result<String, JsValue> {
    simulate_spectrum_impl(structure_json, exit_index).map_err(js_err)
}

/// |E(z, λ)| over the stack, normalized to unit incident amplitude.
#[wasm_bindgen]
pub fn field_map(structure_json: &str, z_step_nm: f64, exit_index: f64) -> Result<String, JsValue> {
    field_map_impl(structure_json, z_step_nm, exit_index).map_err(js_err)
}

/// Serializes a structure into its token sequence (nearest 10 nm bins,
/// BoS/EoS included) with human-readable labels.
#[wasm_bindgen]
pub fn tokenize_structure(structure_json: &str) -> Result<String, JsValue> {
    tokenize_structure_impl(structure_json).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_materials_load() {
        assert_eq!(db().len(), 5);
        let names: Vec<String> = serde_json::from_str(&materials_impl().unwrap()).unwrap();
        assert_eq!(names, vec!["Ag", "MgF2", "Si3N4", "SiO2", "TiO2"]);
    }

    #[test]
    fn spectrum_roundtrip() {
        let json = r#"{"layers":[{"material":"TiO2","thickness_nm":50},{"material":"SiO2","thickness_nm":90}]}"#;
        let out = simulate_spectrum_impl(json, 1.45).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["wavelength_nm"].as_array().unwrap().len(), 141);
        assert_eq!(v["r"].as_array().unwrap().len(), 141);
        for x in v["r"].as_array().unwrap() {
            let x = x.as_f64().unwrap();
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn field_shape() {
        let json = r#"{"layers":[{"material":"Ag","thickness_nm":30},{"material":"SiO2","thickness_nm":180}]}"#;
        let out = field_map_impl(json, 10.0, 1.45).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["z_nm"].as_array().unwrap().len(), 22); // ceil(210/10)+1
        assert_eq!(v["magnitude"].as_array().unwrap().len(), 141);
    }

    #[test]
    fn tokens_and_errors() {
        let json = r#"{"layers":[{"material":"SiO2","thickness_nm":137}]}"#;
        let out = tokenize_structure_impl(json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["labels"][0], "BoS");
        assert_eq!(v["labels"][1], "SiO2:140nm"); // snapped to the nearest bin
        assert_eq!(v["vocab_size"], 252); // 5 materials × 50 bins + specials

        let bad = r#"{"layers":[{"material":"Unobtainium","thickness_nm":100}]}"#;
        assert!(simulate_spectrum_impl(bad, 1.45).is_err());
        let empty = r#"{"layers":[]}"#;
        assert!(tokenize_structure_impl(empty).is_err());
    }
}

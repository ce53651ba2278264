//! Property tests for the transfer-matrix solver, checked against the
//! independent Airy-recursion oracle.

#[path = "support/airy.rs"]
mod airy;

use num_complex::Complex64;
use optolayer::materials::{Material, MaterialDb};
use optolayer::tmm::{simulate, AmbientConfig, Structure, WavelengthGrid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mixed_db() -> MaterialDb {
    let mut mats = MaterialDb::toy().materials().to_vec();
    mats.push(Material::constant("toy_high_index", 3.8, 0.02));
    mats.push(Material::constant("toy_metalish", 0.2, 3.5));
    MaterialDb::new(mats).unwrap()
}

fn random_structure(rng: &mut impl Rng, n_materials: usize, max_layers: usize) -> Structure {
    let n = rng.random_range(1..=max_layers);
    Structure::from_pairs(
        &(0..n)
            .map(|_| {
                (
                    rng.random_range(0..n_materials),
                    rng.random_range(10.0..=500.0),
                )
            })
            .collect::<Vec<_>>(),
    )
}

#[test]
fn oracle_equivalence_on_random_structures() {
    let db = mixed_db();
    let grid = WavelengthGrid::default();
    let amb = AmbientConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..300 {
        let s = random_structure(&mut rng, db.len(), 20);
        let sp = simulate(&db, &s, &grid, &amb).unwrap();
        let (r_ref, t_ref) = airy::airy_spectrum(&db, &s, &grid, &amb);
        for j in 0..grid.count {
            assert!(
                (sp.r[j] - r_ref[j]).abs() < 1e-8,
                "R mismatch {} at grid point {j} for {s:?}",
                (sp.r[j] - r_ref[j]).abs()
            );
            assert!(
                (sp.t[j] - t_ref[j]).abs() < 1e-8,
                "T mismatch {} at grid point {j} for {s:?}",
                (sp.t[j] - t_ref[j]).abs()
            );
        }
    }
}

#[test]
fn passivity_on_random_structures() {
    let db = mixed_db();
    let grid = WavelengthGrid::default();
    let amb = AmbientConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..300 {
        let s = random_structure(&mut rng, db.len(), 20);
        let sp = simulate(&db, &s, &grid, &amb).unwrap();
        for j in 0..grid.count {
            assert!(sp.r[j] >= 0.0 && sp.r[j] <= 1.0);
            assert!(sp.t[j] >= 0.0 && sp.t[j] <= 1.0);
            assert!(sp.r[j] + sp.t[j] <= 1.0 + 1e-9);
        }
    }
}

#[test]
fn grid_refinement_leaves_shared_points_unchanged() {
    let db = mixed_db();
    let amb = AmbientConfig::default();
    let s = Structure::from_pairs(&[(1, 120.0), (3, 64.0), (4, 18.0), (2, 300.0)]);
    let coarse = WavelengthGrid::new(400.0, 1100.0, 20.0).unwrap();
    let fine = WavelengthGrid::new(400.0, 1100.0, 10.0).unwrap();
    let sp_c = simulate(&db, &s, &coarse, &amb).unwrap();
    let sp_f = simulate(&db, &s, &fine, &amb).unwrap();
    for (jc, _) in coarse.values().iter().enumerate() {
        assert_eq!(sp_c.r[jc], sp_f.r[2 * jc]);
        assert_eq!(sp_c.t[jc], sp_f.t[2 * jc]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Lossless stacks conserve energy at every grid point.
    #[test]
    fn prop_lossless_energy_conservation(
        layers in prop::collection::vec((0usize..2, 10.0f64..500.0), 1..=20)
    ) {
        let db = MaterialDb::toy_lossless();
        let grid = WavelengthGrid::default();
        let amb = AmbientConfig::default();
        let s = Structure::from_pairs(&layers);
        let sp = simulate(&db, &s, &grid, &amb).unwrap();
        for j in 0..grid.count {
            prop_assert!((sp.r[j] + sp.t[j] - 1.0).abs() < 1e-10);
        }
    }

    /// Splitting one layer into two of the same material is invisible.
    #[test]
    fn prop_layer_split_invariance(
        layers in prop::collection::vec((0usize..5, 10.0f64..500.0), 1..=10),
        split_at in 0usize..10,
        frac in 0.05f64..0.95,
    ) {
        let db = mixed_db();
        let grid = WavelengthGrid::default();
        let amb = AmbientConfig::default();
        let s = Structure::from_pairs(&layers);
        let idx = split_at % s.len();

        let mut split_layers = Vec::new();
        for (i, l) in s.layers.iter().enumerate() {
            if i == idx {
                split_layers.push((l.material, l.thickness_nm * frac));
                split_layers.push((l.material, l.thickness_nm * (1.0 - frac)));
            } else {
                split_layers.push((l.material, l.thickness_nm));
            }
        }
        let split = Structure::from_pairs(&split_layers);

        let a = simulate(&db, &s, &grid, &amb).unwrap();
        let b = simulate(&db, &split, &grid, &amb).unwrap();
        for j in 0..grid.count {
            prop_assert!((a.r[j] - b.r[j]).abs() < 1e-10);
            prop_assert!((a.t[j] - b.t[j]).abs() < 1e-10);
        }
    }
}

#[test]
fn batch_of_one_and_repeats() {
    let db = mixed_db();
    let grid = WavelengthGrid::default();
    let amb = AmbientConfig::default();
    let s = Structure::from_pairs(&[(4, 35.0), (1, 210.0)]);
    let single = optolayer::simulate_batch(&db, std::slice::from_ref(&s), &grid, &amb).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0], simulate(&db, &s, &grid, &amb).unwrap());

    let triple = optolayer::simulate_batch(&db, &[s.clone(), s.clone(), s], &grid, &amb).unwrap();
    assert_eq!(triple[0], triple[1]);
    assert_eq!(triple[1], triple[2]);
}

#[test]
fn parallel_batch_equals_serial_on_1000_structures() {
    let db = mixed_db();
    let grid = WavelengthGrid::default();
    let amb = AmbientConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let batch: Vec<Structure> = (0..1000)
        .map(|_| random_structure(&mut rng, db.len(), 20))
        .collect();
    let parallel = optolayer::simulate_batch(&db, &batch, &grid, &amb).unwrap();
    for (s, got) in batch.iter().zip(&parallel) {
        assert_eq!(got, &simulate(&db, s, &grid, &amb).unwrap());
    }
}

#[test]
fn ambient_overrides_change_fresnel_limits() {
    let db = MaterialDb::toy_lossless();
    let grid = WavelengthGrid::new(600.0, 600.0, 10.0).unwrap();
    let amb = AmbientConfig::new(1.0, Complex64::new(1.0, 0.0));
    let sp = simulate(&db, &Structure::default(), &grid, &amb).unwrap();
    assert!((sp.r[0] - 0.0).abs() < 1e-15);
    assert!((sp.t[0] - 1.0).abs() < 1e-15);
}

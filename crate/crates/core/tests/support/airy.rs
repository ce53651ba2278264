//! Independent transfer-matrix cross-check: interface-by-interface Fresnel
//! coefficients combined by the Airy recursion, back to front.
//!
//! Deliberately shares no code with the production solver; it exists to
//! catch sign and bookkeeping mistakes there.

use num_complex::Complex64;
use optolayer::materials::MaterialDb;
use optolayer::tmm::{AmbientConfig, Structure, WavelengthGrid};

fn fresnel_r(a: Complex64, b: Complex64) -> Complex64 {
    (a - b) / (a + b)
}

fn fresnel_t(a: Complex64, b: Complex64) -> Complex64 {
    2.0 * a / (a + b)
}

/// (R, T) per grid wavelength via the Airy recursion.
pub fn airy_spectrum(
    db: &MaterialDb,
    s: &Structure,
    grid: &WavelengthGrid,
    amb: &AmbientConfig,
) -> (Vec<f64>, Vec<f64>) {
    let mut r_out = Vec::with_capacity(grid.count);
    let mut t_out = Vec::with_capacity(grid.count);
    for wl in grid.values() {
        // media 0..=N+1: incidence, layers, exit
        let mut indices = vec![amb.incident_index];
        let mut thicknesses = vec![0.0];
        for l in &s.layers {
            indices.push(db.refractive_index(l.material, wl).unwrap());
            thicknesses.push(l.thickness_nm);
        }
        indices.push(amb.exit_index);

        let n_layers = s.layers.len();
        // last interface: layer N (or incidence medium) against the exit
        let mut r_acc = fresnel_r(indices[n_layers], indices[n_layers + 1]);
        let mut t_acc = fresnel_t(indices[n_layers], indices[n_layers + 1]);
        for i in (0..n_layers).rev() {
            let n_layer = indices[i + 1];
            let beta =
                Complex64::new(2.0 * std::f64::consts::PI * thicknesses[i + 1] / wl, 0.0) * n_layer;
            let e1 = (Complex64::new(0.0, 1.0) * beta).exp();
            let e2 = e1 * e1;
            let r_i = fresnel_r(indices[i], n_layer);
            let t_i = fresnel_t(indices[i], n_layer);
            let denom = 1.0 + r_i * r_acc * e2;
            r_acc = (r_i + r_acc * e2) / denom;
            t_acc = t_i * t_acc * e1 / denom;
        }
        r_out.push(r_acc.norm_sqr());
        t_out.push(amb.exit_index.re / amb.incident_index.re * t_acc.norm_sqr());
    }
    (r_out, t_out)
}

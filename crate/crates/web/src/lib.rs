//! Browser bindings: each export takes plain numbers/strings and returns JSON.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sic_certify::expsim::{simulate_counts, ExperimentConfig};
use sic_certify::npa::Level;
use sic_certify::pipeline::{Certifier, RunConfig};
use sic_certify::scenario::{eval_functional, functional_by_name, local_bound, reference_setup, werner_table};
use sic_certify::svg::bloch_panels;
use sic_certify::tomo::conditioned_reconstructions;

#[derive(Serialize)]
pub struct Curve {
    pub visibility: Vec<f64>,
    pub value: Vec<f64>,
    pub local_bound: f64,
}

/// Functional value on the Werner table for `points` visibilities in [0, 1].
pub fn bell_curve(functional: &str, points: usize) -> Result<Curve, String> {
    let f = functional_by_name(functional).map_err(|e| e.to_string())?;
    let setup = reference_setup();
    let n = points.clamp(2, 1000);
    let mut visibility = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for i in 0..n {
        let v = i as f64 / (n - 1) as f64;
        let t = werner_table(&setup, v).map_err(|e| e.to_string())?;
        visibility.push(v);
        value.push(eval_functional(&f, &t).map_err(|e| e.to_string())?.value);
    }
    Ok(Curve { visibility, value, local_bound: local_bound(&f).value })
}

#[derive(Serialize)]
pub struct TomographyView {
    pub projective: Vec<[f64; 3]>,
    pub sic: Vec<[f64; 3]>,
    pub fidelity: Vec<f64>,
    pub svg: String,
}

/// Eight conditioned states reconstructed from simulated counts both ways.
pub fn tomography(visibility: f64, rate: f64, repetitions: usize, seed: u64) -> Result<TomographyView, String> {
    let cfg = ExperimentConfig { visibility, coincidence_rate: rate, repetitions, seed, ..Default::default() };
    let setup = reference_setup();
    let counts = simulate_counts(&cfg, &setup).map_err(|e| e.to_string())?;
    let rec = conditioned_reconstructions(&counts, &setup.povm_directions, false, false).map_err(|e| e.to_string())?;
    let projective: Vec<_> = rec.iter().map(|c| c.projective.bloch).collect();
    let sic: Vec<_> = rec.iter().map(|c| c.sic.bloch).collect();
    Ok(TomographyView {
        svg: bloch_panels("projective", &projective, "SIC-POVM", &sic),
        projective: projective.iter().map(|b| b.to_array()).collect(),
        sic: sic.iter().map(|b| b.to_array()).collect(),
        fidelity: rec.iter().map(|c| c.fidelity).collect(),
    })
}

/// Desk-scale certification; only the cheap levels 1 and 1+AB are offered.
pub fn certify(functional: &str, level: &str, visibility: f64, seed: u64) -> Result<String, String> {
    let level: Level = level.parse().map_err(|e: sic_certify::npa::NpaError| e.to_string())?;
    if !matches!(level, Level::One | Level::OneAB) {
        return Err("only levels 1 and 1ab run in the browser".into());
    }
    let mut cfg = RunConfig { functional: functional.to_string(), level, seed, ..Default::default() };
    cfg.experiment.visibility = visibility;
    let a = Certifier::new().run(&cfg).map_err(|e| e.to_string())?;
    a.report.to_json().map_err(|e| e.to_string())
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = bellCurve)]
pub fn bell_curve_js(functional: &str, points: usize) -> Result<String, JsError> {
    to_js(bell_curve(functional, points))
}

#[wasm_bindgen(js_name = tomography)]
pub fn tomography_js(visibility: f64, rate: f64, repetitions: usize, seed: u64) -> Result<String, JsError> {
    to_js(tomography(visibility, rate, repetitions, seed))
}

#[wasm_bindgen(js_name = certify)]
pub fn certify_js(functional: &str, level: &str, visibility: f64, seed: u64) -> Result<String, JsError> {
    certify(functional, level, visibility, seed).map_err(|e| JsError::new(&e))
}

//! Browser bindings for three cheap qmetro calculations. Each exported
//! function returns a flat `Float64Array` that the page reshapes into rows.

use std::f64::consts::PI;

use qmetro::estimation::optimal_single_shot;
use qmetro::networks::{h_factor, imaging_global_bound, imaging_local_scaling, j_opt, qubit_network_bound};
use qmetro::priors::FlatPrior;
use qmetro::probes::{make_qubit_network, Generator};
use wasm_bindgen::prelude::*;

fn js(e: qmetro::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Rows (G, J_opt, h(J_opt), h(0)) for `steps` geometries strictly inside (−1, d−1).
pub fn network_rows(d: usize, steps: usize) -> qmetro::Result<Vec<f64>> {
    if steps < 2 {
        return Err(qmetro::Error::InvalidInput("need at least two geometries".into()));
    }
    let (lo, hi) = (-1.0, d as f64 - 1.0);
    let mut out = Vec::with_capacity(4 * steps);
    for i in 0..steps {
        let g = lo + (hi - lo) * (i as f64 + 0.5) / steps as f64;
        let j = j_opt(g, d)?;
        out.extend([g, j, h_factor(j, g, d), h_factor(0.0, g, d)]);
    }
    Ok(out)
}

/// Rows (N, local bound) for N = 1..=n_max, then one trailing global bound.
pub fn imaging_rows(nbar: f64, d: usize, n_max: u32) -> qmetro::Result<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * n_max as usize + 1);
    for n in 1..=n_max {
        out.extend([n as f64, imaging_local_scaling(n, nbar, d)?.1]);
    }
    out.push(imaging_global_bound(nbar, d, None)?);
    Ok(out)
}

/// (closed form, estimator pipeline) single-shot bound of the two-qubit γ state.
pub fn qubit_pair(gamma: f64) -> qmetro::Result<[f64; 2]> {
    let probe = make_qubit_network(gamma, 2)?;
    let gen = Generator::qubit_network(probe.space())?;
    let prior = FlatPrior::new(vec![PI / 4.0; 2], vec![PI / 2.0; 2])?;
    let (_, _, bound) = optimal_single_shot(&probe, &gen, &prior)?;
    Ok([qubit_network_bound(gamma), bound])
}

#[wasm_bindgen]
pub fn network_sweep(d: usize, steps: usize) -> Result<Vec<f64>, JsError> {
    network_rows(d, steps).map_err(js)
}

#[wasm_bindgen]
pub fn imaging_scaling(nbar: f64, d: usize, n_max: u32) -> Result<Vec<f64>, JsError> {
    imaging_rows(nbar, d, n_max).map_err(js)
}

#[wasm_bindgen]
pub fn qubit_bound(gamma: f64) -> Result<Vec<f64>, JsError> {
    qubit_pair(gamma).map(|b| b.to_vec()).map_err(js)
}

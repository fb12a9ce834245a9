//! Browser bindings: kernel spectra, constraint projection and a capacity calculator.
//!
//! Every binding has a plain Rust twin returning `capbound::Result` so it can be tested natively.

use capbound::capacity::{rademacher_clubs, rademacher_spades, CapacityInput, DataSummary, LayerRecord};
use capbound::convop::ConvSpec;
use capbound::lipschitz::fft_exact_spectrum;
use capbound::pipeline::Scheme;
use capbound::project::{alternating_projections, dykstra, radial_scheme, ConstraintSet, Violations};
use capbound::tensors::{group_norm_21, KernelTensor};
use capbound::{Error, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Kernel geometry on a square circular grid.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    pub side: usize,
}

impl Geometry {
    fn spec(&self) -> Result<ConvSpec> {
        ConvSpec::circular([self.c_in, self.side, self.side], self.k, self.k)
    }

    fn kernel(&self, data: &[f64]) -> Result<KernelTensor> {
        KernelTensor::new([self.c_out, self.c_in, self.k, self.k], data.to_vec())
    }
}

/// Singular values of the circular convolution, largest first.
pub fn spectrum_of(g: Geometry, data: &[f64]) -> Result<Vec<f64>> {
    let mut v = fft_exact_spectrum(&g.kernel(data)?, &g.spec()?)?.values;
    v.sort_by(|a, b| b.total_cmp(a));
    Ok(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionView {
    pub weight: Vec<f64>,
    pub lipschitz: f64,
    pub distance: f64,
    pub moved: f64,
    pub initial: Violations,
    pub final_violations: Violations,
}

#[allow(clippy::too_many_arguments)]
pub fn project_with(
    g: Geometry,
    weight: &[f64],
    reference: &[f64],
    lipschitz_bound: f64,
    distance_bound: f64,
    scheme: &str,
    rounds: usize,
) -> Result<ProjectionView> {
    let spec = g.spec()?;
    let w = g.kernel(weight)?;
    let r = g.kernel(reference)?;
    let set = ConstraintSet::new(r.clone(), distance_bound, lipschitz_bound, spec)?;
    let (k, rep) = match scheme.parse::<Scheme>()? {
        Scheme::Alternating => alternating_projections(&w, &set, rounds)?,
        Scheme::Dykstra => dykstra(&w, &set, rounds)?,
        Scheme::Radial => radial_scheme(&w, &set, rounds)?,
    };
    Ok(ProjectionView {
        lipschitz: fft_exact_spectrum(&k, &spec)?.max,
        distance: group_norm_21(&k.sub(&r)),
        weight: k.data().to_vec(),
        moved: rep.moved,
        initial: rep.initial,
        final_violations: rep.final_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapacityView {
    pub clubs: f64,
    pub spades: f64,
}

/// Both Rademacher bounds for a chain of `depth` identical ReLU layers.
pub fn uniform_capacity(
    depth: usize,
    lipschitz_bound: f64,
    distance_bound: f64,
    params_per_layer: usize,
    margin: f64,
    n: usize,
    data_norm: f64,
) -> Result<CapacityView> {
    if depth == 0 {
        return Err(Error::Usage("depth must be >= 1".into()));
    }
    let layers = (0..depth)
        .map(|_| LayerRecord::new(lipschitz_bound, distance_bound, 1.0, params_per_layer))
        .collect();
    let input = CapacityInput::chain(layers, DataSummary { n, norm: data_norm }, margin)?;
    Ok(CapacityView {
        clubs: rademacher_clubs(&input)?,
        spades: rademacher_spades(&input)?,
    })
}

fn js(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

fn json<T: Serialize>(v: &T) -> std::result::Result<String, JsError> {
    serde_json::to_string(v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn random_kernel(c_out: usize, c_in: usize, k: usize, scale: f64, seed: u64) -> Vec<f64> {
    KernelTensor::random([c_out, c_in, k, k], scale, seed).data().to_vec()
}

#[wasm_bindgen]
pub fn kernel_spectrum(c_out: usize, c_in: usize, k: usize, side: usize, data: &[f64]) -> std::result::Result<Vec<f64>, JsError> {
    spectrum_of(Geometry { c_out, c_in, k, side }, data).map_err(js)
}

/// Projects `weight` onto the constraint set around `reference`; returns JSON.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn project_kernel(
    c_out: usize,
    c_in: usize,
    k: usize,
    side: usize,
    weight: &[f64],
    reference: &[f64],
    lipschitz_bound: f64,
    distance_bound: f64,
    scheme: &str,
    rounds: usize,
) -> std::result::Result<String, JsError> {
    let g = Geometry { c_out, c_in, k, side };
    json(&project_with(g, weight, reference, lipschitz_bound, distance_bound, scheme, rounds).map_err(js)?)
}

/// Capacity of a uniform chain; returns JSON with `clubs` and `spades`.
#[wasm_bindgen]
pub fn chain_capacity(
    depth: usize,
    lipschitz_bound: f64,
    distance_bound: f64,
    params_per_layer: usize,
    margin: f64,
    n: usize,
    data_norm: f64,
) -> std::result::Result<String, JsError> {
    json(&uniform_capacity(depth, lipschitz_bound, distance_bound, params_per_layer, margin, n, data_norm).map_err(js)?)
}

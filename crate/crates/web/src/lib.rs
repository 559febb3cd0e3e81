//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every exported function has a plain Rust counterpart in [`demo`] so the
//! logic is testable off the browser.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// `|∇u − a|` on an `nx × ny` grid over `[xmin, xmax] × [ymin, ymax]`,
/// row-major with `x₁` fastest; `NaN` marks points inside or next to the rod.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn field_map(
    length: f64,
    delta: f64,
    sigma0: f64,
    angle: f64,
    a1: f64,
    a2: f64,
    asymptotic: bool,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    nx: usize,
    ny: usize,
) -> Result<Vec<f64>, JsError> {
    let rod = demo::Rod {
        length,
        delta,
        sigma0,
        angle,
    };
    let grid = demo::grid(xmin, xmax, ymin, ymax, nx, ny);
    demo::field_map(rod, [a1, a2], asymptotic, grid).map_err(js)
}

/// `δ²(f₁² + f₂²)` on the same kind of grid.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn localization_map(
    length: f64,
    delta: f64,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
    nx: usize,
    ny: usize,
) -> Result<Vec<f64>, JsError> {
    demo::localization_map(length, delta, demo::grid(xmin, xmax, ymin, ymax, nx, ny)).map_err(js)
}

/// Synthesizes voltages on a sensor circle and fits the rod; returns JSON with
/// the true and fitted endpoints, strength, residual and sensor positions.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn fit_demo(
    length: f64,
    delta: f64,
    sigma0: f64,
    cx: f64,
    cy: f64,
    angle: f64,
    noise_rms: f64,
    seed: u64,
    bem_data: bool,
    layer_transverse: bool,
) -> Result<String, JsError> {
    let rod = demo::Rod {
        length,
        delta,
        sigma0,
        angle,
    };
    let opts = demo::FitDemo {
        center: [cx, cy],
        noise_rms,
        seed,
        bem_data,
        layer_transverse,
    };
    demo::fit_demo(rod, opts)
        .and_then(|r| serde_json::to_string(&r).map_err(|e| e.to_string()))
        .map_err(js)
}

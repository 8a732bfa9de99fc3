//! Browser bindings. Each export takes a model as JSON (the `model` object of
//! an experiment config) and returns JSON for the page to draw.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use spectral_flow::asymptotics::{
    auto_eps2, convergence_study, gap_containing, theoretical_integral_in_gap, IntegralOptions,
    StudySettings, DEFAULT_EPS1, DEFAULT_RADIUS_RULE,
};
use spectral_flow::bloch::{BandStructure, Gap};
use spectral_flow::dos::{build_table, default_grid_points, DosRoute};
use spectral_flow::model::ModelSpec;

#[derive(Debug, Serialize)]
pub struct Bands {
    /// First k-coordinate of each sample; the page plots along it in d = 1
    /// and uses it only as an index in d = 2.
    pub k: Vec<f64>,
    pub bands: Vec<Vec<f64>>,
    pub band_ranges: Vec<(f64, f64)>,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Serialize)]
pub struct IdsCurve {
    pub lambda: Vec<f64>,
    pub rho: Vec<f64>,
    pub gaps: Vec<Gap>,
}

#[derive(Debug, Serialize)]
pub struct FlowCurve {
    pub lambda: f64,
    pub gap: Gap,
    pub integral: f64,
    pub alpha: Vec<f64>,
    pub n: Vec<usize>,
    pub ratio: Vec<Option<f64>>,
}

fn parse_model(json: &str) -> Result<ModelSpec, String> {
    serde_json::from_str(json).map_err(|e| format!("model: {e}"))
}

pub fn compute_bands(model_json: &str, k_points: usize) -> Result<Bands, String> {
    let model = parse_model(model_json)?;
    if !(2..=512).contains(&k_points) {
        return Err("k_points must be between 2 and 512".into());
    }
    let bs = BandStructure::compute(&model, k_points);
    Ok(Bands {
        k: bs.k_samples.iter().map(|k| k[0]).collect(),
        bands: bs.bands.clone(),
        band_ranges: bs.band_ranges.clone(),
        gaps: bs.gap_list.clone(),
    })
}

pub fn compute_ids(model_json: &str) -> Result<IdsCurve, String> {
    let model = parse_model(model_json)?;
    let route = DosRoute::Bloch { k_points: None };
    let table =
        build_table(&model, &route, default_grid_points(model.d)).map_err(|e| e.to_string())?;
    let bs = BandStructure::compute(&model, spectral_flow::bloch::default_k_points(model.d));
    Ok(IdsCurve {
        lambda: table.lambda_grid().to_vec(),
        rho: table.rho_values().to_vec(),
        gaps: bs.gap_list,
    })
}

/// Flow counts and `R(α)` on a log-spaced α-grid. A non-finite `lambda`
/// selects the midpoint of the widest gap.
pub fn compute_flow(
    model_json: &str,
    lambda: f64,
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
) -> Result<FlowCurve, String> {
    let model = parse_model(model_json)?;
    if !(alpha_min > 0.0 && alpha_max >= alpha_min && (1..=40).contains(&points)) {
        return Err("need 0 < alpha_min <= alpha_max and 1..=40 points".into());
    }
    let err = |e: spectral_flow::Error| e.to_string();
    let (lambda, gap) = if lambda.is_finite() {
        (lambda, gap_containing(&model, lambda).map_err(err)?)
    } else {
        let bs = BandStructure::compute(&model, spectral_flow::bloch::default_k_points(model.d));
        let g = bs
            .widest_gap()
            .ok_or("the background has no spectral gap")?;
        (g.midpoint(), g)
    };
    let table = build_table(
        &model,
        &DosRoute::Bloch { k_points: None },
        default_grid_points(model.d),
    )
    .map_err(err)?;
    let integral =
        theoretical_integral_in_gap(&table, &model, lambda, &gap, IntegralOptions::default())
            .map_err(err)?;
    let alphas: Vec<f64> = (0..points)
        .map(|i| {
            let t = if points == 1 {
                0.0
            } else {
                i as f64 / (points - 1) as f64
            };
            alpha_min * (alpha_max / alpha_min).powf(t)
        })
        .collect();
    let settings = StudySettings {
        eps1: DEFAULT_EPS1,
        eps2: auto_eps2(&model, lambda, &gap),
        radius_rule: DEFAULT_RADIUS_RULE,
    };
    let report =
        convergence_study(&model, lambda, &gap, &alphas, settings, &integral).map_err(err)?;
    Ok(FlowCurve {
        lambda,
        gap,
        integral: integral.value,
        alpha: alphas,
        n: report.records.iter().map(|r| r.n).collect(),
        ratio: report.ratios(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn bands(model_json: &str, k_points: usize) -> Result<String, JsError> {
    to_js(compute_bands(model_json, k_points))
}

#[wasm_bindgen]
pub fn ids_curve(model_json: &str) -> Result<String, JsError> {
    to_js(compute_ids(model_json))
}

#[wasm_bindgen]
pub fn flow_curve(
    model_json: &str,
    lambda: f64,
    alpha_min: f64,
    alpha_max: f64,
    points: usize,
) -> Result<String, JsError> {
    to_js(compute_flow(
        model_json, lambda, alpha_min, alpha_max, points,
    ))
}

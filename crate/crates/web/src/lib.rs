//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export works on the bundled dose-response data and returns JSON
//! (or a plain number array) for the page to draw.

use multilink::datasets::gennings1994;
use multilink::fitting::{fit, variance_inflation};
use multilink::model::alpha_name;
use multilink::percentile::{percentile_regions, solve_percentile, trace_regions, BoundaryRecord};
use multilink::prelude::{
    FitOptions, FitResult, GeneratingFamily, ModelSpec, MultinomialLink, PercentileQuery, RegionMethod,
    Standardization, TraceGrid,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    /// Standard error with the link parameters held fixed (`None` for link
    /// parameters).
    pub se_alpha_fixed: Option<f64>,
    pub inflation: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct FitSummary {
    pub standardization: &'static str,
    pub active: Vec<String>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub aic: f64,
    pub parameters: Vec<ParameterRow>,
}

#[derive(Debug, Serialize)]
pub struct TracedRegion {
    pub method: &'static str,
    pub threshold: Option<f64>,
    pub columns: Vec<BoundaryRecord>,
}

#[derive(Debug, Serialize)]
pub struct RegionSummary {
    pub window: Vec<(f64, f64)>,
    pub x0: Option<Vec<f64>>,
    pub regions: Vec<TracedRegion>,
    pub failures: Vec<String>,
}

fn spec() -> ModelSpec {
    ModelSpec::first_order(2, 2)
}

fn standardization(name: &str) -> Result<Standardization, String> {
    match name {
        "at_intercepts" => Ok(Standardization::AtIntercepts),
        "at_zero" => Ok(Standardization::AtZero),
        other => Err(format!("unknown standardization `{other}`")),
    }
}

/// Parse a mask such as `1,1;0,0` (one group of two flags per category).
pub fn parse_mask(mask: &str) -> Result<Vec<[bool; 2]>, String> {
    mask.split(';')
        .map(|group| {
            let flags: Vec<bool> = group
                .split(',')
                .map(|f| match f.trim() {
                    "1" | "true" => Ok(true),
                    "0" | "false" => Ok(false),
                    other => Err(format!("bad flag `{other}`")),
                })
                .collect::<Result<_, _>>()?;
            match flags[..] {
                [a, b] => Ok([a, b]),
                _ => Err(format!("expected two flags per category, got `{group}`")),
            }
        })
        .collect()
}

fn link(standardization_name: &str, mask: &str) -> Result<MultinomialLink, String> {
    let families = parse_mask(mask)?
        .into_iter()
        .map(GeneratingFamily::czado)
        .collect::<Vec<_>>();
    if families.len() != 2 {
        return Err(format!(
            "the bundled data has 2 categories, mask has {}",
            families.len()
        ));
    }
    Ok(MultinomialLink::new(families, standardization(standardization_name)?))
}

/// Fit the bundled data with the chosen standardization and active mask.
pub fn fit_bundled(standardization_name: &str, mask: &str) -> Result<FitSummary, String> {
    let link = link(standardization_name, mask)?;
    let f = fit(&gennings1994(), &spec(), &link, &FitOptions::default()).map_err(|e| e.to_string())?;
    let se = f.standard_errors();
    let se_fixed = f.alpha_fixed_standard_errors();
    let inflation = variance_inflation(&f, &f);
    let estimates = f.delta.to_vec();
    let p = f.p();
    let parameters = f
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| ParameterRow {
            name: name.clone(),
            estimate: estimates[i],
            se: se[i],
            se_alpha_fixed: (i < p).then(|| se_fixed[i]),
            inflation: (i < p).then(|| inflation[i]),
        })
        .collect();
    Ok(FitSummary {
        standardization: if standardization_name == "at_zero" {
            "at_zero"
        } else {
            "at_intercepts"
        },
        active: f
            .link
            .active_params()
            .into_iter()
            .map(|(j, k)| alpha_name(j, k))
            .collect(),
        converged: f.converged,
        iterations: f.iterations,
        deviance: f.deviance,
        aic: f.aic,
        parameters,
    })
}

/// Trace all three regions for `pi0` under the intercept-standardized fit
/// with both tail parameters of the first category.
pub fn regions_bundled(pi0: [f64; 2], tau_prime: f64, n1: usize, n2: usize) -> Result<RegionSummary, String> {
    let data = gennings1994();
    let f = fit(
        &data,
        &spec(),
        &link("at_intercepts", "1,1;0,0")?,
        &FitOptions::default(),
    )
    .and_then(FitResult::require_converged)
    .map_err(|e| e.to_string())?;
    let mut query = PercentileQuery::new(pi0.to_vec());
    query.tau_prime = tau_prime;
    query.validate().map_err(|e| e.to_string())?;
    let grid = TraceGrid {
        n1: n1.clamp(2, 101),
        n2: n2.clamp(2, 1000),
    };

    let mut regions = Vec::new();
    let mut failures = Vec::new();
    for methods in [
        &[RegionMethod::Conservative][..],
        &[RegionMethod::LikelihoodRatio, RegionMethod::ScoreTest],
    ] {
        match percentile_regions(&data, &f, &spec(), &query, &FitOptions::default(), methods) {
            Ok(r) => regions.extend(r),
            Err(e) => failures.extend(methods.iter().map(|m| format!("{m}: {e}"))),
        }
    }
    let traces = trace_regions(&regions, &query.window, &grid).map_err(|e| e.to_string())?;
    Ok(RegionSummary {
        window: query.window.clone(),
        x0: solve_percentile(&f, &spec(), &query.pi0).ok().map(|p| p.x),
        regions: regions
            .iter()
            .zip(traces)
            .map(|(r, columns)| TracedRegion {
                method: r.method.key(),
                threshold: r.threshold.is_finite().then_some(r.threshold),
                columns,
            })
            .collect(),
        failures,
    })
}

/// `G(alpha, eta)` of the two-sided power family at `n` points of
/// `[eta_min, eta_max]`.
pub fn link_values(alpha_upper: f64, alpha_lower: f64, eta_min: f64, eta_max: f64, n: usize) -> Vec<f64> {
    let family = GeneratingFamily::czado([true, true]);
    multilink::percentile::linspace(eta_min, eta_max, n)
        .into_iter()
        .map(|eta| family.eval(&[alpha_upper, alpha_lower], eta))
        .collect()
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

/// JSON fit summary; `mask` is e.g. `"1,1;0,0"`.
#[wasm_bindgen(js_name = fitSummary)]
pub fn fit_summary(standardization: &str, mask: &str) -> Result<String, JsValue> {
    to_js(fit_bundled(standardization, mask))
}

/// JSON boundaries of the three regions for the percentile `(pi1, pi2)`.
#[wasm_bindgen(js_name = traceRegions)]
pub fn trace(pi1: f64, pi2: f64, tau_prime: f64, n1: usize, n2: usize) -> Result<String, JsValue> {
    to_js(regions_bundled([pi1, pi2], tau_prime, n1, n2))
}

#[wasm_bindgen(js_name = linkCurve)]
pub fn link_curve(alpha_upper: f64, alpha_lower: f64, eta_min: f64, eta_max: f64, n: usize) -> Vec<f64> {
    link_values(alpha_upper, alpha_lower, eta_min, eta_max, n)
}

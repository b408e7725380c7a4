//! Browser bindings for a few napsh operations.
//!
//! Every export takes the model as JSON text and returns a JSON string of the
//! form `{"ok": true, ...}` or `{"ok": false, "error": "..."}`.

use napsh_core::envelope::{envelope as solve, psh_check, PshConstraintSystem};
use napsh_core::io::{parse_model, parse_point, ModelDescription};
use napsh_core::rational::format_rational;
use napsh_core::Rational;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn respond(result: Result<Value, String>) -> String {
    let value = match result {
        Ok(Value::Object(mut fields)) => {
            fields.insert("ok".into(), true.into());
            Value::Object(fields)
        }
        Ok(other) => json!({ "ok": true, "value": other }),
        Err(error) => json!({ "ok": false, "error": error }),
    };
    value.to_string()
}

fn strings(v: &[Rational]) -> Vec<String> {
    v.iter().map(format_rational).collect()
}

fn model(text: &str) -> Result<ModelDescription, String> {
    parse_model(text).map_err(|e| e.to_string())
}

fn system(m: &ModelDescription) -> Result<PshConstraintSystem, String> {
    let theta = m.require_theta().map_err(|e| e.to_string())?;
    let data = m.require_intersection().map_err(|e| e.to_string())?;
    PshConstraintSystem::new(m.root().clone(), theta.clone(), data.clone()).map_err(|e| e.to_string())
}

/// Loads a model and lists what it contains.
#[wasm_bindgen]
pub fn summarize(model_json: &str) -> String {
    respond(model(model_json).map(|m| {
        json!({
            "id": m.complex.id(),
            "dimension": m.complex.dim(),
            "components": m.complex.len(),
            "subdivisions": m.subdivisions.iter().map(|s| s.id().to_string()).collect::<Vec<_>>(),
            "functions": m.functions.keys().collect::<Vec<_>>(),
        })
    }))
}

/// Checks a root coefficient vector such as `"0,2"`.
#[wasm_bindgen]
pub fn check_psh(model_json: &str, coefficients: &str) -> String {
    respond((|| {
        let m = model(model_json)?;
        let sys = system(&m)?;
        let c = parse_point(coefficients).map_err(|e| e.to_string())?;
        let report = psh_check(&c, &sys).map_err(|e| e.to_string())?;
        let slacks: Vec<Value> = report
            .slacks
            .iter()
            .map(|(curve, s)| json!({ "curve": curve, "slack": format_rational(s) }))
            .collect();
        Ok(json!({
            "psh": report.nef,
            "witness": report.witness.map(|(curve, s)| json!({ "curve": curve, "slack": format_rational(&s) })),
            "slacks": slacks,
        }))
    })())
}

/// Envelope of a named obstacle at one point such as `"0,1"`.
#[wasm_bindgen]
pub fn envelope(model_json: &str, obstacle: &str, point: &str) -> String {
    respond((|| {
        let m = model(model_json)?;
        let sys = system(&m)?;
        let u = m.function(obstacle).map_err(|e| e.to_string())?;
        let x = parse_point(point).map_err(|e| e.to_string())?;
        m.complex.check_dense(&x).map_err(|e| e.to_string())?;
        let result = solve(&sys, u, &[x]).map_err(|e| e.to_string())?;
        let q = &result.results[0];
        Ok(json!({
            "point": strings(&q.point),
            "value": format_rational(&q.value),
            "coefficients": strings(&q.coefficients),
            "active_curves": q.active_curves,
        }))
    })())
}

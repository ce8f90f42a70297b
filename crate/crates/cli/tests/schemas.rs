use std::path::{Path, PathBuf};

use linbias_cli::{load_preset, pipeline, preset_names, preset_path};
use serde_json::{json, Value};

fn schema(name: &str) -> jsonschema::Validator {
    let path = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/schemas"))
        .join(format!("{name}.v1.schema.json"));
    let text = std::fs::read_to_string(&path).unwrap();
    jsonschema::validator_for(&serde_json::from_str(&text).unwrap()).unwrap()
}

fn json_file(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, doc: &Value, what: &str) {
    let errors: Vec<String> = v
        .iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{what}: {errors:#?}");
}

#[test]
fn presets_match_the_config_schema() {
    let v = schema("config");
    for name in preset_names().unwrap() {
        assert_valid(&v, &json_file(&preset_path(&name)), &name);
    }
}

#[test]
fn config_schema_rejects_unknown_keys_and_bad_alphas() {
    let v = schema("config");
    let mut doc = json_file(&preset_path("fig1-regression"));
    doc["experiments"][0]["extra"] = json!(1);
    assert!(!v.is_valid(&doc));
    let mut doc = json_file(&preset_path("fig1-regression"));
    doc["flow"]["alphas"] = json!([0.0]);
    assert!(!v.is_valid(&doc));
}

#[test]
fn outputs_match_their_schemas() {
    let fs = schema("final_state");
    let pr = schema("predictions");
    let rep = schema("report");
    for name in [
        "fig1-regression",
        "q-regression",
        "two-layer-regression",
        "single-point-classification",
        "commuting-sensing",
    ] {
        let dir = tempfile::tempdir().unwrap();
        let res = load_preset(name).unwrap();
        pipeline::run_compare(&res, dir.path()).unwrap();
        if !res.config.experiments.is_empty() {
            assert_valid(&fs, &json_file(&dir.path().join("final_state.json")), name);
        }
        assert_valid(&pr, &json_file(&dir.path().join("predictions.json")), name);
        assert_valid(&rep, &json_file(&dir.path().join("report.json")), name);
    }
    let dir = tempfile::tempdir().unwrap();
    pipeline::run_sweep(&load_preset("min-l2-sweep").unwrap(), dir.path()).unwrap();
    assert_valid(
        &schema("sweep"),
        &json_file(&dir.path().join("sweep.json")),
        "sweep",
    );
}

//! Configuration, commands and output documents of the `linbias` binary.
//!
//! Every command reads an [`config::ExperimentConfig`] (JSON, schema
//! `linbias.config.v1`) and writes into an output directory:
//!
//! * `simulate`: one trajectory CSV per (experiment, α) and `final_state.json`;
//! * `predict`: `predictions.json`;
//! * `compare`: both of the above plus `report.json`;
//! * `sweep`: trajectories, predictions, `sweep.csv` and `sweep.json`.
//!
//! Exit codes: 0 success, 1 config, 2 numeric, 3 I/O, 4 comparison failed.

pub mod config;
pub mod error;
pub mod pipeline;

use std::path::PathBuf;

pub use config::{ExperimentConfig, Resolved};
pub use error::{CliError, CliResult};

/// Directory holding the shipped presets: `$LINBIAS_PRESET_DIR` if set,
/// otherwise the `presets` directory next to this crate's manifest.
pub fn preset_dir() -> PathBuf {
    std::env::var_os("LINBIAS_PRESET_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/presets")))
}

pub fn preset_path(name: &str) -> PathBuf {
    preset_dir().join(format!("{name}.json"))
}

/// Names of the shipped presets, sorted.
pub fn preset_names() -> CliResult<Vec<String>> {
    let dir = preset_dir();
    let mut names = Vec::new();
    for entry in std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))? {
        let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

pub fn load_preset(name: &str) -> CliResult<Resolved> {
    let path = preset_path(name);
    if !path.exists() {
        return Err(CliError::Config(format!("unknown preset {name:?}")));
    }
    ExperimentConfig::load(&path)
}

use std::fs;
use std::path::{Path, PathBuf};

use iltber_core::data::{write_csv, write_jsonl, InputFormat};
use iltber_core::synth::{gen_nested_dataset, FleetConfig};

use crate::error::{CliError, CliResult};
use crate::manifest::{display_path, timestamp, FileDigest, RunManifest};

/// `<out>.manifest.json`
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}

pub(super) fn run(config: &Path, out: &Path, seed: Option<u64>, stamp: Option<&str>) -> CliResult<String> {
    let text = fs::read(config).map_err(|source| CliError::Read { path: config.into(), source })?;
    let text = String::from_utf8(text).map_err(|_| CliError::usage(format!("{}: not UTF-8", config.display())))?;
    let mut cfg = FleetConfig::from_json(&text).map_err(|e| CliError::usage(format!("{}: {e}", config.display())))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let stamp = timestamp(stamp)?;
    let dataset = gen_nested_dataset(&cfg).map_err(|e| CliError::usage(e.to_string()))?;
    let body = match InputFormat::from_path(out) {
        InputFormat::Jsonl => write_jsonl(&dataset),
        InputFormat::Csv => write_csv(&dataset),
    };
    fs::write(out, &body).map_err(|e| CliError::write(out, e))?;

    let mut manifest = RunManifest::new(
        "synth",
        serde_json::to_value(&cfg).expect("config serializes"),
        stamp,
    );
    manifest.inputs.push(FileDigest::of(display_path(config), text.as_bytes()));
    manifest.seeds.push(cfg.seed);
    manifest.outputs.push(FileDigest::of(display_path(out), body.as_bytes()));
    let mpath = manifest_path(out);
    fs::write(&mpath, manifest.to_json()).map_err(|e| CliError::write(&mpath, e))?;
    eprintln!(
        "wrote {} chips ({} forming, {} cycle records) to {}",
        dataset.chips().len(),
        dataset.forming().len(),
        dataset.cycles().len(),
        out.display()
    );
    Ok(String::new())
}

//! Sidecar manifests: every artifact gets `<name>.manifest.json` recording
//! the format version, the command that produced it, the seed and a hash of
//! the config it was produced from.

use mrnet_core::io::write_atomic;
use mrnet_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::Path;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
struct SidecarManifest<'a> {
    format_version: u32,
    command: &'a str,
    seed: u64,
    config_sha256: &'a str,
}

pub fn config_hash(config_bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_bytes);
    format!("{:x}", hasher.finalize())
}

/// Write `<path>.manifest.json` next to an artifact.
pub fn write_sidecar(path: &Path, command: &str, seed: u64, config_sha256: &str) -> Result<()> {
    let manifest = SidecarManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        command,
        seed,
        config_sha256,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| mrnet_core::Error::data(e.to_string()))?;
    bytes.push(b'\n');
    let sidecar = path.with_file_name(format!(
        "{}.manifest.json",
        path.file_name().unwrap_or_default().to_string_lossy()
    ));
    write_atomic(&sidecar, &bytes)
}

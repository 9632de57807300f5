//! Run manifest. Everything in it is a function of the inputs and the
//! settings, so two runs on the same data produce identical manifests.
//! Wall-clock timings go to a separate sidecar.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{io_context, Result};
use crate::stages::{create, Counts};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub identity: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    pub counts: Counts,
}

/// Users surviving each step for one identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunnelRow {
    pub identity: String,
    pub users_ingested: u64,
    pub users_kept: u64,
    pub treated: u64,
    pub control_candidates: u64,
    pub with_covariates: u64,
    pub matched_treated: u64,
    pub unmatched_treated: u64,
    pub matched_controls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub funnel: Vec<FunnelRow>,
    pub outputs: BTreeMap<String, String>,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = io_context(File::open(path), path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = io_context(f.read(&mut buf), path)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Digest of every file below `dir` keyed by its `/`-separated relative
/// path, leaving out the manifest and timings themselves.
pub fn digest_tree(dir: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        for entry in io_context(std::fs::read_dir(dir), dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
                continue;
            }
            let rel = path.strip_prefix(root).expect("below root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key != MANIFEST_FILE && key != TIMINGS_FILE {
                out.insert(key, sha256_file(&path)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

//! Number formatting and file helpers shared by the exporters.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::model::MarketSpec;

/// Plain decimal with 12 significant digits; `0` prints as `0`.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{}", if v == 0.0 { 0.0 } else { v });
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (11 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

/// First 16 hex digits of the SHA-256 of the spec's canonical JSON.
pub fn spec_hash(spec: &MarketSpec) -> String {
    let digest = Sha256::digest(spec.to_json().as_bytes());
    hex::encode(&digest[..8])
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

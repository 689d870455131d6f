use std::path::Path;

use anyhow::{bail, Context as _};
use lisps_core::ledger::Keypair;

/// Resolves a `--key` argument: a file holding a 64-hex-digit seed, a literal 64-hex-digit
/// seed, or a name whose seed is derived deterministically (simulation only).
pub fn load_key(spec: &str) -> anyhow::Result<Keypair> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        std::fs::read_to_string(path).with_context(|| format!("read key {spec}"))?
    } else {
        spec.to_string()
    };
    let text = text.trim();
    if text.len() == 64 && text.bytes().all(|b| b.is_ascii_hexdigit()) {
        let mut seed = [0u8; 32];
        hex::decode_to_slice(text, &mut seed)?;
        return Ok(Keypair::from_seed(seed));
    }
    if path.is_file() {
        bail!("key file {spec} must hold a 64-digit hex seed");
    }
    if text.is_empty() {
        bail!("empty key");
    }
    Ok(Keypair::from_name(text))
}

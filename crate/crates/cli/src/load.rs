use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Reads a JSON configuration. Without a file the document is `{}`, so
/// every field takes its default and only the seed has to be supplied.
/// `--seed` replaces the document's seed.
pub fn config<T: DeserializeOwned>(path: Option<&Path>, seed: Option<u64>) -> Result<T, Failure> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?,
        None => "{}".to_string(),
    };
    let name = path.map_or_else(|| "<defaults>".to_string(), |p| p.display().to_string());
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(format!("{name}: line {}, column {}: {e}", e.line(), e.column())))?;
    let Some(seed) = seed else {
        return serde_json::from_str(&text).map_err(|e| {
            let hint = if e.to_string().contains("missing field `seed`") { " (pass --seed)" } else { "" };
            Failure::Config(format!("{name}: line {}, column {}: {e}{hint}", e.line(), e.column()))
        });
    };
    let obj = value
        .as_object_mut()
        .ok_or_else(|| Failure::Config(format!("{name}: the configuration must be a JSON object")))?;
    obj.insert("seed".into(), Value::from(seed));
    serde_json::from_value(value).map_err(|e| Failure::Config(format!("{name}: {e}")))
}

/// Hash of the resolved configuration, used as the output directory name.
pub fn run_id<T: Serialize>(kind: &str, cfg: &T) -> String {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update(serde_json::to_vec(cfg).expect("configuration serializes"));
    hex::encode(&h.finalize()[..8])
}

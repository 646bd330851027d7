use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use nesphere::{Error, Result};

/// Everything needed to rerun a subcommand and check its inputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub parameters: serde_json::Value,
    /// Input path to the SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub seed: Option<u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(subcommand: &str, parameters: &impl Serialize, seed: Option<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_owned(),
            parameters: serde_json::to_value(parameters).expect("parameters serialize"),
            inputs: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn digest(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }

    /// First line of every report file.
    pub fn header_line(&self) -> String {
        format!(
            "# nesphere {} manifest sha256:{}",
            self.subcommand,
            self.digest()
        )
    }

    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

use std::io::Write;
use std::path::Path;

use mor_core::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Common fields of every report; no timestamps so reruns are byte-identical.
#[derive(Debug, Serialize)]
pub struct Header {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
}

impl Header {
    pub fn new(command: &'static str, config_sha256: String) -> Self {
        Header { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command, config_sha256 }
    }
}

#[derive(Serialize)]
pub struct Report<'a, T: Serialize> {
    #[serde(flatten)]
    pub header: &'a Header,
    #[serde(flatten)]
    pub body: T,
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Pretty JSON with a trailing newline, to `path` or stdout.
pub fn emit<T: Serialize>(header: &Header, body: T, path: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&Report { header, body })?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use crate::{CliError, CliResult};

pub fn contract(msg: impl Into<String>) -> CliError {
    CliError::Run(omnipipe::Error::Contract(msg.into()))
}

pub fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))?;
    if !p.is_file() {
        return Err(CliError::Usage(format!(
            "--{flag}: {} is not a readable file",
            p.display()
        )));
    }
    Ok(p)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

/// Parses a JSON lines file, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> CliResult<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| contract(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}

pub fn to_jsonl<T: serde::Serialize>(items: &[T]) -> CliResult<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it).map_err(omnipipe::Error::from)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(value).map_err(omnipipe::Error::from)? + "\n")
}

/// Writes to `--output` atomically, or to stdout.
pub fn emit(output: &Option<PathBuf>, body: &str) -> CliResult<()> {
    match output {
        Some(p) => Ok(omnipipe::fsio::write_atomic(p, body.as_bytes())?),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

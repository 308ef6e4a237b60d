use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::{CliError, CliResult};

/// `{"seed": u64, "<subcommand>": {flag: value, ...}, ...}`
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self { root: Map::new() }
    }

    pub fn load(path: &Path, known_sections: &[&str]) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let root = match serde_json::from_str::<Value>(&text) {
            Ok(Value::Object(m)) => m,
            Ok(_) => return Err(CliError::Usage("config must be a JSON object".into())),
            Err(e) => return Err(CliError::Usage(format!("config {}: {e}", path.display()))),
        };
        for k in root.keys() {
            if k != "seed" && !known_sections.contains(&k.as_str()) {
                return Err(CliError::Usage(format!("config: unknown section {k:?}")));
            }
        }
        Ok(Self { root })
    }

    pub fn seed(&self) -> CliResult<Option<u64>> {
        match self.root.get("seed") {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::Usage("config: seed must be a non-negative integer".into())),
        }
    }

    pub fn section(&self, name: &str) -> Option<&Value> {
        self.root.get(name)
    }
}

pub fn from_command_line(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Layers a config section under explicit flags: keys present in the
/// section replace values that came from clap defaults.
pub fn resolve<T: Serialize + DeserializeOwned>(
    parsed: &T,
    section: Option<&Value>,
    m: &ArgMatches,
    name: &str,
) -> CliResult<T> {
    let Some(section) = section else {
        return serde_json::to_value(parsed)
            .and_then(serde_json::from_value)
            .map_err(|e| CliError::Usage(e.to_string()));
    };
    let section = section
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("config section {name:?} must be an object")))?;
    let mut value = serde_json::to_value(parsed).map_err(|e| CliError::Usage(e.to_string()))?;
    let obj = value.as_object_mut().expect("argument structs serialize to objects");
    for (k, v) in section {
        let key = k.replace('-', "_");
        if !obj.contains_key(&key) {
            return Err(CliError::Usage(format!("config: unknown key {name}.{k}")));
        }
        if !from_command_line(m, &key) {
            obj.insert(key, v.clone());
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config section {name}: {e}")))
}

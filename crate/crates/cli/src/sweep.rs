//! `--sweep m=4,9,16`: run a command once per sensor count, substituting
//! `{m}` in path arguments.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sweep {
    pub values: Vec<usize>,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let list = s
            .strip_prefix("m=")
            .ok_or_else(|| format!("sweep must look like m=4,9,16, got `{s}`"))?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad sensor count `{v}`")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if values.is_empty() || values.contains(&0) {
            return Err("sweep needs positive sensor counts".into());
        }
        Ok(Sweep { values })
    }
}

pub fn substitute(path: &Path, m: usize) -> PathBuf {
    PathBuf::from(path.to_string_lossy().replace("{m}", &m.to_string()))
}

/// Every swept path must carry a `{m}` placeholder, or runs would overwrite
/// each other.
pub fn require_placeholder(flag: &str, path: &Path) -> Result<()> {
    if !path.to_string_lossy().contains("{m}") {
        bail!("{flag} must contain `{{m}}` when --sweep is used");
    }
    Ok(())
}

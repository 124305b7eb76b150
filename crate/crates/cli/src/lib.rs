//! Library side of the `tfr` command: one module per subcommand plus the
//! shared manifest and rendering helpers.

pub mod commands;
pub mod manifest;
pub mod render;
pub mod sweep;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tfr_core::Layout;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "TFR_OUT";

/// Resolve `--layout` (shipped name or file) with an optional grid override.
pub fn load_layout(name_or_path: &str, grid_n: Option<usize>) -> Result<Layout> {
    let layout = Layout::load(name_or_path).with_context(|| format!("loading layout `{name_or_path}`"))?;
    match grid_n {
        Some(n) if n != layout.grid_n => Ok(layout.with_grid_n(n)?),
        _ => Ok(layout),
    }
}

/// An explicit `--out` wins; otherwise `$TFR_OUT/<default_name>`.
pub fn resolve_out(out: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    if let Some(p) = out {
        return Ok(p.to_path_buf());
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) => Ok(PathBuf::from(root).join(default_name)),
        None => bail!("no --out given and {OUT_ENV} is not set"),
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// `<path>.manifest.json` next to a single-file output.
pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn exec(serial: bool) -> tfr_core::Exec {
    if serial {
        tfr_core::Exec::Sequential
    } else {
        tfr_core::Exec::Parallel
    }
}

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use tfr_core::dataset::{generate_dataset, generate_special_set, Dataset, DatasetReader};
use tfr_core::solver::sink_flux;

use crate::manifest::ManifestBuilder;
use crate::{exec, load_layout, resolve_out, sidecar};

/// Samples whose energy balance is spot-checked after generation.
const SPOT_CHECKS: usize = 8;

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    /// Shipped layout name (case1, case2) or path to a layout file.
    #[arg(long)]
    pub layout: String,
    /// Override the layout's grid resolution.
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Number of general samples.
    #[arg(long, required_unless_present = "special", conflicts_with = "special")]
    pub n: Option<u64>,
    /// Generate the 2^n all-on/all-off set instead.
    #[arg(long)]
    pub special: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset file.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solve samples one at a time on the calling thread.
    #[arg(long)]
    pub serial: bool,
}

pub fn generate(args: &GenerateArgs) -> Result<Dataset> {
    let layout = load_layout(&args.layout, args.grid_n)?;
    let kind = if args.special { "special" } else { "general" };
    let out = resolve_out(args.out.as_deref(), &format!("{kind}-n{}-seed{}.tfrd", layout.grid_n, args.seed))?;
    let mut man = ManifestBuilder::start("generate", !args.serial);
    man.config(args)?;
    man.seed("dataset", args.seed);
    man.phase("solve");
    log::info!(
        "solving {} samples on a {n}×{n} grid",
        if args.special { format!("2^{}", layout.n_sources()) } else { args.n.unwrap_or(0).to_string() },
        n = layout.grid_n
    );
    let ds = if args.special {
        generate_special_set(&layout, exec(args.serial))?
    } else {
        generate_dataset(&layout, args.n.unwrap_or(0), args.seed, exec(args.serial))?
    };
    man.phase("write");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        crate::ensure_dir(dir)?;
    }
    ds.write(&out)?;
    let back = DatasetReader::open(&out)?;
    if back.header() != &ds.header {
        bail!("dataset header did not read back identically from {}", out.display());
    }

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for s in ds.samples.iter().take(SPOT_CHECKS) {
        let injected = layout.analytic_power(&s.powers);
        if injected > 0.0 {
            worst = worst.max((sink_flux(&s.field, &layout) - injected).abs() / injected);
            checked += 1;
        }
    }
    println!(
        "wrote {} {kind} samples ({}) to {}",
        ds.len(),
        ds.header.id(),
        out.display()
    );
    println!("energy balance on {checked} samples: worst relative error {:.3}%", 100.0 * worst);
    man.note(format!("energy-balance spot check: {checked} samples, worst relative error {worst:.3e}"));
    man.output("dataset", &out)?;
    man.finish(&sidecar(&out))?;
    Ok(ds)
}

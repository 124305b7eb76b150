use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use tfr_core::observation::select_points;
use tfr_core::{ObservationPlan, Strategy};

use crate::manifest::ManifestBuilder;
use crate::sweep::{require_placeholder, substitute, Sweep};
use crate::{load_layout, resolve_out, sidecar};

#[derive(Args, Debug, Clone, Serialize)]
pub struct ObserveArgs {
    /// uniform, random or physics.
    #[arg(long)]
    pub strategy: Strategy,
    /// Number of sensors.
    #[arg(long, required_unless_present = "sweep")]
    pub m: Option<usize>,
    /// Run once per sensor count, e.g. `m=4,9,16`; `{m}` in --out is replaced.
    #[arg(long, conflicts_with = "m")]
    #[serde(skip)]
    pub sweep: Option<Sweep>,
    #[arg(long)]
    pub layout: String,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Seed for random selection.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output plan file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn observe(args: &ObserveArgs) -> Result<Vec<ObservationPlan>> {
    let layout = load_layout(&args.layout, args.grid_n)?;
    let counts = match (&args.sweep, args.m) {
        (Some(s), _) => s.values.clone(),
        (None, Some(m)) => vec![m],
        (None, None) => bail!("give --m or --sweep"),
    };
    let mut plans = Vec::new();
    for m in counts {
        let template = resolve_out(args.out.as_deref(), &format!("plan-{}-m{{m}}.toml", args.strategy))?;
        if args.sweep.is_some() {
            require_placeholder("--out", &template)?;
        }
        let out = substitute(&template, m);
        let mut man = ManifestBuilder::start("observe", false);
        man.config(ObserveArgs {
            m: Some(m),
            out: Some(out.clone()),
            ..args.clone()
        })?;
        man.seed("selection", args.seed);
        let plan = select_points(args.strategy, m, &layout, args.seed)?;
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            crate::ensure_dir(dir)?;
        }
        plan.save(&out)?;
        let back = ObservationPlan::load(&out)?;
        if back != plan {
            bail!("plan {} did not read back identically", out.display());
        }
        let boundary = plan
            .points
            .iter()
            .filter(|&&(r, c)| r == 0 || c == 0 || r + 1 == layout.grid_n || c + 1 == layout.grid_n)
            .count();
        println!(
            "{}: {} points ({} interior, {} boundary) -> {}",
            plan.id(),
            plan.len(),
            plan.len() - boundary,
            boundary,
            out.display()
        );
        man.output("plan", &out)?;
        man.finish(&sidecar(&out))?;
        plans.push(plan);
    }
    Ok(plans)
}

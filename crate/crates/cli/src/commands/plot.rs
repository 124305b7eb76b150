use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;
use tfr_core::baselines::{GaussInterpConfig, KrigingConfig};
use tfr_core::observation::extract_observations;
use tfr_core::Grid;

use super::eval::{baseline, label_of, load_reconstructor, BaselineChoice, ModelSpec};
use super::{load_dataset, load_plan};
use crate::manifest::ManifestBuilder;
use crate::render::{heatmap_png, profile_svg};
use crate::{exec, load_layout, resolve_out};

/// Bottom-edge window shown in the profile plot, in metres.
pub const PROFILE_WINDOW: (f64, f64) = (0.04, 0.06);

#[derive(Args, Debug, Clone, Serialize)]
pub struct PlotArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Sample index within the dataset.
    #[arg(long)]
    pub sample: usize,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub layout: String,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Trained models, `[label=]unet.tfrm[+mlp.tfrm]`; repeatable.
    #[arg(long = "model")]
    pub models: Vec<ModelSpec>,
    /// Baselines to plot alongside; repeatable.
    #[arg(long = "baseline", value_enum)]
    pub baselines: Vec<BaselineChoice>,
    /// Pixels per grid node in the PNG maps.
    #[arg(long, default_value_t = 4)]
    pub scale: u32,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// File name stem for a model label: lowercase, separators collapsed to `-`.
pub fn slug(label: &str) -> String {
    let mut s = String::new();
    for ch in label.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('-') && !s.is_empty() {
            s.push('-');
        }
    }
    let s = s.trim_end_matches('-').to_string();
    if s.is_empty() {
        "model".into()
    } else {
        s
    }
}

/// Writes, under `<out>/sample-<index>/`:
/// `<model>/truth.png`, `<model>/prediction.png`, `<model>/abs_error.png` for
/// every model and `profile.svg` with the bottom edge over [`PROFILE_WINDOW`].
pub fn plot(args: &PlotArgs) -> Result<PathBuf> {
    if args.models.is_empty() && args.baselines.is_empty() {
        bail!("give at least one --model or --baseline");
    }
    let layout = load_layout(&args.layout, args.grid_n)?;
    let ds = load_dataset(&args.dataset, &layout)?;
    let plan = load_plan(&args.plan, &layout)?;
    let Some(sample) = ds.samples.get(args.sample) else {
        bail!("sample {} outside a {}-sample dataset", args.sample, ds.len());
    };
    let mut man = ManifestBuilder::start("plot", false);
    man.config(args)?;
    man.input("dataset", &args.dataset)?;
    man.input("plan", &args.plan)?;

    let mut preds: Vec<(String, Grid)> = Vec::new();
    let obs = extract_observations(&sample.field, &plan)?;
    for spec in &args.models {
        man.input("checkpoint", &spec.checkpoint)?;
        let model = load_reconstructor(spec, &plan)?;
        preds.push((label_of(spec), model.reconstruct(&obs)?));
    }
    for &b in &args.baselines {
        let name = serde_json::to_value(b)?.as_str().unwrap_or("baseline").to_string();
        let grid = match baseline(b, &plan, &layout, KrigingConfig::default(), GaussInterpConfig::default(), exec(false))? {
            Some(r) => r.reconstruct(&obs)?,
            None => sample.field.grid.clone(),
        };
        preds.push((name, grid));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (name, _) in &preds {
        if !seen.insert(slug(name)) {
            bail!("two models would share the file name `{}`; give them distinct labels", slug(name));
        }
    }

    let dir = resolve_out(args.out.as_deref(), "plots")?.join(format!("sample-{:05}", args.sample));
    crate::ensure_dir(&dir)?;
    let truth = &sample.field.grid;
    let lo = preds.iter().map(|(_, g)| g.min()).fold(truth.min(), f64::min);
    let hi = preds.iter().map(|(_, g)| g.max()).fold(truth.max(), f64::max);
    for (name, pred) in &preds {
        let sub = dir.join(slug(name));
        crate::ensure_dir(&sub)?;
        let err = Grid::from_fn(truth.n(), |r, c| (pred.get(r, c) - truth.get(r, c)).abs());
        let panels = [
            ("truth", truth, lo, hi),
            ("prediction", pred, lo, hi),
            ("abs_error", &err, 0.0, err.max()),
        ];
        for (panel, grid, a, b) in panels {
            let path = sub.join(format!("{panel}.png"));
            heatmap_png(grid, a, b, args.scale, &path)?;
            man.output(panel, &path)?;
        }
        println!("{name}: max abs error {:.4} K -> {}", err.max(), sub.display());
    }

    let cols: Vec<usize> = (0..layout.grid_n)
        .filter(|&c| {
            let x = layout.node_coord(c);
            x >= PROFILE_WINDOW.0 - 1e-12 && x <= PROFILE_WINDOW.1 + 1e-12
        })
        .collect();
    if cols.len() < 2 {
        bail!("fewer than two grid nodes fall in the profile window at N={}", layout.grid_n);
    }
    let xs: Vec<f64> = cols.iter().map(|&c| layout.node_coord(c)).collect();
    let mut series = vec![("truth".to_string(), cols.iter().map(|&c| truth.get(0, c)).collect())];
    series.extend(preds.iter().map(|(name, g)| (name.clone(), cols.iter().map(|&c| g.get(0, c)).collect())));
    let profile = dir.join("profile.svg");
    profile_svg(&profile, &format!("bottom boundary, sample {}", args.sample), &xs, &series)?;
    man.output("profile", &profile)?;
    man.finish(&dir.join("manifest.json"))?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::slug;

    #[test]
    fn slugs_are_filesystem_safe() {
        assert_eq!(slug("UNet+MLP"), "unet-mlp");
        assert_eq!(slug("  kriging "), "kriging");
        assert_eq!(slug("m=16 / run#2"), "m-16-run-2");
        assert_eq!(slug("///"), "model");
    }
}

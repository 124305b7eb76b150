use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use tfr_core::baselines::{gauss_interp_table, kriging_table, GaussInterpConfig, KrigingConfig, WeightTable};
use tfr_core::dataset::DatasetKind;
use tfr_core::metrics::{evaluate, evaluate_with, ComponentMask, ReportMeta, Reconstructor};
use tfr_core::{Exec, Grid, Layout, ObservationPlan, ObservationSet};
use tfr_recon::checkpoint::{Checkpoint, ModelKind};
use tfr_recon::{NnBaselineModel, ReconModel};

use super::{load_dataset, load_plan};
use crate::manifest::ManifestBuilder;
use crate::sweep::{require_placeholder, substitute, Sweep};
use crate::{exec, load_layout, resolve_out};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineChoice {
    Kriging,
    Gauss,
    /// Every node at the sink temperature.
    Constant,
    /// Returns the ground truth; checks the pipeline itself.
    Oracle,
    Svr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    /// Held-out split for general sets, every sample for the special set.
    Auto,
    Test,
    Train,
    All,
}

/// A trained model reference: `[label=]checkpoint[+patch-checkpoint]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSpec {
    pub label: Option<String>,
    pub checkpoint: PathBuf,
    pub patch: Option<PathBuf>,
}

impl std::str::FromStr for ModelSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (label, rest) = match s.split_once('=') {
            Some((l, r)) if !l.is_empty() => (Some(l.to_string()), r),
            _ => (None, s),
        };
        let (ckpt, patch) = match rest.split_once('+') {
            Some((a, b)) => (a, Some(PathBuf::from(b))),
            None => (rest, None),
        };
        if ckpt.is_empty() {
            return Err(format!("empty checkpoint path in `{s}`"));
        }
        Ok(ModelSpec {
            label,
            checkpoint: PathBuf::from(ckpt),
            patch,
        })
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub layout: String,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Trained model: `[label=]unet.tfrm[+mlp.tfrm]` or an nn-baseline checkpoint.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub model: Option<ModelSpec>,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineChoice>,
    #[arg(long, default_value_t = KrigingConfig::default().length_scale)]
    pub length_scale: f64,
    #[arg(long, default_value_t = KrigingConfig::default().nugget)]
    pub nugget: f64,
    #[arg(long, default_value_t = GaussInterpConfig::default().bandwidth)]
    pub bandwidth: f64,
    #[arg(long, value_enum, default_value_t = Split::Auto)]
    pub split: Split,
    /// Output directory (report.csv, summary.json, manifest.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate once per sensor count; `{m}` in paths is replaced.
    #[arg(long)]
    #[serde(skip)]
    pub sweep: Option<Sweep>,
    #[arg(long)]
    pub serial: bool,
}

struct Table(WeightTable);

impl Reconstructor for Table {
    fn name(&self) -> String {
        self.0.name.clone()
    }

    fn reconstruct(&self, obs: &ObservationSet) -> tfr_core::Result<Grid> {
        self.0.apply(obs)
    }
}

struct Constant {
    n: usize,
    value: f64,
}

impl Reconstructor for Constant {
    fn name(&self) -> String {
        "constant".into()
    }

    fn reconstruct(&self, _: &ObservationSet) -> tfr_core::Result<Grid> {
        Ok(Grid::filled(self.n, self.value))
    }
}

/// Load a trained model and check it was trained under `plan`.
pub fn load_reconstructor(spec: &ModelSpec, plan: &ObservationPlan) -> Result<Box<dyn Reconstructor>> {
    let ckpt = Checkpoint::load(&spec.checkpoint).with_context(|| format!("loading {}", spec.checkpoint.display()))?;
    let model: Box<dyn Reconstructor> = match ckpt.header.kind {
        ModelKind::Unet => {
            let patch = spec
                .patch
                .as_ref()
                .map(|p| Checkpoint::load(p).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let m = ReconModel::from_checkpoints(&ckpt, patch.as_ref())?;
            m.ensure_plan(plan)?;
            Box::new(m)
        }
        ModelKind::NnBaseline => {
            if spec.patch.is_some() {
                bail!("a patch regressor can only be stitched onto a UNet");
            }
            let m = NnBaselineModel::from_checkpoint(&ckpt)?;
            if m.plan.hash() != plan.hash() {
                bail!("baseline was trained under plan {}, given {}", m.plan.id(), plan.id());
            }
            Box::new(m)
        }
        ModelKind::Mlp => bail!("an MLP checkpoint only covers the patch; pass it as unet.tfrm+mlp.tfrm"),
    };
    Ok(model)
}

pub fn baseline(
    choice: BaselineChoice,
    plan: &ObservationPlan,
    layout: &Layout,
    kriging: KrigingConfig,
    gauss: GaussInterpConfig,
    ex: Exec,
) -> Result<Option<Box<dyn Reconstructor>>> {
    Ok(match choice {
        BaselineChoice::Kriging => Some(Box::new(Table(kriging_table(plan, layout, kriging, ex)?))),
        BaselineChoice::Gauss => Some(Box::new(Table(gauss_interp_table(plan, layout, gauss, ex)?))),
        BaselineChoice::Constant => Some(Box::new(Constant {
            n: layout.grid_n,
            value: layout.sink_temperature(),
        })),
        BaselineChoice::Oracle => None,
        BaselineChoice::Svr => bail!("the SVR baseline is not implemented"),
    })
}

pub fn label_of(spec: &ModelSpec) -> String {
    spec.label.clone().unwrap_or_else(|| {
        let stem = |p: &Path| {
            p.parent()
                .and_then(|d| d.file_name())
                .or_else(|| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into())
        };
        match &spec.patch {
            Some(p) => format!("{}+{}", stem(&spec.checkpoint), stem(p)),
            None => stem(&spec.checkpoint),
        }
    })
}

pub fn eval(args: &EvalArgs) -> Result<Vec<PathBuf>> {
    match &args.sweep {
        None => Ok(vec![eval_one(args)?]),
        Some(s) => {
            require_placeholder("--plan", &args.plan)?;
            let mut outs = Vec::new();
            for &m in &s.values {
                let sub = |p: &Path| substitute(p, m);
                let one = EvalArgs {
                    plan: sub(&args.plan),
                    model: args.model.as_ref().map(|spec| ModelSpec {
                        label: spec.label.clone(),
                        checkpoint: sub(&spec.checkpoint),
                        patch: spec.patch.as_deref().map(sub),
                    }),
                    out: args.out.as_deref().map(sub),
                    sweep: None,
                    ..args.clone()
                };
                outs.push(eval_one(&one)?);
            }
            Ok(outs)
        }
    }
}

fn eval_one(args: &EvalArgs) -> Result<PathBuf> {
    let layout = load_layout(&args.layout, args.grid_n)?;
    let ds = load_dataset(&args.dataset, &layout)?;
    let plan = load_plan(&args.plan, &layout)?;
    let ex = exec(args.serial);
    let mut man = ManifestBuilder::start("eval", !args.serial);
    man.config(args)?;
    man.input("dataset", &args.dataset)?;
    man.input("plan", &args.plan)?;

    let kriging = KrigingConfig {
        length_scale: args.length_scale,
        nugget: args.nugget,
    };
    let gauss = GaussInterpConfig {
        bandwidth: args.bandwidth,
    };
    man.phase("prepare");
    let (model, model_id): (Option<Box<dyn Reconstructor>>, String) = match (&args.model, args.baseline) {
        (Some(spec), _) => {
            man.input("checkpoint", &spec.checkpoint)?;
            if let Some(p) = &spec.patch {
                man.input("patch-checkpoint", p)?;
            }
            (Some(load_reconstructor(spec, &plan)?), label_of(spec))
        }
        (None, Some(b)) => {
            let r = baseline(b, &plan, &layout, kriging, gauss, ex)?;
            let name = serde_json::to_value(b)?.as_str().unwrap_or("baseline").to_string();
            (r, name)
        }
        (None, None) => bail!("give --model or --baseline"),
    };

    let split = match (args.split, ds.header.kind) {
        (Split::Auto, DatasetKind::Special) | (Split::All, _) => 0..ds.len(),
        (Split::Auto, DatasetKind::General) | (Split::Test, _) => ds.split_index()..ds.len(),
        (Split::Train, _) => 0..ds.split_index(),
    };
    let samples = &ds.samples[split.clone()];
    if samples.is_empty() {
        bail!("the selected split of {} is empty", args.dataset.display());
    }
    let mask = ComponentMask::from_layout(&layout);
    let meta = ReportMeta {
        model_id: model_id.clone(),
        plan_id: plan.id(),
        dataset_id: ds.header.id(),
        mask_hash: tfr_core::hashing::short_hex(&mask.hash()),
    };
    man.phase("evaluate");
    let report = match &model {
        Some(r) => evaluate(r.as_ref(), samples, split.start, &plan, &mask, meta, ex)?,
        None => evaluate_with(samples, split.start, &plan, &mask, meta, ex, |_, s| Ok(s.field.grid.clone()))?,
    };

    man.phase("write");
    let dir = resolve_out(args.out.as_deref(), &format!("eval-{model_id}-{}", plan.id()))?;
    crate::ensure_dir(&dir)?;
    let csv = dir.join("report.csv");
    let summary = dir.join("summary.json");
    report.write_csv(&csv)?;
    report.write_summary(&summary)?;
    let agg = report.aggregate();
    println!(
        "{model_id} on {} ({} samples): MAE {:.4} K, CMAE {:.4} K, MaxAE {:.4} K (set max {:.4}), MT-AE {:.4} K",
        ds.header.id(),
        agg.samples,
        agg.mae,
        agg.cmae,
        agg.maxae,
        agg.maxae_set_max,
        agg.mtae
    );
    man.output("report", &csv)?;
    man.output("summary", &summary)?;
    man.finish(&dir.join("manifest.json"))?;
    Ok(dir)
}

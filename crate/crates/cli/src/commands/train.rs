use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;
use tfr_core::observation::Normalization;
use tfr_recon::checkpoint::Checkpoint;
use tfr_recon::model::{mlp_checkpoint, nn_baseline_checkpoint, unet_checkpoint};
use tfr_recon::patch::{PatchSpec, DEFAULT_PATCH_WIDTH};
use tfr_recon::{
    train_nn_baseline, train_patch_mlp, train_unet, LossHistory, MlpConfig, NnBaselineConfig, TrainConfig, UNetConfig,
};

use super::{load_dataset, load_plan};
use crate::manifest::ManifestBuilder;
use crate::sweep::{require_placeholder, substitute, Sweep};
use crate::{exec, load_layout, resolve_out};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Unet,
    Mlp,
    NnBaseline,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, required_unless_present = "sweep")]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: ModelChoice,
    #[arg(long)]
    pub layout: String,
    #[arg(long)]
    pub grid_n: Option<usize>,
    /// Output directory (checkpoint.tfrm, loss.csv, manifest.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Train once per sensor count; `{m}` in --plan and --out is replaced.
    #[arg(long)]
    #[serde(skip)]
    pub sweep: Option<Sweep>,
    /// Start from the reduced CPU preset (UNet base width 32, 100 epochs).
    #[arg(long)]
    pub desk: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lambda_reg: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub micro_batch: Option<usize>,
    #[arg(long)]
    pub val_every: Option<usize>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub norm_groups: Option<usize>,
    /// Bottom-row cells owned by the patch MLP.
    #[arg(long, default_value_t = DEFAULT_PATCH_WIDTH)]
    pub patch_width: usize,
    /// Train on only the first k samples of the training split.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Skip monitoring on the held-out split.
    #[arg(long)]
    pub no_val: bool,
    #[arg(long)]
    pub serial: bool,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        let base = if self.desk { TrainConfig::desk() } else { TrainConfig::default() };
        TrainConfig {
            epochs: self.epochs.unwrap_or(base.epochs),
            lr: self.lr.unwrap_or(base.lr),
            lr_min: self.lr_min.unwrap_or(base.lr_min),
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            lambda_reg: self.lambda_reg.unwrap_or(base.lambda_reg),
            seed: self.seed.unwrap_or(base.seed),
            val_every: self.val_every.unwrap_or(base.val_every),
            micro_batch: self.micro_batch.unwrap_or(base.micro_batch),
        }
    }

    pub fn unet_config(&self) -> UNetConfig {
        let base = if self.desk { UNetConfig::desk() } else { UNetConfig::default() };
        UNetConfig {
            base_width: self.base_width.unwrap_or(base.base_width),
            depth: self.depth.unwrap_or(base.depth),
            norm_groups: self.norm_groups.unwrap_or(base.norm_groups),
            ..base
        }
    }
}

#[derive(Serialize)]
struct Resolved<'a> {
    args: &'a TrainArgs,
    train: TrainConfig,
    unet: Option<UNetConfig>,
    mlp: Option<MlpConfig>,
    nn_baseline: Option<NnBaselineConfig>,
    normalization: Normalization,
}

/// Train one model per requested plan. Returns the checkpoint paths.
pub fn train(args: &TrainArgs) -> Result<Vec<PathBuf>> {
    match &args.sweep {
        None => {
            let plan = args.plan.clone().expect("clap requires --plan without --sweep");
            Ok(vec![train_one(args, &plan, None)?])
        }
        Some(s) => {
            let plan = args.plan.clone().unwrap_or_else(|| PathBuf::from("plan-m{m}.toml"));
            require_placeholder("--plan", &plan)?;
            if let Some(out) = &args.out {
                require_placeholder("--out", out)?;
            }
            s.values.iter().map(|&m| train_one(args, &substitute(&plan, m), Some(m))).collect()
        }
    }
}

fn train_one(args: &TrainArgs, plan_path: &Path, m: Option<usize>) -> Result<PathBuf> {
    let layout = load_layout(&args.layout, args.grid_n)?;
    let ds = load_dataset(&args.dataset, &layout)?;
    let plan = load_plan(plan_path, &layout)?;
    if let Some(m) = m {
        if plan.len() != m {
            bail!("{} holds {} points, the sweep expected {m}", plan_path.display(), plan.len());
        }
    }
    let default_name = format!("{:?}-{}", args.model, plan.id()).to_lowercase();
    let dir = resolve_out(args.out.as_deref(), &default_name)?;
    let dir = substitute(&dir, plan.len());
    crate::ensure_dir(&dir)?;

    let tcfg = args.train_config();
    let norm = Normalization::default();
    let mut train_set = ds.train();
    if let Some(k) = args.train_limit {
        if k == 0 || k > train_set.len() {
            bail!("--train-limit {k} outside 1..={}", train_set.len());
        }
        train_set = &train_set[..k];
    }
    let val = (!args.no_val).then(|| ds.test());
    let dataset_id = ds.header.id();
    let ex = exec(args.serial);

    let mut man = ManifestBuilder::start("train", !args.serial);
    man.input("dataset", &args.dataset)?;
    man.input("plan", plan_path)?;
    man.seed("train", tcfg.seed);
    man.note("Parameters are bit-reproducible for a fixed binary and CPU; a GEMM kernel chosen for different SIMD features can change low-order bits.");
    if val.is_some() {
        man.note("val_mae is computed on the held-out split for monitoring only; it never influences training.");
    }
    man.phase("train");
    log::info!(
        "training {:?} on {} samples, plan {}, {} epochs",
        args.model,
        train_set.len(),
        plan.id(),
        tcfg.epochs
    );

    let mut resolved = Resolved {
        args,
        train: tcfg.clone(),
        unet: None,
        mlp: None,
        nn_baseline: None,
        normalization: norm,
    };
    let (ckpt, history): (Checkpoint, LossHistory) = match args.model {
        ModelChoice::Unet => {
            let cfg = args.unet_config();
            resolved.unet = Some(cfg.clone());
            let t = train_unet(train_set, val, &plan, &cfg, &tcfg, norm, ex, &mut |_, _| {})?;
            (unet_checkpoint(&t, &plan, &tcfg, norm, &dataset_id)?, t.history)
        }
        ModelChoice::Mlp => {
            let spec = PatchSpec::bottom_row(&layout, args.patch_width)?;
            let cfg = MlpConfig::patch(plan.len(), spec.len());
            resolved.mlp = Some(cfg.clone());
            let t = train_patch_mlp(train_set, val, &plan, &spec, &cfg, &tcfg, norm, ex)?;
            (mlp_checkpoint(&t, &spec, &plan, &tcfg, norm, &dataset_id)?, t.history)
        }
        ModelChoice::NnBaseline => {
            let cfg = NnBaselineConfig::new(plan.len());
            resolved.nn_baseline = Some(cfg.clone());
            let t = train_nn_baseline(train_set, val, &plan, &cfg, &tcfg, norm, ex)?;
            (nn_baseline_checkpoint(&t, &plan, &tcfg, norm, &dataset_id)?, t.history)
        }
    };
    man.config(&resolved)?;

    man.phase("write");
    let ckpt_path = dir.join("checkpoint.tfrm");
    let loss_path = dir.join("loss.csv");
    ckpt.save(&ckpt_path)?;
    history.write_csv(&loss_path)?;
    if Checkpoint::load(&ckpt_path)? != ckpt {
        bail!("checkpoint {} did not read back identically", ckpt_path.display());
    }
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!(
            "train loss {:.5} -> {:.5}{}; checkpoint {}",
            first.train_loss,
            last.train_loss,
            last.val_mae.map(|v| format!(", held-out MAE {v:.4} K")).unwrap_or_default(),
            ckpt_path.display()
        );
    }
    man.output("checkpoint", &ckpt_path)?;
    man.output("loss", &loss_path)?;
    man.finish(&dir.join("manifest.json"))?;
    Ok(ckpt_path)
}

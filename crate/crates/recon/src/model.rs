use tfr_core::metrics::Reconstructor;
use tfr_core::observation::{to_sparse_image, Normalization};
use tfr_core::{Grid, ObservationPlan, ObservationSet};

use crate::checkpoint::{Checkpoint, CheckpointHeader, ModelKind};
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpConfig, NnBaselineConfig};
use crate::patch::{stitch, PatchSpec};
use crate::train::{unet_predict, NnBaseline, TrainConfig, Trained};
use crate::unet::{UNet, UNetConfig};

fn core_err(e: Error) -> tfr_core::Error {
    match e {
        Error::Core(e) => e,
        other => tfr_core::Error::InvalidArgument(other.to_string()),
    }
}

fn check_params(kind: ModelKind, have: usize, want: usize) -> Result<()> {
    if have != want {
        return Err(Error::Checkpoint(format!(
            "{kind} checkpoint holds {have} parameters, architecture needs {want}"
        )));
    }
    Ok(())
}

fn header(
    kind: ModelKind,
    plan: &ObservationPlan,
    train: &TrainConfig,
    norm: Normalization,
    dataset_id: &str,
    history: &crate::train::LossHistory,
    tensors: Vec<crate::nn::ParamEntry>,
) -> CheckpointHeader {
    CheckpointHeader {
        kind,
        unet: None,
        mlp: None,
        nn_baseline: None,
        patch: None,
        train: train.clone(),
        normalization: norm,
        plan: plan.to_toml(),
        dataset_id: dataset_id.to_string(),
        history: history.clone(),
        tensors,
    }
}

pub fn unet_checkpoint(
    trained: &Trained<UNetConfig>,
    plan: &ObservationPlan,
    train: &TrainConfig,
    norm: Normalization,
    dataset_id: &str,
) -> Result<Checkpoint> {
    let net = UNet::new(trained.config.clone())?;
    check_params(ModelKind::Unet, trained.params.len(), net.n_params())?;
    let mut h = header(ModelKind::Unet, plan, train, norm, dataset_id, &trained.history, net.layout.entries.clone());
    h.unet = Some(trained.config.clone());
    Ok(Checkpoint {
        header: h,
        params: trained.params.clone(),
    })
}

pub fn mlp_checkpoint(
    trained: &Trained<MlpConfig>,
    spec: &PatchSpec,
    plan: &ObservationPlan,
    train: &TrainConfig,
    norm: Normalization,
    dataset_id: &str,
) -> Result<Checkpoint> {
    let mlp = Mlp::new(trained.config.clone())?;
    check_params(ModelKind::Mlp, trained.params.len(), mlp.n_params())?;
    let mut h = header(ModelKind::Mlp, plan, train, norm, dataset_id, &trained.history, mlp.layout.entries.clone());
    h.mlp = Some(trained.config.clone());
    h.patch = Some(spec.clone());
    Ok(Checkpoint {
        header: h,
        params: trained.params.clone(),
    })
}

pub fn nn_baseline_checkpoint(
    trained: &Trained<NnBaselineConfig>,
    plan: &ObservationPlan,
    train: &TrainConfig,
    norm: Normalization,
    dataset_id: &str,
) -> Result<Checkpoint> {
    let mlp = Mlp::new(trained.config.mlp())?;
    check_params(ModelKind::NnBaseline, trained.params.len(), mlp.n_params())?;
    let mut h = header(ModelKind::NnBaseline, plan, train, norm, dataset_id, &trained.history, mlp.layout.entries.clone());
    h.nn_baseline = Some(trained.config.clone());
    Ok(Checkpoint {
        header: h,
        params: trained.params.clone(),
    })
}

struct PatchPart {
    mlp: Mlp,
    params: Vec<f32>,
    spec: PatchSpec,
}

/// Trained patchwise reconstructor: UNet for the whole field plus an
/// optional MLP that overwrites the patch cells.
pub struct ReconModel {
    unet: UNet,
    unet_params: Vec<f32>,
    patch: Option<PatchPart>,
    pub normalization: Normalization,
    pub plan: ObservationPlan,
}

impl ReconModel {
    pub fn new(
        unet_config: UNetConfig,
        unet_params: Vec<f32>,
        patch: Option<(MlpConfig, Vec<f32>, PatchSpec)>,
        normalization: Normalization,
        plan: ObservationPlan,
    ) -> Result<Self> {
        let unet = UNet::new(unet_config)?;
        check_params(ModelKind::Unet, unet_params.len(), unet.n_params())?;
        let patch = match patch {
            None => None,
            Some((cfg, params, spec)) => {
                let mlp = Mlp::new(cfg)?;
                check_params(ModelKind::Mlp, params.len(), mlp.n_params())?;
                spec.validate()?;
                if mlp.config.input() != plan.len() || mlp.config.output() != spec.len() || spec.grid_n != plan.grid_n {
                    return Err(Error::Config(format!(
                        "patch MLP {:?} does not fit a {}-sensor plan and {}-cell patch",
                        mlp.config.sizes,
                        plan.len(),
                        spec.len()
                    )));
                }
                Some(PatchPart { mlp, params, spec })
            }
        };
        Ok(ReconModel {
            unet,
            unet_params,
            patch,
            normalization,
            plan,
        })
    }

    /// Combine a UNet checkpoint with an optional patch-MLP checkpoint.
    /// Both must have been trained under the same plan and normalization.
    pub fn from_checkpoints(unet: &Checkpoint, patch: Option<&Checkpoint>) -> Result<Self> {
        if unet.header.kind != ModelKind::Unet {
            return Err(Error::Checkpoint(format!("expected a unet checkpoint, got {}", unet.header.kind)));
        }
        let plan = unet.plan()?;
        let patch = match patch {
            None => None,
            Some(c) => {
                if c.header.kind != ModelKind::Mlp {
                    return Err(Error::Checkpoint(format!("expected an mlp checkpoint, got {}", c.header.kind)));
                }
                if c.plan()?.hash() != plan.hash() {
                    return Err(Error::PlanMismatch("UNet and patch MLP were trained under different plans".into()));
                }
                if c.header.normalization != unet.header.normalization {
                    return Err(Error::Checkpoint("UNet and patch MLP use different normalizations".into()));
                }
                let cfg = c.header.mlp.clone().ok_or_else(|| Error::Checkpoint("mlp config missing".into()))?;
                let spec = c.header.patch.clone().ok_or_else(|| Error::Checkpoint("patch spec missing".into()))?;
                Some((cfg, c.params.clone(), spec))
            }
        };
        let cfg = unet.header.unet.clone().ok_or_else(|| Error::Checkpoint("unet config missing".into()))?;
        Self::new(cfg, unet.params.clone(), patch, unet.header.normalization, plan)
    }

    pub fn has_patch(&self) -> bool {
        self.patch.is_some()
    }

    pub fn patch_spec(&self) -> Option<&PatchSpec> {
        self.patch.as_ref().map(|p| &p.spec)
    }

    fn normalized(&self, obs: &ObservationSet) -> Result<Vec<f32>> {
        if obs.len() != self.plan.len() {
            return Err(Error::PlanMismatch(format!(
                "{} readings for a {}-point plan",
                obs.len(),
                self.plan.len()
            )));
        }
        Ok(obs.values.iter().map(|&v| self.normalization.forward(v) as f32).collect())
    }

    /// Full-field UNet estimate in kelvin.
    pub fn unet_forward(&self, obs: &ObservationSet) -> Result<Grid> {
        let x = self.normalized(obs)?;
        let y = unet_predict(&self.unet, &self.unet_params, &self.plan, &x);
        let norm = self.normalization;
        Ok(Grid::from_vec(self.plan.grid_n, y.iter().map(|&v| norm.inverse(v as f64)).collect())?)
    }

    /// Patch estimate in kelvin, in patch-cell order.
    pub fn mlp_forward(&self, obs: &ObservationSet) -> Result<Vec<f64>> {
        let part = self
            .patch
            .as_ref()
            .ok_or_else(|| Error::Config("model has no patch regressor".into()))?;
        let x = self.normalized(obs)?;
        let (y, _) = part.mlp.forward(&part.params, &x, 1);
        Ok(y.iter().map(|&v| self.normalization.inverse(v as f64)).collect())
    }

    /// UNet estimate with the patch cells replaced by the MLP's values.
    pub fn reconstruct(&self, obs: &ObservationSet) -> Result<Grid> {
        let field = self.unet_forward(obs)?;
        match &self.patch {
            None => Ok(field),
            Some(part) => stitch(&field, &self.mlp_forward(obs)?, &part.spec),
        }
    }

    /// Plans must match exactly (same points in the same order).
    pub fn ensure_plan(&self, plan: &ObservationPlan) -> Result<()> {
        if plan.hash() != self.plan.hash() {
            return Err(Error::PlanMismatch(format!("model plan {}, given {}", self.plan.id(), plan.id())));
        }
        Ok(())
    }

    /// The sparse input image the UNet sees, for inspection.
    pub fn sparse_input(&self, obs: &ObservationSet) -> Result<Grid> {
        Ok(to_sparse_image(obs, &self.plan, &self.normalization)?.0)
    }

    /// View that skips the patch regressor.
    pub fn unet_only(&self) -> UnetOnly<'_> {
        UnetOnly(self)
    }
}

impl Reconstructor for ReconModel {
    fn name(&self) -> String {
        if self.has_patch() { "unet+patch" } else { "unet" }.into()
    }

    fn reconstruct(&self, obs: &ObservationSet) -> tfr_core::Result<Grid> {
        ReconModel::reconstruct(self, obs).map_err(core_err)
    }
}

pub struct UnetOnly<'a>(&'a ReconModel);

impl Reconstructor for UnetOnly<'_> {
    fn name(&self) -> String {
        "unet".into()
    }

    fn reconstruct(&self, obs: &ObservationSet) -> tfr_core::Result<Grid> {
        self.0.unet_forward(obs).map_err(core_err)
    }
}

/// Trained fully connected baseline.
pub struct NnBaselineModel {
    model: NnBaseline,
    params: Vec<f32>,
    pub normalization: Normalization,
    pub plan: ObservationPlan,
}

impl NnBaselineModel {
    pub fn new(config: NnBaselineConfig, params: Vec<f32>, normalization: Normalization, plan: ObservationPlan) -> Result<Self> {
        let model = NnBaseline::new(config, plan.grid_n)?;
        check_params(ModelKind::NnBaseline, params.len(), model.mlp.n_params())?;
        Ok(NnBaselineModel {
            model,
            params,
            normalization,
            plan,
        })
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.header.kind != ModelKind::NnBaseline {
            return Err(Error::Checkpoint(format!("expected an nn-baseline checkpoint, got {}", c.header.kind)));
        }
        let cfg = c.header.nn_baseline.clone().ok_or_else(|| Error::Checkpoint("baseline config missing".into()))?;
        Self::new(cfg, c.params.clone(), c.header.normalization, c.plan()?)
    }

    pub fn predict(&self, obs: &ObservationSet) -> Result<Grid> {
        if obs.len() != self.plan.len() {
            return Err(Error::PlanMismatch(format!("{} readings for a {}-point plan", obs.len(), self.plan.len())));
        }
        let x: Vec<f32> = obs.values.iter().map(|&v| self.normalization.forward(v) as f32).collect();
        let y = self.model.predict(&self.params, &x);
        let norm = self.normalization;
        Ok(Grid::from_vec(self.plan.grid_n, y.iter().map(|&v| norm.inverse(v as f64)).collect())?)
    }
}

impl Reconstructor for NnBaselineModel {
    fn name(&self) -> String {
        "nn-baseline".into()
    }

    fn reconstruct(&self, obs: &ObservationSet) -> tfr_core::Result<Grid> {
        self.predict(obs).map_err(core_err)
    }
}

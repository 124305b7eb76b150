//! Mini-batch Adam training for the three trainable models.
//!
//! Each optimizer step splits the batch into fixed-size micro-batches whose
//! gradients are computed under the caller's [`Exec`] policy and summed in
//! micro-batch order. The split does not depend on the policy, so serial and
//! parallel runs produce the same parameters.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tfr_core::dataset::Sample;
use tfr_core::observation::{extract_observations, Normalization};
use tfr_core::{Exec, ObservationPlan};

use crate::error::{Error, Result};
use crate::loss::{gradient_loss_grad, l1_grad};
use crate::mlp::{Mlp, MlpConfig, NnBaselineConfig};
use crate::nn::{resize_bilinear, resize_bilinear_backward, Tensor};
use crate::patch::PatchSpec;
use crate::unet::{crop, pad_reflect, uncrop, UNet, UNetConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Floor of the cosine learning-rate decay.
    pub lr_min: f64,
    pub batch_size: usize,
    pub lambda_reg: f64,
    pub seed: u64,
    /// Validate every this many epochs (and always after the last one).
    pub val_every: usize,
    /// Samples per gradient work unit.
    pub micro_batch: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.01,
            lr_min: 1e-4,
            batch_size: 16,
            lambda_reg: 0.1,
            seed: 0,
            val_every: 5,
            micro_batch: 8,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        TrainConfig {
            epochs: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.lr > 0.0
            && self.lr_min > 0.0
            && self.lr_min <= self.lr
            && self.batch_size > 0
            && self.micro_batch > 0
            && self.val_every > 0
            && self.lambda_reg >= 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub field_component: f64,
    pub grad_component: f64,
    /// Validation MAE in kelvin, when evaluated this epoch.
    pub val_mae: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochRecord>,
}

impl LossHistory {
    pub fn first(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "train_loss", "field_component", "grad_component", "val_mae", "lr"])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.field_component.to_string(),
                e.grad_component.to_string(),
                e.val_mae.map(|v| v.to_string()).unwrap_or_default(),
                e.lr.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Per-sample loss terms, in network (normalized) units.
#[derive(Clone, Copy, Debug, Default)]
pub struct LossParts {
    pub total: f64,
    pub field: f64,
    pub grad: f64,
}

impl LossParts {
    fn add(&mut self, o: LossParts) {
        self.total += o.total;
        self.field += o.field;
        self.grad += o.grad;
    }
}

/// A model plus its training data, as seen by the optimizer loop.
pub trait Objective: Sync {
    fn n_params(&self) -> usize;
    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f32>;
    fn n_train(&self) -> usize;
    /// Summed loss over `idx`; adds the summed gradient into `grads`.
    fn loss_grad(&self, params: &[f32], idx: &[usize], grads: &mut [f32]) -> LossParts;
    /// Validation MAE in kelvin, if a validation set is attached.
    fn val_mae(&self, params: &[f32], exec: Exec) -> Option<f64>;
}

/// Summed loss and gradient over a batch, split into micro-batches.
pub fn batch_gradient<O: Objective + ?Sized>(
    obj: &O,
    params: &[f32],
    idx: &[usize],
    micro_batch: usize,
    exec: Exec,
) -> (LossParts, Vec<f32>) {
    let chunks: Vec<&[usize]> = idx.chunks(micro_batch).collect();
    let parts = exec.map(&chunks, |chunk| {
        let mut g = vec![0.0f32; obj.n_params()];
        let l = obj.loss_grad(params, chunk, &mut g);
        (l, g)
    });
    let mut total = LossParts::default();
    let mut grads = vec![0.0f32; obj.n_params()];
    for (l, g) in parts {
        total.add(l);
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grads)
}

/// Run the optimizer. `on_epoch` sees every finished epoch and the current
/// parameters (for logging or intermediate checkpoints).
pub fn fit<O: Objective + ?Sized>(
    obj: &O,
    cfg: &TrainConfig,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRecord, &[f32]),
) -> Result<(Vec<f32>, LossHistory)> {
    cfg.validate()?;
    let n = obj.n_train();
    if n == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = obj.init_params(&mut init_rng);
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut adam = crate::optim::Adam::new(params.len());
    let mut history = LossHistory::default();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let lr = crate::optim::cosine_lr(cfg.lr, cfg.lr_min, epoch, cfg.epochs);
        order.shuffle(&mut order_rng);
        let mut sum = LossParts::default();
        for batch in order.chunks(cfg.batch_size) {
            let (l, mut g) = batch_gradient(obj, &params, batch, cfg.micro_batch, exec);
            if !l.total.is_finite() {
                return Err(Error::Diverged { epoch, loss: l.total });
            }
            let inv = 1.0 / batch.len() as f32;
            g.iter_mut().for_each(|v| *v *= inv);
            adam.update(&mut params, &g, lr);
            sum.add(l);
        }
        let last = epoch + 1 == cfg.epochs;
        let val_mae = if last || (epoch + 1) % cfg.val_every == 0 {
            obj.val_mae(&params, exec)
        } else {
            None
        };
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss: sum.total / n as f64,
            field_component: sum.field / n as f64,
            grad_component: sum.grad / n as f64,
            val_mae,
            seconds: start.elapsed().as_secs_f64(),
        };
        if !rec.train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: rec.train_loss,
            });
        }
        log::info!(
            "epoch {:>4} lr {:.2e} loss {:.5} (field {:.5}, grad {:.5}){} [{:.1}s]",
            epoch,
            lr,
            rec.train_loss,
            rec.field_component,
            rec.grad_component,
            rec.val_mae.map(|v| format!(" val MAE {v:.4} K")).unwrap_or_default(),
            rec.seconds
        );
        on_epoch(&rec, &params);
        history.epochs.push(rec);
    }
    Ok((params, history))
}

/// Samples converted to network units under one plan.
pub struct PreparedSet {
    pub n: usize,
    pub m: usize,
    pub len: usize,
    /// Normalized sensor readings, `[sample][m]`.
    pub obs: Vec<f32>,
    /// Normalized full fields, `[sample][n²]`.
    pub fields: Vec<f32>,
}

impl PreparedSet {
    pub fn new(samples: &[Sample], plan: &ObservationPlan, norm: &Normalization) -> Result<Self> {
        let n = plan.grid_n;
        let mut obs = Vec::with_capacity(samples.len() * plan.len());
        let mut fields = Vec::with_capacity(samples.len() * n * n);
        for s in samples {
            let o = extract_observations(&s.field, plan)?;
            obs.extend(o.values.iter().map(|&v| norm.forward(v) as f32));
            fields.extend(s.field.grid.values().iter().map(|&v| norm.forward(v) as f32));
        }
        Ok(PreparedSet {
            n,
            m: plan.len(),
            len: samples.len(),
            obs,
            fields,
        })
    }

    pub fn obs_of(&self, i: usize) -> &[f32] {
        &self.obs[i * self.m..(i + 1) * self.m]
    }

    pub fn field_of(&self, i: usize) -> &[f32] {
        let nn = self.n * self.n;
        &self.fields[i * nn..(i + 1) * nn]
    }

    fn gather_obs(&self, idx: &[usize]) -> Vec<f32> {
        idx.iter().flat_map(|&i| self.obs_of(i).iter().copied()).collect()
    }
}

/// Sparse input images for a batch of observation vectors: readings at
/// plan points, zero elsewhere.
pub fn sparse_images(obs: &[f32], plan: &ObservationPlan) -> Vec<f32> {
    let n = plan.grid_n;
    let m = plan.len();
    let mut out = vec![0.0f32; obs.len() / m * n * n];
    for (img, o) in out.chunks_exact_mut(n * n).zip(obs.chunks_exact(m)) {
        for (&(r, c), &v) in plan.points.iter().zip(o) {
            img[r * n + c] = v;
        }
    }
    out
}

/// Normalized UNet prediction for a batch of normalized reading vectors.
pub fn unet_predict(net: &UNet, params: &[f32], plan: &ObservationPlan, obs: &[f32]) -> Vec<f32> {
    let n = plan.grid_n;
    let b = obs.len() / plan.len();
    let size = net.config.pad_to(n);
    let x = pad_reflect(&sparse_images(obs, plan), b, n, size);
    let (out, _) = net.forward(params, &x);
    crop(&out, n)
}

fn mean_abs_diff(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() as f64).sum::<f64>()
}

/// Validation MAE in kelvin of a batched normalized predictor.
fn kelvin_mae(
    val: &PreparedSet,
    width: usize,
    truth_of: impl Fn(usize) -> Vec<f32> + Sync + Send,
    predict: impl Fn(&[usize]) -> Vec<f32> + Sync + Send,
    norm: &Normalization,
    micro_batch: usize,
    exec: Exec,
) -> f64 {
    let idx: Vec<usize> = (0..val.len).collect();
    let chunks: Vec<&[usize]> = idx.chunks(micro_batch).collect();
    let sums = exec.map(&chunks, |chunk| {
        let pred = predict(chunk);
        let truth: Vec<f32> = chunk.iter().flat_map(|&i| truth_of(i)).collect();
        mean_abs_diff(&pred, &truth)
    });
    sums.iter().sum::<f64>() / (val.len * width) as f64 * norm.scale
}

pub struct UNetObjective<'a> {
    pub net: &'a UNet,
    pub plan: &'a ObservationPlan,
    pub train: &'a PreparedSet,
    pub val: Option<&'a PreparedSet>,
    pub lambda_reg: f64,
    pub norm: Normalization,
    pub micro_batch: usize,
}

impl Objective for UNetObjective<'_> {
    fn n_params(&self) -> usize {
        self.net.n_params()
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        self.net.layout.initialize(rng)
    }

    fn n_train(&self) -> usize {
        self.train.len
    }

    fn loss_grad(&self, params: &[f32], idx: &[usize], grads: &mut [f32]) -> LossParts {
        let n = self.train.n;
        let b = idx.len();
        let size = self.net.config.pad_to(n);
        let obs = self.train.gather_obs(idx);
        let x = pad_reflect(&sparse_images(&obs, self.plan), b, n, size);
        let (out, tape) = self.net.forward(params, &x);
        let pred = crop(&out, n);
        let mut dpred = vec![0.0f32; pred.len()];
        let mut parts = LossParts::default();
        let lam = self.lambda_reg;
        for (k, &i) in idx.iter().enumerate() {
            let r = k * n * n..(k + 1) * n * n;
            let truth = self.train.field_of(i);
            let f = l1_grad(&pred[r.clone()], truth, 1.0, &mut dpred[r.clone()]);
            let g = gradient_loss_grad(&pred[r.clone()], truth, n, n, lam as f32, &mut dpred[r]);
            parts.add(LossParts {
                total: f + lam * g,
                field: f,
                grad: g,
            });
        }
        let dout = uncrop(&dpred, 1, b, n, size);
        self.net.backward(params, &tape, &dout, grads);
        parts
    }

    fn val_mae(&self, params: &[f32], exec: Exec) -> Option<f64> {
        let val = self.val?;
        Some(kelvin_mae(
            val,
            val.n * val.n,
            |i| val.field_of(i).to_vec(),
            |chunk| unet_predict(self.net, params, self.plan, &val.gather_obs(chunk)),
            &self.norm,
            self.micro_batch,
            exec,
        ))
    }
}

pub struct PatchObjective<'a> {
    pub mlp: &'a Mlp,
    pub spec: &'a PatchSpec,
    pub train: &'a PreparedSet,
    pub val: Option<&'a PreparedSet>,
    pub norm: Normalization,
    pub micro_batch: usize,
}

impl PatchObjective<'_> {
    fn patch_of(&self, set: &PreparedSet, i: usize) -> Vec<f32> {
        let f = set.field_of(i);
        self.spec.cells.iter().map(|&(r, c)| f[r * set.n + c]).collect()
    }
}

impl Objective for PatchObjective<'_> {
    fn n_params(&self) -> usize {
        self.mlp.n_params()
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        self.mlp.layout.initialize(rng)
    }

    fn n_train(&self) -> usize {
        self.train.len
    }

    fn loss_grad(&self, params: &[f32], idx: &[usize], grads: &mut [f32]) -> LossParts {
        let p = self.spec.len();
        let x = self.train.gather_obs(idx);
        let (y, tape) = self.mlp.forward(params, &x, idx.len());
        let mut dy = vec![0.0f32; y.len()];
        let mut parts = LossParts::default();
        for (k, &i) in idx.iter().enumerate() {
            let r = k * p..(k + 1) * p;
            let f = l1_grad(&y[r.clone()], &self.patch_of(self.train, i), 1.0, &mut dy[r]);
            parts.add(LossParts {
                total: f,
                field: f,
                grad: 0.0,
            });
        }
        self.mlp.backward(params, &tape, &dy, grads);
        parts
    }

    fn val_mae(&self, params: &[f32], exec: Exec) -> Option<f64> {
        let val = self.val?;
        Some(kelvin_mae(
            val,
            self.spec.len(),
            |i| self.patch_of(val, i),
            |chunk| self.mlp.forward(params, &val.gather_obs(chunk), chunk.len()).0,
            &self.norm,
            self.micro_batch,
            exec,
        ))
    }
}

/// Fully connected field predictor: coarse grid from the MLP, then bilinear
/// upsampling to the full grid.
pub struct NnBaseline {
    pub config: NnBaselineConfig,
    pub mlp: Mlp,
    pub grid_n: usize,
}

impl NnBaseline {
    pub fn new(config: NnBaselineConfig, grid_n: usize) -> Result<Self> {
        let mlp = Mlp::new(config.mlp())?;
        Ok(NnBaseline { config, mlp, grid_n })
    }

    /// Normalized full-grid prediction for normalized reading vectors.
    pub fn predict(&self, params: &[f32], obs: &[f32]) -> Vec<f32> {
        let b = obs.len() / self.config.inputs;
        let (y, _) = self.mlp.forward(params, obs, b);
        let c = self.config.coarse_n;
        resize_bilinear(&Tensor::from_vec(1, b, c, c, y), self.grid_n, self.grid_n).data
    }
}

pub struct NnBaselineObjective<'a> {
    pub model: &'a NnBaseline,
    pub train: &'a PreparedSet,
    pub val: Option<&'a PreparedSet>,
    pub norm: Normalization,
    pub micro_batch: usize,
}

impl Objective for NnBaselineObjective<'_> {
    fn n_params(&self) -> usize {
        self.model.mlp.n_params()
    }

    fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        self.model.mlp.layout.initialize(rng)
    }

    fn n_train(&self) -> usize {
        self.train.len
    }

    fn loss_grad(&self, params: &[f32], idx: &[usize], grads: &mut [f32]) -> LossParts {
        let n = self.model.grid_n;
        let c = self.model.config.coarse_n;
        let b = idx.len();
        let x = self.train.gather_obs(idx);
        let (y, tape) = self.model.mlp.forward(params, &x, b);
        let pred = resize_bilinear(&Tensor::from_vec(1, b, c, c, y), n, n);
        let mut dpred = vec![0.0f32; pred.len()];
        let mut parts = LossParts::default();
        for (k, &i) in idx.iter().enumerate() {
            let r = k * n * n..(k + 1) * n * n;
            let f = l1_grad(&pred.data[r.clone()], self.train.field_of(i), 1.0, &mut dpred[r]);
            parts.add(LossParts {
                total: f,
                field: f,
                grad: 0.0,
            });
        }
        let dy = resize_bilinear_backward(&Tensor::from_vec(1, b, n, n, dpred), c, c);
        self.model.mlp.backward(params, &tape, &dy.data, grads);
        parts
    }

    fn val_mae(&self, params: &[f32], exec: Exec) -> Option<f64> {
        let val = self.val?;
        Some(kelvin_mae(
            val,
            val.n * val.n,
            |i| val.field_of(i).to_vec(),
            |chunk| self.model.predict(params, &val.gather_obs(chunk)),
            &self.norm,
            self.micro_batch,
            exec,
        ))
    }
}

fn check_plan(samples: &[Sample], plan: &ObservationPlan) -> Result<()> {
    plan.validate()?;
    if let Some(s) = samples.first() {
        plan.ensure_layout(&s.field.layout_hash)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Trained<C> {
    pub config: C,
    pub params: Vec<f32>,
    pub history: LossHistory,
}

#[allow(clippy::too_many_arguments)]
pub fn train_unet(
    train: &[Sample],
    val: Option<&[Sample]>,
    plan: &ObservationPlan,
    config: &UNetConfig,
    cfg: &TrainConfig,
    norm: Normalization,
    exec: Exec,
    on_epoch: &mut dyn FnMut(&EpochRecord, &[f32]),
) -> Result<Trained<UNetConfig>> {
    check_plan(train, plan)?;
    let net = UNet::new(config.clone())?;
    let tr = PreparedSet::new(train, plan, &norm)?;
    let va = val.map(|v| PreparedSet::new(v, plan, &norm)).transpose()?;
    let obj = UNetObjective {
        net: &net,
        plan,
        train: &tr,
        val: va.as_ref(),
        lambda_reg: cfg.lambda_reg,
        norm,
        micro_batch: cfg.micro_batch,
    };
    let (params, history) = fit(&obj, cfg, exec, on_epoch)?;
    Ok(Trained {
        config: config.clone(),
        params,
        history,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn train_patch_mlp(
    train: &[Sample],
    val: Option<&[Sample]>,
    plan: &ObservationPlan,
    spec: &PatchSpec,
    config: &MlpConfig,
    cfg: &TrainConfig,
    norm: Normalization,
    exec: Exec,
) -> Result<Trained<MlpConfig>> {
    check_plan(train, plan)?;
    spec.validate()?;
    if config.input() != plan.len() || config.output() != spec.len() {
        return Err(Error::Config(format!(
            "MLP sizes {:?} do not match {} sensors and a {}-cell patch",
            config.sizes,
            plan.len(),
            spec.len()
        )));
    }
    let mlp = Mlp::new(config.clone())?;
    let tr = PreparedSet::new(train, plan, &norm)?;
    let va = val.map(|v| PreparedSet::new(v, plan, &norm)).transpose()?;
    let obj = PatchObjective {
        mlp: &mlp,
        spec,
        train: &tr,
        val: va.as_ref(),
        norm,
        micro_batch: cfg.micro_batch,
    };
    let (params, history) = fit(&obj, cfg, exec, &mut |_, _| {})?;
    Ok(Trained {
        config: config.clone(),
        params,
        history,
    })
}

pub fn train_nn_baseline(
    train: &[Sample],
    val: Option<&[Sample]>,
    plan: &ObservationPlan,
    config: &NnBaselineConfig,
    cfg: &TrainConfig,
    norm: Normalization,
    exec: Exec,
) -> Result<Trained<NnBaselineConfig>> {
    check_plan(train, plan)?;
    if config.inputs != plan.len() {
        return Err(Error::Config(format!(
            "baseline expects {} inputs, plan has {}",
            config.inputs,
            plan.len()
        )));
    }
    let model = NnBaseline::new(config.clone(), plan.grid_n)?;
    let tr = PreparedSet::new(train, plan, &norm)?;
    let va = val.map(|v| PreparedSet::new(v, plan, &norm)).transpose()?;
    let obj = NnBaselineObjective {
        model: &model,
        train: &tr,
        val: va.as_ref(),
        norm,
        micro_batch: cfg.micro_batch,
    };
    let (params, history) = fit(&obj, cfg, exec, &mut |_, _| {})?;
    Ok(Trained {
        config: config.clone(),
        params,
        history,
    })
}

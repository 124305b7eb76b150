use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use tfr_core::dataset::generate_dataset;
use tfr_core::observation::{extract_observations, select_points, Strategy};
use tfr_core::{Exec, Layout, Normalization, ObservationPlan, ObservationSet};
use tfr_recon::model::{mlp_checkpoint, unet_checkpoint};
use tfr_recon::train::unet_predict;
use tfr_recon::{
    train_patch_mlp, train_unet, Checkpoint, Mlp, MlpConfig, PatchSpec, ReconModel, TrainConfig, Trained, UNet,
    UNetConfig,
};

fn tiny_unet() -> UNetConfig {
    UNetConfig {
        base_width: 4,
        norm_groups: 2,
        ..UNetConfig::default()
    }
}

fn random_params(len: usize, rng: &mut ChaCha20Rng) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}

fn setup(n: usize, m: usize) -> (Layout, ObservationPlan) {
    let layout = Layout::builtin("case1").unwrap().with_grid_n(n).unwrap();
    let plan = select_points(Strategy::Uniform, m, &layout, 0).unwrap();
    (layout, plan)
}

/// Dense layers written out as explicit sums over the stored weight rows.
fn hand_mlp(mlp: &Mlp, p: &[f32], x: &[f32]) -> Vec<f64> {
    let sizes = &mlp.config.sizes;
    let mut h: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    for (k, w) in sizes.windows(2).enumerate() {
        let (din, dout) = (w[0], w[1]);
        let weight = mlp.layout.entries.iter().find(|e| e.name == format!("fc{}.weight", k + 1)).unwrap();
        let bias = mlp.layout.entries.iter().find(|e| e.name == format!("fc{}.bias", k + 1)).unwrap();
        let mut y = vec![0.0f64; dout];
        for (o, yo) in y.iter_mut().enumerate() {
            *yo = p[bias.offset + o] as f64;
            for (i, hi) in h.iter().enumerate() {
                *yo += p[weight.offset + o * din + i] as f64 * hi;
            }
            if k + 2 < sizes.len() {
                *yo = yo.max(0.0);
            }
        }
        h = y;
    }
    h
}

#[test]
fn mlp_matches_hand_matmul() {
    let mut rng = ChaCha20Rng::seed_from_u64(42);
    for trial in 0..10 {
        let m = rng.gen_range(1..20);
        let out = rng.gen_range(1..60);
        let mlp = Mlp::new(MlpConfig::patch(m, out)).unwrap();
        let p = random_params(mlp.n_params(), &mut rng);
        let batch = 3;
        let x = random_params(batch * m, &mut rng);
        let (y, _) = mlp.forward(&p, &x, batch);
        for b in 0..batch {
            let want = hand_mlp(&mlp, &p, &x[b * m..(b + 1) * m]);
            for (got, w) in y[b * out..(b + 1) * out].iter().zip(&want) {
                let err = (*got as f64 - w).abs();
                assert!(err <= 1e-5 * w.abs().max(1.0), "trial {trial}: {got} vs {w}");
            }
        }
    }
}

#[test]
fn unet_keeps_the_grid_side() {
    let net = UNet::new(tiny_unet()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let p = net.layout.initialize(&mut rng);
    for n in [16, 50, 64, 200] {
        let (_, plan) = setup(n, 16);
        let obs = random_params(2 * 16, &mut rng);
        let y = unet_predict(&net, &p, &plan, &obs);
        assert_eq!(y.len(), 2 * n * n, "N = {n}");
        assert!(y.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn zeroed_output_layers_predict_the_reference_temperature() {
    let (layout, plan) = setup(32, 16);
    let net = UNet::new(tiny_unet()).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut up = random_params(net.n_params(), &mut rng);
    for e in net.layout.entries.iter().filter(|e| e.name.starts_with("outc.")) {
        up[e.range()].fill(0.0);
    }
    let spec = PatchSpec::default_for(&layout).unwrap();
    let mlp_cfg = MlpConfig::patch(16, spec.len());
    let mlp = Mlp::new(mlp_cfg.clone()).unwrap();
    let mut mp = random_params(mlp.n_params(), &mut rng);
    let (offset, len) = mlp.output_layer();
    mp[offset..offset + len].fill(0.0);

    let norm = Normalization::default();
    let model = ReconModel::new(tiny_unet(), up, Some((mlp_cfg, mp, spec)), norm, plan).unwrap();
    let obs = ObservationSet {
        values: (0..16).map(|i| 300.0 + 3.0 * i as f64).collect(),
    };
    let field = model.reconstruct(&obs).unwrap();
    assert!(field.values().iter().all(|&t| t == norm.t_ref), "{:?}", field.values());
}

fn tiny_training() -> (tfr_core::dataset::Dataset, ObservationPlan, TrainConfig) {
    let (layout, plan) = setup(16, 4);
    let ds = generate_dataset(&layout, 6, 0, Exec::Sequential).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        micro_batch: 2,
        val_every: 1,
        ..TrainConfig::default()
    };
    (ds, plan, cfg)
}

fn fit(exec: Exec) -> Trained<UNetConfig> {
    let (ds, plan, cfg) = tiny_training();
    train_unet(&ds.samples[..4], Some(&ds.samples[4..]), &plan, &tiny_unet(), &cfg, Normalization::default(), exec, &mut |_, _| {})
        .unwrap()
}

#[test]
fn training_is_deterministic() {
    let a = fit(Exec::Sequential);
    let b = fit(Exec::Sequential);
    assert_eq!(a.params, b.params);
    let losses = |t: &Trained<UNetConfig>| -> Vec<(f64, f64, f64, Option<f64>)> {
        t.history.epochs.iter().map(|e| (e.lr, e.train_loss, e.grad_component, e.val_mae)).collect()
    };
    assert_eq!(losses(&a), losses(&b));
    assert_eq!(fit(Exec::default()).params, a.params);
    assert_eq!(a.history.epochs.len(), 2);
}

#[test]
fn checkpoints_round_trip_through_files() {
    let (ds, plan, cfg) = tiny_training();
    let norm = Normalization::default();
    let layout = Layout::builtin("case1").unwrap().with_grid_n(16).unwrap();
    let spec = PatchSpec::bottom_row(&layout, 6).unwrap();
    let unet = fit(Exec::Sequential);
    let mlp = train_patch_mlp(&ds.samples, None, &plan, &spec, &MlpConfig::patch(4, 6), &cfg, norm, Exec::Sequential)
        .unwrap();
    let id = ds.header.id();
    let cu = unet_checkpoint(&unet, &plan, &cfg, norm, &id).unwrap();
    let cm = mlp_checkpoint(&mlp, &spec, &plan, &cfg, norm, &id).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (pu, pm) = (dir.path().join("u.tfrm"), dir.path().join("m.tfrm"));
    cu.save(&pu).unwrap();
    cm.save(&pm).unwrap();
    let (lu, lm) = (Checkpoint::load(&pu).unwrap(), Checkpoint::load(&pm).unwrap());
    assert_eq!(lu, cu);
    assert_eq!(lm, cm);
    assert_eq!(lu.plan().unwrap(), plan);

    let model = ReconModel::from_checkpoints(&lu, Some(&lm)).unwrap();
    let obs = extract_observations(&ds.samples[0].field, &plan).unwrap();
    let stitched = model.reconstruct(&obs).unwrap();
    let patch = model.mlp_forward(&obs).unwrap();
    assert_eq!(spec.gather(&stitched), patch);
    let other = select_points(Strategy::Uniform, 9, &layout, 0).unwrap();
    assert!(model.ensure_plan(&other).is_err());
    assert!(ReconModel::from_checkpoints(&lm, None).is_err());
}

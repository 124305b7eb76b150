//! Acceptance suite A1–A8. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Trained artifacts live under `target/acceptance-cache/`. A cached
//! checkpoint is reused only when its header matches the expected model and
//! training configuration, dataset id and plan; otherwise it is retrained,
//! which for A3 takes several hours on one CPU core.
//!
//! Positional arguments select criteria (`cargo test --test acceptance -- A1 A2`).

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfr::commands::{train, ModelChoice, TrainArgs};
use tfr_core::baselines::{
    gauss_interp_table, kriging_table, GaussInterpConfig, KrigingConfig,
};
use tfr_core::dataset::{generate_dataset, generate_special_set, Dataset, DatasetKind, DatasetReader};
use tfr_core::layout::PowerField;
use tfr_core::metrics::{compute_metrics, evaluate, Aggregate, ComponentMask, ReportMeta, Reconstructor};
use tfr_core::observation::{extract_observations, select_points};
use tfr_core::solver::sink_flux;
use tfr_core::{Exec, Grid, Layout, ObservationPlan, ObservationSet, SteadySolver, Strategy};
use tfr_recon::patch::DEFAULT_PATCH_WIDTH;
use tfr_recon::{
    field_loss, gradient_loss, patch_loss, total_loss, Checkpoint, ModelKind, ReconModel, TrainConfig, UNetConfig,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn cache_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../target/acceptance-cache")
}

fn desk_layout() -> Layout {
    Layout::builtin("case1").unwrap().with_grid_n(64).unwrap()
}

const DESK_SAMPLES: u64 = 2000;
const DESK_SEED: u64 = 0;
const A7_COUNTS: [usize; 3] = [4, 9, 16];
const A7_BASE_WIDTH: usize = 16;
const A7_EPOCHS: usize = 25;

// ---------------------------------------------------------------------------
// A1

fn single_source(n: usize) -> Layout {
    Layout::parse(&format!(
        "grid_n = {n}\nsources = [ {{ id = 0, x = 0.05, y = 0.05, w = 0.02, h = 0.02 }} ]"
    ))
    .unwrap()
}

/// Max nodal error against T* = T0 + A·cos(πx/L)·(1 − cos(πy/L)).
fn mms_error(n: usize) -> f64 {
    let layout = single_source(n);
    let a = PI / layout.domain_size;
    let (lambda, t0, amp) = (layout.conductivity, layout.sink_temperature(), 10.0);
    let phi = Grid::from_fn(n, |r, c| {
        let (x, y) = (layout.node_coord(c), layout.node_coord(r));
        -lambda * amp * a * a * (a * x).cos() * (2.0 * (a * y).cos() - 1.0)
    });
    let field = SteadySolver::new(&layout).unwrap().solve_power_field(&PowerField(phi)).unwrap();
    let mut err: f64 = 0.0;
    for r in 0..n {
        for c in 0..n {
            let (x, y) = (layout.node_coord(c), layout.node_coord(r));
            let exact = t0 + amp * (a * x).cos() * (1.0 - (a * y).cos());
            err = err.max((field.grid.get(r, c) - exact).abs());
        }
    }
    err
}

fn a1() -> Outcome {
    let ns = [50, 100, 200];
    let errs: Vec<f64> = ns.iter().map(|&n| mms_error(n)).collect();
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    ensure!(
        orders.iter().all(|o| (1.7..=2.3).contains(o)),
        "MMS orders {orders:.3?} (errors {errs:?})"
    );

    let layout = Layout::builtin("case1").unwrap();
    let zero = SteadySolver::new(&layout).unwrap().solve(&vec![0.0; layout.n_sources()]).unwrap();
    let dev = zero.grid.values().iter().map(|t| (t - 298.0).abs()).fold(0.0, f64::max);
    ensure!(dev < 1e-6, "zero-power field deviates from 298 K by {dev:e}");

    let rel: Vec<f64> = ns
        .iter()
        .map(|&n| {
            let l = single_source(n);
            let f = SteadySolver::new(&l).unwrap().solve(&[30000.0]).unwrap();
            let p = l.analytic_power(&[30000.0]);
            (sink_flux(&f, &l) - p).abs() / p
        })
        .collect();
    ensure!(rel[2] < 0.05, "energy balance at N=200 off by {:.3}%", 100.0 * rel[2]);
    ensure!(rel[0] > rel[1] && rel[1] > rel[2], "energy-balance errors not decreasing: {rel:.4?}");
    Ok(format!(
        "MMS orders {:.3}/{:.3}; zero-power max deviation {dev:.1e} K; energy balance {:.2}% → {:.2}% → {:.2}%",
        orders[0],
        orders[1],
        100.0 * rel[0],
        100.0 * rel[1],
        100.0 * rel[2]
    ))
}

// ---------------------------------------------------------------------------
// A2

/// 2×2 grid with rows listed bottom first: [[a, b], [c, d]] has row 0
/// (the sink edge) = [a, b].
fn g2(rows: [[f64; 2]; 2]) -> Grid {
    Grid::from_fn(2, |r, c| rows[r][c])
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn a2() -> Outcome {
    let fl = field_loss(&g2([[1.0, 2.0], [3.0, 4.0]]), &g2([[1.0, 2.0], [3.0, 5.0]])).unwrap();
    ensure!(close(fl, 0.25), "field_loss {fl}, expected 0.25");
    let same = g2([[1.0, 2.0], [3.0, 4.0]]);
    ensure!(field_loss(&same, &same).unwrap() == 0.0, "field_loss(x, x) ≠ 0");

    // Two column pairs with |Δ| = 1 against zero truth, no row differences:
    // (1 + 1) / (2·2).
    let pred = g2([[0.0, 1.0], [0.0, 1.0]]);
    let zero = Grid::zeros(2);
    let gl = gradient_loss(&pred, &zero).unwrap();
    ensure!(close(gl, 0.5), "gradient_loss {gl}, expected 0.5");
    // field part (0 + 1 + 0 + 1)/4 = 0.5; total = 0.5 + 0.1·0.5
    let tl = total_loss(&pred, &zero, 0.1).unwrap();
    ensure!(close(tl, 0.55), "total_loss {tl}, expected 0.55");
    ensure!(close(total_loss(&pred, &zero, 0.0).unwrap(), 0.5), "total_loss with λ=0 ≠ field_loss");

    let pl = patch_loss(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
    ensure!(close(pl, 1.5), "patch_loss {pl}, expected 1.5");

    let mask = ComponentMask {
        n: 2,
        cells: vec![true, true, false, false],
    };
    let m = compute_metrics(&g2([[1.0, 2.0], [3.0, 4.0]]), &g2([[1.0, 2.0], [3.0, 6.0]]), &mask).unwrap();
    ensure!(
        close(m.mae, 0.5) && close(m.cmae, 0.0) && close(m.maxae, 2.0) && close(m.mtae, 2.0),
        "metrics {m:?}, expected MAE 0.5, CMAE 0, MaxAE 2, MT-AE 2"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_shift: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(2..12);
        let p = Grid::from_fn(n, |_, _| rng.gen_range(290.0..340.0));
        let t = Grid::from_fn(n, |_, _| rng.gen_range(290.0..340.0));
        let c = rng.gen_range(-50.0..50.0);
        let base = gradient_loss(&p, &t).unwrap();
        let shifted = gradient_loss(&p.map(|v| v + c), &t).unwrap();
        worst_shift = worst_shift.max((base - shifted).abs() / base.max(1e-300));
    }
    ensure!(worst_shift < 1e-9, "gradient_loss shift sensitivity {worst_shift:e}");

    let full = ComponentMask {
        n: 6,
        cells: vec![true; 36],
    };
    for i in 0..1000 {
        let scale = rng.gen_range(0.01..100.0);
        let p = Grid::from_fn(6, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let t = Grid::from_fn(6, |_, _| rng.gen_range(-1.0..1.0) * scale);
        let m = compute_metrics(&p, &t, &full).unwrap();
        ensure!(m.mtae <= m.maxae + 1e-12, "pair {i}: MT-AE {} > MaxAE {}", m.mtae, m.maxae);
    }
    Ok(format!(
        "field 0.25, gradient 0.5, total 0.55, patch 1.5, metrics (0.5, 0, 2, 2); shift invariance ≤ {worst_shift:.1e} over 100 fields; MT-AE ≤ MaxAE on 1000 pairs"
    ))
}

// ---------------------------------------------------------------------------
// Desk-scale artifacts shared by A3–A7

struct Desk {
    layout: Layout,
    ds_path: PathBuf,
    ds: Dataset,
    plan: ObservationPlan,
    model: ReconModel,
}

fn ensure_dataset(path: &Path, layout: &Layout) -> Result<Dataset, String> {
    let expected = |h: &tfr_core::dataset::DatasetHeader| {
        h.kind == DatasetKind::General
            && h.n_samples == DESK_SAMPLES
            && h.rng_seed == DESK_SEED
            && h.layout_hash == layout.hash()
    };
    let fresh = DatasetReader::open(path).map(|r| expected(r.header())).unwrap_or(false);
    if !fresh {
        eprintln!("  generating {DESK_SAMPLES} samples at N={} → {}", layout.grid_n, path.display());
        let ds = generate_dataset(layout, DESK_SAMPLES, DESK_SEED, Exec::Parallel).map_err(|e| e.to_string())?;
        ds.write(path).map_err(|e| e.to_string())?;
    }
    Dataset::read(path).map_err(|e| e.to_string())
}

fn ensure_plan(path: &Path, layout: &Layout, m: usize) -> Result<ObservationPlan, String> {
    let want = select_points(Strategy::Uniform, m, layout, 0).map_err(|e| e.to_string())?;
    if ObservationPlan::load(path).ok().as_ref() != Some(&want) {
        want.save(path).map_err(|e| e.to_string())?;
    }
    Ok(want)
}

fn train_args(ds: &Path, plan: &Path, model: ModelChoice, out: &Path) -> TrainArgs {
    TrainArgs {
        dataset: ds.to_path_buf(),
        plan: Some(plan.to_path_buf()),
        model,
        layout: "case1".into(),
        grid_n: Some(64),
        out: Some(out.to_path_buf()),
        sweep: None,
        desk: true,
        epochs: None,
        lr: None,
        lr_min: None,
        batch_size: None,
        lambda_reg: None,
        seed: None,
        micro_batch: None,
        val_every: None,
        base_width: None,
        depth: None,
        norm_groups: None,
        patch_width: DEFAULT_PATCH_WIDTH,
        train_limit: None,
        no_val: false,
        serial: false,
    }
}

/// Reuse `dir/checkpoint.tfrm` if it was trained exactly as `args` asks.
fn ensure_checkpoint(args: &TrainArgs, ds: &Dataset, plan: &ObservationPlan) -> Result<Checkpoint, String> {
    let path = args.out.as_ref().unwrap().join("checkpoint.tfrm");
    let matches = |c: &Checkpoint| {
        let kind_ok = match args.model {
            ModelChoice::Unet => c.header.kind == ModelKind::Unet && c.header.unet.as_ref() == Some(&args.unet_config()),
            ModelChoice::Mlp => {
                c.header.kind == ModelKind::Mlp
                    && c.header.patch.as_ref().map(|p| p.len()) == Some(args.patch_width)
            }
            ModelChoice::NnBaseline => c.header.kind == ModelKind::NnBaseline,
        };
        kind_ok
            && c.header.train == args.train_config()
            && c.header.dataset_id == ds.header.id()
            && c.plan().map(|p| p == *plan).unwrap_or(false)
    };
    match Checkpoint::load(&path) {
        Ok(c) if matches(&c) => return Ok(c),
        Ok(_) => eprintln!("  cached {} is stale; retraining", path.display()),
        Err(_) => eprintln!("  no cached {}; training (this can take hours)", path.display()),
    }
    train(args).map_err(|e| format!("{e:#}"))?;
    let c = Checkpoint::load(&path).map_err(|e| e.to_string())?;
    if !matches(&c) {
        return Err(format!("freshly trained {} does not match its configuration", path.display()));
    }
    Ok(c)
}

fn desk() -> Result<Desk, String> {
    let layout = desk_layout();
    let dir = cache_root().join("a3");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let ds_path = dir.join("general.tfrd");
    let ds = ensure_dataset(&ds_path, &layout)?;
    let plan_path = dir.join("plan-m16.toml");
    let plan = ensure_plan(&plan_path, &layout, 16)?;
    let unet = ensure_checkpoint(&train_args(&ds_path, &plan_path, ModelChoice::Unet, &dir.join("unet")), &ds, &plan)?;
    let mlp = ensure_checkpoint(&train_args(&ds_path, &plan_path, ModelChoice::Mlp, &dir.join("mlp")), &ds, &plan)?;
    let model = ReconModel::from_checkpoints(&unet, Some(&mlp)).map_err(|e| e.to_string())?;
    Ok(Desk {
        layout,
        ds_path,
        ds,
        plan,
        model,
    })
}

fn score<R: Reconstructor + ?Sized>(model: &R, samples: &[tfr_core::dataset::Sample], first: usize, d: &Desk) -> Aggregate {
    let mask = ComponentMask::from_layout(&d.layout);
    evaluate(model, samples, first, &d.plan, &mask, ReportMeta::default(), Exec::Parallel)
        .unwrap()
        .aggregate()
}

fn held_out(d: &Desk) -> (&[tfr_core::dataset::Sample], usize) {
    (d.ds.test(), d.ds.split_index())
}

// ---------------------------------------------------------------------------
// A3–A7

fn a3(d: &Desk) -> Outcome {
    ensure!(d.ds.train().len() == 1600 && d.ds.test().len() == 400, "split is not 1600/400");
    let (test, first) = held_out(d);
    let unet = score(&d.model.unet_only(), test, first, d);
    let full = score(&d.model, test, first, d);
    let detail = format!(
        "UNet held-out MAE {:.4} K (< 0.5), MT-AE {:.4} K (< 1.5); stitched MAE {:.4} K, MT-AE {:.4} K",
        unet.mae, unet.mtae, full.mae, full.mtae
    );
    ensure!(unet.mae < 0.5 && unet.mtae < 1.5, "{detail}");
    Ok(detail)
}

fn a4(d: &Desk) -> Outcome {
    let (test, first) = held_out(d);
    let unet = score(&d.model.unet_only(), test, first, d);
    let full = score(&d.model, test, first, d);
    let gain = 1.0 - full.maxae / unet.maxae;
    let detail = format!(
        "MaxAE mean {:.4} → {:.4} K ({:.1}% lower, need ≥ 25%); set max {:.4} → {:.4} K",
        unet.maxae,
        full.maxae,
        100.0 * gain,
        unet.maxae_set_max,
        full.maxae_set_max
    );
    ensure!(gain >= 0.25, "{detail}");
    Ok(detail)
}

fn a5(d: &Desk) -> Outcome {
    let path = cache_root().join("a5-special.tfrd");
    let fresh = DatasetReader::open(&path)
        .map(|r| r.header().kind == DatasetKind::Special && r.header().layout_hash == d.layout.hash())
        .unwrap_or(false);
    if !fresh {
        generate_special_set(&d.layout, Exec::Parallel).unwrap().write(&path).unwrap();
    }
    let special = Dataset::read(&path).unwrap();
    ensure!(special.len() == 1024, "special set has {} samples, expected 1024", special.len());
    let (test, first) = held_out(d);
    let general = score(&d.model, test, first, d);
    let spec = score(&d.model, &special.samples, 0, d);
    let off = special
        .samples
        .iter()
        .find(|s| s.powers.iter().all(|&p| p == 0.0))
        .ok_or("no all-off sample in the special set")?;
    let obs = extract_observations(&off.field, &d.plan).unwrap();
    let pred = d.model.reconstruct(&obs).unwrap();
    let off_dev = pred.values().iter().map(|t| (t - 298.0).abs()).fold(0.0, f64::max);
    let ratio = spec.mae / general.mae;
    let detail = format!(
        "1024 samples; special MAE {:.4} K vs general {:.4} K ({ratio:.2}×, need < 10×); all-off max |T − 298| {off_dev:.4} K (< 0.5)",
        spec.mae, general.mae
    );
    ensure!(ratio < 10.0 && off_dev < 0.5, "{detail}");
    Ok(detail)
}

fn a6(d: &Desk) -> Outcome {
    let (test, first) = held_out(d);
    let proposed = score(&d.model, test, first, d).mae;
    let kr_table = kriging_table(&d.plan, &d.layout, KrigingConfig::default(), Exec::Parallel).unwrap();
    let ga_table = gauss_interp_table(&d.plan, &d.layout, GaussInterpConfig::default(), Exec::Parallel).unwrap();
    let kriging = score(&kr_table, test, first, d).mae;
    let gauss = score(&ga_table, test, first, d).mae;
    let ordering = format!(
        "proposed {proposed:.4} K < gauss {gauss:.4} K < 10×proposed {:.4} K; proposed < kriging {kriging:.4} K",
        10.0 * proposed
    );
    ensure!(proposed < gauss && gauss < 10.0 * proposed && proposed < kriging, "ordering violated: {ordering}");

    let exact = kriging_table(&d.plan, &d.layout, KrigingConfig { nugget: 0.0, ..KrigingConfig::default() }, Exec::Parallel)
        .unwrap();
    let mut worst_rel: f64 = 0.0;
    for s in test.iter().take(50) {
        let obs = extract_observations(&s.field, &d.plan).unwrap();
        let mean = obs.values.iter().sum::<f64>() / obs.len() as f64;
        let sigma = (obs.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / obs.len() as f64).sqrt();
        let pred = exact.apply(&obs).unwrap();
        for (&(r, c), &v) in d.plan.points.iter().zip(&obs.values) {
            worst_rel = worst_rel.max((pred.get(r, c) - v).abs() / sigma);
        }
    }
    ensure!(worst_rel <= 1e-6, "kriging misses sensor readings by {worst_rel:.2e}·σ");

    let mut worst_const: f64 = 0.0;
    for c in [298.0, 310.5, -3.25] {
        let obs = ObservationSet {
            values: vec![c; d.plan.len()],
        };
        for t in [&exact, &kr_table, &ga_table] {
            let g = t.apply(&obs).unwrap();
            worst_const = g.values().iter().map(|v| (v - c).abs()).fold(worst_const, f64::max);
        }
    }
    ensure!(worst_const <= 1e-9, "constant readings reproduced only to {worst_const:e}");
    Ok(format!(
        "{ordering}; kriging sensor exactness {worst_rel:.1e}·σ; constant fields to {worst_const:.1e}"
    ))
}

fn a7(d: &Desk) -> Outcome {
    let dir = cache_root().join("a7");
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let (test, first) = held_out(d);
    let mut maes = Vec::new();
    for m in A7_COUNTS {
        let plan_path = dir.join(format!("plan-m{m}.toml"));
        let plan = ensure_plan(&plan_path, &d.layout, m)?;
        let mut args = train_args(&d.ds_path, &plan_path, ModelChoice::Unet, &dir.join(format!("unet-m{m}")));
        args.base_width = Some(A7_BASE_WIDTH);
        args.epochs = Some(A7_EPOCHS);
        args.no_val = true;
        let ckpt = ensure_checkpoint(&args, &d.ds, &plan)?;
        let model = ReconModel::from_checkpoints(&ckpt, None).unwrap();
        let mask = ComponentMask::from_layout(&d.layout);
        let agg = evaluate(&model, test, first, &plan, &mask, ReportMeta::default(), Exec::Parallel)
            .unwrap()
            .aggregate();
        maes.push(agg.mae);
    }
    let detail = format!(
        "MAE m=4 {:.4} K, m=9 {:.4} K, m=16 {:.4} K (base width {A7_BASE_WIDTH}, {A7_EPOCHS} epochs each)",
        maes[0], maes[1], maes[2]
    );
    ensure!(maes.windows(2).all(|w| w[1] <= 1.1 * w[0]), "not non-increasing within 10%: {detail}");
    Ok(detail)
}

// ---------------------------------------------------------------------------
// A8

fn a8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let layout = Layout::builtin("case1").unwrap().with_grid_n(32).unwrap();
    let serial = generate_dataset(&layout, 24, 11, Exec::Sequential).unwrap();
    let parallel = generate_dataset(&layout, 24, 11, Exec::Parallel).unwrap();
    let (ps, pp) = (tmp.path().join("s.tfrd"), tmp.path().join("p.tfrd"));
    serial.write(&ps).unwrap();
    parallel.write(&pp).unwrap();
    let (bs, bp) = (std::fs::read(&ps).unwrap(), std::fs::read(&pp).unwrap());
    ensure!(bs == bp, "serial and parallel dataset files differ");

    let back = Dataset::read(&ps).unwrap();
    ensure!(back.header == serial.header && back.samples == serial.samples, "dataset did not read back equal");
    let again = tmp.path().join("again.tfrd");
    back.write(&again).unwrap();
    ensure!(std::fs::read(&again).unwrap() == bs, "re-written dataset differs byte-wise");

    let plan = select_points(Strategy::Random, 9, &layout, 5).unwrap();
    let plan_path = tmp.path().join("plan.toml");
    plan.save(&plan_path).unwrap();
    let text = std::fs::read_to_string(&plan_path).unwrap();
    ensure!(text.contains("points") && text.contains(&layout.hash().to_hex()), "plan file lacks points or layout hash");
    ensure!(ObservationPlan::load(&plan_path).unwrap() == plan, "plan did not re-load equal");

    let cfg = UNetConfig {
        base_width: 8,
        ..UNetConfig::desk()
    };
    let tcfg = TrainConfig {
        epochs: 2,
        batch_size: 4,
        ..TrainConfig::desk()
    };
    let norm = tfr_core::Normalization::default();
    let run = |exec| {
        tfr_recon::train_unet(serial.train(), None, &plan, &cfg, &tcfg, norm, exec, &mut |_, _| {}).unwrap()
    };
    let (t1, t2) = (run(Exec::Sequential), run(Exec::Parallel));
    ensure!(t1.params == t2.params, "serial and parallel training produced different parameters");
    let ckpt = tfr_recon::model::unet_checkpoint(&t1, &plan, &tcfg, norm, &serial.header.id()).unwrap();
    let cp = tmp.path().join("m.tfrm");
    ckpt.save(&cp).unwrap();
    let loaded = Checkpoint::load(&cp).unwrap();
    ensure!(loaded == ckpt, "checkpoint did not read back equal");
    ensure!(loaded.to_bytes().unwrap() == std::fs::read(&cp).unwrap(), "checkpoint bytes differ after reload");
    Ok(format!(
        "24-sample dataset identical serial/parallel ({} bytes); dataset, plan and checkpoint round trips exact; training identical serial/parallel",
        bs.len()
    ))
}

// ---------------------------------------------------------------------------

fn run(id: &str, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &out {
        Ok(d) => println!("{id} PASS  {title} [{secs:.1}s]: {d}"),
        Err(d) => println!("{id} FAIL  {title} [{secs:.1}s]: {d}"),
    }
    out.is_ok()
}

fn main() {
    let selected: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let want = |id: &str| selected.is_empty() || selected.iter().any(|s| s.eq_ignore_ascii_case(id));
    let mut results = Vec::new();
    if want("A1") {
        results.push(run("A1", "solver correctness", a1));
    }
    if want("A2") {
        results.push(run("A2", "loss and metric oracles", a2));
    }
    let needs_desk = ["A3", "A4", "A5", "A6", "A7"].iter().any(|id| want(id));
    if needs_desk {
        let start = Instant::now();
        let prepared = catch_unwind(desk).unwrap_or_else(|_| Err("panicked while preparing".into()));
        eprintln!("  desk-scale artifacts ready in {:.1}s", start.elapsed().as_secs_f64());
        let checks: [(&str, &str, fn(&Desk) -> Outcome); 5] = [
            ("A3", "desk-scale end-to-end", a3),
            ("A4", "patchwise improvement", a4),
            ("A5", "special-set generalization", a5),
            ("A6", "baseline ordering", a6),
            ("A7", "sensor-count monotonicity", a7),
        ];
        for (id, title, f) in checks {
            if !want(id) {
                continue;
            }
            results.push(match &prepared {
                Ok(d) => run(id, title, || f(d)),
                Err(e) => run(id, title, || Err(format!("desk-scale preparation failed: {e}"))),
            });
        }
    }
    if want("A8") {
        results.push(run("A8", "determinism and persistence", a8));
    }
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

mod compare;
mod eval;
mod generate;
mod observe;
mod plot;
mod train;

pub use compare::{compare, CompareArgs};
pub use eval::{eval, load_reconstructor, BaselineChoice, EvalArgs, ModelSpec, Split};
pub use generate::{generate, GenerateArgs};
pub use observe::{observe, ObserveArgs};
pub use plot::{plot, PlotArgs};
pub use train::{train, ModelChoice, TrainArgs};

use std::path::Path;

use anyhow::{bail, Context, Result};
use tfr_core::dataset::Dataset;
use tfr_core::{Layout, ObservationPlan};

/// Load a dataset and check that it was generated on `layout`.
pub(crate) fn load_dataset(path: &Path, layout: &Layout) -> Result<Dataset> {
    let ds = Dataset::read(path).with_context(|| format!("reading dataset {}", path.display()))?;
    if ds.header.layout_hash != layout.hash() {
        bail!(
            "dataset {} was generated on layout {}, not on the given layout {} (grid {})",
            path.display(),
            ds.header.layout_hash.short(),
            layout.hash().short(),
            layout.grid_n
        );
    }
    Ok(ds)
}

pub(crate) fn load_plan(path: &Path, layout: &Layout) -> Result<ObservationPlan> {
    let plan = ObservationPlan::load(path).with_context(|| format!("reading plan {}", path.display()))?;
    plan.ensure_layout(&layout.hash())
        .with_context(|| format!("plan {} does not belong to this layout", path.display()))?;
    Ok(plan)
}

use serde::{Deserialize, Serialize};
use tfr_core::{Grid, Layout};

use crate::error::{Error, Result};

pub const DEFAULT_PATCH_WIDTH: usize = 52;

/// Ordered set of grid cells whose values the patch regressor owns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub grid_n: usize,
    pub cells: Vec<(usize, usize)>,
}

impl PatchSpec {
    /// `width` consecutive bottom-row nodes centred on the sink, shifted
    /// inward where they would leave the grid.
    pub fn bottom_row(layout: &Layout, width: usize) -> Result<Self> {
        let n = layout.grid_n;
        if width == 0 || width > n {
            return Err(Error::Config(format!(
                "patch width {width} must be in 1..={n}"
            )));
        }
        let centre = layout.sink.center / layout.spacing();
        let start = (centre - (width as f64 - 1.0) / 2.0).round().max(0.0) as usize;
        let start = start.min(n - width);
        Ok(PatchSpec {
            grid_n: n,
            cells: (start..start + width).map(|c| (0, c)).collect(),
        })
    }

    pub fn default_for(layout: &Layout) -> Result<Self> {
        Self::bottom_row(layout, DEFAULT_PATCH_WIDTH.min(layout.grid_n))
    }

    pub fn empty(grid_n: usize) -> Self {
        PatchSpec {
            grid_n,
            cells: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for &(r, c) in &self.cells {
            if r >= self.grid_n || c >= self.grid_n {
                return Err(Error::Config(format!(
                    "patch cell ({r}, {c}) outside a {0}×{0} grid",
                    self.grid_n
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::Config(format!("patch cell ({r}, {c}) repeated")));
            }
        }
        Ok(())
    }

    /// Values of `field` at the patch cells, in patch order.
    pub fn gather(&self, field: &Grid) -> Vec<f64> {
        self.cells.iter().map(|&(r, c)| field.get(r, c)).collect()
    }
}

/// Overwrite the patch cells of `field` with `patch`.
pub fn stitch(field: &Grid, patch: &[f64], spec: &PatchSpec) -> Result<Grid> {
    if field.n() != spec.grid_n || patch.len() != spec.len() {
        return Err(Error::Shape(format!(
            "stitching {} values into a {}-cell patch on a {}×{} field",
            patch.len(),
            spec.len(),
            field.n(),
            field.n()
        )));
    }
    let mut out = field.clone();
    for (&(r, c), &v) in spec.cells.iter().zip(patch) {
        out.set(r, c, v);
    }
    Ok(out)
}

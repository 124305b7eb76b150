//! Classical interpolators: ordinary kriging and global Gaussian-weighted
//! interpolation. Sensors are fixed, so both reduce to a per-plan table of
//! node weights that is applied to each sample's readings.

use nalgebra::{DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::grid::Grid;
use crate::layout::Layout;
use crate::metrics::Reconstructor;
use crate::observation::{ObservationPlan, ObservationSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrigingConfig {
    /// Gaussian covariance length scale ℓ, metres.
    pub length_scale: f64,
    /// Diagonal nugget as a fraction of the sill σ².
    pub nugget: f64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        KrigingConfig {
            length_scale: 0.03,
            nugget: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussInterpConfig {
    /// Kernel bandwidth σ_g, metres.
    pub bandwidth: f64,
}

impl Default for GaussInterpConfig {
    fn default() -> Self {
        GaussInterpConfig { bandwidth: 0.025 }
    }
}

/// Node-by-sensor weight matrix: each output node is a fixed linear
/// combination of the readings.
#[derive(Clone, Debug)]
pub struct WeightTable {
    pub name: String,
    pub n: usize,
    pub m: usize,
    weights: Vec<f64>,
}

impl WeightTable {
    pub fn node_weights(&self, node: usize) -> &[f64] {
        &self.weights[node * self.m..(node + 1) * self.m]
    }

    pub fn apply(&self, obs: &ObservationSet) -> Result<Grid> {
        if obs.len() != self.m {
            return Err(Error::Shape(format!(
                "{} readings for a {}-sensor interpolator",
                obs.len(),
                self.m
            )));
        }
        let values = self
            .weights
            .chunks_exact(self.m)
            .map(|w| w.iter().zip(&obs.values).map(|(a, b)| a * b).sum())
            .collect();
        Grid::from_vec(self.n, values)
    }

    fn build(
        name: String,
        layout: &Layout,
        m: usize,
        exec: Exec,
        weights_at: impl Fn(f64, f64) -> Vec<f64> + Sync + Send,
    ) -> Self {
        let n = layout.grid_n;
        let mut weights = vec![0.0; n * n * m];
        exec.for_each_chunk_mut(&mut weights, n * m, |row, chunk| {
            let y = layout.node_coord(row);
            for col in 0..n {
                let w = weights_at(layout.node_coord(col), y);
                chunk[col * m..(col + 1) * m].copy_from_slice(&w);
            }
        });
        WeightTable { name, n, m, weights }
    }
}

impl Reconstructor for WeightTable {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn reconstruct(&self, obs: &ObservationSet) -> Result<Grid> {
        self.apply(obs)
    }
}

/// Ordinary kriging system for a fixed sensor set, with unit sill.
pub struct Kriging {
    sensors: Vec<(f64, f64)>,
    cfg: KrigingConfig,
    lu: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Kriging {
    pub fn fit(sensors: &[(f64, f64)], cfg: KrigingConfig) -> Result<Self> {
        if sensors.len() < 2 {
            return Err(Error::InvalidArgument(
                "ordinary kriging needs at least 2 sensors".into(),
            ));
        }
        if !(cfg.length_scale > 0.0) || !(cfg.nugget >= 0.0) {
            return Err(Error::InvalidArgument(
                "kriging needs length_scale > 0 and nugget ≥ 0".into(),
            ));
        }
        let scale = cfg.length_scale;
        for i in 0..sensors.len() {
            for j in 0..i {
                let d = dist(sensors[i], sensors[j]);
                if d < 1e-9 * scale {
                    return Err(Error::SingularKriging(format!(
                        "sensors {j} {:?} and {i} {:?} coincide",
                        sensors[j], sensors[i]
                    )));
                }
            }
        }
        let m = sensors.len();
        let mut k = DMatrix::<f64>::zeros(m + 1, m + 1);
        for i in 0..m {
            for j in 0..m {
                k[(i, j)] = gaussian_cov(dist(sensors[i], sensors[j]), scale);
            }
            k[(i, i)] += cfg.nugget;
            k[(i, m)] = 1.0;
            k[(m, i)] = 1.0;
        }
        let lu = k.lu();
        if !lu.is_invertible() {
            return Err(Error::SingularKriging(
                "kriging matrix is singular; look for near-duplicate sensors".into(),
            ));
        }
        Ok(Kriging {
            sensors: sensors.to_vec(),
            cfg,
            lu,
        })
    }

    /// Sensor weights (without the Lagrange multiplier) for a target point.
    pub fn weights_at(&self, x: f64, y: f64) -> Vec<f64> {
        self.solve_at(x, y).0
    }

    /// Weights and Lagrange multiplier.
    pub fn solve_at(&self, x: f64, y: f64) -> (Vec<f64>, f64) {
        let m = self.sensors.len();
        let mut rhs = DVector::<f64>::zeros(m + 1);
        for (i, &s) in self.sensors.iter().enumerate() {
            rhs[i] = gaussian_cov(dist((x, y), s), self.cfg.length_scale);
        }
        rhs[m] = 1.0;
        let sol = self.lu.solve(&rhs).expect("kriging LU is invertible");
        (sol.as_slice()[..m].to_vec(), sol[m])
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

fn gaussian_cov(r: f64, length_scale: f64) -> f64 {
    (-r * r / (2.0 * length_scale * length_scale)).exp()
}

pub fn kriging_table(
    plan: &ObservationPlan,
    layout: &Layout,
    cfg: KrigingConfig,
    exec: Exec,
) -> Result<WeightTable> {
    plan.ensure_layout(&layout.hash())?;
    let model = Kriging::fit(&plan.coordinates(layout), cfg)?;
    let table = WeightTable::build("kriging".into(), layout, plan.len(), exec, |x, y| {
        model.weights_at(x, y)
    });
    if table.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::SingularKriging("non-finite kriging weights".into()));
    }
    Ok(table)
}

pub fn gauss_interp_table(
    plan: &ObservationPlan,
    layout: &Layout,
    cfg: GaussInterpConfig,
    exec: Exec,
) -> Result<WeightTable> {
    plan.ensure_layout(&layout.hash())?;
    if !(cfg.bandwidth > 0.0) {
        return Err(Error::InvalidArgument("bandwidth must be positive".into()));
    }
    let sensors = plan.coordinates(layout);
    let two_s2 = 2.0 * cfg.bandwidth * cfg.bandwidth;
    Ok(WeightTable::build(
        "gauss-interp".into(),
        layout,
        plan.len(),
        exec,
        |x, y| {
            let d2: Vec<f64> = sensors
                .iter()
                .map(|&s| (x - s.0).powi(2) + (y - s.1).powi(2))
                .collect();
            // shift by the nearest sensor so far nodes do not underflow to 0/0
            let d2_min = d2.iter().copied().fold(f64::INFINITY, f64::min);
            let w: Vec<f64> = d2.iter().map(|d| (-(d - d2_min) / two_s2).exp()).collect();
            let total: f64 = w.iter().sum();
            w.into_iter().map(|v| v / total).collect()
        },
    ))
}

pub fn kriging_reconstruct(
    obs: &ObservationSet,
    plan: &ObservationPlan,
    layout: &Layout,
    cfg: KrigingConfig,
) -> Result<Grid> {
    kriging_table(plan, layout, cfg, Exec::default())?.apply(obs)
}

pub fn gauss_interp_reconstruct(
    obs: &ObservationSet,
    plan: &ObservationPlan,
    layout: &Layout,
    cfg: GaussInterpConfig,
) -> Result<Grid> {
    gauss_interp_table(plan, layout, cfg, Exec::default())?.apply(obs)
}

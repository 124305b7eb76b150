//! Sensor placement and readings.
//!
//! A plan is a fixed, ordered list of grid nodes. Its order defines the
//! input ordering of vector-form consumers, and the same plan is used for
//! training and inference.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hashing;
use crate::layout::{Layout, LayoutHash};
use crate::solver::TemperatureField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Uniform,
    Random,
    Physics,
    /// Explicit point list supplied by the user.
    Custom,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Strategy::Uniform => "uniform",
            Strategy::Random => "random",
            Strategy::Physics => "physics",
            Strategy::Custom => "custom",
        };
        f.write_str(s)
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Strategy::Uniform),
            "random" => Ok(Strategy::Random),
            "physics" | "physics-informed" => Ok(Strategy::Physics),
            "custom" => Ok(Strategy::Custom),
            other => Err(Error::InvalidArgument(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationPlan {
    pub points: Vec<(usize, usize)>,
    pub strategy: Strategy,
    pub seed: u64,
    pub grid_n: usize,
    pub layout_hash: LayoutHash,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    strategy: Strategy,
    seed: u64,
    grid_n: usize,
    layout_hash: String,
    /// (row, col) pairs, row 0 at the bottom edge.
    points: Vec<[usize; 2]>,
}

impl ObservationPlan {
    pub fn new(
        points: Vec<(usize, usize)>,
        strategy: Strategy,
        seed: u64,
        layout: &Layout,
    ) -> Result<Self> {
        let plan = ObservationPlan {
            points,
            strategy,
            seed,
            grid_n: layout.grid_n,
            layout_hash: layout.hash(),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument("plan has no points".into()));
        }
        let mut seen = HashSet::with_capacity(self.points.len());
        for &(r, c) in &self.points {
            if r >= self.grid_n || c >= self.grid_n {
                return Err(Error::InvalidArgument(format!(
                    "point ({r}, {c}) outside a {} grid",
                    self.grid_n
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::InvalidArgument(format!("duplicate point ({r}, {c})")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Digest of the plan's points and layout binding.
    pub fn hash(&self) -> [u8; 64] {
        let mut bytes = b"TFR-PLAN-v1".to_vec();
        bytes.extend_from_slice(&self.layout_hash.0);
        bytes.extend_from_slice(&(self.grid_n as u64).to_le_bytes());
        for &(r, c) in &self.points {
            bytes.extend_from_slice(&(r as u64).to_le_bytes());
            bytes.extend_from_slice(&(c as u64).to_le_bytes());
        }
        hashing::sha512(&bytes)
    }

    pub fn id(&self) -> String {
        format!("{}-m{}-{}", self.strategy, self.len(), hashing::short_hex(&self.hash()))
    }

    pub fn to_toml(&self) -> String {
        let file = PlanFile {
            strategy: self.strategy,
            seed: self.seed,
            grid_n: self.grid_n,
            layout_hash: self.layout_hash.to_hex(),
            points: self.points.iter().map(|&(r, c)| [r, c]).collect(),
        };
        toml::to_string(&file).expect("plan serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: PlanFile = toml::from_str(text).map_err(|e| Error::Parse {
            field: "plan".into(),
            message: e.message().to_string(),
        })?;
        let plan = ObservationPlan {
            points: file.points.iter().map(|p| (p[0], p[1])).collect(),
            strategy: file.strategy,
            seed: file.seed,
            grid_n: file.grid_n,
            layout_hash: LayoutHash::from_hex(&file.layout_hash)?,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Physical (x, y) coordinates of each sensor.
    pub fn coordinates(&self, layout: &Layout) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|&(r, c)| (layout.node_coord(c), layout.node_coord(r)))
            .collect()
    }

    pub fn ensure_layout(&self, hash: &LayoutHash) -> Result<()> {
        if &self.layout_hash != hash {
            return Err(Error::LayoutMismatch(format!(
                "plan bound to {}, field to {}",
                self.layout_hash.short(),
                hash.short()
            )));
        }
        Ok(())
    }
}

/// Centre node of each of `q` blocks partitioning `0..n`: block `b` holds
/// the nodes `k` with ⌊k·q/n⌋ = b, and its centre is the mean index rounded
/// half up.
fn block_centers(n: usize, q: usize) -> Vec<usize> {
    (0..q)
        .map(|b| {
            let first = (b * n).div_ceil(q);
            let last = ((b + 1) * n).div_ceil(q) - 1;
            (first + last + 1) / 2
        })
        .collect()
}

fn perfect_sqrt(m: usize) -> Option<usize> {
    let q = (m as f64).sqrt().round() as usize;
    (q * q == m).then_some(q)
}

/// Choose sensor locations.
pub fn select_points(
    strategy: Strategy,
    m: usize,
    layout: &Layout,
    seed: u64,
) -> Result<ObservationPlan> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let n = layout.grid_n;
    let points = match strategy {
        Strategy::Uniform => {
            let q = perfect_sqrt(m).ok_or_else(|| {
                Error::InvalidArgument(format!("uniform selection needs a perfect square, got {m}"))
            })?;
            let centers = block_centers(n, q);
            let mut pts = Vec::with_capacity(m);
            for &r in &centers {
                for &c in &centers {
                    pts.push((r, c));
                }
            }
            pts
        }
        Strategy::Random => {
            let inner = n - 2;
            if m > inner * inner {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {m} distinct interior sensors on a {n} grid"
                )));
            }
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut pts: Vec<(usize, usize)> = sample_indices(&mut rng, inner * inner, m)
                .into_iter()
                .map(|i| (1 + i / inner, 1 + i % inner))
                .collect();
            pts.sort_unstable();
            pts
        }
        Strategy::Physics => physics_points(m, layout)?,
        Strategy::Custom => {
            return Err(Error::InvalidArgument(
                "custom plans are built from explicit points".into(),
            ))
        }
    };
    ObservationPlan::new(points, strategy, seed, layout)
}

/// Component centres first, then boundary nodes: the two bottom nodes just
/// outside the sink ends, then edge midpoints (top, left, right), the bottom
/// quarter points, and successively finer dyadic subdivisions of the four
/// edges. Nodes already taken are skipped.
fn physics_points(m: usize, layout: &Layout) -> Result<Vec<(usize, usize)>> {
    let n = layout.grid_n;
    let k = layout.n_sources();
    if m < k {
        return Err(Error::InvalidArgument(format!(
            "physics-informed selection needs m ≥ {k} (one sensor per component), got {m}"
        )));
    }
    let mut taken = HashSet::new();
    let mut pts = Vec::with_capacity(m);
    for i in 0..k {
        let p = layout.source_center_node(i);
        if !taken.insert(p) {
            return Err(Error::InvalidArgument(format!(
                "components {i} and another share centre node {p:?}"
            )));
        }
        pts.push(p);
    }
    let last = n - 1;
    let at = |num: usize, den: usize| (last * num + den / 2) / den;
    let sink = layout.sink_columns();
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    if *sink.start() > 0 {
        candidates.push((0, sink.start() - 1));
    }
    if *sink.end() < last {
        candidates.push((0, sink.end() + 1));
    }
    candidates.push((last, last / 2));
    candidates.push((last / 2, 0));
    candidates.push((last / 2, last));
    candidates.push((0, at(1, 4)));
    candidates.push((0, at(3, 4)));
    let mut den = 4;
    while den <= 2 * last {
        for num in (1..den).step_by(2) {
            let t = at(num, den);
            candidates.extend([(last, t), (t, 0), (t, last), (0, t)]);
        }
        den *= 2;
    }
    // Every boundary node, as a last resort for very dense requests.
    for t in 0..n {
        candidates.extend([(last, t), (t, 0), (t, last), (0, t)]);
    }
    for p in candidates {
        if pts.len() == m {
            break;
        }
        if layout.is_sink_node(p.0, p.1) {
            continue;
        }
        if taken.insert(p) {
            pts.push(p);
        }
    }
    if pts.len() < m {
        return Err(Error::InvalidArgument(format!(
            "only {} boundary nodes available for {m} sensors",
            pts.len()
        )));
    }
    Ok(pts)
}

/// Readings in plan order, kelvin.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub values: Vec<f64>,
}

impl ObservationSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn extract_observations(
    field: &TemperatureField,
    plan: &ObservationPlan,
) -> Result<ObservationSet> {
    plan.ensure_layout(&field.layout_hash)?;
    if field.n() != plan.grid_n {
        return Err(Error::Shape(format!(
            "field side {} vs plan grid {}",
            field.n(),
            plan.grid_n
        )));
    }
    Ok(ObservationSet {
        values: plan.points.iter().map(|&(r, c)| field.grid.get(r, c)).collect(),
    })
}

/// Affine map between kelvin and network units: (T − t_ref)/scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub t_ref: f64,
    pub scale: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            t_ref: 298.0,
            scale: 50.0,
        }
    }
}

impl Normalization {
    #[inline]
    pub fn forward(&self, t: f64) -> f64 {
        (t - self.t_ref) / self.scale
    }

    #[inline]
    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.t_ref
    }
}

/// Full-grid image carrying normalized readings at sensor nodes, 0 elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseImage(pub Grid);

impl SparseImage {
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    /// Recover kelvin readings at the plan's nodes.
    pub fn readings(&self, plan: &ObservationPlan, norm: &Normalization) -> ObservationSet {
        ObservationSet {
            values: plan
                .points
                .iter()
                .map(|&(r, c)| norm.inverse(self.0.get(r, c)))
                .collect(),
        }
    }
}

pub fn to_sparse_image(
    obs: &ObservationSet,
    plan: &ObservationPlan,
    norm: &Normalization,
) -> Result<SparseImage> {
    if obs.len() != plan.len() {
        return Err(Error::Shape(format!(
            "{} readings for a {}-point plan",
            obs.len(),
            plan.len()
        )));
    }
    let mut grid = Grid::zeros(plan.grid_n);
    for (&(r, c), &v) in plan.points.iter().zip(&obs.values) {
        grid.set(r, c, norm.forward(v));
    }
    Ok(SparseImage(grid))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case1(n: usize) -> Layout {
        Layout::builtin("case1").unwrap().with_grid_n(n).unwrap()
    }

    /// Brute-force block centre: enumerate members, take the mean index
    /// rounded half up.
    fn brute_centers(n: usize, q: usize) -> Vec<usize> {
        (0..q)
            .map(|b| {
                let members: Vec<usize> = (0..n).filter(|k| k * q / n == b).collect();
                let sum: usize = members.iter().sum();
                let mean = sum as f64 / members.len() as f64;
                (mean + 0.5).floor() as usize
            })
            .collect()
    }

    #[test]
    fn uniform_sixteen_on_default_grid() {
        let plan = select_points(Strategy::Uniform, 16, &case1(200), 0).unwrap();
        let rows: Vec<usize> = plan.points.iter().map(|p| p.0).collect();
        let expected = [25, 75, 125, 175];
        for (i, &(r, c)) in plan.points.iter().enumerate() {
            assert_eq!(r, expected[i / 4]);
            assert_eq!(c, expected[i % 4]);
        }
        assert_eq!(rows.len(), 16);
    }

    #[test]
    fn block_centers_match_brute_force() {
        for n in [16, 50, 63, 64, 100, 200] {
            for q in 1..=6 {
                assert_eq!(block_centers(n, q), brute_centers(n, q), "n={n} q={q}");
            }
        }
    }

    #[test]
    fn uniform_single_point_is_grid_centre() {
        let plan = select_points(Strategy::Uniform, 1, &case1(200), 0).unwrap();
        assert_eq!(plan.points, vec![(100, 100)]);
    }

    #[test]
    fn uniform_rejects_non_square() {
        assert!(select_points(Strategy::Uniform, 15, &case1(64), 0).is_err());
    }

    #[test]
    fn random_plans_are_interior_distinct_and_seeded() {
        let l = case1(64);
        let a = select_points(Strategy::Random, 16, &l, 1).unwrap();
        let b = select_points(Strategy::Random, 16, &l, 1).unwrap();
        let c = select_points(Strategy::Random, 16, &l, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
        for &(r, col) in &a.points {
            assert!((1..63).contains(&r) && (1..63).contains(&col));
        }
    }

    #[test]
    fn physics_sixteen_is_ten_centres_plus_six_boundary() {
        let l = case1(200);
        let plan = select_points(Strategy::Physics, 16, &l, 0).unwrap();
        assert_eq!(plan.len(), 16);
        for i in 0..10 {
            assert_eq!(plan.points[i], l.source_center_node(i));
        }
        let boundary = &plan.points[10..];
        assert!(boundary
            .iter()
            .all(|&(r, c)| r == 0 || c == 0 || r == 199 || c == 199));
        // sink is 90..=109 on this grid
        assert_eq!(boundary[0], (0, 89));
        assert_eq!(boundary[1], (0, 110));
        assert_eq!(boundary[2], (199, 99));
        assert_eq!(boundary[3], (99, 0));
        assert_eq!(boundary[4], (99, 199));
        assert_eq!(boundary[5], (0, 50));
    }

    #[test]
    fn physics_needs_one_sensor_per_component() {
        assert!(select_points(Strategy::Physics, 9, &case1(64), 0).is_err());
    }

    #[test]
    fn physics_fills_dense_requests() {
        let l = case1(32);
        let plan = select_points(Strategy::Physics, 60, &l, 0).unwrap();
        assert_eq!(plan.len(), 60);
    }

    #[test]
    fn plan_text_round_trip() {
        let plan = select_points(Strategy::Random, 9, &case1(64), 5).unwrap();
        let text = plan.to_toml();
        assert!(text.contains("strategy = \"random\""));
        assert_eq!(ObservationPlan::parse(&text).unwrap(), plan);
    }

    #[test]
    fn normalization_inverts() {
        let nz = Normalization::default();
        for t in [298.0, 310.25, 350.0] {
            assert!((nz.inverse(nz.forward(t)) - t).abs() < 1e-12);
        }
        assert_eq!(nz.forward(298.0), 0.0);
    }
}

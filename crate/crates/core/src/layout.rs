//! Problem definitions: domain, rectangular heat sources, bottom-edge sink and
//! the node grid they are rasterized onto.
//!
//! The grid is node-centred: node `(row, col)` sits at `(col·h, row·h)` with
//! `h = L/(N−1)`, so both the left/right and bottom/top boundaries carry nodes.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hashing;

pub const DEFAULT_DOMAIN_SIZE: f64 = 0.1;
pub const DEFAULT_CONDUCTIVITY: f64 = 1.0;
pub const DEFAULT_GRID_N: usize = 200;
pub const DEFAULT_SINK_LENGTH: f64 = 0.01;
pub const DEFAULT_SINK_TEMPERATURE: f64 = 298.0;
pub const DEFAULT_PHI_MAX: f64 = 30_000.0;
pub const MIN_GRID_N: usize = 16;

/// Tolerance, in units of grid spacing, for deciding node membership when a
/// rectangle edge falls exactly on a node line.
const EDGE_EPS: f64 = 1e-9;

const CASE1: &str = include_str!("../assets/case1.toml");
const CASE2: &str = include_str!("../assets/case2.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSource {
    pub id: u32,
    /// Centre x, metres.
    pub x: f64,
    /// Centre y, metres.
    pub y: f64,
    /// Extent along x, metres.
    pub w: f64,
    /// Extent along y, metres.
    pub h: f64,
    /// Upper bound of the power intensity range, W/m².
    pub phi_max: f64,
}

impl HeatSource {
    pub fn x_range(&self) -> (f64, f64) {
        (self.x - self.w / 2.0, self.x + self.w / 2.0)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y - self.h / 2.0, self.y + self.h / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    fn overlaps(&self, other: &HeatSource) -> bool {
        let (ax0, ax1) = self.x_range();
        let (ay0, ay1) = self.y_range();
        let (bx0, bx1) = other.x_range();
        let (by0, by1) = other.y_range();
        // edges that touch up to rounding are not an overlap
        const TOUCH_EPS: f64 = 1e-12;
        ax0 + TOUCH_EPS < bx1 && bx0 + TOUCH_EPS < ax1 && ay0 + TOUCH_EPS < by1 && by0 + TOUCH_EPS < ay1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sink {
    /// x position of the sink centre on the bottom edge, metres.
    pub center: f64,
    /// Sink length δ, metres.
    pub length: f64,
    /// Sink temperature T0, kelvin.
    pub temperature: f64,
}

/// Validated, immutable problem definition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Layout {
    pub domain_size: f64,
    pub conductivity: f64,
    pub grid_n: usize,
    pub sink: Sink,
    pub sources: Vec<HeatSource>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    domain_size: Option<f64>,
    conductivity: Option<f64>,
    grid_n: Option<usize>,
    sink: Option<RawSink>,
    sources: Vec<RawSource>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSink {
    center: Option<f64>,
    length: Option<f64>,
    temperature: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    id: u32,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    phi_max: Option<f64>,
}

/// 64-byte digest binding fields, datasets and plans to a layout.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayoutHash(pub [u8; 64]);

impl LayoutHash {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::Parse {
            field: "layout_hash".into(),
            message: e.to_string(),
        })?;
        let arr: [u8; 64] = bytes.try_into().map_err(|_| Error::Parse {
            field: "layout_hash".into(),
            message: "expected 64 bytes".into(),
        })?;
        Ok(LayoutHash(arr))
    }

    pub fn short(&self) -> String {
        hashing::short_hex(&self.0)
    }
}

impl fmt::Debug for LayoutHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LayoutHash({})", self.short())
    }
}

impl Layout {
    /// Parse and validate a layout from its TOML text.
    pub fn parse(text: &str) -> Result<Layout> {
        let raw: RawLayout = toml::from_str(text).map_err(|e| Error::Parse {
            field: parse_error_field(&e),
            message: e.message().to_string(),
        })?;
        let domain_size = raw.domain_size.unwrap_or(DEFAULT_DOMAIN_SIZE);
        let sink = raw.sink.unwrap_or(RawSink {
            center: None,
            length: None,
            temperature: None,
        });
        let layout = Layout {
            domain_size,
            conductivity: raw.conductivity.unwrap_or(DEFAULT_CONDUCTIVITY),
            grid_n: raw.grid_n.unwrap_or(DEFAULT_GRID_N),
            sink: Sink {
                center: sink.center.unwrap_or(domain_size / 2.0),
                length: sink.length.unwrap_or(DEFAULT_SINK_LENGTH),
                temperature: sink.temperature.unwrap_or(DEFAULT_SINK_TEMPERATURE),
            },
            sources: raw
                .sources
                .into_iter()
                .map(|s| HeatSource {
                    id: s.id,
                    x: s.x,
                    y: s.y,
                    w: s.w,
                    h: s.h,
                    phi_max: s.phi_max.unwrap_or(DEFAULT_PHI_MAX),
                })
                .collect(),
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Layout> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Layout::parse(&text)
    }

    /// Shipped layouts by name (`case1`, `case2`).
    pub fn builtin(name: &str) -> Option<Layout> {
        let text = match name {
            "case1" => CASE1,
            "case2" => CASE2,
            _ => return None,
        };
        Some(Layout::parse(text).expect("shipped layouts are valid"))
    }

    /// Resolve either a shipped layout name or a path to a layout file.
    pub fn load(name_or_path: &str) -> Result<Layout> {
        match Layout::builtin(name_or_path) {
            Some(l) => Ok(l),
            None => Layout::from_file(name_or_path),
        }
    }

    /// Same layout on a different grid resolution.
    pub fn with_grid_n(&self, grid_n: usize) -> Result<Layout> {
        let mut l = self.clone();
        l.grid_n = grid_n;
        l.validate()?;
        Ok(l)
    }

    pub fn to_toml(&self) -> String {
        let mut s = format!(
            "domain_size = {:?}\nconductivity = {:?}\ngrid_n = {}\nsink = {{ center = {:?}, length = {:?}, temperature = {:?} }}\nsources = [\n",
            self.domain_size,
            self.conductivity,
            self.grid_n,
            self.sink.center,
            self.sink.length,
            self.sink.temperature
        );
        for src in &self.sources {
            s.push_str(&format!(
                "    {{ id = {}, x = {:?}, y = {:?}, w = {:?}, h = {:?}, phi_max = {:?} }},\n",
                src.id, src.x, src.y, src.w, src.h, src.phi_max
            ));
        }
        s.push_str("]\n");
        s
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.domain_size;
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::invalid(None, format!("domain_size must be positive, got {l}")));
        }
        if !(self.conductivity.is_finite() && self.conductivity > 0.0) {
            return Err(Error::invalid(
                None,
                format!("conductivity must be positive, got {}", self.conductivity),
            ));
        }
        if self.grid_n < MIN_GRID_N {
            return Err(Error::invalid(
                None,
                format!("grid_n must be at least {MIN_GRID_N}, got {}", self.grid_n),
            ));
        }
        if !self.sink.temperature.is_finite() {
            return Err(Error::invalid(None, "sink temperature must be finite"));
        }
        let (s0, s1) = self.sink_extent();
        if !(self.sink.length > 0.0) || s0 < 0.0 || s1 > l {
            return Err(Error::invalid(
                None,
                format!("sink segment [{s0}, {s1}] must lie within [0, {l}]"),
            ));
        }
        if self.sink_columns().count() < 2 {
            return Err(Error::invalid(
                None,
                format!("sink covers fewer than 2 grid nodes at grid_n = {}", self.grid_n),
            ));
        }
        if self.sources.is_empty() {
            return Err(Error::invalid(None, "at least one heat source is required"));
        }
        for (i, src) in self.sources.iter().enumerate() {
            let id = Some(src.id);
            if !(src.w > 0.0 && src.h > 0.0) {
                return Err(Error::invalid(id, "width and height must be positive"));
            }
            if !(src.phi_max.is_finite() && src.phi_max > 0.0) {
                return Err(Error::invalid(id, "phi_max must be positive"));
            }
            let (x0, x1) = src.x_range();
            let (y0, y1) = src.y_range();
            if x0 < 0.0 || x1 > l {
                return Err(Error::invalid(
                    id,
                    format!("rectangle x-extent [{x0}, {x1}] protrudes outside [0, {l}]"),
                ));
            }
            if y0 < 0.0 || y1 > l {
                return Err(Error::invalid(
                    id,
                    format!("rectangle y-extent [{y0}, {y1}] protrudes outside [0, {l}]"),
                ));
            }
            for other in &self.sources[..i] {
                if other.id == src.id {
                    return Err(Error::invalid(id, "duplicate source id"));
                }
                if src.overlaps(other) {
                    return Err(Error::invalid(id, format!("overlaps source {}", other.id)));
                }
            }
        }
        Ok(())
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Node spacing h = L/(N−1).
    pub fn spacing(&self) -> f64 {
        self.domain_size / (self.grid_n - 1) as f64
    }

    pub fn node_coord(&self, index: usize) -> f64 {
        index as f64 * self.spacing()
    }

    pub fn sink_extent(&self) -> (f64, f64) {
        (
            self.sink.center - self.sink.length / 2.0,
            self.sink.center + self.sink.length / 2.0,
        )
    }

    pub fn sink_temperature(&self) -> f64 {
        self.sink.temperature
    }

    /// Bottom-row columns held at T0: every node with |x − center| ≤ δ/2.
    pub fn sink_columns(&self) -> std::ops::RangeInclusive<usize> {
        let h = self.spacing();
        let c = self.sink.center / h;
        let r = self.sink.length / 2.0 / h;
        let lo = (c - r - EDGE_EPS).ceil().max(0.0) as usize;
        let hi = ((c + r + EDGE_EPS).floor() as usize).min(self.grid_n - 1);
        if hi < lo {
            #[allow(clippy::reversed_empty_ranges)]
            return 1..=0;
        }
        lo..=hi
    }

    pub fn is_sink_node(&self, row: usize, col: usize) -> bool {
        row == 0 && self.sink_columns().contains(&col)
    }

    /// Grid index range covered by a source along one axis
    /// (closed on the low edge, open on the high edge).
    fn covered_indices(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let h = self.spacing();
        let start = (lo / h - EDGE_EPS).ceil().max(0.0) as usize;
        let end = ((hi / h - EDGE_EPS).ceil().max(0.0) as usize).min(self.grid_n);
        start..end.max(start)
    }

    /// Column and row index ranges of the nodes covered by source `i`.
    pub fn source_cells(&self, i: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let s = &self.sources[i];
        let (x0, x1) = s.x_range();
        let (y0, y1) = s.y_range();
        (self.covered_indices(y0, y1), self.covered_indices(x0, x1))
    }

    /// Nearest grid node to a source's centre, ties broken toward the lower index.
    pub fn source_center_node(&self, i: usize) -> (usize, usize) {
        let s = &self.sources[i];
        (self.nearest_index(s.y), self.nearest_index(s.x))
    }

    fn nearest_index(&self, coord: f64) -> usize {
        let t = coord / self.spacing();
        let lower = t.floor();
        let idx = if t - lower > 0.5 + EDGE_EPS { lower + 1.0 } else { lower };
        (idx.max(0.0) as usize).min(self.grid_n - 1)
    }

    /// Rasterize per-source intensities onto the node grid.
    pub fn rasterize(&self, powers: &[f64]) -> Result<PowerField> {
        if powers.len() != self.sources.len() {
            return Err(Error::Shape(format!(
                "expected {} powers, got {}",
                self.sources.len(),
                powers.len()
            )));
        }
        for (src, &p) in self.sources.iter().zip(powers) {
            if !(p >= 0.0 && p <= src.phi_max) {
                return Err(Error::InvalidArgument(format!(
                    "power {p} of source {} outside [0, {}]",
                    src.id, src.phi_max
                )));
            }
        }
        let mut grid = Grid::zeros(self.grid_n);
        for (i, &p) in powers.iter().enumerate() {
            let (rows, cols) = self.source_cells(i);
            for r in rows {
                for c in cols.clone() {
                    grid.set(r, c, p);
                }
            }
        }
        Ok(PowerField(grid))
    }

    /// Nodes covered by any source (Ω_com).
    pub fn component_mask(&self) -> Vec<bool> {
        let n = self.grid_n;
        let mut mask = vec![false; n * n];
        for i in 0..self.sources.len() {
            let (rows, cols) = self.source_cells(i);
            for r in rows {
                for c in cols.clone() {
                    mask[r * n + c] = true;
                }
            }
        }
        mask
    }

    pub fn hash(&self) -> LayoutHash {
        let mut bytes = b"TFR-LAYOUT-v1".to_vec();
        for v in [
            self.domain_size,
            self.conductivity,
            self.sink.center,
            self.sink.length,
            self.sink.temperature,
        ] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&(self.grid_n as u64).to_le_bytes());
        bytes.extend_from_slice(&(self.sources.len() as u64).to_le_bytes());
        for s in &self.sources {
            bytes.extend_from_slice(&(s.id as u64).to_le_bytes());
            for v in [s.x, s.y, s.w, s.h, s.phi_max] {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        LayoutHash(hashing::sha512(&bytes))
    }

    /// Σ φ_i·w_i·h_i, the analytic injected power per metre of depth.
    pub fn analytic_power(&self, powers: &[f64]) -> f64 {
        self.sources
            .iter()
            .zip(powers)
            .map(|(s, p)| s.area() * p)
            .sum()
    }

    pub fn max_powers(&self) -> Vec<f64> {
        self.sources.iter().map(|s| s.phi_max).collect()
    }
}

fn parse_error_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    // serde reports missing/unknown keys as "missing field `x`" / "unknown field `x`".
    if let Some(start) = msg.find('`') {
        if let Some(len) = msg[start + 1..].find('`') {
            return msg[start + 1..start + 1 + len].to_string();
        }
    }
    "layout".to_string()
}

/// Rasterized power intensity, W/m², on the layout grid.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerField(pub Grid);

impl PowerField {
    pub fn grid(&self) -> &Grid {
        &self.0
    }

    /// Σ cell value × control-volume area, using the same half/quarter
    /// weights as the solver on edge and corner nodes.
    pub fn integrated_power(&self, layout: &Layout) -> f64 {
        let h = layout.spacing();
        let n = self.0.n();
        let mut total = 0.0;
        for r in 0..n {
            for c in 0..n {
                let v = self.0.get(r, c);
                if v != 0.0 {
                    total += v * control_volume_fraction(n, r, c) * h * h;
                }
            }
        }
        total
    }
}

/// Fraction of a full h×h control volume owned by a node (1, ½ on edges, ¼ at corners).
pub fn control_volume_fraction(n: usize, row: usize, col: usize) -> f64 {
    let edge = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    edge(row) * edge(col)
}

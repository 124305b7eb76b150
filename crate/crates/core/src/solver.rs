//! Steady conduction −λ∇²T = φ on the layout grid.
//!
//! Five-point finite differences on the node grid. Adiabatic edges use mirror
//! ghost nodes (doubled on corners); sink nodes on the bottom edge are held at
//! T0 and eliminated. Each row is scaled by its control-volume fraction
//! (1, ½, ¼), which makes the matrix symmetric positive definite.
//!
//! The matrix depends only on the layout, so [`SteadySolver`] factors it once
//! and reuses the factor for every power vector.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::layout::{control_volume_fraction, Layout, LayoutHash, PowerField};

pub const RELATIVE_TOLERANCE: f64 = 1e-8;
/// Largest grid side solved by banded Cholesky under [`SolverKind::Auto`].
pub const DIRECT_MAX_N: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverKind {
    #[default]
    Auto,
    Direct,
    ConjugateGradient,
}

/// Steady temperature field in kelvin, bound to the layout it was solved on.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureField {
    pub grid: Grid,
    pub layout_hash: LayoutHash,
}

impl TemperatureField {
    pub fn n(&self) -> usize {
        self.grid.n()
    }
}

/// Symmetric sparse system in CSR form over the non-sink nodes.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub n_unknowns: usize,
    /// Grid index → unknown index; `None` for sink nodes.
    pub dof: Vec<Option<usize>>,
    /// Unknown index → grid index.
    pub nodes: Vec<usize>,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Control-volume fraction each row was scaled by.
    pub row_weight: Vec<f64>,
}

impl LinearSystem {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[p] * x[self.col_idx[p]];
            }
            *yi = s;
        }
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        (self.row_ptr[row]..self.row_ptr[row + 1])
            .find(|&p| self.col_idx[p] == col)
            .map(|p| self.values[p])
            .unwrap_or(0.0)
    }

    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        self.residual_against(x, &self.rhs)
    }

    fn residual_against(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n_unknowns];
        self.matvec(x, &mut ax);
        let r: f64 = ax
            .iter()
            .zip(rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let b = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b == 0.0 {
            r
        } else {
            r / b
        }
    }

    fn bandwidth(&self) -> usize {
        let mut bw = 0;
        for i in 0..self.n_unknowns {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(i.abs_diff(self.col_idx[p]));
            }
        }
        bw
    }
}

/// Grid neighbours of a node with the weight of the shared face: 1 for faces
/// crossing the interior, ½ for faces lying along a boundary line.
fn neighbours(n: usize, row: usize, col: usize) -> impl Iterator<Item = (usize, usize, f64)> {
    let along = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut out = [(0usize, 0usize, 0.0f64); 4];
    let mut k = 0;
    if col > 0 {
        out[k] = (row, col - 1, along(row));
        k += 1;
    }
    if col + 1 < n {
        out[k] = (row, col + 1, along(row));
        k += 1;
    }
    if row > 0 {
        out[k] = (row - 1, col, along(col));
        k += 1;
    }
    if row + 1 < n {
        out[k] = (row + 1, col, along(col));
        k += 1;
    }
    out.into_iter().take(k)
}

/// Assemble the scaled five-point system for a rasterized power field.
pub fn assemble_system(layout: &Layout, power: &PowerField) -> Result<LinearSystem> {
    let mut sys = assemble_matrix(layout);
    sys.rhs = assemble_rhs(layout, &sys, power)?;
    Ok(sys)
}

fn assemble_rhs(layout: &Layout, sys: &LinearSystem, power: &PowerField) -> Result<Vec<f64>> {
    let n = layout.grid_n;
    if power.grid().n() != n {
        return Err(Error::Shape(format!(
            "power field side {} does not match grid_n {n}",
            power.grid().n()
        )));
    }
    let t0 = layout.sink_temperature();
    let coupling = layout.conductivity / layout.spacing().powi(2);
    let rhs = sys
        .nodes
        .iter()
        .enumerate()
        .map(|(u, &g)| {
            let (row, col) = (g / n, g % n);
            let mut b = sys.row_weight[u] * power.grid().values()[g];
            for (r, c, w) in neighbours(n, row, col) {
                if sys.dof[r * n + c].is_none() {
                    b += coupling * w * t0;
                }
            }
            b
        })
        .collect();
    Ok(rhs)
}

fn assemble_matrix(layout: &Layout) -> LinearSystem {
    let n = layout.grid_n;
    let coupling = layout.conductivity / layout.spacing().powi(2);
    let mut dof = vec![None; n * n];
    let mut nodes = Vec::with_capacity(n * n);
    for row in 0..n {
        for col in 0..n {
            if !layout.is_sink_node(row, col) {
                dof[row * n + col] = Some(nodes.len());
                nodes.push(row * n + col);
            }
        }
    }
    let nu = nodes.len();
    let mut row_ptr = Vec::with_capacity(nu + 1);
    let mut col_idx = Vec::with_capacity(5 * nu);
    let mut values = Vec::with_capacity(5 * nu);
    let mut row_weight = Vec::with_capacity(nu);
    row_ptr.push(0);
    for &g in &nodes {
        let (row, col) = (g / n, g % n);
        let mut entries: Vec<(usize, f64)> = Vec::with_capacity(5);
        let mut diag = 0.0;
        for (r, c, w) in neighbours(n, row, col) {
            diag += coupling * w;
            if let Some(j) = dof[r * n + c] {
                entries.push((j, -coupling * w));
            }
        }
        entries.push((dof[g].unwrap(), diag));
        entries.sort_by_key(|e| e.0);
        for (j, v) in entries {
            col_idx.push(j);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
        row_weight.push(control_volume_fraction(n, row, col));
    }
    LinearSystem {
        n_unknowns: nu,
        dof,
        nodes,
        row_ptr,
        col_idx,
        values,
        rhs: vec![0.0; nu],
        row_weight,
    }
}

/// Lower band of a Cholesky factor; row `i` stores columns `i−bw ..= i`.
#[derive(Clone, Debug)]
struct BandCholesky {
    n: usize,
    bw: usize,
    rows: Vec<f64>,
}

impl BandCholesky {
    fn factor(sys: &LinearSystem) -> Result<Self> {
        let n = sys.n_unknowns;
        let bw = sys.bandwidth();
        let w = bw + 1;
        let mut rows = vec![0.0; n * w];
        // Scatter the lower triangle of A into band storage.
        for i in 0..n {
            for p in sys.row_ptr[i]..sys.row_ptr[i + 1] {
                let j = sys.col_idx[p];
                if j <= i {
                    rows[i * w + (j + bw - i)] = sys.values[p];
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let (ri, rj) = if j == i {
                    (i * w + (lo + bw - i), i * w + (lo + bw - i))
                } else {
                    (i * w + (lo + bw - i), j * w + (lo + bw - j))
                };
                let len = j - lo;
                let mut s = rows[i * w + (j + bw - i)];
                let mut dot = 0.0;
                for k in 0..len {
                    dot += rows[ri + k] * rows[rj + k];
                }
                s -= dot;
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::InvalidArgument(format!(
                            "matrix not positive definite at row {i}"
                        )));
                    }
                    rows[i * w + bw] = s.sqrt();
                } else {
                    rows[i * w + (j + bw - i)] = s / rows[j * w + bw];
                }
            }
        }
        Ok(BandCholesky { n, bw, rows })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let base = i * w + (lo + bw - i);
            let mut s = y[i];
            for (k, yk) in (lo..i).zip(&y[lo..i]) {
                s -= self.rows[base + (k - lo)] * yk;
            }
            y[i] = s / self.rows[i * w + bw];
        }
        for i in (0..n).rev() {
            let yi = y[i] / self.rows[i * w + bw];
            y[i] = yi;
            let lo = i.saturating_sub(bw);
            let base = i * w + (lo + bw - i);
            for k in lo..i {
                y[k] -= self.rows[base + (k - lo)] * yi;
            }
        }
        y
    }
}

fn conjugate_gradient(sys: &LinearSystem, rhs: &[f64], max_iter: usize) -> Result<Vec<f64>> {
    let n = sys.n_unknowns;
    let diag: Vec<f64> = (0..n).map(|i| sys.entry(i, i)).collect();
    let b_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    for iter in 0..max_iter {
        sys.matvec(&p, &mut ap);
        let alpha = rz / p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let r_norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r_norm / b_norm <= RELATIVE_TOLERANCE * 0.1 {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if iter + 1 == max_iter {
            return Err(Error::NotConverged {
                iterations: max_iter,
                residual: r_norm / b_norm,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

/// Reusable solver for one layout.
#[derive(Clone, Debug)]
pub struct SteadySolver {
    layout: Layout,
    hash: LayoutHash,
    system: LinearSystem,
    factor: Option<BandCholesky>,
    max_iter: usize,
}

impl SteadySolver {
    pub fn new(layout: &Layout) -> Result<Self> {
        Self::with_kind(layout, SolverKind::Auto)
    }

    pub fn with_kind(layout: &Layout, kind: SolverKind) -> Result<Self> {
        layout.validate()?;
        let system = assemble_matrix(layout);
        let direct = match kind {
            SolverKind::Auto => layout.grid_n <= DIRECT_MAX_N,
            SolverKind::Direct => true,
            SolverKind::ConjugateGradient => false,
        };
        let factor = if direct {
            Some(BandCholesky::factor(&system)?)
        } else {
            None
        };
        Ok(SteadySolver {
            layout: layout.clone(),
            hash: layout.hash(),
            max_iter: 20 * system.n_unknowns.max(100),
            system,
            factor,
        })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn set_max_iterations(&mut self, max_iter: usize) {
        self.max_iter = max_iter;
    }

    /// Solve for per-source intensities (W/m²).
    pub fn solve(&self, powers: &[f64]) -> Result<TemperatureField> {
        let power = self.layout.rasterize(powers)?;
        self.solve_power_field(&power)
    }

    /// Solve for an arbitrary source grid (manufactured solutions, tests).
    pub fn solve_power_field(&self, power: &PowerField) -> Result<TemperatureField> {
        let layout = &self.layout;
        let n = layout.grid_n;
        let sys = &self.system;
        let rhs = assemble_rhs(layout, sys, power)?;
        let x = match &self.factor {
            Some(f) => f.solve(&rhs),
            None => conjugate_gradient(sys, &rhs, self.max_iter)?,
        };
        let res = sys.residual_against(&x, &rhs);
        if !(res <= RELATIVE_TOLERANCE) {
            return Err(Error::NotConverged {
                iterations: 0,
                residual: res,
            });
        }
        let t0 = layout.sink_temperature();
        let mut grid = Grid::filled(n, t0);
        for (u, &g) in sys.nodes.iter().enumerate() {
            grid.values_mut()[g] = x[u];
        }
        Ok(TemperatureField {
            grid,
            layout_hash: self.hash,
        })
    }
}

/// One-shot solve.
pub fn solve_steady(layout: &Layout, powers: &[f64]) -> Result<TemperatureField> {
    SteadySolver::new(layout)?.solve(powers)
}

/// Discrete heat outflow through the sink per metre of depth (W/m).
///
/// Sums λ·(T_nbr − T0)/h times the face length over every face between a
/// sink node and a non-sink neighbour: the vertical face above each sink
/// node (length h, halved at a domain corner) and the half-length boundary
/// faces at the two sink ends. These are exactly the fluxes the discrete
/// system balances, so the result equals the injected power up to solver
/// tolerance.
pub fn sink_flux(field: &TemperatureField, layout: &Layout) -> f64 {
    let n = layout.grid_n;
    let t0 = layout.sink_temperature();
    let lambda = layout.conductivity;
    let g = &field.grid;
    let mut flux = 0.0;
    for col in layout.sink_columns() {
        for (r, c, w) in neighbours(n, 0, col) {
            if !layout.is_sink_node(r, c) {
                flux += lambda * w * (g.get(r, c) - t0);
            }
        }
    }
    flux
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layout(n: usize) -> Layout {
        let text = format!(
            "grid_n = {n}\nsources = [ {{ id = 0, x = 0.05, y = 0.05, w = 0.02, h = 0.02 }} ]"
        );
        Layout::parse(&text).unwrap()
    }

    #[test]
    fn interior_row_is_textbook_stencil() {
        let l = small_layout(20);
        let p = l.rasterize(&[30000.0]).unwrap();
        let sys = assemble_system(&l, &p).unwrap();
        let h2 = l.spacing().powi(2);
        let g = 10 * 20 + 10;
        let u = sys.dof[g].unwrap();
        assert!((sys.entry(u, u) - 4.0 / h2).abs() < 1e-9 * (4.0 / h2));
        for nb in [g - 1, g + 1, g - 20, g + 20] {
            let v = sys.entry(u, sys.dof[nb].unwrap());
            assert!((v + 1.0 / h2).abs() < 1e-9 / h2);
        }
        assert_eq!(sys.rhs[u], 30000.0);
    }

    #[test]
    fn edge_rows_unscale_to_mirrored_stencil() {
        let l = small_layout(20);
        let p = l.rasterize(&[0.0]).unwrap();
        let sys = assemble_system(&l, &p).unwrap();
        let h2 = l.spacing().powi(2);
        // left edge, row 10
        let g = 10 * 20;
        let u = sys.dof[g].unwrap();
        let wgt = sys.row_weight[u];
        assert_eq!(wgt, 0.5);
        assert!((sys.entry(u, u) / wgt - 4.0 / h2).abs() < 1e-6);
        let mirrored = sys.entry(u, sys.dof[g + 1].unwrap()) / wgt;
        assert!((mirrored + 2.0 / h2).abs() < 1e-6);
    }

    #[test]
    fn rows_without_dirichlet_neighbours_annihilate_constants() {
        let l = small_layout(24);
        let p = l.rasterize(&[0.0]).unwrap();
        let sys = assemble_system(&l, &p).unwrap();
        let ones = vec![1.0; sys.n_unknowns];
        let mut out = vec![0.0; sys.n_unknowns];
        sys.matvec(&ones, &mut out);
        let n = l.grid_n;
        for (u, &g) in sys.nodes.iter().enumerate() {
            let (row, col) = (g / n, g % n);
            let touches_sink = neighbours(n, row, col).any(|(r, c, _)| l.is_sink_node(r, c));
            if !touches_sink {
                assert!(out[u].abs() < 1e-6, "row {u} sums to {}", out[u]);
            } else {
                assert!(out[u] > 0.0);
            }
        }
    }

    #[test]
    fn sink_neighbour_rhs_carries_dirichlet_value() {
        let l = small_layout(20);
        let p = l.rasterize(&[0.0]).unwrap();
        let sys = assemble_system(&l, &p).unwrap();
        let h2 = l.spacing().powi(2);
        let col = *l.sink_columns().start() + 1;
        let above = sys.dof[20 + col].unwrap();
        assert!((sys.rhs[above] - 298.0 / h2).abs() < 1e-9 * 298.0 / h2);
        assert!(sys.dof[col].is_none());
    }

    #[test]
    fn matrix_is_symmetric() {
        let l = small_layout(18);
        let sys = assemble_matrix(&l);
        for i in 0..sys.n_unknowns {
            for p in sys.row_ptr[i]..sys.row_ptr[i + 1] {
                let j = sys.col_idx[p];
                assert_eq!(sys.values[p], sys.entry(j, i));
            }
        }
    }

    #[test]
    fn zero_power_is_uniform_sink_temperature() {
        let l = small_layout(40);
        let t = solve_steady(&l, &[0.0]).unwrap();
        assert!(t.grid.values().iter().all(|&v| (v - 298.0).abs() < 1e-6));
        assert!(sink_flux(&t, &l).abs() < 1e-9);
    }

    #[test]
    fn direct_and_cg_agree() {
        let l = Layout::builtin("case2").unwrap().with_grid_n(48).unwrap();
        let powers: Vec<f64> = (0..10).map(|i| 3000.0 * i as f64).collect();
        let a = SteadySolver::with_kind(&l, SolverKind::Direct).unwrap().solve(&powers).unwrap();
        let b = SteadySolver::with_kind(&l, SolverKind::ConjugateGradient)
            .unwrap()
            .solve(&powers)
            .unwrap();
        let d = a
            .grid
            .values()
            .iter()
            .zip(b.grid.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(d < 1e-5, "max diff {d}");
    }

    #[test]
    fn cg_iteration_cap_reports_residual() {
        let l = Layout::builtin("case1").unwrap().with_grid_n(40).unwrap();
        let mut s = SteadySolver::with_kind(&l, SolverKind::ConjugateGradient).unwrap();
        s.set_max_iterations(3);
        match s.solve(&l.max_powers()) {
            Err(Error::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-8);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let l = small_layout(20);
        let p = PowerField(Grid::zeros(21));
        assert!(matches!(assemble_system(&l, &p), Err(Error::Shape(_))));
    }
}

//! Finite-difference operators `−Δ + U_per + V − E0` with Dirichlet or Mezincescu boundary
//! conditions, the periodic ground state `ψ`, and the boundary function `χ`.

use crate::error::{invalid, Error, Result};
use crate::field::PotentialField;
use crate::grid::Grid;
use crate::lattice::LatticeBox;
use crate::sparse::SparseSym;
use crate::spectral::{dense_eigenpairs, smallest_eigs, EigenOptions, InertiaCounter, DENSE_LIMIT};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

/// `Z^d`-periodic background potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PeriodicPotential {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `amplitude · Σ_i cos(2π x_i)`.
    Cosine { amplitude: f64 },
    /// Values on the unit-cell grid, axis 0 fastest.
    Samples { values: Vec<f64> },
}

impl PeriodicPotential {
    pub fn samples(&self, unit: &Grid) -> Result<Vec<f64>> {
        let n = unit.len();
        let mut x = vec![0.0; unit.dim()];
        let out = match self {
            PeriodicPotential::Zero => vec![0.0; n],
            PeriodicPotential::Constant { value } => vec![*value; n],
            PeriodicPotential::Cosine { amplitude } => (0..n)
                .map(|i| {
                    unit.node_coord(i, &mut x);
                    amplitude * x.iter().map(|c| (2.0 * PI * c).cos()).sum::<f64>()
                })
                .collect(),
            PeriodicPotential::Samples { values } => {
                if values.len() != n {
                    return invalid(format!("U_per has {} samples, the unit-cell grid has {n}", values.len()));
                }
                values.clone()
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return invalid("U_per samples must be finite");
        }
        Ok(out)
    }

    fn constant_value(&self, unit: &Grid) -> Option<f64> {
        match self {
            PeriodicPotential::Zero => Some(0.0),
            PeriodicPotential::Constant { value } => Some(*value),
            PeriodicPotential::Cosine { amplitude } if *amplitude == 0.0 => Some(0.0),
            PeriodicPotential::Samples { values } => {
                let first = *values.first()?;
                (values.len() == unit.len() && values.iter().all(|v| *v == first)).then_some(first)
            }
            _ => None,
        }
    }
}

/// Positive periodic ground state on the unit-cell grid, `Σ ψ² a^d = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGroundState {
    dim: usize,
    n_per_cell: usize,
    psi: Vec<f64>,
    e0: f64,
    residual: f64,
}

impl PeriodicGroundState {
    /// Wraps given samples; they are normalized and must be strictly positive.
    pub fn from_samples(dim: usize, n_per_cell: usize, psi: Vec<f64>, e0: f64) -> Result<Self> {
        let unit = Grid::new(LatticeBox::unit(dim), n_per_cell)?;
        if psi.len() != unit.len() {
            return invalid(format!("ψ has {} samples, the unit-cell grid has {}", psi.len(), unit.len()));
        }
        if psi.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return invalid("ψ must be strictly positive and finite");
        }
        let s = (psi.iter().map(|p| p * p).sum::<f64>() * unit.cell_volume()).sqrt();
        let psi = psi.into_iter().map(|p| p / s).collect();
        Ok(Self { dim, n_per_cell, psi, e0, residual: 0.0 })
    }

    /// `ψ ≡ 1`, `E0 = 0`: the Neumann case.
    pub fn constant(dim: usize, n_per_cell: usize) -> Result<Self> {
        let n = n_per_cell.pow(dim as u32);
        Self::from_samples(dim, n_per_cell, vec![1.0; n], 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn n_per_cell(&self) -> usize {
        self.n_per_cell
    }
    pub fn values(&self) -> &[f64] {
        &self.psi
    }
    pub fn e0(&self) -> f64 {
        self.e0
    }
    /// `‖H_per ψ − E0 ψ‖ / ‖ψ‖` as computed.
    pub fn residual(&self) -> f64 {
        self.residual
    }
    pub fn is_constant(&self) -> bool {
        self.psi.iter().all(|p| *p == self.psi[0])
    }
    pub fn min(&self) -> f64 {
        self.psi.iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if grid.dim() != self.dim || grid.n_per_cell() != self.n_per_cell {
            return invalid(format!(
                "grid (d = {}, n = {}) does not match ψ (d = {}, n = {})",
                grid.dim(),
                grid.n_per_cell(),
                self.dim,
                self.n_per_cell
            ));
        }
        Ok(())
    }

    /// `ψ|_Λ` on the nodes of `grid`.
    pub fn restrict(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.check_grid(grid)?;
        let mut k = vec![0; grid.dim()];
        Ok((0..grid.len())
            .map(|i| {
                grid.multi_index(i, &mut k);
                self.psi[grid.unit_cell_index(&k, None)]
            })
            .collect())
    }
}

/// Periodic stencil on the unit cell, each wrap-around edge kept.
fn periodic_matrix(u: &[f64], unit: &Grid) -> Result<SparseSym> {
    let d = unit.dim();
    let n = unit.n_per_cell();
    let inv_a2 = (n * n) as f64;
    let mut e = Vec::with_capacity(unit.len() * (d + 1));
    let mut k = vec![0; d];
    for i in 0..unit.len() {
        unit.multi_index(i, &mut k);
        e.push((i, i, 2.0 * d as f64 * inv_a2 + u[i]));
        for axis in 0..d {
            let j = unit.unit_cell_index(&k, Some((axis, 1)));
            e.push((i, j, -inv_a2));
        }
    }
    SparseSym::from_entries(unit.len(), &e)
}

/// Lowest eigenpair of the periodic stencil on the unit cell of `grid`.
pub fn periodic_ground_state(u: &PeriodicPotential, grid: &Grid) -> Result<PeriodicGroundState> {
    let unit = grid.unit_cell();
    let (d, n) = (grid.dim(), grid.n_per_cell());
    if let Some(c) = u.constant_value(&unit) {
        return PeriodicGroundState::from_samples(d, n, vec![1.0; unit.len()], c);
    }
    let us = u.samples(&unit)?;
    let a = periodic_matrix(&us, &unit)?;
    let mut psi = if unit.len() <= DENSE_LIMIT {
        dense_eigenpairs(&a)?.1.swap_remove(0)
    } else {
        let r = smallest_eigs(&a, 1, &EigenOptions { tol: 1e-12, ..Default::default() })?;
        r.eigenvectors.and_then(|mut v| v.pop()).ok_or_else(|| Error::Solver("no eigenvector".into()))?
    };
    if psi.iter().sum::<f64>() < 0.0 {
        psi.iter_mut().for_each(|p| *p = -*p);
    }
    // two inverse-iteration sweeps just below the Rayleigh quotient
    let counter = InertiaCounter::new(&a);
    for _ in 0..2 {
        let rq = a.quadratic_form(&psi) / psi.iter().map(|p| p * p).sum::<f64>();
        let (f, _) = counter.factorize(rq - 1e-3 * (1.0 + rq.abs()))?;
        let mut x = vec![0.0; psi.len()];
        f.solve(&psi, &mut x);
        let s = x.iter().map(|p| p * p).sum::<f64>().sqrt() * x.iter().sum::<f64>().signum();
        psi = x.into_iter().map(|p| p / s).collect();
    }
    if psi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::Solver("periodic ground state is not strictly positive".into()));
    }
    let nrm2 = psi.iter().map(|p| p * p).sum::<f64>();
    let e0 = a.quadratic_form(&psi) / nrm2;
    let av = a.apply(&psi);
    let res = av.iter().zip(&psi).map(|(x, p)| (x - e0 * p).powi(2)).sum::<f64>().sqrt() / nrm2.sqrt();
    let mut g = PeriodicGroundState::from_samples(d, n, psi, e0)?;
    g.residual = res;
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "bc", rename_all = "snake_case")]
pub enum BoundarySpec {
    Dirichlet,
    Mezincescu(PeriodicGroundState),
}

impl BoundarySpec {
    pub fn neumann(dim: usize, n_per_cell: usize) -> Result<Self> {
        Ok(BoundarySpec::Mezincescu(PeriodicGroundState::constant(dim, n_per_cell)?))
    }
    pub fn tag(&self) -> &'static str {
        match self {
            BoundarySpec::Dirichlet => "dirichlet",
            BoundarySpec::Mezincescu(_) => "mezincescu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcTag {
    Dirichlet,
    Mezincescu,
}

/// Assembled operator with `E0` already subtracted.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    matrix: SparseSym,
    grid: Grid,
    bc: BcTag,
    shift: f64,
    /// `ψ|_Λ`, for boundary terms and bounds.
    psi: Vec<f64>,
    /// Diagonal contributions of dropped (Dirichlet) or folded (Mezincescu) couplings,
    /// `Σ_o ψ(o)/ψ(i) / a²` per node.
    boundary_ratio: Vec<f64>,
}

fn assemble(u: &PeriodicPotential, v: Option<&PotentialField>, grid: &Grid, psi: &PeriodicGroundState, bc: BcTag) -> Result<DiscreteOperator> {
    psi.check_grid(grid)?;
    if let Some(f) = v {
        if f.grid() != grid {
            return invalid("potential field lives on a different grid");
        }
    }
    let unit = grid.unit_cell();
    let us = u.samples(&unit)?;
    let d = grid.dim();
    let inv_a2 = 1.0 / (grid.spacing() * grid.spacing());
    let shape = grid.shape();
    let strides = grid.strides();
    let mut e = Vec::with_capacity(grid.len() * (d + 1));
    let mut ratio = vec![0.0; grid.len()];
    let mut k = vec![0; d];
    let p = psi.values();
    for i in 0..grid.len() {
        grid.multi_index(i, &mut k);
        let ui = grid.unit_cell_index(&k, None);
        let mut diag = 2.0 * d as f64 * inv_a2 + us[ui] + v.map_or(0.0, |f| f.values()[i]) - psi.e0();
        for axis in 0..d {
            if k[axis] + 1 < shape[axis] {
                e.push((i + strides[axis], i, -inv_a2));
            } else {
                ratio[i] += p[grid.unit_cell_index(&k, Some((axis, 1)))] / p[ui] * inv_a2;
            }
            if k[axis] == 0 {
                ratio[i] += p[grid.unit_cell_index(&k, Some((axis, -1)))] / p[ui] * inv_a2;
            }
        }
        if bc == BcTag::Mezincescu {
            diag -= ratio[i];
        }
        e.push((i, i, diag));
    }
    let matrix = SparseSym::from_entries(grid.len(), &e)?;
    Ok(DiscreteOperator { matrix, grid: grid.clone(), bc, shift: psi.e0(), psi: psi.restrict(grid)?, boundary_ratio: ratio })
}

/// `H^χ_Λ − E0`: outside couplings folded onto the diagonal with weight `ψ(o)/ψ(i)`,
/// which keeps `ψ|_Λ` an exact eigenvector at `V = 0`.
pub fn mezincescu_assemble(u: &PeriodicPotential, v: Option<&PotentialField>, grid: &Grid, psi: &PeriodicGroundState) -> Result<DiscreteOperator> {
    assemble(u, v, grid, psi, BcTag::Mezincescu)
}

/// `H^D_Λ − E0`: outside couplings dropped. `psi` supplies `E0` and the trial state for bounds.
pub fn dirichlet_assemble(u: &PeriodicPotential, v: Option<&PotentialField>, grid: &Grid, psi: &PeriodicGroundState) -> Result<DiscreteOperator> {
    assemble(u, v, grid, psi, BcTag::Dirichlet)
}

/// Assemble with either boundary condition.
pub fn assemble_with(u: &PeriodicPotential, v: Option<&PotentialField>, grid: &Grid, psi: &PeriodicGroundState, bc: BcTag) -> Result<DiscreteOperator> {
    assemble(u, v, grid, psi, bc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub lambda0: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

impl DiscreteOperator {
    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }
    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn bc(&self) -> BcTag {
        self.bc
    }
    /// The `E0` that was subtracted.
    pub fn shift(&self) -> f64 {
        self.shift
    }
    pub fn psi(&self) -> &[f64] {
        &self.psi
    }
    pub fn boundary_ratio(&self) -> &[f64] {
        &self.boundary_ratio
    }
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn smallest(&self, k: usize, opts: &EigenOptions) -> Result<crate::spectral::EigenResult> {
        smallest_eigs(&self.matrix, k, opts)
    }

    /// Lowest eigenpair, sign-fixed; fails if the vector is not positive.
    pub fn ground_state(&self, opts: &EigenOptions) -> Result<GroundState> {
        let r = self.smallest(1, opts)?;
        let mut v = r.eigenvectors.and_then(|mut v| v.pop()).ok_or_else(|| Error::Solver("no eigenvector".into()))?;
        if v.iter().sum::<f64>() < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        let vmax = v.iter().copied().fold(0.0, f64::max);
        if v.iter().any(|x| *x < -1e-8 * vmax) {
            return Err(Error::Solver("ground-state vector changes sign".into()));
        }
        Ok(GroundState { lambda0: r.eigenvalues[0], vector: v, residual: r.residuals[0] })
    }

    /// Barta bounds `min_i (Aφ)_i/φ_i ≤ λ0 ≤ ⟨φ, Aφ⟩/⟨φ, φ⟩` for a positive `φ`.
    pub fn barta_bounds(&self, phi: &[f64]) -> Result<(f64, f64)> {
        if phi.len() != self.dim() || phi.iter().any(|p| !(*p > 0.0)) {
            return invalid("Barta test vector must be positive on every node");
        }
        let ap = self.matrix.apply(phi);
        let lo = ap.iter().zip(phi).map(|(a, p)| a / p).fold(f64::INFINITY, f64::min);
        let hi = ap.iter().zip(phi).map(|(a, p)| a * p).sum::<f64>() / phi.iter().map(|p| p * p).sum::<f64>();
        Ok((lo, hi))
    }

    /// `‖A ψ|_Λ‖ / ‖ψ|_Λ‖`.
    pub fn psi_residual(&self) -> f64 {
        let ap = self.matrix.apply(&self.psi);
        let r = ap.iter().map(|x| x * x).sum::<f64>().sqrt();
        r / self.psi.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Coordinate text with a JSON header line.
    pub fn write_coo<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            grid: &'a Grid,
            bc: BcTag,
            shift: f64,
        }
        writeln!(w, "# {}", serde_json::to_string(&Header { grid: &self.grid, bc: self.bc, shift: self.shift })?)?;
        self.matrix.write_coo(w)
    }
}

/// A face `{x_axis = lo_axis}` or `{x_axis = hi_axis}` of a box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxFace {
    pub axis: usize,
    pub upper: bool,
}

/// Face samples of `χ = −(n·∇)ψ/ψ` by one-sided second-order differences.
pub fn chi_values(psi: &PeriodicGroundState, bbox: &LatticeBox, face: BoxFace) -> Result<Vec<(Vec<f64>, f64)>> {
    let grid = Grid::new(bbox.clone(), psi.n_per_cell())?;
    psi.check_grid(&grid)?;
    let d = grid.dim();
    if face.axis >= d {
        return invalid("face axis out of range");
    }
    let shape = grid.shape();
    if shape[face.axis] < 3 {
        return invalid("χ stencil needs three nodes across the face");
    }
    let a = grid.spacing();
    let p = psi.values();
    let mut out = Vec::new();
    let mut k = vec![0; d];
    for i in 0..grid.len() {
        grid.multi_index(i, &mut k);
        if k[face.axis] != 0 {
            continue;
        }
        let f: Vec<f64> = (0..3)
            .map(|s| {
                k[face.axis] = if face.upper { shape[face.axis] - 1 - s } else { s };
                p[grid.unit_cell_index(&k, None)]
            })
            .collect();
        let deriv = (-2.0 * f[0] + 3.0 * f[1] - f[2]) / a;
        let value = (15.0 * f[0] - 10.0 * f[1] + 3.0 * f[2]) / 8.0;
        let mut x = vec![0.0; d];
        k[face.axis] = 0;
        grid.node_coord(grid.linear_index(&k), &mut x);
        x[face.axis] = if face.upper { bbox.hi()[face.axis] } else { bbox.lo()[face.axis] } as f64;
        out.push((x, deriv / value));
    }
    Ok(out)
}

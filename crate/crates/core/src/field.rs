//! Grid samples of `V_ω = f * μ_ω` and of its cut-off variants.

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::impurity::ImpurityPotential;
use crate::lattice::LatticeBox;
use crate::quad::QuadSpec;
use crate::rmeasure::PointMeasure;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Truncation window for the convolution sum and its envelope error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    /// Atoms farther than this (max norm) from the box are dropped.
    pub radius: f64,
    pub tolerance: f64,
    /// `∫_{|z| > radius} f`, when a bound is available.
    pub outer_mass: Option<f64>,
}

impl TruncationPlan {
    pub fn new(pot: &ImpurityPotential, radius: f64, tolerance: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return invalid("truncation radius must be finite and ≥ 0");
        }
        let outer_mass = if radius > 0.0 { pot.outer_mass(radius, QuadSpec::relative(1e-6)) } else { None };
        Ok(Self { radius, tolerance, outer_mass })
    }

    /// Smallest radius in 1, 2, 4, … , 512 with `intensity · outer_mass < tolerance`.
    pub fn auto(pot: &ImpurityPotential, intensity: f64, tolerance: f64) -> Result<Self> {
        let mut r = 1.0;
        loop {
            let plan = Self::new(pot, r, tolerance)?;
            match plan.outer_mass {
                Some(m) if intensity * m < tolerance => return Ok(plan),
                None if pot.support_radius().is_none() && r >= 512.0 => return Ok(plan),
                Some(_) | None if r >= 512.0 => return Ok(plan),
                _ => r *= 2.0,
            }
        }
    }

    /// Measure box needed so that every atom within the window is represented.
    pub fn measure_box(&self, bbox: &LatticeBox) -> LatticeBox {
        bbox.padded(self.radius.ceil() as i64)
    }
}

/// Where a field came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldProvenance {
    pub measure_seed: u64,
    pub potential_family: String,
    pub mode: String,
    pub truncation_radius: f64,
    /// Expected neglected contribution (intensity × envelope tail), if computable.
    pub truncation_error_bound: Option<f64>,
    pub warning: Option<String>,
}

/// Potential samples on the nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    grid: Grid,
    values: Vec<f64>,
    provenance: FieldProvenance,
}

impl PotentialField {
    pub fn new(grid: Grid, values: Vec<f64>, provenance: FieldProvenance) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid("field length differs from the grid");
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return invalid("potential samples must be finite and nonnegative");
        }
        Ok(Self { grid, values, provenance })
    }

    pub fn zero(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
            provenance: FieldProvenance {
                measure_seed: 0,
                potential_family: "constant".into(),
                mode: "constant".into(),
                truncation_radius: 0.0,
                truncation_error_bound: Some(0.0),
                warning: None,
            },
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn provenance(&self) -> &FieldProvenance {
        &self.provenance
    }
    pub fn sup(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
    pub fn mean(&self) -> f64 {
        crate::stats::kahan_sum(self.values.iter().copied()) / self.values.len() as f64
    }
    pub fn is_pointwise_le(&self, other: &PotentialField, slack: f64) -> bool {
        self.values.iter().zip(&other.values).all(|(a, b)| *a <= *b + slack)
    }

    /// Pointwise sum of two fields on the same grid.
    pub fn sum(&self, other: &PotentialField) -> Result<PotentialField> {
        if self.grid != other.grid {
            return invalid("adding fields on different grids");
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Ok(PotentialField { values, ..self.clone() })
    }

    /// CSV dump preceded by a `#`-prefixed JSON header line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Header<'a> {
            grid: &'a Grid,
            provenance: &'a FieldProvenance,
        }
        writeln!(w, "# {}", serde_json::to_string(&Header { grid: &self.grid, provenance: &self.provenance })?)?;
        let d = self.grid.dim();
        let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},v", cols.join(","))?;
        let mut x = vec![0.0; d];
        for (i, v) in self.values.iter().enumerate() {
            self.grid.node_coord(i, &mut x);
            let xs: Vec<String> = x.iter().map(|c| format!("{c}")).collect();
            writeln!(w, "{},{v}", xs.join(","))?;
        }
        Ok(())
    }
}

fn check_dims(pot: &ImpurityPotential, grid: &Grid) -> Result<()> {
    if pot.dim() != grid.dim() {
        return Err(Error::InvalidParameter(format!(
            "potential dimension {} differs from grid dimension {}",
            pot.dim(),
            grid.dim()
        )));
    }
    Ok(())
}

fn window_warning(m: &PointMeasure, grid: &Grid, plan: &TruncationPlan) -> Option<String> {
    if !m.bbox().contains_box(&plan.measure_box(grid.bbox())) {
        Some(format!("measure box {} does not cover the truncation window", m.bbox()))
    } else {
        None
    }
}

/// Atoms (position, weight) within the truncation window that pass `keep`.
fn select_atoms<F: Fn(&[f64]) -> bool>(m: &PointMeasure, grid: &Grid, radius: f64, keep: F) -> (Vec<f64>, Vec<f64>) {
    let mut pos = Vec::new();
    let mut w = Vec::new();
    for (y, wt) in m.atoms() {
        if wt > 0.0 && grid.bbox().distance(y) <= radius && keep(y) {
            pos.extend_from_slice(y);
            w.push(wt);
        }
    }
    (pos, w)
}

fn convolve(pot: &ImpurityPotential, grid: &Grid, pos: &[f64], w: &[f64]) -> Vec<f64> {
    let d = grid.dim();
    let support = pot.support_radius();
    (0..grid.len())
        .into_par_iter()
        .map_init(
            || (vec![0.0; d], vec![0.0; d]),
            |(x, z), i| {
                grid.node_coord(i, x);
                let mut acc = 0.0;
                'atoms: for (y, wt) in pos.chunks(d).zip(w) {
                    for k in 0..d {
                        z[k] = x[k] - y[k];
                        if let Some(r) = support {
                            if z[k].abs() > r {
                                continue 'atoms;
                            }
                        }
                    }
                    acc += wt * pot.eval(z);
                }
                acc
            },
        )
        .collect()
}

/// `V(x) = Σ w_i f(x − y_i)` over atoms within the truncation window of the box.
pub fn sample_potential(m: &PointMeasure, pot: &ImpurityPotential, grid: &Grid, plan: &TruncationPlan) -> Result<PotentialField> {
    check_dims(pot, grid)?;
    if m.dim() != grid.dim() {
        return invalid("measure and grid dimensions differ");
    }
    let (pos, w) = select_atoms(m, grid, plan.radius, |_| true);
    let values = convolve(pot, grid, &pos, &w);
    let intensity = m.total_weight() / m.bbox().volume();
    let bound = match pot.support_radius() {
        Some(r) if r <= plan.radius => Some(0.0),
        _ => plan.outer_mass.map(|o| intensity * o),
    };
    let mut warning = window_warning(m, grid, plan);
    if let Some(b) = bound {
        if b > plan.tolerance {
            warning = Some(format!("truncation error bound {b:e} exceeds tolerance {:e}", plan.tolerance));
        }
    } else if warning.is_none() {
        warning = Some("no envelope bound available for the truncation error".into());
    }
    let provenance = FieldProvenance {
        measure_seed: m.seed(),
        potential_family: pot.family_name().into(),
        mode: "full".into(),
        truncation_radius: plan.radius,
        truncation_error_bound: bound,
        warning,
    };
    PotentialField::new(grid.clone(), values, provenance)
}

/// Restricted convolutions used as lower bounds on `V_ω`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffMode {
    /// `f_u · μ^{(h)}(x − F)` with `F = [0, side)^d` and `f_u` the plateau of `f` on `F`.
    Quantum { h: f64, side: f64 },
    /// Atoms with `|y_b − c_b| > radius` in block `b`, measure regularized at level 1.
    QuantumClassical { block: usize, radius: f64, center: Vec<f64> },
    /// Atoms with `|y_k − c_k| > radii[k]` in every block, measure regularized at level 1.
    Classical { radii: Vec<f64>, center: Vec<f64> },
}

impl CutoffMode {
    pub fn name(&self) -> &'static str {
        match self {
            CutoffMode::Quantum { .. } => "qm",
            CutoffMode::QuantumClassical { .. } => "qc",
            CutoffMode::Classical { .. } => "cl",
        }
    }

    /// Regularization level the measure must already satisfy.
    pub fn required_level(&self) -> f64 {
        match self {
            CutoffMode::Quantum { h, .. } => *h,
            _ => 1.0,
        }
    }

    fn validate(&self, pot: &ImpurityPotential) -> Result<()> {
        let p = pot.profile();
        match self {
            CutoffMode::Quantum { h, side } => {
                if !(*h > 0.0 && *side > 0.0 && *side <= 1.0) {
                    return invalid("qm cut-off needs h > 0 and side in (0, 1]");
                }
            }
            CutoffMode::QuantumClassical { block, radius, center } => {
                if *block >= p.blocks() || !(*radius >= 0.0) || center.len() != p.dim() {
                    return invalid("qc cut-off needs a valid block, radius ≥ 0 and a center of full dimension");
                }
            }
            CutoffMode::Classical { radii, center } => {
                if radii.len() != p.blocks() || radii.iter().any(|r| !(*r >= 0.0)) || center.len() != p.dim() {
                    return invalid("cl cut-off needs one radius ≥ 0 per block and a center of full dimension");
                }
            }
        }
        Ok(())
    }

    fn keeps_point(&self, pot: &ImpurityPotential, y: &[f64]) -> bool {
        let p = pot.profile();
        let block_dist = |k: usize, c: &[f64]| p.block_range(k).map(|i| (y[i] - c[i]).abs()).fold(0.0, f64::max);
        match self {
            CutoffMode::Quantum { .. } => true,
            CutoffMode::QuantumClassical { block, radius, center } => block_dist(*block, center) > *radius,
            CutoffMode::Classical { radii, center } => (0..p.blocks()).all(|k| block_dist(k, center) > radii[k]),
        }
    }

    /// Whether the closed cell `[j, j+1]` reaches the kept region.
    fn keeps_cell(&self, pot: &ImpurityPotential, j: &[i64]) -> bool {
        let p = pot.profile();
        let far = |k: usize, c: &[f64]| {
            p.block_range(k)
                .map(|i| (j[i] as f64 - c[i]).abs().max((j[i] as f64 + 1.0 - c[i]).abs()))
                .fold(0.0, f64::max)
        };
        match self {
            CutoffMode::Quantum { .. } => true,
            CutoffMode::QuantumClassical { block, radius, center } => far(*block, center) > *radius,
            CutoffMode::Classical { radii, center } => (0..p.blocks()).all(|k| far(k, center) > radii[k]),
        }
    }
}

fn check_regularized(m: &PointMeasure, level: f64) -> Result<()> {
    let worst = m.cell_masses().values().iter().copied().fold(0.0, f64::max);
    if worst > level * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "measure is not regularized at level {level}: a cell carries mass {worst}"
        )));
    }
    Ok(())
}

/// Restricted convolution of a regularized measure; pointwise ≤ the full potential
/// of the unregularized measure.
pub fn cutoff_potential(
    m: &PointMeasure,
    pot: &ImpurityPotential,
    mode: &CutoffMode,
    grid: &Grid,
    plan: &TruncationPlan,
) -> Result<PotentialField> {
    check_dims(pot, grid)?;
    mode.validate(pot)?;
    check_regularized(m, mode.required_level())?;
    let d = grid.dim();
    let values = match mode {
        CutoffMode::Quantum { side, .. } => {
            let fu = pot.plateau(*side)?;
            let (pos, w) = select_atoms(m, grid, 1.0, |_| true);
            (0..grid.len())
                .into_par_iter()
                .map_init(
                    || vec![0.0; d],
                    |x, i| {
                        grid.node_coord(i, x);
                        let mut acc = 0.0;
                        for (y, wt) in pos.chunks(d).zip(&w) {
                            if (0..d).all(|k| {
                                let z = x[k] - y[k];
                                (0.0..*side).contains(&z)
                            }) {
                                acc += wt;
                            }
                        }
                        fu * acc
                    },
                )
                .collect()
        }
        _ => {
            let (pos, w) = select_atoms(m, grid, plan.radius, |y| mode.keeps_point(pot, y));
            convolve(pot, grid, &pos, &w)
        }
    };
    let provenance = FieldProvenance {
        measure_seed: m.seed(),
        potential_family: pot.family_name().into(),
        mode: mode.name().into(),
        truncation_radius: plan.radius,
        truncation_error_bound: None,
        warning: window_warning(m, grid, plan),
    };
    PotentialField::new(grid.clone(), values, provenance)
}

/// Realization-independent majorant of a cut-off field:
/// `Σ_j sup_{y ∈ Λ_j} f(x − y)` over kept cells within the window (qc and cl),
/// or the constant `2^d f_u h` (qm).
pub fn cutoff_majorant(pot: &ImpurityPotential, mode: &CutoffMode, grid: &Grid, radius: f64) -> Result<PotentialField> {
    check_dims(pot, grid)?;
    mode.validate(pot)?;
    let d = grid.dim();
    let values = match mode {
        CutoffMode::Quantum { h, side } => {
            let fu = pot.plateau(*side)?;
            vec![fu * h * 2f64.powi(d as i32); grid.len()]
        }
        _ => {
            let window = grid.bbox().padded(radius.ceil() as i64);
            let cells: Vec<Vec<i64>> = window.cells().filter(|j| mode.keeps_cell(pot, j)).collect();
            (0..grid.len())
                .into_par_iter()
                .map_init(
                    || (vec![0.0; d], vec![0.0; d]),
                    |(x, buf), i| {
                        grid.node_coord(i, x);
                        cells.iter().map(|j| pot.sup_over_cell(x, j, buf)).sum::<f64>()
                    },
                )
                .collect()
        }
    };
    let provenance = FieldProvenance {
        measure_seed: 0,
        potential_family: pot.family_name().into(),
        mode: format!("{}_majorant", mode.name()),
        truncation_radius: radius,
        truncation_error_bound: None,
        warning: None,
    };
    PotentialField::new(grid.clone(), values, provenance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impurity::AnisotropyProfile;
    use crate::rmeasure::MeasureFamily;

    fn pot() -> ImpurityPotential {
        ImpurityPotential::algebraic(AnisotropyProfile::new(vec![1, 1], vec![3.0, 3.0]).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn single_atom_reproduces_f() {
        let p = pot();
        let grid = Grid::new(LatticeBox::cube(2, 2).unwrap(), 2).unwrap();
        let mbox = LatticeBox::cube(2, 2).unwrap().padded(3);
        let m = PointMeasure::from_atoms(mbox, MeasureFamily::Poisson, 0, vec![0.0, 0.0], vec![1.0]).unwrap();
        let plan = TruncationPlan::new(&p, 3.0, 1.0).unwrap();
        let v = sample_potential(&m, &p, &grid, &plan).unwrap();
        for (x, val) in grid.coords().iter().zip(v.values()) {
            assert_eq!(*val, p.eval(x));
        }
    }

    #[test]
    fn qm_single_unit_atom() {
        let p = pot();
        let grid = Grid::new(LatticeBox::new(vec![-1, -1], vec![2, 2]).unwrap(), 4).unwrap();
        let m = PointMeasure::from_atoms(LatticeBox::new(vec![-2, -2], vec![3, 3]).unwrap(), MeasureFamily::Poisson, 0, vec![0.0, 0.0], vec![1.0])
            .unwrap();
        let mode = CutoffMode::Quantum { h: 1.0, side: 1.0 };
        let plan = TruncationPlan::new(&p, 1.0, 1.0).unwrap();
        let v = cutoff_potential(&m, &p, &mode, &grid, &plan).unwrap();
        let fu = p.plateau(1.0).unwrap();
        for (x, val) in grid.coords().iter().zip(v.values()) {
            let inside = x.iter().all(|c| (0.0..1.0).contains(c));
            assert_eq!(*val, if inside { fu } else { 0.0 });
        }
    }

    #[test]
    fn qm_rejects_unregularized() {
        let p = pot();
        let grid = Grid::new(LatticeBox::cube(2, 1).unwrap(), 2).unwrap();
        let m = PointMeasure::from_atoms(LatticeBox::cube(2, 1).unwrap(), MeasureFamily::Poisson, 0, vec![0.5, 0.5], vec![1.0])
            .unwrap();
        let plan = TruncationPlan::new(&p, 1.0, 1.0).unwrap();
        assert!(cutoff_potential(&m, &p, &CutoffMode::Quantum { h: 0.5, side: 1.0 }, &grid, &plan).is_err());
    }
}

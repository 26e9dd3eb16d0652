//! A complete random operator model: measure law, impurity, background and discretization.

use crate::discretize::{assemble_with, periodic_ground_state, BcTag, DiscreteOperator, PeriodicGroundState, PeriodicPotential};
use crate::error::{invalid, Result};
use crate::field::{sample_potential, PotentialField, TruncationPlan};
use crate::grid::Grid;
use crate::impurity::{ImpurityPotential, PotentialSpec};
use crate::lattice::LatticeBox;
use crate::rmeasure::{MeasureSpec, PointMeasure};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    /// Fixed window radius; chosen from the envelope tail when absent.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-3
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { radius: None, tolerance: default_tolerance() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub measure: MeasureSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub u_per: PeriodicPotential,
    pub n_per_cell: usize,
    #[serde(default)]
    pub truncation: TruncationSpec,
}

/// Validated model with the periodic ground state and truncation plan resolved.
#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    potential: ImpurityPotential,
    psi: PeriodicGroundState,
    plan: TruncationPlan,
}

/// One sampled environment on a box.
#[derive(Debug, Clone)]
pub struct Realization {
    pub seed: u64,
    pub measure: PointMeasure,
    pub field: PotentialField,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.measure.validate()?;
        let potential = spec.potential.build()?;
        let d = potential.dim();
        if spec.n_per_cell < 2 {
            return invalid("n_per_cell must be ≥ 2");
        }
        let unit = Grid::new(LatticeBox::unit(d), spec.n_per_cell)?;
        let psi = periodic_ground_state(&spec.u_per, &unit)?;
        let plan = match spec.truncation.radius {
            Some(r) => TruncationPlan::new(&potential, r, spec.truncation.tolerance)?,
            None => TruncationPlan::auto(&potential, spec.measure.mean_cell_mass(), spec.truncation.tolerance)?,
        };
        Ok(Self { spec, potential, psi, plan })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
    pub fn potential(&self) -> &ImpurityPotential {
        &self.potential
    }
    pub fn psi(&self) -> &PeriodicGroundState {
        &self.psi
    }
    pub fn plan(&self) -> &TruncationPlan {
        &self.plan
    }
    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn grid(&self, bbox: &LatticeBox) -> Result<Grid> {
        if bbox.dim() != self.dim() {
            return invalid(format!("box dimension {} differs from model dimension {}", bbox.dim(), self.dim()));
        }
        Grid::new(bbox.clone(), self.spec.n_per_cell)
    }

    /// Atoms on the box padded by the truncation radius.
    pub fn sample_measure(&self, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
        self.spec.measure.sample(&self.plan.measure_box(bbox), seed)
    }

    pub fn field(&self, m: &PointMeasure, grid: &Grid) -> Result<PotentialField> {
        sample_potential(m, &self.potential, grid, &self.plan)
    }

    pub fn realize(&self, bbox: &LatticeBox, seed: u64) -> Result<Realization> {
        let grid = self.grid(bbox)?;
        let measure = self.sample_measure(bbox, seed)?;
        let field = self.field(&measure, &grid)?;
        Ok(Realization { seed, measure, field })
    }

    pub fn operator(&self, field: Option<&PotentialField>, grid: &Grid, bc: BcTag) -> Result<DiscreteOperator> {
        assemble_with(&self.spec.u_per, field, grid, &self.psi, bc)
    }
}

//! Eigenvalue bounds: Temple from below, Rayleigh–Ritz from above, the free spectral gap,
//! the Dirichlet/Mezincescu sandwich of the IDS, and the full chain on sampled realizations.

use crate::discretize::{BcTag, DiscreteOperator};
use crate::error::{invalid, Error, Result};
use crate::field::{cutoff_majorant, cutoff_potential, CutoffMode, PotentialField};
use crate::grid::Grid;
use crate::ids::{counts_on_grid, scaling_lengths, IdsEstimate, ScalingKind};
use crate::impurity::AnisotropyProfile;
use crate::lattice::LatticeBox;
use crate::model::Model;
use crate::rng::realization_seed;
use crate::spectral::{EigenOptions, InertiaCounter};
use crate::stats::{kahan_sum, ols, Proportion, Z95};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `∫ θ₁'²` for the one-dimensional quintic-ramp cut-off on `[−1/2, 1/2]`.
pub const THETA_GRADIENT: f64 = 80.0 / 7.0;
/// `∫ θ₁²` for the same profile.
pub const THETA_MASS: f64 = 643.0 / 924.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempleBound {
    /// `−∞` when invalid.
    #[serde(with = "crate::records::float_or_string")]
    pub value: f64,
    pub first_moment: f64,
    pub second_moment: f64,
    pub gap: f64,
    pub valid: bool,
}

/// `ψ²`-weighted moments `(⟨V⟩, ⟨V²⟩)`.
pub fn weighted_moments(v: &[f64], psi: &[f64]) -> (f64, f64) {
    let z = kahan_sum(psi.iter().map(|p| p * p));
    let m1 = kahan_sum(v.iter().zip(psi).map(|(x, p)| x * p * p)) / z;
    let m2 = kahan_sum(v.iter().zip(psi).map(|(x, p)| x * x * p * p)) / z;
    (m1, m2)
}

/// `m1 − m2/(gap − m1)` with the trial state `ψ|_Λ` and a known `λ1(H^χ(0))`.
pub fn temple_bound_with_gap(v: &PotentialField, psi_l: &[f64], gap: f64) -> TempleBound {
    let (m1, m2) = weighted_moments(v.values(), psi_l);
    temple_from_moments(m1, m2, gap)
}

pub fn temple_from_moments(m1: f64, m2: f64, gap: f64) -> TempleBound {
    let valid = gap - m1 > 0.0;
    let value = if valid { m1 - m2 / (gap - m1) } else { f64::NEG_INFINITY };
    TempleBound { value, first_moment: m1, second_moment: m2, gap, valid }
}

/// Temple bound with the gap taken from the second eigenvalue of `h_chi0`.
pub fn temple_bound(h_chi0: &DiscreteOperator, v: &PotentialField, opts: &EigenOptions) -> Result<TempleBound> {
    if h_chi0.bc() != BcTag::Mezincescu {
        return invalid("Temple needs the Mezincescu operator with V = 0");
    }
    let gap = free_gap(h_chi0, opts)?;
    Ok(temple_bound_with_gap(v, h_chi0.psi(), gap))
}

/// `λ1(H^χ(0))`; the ground-state energy is exactly 0 after the shift.
pub fn free_gap(h_chi0: &DiscreteOperator, opts: &EigenOptions) -> Result<f64> {
    if h_chi0.dim() < 2 {
        return invalid("gap needs at least two nodes");
    }
    let r = h_chi0.smallest(2, &EigenOptions { lower_hint: Some(0.0), ..*opts })?;
    Ok(r.eigenvalues[1])
}

/// `½ ⟨V⟩_ψ`.
pub fn half_average_bound(v: &PotentialField, psi_l: &[f64]) -> f64 {
    0.5 * weighted_moments(v.values(), psi_l).0
}

/// One-dimensional cut-off: 1 on `|u| ≤ 1/4`, quintic ramp to 0 at `|u| = 1/2`.
pub fn theta_1d(u: f64) -> f64 {
    let t = u.abs();
    if t <= 0.25 {
        1.0
    } else if t >= 0.5 {
        0.0
    } else {
        let s = 4.0 * (0.5 - t);
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// `θ_Λ(x) = Π_i θ₁((x_i − c_i)/side_i)` on the nodes of `grid`.
pub fn smoothed_indicator(grid: &Grid) -> Vec<f64> {
    let b = grid.bbox();
    let c = b.center();
    let sides = b.sides();
    let mut x = vec![0.0; grid.dim()];
    (0..grid.len())
        .map(|i| {
            grid.node_coord(i, &mut x);
            (0..x.len()).map(|k| theta_1d((x[k] - c[k]) / sides[k] as f64)).product()
        })
        .collect()
}

/// `d·A/(B L²)`: the continuum gradient quotient of `θ` on a cube of side `L` with `ψ ≡ 1`.
pub fn continuum_gradient_ratio(dim: usize, side: f64) -> f64 {
    dim as f64 * THETA_GRADIENT / (THETA_MASS * side * side)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayleighRitzBound {
    pub value: f64,
    pub potential_term: f64,
    pub gradient_term: f64,
    /// Dropped-coupling contribution; zero whenever `θ` vanishes on boundary nodes.
    pub boundary_term: f64,
    pub trial: String,
}

/// Rayleigh quotient of `θ_Λ ψ` for the Dirichlet operator (which already contains `V`).
pub fn rayleigh_ritz_upper(hd: &DiscreteOperator, v: Option<&PotentialField>) -> Result<RayleighRitzBound> {
    if hd.bc() != BcTag::Dirichlet {
        return invalid("Rayleigh–Ritz bound is stated for the Dirichlet operator");
    }
    let grid = hd.grid();
    let theta = smoothed_indicator(grid);
    let psi = hd.psi();
    let phi: Vec<f64> = theta.iter().zip(psi).map(|(t, p)| t * p).collect();
    let norm2 = kahan_sum(phi.iter().map(|p| p * p));
    if norm2 == 0.0 {
        return Err(Error::InvalidParameter("cut-off vanishes on every node; refine the grid".into()));
    }
    let value = hd.matrix().quadratic_form(&phi) / norm2;
    let potential_term = match v {
        Some(f) => kahan_sum(f.values().iter().zip(&phi).map(|(x, p)| x * p * p)) / norm2,
        None => 0.0,
    };
    let inv_a2 = 1.0 / (grid.spacing() * grid.spacing());
    let shape = grid.shape();
    let strides = grid.strides();
    let mut k = vec![0; grid.dim()];
    let mut grad = crate::stats::KahanSum::new();
    for i in 0..grid.len() {
        grid.multi_index(i, &mut k);
        for axis in 0..grid.dim() {
            if k[axis] + 1 < shape[axis] {
                let j = i + strides[axis];
                grad.add(psi[i] * psi[j] * (theta[i] - theta[j]).powi(2) * inv_a2);
            }
        }
    }
    let boundary_term = kahan_sum((0..grid.len()).map(|i| phi[i] * phi[i] * hd.boundary_ratio()[i])) / norm2;
    Ok(RayleighRitzBound {
        value,
        potential_term,
        gradient_term: grad.value() / norm2,
        boundary_term,
        trial: "quintic-ramp cut-off times periodic ground state".into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapFit {
    pub sides: Vec<i64>,
    pub gaps: Vec<f64>,
    /// Slope of `log gap` against `log L`.
    pub exponent: f64,
    pub exponent_std_error: f64,
    pub r_squared: f64,
    /// Largest `c0` with `gap ≥ 2 c0 L^{-2}` on every tested side.
    pub c0: f64,
}

/// Gaps `λ1 − λ0` of `H^χ(0)` on cubes of the given sides.
pub fn gap_scaling(model: &Model, sides: &[i64]) -> Result<GapFit> {
    if sides.len() < 2 {
        return invalid("gap scaling needs at least two box sizes");
    }
    let d = model.dim();
    let gaps = sides
        .iter()
        .map(|&l| {
            let grid = model.grid(&LatticeBox::cube(d, l)?)?;
            let op = model.operator(None, &grid, BcTag::Mezincescu)?;
            let r = op.smallest(2, &EigenOptions { lower_hint: Some(0.0), ..Default::default() })?;
            Ok(r.eigenvalues[1] - r.eigenvalues[0])
        })
        .collect::<Result<Vec<f64>>>()?;
    if gaps.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Solver("non-positive spectral gap".into()));
    }
    let x: Vec<f64> = sides.iter().map(|&l| (l as f64).ln()).collect();
    let y: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let fit = ols(&x, &y).ok_or_else(|| Error::InsufficientData("degenerate gap fit".into()))?;
    let c0 = sides.iter().zip(&gaps).map(|(&l, g)| g * (l * l) as f64 / 2.0).fold(f64::INFINITY, f64::min);
    Ok(GapFit { sides: sides.to_vec(), gaps, exponent: fit.slope, exponent_std_error: fit.slope_std_error, r_squared: fit.r_squared, c0 })
}

/// Per-volume value with a 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichPoint {
    pub energy: f64,
    pub side: i64,
    pub n_realizations: usize,
    /// `P̂{λ0(H^D) < E} / |Λ|`.
    pub lower: Interval,
    /// Mean `N(E; H^χ_{Λ'}) / |Λ'|` on the doubled box `Λ'`.
    pub direct: Interval,
    /// `N(E; H^χ(0)) · P̂{λ0(H^χ) < E} / |Λ|`.
    pub upper: Interval,
    pub free_count: usize,
    pub p_dirichlet: Proportion,
    pub p_mezincescu: Proportion,
    /// `lower ≤ upper` for the point estimates.
    pub ordered: bool,
    /// `lower ≤ direct ≤ upper` up to the 95% intervals.
    pub consistent: bool,
    pub warning: Option<String>,
}

fn scaled(p: &Proportion, factor: f64) -> Interval {
    Interval { value: p.estimate * factor, ci_low: p.ci_low * factor, ci_high: p.ci_high * factor }
}

/// Paired per-realization outcomes behind the sandwich.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichSamples {
    pub energies: Vec<f64>,
    pub side: i64,
    pub dim: usize,
    pub seed: u64,
    /// `N(E; H^χ_Λ(0))`.
    pub free_counts: Vec<usize>,
    /// Per realization and energy: `λ0(H^D_Λ) < E`.
    pub below_dirichlet: Vec<Vec<bool>>,
    /// Per realization and energy: `λ0(H^χ_Λ) < E`.
    pub below_mezincescu: Vec<Vec<bool>>,
    /// Per realization and energy: `N(E; H^χ_{Λ'})` on the doubled box.
    pub direct_counts: Vec<Vec<usize>>,
    pub n_failed: usize,
}

/// Samples `n` realizations on `[0, 2L)^d` and counts on `[0, L)^d` (both boundary
/// conditions) and on `[0, 2L)^d` (Mezincescu), all from the same atoms.
pub fn sandwich_samples(model: &Model, side: i64, energies: &[f64], n: usize, seed: u64) -> Result<SandwichSamples> {
    if n == 0 {
        return invalid("sandwich needs realizations");
    }
    crate::ids::check_energies(energies)?;
    let d = model.dim();
    let small = LatticeBox::cube(d, side)?;
    let big = LatticeBox::cube(d, 2 * side)?;
    let gs = model.grid(&small)?;
    let gb = model.grid(&big)?;
    let free = model.operator(None, &gs, BcTag::Mezincescu)?;
    let free_counts = counts_on_grid(&InertiaCounter::new(free.matrix()), energies)?;
    let per: Vec<Result<(Vec<bool>, Vec<bool>, Vec<usize>)>> = (0..n)
        .into_par_iter()
        .map(|r| {
            let s = realization_seed(seed, r as u64);
            let m = model.sample_measure(&big, s)?;
            let vs = model.field(&m, &gs)?;
            let vb = model.field(&m, &gb)?;
            let hd = model.operator(Some(&vs), &gs, BcTag::Dirichlet)?;
            let hc = model.operator(Some(&vs), &gs, BcTag::Mezincescu)?;
            let hb = model.operator(Some(&vb), &gb, BcTag::Mezincescu)?;
            let below_d = counts_on_grid(&InertiaCounter::new(hd.matrix()), energies)?.into_iter().map(|c| c > 0).collect();
            let below_c = counts_on_grid(&InertiaCounter::new(hc.matrix()), energies)?.into_iter().map(|c| c > 0).collect();
            Ok((below_d, below_c, counts_on_grid(&InertiaCounter::new(hb.matrix()), energies)?))
        })
        .collect();
    let mut out = SandwichSamples {
        energies: energies.to_vec(),
        side,
        dim: d,
        seed,
        free_counts,
        below_dirichlet: Vec::new(),
        below_mezincescu: Vec::new(),
        direct_counts: Vec::new(),
        n_failed: 0,
    };
    for (r, p) in per.into_iter().enumerate() {
        match p {
            Ok((a, b, c)) => {
                out.below_dirichlet.push(a);
                out.below_mezincescu.push(b);
                out.direct_counts.push(c);
            }
            Err(e) => {
                out.n_failed += 1;
                log::warn!("sandwich realization {r} failed: {e}");
            }
        }
    }
    if out.direct_counts.len() < 2 {
        return Err(Error::Solver(format!("{} of {n} sandwich realizations failed", out.n_failed)));
    }
    Ok(out)
}

impl SandwichSamples {
    pub fn n_ok(&self) -> usize {
        self.direct_counts.len()
    }

    /// The direct curve `N(E; H^χ_{Λ'})/|Λ'|` as an IDS estimate.
    pub fn direct_estimate(&self) -> Result<IdsEstimate> {
        let big = LatticeBox::cube(self.dim, 2 * self.side)?;
        let vol = big.volume();
        let mut est = IdsEstimate::from_values(self.energies.clone(), vec![0.0; self.energies.len()])?;
        est.bbox = big;
        est.bc = BcTag::Mezincescu;
        est.n_realizations = self.n_ok();
        est.n_failed = self.n_failed;
        est.seed = self.seed;
        for k in 0..self.energies.len() {
            let xs: Vec<f64> = self.direct_counts.iter().map(|c| c[k] as f64 / vol).collect();
            let m = crate::stats::mean_estimate(&xs);
            est.values[k] = m.mean;
            est.std_errors[k] = m.std_error;
            est.ci_low[k] = (m.mean - Z95 * m.std_error).max(0.0);
            est.ci_high[k] = m.mean + Z95 * m.std_error;
        }
        Ok(est)
    }

    pub fn points(&self) -> Result<Vec<SandwichPoint>> {
        let vol_s = LatticeBox::cube(self.dim, self.side)?.volume();
        let direct = self.direct_estimate()?;
        let nn = self.n_ok() as u64;
        Ok(self
            .energies
            .iter()
            .enumerate()
            .map(|(k, &e)| {
                let kd = self.below_dirichlet.iter().filter(|o| o[k]).count() as u64;
                let kc = self.below_mezincescu.iter().filter(|o| o[k]).count() as u64;
                let pd = Proportion::new(kd, nn);
                let pc = Proportion::new(kc, nn);
                let lower = scaled(&pd, 1.0 / vol_s);
                let upper = scaled(&pc, self.free_counts[k] as f64 / vol_s);
                let direct = Interval { value: direct.values[k], ci_low: direct.ci_low[k], ci_high: direct.ci_high[k] };
                let ordered = lower.value <= upper.value;
                let consistent = lower.ci_low <= direct.ci_high && direct.ci_low <= upper.ci_high;
                let warning = (kd == 0 && kc == 0 && direct.value == 0.0)
                    .then(|| "no realization reached this energy; the comparison has no power".to_string());
                SandwichPoint {
                    energy: e,
                    side: self.side,
                    n_realizations: nn as usize,
                    lower,
                    direct,
                    upper,
                    free_count: self.free_counts[k],
                    p_dirichlet: pd,
                    p_mezincescu: pc,
                    ordered,
                    consistent,
                    warning,
                }
            })
            .collect())
    }
}

/// Both sides of the IDS sandwich on `[0, L)^d` and a direct estimate on `[0, 2L)^d`.
pub fn verify_sandwich(model: &Model, side: i64, energies: &[f64], n: usize, seed: u64) -> Result<Vec<SandwichPoint>> {
    sandwich_samples(model, side, energies, n, seed)?.points()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TempleRegime {
    Qm,
    Qc,
    Cl,
}

/// Box, regularization level and cut-off for one of the three Temple arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TempleSetup {
    pub regime: TempleRegime,
    pub bbox: LatticeBox,
    pub mode: CutoffMode,
    pub level: f64,
    pub length: f64,
    pub r0: f64,
}

impl TempleSetup {
    /// Cube `[1−L, L)^d` with `μ^{(h)}`, `h = (r0 L)^{-2}`.
    pub fn qm(dim: usize, l: i64, r0: f64) -> Result<Self> {
        let h = (r0 * l as f64).powi(-2);
        Ok(Self {
            regime: TempleRegime::Qm,
            bbox: LatticeBox::centered_cube(dim, l)?,
            mode: CutoffMode::Quantum { h, side: 1.0 },
            level: h,
            length: l as f64,
            r0,
        })
    }

    /// Cuboid long in block 0 and one cell thick in block 1; atoms with `|y_1| > R` kept.
    pub fn qc(profile: &AnisotropyProfile, l: i64, r0: f64) -> Result<Self> {
        if profile.blocks() != 2 {
            return invalid("qc setup needs two blocks");
        }
        let sl = scaling_lengths(profile, ScalingKind::Qc, (l as f64).powi(-2), r0, 1.0)?;
        let r = sl.r.ok_or_else(|| Error::InvalidParameter("no qc radius".into()))?;
        let d = profile.dim();
        let mut lo = vec![0; d];
        let mut hi = vec![1; d];
        for i in profile.block_range(0) {
            lo[i] = 1 - l;
            hi[i] = l;
        }
        Ok(Self {
            regime: TempleRegime::Qc,
            bbox: LatticeBox::new(lo, hi)?,
            mode: CutoffMode::QuantumClassical { block: 1, radius: r, center: vec![0.0; d] },
            level: 1.0,
            length: l as f64,
            r0,
        })
    }

    /// Unit cube with atoms outside `|y_k| ≤ (r0 L)^{β_k}` in every block.
    pub fn cl(profile: &AnisotropyProfile, l: i64, r0: f64) -> Result<Self> {
        let sl = scaling_lengths(profile, ScalingKind::Cl, (l as f64).powi(-2), r0, 1.0)?;
        let radii = sl.radii.clone();
        Ok(Self {
            regime: TempleRegime::Cl,
            bbox: LatticeBox::unit(profile.dim()),
            mode: CutoffMode::Classical { radii, center: vec![0.0; profile.dim()] },
            level: 1.0,
            length: l as f64,
            r0,
        })
    }
}

/// Realization-independent parts of a Temple setup.
#[derive(Debug, Clone)]
pub struct PreparedTemple {
    pub setup: TempleSetup,
    pub grid: Grid,
    pub h_chi0: DiscreteOperator,
    pub gap: f64,
    /// `sup` of the cut-off majorant on the grid.
    pub majorant_sup: f64,
    /// `sup V ≤ gap/4`, which forces `m1 ≤ gap/2` and `half_average ≤ temple`.
    pub hypotheses_hold: bool,
}

pub fn prepare_temple(model: &Model, setup: TempleSetup, opts: &EigenOptions) -> Result<PreparedTemple> {
    let grid = model.grid(&setup.bbox)?;
    let h_chi0 = model.operator(None, &grid, BcTag::Mezincescu)?;
    let gap = free_gap(&h_chi0, opts)?;
    let maj = cutoff_majorant(model.potential(), &setup.mode, &grid, model.plan().radius)?;
    let majorant_sup = maj.sup();
    Ok(PreparedTemple { hypotheses_hold: majorant_sup <= gap / 4.0, setup, grid, h_chi0, gap, majorant_sup })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub regime: TempleRegime,
    pub seed: u64,
    pub half_average: f64,
    pub temple: TempleBound,
    pub lambda0_chi_cutoff: f64,
    pub lambda0_chi: f64,
    pub lambda0_dirichlet: f64,
    pub rayleigh_ritz: RayleighRitzBound,
    pub cutoff_sup: f64,
    pub holds: bool,
    pub violations: Vec<String>,
}

/// `½⟨V_c⟩ ≤ Temple(V_c) ≤ λ0(H^χ(V_c)) ≤ λ0(H^χ(V)) ≤ λ0(H^D(V)) ≤ RR(V)` for one realization.
pub fn bound_chain(model: &Model, prep: &PreparedTemple, seed: u64, opts: &EigenOptions) -> Result<ChainReport> {
    let m = model.sample_measure(&prep.setup.bbox, seed)?;
    let v = model.field(&m, &prep.grid)?;
    let reg = m.regularize(prep.setup.level)?;
    let vc = cutoff_potential(&reg, model.potential(), &prep.setup.mode, &prep.grid, model.plan())?;
    let psi = prep.h_chi0.psi();
    let temple = temple_bound_with_gap(&vc, psi, prep.gap);
    let half = half_average_bound(&vc, psi);
    let hint = EigenOptions { lower_hint: Some(0.0), ..*opts };
    let l_cut = model.operator(Some(&vc), &prep.grid, BcTag::Mezincescu)?.ground_state(&hint)?.lambda0;
    let l_chi = model.operator(Some(&v), &prep.grid, BcTag::Mezincescu)?.ground_state(&hint)?.lambda0;
    let hd = model.operator(Some(&v), &prep.grid, BcTag::Dirichlet)?;
    let l_d = hd.ground_state(&hint)?.lambda0;
    let rr = rayleigh_ritz_upper(&hd, Some(&v))?;
    let chain = [
        ("half_average", half),
        ("temple", temple.value),
        ("lambda0_chi_cutoff", l_cut),
        ("lambda0_chi", l_chi),
        ("lambda0_dirichlet", l_d),
        ("rayleigh_ritz", rr.value),
    ];
    let scale = hd.matrix().norm_inf().max(1.0);
    let slack = 10.0 * opts.tol * scale;
    let mut violations = Vec::new();
    for w in chain.windows(2) {
        if !(w[0].1 <= w[1].1 + slack) {
            violations.push(format!("{} = {} > {} = {}", w[0].0, w[0].1, w[1].0, w[1].1));
        }
    }
    Ok(ChainReport {
        regime: prep.setup.regime,
        seed,
        half_average: half,
        temple,
        lambda0_chi_cutoff: l_cut,
        lambda0_chi: l_chi,
        lambda0_dirichlet: l_d,
        rayleigh_ritz: rr,
        cutoff_sup: vc.sup(),
        holds: violations.is_empty(),
        violations,
    })
}

/// Chains for realizations `0..n` of `master`, in index order.
pub fn bound_chains(model: &Model, prep: &PreparedTemple, n: usize, master: u64, opts: &EigenOptions) -> Result<Vec<ChainReport>> {
    (0..n)
        .into_par_iter()
        .map(|r| bound_chain(model, prep, realization_seed(master, r as u64), opts))
        .collect()
}

//! Atomic random Borel measures: sampling, cell decomposition, regularization and
//! empirical checks of the structural assumptions (stationarity, independence,
//! positive intensity, small-mass probability).

use crate::error::{invalid, Error, Result};
use crate::lattice::LatticeBox;
use crate::rng::{cell_rng, realization_seed, stream};
use crate::stats::{mean_estimate, ols, pearson, OlsFit, Proportion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Law of the atom weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightLaw {
    Constant { value: f64 },
    Exponential { mean: f64 },
    Uniform { a: f64, b: f64 },
    /// Weight `c` with probability `p`, else 0.
    BernoulliScaled { p: f64, c: f64 },
}

impl WeightLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        match *self {
            WeightLaw::Constant { value } if ok(value) && value > 0.0 => Ok(()),
            WeightLaw::Exponential { mean } if ok(mean) && mean > 0.0 => Ok(()),
            WeightLaw::Uniform { a, b } if ok(a) && ok(b) && b > a => Ok(()),
            WeightLaw::BernoulliScaled { p, c } if ok(p) && ok(c) && p > 0.0 && p <= 1.0 && c > 0.0 => Ok(()),
            other => invalid(format!("weight law {other:?} needs finite nonnegative parameters with 0 < mean < ∞")),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            WeightLaw::Constant { value } => value,
            WeightLaw::Exponential { mean } => mean,
            WeightLaw::Uniform { a, b } => 0.5 * (a + b),
            WeightLaw::BernoulliScaled { p, c } => p * c,
        }
    }

    /// `P{w < x}`.
    pub fn cdf_below(&self, x: f64) -> f64 {
        match *self {
            WeightLaw::Constant { value } => f64::from(u8::from(value < x)),
            WeightLaw::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0 - (-x / mean).exp()
                }
            }
            WeightLaw::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            WeightLaw::BernoulliScaled { p, c } => {
                let mut q = 0.0;
                if x > 0.0 {
                    q += 1.0 - p;
                }
                if c < x {
                    q += p;
                }
                q
            }
        }
    }

    /// Whether `P{w < ε} ≥ ε^κ` holds for some finite κ and all small ε.
    pub fn has_small_weight_mass(&self) -> bool {
        match *self {
            WeightLaw::Constant { .. } => false,
            WeightLaw::Exponential { .. } => true,
            WeightLaw::Uniform { a, .. } => a == 0.0,
            WeightLaw::BernoulliScaled { p, .. } => p < 1.0,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightLaw::Constant { value } => value,
            WeightLaw::Exponential { mean } => Exp::new(1.0 / mean).map(|e| e.sample(rng)).unwrap_or(0.0),
            WeightLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            WeightLaw::BernoulliScaled { p, c } => {
                if rng.random::<f64>() < p {
                    c
                } else {
                    0.0
                }
            }
        }
    }
}

/// Family tag of a sampled measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureFamily {
    Poisson,
    Displacement,
    CompoundPoisson,
    CompoundDisplacement,
    Periodic,
}

fn default_true() -> bool {
    true
}

/// Sampler configuration for the measure families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    Poisson {
        intensity: f64,
    },
    CompoundPoisson {
        intensity: f64,
        weights: WeightLaw,
    },
    /// One unit atom per cell, uniformly displaced.
    Displacement,
    /// One atom per cell with random weight; `displaced = false` gives the alloy-type measure.
    CompoundDisplacement {
        weights: WeightLaw,
        #[serde(default = "default_true")]
        displaced: bool,
    },
    /// Unit atom at every lattice point.
    Periodic,
}

impl MeasureSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            MeasureSpec::Poisson { intensity } => check_intensity(*intensity),
            MeasureSpec::CompoundPoisson { intensity, weights } => {
                check_intensity(*intensity)?;
                weights.validate()
            }
            MeasureSpec::CompoundDisplacement { weights, .. } => weights.validate(),
            MeasureSpec::Displacement | MeasureSpec::Periodic => Ok(()),
        }
    }

    pub fn family(&self) -> MeasureFamily {
        match self {
            MeasureSpec::Poisson { .. } => MeasureFamily::Poisson,
            MeasureSpec::CompoundPoisson { .. } => MeasureFamily::CompoundPoisson,
            MeasureSpec::Displacement => MeasureFamily::Displacement,
            MeasureSpec::CompoundDisplacement { .. } => MeasureFamily::CompoundDisplacement,
            MeasureSpec::Periodic => MeasureFamily::Periodic,
        }
    }

    /// Expected mass of one unit cell.
    pub fn mean_cell_mass(&self) -> f64 {
        match self {
            MeasureSpec::Poisson { intensity } => *intensity,
            MeasureSpec::CompoundPoisson { intensity, weights } => intensity * weights.mean(),
            MeasureSpec::Displacement | MeasureSpec::Periodic => 1.0,
            MeasureSpec::CompoundDisplacement { weights, .. } => weights.mean(),
        }
    }

    pub fn sample(&self, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
        self.validate()?;
        let dim = bbox.dim();
        let mut positions = Vec::new();
        let mut weights = Vec::new();
        for j in bbox.cells() {
            let mut rng = cell_rng(seed, stream::MEASURE, &j);
            match self {
                MeasureSpec::Poisson { intensity } => {
                    let k = poisson_count(*intensity, &mut rng);
                    for _ in 0..k {
                        push_uniform(&j, &mut rng, &mut positions);
                        weights.push(1.0);
                    }
                }
                MeasureSpec::CompoundPoisson { intensity, weights: law } => {
                    let k = poisson_count(*intensity, &mut rng);
                    for _ in 0..k {
                        push_uniform(&j, &mut rng, &mut positions);
                        weights.push(law.sample(&mut rng));
                    }
                }
                MeasureSpec::Displacement => {
                    push_uniform(&j, &mut rng, &mut positions);
                    weights.push(1.0);
                }
                MeasureSpec::CompoundDisplacement { weights: law, displaced } => {
                    if *displaced {
                        push_uniform(&j, &mut rng, &mut positions);
                    } else {
                        positions.extend(j.iter().map(|&c| c as f64));
                    }
                    weights.push(law.sample(&mut rng));
                }
                MeasureSpec::Periodic => {
                    positions.extend(j.iter().map(|&c| c as f64));
                    weights.push(1.0);
                }
            }
        }
        debug_assert_eq!(positions.len(), weights.len() * dim);
        Ok(PointMeasure { bbox: bbox.clone(), family: self.family(), seed, positions, weights })
    }
}

fn check_intensity(rho: f64) -> Result<()> {
    if rho.is_finite() && rho >= 0.0 {
        Ok(())
    } else {
        invalid(format!("intensity must be finite and ≥ 0, got {rho}"))
    }
}

fn poisson_count(rho: f64, rng: &mut ChaCha8Rng) -> u64 {
    if rho == 0.0 {
        return 0;
    }
    let d: Poisson<f64> = Poisson::new(rho).expect("validated intensity");
    d.sample(rng) as u64
}

fn push_uniform(j: &[i64], rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
    for &c in j {
        let lo = c as f64;
        let x = lo + rng.random::<f64>();
        // keep the atom inside the half-open cell when rounding lands on the upper face
        out.push(if x >= lo + 1.0 { (lo + 1.0).next_down() } else { x });
    }
}

/// Finite weighted atom list living in a lattice box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMeasure {
    bbox: LatticeBox,
    family: MeasureFamily,
    seed: u64,
    positions: Vec<f64>,
    weights: Vec<f64>,
}

impl PointMeasure {
    /// Builds a measure from explicit atoms (flat positions, one row of `dim` per atom).
    pub fn from_atoms(
        bbox: LatticeBox,
        family: MeasureFamily,
        seed: u64,
        positions: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let d = bbox.dim();
        if positions.len() != weights.len() * d {
            return invalid("positions must hold dim coordinates per weight");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return invalid("weights must be finite and nonnegative");
        }
        for x in positions.chunks(d) {
            if !bbox.contains_point(x) {
                return invalid(format!("atom {x:?} lies outside box {bbox}"));
            }
        }
        Ok(Self { bbox, family, seed, positions, weights })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }
    pub fn family(&self) -> MeasureFamily {
        self.family
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn dim(&self) -> usize {
        self.bbox.dim()
    }
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn atom(&self, i: usize) -> (&[f64], f64) {
        let d = self.dim();
        (&self.positions[i * d..(i + 1) * d], self.weights[i])
    }
    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.positions.chunks(self.dim()).zip(self.weights.iter().copied())
    }
    pub fn total_weight(&self) -> f64 {
        crate::stats::kahan_sum(self.weights.iter().copied())
    }

    pub fn cell_masses(&self) -> CellMassMap {
        let mut masses = vec![crate::stats::KahanSum::new(); self.bbox.cell_count()];
        for (x, w) in self.atoms() {
            let j = LatticeBox::cell_of(x);
            let idx = self.bbox.cell_index(&j).expect("atoms lie in the box");
            masses[idx].add(w);
        }
        CellMassMap { bbox: self.bbox.clone(), masses: masses.iter().map(|k| k.value()).collect() }
    }

    /// Caps every cell mass at `h` by rescaling the atoms of heavier cells by `h/M`.
    pub fn regularize(&self, h: f64) -> Result<PointMeasure> {
        if !(h > 0.0 && h.is_finite()) {
            return invalid(format!("regularization level must be positive, got {h}"));
        }
        let masses = self.cell_masses();
        let mut weights = self.weights.clone();
        for (i, (x, _)) in self.atoms().enumerate() {
            let m = masses.masses[self.bbox.cell_index(&LatticeBox::cell_of(x)).unwrap()];
            if m > h {
                weights[i] *= h / m;
            }
        }
        Ok(PointMeasure { weights, ..self.clone() })
    }

    /// Atoms of both measures (boxes must agree).
    pub fn merged(&self, other: &PointMeasure) -> Result<PointMeasure> {
        if self.bbox != other.bbox {
            return invalid("merging measures on different boxes");
        }
        let mut m = self.clone();
        m.positions.extend_from_slice(&other.positions);
        m.weights.extend_from_slice(&other.weights);
        Ok(m)
    }

    /// Same atoms with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<PointMeasure> {
        if !(factor >= 0.0 && factor.is_finite()) {
            return invalid("scale factor must be finite and ≥ 0");
        }
        Ok(PointMeasure { weights: self.weights.iter().map(|w| w * factor).collect(), ..self.clone() })
    }

    /// Writes the JSON-lines dump: a header line, then one `{"x":[..],"w":..}` per atom.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = DumpHeader { family: self.family, seed: self.seed, bbox: self.bbox.clone(), atoms: self.len() };
        writeln!(w, "{}", serde_json::to_string(&header)?)?;
        for (x, wt) in self.atoms() {
            writeln!(w, "{}", serde_json::to_string(&DumpAtom { x: x.to_vec(), w: wt })?)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<PointMeasure> {
        let mut lines = r.lines();
        let header: DumpHeader = match lines.next() {
            Some(l) => serde_json::from_str(&l?)?,
            None => return invalid("empty measure dump"),
        };
        let mut positions = Vec::new();
        let mut weights = Vec::new();
        for l in lines {
            let l = l?;
            if l.trim().is_empty() {
                continue;
            }
            let a: DumpAtom = serde_json::from_str(&l)?;
            positions.extend(a.x);
            weights.push(a.w);
        }
        if weights.len() != header.atoms {
            return Err(Error::InvalidParameter(format!(
                "dump header announces {} atoms, found {}",
                header.atoms,
                weights.len()
            )));
        }
        PointMeasure::from_atoms(header.bbox, header.family, header.seed, positions, weights)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpHeader {
    family: MeasureFamily,
    seed: u64,
    #[serde(rename = "box")]
    bbox: LatticeBox,
    atoms: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DumpAtom {
    x: Vec<f64>,
    w: f64,
}

/// Masses `μ(Λ_j)` of the cells of a box, in linear cell order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMassMap {
    bbox: LatticeBox,
    masses: Vec<f64>,
}

impl CellMassMap {
    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }
    pub fn get(&self, j: &[i64]) -> Option<f64> {
        self.bbox.cell_index(j).map(|i| self.masses[i])
    }
    pub fn values(&self) -> &[f64] {
        &self.masses
    }
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.bbox.cells().zip(self.masses.iter().copied())
    }
    pub fn total(&self) -> f64 {
        crate::stats::kahan_sum(self.masses.iter().copied())
    }
}

/// Estimate of `P{μ(Λ_0) < ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallMassEstimate {
    pub eps: f64,
    pub probability: Proportion,
}

pub fn estimate_small_mass_prob(spec: &MeasureSpec, eps: f64, n: u64, seed: u64) -> Result<SmallMassEstimate> {
    if !(eps > 0.0) {
        return invalid("eps must be positive");
    }
    if n < 1000 {
        return invalid("small-mass estimate needs at least 1000 draws");
    }
    let masses = unit_cell_masses(spec, n, seed)?;
    let hits = masses.iter().filter(|&&m| m < eps).count() as u64;
    Ok(SmallMassEstimate { eps, probability: Proportion::new(hits, n) })
}

fn unit_cell_masses(spec: &MeasureSpec, n: u64, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let cell = LatticeBox::unit(1);
    (0..n).map(|i| Ok(spec.sample(&cell, realization_seed(seed, i))?.total_weight())).collect()
}

/// κ̂ from the slope of log P̂{μ(Λ_0) < ε} against log ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaFit {
    pub estimates: Vec<SmallMassEstimate>,
    pub kappa_hat: Option<f64>,
    pub fit: Option<OlsFit>,
    /// Set when every P̂ vanished: the small-mass assumption looks violated.
    pub violated: bool,
}

pub fn fit_small_mass_kappa(spec: &MeasureSpec, eps_grid: &[f64], n: u64, seed: u64) -> Result<KappaFit> {
    if eps_grid.iter().any(|e| !(*e > 0.0)) {
        return invalid("eps grid must be positive");
    }
    if n < 1000 {
        return invalid("small-mass estimate needs at least 1000 draws");
    }
    // one set of draws shared by every ε keeps P̂ monotone in ε
    let masses = unit_cell_masses(spec, n, seed)?;
    let estimates: Vec<SmallMassEstimate> = eps_grid
        .iter()
        .map(|&eps| {
            let hits = masses.iter().filter(|&&m| m < eps).count() as u64;
            SmallMassEstimate { eps, probability: Proportion::new(hits, n) }
        })
        .collect();
    let (x, y): (Vec<f64>, Vec<f64>) = estimates
        .iter()
        .filter(|e| e.probability.successes > 0)
        .map(|e| (e.eps.ln(), e.probability.estimate.ln()))
        .unzip();
    let violated = x.is_empty();
    let fit = ols(&x, &y);
    let kappa_hat = match (&fit, x.len()) {
        (Some(f), _) => Some(f.slope.max(0.0)),
        (None, 1) => Some(0.0),
        _ => None,
    };
    Ok(KappaFit { estimates, kappa_hat, fit, violated })
}

/// Correlation of the masses of `Λ_0` and `Λ_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingEstimate {
    pub lag: Vec<i64>,
    pub correlation: Option<f64>,
    pub std_error: f64,
    pub n: u64,
    /// Zero variance in at least one of the two cells.
    pub degenerate: bool,
}

pub fn mixing_correlation(spec: &MeasureSpec, lag: &[i64], n: u64, seed: u64) -> Result<MixingEstimate> {
    if lag.iter().all(|&l| l == 0) {
        return invalid("lag must be nonzero");
    }
    if n < 10_000 {
        return invalid("mixing estimate needs at least 10^4 draws");
    }
    let lo: Vec<i64> = lag.iter().map(|&l| l.min(0)).collect();
    let hi: Vec<i64> = lag.iter().map(|&l| l.max(0) + 1).collect();
    let bbox = LatticeBox::new(lo, hi)?;
    let origin = vec![0i64; lag.len()];
    let mut a = Vec::with_capacity(n as usize);
    let mut b = Vec::with_capacity(n as usize);
    for i in 0..n {
        let m = spec.sample(&bbox, realization_seed(seed, i))?.cell_masses();
        a.push(m.get(&origin).unwrap());
        b.push(m.get(lag).unwrap());
    }
    let r = pearson(&a, &b);
    let nf = n as f64;
    let std_error = match r {
        Some(r) => ((1.0 - r * r) / (nf - 2.0)).sqrt(),
        None => 0.0,
    };
    Ok(MixingEstimate { lag: lag.to_vec(), correlation: r, std_error, n, degenerate: r.is_none() })
}

/// Per-cell mean masses over independent realizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub bbox: LatticeBox,
    pub means: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub grand_mean: f64,
    /// Largest |mean_j − grand_mean| across cells.
    pub max_deviation: f64,
    /// Largest |mean_j − grand_mean| / stderr_j (0 when every stderr vanishes).
    pub max_z: f64,
    pub n: u64,
}

pub fn empirical_intensity(spec: &MeasureSpec, bbox: &LatticeBox, n: u64, seed: u64) -> Result<IntensityEstimate> {
    if n < 100 {
        return invalid("intensity estimate needs at least 100 draws");
    }
    let cells = bbox.cell_count();
    let mut samples = vec![Vec::with_capacity(n as usize); cells];
    for i in 0..n {
        let m = spec.sample(bbox, realization_seed(seed, i))?.cell_masses();
        for (c, v) in m.values().iter().enumerate() {
            samples[c].push(*v);
        }
    }
    let est: Vec<_> = samples.iter().map(|s| mean_estimate(s)).collect();
    let means: Vec<f64> = est.iter().map(|e| e.mean).collect();
    let std_errors: Vec<f64> = est.iter().map(|e| e.std_error).collect();
    let grand_mean = means.iter().sum::<f64>() / cells as f64;
    let max_deviation = means.iter().map(|m| (m - grand_mean).abs()).fold(0.0, f64::max);
    let max_z = means
        .iter()
        .zip(&std_errors)
        .filter(|(_, s)| **s > 0.0)
        .map(|(m, s)| (m - grand_mean).abs() / s)
        .fold(0.0, f64::max);
    Ok(IntensityEstimate { bbox: bbox.clone(), means, std_errors, grand_mean, max_deviation, max_z, n })
}

pub fn sample_poisson(rho: f64, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
    MeasureSpec::Poisson { intensity: rho }.sample(bbox, seed)
}

/// One uniformly displaced atom per cell with weights from `weights`.
pub fn sample_displacement(weights: WeightLaw, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
    MeasureSpec::CompoundDisplacement { weights, displaced: true }.sample(bbox, seed)
}

/// One atom per cell at the lattice point with weights from `weights`.
pub fn sample_alloy(weights: WeightLaw, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
    MeasureSpec::CompoundDisplacement { weights, displaced: false }.sample(bbox, seed)
}

pub fn sample_compound_poisson(rho: f64, weights: WeightLaw, bbox: &LatticeBox, seed: u64) -> Result<PointMeasure> {
    MeasureSpec::CompoundPoisson { intensity: rho, weights }.sample(bbox, seed)
}

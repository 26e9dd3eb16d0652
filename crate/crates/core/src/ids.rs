//! Lifshits exponent formula, regime classification, length scalings, Monte Carlo IDS
//! estimation and the double-logarithmic fit.

use crate::bounds::{sandwich_samples, SandwichPoint};
use crate::discretize::BcTag;
use crate::error::{invalid, Error, Result};
use crate::impurity::AnisotropyProfile;
use crate::lattice::LatticeBox;
use crate::model::Model;
use crate::rng::realization_seed;
use crate::spectral::InertiaCounter;
use crate::stats::{mean_estimate, ols, OlsFit, Proportion, Z95};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

fn check_gamma(p: &AnisotropyProfile) -> Result<f64> {
    let g = p.gamma();
    if !(g < 1.0) {
        return invalid(format!("γ = {g} must be < 1"));
    }
    Ok(g)
}

/// `η = Σ_k max{d_k/2, γ_k/(1−γ)}`.
pub fn eta_theory(p: &AnisotropyProfile) -> Result<f64> {
    let g = check_gamma(p)?;
    Ok((0..p.blocks()).map(|k| (p.dims()[k] as f64 / 2.0).max(p.gamma_k(k) / (1.0 - g))).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Qm,
    QmCl,
    ClQm,
    Cl,
    /// More than two blocks with both behaviours present.
    Mixed,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Qm => "qm",
            Regime::QmCl => "qm_cl",
            Regime::ClQm => "cl_qm",
            Regime::Cl => "cl",
            Regime::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockComparison {
    pub kinetic: f64,
    pub potential: f64,
    /// `d_k/2 ≥ γ_k/(1−γ)`.
    pub quantum: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub profile: AnisotropyProfile,
    pub blocks: Vec<BlockComparison>,
    pub regime: Regime,
    pub eta_theory: f64,
}

pub fn classify_regime(p: &AnisotropyProfile) -> Result<RegimeReport> {
    let g = check_gamma(p)?;
    let blocks: Vec<BlockComparison> = (0..p.blocks())
        .map(|k| {
            let kinetic = p.dims()[k] as f64 / 2.0;
            let potential = p.gamma_k(k) / (1.0 - g);
            BlockComparison { kinetic, potential, quantum: kinetic >= potential }
        })
        .collect();
    let q: Vec<bool> = blocks.iter().map(|b| b.quantum).collect();
    let regime = if q.iter().all(|&x| x) {
        Regime::Qm
    } else if q.iter().all(|&x| !x) {
        Regime::Cl
    } else if q.len() == 2 {
        if q[0] {
            Regime::QmCl
        } else {
            Regime::ClQm
        }
    } else {
        Regime::Mixed
    };
    Ok(RegimeReport { profile: p.clone(), blocks, regime, eta_theory: eta_theory(p)? })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    Qm,
    Qc,
    Cl,
    Lower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingLengths {
    pub l: f64,
    /// qc cut-off radius.
    pub r: Option<f64>,
    /// qm regularization level.
    pub h: Option<f64>,
    pub beta: Vec<f64>,
    /// Per-block radii `(r0 L)^{β_k}` (cl) or `L^{β_k}` (lower bound).
    pub radii: Vec<f64>,
}

/// Length scales at energy `e`: `L = prefactor · E^{-1/2}` and the regime-specific companions.
pub fn scaling_lengths(p: &AnisotropyProfile, kind: ScalingKind, e: f64, r0: f64, prefactor: f64) -> Result<ScalingLengths> {
    if !(e > 0.0 && r0 > 0.0 && prefactor > 0.0) {
        return invalid("scaling lengths need E, r0, prefactor > 0");
    }
    let g = check_gamma(p)?;
    let l = prefactor / e.sqrt();
    let raw: Vec<f64> = p.alphas().iter().map(|&a| if a.is_finite() { 2.0 / (a * (1.0 - g)) } else { 0.0 }).collect();
    let out = match kind {
        ScalingKind::Qm => ScalingLengths { l, r: None, h: Some((r0 * l).powi(-2)), beta: vec![], radii: vec![] },
        ScalingKind::Qc => {
            if p.blocks() != 2 {
                return invalid("qc scaling needs two blocks");
            }
            let a2 = p.alphas()[1];
            if !a2.is_finite() {
                return invalid("qc scaling needs a finite second exponent");
            }
            let r = (r0 * l).powf(2.0 / (a2 * (1.0 - g)));
            ScalingLengths { l, r: Some(r), h: None, beta: vec![], radii: vec![] }
        }
        ScalingKind::Cl => {
            let radii = raw.iter().map(|b| (r0 * l).powf(*b)).collect();
            ScalingLengths { l, r: None, h: None, beta: raw, radii }
        }
        ScalingKind::Lower => {
            let beta: Vec<f64> = raw.iter().map(|b| b.max(1.0)).collect();
            let radii = beta.iter().map(|b| l.powf(*b)).collect();
            ScalingLengths { l, r: None, h: None, beta, radii }
        }
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdsEstimate {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
    pub bbox: LatticeBox,
    pub bc: BcTag,
    pub n_realizations: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl IdsEstimate {
    /// Builds an estimate from given values (zero-width intervals), e.g. for synthetic data.
    pub fn from_values(energies: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if energies.len() != values.len() {
            return invalid("energies and values differ in length");
        }
        let d = LatticeBox::unit(1);
        Ok(Self {
            std_errors: vec![0.0; values.len()],
            ci_low: values.clone(),
            ci_high: values.clone(),
            energies,
            values,
            bbox: d,
            bc: BcTag::Mezincescu,
            n_realizations: 1,
            n_failed: 0,
            seed: 0,
        })
    }
}

pub(crate) fn check_energies(energies: &[f64]) -> Result<()> {
    if energies.is_empty() || energies.windows(2).any(|w| !(w[0] < w[1])) || energies.iter().any(|e| !e.is_finite()) {
        return invalid("energy grid must be finite and strictly ascending");
    }
    Ok(())
}

/// Eigenvalue counts below each energy for one realization. The shifted operators have
/// spectrum in `[0, ∞)`, so energies `≤ 0` count 0 without factorizing.
pub fn realization_counts(model: &Model, bbox: &LatticeBox, bc: BcTag, energies: &[f64], seed: u64) -> Result<Vec<usize>> {
    let r = model.realize(bbox, seed)?;
    let grid = model.grid(bbox)?;
    let op = model.operator(Some(&r.field), &grid, bc)?;
    counts_on_grid(&InertiaCounter::new(op.matrix()), energies)
}

/// Counts on an ascending grid, factorizing only where the counting function can change:
/// equal counts at two energies fix every count in between.
pub fn counts_on_grid(counter: &InertiaCounter, energies: &[f64]) -> Result<Vec<usize>> {
    let n = energies.len();
    let mut out: Vec<Option<usize>> = vec![None; n];
    let eval = |i: usize, out: &mut Vec<Option<usize>>| -> Result<usize> {
        if let Some(c) = out[i] {
            return Ok(c);
        }
        let c = if energies[i] <= 0.0 { 0 } else { counter.count_below(energies[i])?.count };
        out[i] = Some(c);
        Ok(c)
    };
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut stack = vec![(0, n - 1)];
    while let Some((lo, hi)) = stack.pop() {
        let (cl, ch) = (eval(lo, &mut out)?, eval(hi, &mut out)?);
        if hi <= lo + 1 {
            continue;
        }
        if cl == ch {
            for o in &mut out[lo + 1..hi] {
                *o = Some(cl);
            }
        } else {
            let mid = (lo + hi) / 2;
            stack.push((lo, mid));
            stack.push((mid, hi));
        }
    }
    Ok(out.into_iter().map(|c| c.expect("every energy visited")).collect())
}

fn all_counts(model: &Model, bbox: &LatticeBox, bc: BcTag, energies: &[f64], n: usize, seed: u64) -> (Vec<Vec<usize>>, usize) {
    let per: Vec<Result<Vec<usize>>> = (0..n)
        .into_par_iter()
        .map(|r| realization_counts(model, bbox, bc, energies, realization_seed(seed, r as u64)))
        .collect();
    let mut ok = Vec::with_capacity(n);
    let mut failed = 0;
    for (r, p) in per.into_iter().enumerate() {
        match p {
            Ok(c) => ok.push(c),
            Err(e) => {
                failed += 1;
                log::warn!("realization {r} failed: {e}");
            }
        }
    }
    (ok, failed)
}

/// Per-volume eigenvalue counts averaged over `n` realizations.
pub fn estimate_ids(model: &Model, bbox: &LatticeBox, bc: BcTag, energies: &[f64], n: usize, seed: u64) -> Result<IdsEstimate> {
    check_energies(energies)?;
    if n < 2 {
        return invalid("IDS estimation needs at least two realizations");
    }
    let (ok, failed) = all_counts(model, bbox, bc, energies, n, seed);
    if ok.len() < 2 {
        return Err(Error::Solver(format!("{failed} of {n} realizations failed")));
    }
    let vol = bbox.volume();
    let mut est = IdsEstimate {
        energies: energies.to_vec(),
        values: vec![],
        std_errors: vec![],
        ci_low: vec![],
        ci_high: vec![],
        bbox: bbox.clone(),
        bc,
        n_realizations: ok.len(),
        n_failed: failed,
        seed,
    };
    for k in 0..energies.len() {
        let xs: Vec<f64> = ok.iter().map(|c| c[k] as f64 / vol).collect();
        let m = mean_estimate(&xs);
        est.values.push(m.mean);
        est.std_errors.push(m.std_error);
        est.ci_low.push((m.mean - Z95 * m.std_error).max(0.0));
        est.ci_high.push(m.mean + Z95 * m.std_error);
    }
    Ok(est)
}

/// `P̂{λ0 < E}` per energy from the same realizations.
pub fn ground_state_probabilities(model: &Model, bbox: &LatticeBox, bc: BcTag, energies: &[f64], n: usize, seed: u64) -> Result<Vec<Proportion>> {
    check_energies(energies)?;
    if n < 50 {
        return invalid("ground-state probability needs n ≥ 50");
    }
    let (ok, _) = all_counts(model, bbox, bc, energies, n, seed);
    if ok.is_empty() {
        return Err(Error::Solver("every realization failed".into()));
    }
    Ok((0..energies.len()).map(|k| Proportion::new(ok.iter().filter(|c| c[k] > 0).count() as u64, ok.len() as u64)).collect())
}

pub fn ground_state_probability(model: &Model, bbox: &LatticeBox, bc: BcTag, e: f64, n: usize, seed: u64) -> Result<Proportion> {
    Ok(ground_state_probabilities(model, bbox, bc, &[e], n, seed)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Censored {
    pub energy: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifshitsFit {
    pub eta_hat: f64,
    pub std_error: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
    pub censored: Vec<Censored>,
    /// A power law `N ∝ E^q` describes the data better than `exp(−c E^{−η})`.
    pub van_hove: bool,
}

/// OLS of `log|log N̂|` against `log E`.
///
/// Energies with `N̂ = 0`, an interval reaching 0, or `|log N̂| < 1` are censored. Without an
/// explicit window the longest contiguous run of usable energies is fitted.
pub fn lifshits_fit(est: &IdsEstimate, window: Option<(f64, f64)>) -> Result<LifshitsFit> {
    let mut censored = Vec::new();
    let mut usable = vec![false; est.energies.len()];
    for (i, &e) in est.energies.iter().enumerate() {
        let n = est.values[i];
        let reason = if !(e > 0.0) {
            Some("E ≤ 0")
        } else if window.is_some_and(|(lo, hi)| e < lo || e > hi) {
            Some("outside window")
        } else if !(n > 0.0) {
            Some("N̂ = 0")
        } else if !(est.ci_low[i] > 0.0) {
            Some("interval includes 0")
        } else if n.ln().abs() < 1.0 {
            Some("|log N̂| < 1")
        } else {
            None
        };
        match reason {
            Some(r) => censored.push(Censored { energy: e, reason: r.into() }),
            None => usable[i] = true,
        }
    }
    let idx: Vec<usize> = if window.is_some() {
        (0..usable.len()).filter(|&i| usable[i]).collect()
    } else {
        let mut best: (usize, usize) = (0, 0);
        let mut start = 0;
        for i in 0..=usable.len() {
            if i == usable.len() || !usable[i] {
                if i - start > best.1 - best.0 {
                    best = (start, i);
                }
                start = i + 1;
            }
        }
        for i in (0..best.0).chain(best.1..usable.len()) {
            if usable[i] {
                censored.push(Censored { energy: est.energies[i], reason: "outside longest contiguous run".into() });
            }
        }
        (best.0..best.1).collect()
    };
    if idx.len() < 4 {
        return Err(Error::InsufficientData(format!("{} usable energies, need ≥ 4", idx.len())));
    }
    let (e_lo, e_hi) = (est.energies[idx[0]], est.energies[*idx.last().unwrap()]);
    if (e_hi / e_lo).log10() < 0.5 {
        return Err(Error::InsufficientData("insufficient decades: window spans < 0.5 decades".into()));
    }
    let x: Vec<f64> = idx.iter().map(|&i| est.energies[i].ln()).collect();
    let ln_n: Vec<f64> = idx.iter().map(|&i| est.values[i].ln()).collect();
    let y: Vec<f64> = ln_n.iter().map(|v| v.abs().ln()).collect();
    let fit = ols(&x, &y).ok_or_else(|| Error::InsufficientData("degenerate regression".into()))?;
    let van_hove = power_law_preferred(&x, &ln_n, &fit);
    censored.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    Ok(LifshitsFit {
        eta_hat: -fit.slope,
        std_error: fit.slope_std_error,
        intercept: fit.intercept,
        window: (e_lo, e_hi),
        r_squared: fit.r_squared,
        n_points: idx.len(),
        censored,
        van_hove,
    })
}

/// Compares both models by their squared error in `log N`.
fn power_law_preferred(x: &[f64], ln_n: &[f64], lif: &OlsFit) -> bool {
    let Some(pl) = ols(x, ln_n) else { return false };
    let sse_lif: f64 = x
        .iter()
        .zip(ln_n)
        .map(|(xi, yi)| (yi - yi.signum() * (lif.intercept + lif.slope * xi).exp()).powi(2))
        .sum();
    pl.slope > 0.0 && pl.sse < sse_lif
}

/// Deterministic work allowance: each (realization, energy, operator) count costs one unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_factorizations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeExperimentSpec {
    pub energies: Vec<f64>,
    /// Side of the sandwich box `[0, L)^d`; the direct estimate uses `[0, 2L)^d`.
    pub side: i64,
    pub n_realizations: usize,
    pub seed: u64,
    pub budget: Budget,
    pub r0: f64,
    pub prefactor: f64,
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub energy: f64,
    pub scaling: Option<ScalingLengths>,
    pub sandwich: Option<SandwichPoint>,
    pub censor_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeExperimentReport {
    pub regime: RegimeReport,
    pub schedule: Vec<ScheduleEntry>,
    pub direct: IdsEstimate,
    pub fit: Option<LifshitsFit>,
    pub fit_error: Option<String>,
    pub partial: bool,
}

/// Sandwich and direct IDS along an energy schedule, then the Lifshits fit of the direct curve.
pub fn regime_experiment(model: &Model, spec: &RegimeExperimentSpec) -> Result<RegimeExperimentReport> {
    check_energies(&spec.energies)?;
    let regime = classify_regime(model.potential().profile())?;
    // three counted operators per realization and energy
    let per_energy = 3 * spec.n_realizations as u64;
    let affordable = (spec.budget.max_factorizations / per_energy.max(1)) as usize;
    let partial = affordable < spec.energies.len();
    let energies: Vec<f64> = spec.energies.iter().copied().take(affordable).collect();
    if energies.is_empty() {
        return Err(Error::InvalidParameter("budget does not cover a single energy".into()));
    }
    let samples = sandwich_samples(model, spec.side, &energies, spec.n_realizations, spec.seed)?;
    let sandwich = samples.points()?;
    let direct = samples.direct_estimate()?;
    let profile = model.potential().profile();
    let schedule = spec
        .energies
        .iter()
        .map(|&e| {
            let s = sandwich.iter().find(|p| p.energy == e).cloned();
            let scaling = if e > 0.0 { scaling_lengths(profile, ScalingKind::Lower, e, spec.r0, spec.prefactor).ok() } else { None };
            let censor_reason = if s.is_none() { Some("budget exhausted".to_string()) } else { None };
            ScheduleEntry { energy: e, scaling, sandwich: s, censor_reason }
        })
        .collect();
    let (fit, fit_error) = match lifshits_fit(&direct, spec.fit_window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(RegimeExperimentReport { regime, schedule, direct, fit, fit_error, partial })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prof(a: &[f64]) -> AnisotropyProfile {
        AnisotropyProfile::new(vec![1; a.len()], a.to_vec()).unwrap()
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_theory(&prof(&[f64::INFINITY, f64::INFINITY])).unwrap(), 1.0);
        assert!((eta_theory(&prof(&[3.0, 3.0])).unwrap() - 2.0).abs() < 1e-12);
        assert!((eta_theory(&prof(&[f64::INFINITY, 2.5])).unwrap() - 7.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(&prof(&[10.0, 10.0])).unwrap().regime, Regime::Qm);
        assert_eq!(classify_regime(&prof(&[10.0, 2.2])).unwrap().regime, Regime::QmCl);
        assert_eq!(classify_regime(&prof(&[2.2, 10.0])).unwrap().regime, Regime::ClQm);
        assert_eq!(classify_regime(&prof(&[2.5, 2.5])).unwrap().regime, Regime::Cl);
    }

    #[test]
    fn scaling_examples() {
        let p = prof(&[f64::INFINITY, 2.5]);
        let qm = scaling_lengths(&p, ScalingKind::Qm, 0.01, 2.0, 1.0).unwrap();
        assert!((qm.l - 10.0).abs() < 1e-12);
        assert!((qm.h.unwrap() - 1.0 / 400.0).abs() < 1e-15);
        let qc = scaling_lengths(&p, ScalingKind::Qc, 0.01, 1.0, 1.0).unwrap();
        assert!((qc.r.unwrap() - 10f64.powf(4.0 / 3.0)).abs() < 1e-9);
        let lo = scaling_lengths(&p, ScalingKind::Lower, 0.01, 1.0, 1.0).unwrap();
        assert_eq!(lo.beta[0], 1.0);
        assert!((lo.beta[1] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_exact_forms() {
        let es: Vec<f64> = (0..12).map(|i| 10f64.powf(-1.2 + 0.1 * i as f64)).collect();
        for (eta, c) in [(1.0, 1.0), (2.0, 3.0), (0.5, 2.0)] {
            let vals: Vec<f64> = es.iter().map(|e| (-c * e.powf(-eta)).exp()).collect();
            let est = IdsEstimate::from_values(es.clone(), vals).unwrap();
            let f = lifshits_fit(&est, None).unwrap();
            assert!((f.eta_hat - eta).abs() < 1e-6 * eta, "{} vs {eta}", f.eta_hat);
            assert!(!f.van_hove);
        }
        let es: Vec<f64> = (0..12).map(|i| 10f64.powf(-3.0 + 0.2 * i as f64)).collect();
        let f = lifshits_fit(&IdsEstimate::from_values(es.clone(), es.clone()).unwrap(), None).unwrap();
        assert!(f.van_hove);
    }
}

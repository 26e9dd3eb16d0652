use lifshits::bounds::{
    bound_chains, free_gap, gap_scaling, half_average_bound, prepare_temple, rayleigh_ritz_upper, temple_bound, temple_from_moments,
    verify_sandwich, TempleSetup,
};
use lifshits::config::preset;
use lifshits::discretize::{BcTag, PeriodicPotential};
use lifshits::field::PotentialField;
use lifshits::ids::{
    classify_regime, estimate_ids, eta_theory, ground_state_probabilities, lifshits_fit, realization_counts, regime_experiment, Budget,
    IdsEstimate, Regime, RegimeExperimentSpec,
};
use lifshits::impurity::{AnisotropyProfile, PotentialSpec};
use lifshits::lattice::LatticeBox;
use lifshits::model::{Model, ModelSpec, TruncationSpec};
use lifshits::rmeasure::MeasureSpec;
use lifshits::spectral::{count_below, dense_oracle, EigenOptions};
use lifshits::stats::ols;
use lifshits::Error;
use proptest::prelude::*;
use std::f64::consts::PI;

const INF: f64 = f64::INFINITY;

fn model(measure: MeasureSpec, potential: PotentialSpec, u_per: PeriodicPotential, n_per_cell: usize) -> Model {
    Model::new(ModelSpec { measure, potential, u_per, n_per_cell, truncation: TruncationSpec::default() }).unwrap()
}

fn boxes(d: usize, rho: f64) -> Model {
    model(MeasureSpec::Poisson { intensity: rho }, PotentialSpec::BoxIndicator { f0: 1.0, r: 0.5, dims: vec![1; d] }, PeriodicPotential::Zero, 2)
}

fn poisson_algebraic(alpha: [f64; 2]) -> Model {
    let potential = PotentialSpec::Algebraic { f0: 0.5, dims: vec![1, 1], alpha: alpha.to_vec() };
    Model::new(ModelSpec {
        measure: MeasureSpec::Poisson { intensity: 1.0 },
        potential,
        u_per: PeriodicPotential::Zero,
        n_per_cell: 2,
        truncation: TruncationSpec { radius: Some(12.0), tolerance: 1.0 },
    })
    .unwrap()
}

#[test]
fn temple_is_tight_for_constant_potentials() {
    let m = boxes(1, 1.0);
    let grid = m.grid(&LatticeBox::cube(1, 3).unwrap()).unwrap();
    let h0 = m.operator(None, &grid, BcTag::Mezincescu).unwrap();
    let opts = EigenOptions::default();
    let gap = free_gap(&h0, &opts).unwrap();
    let zero = temple_bound(&h0, &PotentialField::zero(&grid), &opts).unwrap();
    assert!(zero.valid && zero.value == 0.0);
    assert_eq!(half_average_bound(&PotentialField::zero(&grid), h0.psi()), 0.0);
    for c in [0.05, 0.1, 0.3] {
        let v = PotentialField::constant(&grid, c);
        let t = temple_bound(&h0, &v, &opts).unwrap();
        assert!((t.value - (c - c * c / (gap - c))).abs() <= 1e-12, "{t:?}");
        let l0 = dense_oracle(m.operator(Some(&v), &grid, BcTag::Mezincescu).unwrap().matrix()).unwrap()[0];
        assert!((l0 - c).abs() <= 1e-10);
        assert!(t.value <= l0);
        assert!((half_average_bound(&v, h0.psi()) - c / 2.0).abs() <= 1e-14);
    }
    assert!((temple_from_moments(0.1, 0.01, 1.0).value - 0.088_888_888_888_888_9).abs() <= 1e-15);
    let bad = temple_from_moments(1.5, 3.0, 1.0);
    assert!(!bad.valid && bad.value == f64::NEG_INFINITY);
}

#[test]
fn rayleigh_ritz_free_quotient_scales_like_inverse_square() {
    let m = boxes(2, 0.0);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for l in [8, 16, 32] {
        let grid = m.grid(&LatticeBox::cube(2, l).unwrap()).unwrap();
        let hd = m.operator(None, &grid, BcTag::Dirichlet).unwrap();
        let rr = rayleigh_ritz_upper(&hd, None).unwrap();
        assert_eq!(rr.potential_term, 0.0);
        assert!((rr.value - rr.gradient_term - rr.boundary_term).abs() <= 1e-12 * rr.value);
        x.push((l as f64).ln());
        y.push(rr.value.ln());
    }
    let slope = ols(&x, &y).unwrap().slope;
    assert!((slope + 2.0).abs() <= 0.2, "{slope}");
}

#[test]
fn rayleigh_ritz_adds_a_constant_potential() {
    let m = boxes(2, 0.0);
    let grid = m.grid(&LatticeBox::cube(2, 6).unwrap()).unwrap();
    let free = rayleigh_ritz_upper(&m.operator(None, &grid, BcTag::Dirichlet).unwrap(), None).unwrap();
    let v = PotentialField::constant(&grid, 0.4);
    let rr = rayleigh_ritz_upper(&m.operator(Some(&v), &grid, BcTag::Dirichlet).unwrap(), Some(&v)).unwrap();
    assert!((rr.potential_term - 0.4).abs() <= 1e-14);
    assert!((rr.value - (0.4 + free.value)).abs() <= 1e-12);
}

#[test]
fn rayleigh_ritz_lies_above_the_dirichlet_ground_state() {
    let m = poisson_algebraic([3.0, 3.0]);
    let b = LatticeBox::cube(2, 8).unwrap();
    let grid = m.grid(&b).unwrap();
    for seed in 0..5 {
        let r = m.realize(&b, seed).unwrap();
        let hd = m.operator(Some(&r.field), &grid, BcTag::Dirichlet).unwrap();
        let rr = rayleigh_ritz_upper(&hd, Some(&r.field)).unwrap();
        let l0 = hd.ground_state(&EigenOptions::default()).unwrap().lambda0;
        assert!(rr.value >= l0 - 1e-10, "{} < {l0}", rr.value);
    }
}

#[test]
fn free_gaps_close_like_inverse_square() {
    let one = gap_scaling(&boxes(1, 0.0), &[8, 16, 32]).unwrap();
    assert!((one.exponent + 2.0).abs() <= 0.05, "{one:?}");
    for (&l, g) in one.sides.iter().zip(&one.gaps) {
        // Neumann chain of N = 2L nodes, spacing 1/2
        let want = (2.0 - 2.0 * (PI / (2 * l) as f64).cos()) * 4.0;
        assert!((g - want).abs() <= 1e-8 * want, "{g} vs {want}");
    }
    let two = gap_scaling(&boxes(2, 0.0), &[4, 8, 16]).unwrap();
    assert!((two.exponent + 2.0).abs() <= 0.1, "{two:?}");
    let cos = model(
        MeasureSpec::Poisson { intensity: 0.0 },
        PotentialSpec::BoxIndicator { f0: 1.0, r: 0.5, dims: vec![1] },
        PeriodicPotential::Cosine { amplitude: 1.0 },
        8,
    );
    let c = gap_scaling(&cos, &[8, 16, 32]).unwrap();
    assert!(c.gaps.iter().all(|g| *g > 0.0));
    assert!((c.exponent + 2.0).abs() <= 0.2, "{c:?}");
}

#[test]
fn qc_temple_bounds_hold_on_twenty_realizations() {
    let cfg = preset("temple-qc").unwrap();
    let m = Model::new(cfg.model_spec()).unwrap();
    let profile = AnisotropyProfile::new(vec![1, 1], vec![INF, 2.5]).unwrap();
    let opts = EigenOptions::default();
    let prep = prepare_temple(&m, TempleSetup::qc(&profile, cfg.bounds.length, cfg.bounds.r0).unwrap(), &opts).unwrap();
    assert!(prep.hypotheses_hold);
    for c in bound_chains(&m, &prep, 20, 99, &opts).unwrap() {
        assert!(c.temple.valid);
        assert!(c.half_average <= c.temple.value + 1e-12);
        assert!(c.temple.value <= c.lambda0_chi_cutoff + 1e-9);
        assert!(c.holds, "{:?}", c.violations);
    }
}

#[test]
fn sandwich_below_the_bottom_is_empty() {
    let m = poisson_algebraic([10.0, 10.0]);
    for p in verify_sandwich(&m, 3, &[-0.5, -0.1], 4, 1).unwrap() {
        assert_eq!((p.lower.value, p.direct.value, p.upper.value), (0.0, 0.0, 0.0));
        assert!(p.ordered && p.warning.is_some());
    }
}

#[test]
fn sandwich_without_impurities_is_deterministic() {
    let m = boxes(2, 0.0);
    let side = 3;
    let b = LatticeBox::cube(2, side).unwrap();
    let grid = m.grid(&b).unwrap();
    let zero = PotentialField::zero(&grid);
    let ld = dense_oracle(m.operator(Some(&zero), &grid, BcTag::Dirichlet).unwrap().matrix()).unwrap()[0];
    let free = dense_oracle(m.operator(None, &grid, BcTag::Mezincescu).unwrap().matrix()).unwrap();
    let energies = [0.2, 1.0, 3.0, 7.5];
    let vol = b.volume();
    for p in verify_sandwich(&m, side, &energies, 3, 2).unwrap() {
        let lower = if ld < p.energy { 1.0 / vol } else { 0.0 };
        let upper = free.iter().filter(|l| **l < p.energy).count() as f64 / vol;
        assert_eq!(p.lower.value, lower);
        assert!((p.upper.value - upper).abs() <= 1e-12 * upper.max(1.0), "{} vs {upper}", p.upper.value);
        assert!(p.ordered);
    }
}

#[test]
fn eta_and_regime_examples() {
    let p = |a: [f64; 2]| AnisotropyProfile::new(vec![1, 1], a.to_vec()).unwrap();
    assert_eq!(eta_theory(&p([INF, INF])).unwrap(), 1.0);
    assert!((eta_theory(&p([3.0, 3.0])).unwrap() - 2.0).abs() <= 1e-12);
    assert!((eta_theory(&p([INF, 2.5])).unwrap() - 7.0 / 6.0).abs() <= 1e-12);
    assert_eq!(classify_regime(&p([10.0, 10.0])).unwrap().regime, Regime::Qm);
    assert_eq!(classify_regime(&p([10.0, 2.2])).unwrap().regime, Regime::QmCl);
    assert_eq!(classify_regime(&p([2.5, 2.5])).unwrap().regime, Regime::Cl);
    let iso = AnisotropyProfile::isotropic(3, 4.0).unwrap();
    assert!((eta_theory(&iso).unwrap() - 3.0).abs() <= 1e-12);
}

fn alpha() -> impl Strategy<Value = f64> {
    prop_oneof![Just(INF), 2.05..40.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn eta_is_symmetric_in_the_blocks(a in alpha(), b in alpha()) {
        let x = eta_theory(&AnisotropyProfile::new(vec![1, 1], vec![a, b]).unwrap()).unwrap();
        let y = eta_theory(&AnisotropyProfile::new(vec![1, 1], vec![b, a]).unwrap()).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x);
    }

    #[test]
    fn eta_does_not_grow_with_faster_decay(a in alpha(), b in 2.05..40.0f64, db in 0.0..20.0f64) {
        let x = eta_theory(&AnisotropyProfile::new(vec![1, 1], vec![a, b]).unwrap()).unwrap();
        let y = eta_theory(&AnisotropyProfile::new(vec![1, 1], vec![a, b + db]).unwrap()).unwrap();
        prop_assert!(y <= x + 1e-12);
        prop_assert!(y >= 1.0 - 1e-12);
    }

    #[test]
    fn eta_sums_the_winning_side_of_each_block(a in alpha(), b in alpha()) {
        let p = AnisotropyProfile::new(vec![1, 1], vec![a, b]).unwrap();
        let r = classify_regime(&p).unwrap();
        let sum: f64 = r.blocks.iter().map(|c| if c.quantum { c.kinetic } else { c.potential }).sum();
        prop_assert!((sum - r.eta_theory).abs() <= 1e-12 * sum);
        for c in &r.blocks {
            prop_assert_eq!(c.quantum, c.kinetic >= c.potential);
        }
    }

    #[test]
    fn isotropic_eta_closed_form(d in 1usize..=3, k in 1u32..=40) {
        let a = d as f64 + k as f64 / 4.0;
        let p = AnisotropyProfile::isotropic(d, a).unwrap();
        let want = (d as f64 / 2.0).max(d as f64 / (a - d as f64));
        prop_assert!((eta_theory(&p).unwrap() - want).abs() <= 1e-12 * want);
    }
}

/// Closed-form count of the free Dirichlet chain product on an `n0 × n1` node grid.
fn free_dirichlet_count(n: [usize; 2], a: f64, e: f64) -> usize {
    let axis = |m: usize| -> Vec<f64> { (1..=m).map(|k| (2.0 - 2.0 * (k as f64 * PI / (m as f64 + 1.0)).cos()) / (a * a)).collect() };
    let (x, y) = (axis(n[0]), axis(n[1]));
    x.iter().map(|u| y.iter().filter(|v| u + *v < e).count()).sum()
}

#[test]
fn ids_without_impurities_is_the_free_dirichlet_count() {
    let m = boxes(2, 0.0);
    let b = LatticeBox::new(vec![0, 0], vec![6, 3]).unwrap();
    let energies = [0.5, 1.7, 4.0, 9.3, 20.0];
    let est = estimate_ids(&m, &b, BcTag::Dirichlet, &energies, 3, 0).unwrap();
    for (k, &e) in energies.iter().enumerate() {
        let want = free_dirichlet_count([12, 6], 0.5, e) as f64 / 18.0;
        assert!((est.values[k] - want).abs() <= 1e-12 * want.max(1.0), "E = {e}: {} vs {want}", est.values[k]);
        assert!(est.std_errors[k] <= 1e-12);
    }
}

#[test]
fn counts_rise_with_energy_in_every_realization() {
    let m = poisson_algebraic([3.0, 3.0]);
    let b = LatticeBox::cube(2, 5).unwrap();
    let energies: Vec<f64> = (0..20).map(|i| -0.1 + 0.15 * i as f64).collect();
    for seed in 0..4 {
        let c = realization_counts(&m, &b, BcTag::Mezincescu, &energies, seed).unwrap();
        assert!(c.windows(2).all(|w| w[0] <= w[1]), "{c:?}");
        assert_eq!(c[0], 0);
        let r = m.realize(&b, seed).unwrap();
        let h = m.operator(Some(&r.field), &m.grid(&b).unwrap(), BcTag::Mezincescu).unwrap();
        assert_eq!(c[13], count_below(h.matrix(), energies[13]).unwrap().count);
    }
}

#[test]
fn more_impurities_mean_fewer_low_states() {
    let b = LatticeBox::cube(2, 4).unwrap();
    let e = [1.0];
    let est: Vec<_> = [0.5, 1.0, 2.0].iter().map(|&rho| estimate_ids(&boxes(2, rho), &b, BcTag::Mezincescu, &e, 200, 4).unwrap()).collect();
    for w in est.windows(2) {
        let (hi, lo) = (&w[0], &w[1]);
        assert!(lo.values[0] < hi.values[0], "{} !< {}", lo.values[0], hi.values[0]);
        assert!(hi.values[0] - lo.values[0] > 2.0 * (hi.std_errors[0].powi(2) + lo.std_errors[0].powi(2)).sqrt());
    }
}

#[test]
fn ground_state_probability_examples() {
    let m = poisson_algebraic([3.0, 3.0]);
    let b = LatticeBox::cube(2, 3).unwrap();
    let energies = [-0.2, 0.0, 0.05, 0.2, 0.6, 200.0];
    let p = ground_state_probabilities(&m, &b, BcTag::Mezincescu, &energies, 60, 8).unwrap();
    assert_eq!(p[0].successes, 0);
    assert_eq!(p[1].successes, 0);
    assert_eq!(p[5].successes, 60);
    assert!(p.windows(2).all(|w| w[0].successes <= w[1].successes));
    assert!(ground_state_probabilities(&m, &b, BcTag::Mezincescu, &[0.1], 10, 8).is_err());
}

fn synthetic(es: &[f64], f: impl Fn(f64) -> f64) -> IdsEstimate {
    IdsEstimate::from_values(es.to_vec(), es.iter().map(|&e| f(e)).collect()).unwrap()
}

#[test]
fn fit_examples() {
    let es: Vec<f64> = (0..16).map(|i| 10f64.powf(-1.5 + 0.1 * i as f64)).collect();
    let f = lifshits_fit(&synthetic(&es, |e| (-3.0 * e.powi(-2)).exp()), None).unwrap();
    assert!((f.eta_hat - 2.0).abs() <= 0.04, "{f:?}");
    assert!(!f.van_hove);

    let es: Vec<f64> = (0..16).map(|i| 10f64.powf(-3.0 + 0.2 * i as f64)).collect();
    match lifshits_fit(&synthetic(&es, |e| e), None) {
        Ok(f) => assert!(f.van_hove, "{f:?}"),
        Err(e) => assert!(matches!(e, Error::InsufficientData(_))),
    }

    let narrow: Vec<f64> = (0..8).map(|i| 0.1 + 0.01 * i as f64).collect();
    let err = lifshits_fit(&synthetic(&narrow, |e| (-1.0 / e).exp()), None).unwrap_err();
    assert!(err.to_string().contains("insufficient decades"), "{err}");

    let few = lifshits_fit(&synthetic(&es[..3], |e| (-1.0 / e).exp()), None).unwrap_err();
    assert!(matches!(few, Error::InsufficientData(_)));
}

#[test]
fn regime_experiment_reports_a_partial_schedule() {
    let m = poisson_algebraic([10.0, 10.0]);
    let energies: Vec<f64> = (0..6).map(|i| 0.1 * 2f64.powi(i)).collect();
    let spec = RegimeExperimentSpec {
        energies: energies.clone(),
        side: 3,
        n_realizations: 4,
        seed: 3,
        budget: Budget { max_factorizations: 3 * 4 * 4 },
        r0: 1.0,
        prefactor: 1.0,
        fit_window: None,
    };
    let r = regime_experiment(&m, &spec).unwrap();
    assert!(r.partial);
    assert_eq!(r.regime.regime, Regime::Qm);
    assert_eq!(r.schedule.len(), 6);
    for (s, &e) in r.schedule.iter().zip(&energies) {
        assert_eq!(s.energy, e);
        assert!(s.scaling.is_some());
    }
    assert!(r.schedule[..4].iter().all(|s| s.sandwich.is_some() && s.censor_reason.is_none()));
    assert!(r.schedule[4..].iter().all(|s| s.sandwich.is_none() && s.censor_reason.as_deref() == Some("budget exhausted")));
    assert_eq!(r.direct.energies.len(), 4);
    assert!(r.fit.is_some() != r.fit_error.is_some());

    let broke = RegimeExperimentSpec { budget: Budget { max_factorizations: 5 }, ..spec };
    assert!(regime_experiment(&m, &broke).is_err());
}

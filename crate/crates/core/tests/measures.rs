use lifshits::lattice::LatticeBox;
use lifshits::rmeasure::{
    empirical_intensity, estimate_small_mass_prob, mixing_correlation, sample_alloy, sample_compound_poisson, sample_displacement,
    sample_poisson, MeasureFamily, MeasureSpec, PointMeasure, WeightLaw,
};
use lifshits::stats::mean_estimate;
use proptest::prelude::*;

fn totals(f: impl Fn(u64) -> PointMeasure, n: u64) -> Vec<f64> {
    (0..n).map(|s| f(s).total_weight()).collect()
}

fn within_3se(xs: &[f64], want: f64) -> bool {
    let m = mean_estimate(xs);
    (m.mean - want).abs() <= 3.0 * m.std_error.max(1e-12)
}

#[test]
fn poisson_mean_on_four_cells() {
    let b = LatticeBox::cube(2, 2).unwrap();
    let t = totals(|s| sample_poisson(2.0, &b, s).unwrap(), 10_000);
    assert!(within_3se(&t, 8.0), "{:?}", mean_estimate(&t));
}

#[test]
fn poisson_empty_cell_probability() {
    let cell = LatticeBox::unit(2);
    let n = 100_000;
    let zeros = (0..n).filter(|&s| sample_poisson(1.0, &cell, s).unwrap().is_empty()).count() as f64 / n as f64;
    let p = (-1.0f64).exp();
    assert!((zeros - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt(), "{zeros}");
}

#[test]
fn displacement_exponential_weights_mean() {
    let b = LatticeBox::cube(2, 10).unwrap();
    let m = sample_displacement(WeightLaw::Exponential { mean: 1.0 }, &b, 4).unwrap();
    assert_eq!(m.len(), 100);
    let masses = m.cell_masses();
    assert!(within_3se(masses.values(), 1.0));
    for (j, _) in masses.iter() {
        assert!(masses.get(&j).is_some());
    }
}

#[test]
fn constant_alloy_is_periodic_measure() {
    let b = LatticeBox::new(vec![-2, 0], vec![2, 3]).unwrap();
    let m = sample_alloy(WeightLaw::Constant { value: 1.0 }, &b, 9).unwrap();
    assert!(m.cell_masses().values().iter().all(|&v| v == 1.0));
    for (x, _) in m.atoms() {
        assert!(x.iter().all(|c| c.fract() == 0.0));
    }
}

/// Two-sample Kolmogorov–Smirnov statistic of integer-valued samples.
fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let max = a.iter().chain(b).cloned().fold(0.0, f64::max) as usize;
    let cdf = |xs: &[f64], k: usize| xs.iter().filter(|&&x| x <= k as f64).count() as f64 / xs.len() as f64;
    (0..=max).map(|k| (cdf(a, k) - cdf(b, k)).abs()).fold(0.0, f64::max)
}

#[test]
fn compound_poisson_with_unit_weights_matches_poisson() {
    let cell = LatticeBox::unit(1);
    let n = 10_000;
    let a = totals(|s| sample_compound_poisson(1.0, WeightLaw::Constant { value: 1.0 }, &cell, s).unwrap(), n);
    let b = totals(|s| sample_poisson(1.0, &cell, s + 1_000_000).unwrap(), n);
    // 1% critical value of the two-sample KS test
    let crit = 1.628 * (2.0 / n as f64).sqrt();
    assert!(ks_statistic(&a, &b) < crit);
}

#[test]
fn compound_poisson_wald_identity() {
    let cell = LatticeBox::unit(1);
    let t = totals(|s| sample_compound_poisson(1.0, WeightLaw::Exponential { mean: 2.0 }, &cell, s).unwrap(), 20_000);
    assert!(within_3se(&t, 2.0));
    assert!(sample_compound_poisson(0.0, WeightLaw::Exponential { mean: 2.0 }, &cell, 1).unwrap().is_empty());
}

#[test]
fn cell_mass_of_single_atom() {
    let b = LatticeBox::cube(2, 3).unwrap();
    let m = PointMeasure::from_atoms(b, MeasureFamily::Poisson, 0, vec![0.3, 0.3], vec![0.7]).unwrap();
    let c = m.cell_masses();
    assert_eq!(c.get(&[0, 0]), Some(0.7));
    assert_eq!(c.total(), 0.7);
}

#[test]
fn two_atoms_in_one_cell_are_capped_proportionally() {
    let b = LatticeBox::unit(2);
    let m = PointMeasure::from_atoms(b, MeasureFamily::CompoundPoisson, 0, vec![0.1, 0.2, 0.5, 0.5], vec![1.5, 0.5]).unwrap();
    let r = m.regularize(1.0).unwrap();
    assert_eq!(r.weights(), &[0.75, 0.25]);
    let light = PointMeasure::from_atoms(LatticeBox::unit(1), MeasureFamily::Poisson, 0, vec![0.5], vec![0.3]).unwrap();
    assert_eq!(light.regularize(1.0).unwrap().weights(), &[0.3]);
}

#[test]
fn small_mass_examples() {
    let poisson = estimate_small_mass_prob(&MeasureSpec::Poisson { intensity: 1.0 }, 0.5, 20_000, 3).unwrap();
    let p = poisson.probability;
    let e = (-1.0f64).exp();
    assert!(p.ci_low <= e && e <= p.ci_high, "{p:?}");

    let alloy = MeasureSpec::CompoundDisplacement { weights: WeightLaw::Constant { value: 1.0 }, displaced: false };
    assert_eq!(estimate_small_mass_prob(&alloy, 0.5, 5_000, 3).unwrap().probability.successes, 0);

    let uniform = MeasureSpec::CompoundDisplacement { weights: WeightLaw::Uniform { a: 0.0, b: 1.0 }, displaced: false };
    let u = estimate_small_mass_prob(&uniform, 0.25, 20_000, 3).unwrap().probability;
    assert!(u.ci_low <= 0.25 && 0.25 <= u.ci_high, "{u:?}");
}

#[test]
fn mixing_examples() {
    let poisson = mixing_correlation(&MeasureSpec::Poisson { intensity: 1.0 }, &[1, 0], 20_000, 5).unwrap();
    assert!(poisson.correlation.unwrap().abs() <= 3.0 * poisson.std_error);
    let cd = MeasureSpec::CompoundDisplacement { weights: WeightLaw::Exponential { mean: 1.0 }, displaced: true };
    let m = mixing_correlation(&cd, &[5, 0], 20_000, 5).unwrap();
    assert!(m.correlation.unwrap().abs() <= 3.0 * m.std_error);
    assert!(mixing_correlation(&MeasureSpec::Periodic, &[1, 0], 10_000, 5).unwrap().degenerate);
}

#[test]
fn intensity_examples() {
    let b = LatticeBox::cube(2, 3).unwrap();
    let p = empirical_intensity(&MeasureSpec::Poisson { intensity: 1.5 }, &b, 4000, 8).unwrap();
    for (m, s) in p.means.iter().zip(&p.std_errors) {
        assert!((m - 1.5).abs() <= 3.5 * s, "{m} ± {s}");
    }
    let per = empirical_intensity(&MeasureSpec::Periodic, &b, 100, 8).unwrap();
    assert!(per.means.iter().all(|&m| m == 1.0));
    assert_eq!(per.max_deviation, 0.0);
    let cp = MeasureSpec::CompoundPoisson { intensity: 1.0, weights: WeightLaw::Exponential { mean: 0.5 } };
    let c = empirical_intensity(&cp, &b, 4000, 8).unwrap();
    assert!((c.grand_mean - 0.5).abs() <= 0.03, "{}", c.grand_mean);
}

fn measure_spec() -> impl Strategy<Value = MeasureSpec> {
    prop_oneof![
        (0.0..3.0f64).prop_map(|r| MeasureSpec::Poisson { intensity: r }),
        (0.1..2.0f64, 0.1..3.0f64)
            .prop_map(|(r, m)| MeasureSpec::CompoundPoisson { intensity: r, weights: WeightLaw::Exponential { mean: m } }),
        Just(MeasureSpec::Displacement),
        (0.0..1.0f64, 1.0..3.0f64, any::<bool>()).prop_map(|(a, b, displaced)| MeasureSpec::CompoundDisplacement {
            weights: WeightLaw::Uniform { a, b },
            displaced
        }),
        Just(MeasureSpec::Periodic),
    ]
}

fn small_box() -> impl Strategy<Value = LatticeBox> {
    (1usize..=3, -3i64..=1, 1i64..=4).prop_map(|(d, lo, side)| LatticeBox::new(vec![lo; d], vec![lo + side; d]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_deterministic(spec in measure_spec(), b in small_box(), seed in any::<u64>()) {
        let a = spec.sample(&b, seed).unwrap();
        let c = spec.sample(&b, seed).unwrap();
        prop_assert_eq!(a.positions(), c.positions());
        prop_assert_eq!(a.weights(), c.weights());
    }

    #[test]
    fn cell_masses_sum_to_total_weight(spec in measure_spec(), b in small_box(), seed in any::<u64>()) {
        let m = spec.sample(&b, seed).unwrap();
        let total = m.total_weight();
        let cells = m.cell_masses().total();
        prop_assert!((cells - total).abs() <= 1e-12 * total.max(1.0));
        for (x, _) in m.atoms() {
            prop_assert!(b.contains_point(x));
        }
    }

    #[test]
    fn regularization_caps_cell_masses(spec in measure_spec(), b in small_box(), seed in any::<u64>(), h in 0.05..3.0f64) {
        let m = spec.sample(&b, seed).unwrap();
        let before = m.cell_masses();
        let after = m.regularize(h).unwrap().cell_masses();
        for (x, y) in before.values().iter().zip(after.values()) {
            prop_assert!((y - x.min(h)).abs() <= 1e-12 * h.max(*x));
        }
    }

    #[test]
    fn regularized_cells_keep_their_atoms(spec in measure_spec(), b in small_box(), seed in any::<u64>(), h in 0.05..3.0f64) {
        let m = spec.sample(&b, seed).unwrap();
        let before = m.cell_masses();
        let after = m.regularize(h).unwrap().cell_masses();
        for (x, y) in before.values().iter().zip(after.values()) {
            prop_assert_eq!(*x > 0.0, *y > 0.0);
        }
    }

    #[test]
    fn subbox_cells_match_enclosing_box(seed in any::<u64>(), rho in 0.1..3.0f64) {
        let big = LatticeBox::cube(2, 4).unwrap();
        let small = LatticeBox::new(vec![1, 1], vec![3, 2]).unwrap();
        let spec = MeasureSpec::Poisson { intensity: rho };
        let a = spec.sample(&big, seed).unwrap().cell_masses();
        let b = spec.sample(&small, seed).unwrap().cell_masses();
        for (j, v) in b.iter() {
            prop_assert_eq!(a.get(&j), Some(v));
        }
    }
}

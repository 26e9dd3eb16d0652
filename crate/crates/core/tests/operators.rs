use lifshits::discretize::{
    chi_values, dirichlet_assemble, mezincescu_assemble, periodic_ground_state, BoxFace, PeriodicGroundState, PeriodicPotential,
};
use lifshits::field::PotentialField;
use lifshits::grid::Grid;
use lifshits::lattice::LatticeBox;
use lifshits::sparse::SparseSym;
use lifshits::spectral::{count_below, dense_oracle, smallest_eigs, EigenOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn field_from(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> PotentialField {
    let values = grid.coords().iter().map(|x| f(x)).collect();
    PotentialField::new(grid.clone(), values, PotentialField::zero(grid).provenance().clone()).unwrap()
}

fn bumps(x: &[f64]) -> f64 {
    x.iter().map(|c| (1.3 * c).sin().powi(2)).product::<f64>() * 3.0
}

fn free_psi(d: usize, n: usize) -> PeriodicGroundState {
    PeriodicGroundState::constant(d, n).unwrap()
}

#[test]
fn periodic_ground_state_of_constant_potentials() {
    let grid = Grid::new(LatticeBox::cube(2, 3).unwrap(), 4).unwrap();
    let zero = periodic_ground_state(&PeriodicPotential::Zero, &grid).unwrap();
    assert_eq!(zero.e0(), 0.0);
    assert!(zero.is_constant());
    let c = periodic_ground_state(&PeriodicPotential::Constant { value: 2.5 }, &grid).unwrap();
    assert_eq!(c.e0(), 2.5);
}

#[test]
fn cosine_ground_energy_matches_independent_matrix() {
    let n = 64;
    let grid = Grid::new(LatticeBox::cube(1, 3).unwrap(), n).unwrap();
    let g = periodic_ground_state(&PeriodicPotential::Cosine { amplitude: 1.0 }, &grid).unwrap();
    let h2 = (n * n) as f64;
    let mut e = Vec::new();
    for k in 0..n {
        let x = (k as f64 + 0.5) / n as f64;
        e.push((k, k, 2.0 * h2 + (2.0 * PI * x).cos()));
        e.push(((k + 1) % n, k, -h2));
    }
    let want = dense_oracle(&SparseSym::from_entries(n, &e).unwrap()).unwrap()[0];
    assert!((g.e0() - want).abs() <= 1e-10, "{} vs {want}", g.e0());
    assert!(g.e0() < 0.0);
    assert!(g.residual() <= 1e-10);
}

#[test]
fn mezincescu_keeps_psi_in_the_kernel() {
    let grid = Grid::new(LatticeBox::cube(2, 5).unwrap(), 2).unwrap();
    let h = mezincescu_assemble(&PeriodicPotential::Zero, None, &grid, &free_psi(2, 2)).unwrap();
    assert!(h.psi_residual() <= 1e-12);

    let u = PeriodicPotential::Cosine { amplitude: 1.0 };
    let grid = Grid::new(LatticeBox::cube(1, 4).unwrap(), 16).unwrap();
    let psi = periodic_ground_state(&u, &grid).unwrap();
    let h = mezincescu_assemble(&u, None, &grid, &psi).unwrap();
    assert!(h.psi_residual() <= 1e-10, "{}", h.psi_residual());
    assert!(dense_oracle(h.matrix()).unwrap()[0].abs() <= 1e-9);

    let v = field_from(&grid, bumps);
    let hv = mezincescu_assemble(&u, Some(&v), &grid, &psi).unwrap();
    assert!(dense_oracle(hv.matrix()).unwrap()[0] >= -1e-10);
}

/// Sorted eigenvalues of the free Dirichlet Laplacian on an `n × n` node grid of spacing `a`.
fn dirichlet_spectrum_2d(n: usize, a: f64) -> Vec<f64> {
    let axis: Vec<f64> = (1..=n).map(|k| (2.0 - 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos()) / (a * a)).collect();
    let mut all: Vec<f64> = axis.iter().flat_map(|x| axis.iter().map(move |y| x + y)).collect();
    all.sort_by(f64::total_cmp);
    all
}

#[test]
fn dirichlet_counts_match_closed_form() {
    let grid = Grid::new(LatticeBox::cube(2, 32).unwrap(), 2).unwrap();
    let h = dirichlet_assemble(&PeriodicPotential::Zero, None, &grid, &free_psi(2, 2)).unwrap();
    let spec = dirichlet_spectrum_2d(64, 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut done = 0;
    while done < 5 {
        let e: f64 = rng.random_range(0.0..32.0);
        if spec.iter().any(|l| (l - e).abs() < 1e-8) {
            continue;
        }
        let want = spec.partition_point(|l| *l < e);
        assert_eq!(count_below(h.matrix(), e).unwrap().count, want, "E = {e}");
        done += 1;
    }
}

#[test]
fn dirichlet_lies_above_mezincescu() {
    let u = PeriodicPotential::Cosine { amplitude: 0.5 };
    for side in [2, 3, 5] {
        let grid = Grid::new(LatticeBox::cube(2, side).unwrap(), 4).unwrap();
        let psi = periodic_ground_state(&u, &grid).unwrap();
        let v = field_from(&grid, bumps);
        let d = dense_oracle(dirichlet_assemble(&u, Some(&v), &grid, &psi).unwrap().matrix()).unwrap();
        let m = dense_oracle(mezincescu_assemble(&u, Some(&v), &grid, &psi).unwrap().matrix()).unwrap();
        for (x, y) in d.iter().zip(&m) {
            assert!(x >= &(y - 1e-10));
        }
    }
}

#[test]
fn dirichlet_ground_energy_decreases_with_the_box() {
    let psi = free_psi(2, 3);
    let mut last = f64::INFINITY;
    for side in [2, 3, 4, 6] {
        let grid = Grid::new(LatticeBox::cube(2, side).unwrap(), 3).unwrap();
        let v = field_from(&grid, bumps);
        let h = dirichlet_assemble(&PeriodicPotential::Zero, Some(&v), &grid, &psi).unwrap();
        let l0 = h.ground_state(&EigenOptions::default()).unwrap().lambda0;
        assert!(l0 <= last + 1e-10, "side {side}: {l0} > {last}");
        last = l0;
    }
}

fn sampled_psi(n: usize, f: fn(f64) -> f64) -> PeriodicGroundState {
    PeriodicGroundState::from_samples(1, n, (0..n).map(|k| f((k as f64 + 0.5) / n as f64)).collect(), 0.0).unwrap()
}

#[test]
fn chi_examples() {
    let b = LatticeBox::cube(1, 2).unwrap();
    let lower = BoxFace { axis: 0, upper: false };
    let upper = BoxFace { axis: 0, upper: true };

    assert_eq!(chi_values(&free_psi(1, 64), &b, lower).unwrap()[0].1, 0.0);
    let cos = sampled_psi(128, |x| 2.0 + (2.0 * PI * x).cos());
    assert!(chi_values(&cos, &b, lower).unwrap()[0].1.abs() <= 1e-3);

    let sin = |x: f64| 2.0 + (2.0 * PI * x).sin();
    let (x, chi) = chi_values(&sampled_psi(128, sin), &b, upper).unwrap().remove(0);
    assert_eq!(x, vec![2.0]);
    assert!((chi + PI).abs() <= 1e-2, "{chi}");
    let err: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&n| {
            let (x, chi) = chi_values(&sampled_psi(n, sin), &b, lower).unwrap().remove(0);
            assert_eq!(x, vec![0.0]);
            (chi - PI).abs()
        })
        .collect();
    assert!(err[2] <= 2e-3, "{err:?}");
    for w in err.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 2.0).abs() <= 0.3, "{err:?}");
    }
}

#[test]
fn operators_are_symmetric_m_matrices() {
    let u = PeriodicPotential::Cosine { amplitude: 1.0 };
    let grid = Grid::new(LatticeBox::new(vec![-1, 0], vec![2, 2]).unwrap(), 3).unwrap();
    let psi = periodic_ground_state(&u, &grid).unwrap();
    let v = field_from(&grid, bumps);
    for h in [dirichlet_assemble(&u, Some(&v), &grid, &psi).unwrap(), mezincescu_assemble(&u, Some(&v), &grid, &psi).unwrap()] {
        let a = h.matrix();
        assert!(a.is_symmetric());
        for i in 0..a.dim() {
            assert!(a.row(i).all(|(j, x)| j == i || x <= 0.0));
        }
        let g = h.ground_state(&EigenOptions::default()).unwrap();
        assert!(g.vector.iter().all(|x| *x > 0.0));
        assert!(g.residual <= 1e-8);
    }
}

fn random_spd(n: usize, reach: usize, seed: u64) -> SparseSym {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Vec::new();
    for i in 0..n {
        let mut row = 0.0;
        for j in i.saturating_sub(reach)..i {
            let x: f64 = rng.random_range(-1.0..1.0);
            e.push((i, j, x));
            row += 2.0 * x.abs();
        }
        e.push((i, i, row + rng.random_range(0.1..3.0)));
    }
    SparseSym::from_entries(n, &e).unwrap()
}

#[test]
fn lanczos_matches_dense_on_random_spd() {
    let a = random_spd(500, 6, 3);
    let dense = dense_oracle(&a).unwrap();
    let opts = EigenOptions { dense_below: 0, ..Default::default() };
    let r = smallest_eigs(&a, 5, &opts).unwrap();
    for (x, y) in r.eigenvalues.iter().zip(&dense) {
        assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn trivial_spectra() {
    let opts = EigenOptions { dense_below: 0, ..Default::default() };
    let r = smallest_eigs(&SparseSym::identity(300), 3, &opts).unwrap();
    assert!(r.eigenvalues.iter().all(|l| (l - 1.0).abs() <= 1e-12), "{:?}", r.eigenvalues);
    let d = SparseSym::from_diagonal(&[3.0, 1.0, 5.0, 2.0, 4.0]).unwrap();
    assert_eq!(dense_oracle(&d).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(count_below(&d, 3.5).unwrap().count, 3);
}

fn far_from_spectrum(spec: &[f64], e: f64) -> bool {
    spec.iter().all(|l| (l - e).abs() > 1e-7)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn raising_the_potential_lowers_counts(side in 2i64..5, amp in 0.0..2.0f64, lift in 0.0..2.0f64, e in 0.0..40.0f64) {
        let grid = Grid::new(LatticeBox::cube(2, side).unwrap(), 2).unwrap();
        let psi = free_psi(2, 2);
        let v = field_from(&grid, |x| amp * bumps(x));
        let w = field_from(&grid, |x| amp * bumps(x) + lift * (x[0] * 0.7).cos().powi(2));
        let hv = mezincescu_assemble(&PeriodicPotential::Zero, Some(&v), &grid, &psi).unwrap();
        let hw = mezincescu_assemble(&PeriodicPotential::Zero, Some(&w), &grid, &psi).unwrap();
        prop_assert!(count_below(hw.matrix(), e).unwrap().count <= count_below(hv.matrix(), e).unwrap().count);
        let sv = dense_oracle(hv.matrix()).unwrap();
        let sw = dense_oracle(hw.matrix()).unwrap();
        for (x, y) in sv.iter().zip(&sw) {
            prop_assert!(y >= &(x - 1e-9));
        }
    }

    #[test]
    fn counts_grow_with_energy(seed in any::<u64>(), e1 in -1.0..20.0f64, de in 0.0..10.0f64) {
        let a = random_spd(80, 3, seed);
        prop_assert!(count_below(&a, e1).unwrap().count <= count_below(&a, e1 + de).unwrap().count);
    }

    #[test]
    fn shifting_matrix_and_energy_together_keeps_count(seed in any::<u64>(), e in 0.0..15.0f64, c in -5.0..5.0f64) {
        let a = random_spd(60, 4, seed);
        let spec = dense_oracle(&a).unwrap();
        prop_assume!(far_from_spectrum(&spec, e));
        let want = spec.partition_point(|l| *l < e);
        prop_assert_eq!(count_below(&a, e).unwrap().count, want);
        prop_assert_eq!(count_below(&a.shifted(c), e + c).unwrap().count, want);
    }
}

//! Marginal impurity potentials of an anisotropic algebraic profile: fitted decay
//! exponents against `α_k(1 − γ_other)` and tail masses against `α_k(1 − γ)`.

use lifshits::impurity::{marginal_decay_exponent, tail_decay_exponent, AnisotropyProfile, ImpurityPotential};
use lifshits::quad::QuadSpec;
use lifshits::stats::ols;

fn main() -> lifshits::Result<()> {
    let profile = AnisotropyProfile::new(vec![1, 1], vec![3.0, 4.0])?;
    let f = ImpurityPotential::algebraic(profile.clone(), 1.0)?;
    let spec = QuadSpec::relative(1e-9);
    println!("gamma = {:.4}", profile.gamma());
    for k in 0..2 {
        let xs: Vec<f64> = (0..8).map(|i| 20.0 * 1.5f64.powi(i)).collect();
        let (mut lx, mut lm, mut lt) = (Vec::new(), Vec::new(), Vec::new());
        for &x in &xs {
            lx.push(x.ln());
            lm.push(f.marginal(k, &[x], spec)?.value.ln());
            lt.push(f.tail_mass(k, x, spec)?.value.ln());
        }
        let m = ols(&lx, &lm).expect("fit");
        let t = ols(&lx, &lt).expect("fit");
        println!(
            "block {k}: marginal decay {:.4} (theory {:.4}), tail-mass decay {:.4} (theory {:.4})",
            -m.slope,
            marginal_decay_exponent(&profile, k)?,
            -t.slope,
            tail_decay_exponent(&profile, k)
        );
    }
    Ok(())
}

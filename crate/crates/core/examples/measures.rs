//! Samples each measure family on a small box, regularizes one sample and checks the
//! small-mass condition for two weight laws.

use lifshits::lattice::LatticeBox;
use lifshits::rmeasure::{fit_small_mass_kappa, MeasureSpec, WeightLaw};

fn main() -> lifshits::Result<()> {
    let bbox = LatticeBox::cube(2, 8)?;
    let families = [
        MeasureSpec::Poisson { intensity: 1.0 },
        MeasureSpec::CompoundPoisson { intensity: 0.5, weights: WeightLaw::Exponential { mean: 2.0 } },
        MeasureSpec::Displacement,
        MeasureSpec::CompoundDisplacement { weights: WeightLaw::Uniform { a: 0.0, b: 1.0 }, displaced: false },
        MeasureSpec::Periodic,
    ];
    println!("{:<22} {:>6} {:>10} {:>10}", "family", "atoms", "mass/cell", "expected");
    for spec in &families {
        let m = spec.sample(&bbox, 42)?;
        println!(
            "{:<22} {:>6} {:>10.4} {:>10.4}",
            format!("{:?}", spec.family()),
            m.len(),
            m.total_weight() / bbox.volume(),
            spec.mean_cell_mass()
        );
    }

    let m = families[0].sample(&bbox, 42)?;
    let h = 0.5;
    let reg = m.regularize(h)?;
    let worst = reg.cell_masses().values().iter().cloned().fold(0.0, f64::max);
    println!("\nregularized at h = {h}: largest cell mass {worst:.4}");

    let eps = [0.05, 0.1, 0.2, 0.4];
    for (name, spec) in [
        ("exponential weights", MeasureSpec::CompoundDisplacement { weights: WeightLaw::Exponential { mean: 1.0 }, displaced: true }),
        ("constant weights", MeasureSpec::CompoundDisplacement { weights: WeightLaw::Constant { value: 1.0 }, displaced: true }),
    ] {
        let k = fit_small_mass_kappa(&spec, &eps, 20_000, 7)?;
        println!("{name:<20} kappa_hat = {:?}, violated = {}", k.kappa_hat, k.violated);
    }
    Ok(())
}

//! Counts eigenvalues below an energy by LDLᵀ inertia and checks the count against a
//! dense eigendecomposition, then computes the lowest eigenpairs with shift-invert Lanczos.

use lifshits::config::preset;
use lifshits::discretize::BcTag;
use lifshits::lattice::LatticeBox;
use lifshits::model::Model;
use lifshits::spectral::{dense_oracle, EigenOptions, InertiaCounter};

fn main() -> lifshits::Result<()> {
    let cfg = preset("qm-poisson")?;
    let model = Model::new(cfg.model_spec())?;
    let bbox = LatticeBox::cube(2, 12)?;
    let r = model.realize(&bbox, 3)?;
    let h = model.operator(Some(&r.field), &model.grid(&bbox)?, BcTag::Mezincescu)?;
    let a = h.matrix();
    let counter = InertiaCounter::new(a);
    let spectrum = dense_oracle(a)?;
    println!("n = {}, bandwidth after ordering = {}", a.dim(), counter.bandwidth());
    for e in [0.1, 0.5, 1.0, 2.0, 4.0] {
        let c = counter.count_below(e)?;
        let dense = spectrum.iter().filter(|&&l| l < e).count();
        println!("E = {e:<4} inertia {:>4}  dense {:>4}", c.count, dense);
    }
    let res = h.smallest(5, &EigenOptions { lower_hint: Some(0.0), ..EigenOptions::default() })?;
    for (i, (l, d)) in res.eigenvalues.iter().zip(&spectrum).enumerate() {
        println!("lambda_{i}: lanczos {l:.12} dense {d:.12}");
    }
    Ok(())
}

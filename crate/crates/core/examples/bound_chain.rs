//! Temple lower bounds and the Rayleigh–Ritz upper bound around the ground-state energy,
//! for the three regime setups.

use lifshits::bounds::{bound_chains, prepare_temple, TempleRegime, TempleSetup};
use lifshits::config::preset;
use lifshits::model::Model;
use lifshits::spectral::EigenOptions;

fn main() -> lifshits::Result<()> {
    let opts = EigenOptions::default();
    for name in ["temple-qm", "temple-qc", "temple-cl"] {
        let cfg = preset(name)?;
        let model = Model::new(cfg.model_spec())?;
        let b = &cfg.bounds;
        let profile = model.potential().profile();
        let setup = match b.regime {
            TempleRegime::Qm => TempleSetup::qm(model.dim(), b.length, b.r0)?,
            TempleRegime::Qc => TempleSetup::qc(profile, b.length, b.r0)?,
            TempleRegime::Cl => TempleSetup::cl(profile, b.length, b.r0)?,
        };
        let prep = prepare_temple(&model, setup, &opts)?;
        println!("{name}: gap {:.4}, sup of cut-off potential ≤ {:.4}, hypotheses hold: {}", prep.gap, prep.majorant_sup, prep.hypotheses_hold);
        for c in bound_chains(&model, &prep, 3, cfg.seed, &opts)? {
            println!(
                "  {:.3e} ≤ {:.3e} ≤ {:.3e} ≤ {:.4} ≤ {:.4} ≤ {:.4}  {}",
                c.half_average,
                c.temple.value,
                c.lambda0_chi_cutoff,
                c.lambda0_chi,
                c.lambda0_dirichlet,
                c.rayleigh_ritz.value,
                if c.holds { "ok" } else { "VIOLATED" }
            );
        }
    }
    Ok(())
}

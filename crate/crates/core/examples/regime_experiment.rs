//! A reduced regime experiment: sandwich, direct IDS and Lifshits fit for the qm and cl
//! presets. The full presets run through `lifshits regime --preset <name>`.

use lifshits::config::preset;
use lifshits::ids::{regime_experiment, Budget, RegimeExperimentSpec};
use lifshits::model::Model;

fn main() -> lifshits::Result<()> {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    for name in ["qm-poisson", "cl-poisson"] {
        let cfg = preset(name)?;
        let model = Model::new(cfg.model_spec())?;
        let spec = RegimeExperimentSpec {
            energies: cfg.experiment.energies()?,
            side: 8,
            n_realizations: n,
            seed: cfg.seed,
            budget: Budget { max_factorizations: u64::MAX },
            r0: 1.0,
            prefactor: 1.0,
            fit_window: None,
        };
        let rep = regime_experiment(&model, &spec)?;
        let ordered = rep.schedule.iter().filter_map(|s| s.sandwich.as_ref()).all(|p| p.ordered);
        match &rep.fit {
            Some(f) => println!(
                "{name}: regime {}, eta theory {:.3}, eta_hat {:.3} ± {:.3} on [{:.3}, {:.3}], sandwich ordered: {ordered}",
                rep.regime.regime.as_str(),
                rep.regime.eta_theory,
                f.eta_hat,
                f.std_error,
                f.window.0,
                f.window.1
            ),
            None => println!("{name}: no fit ({:?})", rep.fit_error),
        }
    }
    Ok(())
}

//! Lifshits exponents and quantum/classical regimes across two-block profiles, plus the
//! length scales used at one energy.

use lifshits::ids::{classify_regime, eta_theory, scaling_lengths, ScalingKind};
use lifshits::impurity::AnisotropyProfile;

fn main() -> lifshits::Result<()> {
    let alphas = [2.5, 3.0, 4.0, 6.0, 10.0, f64::INFINITY];
    print!("{:>8}", "a1\\a2");
    for a in alphas {
        print!("{a:>13}");
    }
    println!();
    for a1 in alphas {
        print!("{a1:>8}");
        for a2 in alphas {
            let p = AnisotropyProfile::new(vec![1, 1], vec![a1, a2])?;
            let r = classify_regime(&p)?;
            print!("{:>13}", format!("{:.3} {}", eta_theory(&p)?, r.regime.as_str()));
        }
        println!();
    }
    let p = AnisotropyProfile::new(vec![1, 1], vec![f64::INFINITY, 2.5])?;
    let e = 0.01;
    for kind in [ScalingKind::Qm, ScalingKind::Qc, ScalingKind::Cl, ScalingKind::Lower] {
        let s = scaling_lengths(&p, kind, e, 2.0, 1.0)?;
        println!("{kind:?}: L = {:.2}, R = {:?}, h = {:?}, radii = {:?}", s.l, s.r, s.h, s.radii);
    }
    Ok(())
}

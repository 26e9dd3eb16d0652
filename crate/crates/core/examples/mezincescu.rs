//! With the Mezincescu boundary condition the restricted periodic ground state is an
//! exact eigenvector of the box operator at the bottom of the spectrum.

use lifshits::discretize::{assemble_with, periodic_ground_state, BcTag, PeriodicPotential};
use lifshits::grid::Grid;
use lifshits::lattice::LatticeBox;
use lifshits::spectral::{count_below, EigenOptions};

fn main() -> lifshits::Result<()> {
    let u = PeriodicPotential::Cosine { amplitude: 0.5 };
    let n = 4;
    let unit = Grid::new(LatticeBox::unit(2), n)?;
    let psi = periodic_ground_state(&u, &unit)?;
    println!("E0 = {:.10}, periodic residual {:.1e}", psi.e0(), psi.residual());
    for side in [4, 8, 16] {
        let grid = Grid::new(LatticeBox::cube(2, side)?, n)?;
        let hc = assemble_with(&u, None, &grid, &psi, BcTag::Mezincescu)?;
        let hd = assemble_with(&u, None, &grid, &psi, BcTag::Dirichlet)?;
        let opts = EigenOptions { lower_hint: Some(0.0), ..EigenOptions::default() };
        let gc = hc.ground_state(&opts)?;
        let gd = hd.ground_state(&opts)?;
        let below = count_below(hc.matrix(), -1e-8)?.count;
        println!(
            "side {side:>2}: |H psi| = {:.1e}, lambda0 chi = {:+.2e} (count below 0: {below}), lambda0 D = {:.6}",
            hc.psi_residual(),
            gc.lambda0,
            gd.lambda0
        );
    }
    Ok(())
}

//! Recovers planted exponents from synthetic `exp(−c E^{−η})` curves and flags a
//! power-law (van Hove) curve.

use lifshits::ids::{lifshits_fit, IdsEstimate};

fn main() -> lifshits::Result<()> {
    let grid: Vec<f64> = (0..12).map(|i| 10f64.powf(-1.2 + 0.1 * i as f64)).collect();
    for (eta, c) in [(0.5, 2.0), (1.0, 1.0), (7.0 / 6.0, 1.0), (2.0, 3.0)] {
        let n: Vec<f64> = grid.iter().map(|e| (-c * e.powf(-eta)).exp()).collect();
        let fit = lifshits_fit(&IdsEstimate::from_values(grid.clone(), n)?, None)?;
        println!("planted {eta:.4}  fitted {:.6}  (r² {:.6}, {} points)", fit.eta_hat, fit.r_squared, fit.n_points);
    }
    let vh: Vec<f64> = (0..11).map(|i| 10f64.powf(-3.0 + 0.2 * i as f64)).collect();
    let n: Vec<f64> = vh.iter().map(|e| e.powf(1.0)).collect();
    match lifshits_fit(&IdsEstimate::from_values(vh, n)?, None) {
        Ok(f) => println!("E^(d/2): eta_hat {:.3}, van Hove flag {}", f.eta_hat, f.van_hove),
        Err(e) => println!("E^(d/2): {e}"),
    }
    Ok(())
}

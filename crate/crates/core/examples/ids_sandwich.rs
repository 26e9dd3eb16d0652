//! Dirichlet and Mezincescu ground-state probabilities bracket the IDS; a direct count
//! on the doubled box sits in between.

use lifshits::bounds::verify_sandwich;
use lifshits::config::preset;
use lifshits::model::Model;

fn main() -> lifshits::Result<()> {
    let cfg = preset("sandwich-small")?;
    let model = Model::new(cfg.model_spec())?;
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let pts = verify_sandwich(&model, 8, &[0.05, 0.1, 0.2], n, cfg.seed)?;
    println!("{:>6} {:>10} {:>10} {:>10}  ordered consistent", "E", "lower", "direct", "upper");
    for p in pts {
        println!(
            "{:>6} {:>10.3e} {:>10.3e} {:>10.3e}  {:<7} {}",
            p.energy, p.lower.value, p.direct.value, p.upper.value, p.ordered, p.consistent
        );
    }
    Ok(())
}

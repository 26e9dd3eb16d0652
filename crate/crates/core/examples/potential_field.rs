//! Samples `V = f * μ` on a box and writes it as CSV.
//!
//! `cargo run --release --example potential_field -- out.csv`

use lifshits::config::preset;
use lifshits::lattice::LatticeBox;
use lifshits::model::Model;

fn main() -> lifshits::Result<()> {
    let cfg = preset("qm-poisson")?;
    let model = Model::new(cfg.model_spec())?;
    let bbox = LatticeBox::cube(2, 16)?;
    let r = model.realize(&bbox, cfg.seed)?;
    let p = r.field.provenance();
    println!("{} atoms, {} nodes", r.measure.len(), r.field.values().len());
    println!("sup V = {:.4}, mean V = {:.4}", r.field.sup(), r.field.mean());
    println!("truncation radius {}, neglected mass bound {:?}", p.truncation_radius, p.truncation_error_bound);
    if let Some(w) = &p.warning {
        println!("warning: {w}");
    }
    if let Some(path) = std::env::args().nth(1) {
        r.field.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
        println!("wrote {path}");
    }
    Ok(())
}

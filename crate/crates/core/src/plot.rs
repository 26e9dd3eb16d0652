//! CSV tables for external plotting: the regime phase grid, `log|log N|` curves and bound chains.

use crate::error::Result;
use crate::ids::{classify_regime, eta_theory};
use crate::impurity::AnisotropyProfile;
use crate::records::{fmt_f64, CsvTable, RecordKind, ResultRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    /// `α_1 × α_2 → η` for `d = (1, 1)`.
    Phase,
    /// `(log E, log|log N̂|)` per estimator.
    Loglog,
    /// Bound chains from Temple records.
    Chains,
}

/// Default exponent axis of the phase grid.
pub const PHASE_ALPHAS: [f64; 9] = [2.2, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, f64::INFINITY];

/// Table plus any warnings raised while building it.
pub struct PlotData {
    pub table: CsvTable,
    pub warnings: Vec<String>,
}

pub fn phase_grid(alphas: &[f64]) -> Result<PlotData> {
    let mut t = CsvTable::new(&["alpha1", "alpha2", "eta", "regime", "block1_quantum", "block2_quantum"]);
    let mut warnings = Vec::new();
    for &a1 in alphas {
        for &a2 in alphas {
            match AnisotropyProfile::new(vec![1, 1], vec![a1, a2]) {
                Ok(p) => {
                    let r = classify_regime(&p)?;
                    t.push(vec![
                        fmt_f64(a1),
                        fmt_f64(a2),
                        fmt_f64(eta_theory(&p)?),
                        r.regime.as_str().to_string(),
                        r.blocks[0].quantum.to_string(),
                        r.blocks[1].quantum.to_string(),
                    ])?;
                }
                Err(e) => warnings.push(format!("skipping ({a1}, {a2}): {e}")),
            }
        }
    }
    Ok(PlotData { table: t, warnings })
}

fn num(v: &Value, key: &str) -> Option<f64> {
    match v.get(key)? {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.as_str() {
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            "nan" => Some(f64::NAN),
            _ => None,
        },
        _ => None,
    }
}

/// One row per `ids_point` record with a positive value; series are keyed by
/// `estimator` and must be nondecreasing in energy.
pub fn loglog_curves(records: &[ResultRecord]) -> Result<PlotData> {
    let mut t = CsvTable::new(&["estimator", "energy", "ids", "log_energy", "log_abs_log_ids"]);
    let mut warnings = Vec::new();
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::IdsPoint) {
        let (Some(e), Some(n)) = (num(&r.payload, "energy"), num(&r.payload, "value")) else {
            warnings.push("ids_point record without energy/value".into());
            continue;
        };
        let name = r.payload.get("estimator").and_then(Value::as_str).unwrap_or("direct").to_string();
        match series.iter_mut().find(|s| s.0 == name) {
            Some(s) => s.1.push((e, n)),
            None => series.push((name, vec![(e, n)])),
        }
    }
    if series.is_empty() {
        warnings.push("no ids_point series in input".into());
    }
    for (name, mut pts) in series {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[1].1 < w[0].1) {
            warnings.push(format!("series {name}: N̂ is not monotone in E"));
        }
        for (e, n) in pts {
            let ll = if n > 0.0 && n < 1.0 { (-n.ln()).ln() } else { f64::NAN };
            t.push(vec![name.clone(), fmt_f64(e), fmt_f64(n), fmt_f64(e.ln()), fmt_f64(ll)])?;
        }
    }
    Ok(PlotData { table: t, warnings })
}

const CHAIN_COLUMNS: [&str; 6] = ["half_average", "temple", "lambda0_chi_cutoff", "lambda0_chi", "lambda0_dirichlet", "rayleigh_ritz"];

/// One row per Temple chain record.
pub fn bound_chain_table(records: &[ResultRecord]) -> Result<PlotData> {
    let mut header = vec!["regime", "seed"];
    header.extend(CHAIN_COLUMNS);
    header.push("holds");
    let mut t = CsvTable::new(&header);
    let mut warnings = Vec::new();
    for r in records.iter().filter(|r| r.kind == RecordKind::Bound) {
        let p = &r.payload;
        if p.get("estimator").and_then(Value::as_str) != Some("temple_chain") {
            continue;
        }
        let mut row = vec![
            p.get("regime").and_then(Value::as_str).unwrap_or("").to_string(),
            p.get("seed").map(|s| s.to_string()).unwrap_or_default(),
        ];
        for c in CHAIN_COLUMNS {
            let v = match c {
                "temple" | "rayleigh_ritz" => p.get(c).and_then(|x| num(x, "value")),
                _ => num(p, c),
            };
            row.push(v.map(fmt_f64).unwrap_or_default());
        }
        row.push(p.get("holds").and_then(Value::as_bool).map(|b| b.to_string()).unwrap_or_default());
        t.push(row)?;
    }
    if t.is_empty() {
        warnings.push("no temple_chain records in input".into());
    }
    Ok(PlotData { table: t, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_gives_header_only() {
        let d = loglog_curves(&[]).unwrap();
        assert!(d.table.is_empty());
        assert_eq!(d.warnings.len(), 1);
        let mut buf = Vec::new();
        d.table.write(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "estimator,energy,ids,log_energy,log_abs_log_ids\n");
    }

    #[test]
    fn phase_grid_corners() {
        let d = phase_grid(&[3.0, f64::INFINITY]).unwrap();
        let mut buf = Vec::new();
        d.table.write(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let row = |a1: &str, a2: &str| -> Vec<String> {
            let line = s.lines().find(|l| l.starts_with(&format!("{a1},{a2},"))).unwrap_or_else(|| panic!("{s}"));
            line.split(',').map(String::from).collect()
        };
        for (a1, a2, eta, rest) in [("inf", "inf", 1.0, ["qm", "true", "true"]), ("3.0", "3.0", 2.0, ["cl", "false", "false"])] {
            let r = row(a1, a2);
            assert!((r[2].parse::<f64>().unwrap() - eta).abs() <= 1e-12, "{s}");
            assert_eq!(r[3..], rest, "{s}");
        }
    }
}

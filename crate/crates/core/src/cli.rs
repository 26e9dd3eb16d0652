//! Command-line runner. Every subcommand writes `results.jsonl`, `summary.csv` and
//! `config.lock` into the output directory and prints one summary line.

use crate::bounds::{bound_chains, prepare_temple, sandwich_samples, TempleRegime, TempleSetup};
use crate::config::{resolve, BoundsKind, ConfigLock, ConfigSource, ExperimentConfig, THREADS_ENV};
use crate::discretize::BcTag;
use crate::error::{Error, Result};
use crate::ids::{estimate_ids, lifshits_fit, regime_experiment, Budget, IdsEstimate, RegimeExperimentSpec};
use crate::impurity::birman_solomyak_partial_sums;
use crate::lattice::LatticeBox;
use crate::model::Model;
use crate::plot::{bound_chain_table, loglog_curves, phase_grid, PlotKind, PHASE_ALPHAS};
use crate::records::{self, csv_err, fmt_f64, fmt_opt, CsvTable, RecordKind, RecordSink};
use crate::rmeasure::{empirical_intensity, fit_small_mass_kappa, mixing_correlation};
use crate::rng::derive_seed;
use crate::spectral::{EigenOptions, InertiaCounter};
use clap::{Parser, Subcommand};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "lifshits", version, about = "Lifshits-tail experiments for random Schrödinger operators")]
pub struct Cli {
    /// TOML experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in preset used as the base configuration.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to $LIFSHITS_THREADS, then to the number of CPUs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// `section.key=value`, applied after the preset and config file.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the random measure on the experiment box.
    SampleMeasure,
    /// Sample the potential field on the experiment box.
    SamplePotential,
    /// Lowest eigenvalues of one realization under both boundary conditions.
    Eigs,
    /// IDS estimate on the experiment box.
    Ids,
    /// IDS sandwich or Temple bound chains, per `bounds.kind`.
    Bounds,
    /// Full regime experiment: sandwich, direct IDS and Lifshits fit.
    Regime,
    /// Lifshits fit of a CSV with columns `energy,ids`.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Fit window `lo,hi`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        window: Option<Vec<f64>>,
    },
    /// Small-mass, mixing, intensity and Birman–Solomyak checks.
    StatTests,
    /// Factorization time against box size.
    Bench,
    /// CSV tables for plotting.
    PlotData {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// `results.jsonl` to read; not needed for `phase`.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

/// Worker count from the flag, then the environment.
pub fn thread_count(flag: Option<usize>) -> Option<usize> {
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse().ok())).filter(|&n| n > 0)
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let out_dir = cli.out_dir.clone();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let rec = json!({"error": e.code(), "message": e.to_string()});
            eprintln!("{rec}");
            if let Some(d) = out_dir {
                if std::fs::create_dir_all(&d).is_ok() {
                    let _ = std::fs::write(d.join("error.json"), format!("{rec}\n"));
                }
            }
            1
        }
    }
}

pub fn run(cli: &Cli) -> Result<i32> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads) {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn source(cli: &Cli) -> ConfigSource {
    ConfigSource {
        preset: cli.preset.clone(),
        path: cli.config.clone(),
        overrides: cli.overrides.clone(),
        seed: cli.seed,
        out_dir: cli.out_dir.clone(),
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Fit { input, window } => return fit_file(cli, input, window.as_deref()),
        Command::PlotData { kind, input } => return plot_data(cli, *kind, input.as_deref()),
        _ => {}
    }
    let cfg = resolve(&source(cli))?;
    let out = Output::create(&cfg)?;
    let model = Model::new(cfg.model_spec())?;
    match &cli.command {
        Command::SampleMeasure => sample_measure(&cfg, &model, out),
        Command::SamplePotential => sample_potential(&cfg, &model, out),
        Command::Eigs => eigs(&cfg, &model, out),
        Command::Ids => ids(&cfg, &model, out),
        Command::Bounds => match cfg.bounds.kind {
            BoundsKind::Sandwich => sandwich(&cfg, &model, out),
            BoundsKind::Temple => temple(&cfg, &model, out),
        },
        Command::Regime => regime(&cfg, &model, out),
        Command::StatTests => stat_tests(&cfg, &model, out),
        Command::Bench => bench(&cfg, &model, out),
        Command::Fit { .. } | Command::PlotData { .. } => unreachable!(),
    }
}

/// Output directory, lockfile and record sink for one run.
struct Output {
    dir: PathBuf,
    sink: RecordSink,
}

impl Output {
    fn create(cfg: &ExperimentConfig) -> Result<Self> {
        let hash = cfg.hash()?;
        let dir = cfg.output.out_dir.clone();
        std::fs::create_dir_all(&dir)?;
        let lock = ConfigLock { config_hash: hash.clone(), config: cfg.clone() };
        let text = toml::to_string(&lock).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(dir.join("config.lock"), text)?;
        Ok(Self { dir, sink: RecordSink::new(hash, cfg.seed) })
    }

    fn finish(self, summary: &CsvTable, line: &str) -> Result<()> {
        let f = std::fs::File::create(self.dir.join("results.jsonl"))?;
        records::write_jsonl(std::io::BufWriter::new(f), self.sink.records())?;
        summary.write_file(&self.dir.join("summary.csv"))?;
        println!("{line}");
        Ok(())
    }
}

fn cube(model: &Model, side: i64) -> Result<LatticeBox> {
    LatticeBox::cube(model.dim(), side)
}

fn sample_measure(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let bbox = cube(model, cfg.experiment.side)?;
    let m = cfg.measure.sample(&bbox, cfg.seed)?;
    m.write_jsonl(std::io::BufWriter::new(std::fs::File::create(out.dir.join("measure.jsonl"))?))?;
    let masses = m.cell_masses();
    let mut t = CsvTable::new(&["cell", "mass"]);
    for (j, v) in masses.iter() {
        let cell: Vec<String> = j.iter().map(|x| x.to_string()).collect();
        t.push(vec![cell.join(" "), fmt_f64(v)])?;
    }
    let mean = masses.total() / bbox.volume();
    out.sink.push(
        RecordKind::StatTest,
        &json!({
            "test": "sample_measure",
            "bbox": bbox,
            "atoms": m.len(),
            "total_weight": m.total_weight(),
            "mean_cell_mass": mean,
            "expected_cell_mass": cfg.measure.mean_cell_mass(),
        }),
    )?;
    let line = format!("sample-measure: {} atoms on {bbox}, mean cell mass {mean:.4}", m.len());
    out.finish(&t, &line)?;
    Ok(0)
}

fn sample_potential(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let bbox = cube(model, cfg.experiment.side)?;
    let r = model.realize(&bbox, cfg.seed)?;
    r.field.write_csv(std::io::BufWriter::new(std::fs::File::create(out.dir.join("potential.csv"))?))?;
    let mut t = CsvTable::new(&["statistic", "value"]);
    t.push(vec!["sup".into(), fmt_f64(r.field.sup())])?;
    t.push(vec!["mean".into(), fmt_f64(r.field.mean())])?;
    t.push(vec!["nodes".into(), r.field.values().len().to_string()])?;
    out.sink.push(
        RecordKind::StatTest,
        &json!({
            "test": "sample_potential",
            "bbox": bbox,
            "nodes": r.field.values().len(),
            "sup": r.field.sup(),
            "mean": r.field.mean(),
            "provenance": r.field.provenance(),
        }),
    )?;
    let line = format!("sample-potential: {} nodes on {bbox}, sup {:.4}, mean {:.4}", r.field.values().len(), r.field.sup(), r.field.mean());
    out.finish(&t, &line)?;
    Ok(0)
}

fn eigs(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let bbox = cube(model, cfg.experiment.side)?;
    let r = model.realize(&bbox, cfg.seed)?;
    let grid = model.grid(&bbox)?;
    let opts = EigenOptions { seed: derive_seed(cfg.seed, &[0xe165]), lower_hint: Some(0.0), ..EigenOptions::default() };
    let mut t = CsvTable::new(&["bc", "index", "eigenvalue", "residual"]);
    let mut lowest = Vec::new();
    for bc in [BcTag::Dirichlet, BcTag::Mezincescu] {
        let op = model.operator(Some(&r.field), &grid, bc)?;
        let k = cfg.experiment.n_eigs.min(op.dim());
        let res = op.smallest(k, &opts)?;
        for (i, (l, rr)) in res.eigenvalues.iter().zip(&res.residuals).enumerate() {
            t.push(vec![bc_name(bc).into(), i.to_string(), fmt_f64(*l), fmt_f64(*rr)])?;
        }
        lowest.push(res.eigenvalues[0]);
        out.sink.push(
            RecordKind::Bound,
            &json!({"estimator": "eigenvalues", "bc": bc, "bbox": bbox, "shift": op.shift(), "result": res}),
        )?;
    }
    let line = format!("eigs: λ0 Dirichlet {:.6e}, Mezincescu {:.6e} on {bbox}", lowest[0], lowest[1]);
    out.finish(&t, &line)?;
    Ok(0)
}

fn bc_name(bc: BcTag) -> &'static str {
    match bc {
        BcTag::Dirichlet => "dirichlet",
        BcTag::Mezincescu => "mezincescu",
    }
}

fn ids_table() -> CsvTable {
    CsvTable::new(&["energy", "value", "std_error", "ci_low", "ci_high"])
}

fn push_ids(out: &mut Output, t: &mut CsvTable, est: &IdsEstimate, estimator: &str) -> Result<()> {
    for k in 0..est.energies.len() {
        t.push(vec![
            fmt_f64(est.energies[k]),
            fmt_f64(est.values[k]),
            fmt_f64(est.std_errors[k]),
            fmt_f64(est.ci_low[k]),
            fmt_f64(est.ci_high[k]),
        ])?;
        out.sink.push(
            RecordKind::IdsPoint,
            &json!({
                "estimator": estimator,
                "bc": est.bc,
                "bbox": est.bbox,
                "energy": est.energies[k],
                "value": est.values[k],
                "std_error": est.std_errors[k],
                "ci_low": est.ci_low[k],
                "ci_high": est.ci_high[k],
                "n_realizations": est.n_realizations,
                "n_failed": est.n_failed,
            }),
        )?;
    }
    Ok(())
}

fn fit_line(fit: &std::result::Result<crate::ids::LifshitsFit, Error>) -> String {
    match fit {
        Ok(f) => format!("η̂ = {:.6} ± {:.6} (window {:.4}..{:.4}, r² {:.4})", f.eta_hat, f.std_error, f.window.0, f.window.1, f.r_squared),
        Err(e) => format!("no fit ({e})"),
    }
}

fn ids(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let bbox = cube(model, cfg.experiment.side)?;
    let e = cfg.experiment.energies()?;
    let est = estimate_ids(model, &bbox, cfg.operator.bc, &e, cfg.experiment.n_realizations, cfg.seed)?;
    let mut t = ids_table();
    push_ids(&mut out, &mut t, &est, "direct")?;
    let fit = lifshits_fit(&est, cfg.experiment.fit_window());
    if let Ok(f) = &fit {
        out.sink.push(RecordKind::Fit, f)?;
    }
    let line = format!("ids: {} energies on {bbox}, {}", e.len(), fit_line(&fit));
    out.finish(&t, &line)?;
    Ok(0)
}

fn sandwich_table() -> CsvTable {
    CsvTable::new(&[
        "energy",
        "lower",
        "lower_ci_low",
        "lower_ci_high",
        "direct",
        "direct_ci_low",
        "direct_ci_high",
        "upper",
        "upper_ci_low",
        "upper_ci_high",
        "ordered",
        "consistent",
        "censor_reason",
    ])
}

fn sandwich_row(p: &crate::bounds::SandwichPoint) -> Vec<String> {
    vec![
        fmt_f64(p.energy),
        fmt_f64(p.lower.value),
        fmt_f64(p.lower.ci_low),
        fmt_f64(p.lower.ci_high),
        fmt_f64(p.direct.value),
        fmt_f64(p.direct.ci_low),
        fmt_f64(p.direct.ci_high),
        fmt_f64(p.upper.value),
        fmt_f64(p.upper.ci_low),
        fmt_f64(p.upper.ci_high),
        p.ordered.to_string(),
        p.consistent.to_string(),
        String::new(),
    ]
}

fn sandwich(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let e = cfg.experiment.energies()?;
    let pts = sandwich_samples(model, cfg.experiment.side, &e, cfg.experiment.n_realizations, cfg.seed)?.points()?;
    let mut t = sandwich_table();
    for p in &pts {
        t.push(sandwich_row(p))?;
        out.sink.push(RecordKind::Bound, &json!({"estimator": "sandwich", "point": p}))?;
    }
    let ordered = pts.iter().all(|p| p.ordered);
    let consistent = pts.iter().filter(|p| p.consistent).count();
    let line = format!(
        "bounds: sandwich at {} energies, lower ≤ upper {}, consistent within CIs at {}/{}",
        pts.len(),
        if ordered { "everywhere" } else { "VIOLATED" },
        consistent,
        pts.len()
    );
    out.finish(&t, &line)?;
    Ok(if ordered { 0 } else { 2 })
}

fn temple(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let b = &cfg.bounds;
    let profile = model.potential().profile();
    let setup = match b.regime {
        TempleRegime::Qm => TempleSetup::qm(model.dim(), b.length, b.r0)?,
        TempleRegime::Qc => TempleSetup::qc(profile, b.length, b.r0)?,
        TempleRegime::Cl => TempleSetup::cl(profile, b.length, b.r0)?,
    };
    let opts = EigenOptions { seed: derive_seed(cfg.seed, &[0x7e37]), ..EigenOptions::default() };
    let prep = prepare_temple(model, setup, &opts)?;
    out.sink.push(
        RecordKind::Bound,
        &json!({
            "estimator": "temple_setup",
            "setup": prep.setup,
            "gap": prep.gap,
            "majorant_sup": prep.majorant_sup,
            "hypotheses_hold": prep.hypotheses_hold,
        }),
    )?;
    let chains = bound_chains(model, &prep, b.n_realizations, cfg.seed, &opts)?;
    let mut t = CsvTable::new(&[
        "seed",
        "half_average",
        "temple",
        "lambda0_chi_cutoff",
        "lambda0_chi",
        "lambda0_dirichlet",
        "rayleigh_ritz",
        "holds",
    ]);
    for c in &chains {
        t.push(vec![
            c.seed.to_string(),
            fmt_f64(c.half_average),
            fmt_f64(c.temple.value),
            fmt_f64(c.lambda0_chi_cutoff),
            fmt_f64(c.lambda0_chi),
            fmt_f64(c.lambda0_dirichlet),
            fmt_f64(c.rayleigh_ritz.value),
            c.holds.to_string(),
        ])?;
        let mut v = serde_json::to_value(c)?;
        v["estimator"] = json!("temple_chain");
        out.sink.push(RecordKind::Bound, &v)?;
    }
    let bad = chains.iter().filter(|c| !c.holds).count();
    let line = format!(
        "bounds: {} chains ({:?}), {bad} violations, Temple hypotheses {}",
        chains.len(),
        b.regime,
        if prep.hypotheses_hold { "hold" } else { "fail" }
    );
    out.finish(&t, &line)?;
    Ok(if bad == 0 { 0 } else { 2 })
}

fn regime(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let ex = &cfg.experiment;
    let energies = ex.energies()?;
    let spec = RegimeExperimentSpec {
        energies: energies.clone(),
        side: ex.side,
        n_realizations: ex.n_realizations,
        seed: cfg.seed,
        budget: Budget { max_factorizations: ex.max_factorizations.unwrap_or(u64::MAX) },
        r0: ex.r0,
        prefactor: ex.prefactor,
        fit_window: ex.fit_window(),
    };
    let rep = regime_experiment(model, &spec)?;
    let mut t = sandwich_table();
    for s in &rep.schedule {
        match &s.sandwich {
            Some(p) => {
                t.push(sandwich_row(p))?;
                for (name, iv) in [("lower", &p.lower), ("direct", &p.direct), ("upper", &p.upper)] {
                    out.sink.push(
                        RecordKind::IdsPoint,
                        &json!({
                            "estimator": name,
                            "energy": s.energy,
                            "value": iv.value,
                            "ci_low": iv.ci_low,
                            "ci_high": iv.ci_high,
                            "n_realizations": p.n_realizations,
                            "scaling": s.scaling,
                        }),
                    )?;
                }
            }
            None => {
                let mut row = vec![fmt_f64(s.energy)];
                row.extend(std::iter::repeat_n(String::new(), 11));
                row.push(s.censor_reason.clone().unwrap_or_default());
                t.push(row)?;
                out.sink.push(RecordKind::IdsPoint, &json!({"estimator": "censored", "energy": s.energy, "reason": s.censor_reason}))?;
            }
        }
    }
    if let Some(f) = &rep.fit {
        out.sink.push(RecordKind::Fit, f)?;
    }
    out.sink.push(
        RecordKind::Regime,
        &json!({
            "regime": rep.regime,
            "eta_hat": rep.fit.as_ref().map(|f| f.eta_hat),
            "eta_theory": rep.regime.eta_theory,
            "fit_error": rep.fit_error,
            "partial": rep.partial,
            "direct_bbox": rep.direct.bbox,
        }),
    )?;
    let fit = match (&rep.fit, &rep.fit_error) {
        (Some(f), _) => format!("η̂ = {:.4} ± {:.4}", f.eta_hat, f.std_error),
        (None, e) => format!("no fit ({})", e.as_deref().unwrap_or("unknown")),
    };
    let line = format!(
        "regime: {} (η theory {:.4}), {fit}{}",
        rep.regime.regime.as_str(),
        rep.regime.eta_theory,
        if rep.partial { ", partial (budget exhausted)" } else { "" }
    );
    out.finish(&t, &line)?;
    Ok(0)
}

fn stat_tests(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let s = &cfg.stats;
    let mut t = CsvTable::new(&["test", "statistic", "value", "flag"]);
    let small = s.small_mass_measure.clone().unwrap_or_else(|| cfg.measure.clone());
    let kappa = fit_small_mass_kappa(&small, &s.eps_grid, s.n_small_mass, derive_seed(cfg.seed, &[1]))?;
    t.push(vec!["small_mass".into(), "kappa_hat".into(), fmt_opt(kappa.kappa_hat), if kappa.violated { "violated" } else { "ok" }.into()])?;
    out.sink.push(RecordKind::StatTest, &json!({"test": "small_mass", "measure": small, "result": kappa}))?;

    let mix = mixing_correlation(&cfg.measure, &s.mixing_lag, s.n_mixing, derive_seed(cfg.seed, &[2]))?;
    let z = mix.correlation.map(|c| c / mix.std_error.max(f64::MIN_POSITIVE));
    let flag = match z {
        Some(z) if z.abs() <= 3.0 => "ok",
        Some(_) => "correlated",
        None => "degenerate",
    };
    t.push(vec!["mixing".into(), "correlation".into(), fmt_opt(mix.correlation), flag.into()])?;
    out.sink.push(RecordKind::StatTest, &json!({"test": "mixing", "result": mix}))?;

    let ibox = LatticeBox::cube(model.dim(), s.intensity_side)?;
    let int = empirical_intensity(&cfg.measure, &ibox, s.n_intensity, derive_seed(cfg.seed, &[3]))?;
    t.push(vec!["intensity".into(), "max_z".into(), fmt_f64(int.max_z), if int.max_z <= 4.0 { "ok" } else { "nonperiodic" }.into()])?;
    out.sink.push(RecordKind::StatTest, &json!({"test": "intensity", "result": int}))?;

    let bs = birman_solomyak_partial_sums(model.potential(), s.bs_p, &s.bs_radii)?;
    let last = bs.sums.last().copied().unwrap_or(f64::NAN);
    t.push(vec!["birman_solomyak".into(), "partial_sum".into(), fmt_f64(last), format!("{:?}", bs.diagnostic).to_lowercase()])?;
    out.sink.push(RecordKind::StatTest, &json!({"test": "birman_solomyak", "result": bs}))?;

    let line = format!(
        "stat-tests: κ̂ {} ({}), mixing {flag}, intensity max z {:.2}, Birman–Solomyak {:?}",
        fmt_opt(kappa.kappa_hat),
        if kappa.violated { "violated" } else { "ok" },
        int.max_z,
        bs.diagnostic
    );
    out.finish(&t, &line)?;
    Ok(0)
}

fn bench(cfg: &ExperimentConfig, model: &Model, mut out: Output) -> Result<i32> {
    let mut t = CsvTable::new(&["side", "nodes", "bandwidth", "seconds", "count"]);
    let e = cfg.experiment.energies()?.last().copied().unwrap_or(0.1);
    let mut last = String::new();
    for &side in &cfg.experiment.bench_sides {
        let bbox = cube(model, side)?;
        let r = model.realize(&bbox, cfg.seed)?;
        let op = model.operator(Some(&r.field), &model.grid(&bbox)?, cfg.operator.bc)?;
        let start = Instant::now();
        let counter = InertiaCounter::new(op.matrix());
        let c = counter.count_below(e)?;
        let secs = start.elapsed().as_secs_f64();
        t.push(vec![side.to_string(), op.dim().to_string(), counter.bandwidth().to_string(), fmt_f64(secs), c.count.to_string()])?;
        out.sink.push(
            RecordKind::StatTest,
            &json!({"test": "bench", "side": side, "nodes": op.dim(), "bandwidth": counter.bandwidth(), "seconds": secs, "energy": e, "count": c.count}),
        )?;
        last = format!("{} nodes in {secs:.3} s", op.dim());
    }
    let line = format!("bench: {} box sizes, largest {last}", cfg.experiment.bench_sides.len());
    out.finish(&t, &line)?;
    Ok(0)
}

/// Reads `energy,ids` pairs; extra columns are ignored.
pub fn read_ids_csv(path: &Path) -> Result<IdsEstimate> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(csv_err)?;
    let h = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| h.iter().position(|c| c.trim() == name).ok_or_else(|| Error::Parse(format!("missing column {name}")));
    let (ie, iv) = (col("energy")?, col("ids")?);
    let (mut e, mut v) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let p = |i: usize| rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|x| Error::Parse(format!("{x}")));
        e.push(p(ie)?);
        v.push(p(iv)?);
    }
    IdsEstimate::from_values(e, v)
}

fn fit_file(cli: &Cli, input: &Path, window: Option<&[f64]>) -> Result<i32> {
    let est = read_ids_csv(input)?;
    let cfg = if cli.preset.is_some() || cli.config.is_some() { Some(resolve(&source(cli))?) } else { None };
    let window = match window {
        Some(w) => Some((w[0], w[1])),
        None => cfg.as_ref().and_then(|c| c.experiment.fit_window()),
    };
    let hash = match &cfg {
        Some(c) => c.hash()?,
        None => records::config_hash(&json!({"fit_input": {"energies": est.energies, "values": est.values}, "window": window}))?,
    };
    let dir = cli.out_dir.clone().or_else(|| cfg.as_ref().map(|c| c.output.out_dir.clone())).unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
    let mut out = Output { dir, sink: RecordSink::new(hash.clone(), seed) };
    match &cfg {
        Some(c) => {
            let lock = ConfigLock { config_hash: hash, config: c.clone() };
            std::fs::write(out.dir.join("config.lock"), toml::to_string(&lock).map_err(|e| Error::Config(e.to_string()))?)?;
        }
        None => std::fs::write(out.dir.join("config.lock"), format!("config_hash = \"{hash}\"\ninput = {:?}\n", input.display().to_string()))?,
    }
    let fit = lifshits_fit(&est, window)?;
    out.sink.push(RecordKind::Fit, &fit)?;
    let mut t = CsvTable::new(&["eta_hat", "std_error", "intercept", "window_lo", "window_hi", "r_squared", "n_points", "van_hove"]);
    t.push(vec![
        fmt_f64(fit.eta_hat),
        fmt_f64(fit.std_error),
        fmt_f64(fit.intercept),
        fmt_f64(fit.window.0),
        fmt_f64(fit.window.1),
        fmt_f64(fit.r_squared),
        fit.n_points.to_string(),
        fit.van_hove.to_string(),
    ])?;
    let mut line = format!("fit: {}", fit_line(&Ok(fit.clone())));
    if fit.van_hove {
        line.push_str(", no Lifshits decay (van Hove behavior)");
    }
    out.finish(&t, &line)?;
    Ok(0)
}

fn plot_data(cli: &Cli, kind: PlotKind, input: Option<&Path>) -> Result<i32> {
    let data = match kind {
        PlotKind::Phase => phase_grid(&PHASE_ALPHAS)?,
        PlotKind::Loglog | PlotKind::Chains => {
            let recs = match input {
                Some(p) => records::read_jsonl_file(p)?,
                None => return Err(Error::Config("plot-data needs --input for this kind".into())),
            };
            if kind == PlotKind::Loglog {
                loglog_curves(&recs)?
            } else {
                bound_chain_table(&recs)?
            }
        }
    };
    for w in &data.warnings {
        log::warn!("{w}");
        eprintln!("warning: {w}");
    }
    let dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    let name = match kind {
        PlotKind::Phase => "plot_phase.csv",
        PlotKind::Loglog => "plot_loglog.csv",
        PlotKind::Chains => "plot_chains.csv",
    };
    data.table.write_file(&dir.join(name))?;
    println!("plot-data: {} rows written to {}", data.table.len(), dir.join(name).display());
    Ok(0)
}

//! Command-line front end. Every subcommand writes `manifest.toml` (the
//! fully resolved config, loadable with `--config`) and `summary.txt`
//! (`key = value`) into the output directory.

mod config;

use std::fmt::Display;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

pub use config::{is_sweepable, RunConfig};

use crate::dephasing::{amplitude_crossing_time, offdiagonal_trajectory};
use crate::error::{Error, Result};
use crate::measurement::{
    pointer_distribution, run_measurement, sample_readout, MeasurementOptions, MeasurementSchedule,
};
use crate::model::{tau_recurrence, tau_reduction, validate_regime, Timescales};
use crate::numerics::linear_fit;
use crate::oracle::agreement_suite;
use crate::registration::{fit_growth_rate, register, RegistrationSchedule};

pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Exit status for a run that completed but whose check did not pass.
pub const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "qmeasure",
    version,
    about = "Spin measurement by a Curie-Weiss magnet in a thermal bath"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Regime checks and the characteristic timescales
    Timescales(CommonArgs),
    /// Off-diagonal decay and recurrence; exits 3 if the recurrence survives
    Dephase(CommonArgs),
    /// Registration of one diagonal block
    Register(CommonArgs),
    /// Full measurement with readout sampling
    Measure(CommonArgs),
    /// One-parameter sweep, `--set sweep=KEY=START:STOP:COUNT[:log]`
    Scan(CommonArgs),
    /// Brute-force agreement suite; exits 3 on any failure
    OracleCheck(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Flat `key = value` config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key; repeatable, last wins
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, default_value = "qmeasure-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run even if the regime checks fail
    #[arg(long)]
    pub force: bool,
    /// Factor standing in for "much greater than"
    #[arg(long)]
    pub margin: Option<f64>,
}

impl CommonArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut sets = self.set.clone();
        if let Some(seed) = self.seed {
            sets.push(format!("seed={seed}"));
        }
        if let Some(margin) = self.margin {
            sets.push(format!("margin={margin:?}"));
        }
        RunConfig::load(self.config.as_deref(), &sets)
    }
}

/// Ordered `key = value` report, TOML-compatible.
#[derive(Debug, Default, Clone)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    fn new(command: &str) -> Self {
        let mut s = Summary::default();
        s.raw("csv_schema_version", CSV_SCHEMA_VERSION);
        s.text("command", command);
        s
    }

    fn raw(&mut self, key: &str, v: impl Display) {
        self.lines.push((key.to_string(), v.to_string()));
    }

    fn num(&mut self, key: &str, v: f64) {
        let s = if v.is_finite() {
            format!("{v:e}")
        } else if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
        self.raw(key, s);
    }

    fn opt(&mut self, key: &str, v: Option<f64>) {
        if let Some(v) = v {
            self.num(key, v);
        }
    }

    fn text(&mut self, key: &str, v: &str) {
        self.raw(key, format!("{v:?}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// What a subcommand produced.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: u8,
    pub summary: Summary,
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let (name, args) = match &cli.command {
        Command::Timescales(a) => ("timescales", a),
        Command::Dephase(a) => ("dephase", a),
        Command::Register(a) => ("register", a),
        Command::Measure(a) => ("measure", a),
        Command::Scan(a) => ("scan", a),
        Command::OracleCheck(a) => ("oracle-check", a),
    };
    let cfg = args.resolve()?;
    fs::create_dir_all(&args.out)?;
    write_manifest(&args.out, name, &cfg)?;
    let outcome = match cli.command {
        Command::Timescales(_) => cmd_timescales(&cfg, &args.out),
        Command::Dephase(_) => cmd_dephase(&cfg, &args.out),
        Command::Register(_) => cmd_register(&cfg, &args.out, args.force),
        Command::Measure(_) => cmd_measure(&cfg, &args.out, args.force),
        Command::Scan(_) => cmd_scan(&cfg, &args.out),
        Command::OracleCheck(_) => cmd_oracle_check(&args.out),
    }?;
    fs::write(args.out.join("summary.txt"), outcome.summary.render())?;
    Ok(outcome)
}

fn write_manifest(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let body = toml::to_string(&cfg.to_table()).map_err(|e| Error::config(None, e.to_string()))?;
    let text = format!(
        "# qmeasure {} `{command}`; rerun with --config on this file\n{body}",
        env!("CARGO_PKG_VERSION")
    );
    fs::write(out.join("manifest.toml"), text)?;
    Ok(())
}

fn create(out: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(out.join(name))?))
}

fn check_regime(cfg: &RunConfig, force: bool) -> Result<()> {
    let report = validate_regime(&cfg.params, cfg.margin);
    if !report.overall && !force {
        return Err(Error::RegimeViolation {
            failed: report.failed().map(|c| c.key).collect::<Vec<_>>().join(", "),
        });
    }
    Ok(())
}

pub fn cmd_timescales(cfg: &RunConfig, _out: &Path) -> Result<Outcome> {
    let report = validate_regime(&cfg.params, cfg.margin);
    let ts = Timescales::compute(&cfg.params)?;
    println!("{report}");
    print!("{}", ts.to_key_values());
    let mut summary = Summary::new("timescales");
    summary.num("margin", cfg.margin);
    for c in &report.checks {
        summary.raw(&format!("regime_{}", c.key), c.satisfied);
    }
    summary.raw("regime_overall", report.overall);
    summary.num("tau_red", ts.tau_red);
    summary.num("tau_irrev", ts.tau_irrev);
    summary.num("tau_reg", ts.tau_reg);
    summary.num("tau_recur", ts.tau_recur_estimate);
    summary.num("m_f", ts.m_f);
    Ok(Outcome { exit_code: 0, summary })
}

/// Default grid: `[0, 1.1·π/(2g)]`, so the first recurrence is covered.
fn dephasing_times(cfg: &RunConfig) -> Result<Vec<f64>> {
    if let Some(times) = &cfg.times {
        return Ok(times.clone());
    }
    let t_max = match cfg.t_max {
        Some(t) => t,
        None => 1.1 * tau_recurrence(&cfg.params)?,
    };
    let n = cfg.n_samples;
    Ok((0..=n).map(|i| t_max * i as f64 / n as f64).collect())
}

pub fn cmd_dephase(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let times = dephasing_times(cfg)?;
    let traj = offdiagonal_trajectory(&cfg.params, &times, cfg.recurrence_threshold)?;
    traj.write_csv(create(out, "dephasing.csv")?)?;
    let mut summary = Summary::new("dephase");
    summary.raw("points", times.len());
    summary.opt("tau_red", tau_reduction(&cfg.params).ok());
    summary.opt(
        "crossing_time_e1",
        amplitude_crossing_time(&cfg.params, (-1.0f64).exp()).ok(),
    );
    let suppressed = match traj.first_recurrence {
        Some(r) => {
            summary.num("recurrence_time", r.time);
            summary.num("recurrence_value", r.value);
            summary.num("recurrence_threshold", r.threshold);
            !r.survives
        }
        None => true,
    };
    summary.raw("recurrence_suppressed", suppressed);
    println!("recurrence suppressed: {suppressed}");
    Ok(Outcome {
        exit_code: if suppressed { 0 } else { EXIT_CHECK_FAILED },
        summary,
    })
}

fn registration_t_max(cfg: &RunConfig) -> Result<f64> {
    match cfg.t_max {
        Some(t) => Ok(t),
        None => Ok(MeasurementSchedule::for_params(&cfg.params)?.t_final),
    }
}

pub fn cmd_register(cfg: &RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    check_regime(cfg, force)?;
    let t_max = registration_t_max(cfg)?;
    let mut schedule = RegistrationSchedule::uniform(t_max, cfg.n_samples).with_snapshots(cfg.snapshot_times.clone());
    if let Some(off) = cfg.coupling_off_at {
        schedule = schedule.with_coupling_off_at(off);
    }
    let reg = register(&cfg.params, cfg.sector, &schedule)?;

    let mut w = create(out, "trajectory.csv")?;
    use std::io::Write;
    writeln!(w, "t,mean_m,var_m")?;
    for s in &reg.samples {
        writeln!(w, "{:.17e},{:.17e},{:.17e}", s.t, s.mean_m, s.var_m)?;
    }
    if !reg.snapshots.is_empty() {
        let mut w = create(out, "snapshots.csv")?;
        writeln!(w, "t,m,p")?;
        let m = crate::model::MagnetizationGrid::new(cfg.params.n_spins);
        for snap in &reg.snapshots {
            for (mk, p) in m.values().iter().zip(&snap.probabilities) {
                writeln!(w, "{:.17e},{:.17e},{:.17e}", snap.t, mk, p)?;
            }
        }
    }

    let measured = reg.require_registered(t_max)?;
    let p = &cfg.params;
    let closed = Timescales::compute(p).ok().map(|t| t.tau_reg);
    let shift = p.coupling_g / (p.coupling_j - p.temperature);
    let growth = fit_growth_rate(&reg.samples, cfg.sector, shift, 0.0, 0.1);
    let mut summary = Summary::new("register");
    summary.raw("sector", cfg.sector.sign() as i32);
    summary.num("t_max", t_max);
    summary.num("m_ferro", reg.m_ferro);
    summary.num("threshold", reg.threshold);
    summary.num("measured_registration_time", measured);
    summary.opt("tau_reg_closed_form", closed);
    summary.opt("registration_time_ratio", closed.map(|c| measured / c));
    summary.opt("growth_rate", growth);
    summary.opt(
        "growth_rate_ratio",
        growth.map(|g| g / (p.gamma * (p.coupling_j - p.temperature))),
    );
    summary.num("final_mean", reg.final_mean);
    summary.num("final_std", reg.final_std);
    summary.num("well_mean", reg.well_mean);
    summary.num("well_std", reg.well_std);
    summary.raw("final_peaks", reg.final_peaks);
    summary.raw("in_correct_well", reg.in_correct_well);
    summary.num("wrong_well_mass", reg.wrong_well_mass);
    summary.raw("steps", reg.audit.steps);
    summary.num("max_norm_error", reg.audit.max_norm_error);
    summary.num("min_probability", reg.audit.min_probability);
    println!("registered at t = {measured:.6e} (closed form {:?})", closed);
    Ok(Outcome { exit_code: 0, summary })
}

pub fn cmd_measure(cfg: &RunConfig, out: &Path, force: bool) -> Result<Outcome> {
    let spin = cfg.spin_state()?;
    let schedule = MeasurementSchedule::new(registration_t_max(cfg)?, cfg.n_samples);
    let options = MeasurementOptions {
        margin: cfg.margin,
        force,
        residual_threshold: cfg.residual_threshold,
    };
    let run = run_measurement(&spin, &cfg.params, &schedule, &options)?;
    run.record.write_csv(create(out, "trajectory.csv")?)?;
    let dist = pointer_distribution(&run.state);
    {
        use std::io::Write;
        let mut w = create(out, "pointer.csv")?;
        writeln!(w, "m,p")?;
        for (m, p) in dist.m.iter().zip(&dist.p) {
            writeln!(w, "{m:.17e},{p:.17e}")?;
        }
    }

    let r = &run.report;
    let mut summary = Summary::new("measure");
    summary.raw("seed", cfg.seed);
    summary.num("t_final", schedule.t_final);
    summary.num("p_up", r.pointer_weights.0);
    summary.num("p_down", r.pointer_weights.1);
    summary.num("block_weight_up", r.block_weights.0);
    summary.num("block_weight_down", r.block_weights.1);
    summary.num("peak_up_location", r.peak_up.location);
    summary.num("peak_up_spread", r.peak_up.spread);
    summary.num("peak_down_location", r.peak_down.location);
    summary.num("peak_down_spread", r.peak_down.spread);
    summary.opt("registration_time_up", run.record.registration_time_up);
    summary.opt("registration_time_down", run.record.registration_time_down);
    summary.num("offdiag_residual", r.offdiag_residual);
    summary.num("residual_bound", r.residual_threshold);
    summary.num("wrong_well_mass_up", r.wrong_well_mass.0);
    summary.num("wrong_well_mass_down", r.wrong_well_mass.1);
    let (d_uu, d_dd) = r.post_spin_state.diagonal();
    summary.num("post_r_uu", d_uu);
    summary.num("post_r_dd", d_dd);
    summary.num("post_abs_r_ud", r.post_spin_state.off_diagonal().norm());
    summary.num("entropy_initial", r.entropy.initial);
    summary.num("entropy_final", r.entropy.final_total);
    summary.num("entropy_final_gibbs_wells", r.entropy.equilibrium_final);
    summary.num("entropy_magnet_final", r.entropy.magnet_final);
    summary.num("entropy_bath_final", r.entropy.bath_final);
    summary.raw("correlation_check", r.correlation_check);
    summary.raw("complete", r.complete);
    summary.raw("steps", run.record.audit.steps);
    summary.num("max_norm_error", run.record.audit.max_norm_error);
    summary.num("min_probability", run.record.audit.min_probability);

    let readout = sample_readout(&dist, cfg.readout_samples, cfg.seed, r.residual_threshold)?;
    readout.write_csv(create(out, "readout.csv")?)?;
    let (f_up, f_down) = readout.frequencies();
    summary.raw("readout_samples", readout.outcomes.len());
    summary.num("readout_f_up", f_up);
    summary.num("readout_f_down", f_down);
    println!(
        "pointer weights {:.6} {:.6}; readout {f_up:.5} {f_down:.5}",
        r.pointer_weights.0, r.pointer_weights.1
    );
    Ok(Outcome { exit_code: 0, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub key: String,
    pub values: Vec<f64>,
}

impl SweepSpec {
    /// `KEY=START:STOP:COUNT[:log]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = |msg: &str| Error::config(Some("sweep"), format!("`{spec}`: {msg}"));
        let (key, range) = spec
            .split_once('=')
            .ok_or_else(|| bad("expected KEY=START:STOP:COUNT[:log]"))?;
        let key = key.trim();
        if !is_sweepable(key) {
            return Err(Error::config(Some(key), "cannot sweep a non-numeric key"));
        }
        let parts: Vec<&str> = range.split(':').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad("expected START:STOP:COUNT[:log]"));
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad("START is not a number"))?;
        let stop: f64 = parts[1].trim().parse().map_err(|_| bad("STOP is not a number"))?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad("COUNT is not an integer"))?;
        let log = match parts.get(3).map(|s| s.trim()) {
            None => false,
            Some("log") => true,
            Some(_) => return Err(bad("the optional fourth field must be `log`")),
        };
        if count == 0 {
            return Err(bad("COUNT must be >= 1"));
        }
        if !(start <= stop) {
            return Err(bad("START must not exceed STOP"));
        }
        if log && !(start > 0.0) {
            return Err(bad("log sweeps need START > 0"));
        }
        let values = if count == 1 {
            vec![start]
        } else {
            (0..count)
                .map(|i| {
                    let f = i as f64 / (count - 1) as f64;
                    if log {
                        (start.ln() + f * (stop.ln() - start.ln())).exp()
                    } else {
                        start + f * (stop - start)
                    }
                })
                .collect()
        };
        Ok(SweepSpec {
            key: key.to_string(),
            values,
        })
    }
}

/// The value a sweep point actually ran with, after integer rounding.
fn swept_value(cfg: &RunConfig, key: &str) -> f64 {
    match cfg.to_table().get(key) {
        Some(toml::Value::Integer(i)) => *i as f64,
        Some(toml::Value::Float(x)) => *x,
        _ => f64::NAN,
    }
}

fn probe_columns(probe: &str) -> Result<&'static [&'static str]> {
    match probe {
        "reduction" => Ok(&["crossing_time", "tau_red", "ratio"]),
        "registration" => Ok(&[
            "measured_time",
            "tau_reg",
            "ratio",
            "final_mean",
            "final_std",
            "well_std",
        ]),
        "timescales" => Ok(&["tau_red", "tau_irrev", "tau_reg", "tau_recur"]),
        other => Err(Error::config(Some("probe"), format!("unknown probe `{other}`"))),
    }
}

fn run_probe(probe: &str, cfg: &RunConfig) -> Result<Vec<f64>> {
    let p = &cfg.params;
    match probe {
        "reduction" => {
            let crossing = amplitude_crossing_time(p, (-1.0f64).exp())?;
            let tau = tau_reduction(p)?;
            Ok(vec![crossing, tau, crossing / tau])
        }
        "registration" => {
            let t_max = registration_t_max(cfg)?;
            let reg = register(p, cfg.sector, &RegistrationSchedule::uniform(t_max, cfg.n_samples))?;
            let measured = reg.require_registered(t_max)?;
            let closed = Timescales::compute(p)?.tau_reg;
            Ok(vec![
                measured,
                closed,
                measured / closed,
                reg.final_mean,
                reg.final_std,
                reg.well_std,
            ])
        }
        "timescales" => {
            let ts = Timescales::compute(p)?;
            Ok(vec![ts.tau_red, ts.tau_irrev, ts.tau_reg, ts.tau_recur_estimate])
        }
        other => Err(Error::config(Some("probe"), format!("unknown probe `{other}`"))),
    }
}

pub fn cmd_scan(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let spec = cfg
        .sweep
        .as_deref()
        .ok_or_else(|| Error::config(Some("sweep"), "scan needs `sweep = \"KEY=START:STOP:COUNT[:log]\"`"))?;
    let sweep = SweepSpec::parse(spec)?;
    let columns = probe_columns(&cfg.probe)?;
    let points: Vec<RunConfig> = sweep
        .values
        .iter()
        .map(|&v| cfg.with_value(&sweep.key, v))
        .collect::<Result<_>>()?;
    let mut rows: Vec<(usize, f64, Vec<f64>)> = points
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_probe(&cfg.probe, c).map(|r| (i, swept_value(c, &sweep.key), r)))
        .collect::<Result<_>>()?;
    rows.sort_by_key(|r| r.0);

    {
        use std::io::Write;
        let mut w = create(out, "scan.csv")?;
        writeln!(w, "index,{},{}", sweep.key, columns.join(","))?;
        for (i, v, r) in &rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:.17e}")).collect();
            writeln!(w, "{i},{v:e},{}", cells.join(","))?;
        }
    }
    let mut summary = Summary::new("scan");
    summary.text("sweep", spec);
    summary.text("probe", &cfg.probe);
    summary.raw("points", rows.len());
    if rows.len() >= 2 && rows.iter().all(|r| r.1 > 0.0 && r.2[0] > 0.0) {
        let x: Vec<f64> = rows.iter().map(|r| r.1.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.2[0].ln()).collect();
        if let Some((slope, _)) = linear_fit(&x, &y) {
            summary.num(&format!("loglog_slope_{}", columns[0]), slope);
            println!("log-log slope of {} vs {}: {slope:.5}", columns[0], sweep.key);
        }
    }
    Ok(Outcome { exit_code: 0, summary })
}

pub fn cmd_oracle_check(_out: &Path) -> Result<Outcome> {
    let report = agreement_suite()?;
    print!("{}", report.table());
    let mut summary = Summary::new("oracle-check");
    for c in &report.checks {
        summary.num(&format!("max_error_{}", slug(&c.name)), c.max_error);
    }
    summary.raw("all_passed", report.all_passed());
    Ok(Outcome {
        exit_code: if report.all_passed() { 0 } else { EXIT_CHECK_FAILED },
        summary,
    })
}

fn slug(name: &str) -> String {
    let mut s = String::new();
    for ch in name.chars() {
        if ch.is_ascii_alphanumeric() {
            s.push(ch.to_ascii_lowercase());
        } else if !s.ends_with('_') {
            s.push('_');
        }
    }
    s.trim_matches('_').to_string()
}

//! Running configured experiments and recording their summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{
    Alignment, Experiment, ExperimentConfig, MultidBlock, SolverKind, SCHEMA_VERSION,
};
use crate::classify::{classify_wave, decay_rate_prediction, Classification, Verdict};
use crate::error::{Error, Result};
use crate::evolve::{
    estimate_shift_limit, evolve_fv_oracle, evolve_perturbed, evolve_with_tracking,
    write_norms_csv, FvOptions, GridOptions, Perturbation, Reference, TrackingOptions, Trajectory,
};
use crate::model::ModelSpec;
use crate::multid::{crossing, evolve_planar_split, PeriodicCurve, PlanarWave2D, SplitOptions};
use crate::norms::{default_window, fit_decay_rate, DecayFit, WeightSpec};
use crate::profile::{check_nondegenerate, NondegeneracyReport, WaveProfile};

/// Minimum number of samples inside a decay fit window.
pub const MIN_FIT_POINTS: usize = 20;

/// Predicted rates at or below this are treated as "no decay".
const RATE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Output directory; overrides the configured one.
    pub out: Option<PathBuf>,
    /// Evolve waves classified as unstable; their checks become exploratory.
    pub override_unstable: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }

    fn flag(name: impl Into<String>, pass: bool) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Check {
            name: name.into(),
            value: v,
            threshold: 1.0,
            pass,
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RateReport {
    pub weight: String,
    pub kappa: f64,
    /// `None` when no decay is predicted in this norm.
    pub predicted: Option<f64>,
    pub fitted: Option<f64>,
    pub r2: Option<f64>,
    pub loglog_slope: Option<f64>,
    pub relative_error: Option<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ShiftReport {
    pub index: usize,
    pub psi_end: f64,
    pub psi_inf: f64,
    pub tail: f64,
    /// Fitted exponential rate of `|ψ'|`.
    pub rate: f64,
    pub loglog_slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub name: String,
    pub experiment: Experiment,
    pub config_hash: String,
    pub crate_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    pub rates: Vec<RateReport>,
    pub shifts: Vec<ShiftReport>,
    pub checks: Vec<Check>,
    /// Set when an unstable wave was evolved on request; checks are informative only.
    pub exploratory: bool,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RunSummary {
    fn new(cfg: &ExperimentConfig, experiment: Experiment) -> Self {
        RunSummary {
            schema_version: SCHEMA_VERSION,
            name: cfg.name.clone(),
            experiment,
            config_hash: cfg.hash().unwrap_or_default(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            classification: None,
            rates: Vec::new(),
            shifts: Vec::new(),
            checks: Vec::new(),
            exploratory: false,
            passed: false,
            error: None,
        }
    }

    fn finish(mut self) -> Self {
        self.passed =
            self.error.is_none() && (self.exploratory || self.checks.iter().all(|c| c.pass));
        self
    }
}

/// Output directory of a run.
pub fn output_dir(cfg: &ExperimentConfig, opts: &RunOptions) -> PathBuf {
    opts.out
        .clone()
        .or_else(|| cfg.output.directory.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(w.flush()?)
}

/// Runs `experiment` on `cfg`, writing `summary.json` and, on error, a `FAILED` marker.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    experiment: Experiment,
    opts: &RunOptions,
) -> Result<RunSummary> {
    let dir = output_dir(cfg, opts);
    std::fs::create_dir_all(&dir)?;
    let marker = dir.join("FAILED");
    if marker.exists() {
        std::fs::remove_file(&marker)?;
    }
    let mut summary = RunSummary::new(cfg, experiment);
    let result = match experiment {
        Experiment::Classify => classify_cmd(cfg, &dir, &mut summary),
        Experiment::Profile => profile_cmd(cfg, &dir, &mut summary),
        Experiment::Evolve => evolve_cmd(cfg, &dir, opts, false, &mut summary),
        Experiment::Decay => evolve_cmd(cfg, &dir, opts, true, &mut summary),
        Experiment::Multid => multid_cmd(cfg, &dir, opts, &mut summary),
    };
    if let Err(e) = result {
        log::error!("{}: {e}", cfg.name);
        std::fs::write(&marker, format!("{e}\n"))?;
        summary.error = Some(e.to_string());
    }
    let summary = summary.finish();
    write_json(&dir, "summary.json", &summary)?;
    Ok(summary)
}

/// Serialized name of a unit enum variant.
fn tag<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn prepare(
    cfg: &ExperimentConfig,
    summary: &mut RunSummary,
) -> Result<(ModelSpec, WaveProfile, Classification)> {
    let model = cfg.model.build()?;
    let profile = cfg.wave.build(&model)?;
    let class = classify_wave(&model, &profile)?;
    summary.classification = Some(class.clone());
    if let Some(exp) = &cfg.measurement.expect {
        summary.checks.push(Check::flag(
            format!("verdict is {}", tag(&exp.verdict)),
            class.verdict == exp.verdict,
        ));
        if let Some(case) = exp.case {
            summary.checks.push(Check::flag(
                format!("case is {}", tag(&case)),
                class.case_id == case,
            ));
        }
    }
    Ok((model, profile, class))
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    schema_version: u32,
    name: &'a str,
    classification: &'a Classification,
    nondegeneracy: &'a NondegeneracyReport,
    /// Predicted rate per configured weight, `None` when no decay is predicted.
    predictions: Vec<(f64, Option<f64>)>,
}

fn classify_cmd(cfg: &ExperimentConfig, dir: &Path, summary: &mut RunSummary) -> Result<()> {
    let (model, profile, class) = prepare(cfg, summary)?;
    let nondegeneracy = check_nondegenerate(&model, &profile);
    let predictions = cfg
        .measurement
        .weights
        .iter()
        .map(|w| {
            (
                w.kappa,
                decay_rate_prediction(&model, &profile, w.kappa).ok(),
            )
        })
        .collect();
    let report = ClassifyReport {
        schema_version: SCHEMA_VERSION,
        name: &cfg.name,
        classification: &class,
        nondegeneracy: &nondegeneracy,
        predictions,
    };
    write_json(dir, "classification.json", &report)
}

fn profile_cmd(cfg: &ExperimentConfig, dir: &Path, summary: &mut RunSummary) -> Result<()> {
    let (model, profile, _) = prepare(cfg, summary)?;
    let mut w = create(dir, "profile.csv")?;
    profile.write_csv(&mut w, cfg.solver.n)?;
    w.flush()?;
    let report = check_nondegenerate(&model, &profile);
    write_json(dir, "nondegeneracy.json", &report)?;
    summary
        .checks
        .push(Check::flag("nondegenerate", report.pass()));
    Ok(())
}

/// Refuses unstable waves unless overridden, in which case the run is exploratory.
fn gate(class: &Classification, opts: &RunOptions, summary: &mut RunSummary) -> Result<()> {
    if class.verdict == Verdict::Unstable {
        if !opts.override_unstable {
            return Err(Error::Config(format!(
                "wave is classified unstable ({}); pass --override-unstable to evolve it anyway",
                class.shape
            )));
        }
        log::warn!("evolving an unstable wave; results are exploratory");
        summary.exploratory = true;
    }
    Ok(())
}

/// Reference translate of the profile for level-set alignment.
fn level_set_shift(profile: &WaveProfile, pert: &Perturbation) -> Result<f64> {
    let seg = &profile.segments[0];
    let xs = seg
        .x_star
        .ok_or_else(|| Error::Config("level-set alignment needs a characteristic point".into()))?;
    let level = seg.value(xs);
    let u0 = |x: f64| seg.value(x) + pert.eval(x)[0];
    Ok(crossing(u0, xs - 1.0, xs + 1.0, 201, level)? - xs)
}

fn simulate(
    cfg: &ExperimentConfig,
    model: &ModelSpec,
    profile: &WaveProfile,
) -> Result<(Trajectory, WaveProfile)> {
    let s = &cfg.solver;
    let pert = cfg.perturbation.shape.clone();
    let grid = GridOptions {
        domain: (s.domain[0], s.domain[1]),
        n: s.n,
        dt: s.dt,
        output_dt: s.output_dt,
    };
    let sigma = profile.sigma;
    match s.kind {
        SolverKind::Characteristics => {
            if !profile.discontinuities.is_empty() || profile.segments.len() != 1 {
                return Err(Error::Config(
                    "the characteristics solver needs a smooth wave; use `tracking`".into(),
                ));
            }
            let seg = profile.segments[0].clone();
            if profile.is_constant() {
                let c = seg.value(0.0);
                let tr = evolve_perturbed(
                    model,
                    sigma,
                    Reference::Constant(c),
                    move |x| pert.eval(x),
                    s.horizon,
                    &grid,
                )?;
                return Ok((tr, profile.clone()));
            }
            let shift = match cfg.perturbation.align {
                Alignment::Profile => 0.0,
                Alignment::LevelSet => level_set_shift(profile, &pert)?,
            };
            let base = seg.clone();
            let dev = move |x: f64| {
                let [u, du, _] = base.eval(x);
                let [ub, dub, _] = base.eval(x - shift);
                let [d, dd] = pert.eval(x);
                [(u - ub) + d, (du - dub) + dd]
            };
            let tr = evolve_perturbed(
                model,
                sigma,
                Reference::Segment {
                    segment: seg,
                    shift,
                },
                dev,
                s.horizon,
                &grid,
            )?;
            Ok((tr, profile.translated(shift)))
        }
        SolverKind::Tracking => {
            let opts = TrackingOptions {
                grid,
                collar: s.collar,
            };
            let tr = evolve_with_tracking(model, profile, move |x| pert.eval(x), s.horizon, &opts)?;
            Ok((tr, profile.clone()))
        }
        SolverKind::FiniteVolume => {
            let opts = FvOptions {
                domain: (s.domain[0], s.domain[1]),
                n: s.n,
                cfl: s.cfl,
                output_dt: s.output_dt,
            };
            let p = profile.clone();
            let tr = evolve_fv_oracle(
                model,
                sigma,
                move |x| p.value(x) + pert.eval(x)[0],
                s.horizon,
                &opts,
            )?;
            Ok((tr, profile.clone()))
        }
    }
}

fn weight_label(w: &WeightSpec) -> String {
    let mut s = format!("kappa={}", w.kappa);
    if let Some(rho) = &w.rho {
        s.push_str(&format!(
            ",rho={}",
            serde_json::to_string(rho).unwrap_or_default()
        ));
    }
    s.push_str(&format!(",side={:?}", w.side).to_lowercase());
    s
}

fn evolve_cmd(
    cfg: &ExperimentConfig,
    dir: &Path,
    opts: &RunOptions,
    decay_only: bool,
    summary: &mut RunSummary,
) -> Result<()> {
    let (model, profile, class) = prepare(cfg, summary)?;
    gate(&class, opts, summary)?;
    let (tr, reference) = simulate(cfg, &model, &profile)?;
    let m = &cfg.measurement;
    let horizon = cfg.solver.horizon;
    let window = m
        .window
        .map(|w| (w[0], w[1]))
        .unwrap_or_else(|| default_window(horizon));
    let t = tr.times();
    let unperturbed = cfg.perturbation.shape == Perturbation::Zero;
    let mut series = Vec::new();
    for (k, w) in m.weights.iter().enumerate() {
        let label = weight_label(w);
        let norms = if cfg.solver.kind == SolverKind::Tracking && profile.discontinuities.len() == 1
        {
            tr.tracked_deviation_norms(&reference, w)?
        } else {
            tr.deviation_norms(&reference, w)?
        };
        let predicted = if summary.exploratory && profile.is_constant() && w.kappa == 0.0 {
            // a localized bump on an unstable state grows like e^{g'(c) t}
            Some(-model.dg(profile.value(0.0)))
        } else {
            decay_rate_prediction(&model, &profile, w.kappa)
                .ok()
                .filter(|r| *r > RATE_FLOOR)
        };
        let fit = fit_decay_rate(&t, &norms, window).ok();
        let mut report = RateReport {
            weight: label.clone(),
            kappa: w.kappa,
            predicted,
            fitted: fit.map(|f| f.omega),
            r2: fit.and_then(|f| f.r2),
            loglog_slope: fit.map(|f| f.loglog_slope),
            relative_error: None,
            points: fit.map_or(0, |f| f.points),
        };
        let peak = norms.iter().fold(0.0f64, |a, &b| a.max(b));
        if unperturbed {
            summary.checks.push(Check::at_most(
                format!("{label}: deviation stays zero"),
                peak,
                m.max_deviation,
            ));
        } else if let (Some(want), Some(f)) = (predicted, fit) {
            let err = (f.omega - want).abs() / want.abs();
            report.relative_error = Some(err);
            summary.checks.push(Check::at_most(
                format!("{label}: rate error"),
                err,
                m.rate_tolerance,
            ));
        } else {
            let growth = if norms[0] > 0.0 {
                peak / norms[0]
            } else {
                f64::INFINITY
            };
            summary.checks.push(Check::at_most(
                format!("{label}: bounded"),
                growth,
                m.bounded_factor,
            ));
        }
        if k == 0 {
            if let (Some(target), Some(f)) = (m.loglog, fit) {
                let err = (f.loglog_slope - target.slope).abs();
                summary.checks.push(Check::at_most(
                    format!("{label}: log-log slope"),
                    err,
                    target.tolerance,
                ));
            }
        }
        if decay_only && !unperturbed {
            summary.checks.push(Check::at_least(
                format!("{label}: points in fit window"),
                report.points as f64,
                MIN_FIT_POINTS as f64,
            ));
        }
        summary.rates.push(report);
        series.push((label, norms));
    }
    for (index, s) in tr.shifts.iter().enumerate() {
        let Ok(limit) = estimate_shift_limit(s, None) else {
            continue;
        };
        if let (0, Some(target)) = (index, m.shift_loglog) {
            let err = (limit.fit.loglog_slope - target.slope).abs();
            summary.checks.push(Check::at_most(
                "|psi'| log-log slope",
                err,
                target.tolerance,
            ));
        }
        summary.shifts.push(ShiftReport {
            index,
            psi_end: limit.psi_end,
            psi_inf: limit.psi_inf,
            tail: limit.tail,
            rate: limit.fit.omega,
            loglog_slope: limit.fit.loglog_slope,
        });
    }
    let name = if decay_only { "decay.csv" } else { "norms.csv" };
    let mut w = create(dir, name)?;
    write_norms_csv(&mut w, &t, &series)?;
    w.flush()?;
    if !decay_only {
        let every = cfg.output.snapshot_every;
        let thinned = Trajectory {
            snapshots: tr.snapshots.iter().step_by(every).cloned().collect(),
            shifts: Vec::new(),
            ..tr.clone()
        };
        let mut w = create(dir, "snapshots.csv")?;
        thinned.write_snapshots_csv(&mut w)?;
        w.flush()?;
        if !tr.shifts.is_empty() {
            let mut w = create(dir, "shifts.csv")?;
            tr.write_shifts_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn multid_cmd(
    cfg: &ExperimentConfig,
    dir: &Path,
    opts: &RunOptions,
    summary: &mut RunSummary,
) -> Result<()> {
    let (model, profile, class) = prepare(cfg, summary)?;
    gate(&class, opts, summary)?;
    let b: &MultidBlock = cfg
        .multid
        .as_ref()
        .ok_or_else(|| Error::Config("missing [multid] block".into()))?;
    let seg = profile
        .segments
        .first()
        .cloned()
        .ok_or_else(|| Error::Config("profile has no segment".into()))?;
    let xs = seg
        .x_star
        .ok_or_else(|| Error::Config("multid runs need a characteristic front".into()))?;
    let u_star = seg.value(xs);
    let (a, k, period) = (b.amplitude, f64::from(b.mode), b.period);
    let psi0 = move |y: f64| a * (2.0 * std::f64::consts::PI * k * y / period).cos();
    let p = profile.clone();
    let u0 = move |x: f64, y: f64| {
        let [u, du, _] = p.eval(x - psi0(y));
        [u, du]
    };
    let s = &cfg.solver;
    let o = SplitOptions {
        x_domain: (s.domain[0], s.domain[1]),
        nx: s.n,
        ny: b.ny,
        period,
        dt: s.dt,
        output_dt: s.output_dt,
    };
    let run = evolve_planar_split(&model, &profile, &u0, s.horizon, &o)?;
    let wave = PlanarWave2D::new(
        &model,
        &profile,
        PeriodicCurve::new(run.psi_char.clone(), period),
    )?;
    let initial = run.levelset(0, u_star)?;
    let mut drift: f64 = 0.0;
    let mut dist = Vec::with_capacity(run.snapshots.len());
    let mut w = create(dir, "levelset.csv")?;
    writeln!(w, "t,y,x")?;
    for (i, snap) in run.snapshots.iter().enumerate() {
        let ls = run.levelset(i, u_star)?;
        drift = ls
            .iter()
            .zip(&initial)
            .map(|(a, b)| (a - b).abs())
            .fold(drift, f64::max);
        dist.push(run.distance_to(&wave, i));
        if i % cfg.output.snapshot_every == 0 {
            for (j, x) in ls.iter().enumerate() {
                writeln!(w, "{},{},{}", snap.t, o.eta(j), x)?;
            }
        }
    }
    w.flush()?;
    let t: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    let mut w = create(dir, "norms.csv")?;
    write_norms_csv(&mut w, &t, &[("distance".to_string(), dist.clone())])?;
    w.flush()?;
    let limit = cfg.measurement.levelset_cells * o.dx();
    summary
        .checks
        .push(Check::at_most("level-set drift", drift, limit));
    if b.amplitude == 0.0 {
        let peak = dist.iter().fold(0.0f64, |a, &d| a.max(d));
        summary.checks.push(Check::at_most(
            "distance stays zero",
            peak,
            cfg.measurement.max_deviation,
        ));
        return Ok(());
    }
    let window = cfg
        .measurement
        .window
        .map(|w| (w[0], w[1]))
        .unwrap_or_else(|| default_window(s.horizon));
    let fit = fit_decay_rate(&t, &dist, window)?;
    let predicted = decay_rate_prediction(&model, &profile, 0.0)
        .ok()
        .filter(|r| *r > RATE_FLOOR);
    let mut report = RateReport {
        weight: "distance".into(),
        kappa: 0.0,
        predicted,
        fitted: Some(fit.omega),
        r2: fit.r2,
        loglog_slope: Some(fit.loglog_slope),
        relative_error: None,
        points: fit.points,
    };
    if let Some(want) = predicted {
        let err = (fit.omega - want).abs() / want;
        report.relative_error = Some(err);
        summary.checks.push(Check::at_most(
            "distance: rate error",
            err,
            b.rate_tolerance,
        ));
    }
    summary.rates.push(report);
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesFit {
    pub weight: String,
    pub fit: DecayFit,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesReport {
    pub schema_version: u32,
    pub source: String,
    pub window: (f64, f64),
    pub fits: Vec<SeriesFit>,
}

/// Fits every series of a `t,norm,weight` CSV as written by the evolve command.
///
/// The window defaults to `[0.2 T, 0.9 T]` with `T` the last time in the file.
pub fn fit_series_csv(path: &Path, window: Option<(f64, f64)>) -> Result<SeriesReport> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.trim() != "t,norm,weight" {
        return Err(Error::Config(format!(
            "{}: expected header `t,norm,weight`",
            path.display()
        )));
    }
    let mut series: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Config(format!("{}: malformed row {}", path.display(), i + 2));
        let mut cols = line.splitn(3, ',');
        let t: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(bad)?;
        let n: f64 = cols
            .next()
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(bad)?;
        let label = cols.next().ok_or_else(bad)?.trim().to_string();
        match series.iter_mut().find(|s| s.0 == label) {
            Some(s) => {
                s.1.push(t);
                s.2.push(n);
            }
            None => series.push((label, vec![t], vec![n])),
        }
    }
    let horizon = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0, f64::max);
    let window = window.unwrap_or_else(|| default_window(horizon));
    let mut fits = Vec::with_capacity(series.len());
    for (weight, t, n) in series {
        let fit = fit_decay_rate(&t, &n, window)?;
        if fit.points < MIN_FIT_POINTS {
            return Err(Error::Config(format!(
                "series {weight} has {} points in the fit window, need {MIN_FIT_POINTS}",
                fit.points
            )));
        }
        fits.push(SeriesFit { weight, fit });
    }
    if fits.is_empty() {
        return Err(Error::EmptyWindow);
    }
    Ok(SeriesReport {
        schema_version: SCHEMA_VERSION,
        source: path.display().to_string(),
        window,
        fits,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteEntry {
    pub file: String,
    pub name: Option<String>,
    pub experiment: Option<Experiment>,
    pub passed: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub entries: Vec<SuiteEntry>,
    pub passed: bool,
}

/// Runs every `*.toml` in `configs` (sorted by file name) on `jobs` threads.
///
/// Each run writes to `out/<file stem>`; `out/suite.json` aggregates them.
pub fn run_suite(
    configs: &Path,
    out: &Path,
    jobs: usize,
    override_unstable: bool,
) -> Result<SuiteSummary> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(configs)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no *.toml configs in {}",
            configs.display()
        )));
    }
    files.sort();
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let entries: Vec<SuiteEntry> = pool.install(|| {
        use rayon::prelude::*;
        files
            .par_iter()
            .map(|f| suite_entry(f, out, override_unstable))
            .collect()
    });
    let summary = SuiteSummary {
        passed: entries.iter().all(|e| e.passed),
        entries,
    };
    write_json(out, "suite.json", &summary)?;
    Ok(summary)
}

fn suite_entry(file: &Path, out: &Path, override_unstable: bool) -> SuiteEntry {
    let stem = file
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let label = file
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let dir = out.join(&stem);
    let failed = |error: String| {
        let _ = std::fs::create_dir_all(&dir)
            .and_then(|_| std::fs::write(dir.join("FAILED"), format!("{error}\n")));
        SuiteEntry {
            file: label.clone(),
            name: None,
            experiment: None,
            passed: false,
            error: Some(error),
        }
    };
    let cfg = match ExperimentConfig::load(file) {
        Ok(c) => c,
        Err(e) => return failed(e.to_string()),
    };
    let opts = RunOptions {
        out: Some(dir.clone()),
        override_unstable,
    };
    match run_experiment(&cfg, cfg.experiment, &opts) {
        Ok(s) => SuiteEntry {
            file: label,
            name: Some(cfg.name.clone()),
            experiment: Some(cfg.experiment),
            passed: s.passed,
            error: s.error,
        },
        Err(e) => failed(e.to_string()),
    }
}

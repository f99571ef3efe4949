//! Batch driver: run configuration, sample ingestion, artifact emission and
//! the six subcommands behind the `drdamp` binary.
//!
//! Every stage draws its seed from the master seed through [`stage_seed`],
//! so stages can be re-run on their own and still reproduce their artifacts.
//! Artifacts are written only under the output directory, which is guarded
//! by a `.drdamp.lock` sentinel for the duration of a run.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dro::{self, AmbiguitySet, Method, TuningProblem, TuningReport, TuningSettings};
use crate::error::{Error, Result};
use crate::fmt_csv_f64;
use crate::pce;
use crate::sobol;
use crate::sslin::{self, ControllerParams, Interval};
use crate::testbed::{self, ScenarioMix, TestbedConfig, SPEED_OUTPUT, STABILIZER_INPUT};

/// Per-stage seed: the first eight bytes (little endian) of
/// `SHA-256(master.to_le_bytes() ‖ stage)`.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodSelection {
    Drdoc,
    So,
    Ro,
    #[default]
    All,
}

impl MethodSelection {
    pub fn methods(self) -> Vec<Method> {
        match self {
            MethodSelection::Drdoc => vec![Method::Drdoc],
            MethodSelection::So => vec![Method::So],
            MethodSelection::Ro => vec![Method::Ro],
            MethodSelection::All => vec![Method::Drdoc, Method::So, Method::Ro],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SobolSettings {
    pub n_base: usize,
    pub top_k: usize,
}

impl Default for SobolSettings {
    fn default() -> Self {
        Self { n_base: 512, top_k: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PceSettings {
    pub order: usize,
    pub design_size: usize,
    pub validation_size: usize,
    pub mc_samples: usize,
    pub bins: usize,
}

impl Default for PceSettings {
    fn default() -> Self {
        Self { order: 4, design_size: 40, validation_size: 1000, mc_samples: 100_000, bins: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSettings {
    pub count: usize,
    pub mix: ScenarioMix,
    /// Read scenarios from this `e_pu` CSV instead of generating them.
    pub path: Option<PathBuf>,
    /// Range used for the RO parameters compared in `validate`.
    pub ro_range: Interval,
}

impl Default for ScenarioSettings {
    fn default() -> Self {
        Self { count: 500, mix: ScenarioMix::default(), path: None, ro_range: Interval::new(-0.5, 0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub e: f64,
    pub horizon_s: f64,
    pub dt_s: f64,
}

impl Default for SimulateSettings {
    fn default() -> Self {
        Self { e: 0.0, horizon_s: 10.0, dt_s: 0.01 }
    }
}

/// Whole-run configuration (JSON). Relative paths resolve against the
/// directory of the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required unless given on the command line; no implicit entropy.
    pub seed: Option<u64>,
    pub testbed: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub method: MethodSelection,
    /// Controller analysed by `analyze`, `pce` and `simulate`, and the base
    /// for `sobol`.
    pub controller: ControllerParams,
    pub beta: f64,
    /// Overrides the calibrated radius.
    pub radius: Option<f64>,
    pub tuning: TuningSettings,
    pub ro_ranges: Vec<Interval>,
    pub sobol: SobolSettings,
    pub pce: PceSettings,
    pub scenarios: ScenarioSettings,
    pub simulate: SimulateSettings,
    /// Baseline compared by `validate` (no stabilizer by default).
    pub baseline: ControllerParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            testbed: None,
            samples: None,
            output_dir: PathBuf::from("out"),
            method: MethodSelection::All,
            controller: ControllerParams::default(),
            beta: 0.03,
            radius: None,
            tuning: TuningSettings::default(),
            ro_ranges: [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|w| Interval::new(-w, *w)).collect(),
            sobol: SobolSettings::default(),
            pce: PceSettings::default(),
            scenarios: ScenarioSettings::default(),
            simulate: SimulateSettings::default(),
            baseline: ControllerParams { k_m: 0.0, ..ControllerParams::default() },
        }
    }
}

impl RunConfig {
    /// Loads a config and resolves its relative paths.
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg: RunConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.testbed.as_mut().map(resolve);
        cfg.samples.as_mut().map(resolve);
        cfg.scenarios.path.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(Error::InvalidParameter("seed is required (config `seed` or --seed)".into()));
        }
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::InvalidParameter(format!("beta = {} must lie in (0, 0.5]", self.beta)));
        }
        if let Some(r) = self.radius {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("radius {r} must be finite and >= 0")));
            }
        }
        if self.pce.order == 0 || self.pce.design_size == 0 || self.pce.bins == 0 || self.pce.mc_samples == 0 {
            return Err(Error::InvalidParameter("pce settings must be positive".into()));
        }
        if self.sobol.n_base < 2 || self.sobol.top_k == 0 {
            return Err(Error::InvalidParameter("sobol n_base must be >= 2 and top_k >= 1".into()));
        }
        if self.scenarios.count == 0 && self.scenarios.path.is_none() {
            return Err(Error::InvalidParameter("scenario count must be positive".into()));
        }
        if !(self.simulate.dt_s > 0.0 && self.simulate.horizon_s > self.simulate.dt_s) {
            return Err(Error::InvalidParameter("simulate needs 0 < dt_s < horizon_s".into()));
        }
        self.controller.validate()?;
        self.baseline.validate()?;
        self.tuning.validate()
    }

    fn master_seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    pub fn load_testbed(&self) -> Result<TestbedConfig> {
        let cfg = match &self.testbed {
            Some(p) => TestbedConfig::from_json_file(p)?,
            None => TestbedConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Samples read by [`load_samples`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSamples {
    pub values: Vec<f64>,
    /// Rows moved onto the support boundary.
    pub clipped: usize,
}

/// Reads a single-column `e_pu` CSV and clips values to `support`.
pub fn load_samples(path: &Path, support: Interval) -> Result<LoadedSamples> {
    let raw = testbed::read_scenarios(path)?;
    if raw.is_empty() {
        return Err(Error::Empty(format!("{} has no sample rows", path.display())));
    }
    if let Some(k) = raw.iter().position(|v| !v.is_finite()) {
        return Err(Error::Malformed { line: k + 2, message: format!("non-finite value {}", raw[k]) });
    }
    let clipped = raw.iter().filter(|v| !support.contains(**v)).count();
    let values = raw.into_iter().map(|v| support.clamp(v)).collect();
    Ok(LoadedSamples { values, clipped })
}

/// Flat one-row-per-iteration CSV of a report's solver trace.
fn write_trace_csv(w: &mut impl Write, report: &TuningReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["iteration".to_string(), "phase".into()];
    header.extend(report.decision.iter().map(|p| p.name().to_string()));
    header.extend(["objective".into(), "feasible".into(), "step".into()]);
    out.write_record(&header)?;
    for row in &report.trace {
        let mut rec = vec![row.iteration.to_string(), row.phase.clone()];
        rec.extend(row.params.iter().map(|v| fmt_csv_f64(*v)));
        rec.push(row.objective.map(fmt_csv_f64).unwrap_or_default());
        rec.push(row.feasible.to_string());
        rec.push(fmt_csv_f64(row.step));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `report` as pretty JSON or as its flat trace CSV.
pub fn emit_report(report: &TuningReport, format: Format, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut f, report)?;
            f.write_all(b"\n")?;
        }
        Format::Csv => write_trace_csv(&mut f, report)?,
    }
    Ok(())
}

pub fn read_report(path: &Path) -> Result<TuningReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Analyze,
    Sobol,
    Pce,
    Tune,
    Validate,
    Simulate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Analyze => "analyze",
            Subcommand::Sobol => "sobol",
            Subcommand::Pce => "pce",
            Subcommand::Tune => "tune",
            Subcommand::Validate => "validate",
            Subcommand::Simulate => "simulate",
        }
    }
}

/// Output directory guarded by a sentinel file. Files registered through
/// [`OutputDir::path`] are removed unless [`OutputDir::commit`] is called.
pub struct OutputDir {
    dir: PathBuf,
    lock: PathBuf,
    written: Vec<PathBuf>,
    committed: bool,
}

impl OutputDir {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let lock = dir.join(".drdamp.lock");
        fs::OpenOptions::new().write(true).create_new(true).open(&lock).map_err(|e| {
            if e.kind() == std::io::ErrorKind::AlreadyExists {
                Error::Io(std::io::Error::new(
                    e.kind(),
                    format!("output directory {} is locked by another run ({})", dir.display(), lock.display()),
                ))
            } else {
                Error::Io(e)
            }
        })?;
        Ok(Self { dir: dir.to_path_buf(), lock, written: Vec::new(), committed: false })
    }

    /// Registers an artifact and returns its path.
    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for OutputDir {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
        let _ = fs::remove_file(&self.lock);
    }
}

/// Runs one subcommand and returns the artifacts written.
pub fn run(cmd: Subcommand, config: &RunConfig, format: Format) -> Result<Vec<PathBuf>> {
    config.validate()?;
    let testbed = config.load_testbed()?;
    let mut out = OutputDir::acquire(&config.output_dir)?;
    match cmd {
        Subcommand::Analyze => analyze(config, &testbed, format, &mut out)?,
        Subcommand::Sobol => run_sobol(config, &testbed, format, &mut out)?,
        Subcommand::Pce => run_pce(config, &testbed, format, &mut out)?,
        Subcommand::Tune => tune(config, &testbed, format, &mut out)?,
        Subcommand::Validate => validate(config, &testbed, format, &mut out)?,
        Subcommand::Simulate => simulate(config, &testbed, &mut out)?,
    }
    Ok(out.commit())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRow {
    pub index: usize,
    pub real: f64,
    pub imag: f64,
    pub damping: f64,
    pub frequency_hz: f64,
    pub oscillatory: bool,
    pub dominant_state: String,
    /// Residue of the stabilizer-input → speed-output channel (open loop).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residue: Option<[f64; 2]>,
    /// First-order shift predicted for the configured controller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted_shift: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub e: f64,
    pub controller: ControllerParams,
    /// Sorted by damping ratio; the critical mode comes first.
    pub open_loop: Vec<ModeRow>,
    pub participation: sslin::ParticipationMatrix,
    pub closed_loop: Vec<ModeRow>,
    pub critical_open_loop: usize,
    pub critical_closed_loop: ModeRow,
    pub warnings: Vec<String>,
}

fn mode_rows(
    model: &sslin::StateSpaceModel,
    modes: &sslin::ModeSet,
    controller: Option<&ControllerParams>,
) -> Result<Vec<ModeRow>> {
    let pf = sslin::participation_factors(modes);
    (0..modes.len())
        .map(|i| {
            let l = modes.eigenvalue(i);
            let (residue, predicted_shift) = match controller {
                Some(c) => {
                    let r = sslin::residue(model, modes, i, STABILIZER_INPUT, SPEED_OUTPUT)?;
                    let s = sslin::predict_shift(r, c, l)?;
                    (Some([r.re, r.im]), Some([s.re, s.im]))
                }
                None => (None, None),
            };
            Ok(ModeRow {
                index: i,
                real: l.re,
                imag: l.im,
                damping: modes.damping_ratios()[i],
                frequency_hz: modes.frequencies_hz()[i],
                oscillatory: modes.is_oscillatory(i),
                dominant_state: pf.labels[pf.dominant_state(i)].clone(),
                residue,
                predicted_shift,
            })
        })
        .collect()
}

fn analyze(config: &RunConfig, testbed: &TestbedConfig, format: Format, out: &mut OutputDir) -> Result<()> {
    let e = config.simulate.e;
    let plant = testbed::linearize(testbed, e)?;
    let modes = sslin::eigendecompose(&plant)?;
    let open_loop = mode_rows(&plant, &modes, Some(&config.controller))?;
    let critical_open_loop = *modes.oscillatory_modes().first().ok_or(Error::NoOscillatoryMode)?;

    let map = testbed::DampingMap::new(testbed, &config.controller)?;
    let closed = map.closed_loop(e)?;
    let cl_modes = sslin::eigendecompose(&closed)?;
    let closed_loop = mode_rows(&closed, &cl_modes, None)?;
    let crit = map.critical_mode(e)?;
    let critical_closed_loop = closed_loop
        .iter()
        .find(|r| r.real == crit.eigenvalue.re && r.imag == crit.eigenvalue.im)
        .cloned()
        .ok_or(Error::NoOscillatoryMode)?;
    let warnings = modes.warning().into_iter().chain(cl_modes.warning()).map(str::to_string).collect();
    let report = AnalysisReport {
        e,
        controller: config.controller,
        open_loop,
        participation: sslin::participation_factors(&modes),
        closed_loop,
        critical_open_loop,
        critical_closed_loop,
        warnings,
    };
    match format {
        Format::Json => write_json(&out.path("analysis.json"), &report)?,
        Format::Csv => {
            let mut w = csv::Writer::from_path(out.path("modes.csv"))?;
            w.write_record(["loop", "index", "real", "imag", "damping", "frequency_hz", "oscillatory", "dominant_state"])?;
            for (tag, rows) in [("open", &report.open_loop), ("closed", &report.closed_loop)] {
                for r in rows {
                    w.write_record([
                        tag.to_string(),
                        r.index.to_string(),
                        fmt_csv_f64(r.real),
                        fmt_csv_f64(r.imag),
                        fmt_csv_f64(r.damping),
                        fmt_csv_f64(r.frequency_hz),
                        r.oscillatory.to_string(),
                        r.dominant_state.clone(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn run_sobol(config: &RunConfig, testbed: &TestbedConfig, format: Format, out: &mut OutputDir) -> Result<()> {
    let seed = stage_seed(config.master_seed(), "sobol");
    let ranking = sobol::rank_parameters(
        testbed,
        &config.tuning.bounds,
        &config.controller,
        config.sobol.n_base,
        seed,
        config.sobol.top_k,
    )?;
    let mut w = csv::Writer::from_path(out.path("sobol_ranking.csv"))?;
    w.write_record(["rank", "param", "first_order", "total", "selected"])?;
    for (k, r) in ranking.ranked.iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            r.param.name().to_string(),
            fmt_csv_f64(r.first_order),
            fmt_csv_f64(r.total),
            ranking.selected.contains(&r.param).to_string(),
        ])?;
    }
    w.flush()?;
    if format == Format::Json {
        write_json(&out.path("sobol.json"), &ranking)?;
    }
    Ok(())
}

/// Empirical ambiguity set from the configured samples and radius.
pub fn ambiguity_set(config: &RunConfig, testbed: &TestbedConfig) -> Result<(AmbiguitySet, usize)> {
    let path = config
        .samples
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("config `samples` (e_pu CSV) is required".into()))?;
    let support = Interval::new(testbed.e_min, testbed.e_max);
    let loaded = load_samples(path, support)?;
    let set = match config.radius {
        Some(r) => {
            let d = if loaded.values.len() >= 2 { dro::calibrate_radius(&loaded.values, config.beta)?.d_const } else { 0.0 };
            AmbiguitySet::with_radius(loaded.values, r, config.beta, d, support)?
        }
        None => AmbiguitySet::calibrated(loaded.values, config.beta, support)?,
    };
    Ok((set, loaded.clipped))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PceArtifact {
    surrogate: pce::PceSurrogate,
    validation: pce::ErrorReport,
    mean: f64,
    variance: f64,
    pdf_mean: f64,
    pdf_std: f64,
    negative_mass: f64,
    clipped_samples: usize,
}

fn run_pce(config: &RunConfig, testbed: &TestbedConfig, format: Format, out: &mut OutputDir) -> Result<()> {
    let (set, clipped) = ambiguity_set(config, testbed)?;
    let map = testbed::DampingMap::new(testbed, &config.controller)?;
    let seed = stage_seed(config.master_seed(), "pce");
    let surrogate = dro::fit_damping_surrogate(&map, &set, config.pce.order, config.pce.design_size, seed)?;

    let (mu, sigma) = (set.mean(), set.std());
    let support = [Interval::new((set.support.lo - mu) / sigma, (set.support.hi - mu) / sigma)];
    let xi = pce::normal_design(config.pce.validation_size, 1, stage_seed(config.master_seed(), "pce.validation"), Some(&support));
    let raw: Vec<Vec<f64>> = xi.iter().map(|x| vec![mu + sigma * x[0]]).collect();
    let truth: Vec<f64> = raw.iter().map(|x| map.eval(x[0])).collect::<Result<_>>()?;
    let validation = pce::error_metrics(&surrogate, &raw, &truth)?;
    let pdf = pce::pdf_mc(&surrogate, config.pce.mc_samples, stage_seed(config.master_seed(), "pce.mc"), config.pce.bins)?;
    let (mean, variance) = surrogate.moments();
    let artifact = PceArtifact {
        surrogate,
        validation: validation.clone(),
        mean,
        variance,
        pdf_mean: pdf.mean,
        pdf_std: pdf.std,
        negative_mass: pdf.negative_mass,
        clipped_samples: clipped,
    };
    if format == Format::Json {
        write_json(&out.path("pce_surrogate.json"), &artifact)?;
    } else {
        let mut w = csv::Writer::from_path(out.path("pce_coefficients.csv"))?;
        w.write_record(["degree", "coefficient"])?;
        for (alpha, c) in artifact.surrogate.basis.indices.iter().zip(&artifact.surrogate.coefficients) {
            w.write_record([alpha[0].to_string(), fmt_csv_f64(*c)])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(out.path("pce_error.csv"))?;
        w.write_record(["rmse", "aae", "n_validation"])?;
        w.write_record([fmt_csv_f64(validation.rmse), fmt_csv_f64(validation.aae), validation.n_validation.to_string()])?;
        w.flush()?;
    }
    pce::write_pdf_csv(&out.path("pce_pdf.csv"), &pdf)?;
    pce::write_density_curve_csv(&out.path("pce_density.csv"), &pdf)?;
    Ok(())
}

fn tuning_problem(config: &RunConfig, testbed: &TestbedConfig) -> Result<TuningProblem> {
    let (ambiguity, _) = ambiguity_set(config, testbed)?;
    let settings = TuningSettings { seed: stage_seed(config.master_seed(), "tune.pce"), ..config.tuning.clone() };
    Ok(TuningProblem { settings, ambiguity })
}

/// Runs the selected solvers. RO yields one report per configured range.
pub fn tune_reports(config: &RunConfig, testbed: &TestbedConfig) -> Result<Vec<TuningReport>> {
    let problem = tuning_problem(config, testbed)?;
    let mut reports = Vec::new();
    for m in config.method.methods() {
        match m {
            Method::Drdoc => reports.push(dro::solve_drdoc(&problem, testbed)?),
            Method::So => reports.push(dro::solve_so(&problem, testbed)?),
            Method::Ro => {
                for r in &config.ro_ranges {
                    reports.push(dro::solve_ro(&problem.settings, testbed, *r)?);
                }
            }
        }
    }
    Ok(reports)
}

fn report_stem(r: &TuningReport) -> String {
    match r.range {
        Some(iv) if r.method == Method::Ro => format!("ro_{}_{}", iv.lo, iv.hi),
        _ => r.method.name().to_string(),
    }
}

fn tune(config: &RunConfig, testbed: &TestbedConfig, format: Format, out: &mut OutputDir) -> Result<()> {
    let reports = tune_reports(config, testbed)?;
    for r in &reports {
        let stem = report_stem(r);
        if format == Format::Json {
            emit_report(r, Format::Json, &out.path(&format!("report_{stem}.json")))?;
        }
        emit_report(r, Format::Csv, &out.path(&format!("trace_{stem}.csv")))?;
    }
    let mut w = csv::Writer::from_path(out.path("tune_summary.csv"))?;
    let opt = |v: Option<f64>| v.map(fmt_csv_f64).unwrap_or_default();
    let mut header: Vec<String> = ["method", "range_lo", "range_hi", "status"].map(String::from).to_vec();
    header.extend(sslin::Param::TUNABLE.iter().map(|p| p.name().to_string()));
    header.extend(
        ["objective", "worst_case_expected_damping", "nominal_expected_damping", "pce_mean", "min_damping", "nominal_critical_damping", "radius", "binding"]
            .map(String::from),
    );
    w.write_record(&header)?;
    for r in &reports {
        let mut rec = vec![
            r.method.name().to_string(),
            opt(r.range.map(|i| i.lo)),
            opt(r.range.map(|i| i.hi)),
            if r.status == dro::Status::Optimal { "optimal" } else { "infeasible" }.to_string(),
        ];
        rec.extend(sslin::Param::TUNABLE.iter().map(|p| opt(r.params.map(|c| c.get(*p)))));
        rec.extend([
            opt(r.objective),
            opt(r.worst_case_expected_damping),
            opt(r.nominal_expected_damping),
            opt(r.pce_mean),
            opt(r.min_damping),
            opt(r.nominal_critical_damping),
            fmt_csv_f64(r.radius),
            r.binding_constraints.join(";"),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationRow {
    pub label: String,
    pub params: ControllerParams,
    pub rate: f64,
    pub failed: usize,
}

/// Scenario set for `validate`: read from file or generated from the mixture.
pub fn scenarios(config: &RunConfig, testbed: &TestbedConfig) -> Result<Vec<f64>> {
    match &config.scenarios.path {
        Some(p) => {
            let s = load_samples(p, Interval::new(testbed.e_min, testbed.e_max))?;
            Ok(s.values)
        }
        None => testbed::scenario_generate(
            testbed,
            config.scenarios.count,
            config.scenarios.mix,
            stage_seed(config.master_seed(), "scenarios"),
        ),
    }
}

/// Rates of the DRDOC, SO and RO optima and of the baseline controller.
pub fn validation_rows(config: &RunConfig, testbed: &TestbedConfig, scenarios: &[f64]) -> Result<(Vec<ValidationRow>, Vec<dro::ScenarioValidation>)> {
    let problem = tuning_problem(config, testbed)?;
    let mut candidates: Vec<(String, Option<ControllerParams>)> = Vec::new();
    for m in config.method.methods() {
        let report = match m {
            Method::Drdoc => dro::solve_drdoc(&problem, testbed)?,
            Method::So => dro::solve_so(&problem, testbed)?,
            Method::Ro => dro::solve_ro(&problem.settings, testbed, config.scenarios.ro_range)?,
        };
        candidates.push((m.name().to_string(), report.params));
    }
    candidates.push(("baseline".into(), Some(config.baseline)));
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (label, params) in candidates {
        // an infeasible RO run has no parameters to validate
        let Some(params) = params else { continue };
        let v = dro::validate_scenarios(&params, testbed, scenarios)?;
        rows.push(ValidationRow { label, params, rate: v.rate, failed: v.failed.len() });
        details.push(v);
    }
    Ok((rows, details))
}

fn validate(config: &RunConfig, testbed: &TestbedConfig, format: Format, out: &mut OutputDir) -> Result<()> {
    let sc = scenarios(config, testbed)?;
    let (rows, details) = validation_rows(config, testbed, &sc)?;
    testbed::write_scenarios(&out.path("scenarios.csv"), &sc)?;
    let mut w = csv::Writer::from_path(out.path("validation.csv"))?;
    let mut header = vec!["label".to_string()];
    header.extend(sslin::Param::ALL.iter().map(|p| p.name().to_string()));
    header.extend(["rate".into(), "failed".into()]);
    w.write_record(&header)?;
    for r in &rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(sslin::Param::ALL.iter().map(|p| fmt_csv_f64(r.params.get(*p))));
        rec.extend([fmt_csv_f64(r.rate), r.failed.to_string()]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.path("scenario_damping.csv"))?;
    let mut header = vec!["e_pu".to_string()];
    header.extend(rows.iter().map(|r| r.label.clone()));
    w.write_record(&header)?;
    for (k, e) in sc.iter().enumerate() {
        let mut rec = vec![fmt_csv_f64(*e)];
        rec.extend(details.iter().map(|d| d.damping[k].map(fmt_csv_f64).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    if format == Format::Json {
        write_json(&out.path("validation.json"), &rows)?;
    }
    Ok(())
}

fn simulate(config: &RunConfig, testbed: &TestbedConfig, out: &mut OutputDir) -> Result<()> {
    let s = &config.simulate;
    let plant = testbed::linearize(testbed, s.e)?;
    let open = sslin::step_response(&plant, STABILIZER_INPUT, s.horizon_s, s.dt_s)?;
    let map = testbed::DampingMap::new(testbed, &config.controller)?;
    let closed = sslin::step_response(&map.closed_loop(s.e)?, STABILIZER_INPUT, s.horizon_s, s.dt_s)?;
    let mut w = csv::Writer::from_path(out.path("step_response.csv"))?;
    w.write_record(["time_s", "speed_open_loop", "speed_closed_loop"])?;
    for (k, t) in open.time.iter().enumerate() {
        w.write_record([
            fmt_csv_f64(*t),
            fmt_csv_f64(open.outputs[SPEED_OUTPUT][k]),
            fmt_csv_f64(closed.outputs[SPEED_OUTPUT][k]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

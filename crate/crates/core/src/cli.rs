//! Command implementations behind the `everrod` binary. Every command reads
//! its inputs, writes its outputs into a directory and returns a value the
//! caller can inspect; exit codes come from [`CliError::exit_code`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::calibration::{
    fit_alpha, fit_effective_modulus, fit_eversion_pressure_with, CalibrationError, EversionPressureModel,
    FitResult, PressureLaw,
};
use crate::designer::{design_bands, DesignError, DesignResult};
use crate::domain::DomainError;
use crate::io::plot::{plot_curves, PlotStyle, Series};
use crate::io::report::{RunReport, VariantSummary};
use crate::io::scenario::{DesignDocument, FitSetup, Scenario};
use crate::io::tables::{
    battery_csv, curve_csv, read_curve, read_eversion_points, read_measured_curve, state_csv,
};
use crate::io::{write_file, IoError};
use crate::lab::{run_battery, run_sweep, stiffness_index, stiffness_variants, LabError};
use crate::solver::{Equilibrium, LoadCase, LoadMode, RodModel, SolverError, SolverSettings};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Output(String),
    #[error("trend check failed: {0}")]
    Trend(String),
}

impl CliError {
    /// 2 parse/validation, 3 solver non-convergence, 4 infeasible design,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Infeasible(_) => 4,
            CliError::Output(_) | CliError::Trend(_) => 1,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::File { .. } => CliError::Output(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DomainError> for CliError {
    fn from(e: DomainError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Domain(_) | SolverError::InvalidLoad(_) | SolverError::InvalidSettings(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Solver { ref source, .. } | LabError::Setup(ref source) => match CliError::from(source.clone()) {
                CliError::Input(_) => CliError::Input(e.to_string()),
                _ => CliError::Solver(e.to_string()),
            },
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::Lab(l) => l.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<DesignError> for CliError {
    fn from(e: DesignError) -> Self {
        match e {
            DesignError::Infeasible(_) => CliError::Infeasible(e.to_string()),
            DesignError::Lab(l) => l.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Applies `key=value[,key=value...]` overrides to solver settings.
pub fn apply_overrides(settings: &mut SolverSettings, spec: &str) -> Result<()> {
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("settings override `{item}` is not key=value")))?;
        let bad = |e: String| CliError::Input(format!("settings override `{item}`: {e}"));
        match key.trim() {
            "nodes" => settings.nodes = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
            "max_iterations" => settings.max_iterations = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
            "moment_tol" => settings.moment_tol = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
            "displacement_tol" => {
                settings.displacement_tol = value.trim().parse().map_err(|e| bad(format!("{e}")))?
            }
            "max_force" => settings.max_force = value.trim().parse().map_err(|e| bad(format!("{e}")))?,
            other => return Err(bad(format!("unknown setting `{other}`"))),
        }
    }
    settings.validate()?;
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Output(format!("{}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
    Ok(write_file(&dir.join(name), bytes.as_ref())?)
}

fn summary(id: &str, spec: &crate::domain::RodSpec, eq: &Equilibrium, k: Option<f64>) -> VariantSummary {
    let mut placements: Vec<f64> = spec.bands().iter().map(|b| b.distance_from_tip).collect();
    placements.sort_by(f64::total_cmp);
    let tip = eq.state.tip();
    VariantSummary {
        id: id.to_string(),
        band_count: spec.bands().len(),
        placements_m: placements,
        reduction_ratio: spec.bands().first().map(|b| b.reduction_ratio),
        stiffness_index_n_per_m: k,
        terminal_force_n: eq.force,
        terminal_displacement_m: eq.displacement(),
        tip_position_m: Some([tip.x, tip.y, tip.z]),
        shooting_residual_n_m: Some(eq.residual),
    }
}

/// One solve or one sweep of the scenario's rod.
pub fn cmd_simulate(scenario_path: &Path, out: &Path, overrides: Option<&str>) -> Result<RunReport> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(scenario_path)?;
    let mut settings = scenario.settings;
    if let Some(o) = overrides {
        apply_overrides(&mut settings, o)?;
    }
    settings.validate()?;
    let rod = &scenario.rod;
    let mut report = RunReport::new("simulate", &bytes);

    let (eq, samples, k) = match scenario.protocol.sweep() {
        Some(protocol) if protocol.max_displacement == 0.0 => {
            let model = RodModel::new(rod, &scenario.material)?;
            let station = protocol.station.unwrap_or(rod.length());
            let load = LoadCase::force(station, protocol.direction.into(), 0.0)?;
            let eq = model.solve_point_load(&load, &settings, None)?;
            (eq, vec![(0.0, 0.0)], None)
        }
        Some(protocol) => {
            let sweep = run_sweep(rod, &scenario.material, &protocol, &settings, "scenario")?;
            let k = stiffness_index(&sweep.curve, protocol.max_displacement)?;
            (sweep.terminal, sweep.curve.samples().to_vec(), Some(k))
        }
        None => {
            let load = scenario
                .protocol
                .load_case(rod.length())?
                .expect("non-sweep protocols carry a load");
            let model = RodModel::new(rod, &scenario.material)?;
            let eq = match load.mode() {
                LoadMode::Force(_) => model.solve_point_load(&load, &settings, None)?,
                LoadMode::Displacement(_) => model.solve_imposed_displacement(&load, &settings, None)?,
            };
            let d = eq.displacement();
            if eq.force > 0.0 && d > 0.0 {
                (eq.clone(), vec![(0.0, 0.0), (d, eq.force)], Some(eq.force / d))
            } else {
                (eq, vec![(0.0, 0.0)], None)
            }
        }
    };

    ensure_dir(out)?;
    write(out, "state.csv", state_csv(&eq.state))?;
    write(out, "curve.csv", curve_csv(&samples))?;
    let svg = plot_curves(
        &[Series {
            label: "scenario",
            samples: &samples,
        }],
        &PlotStyle::default(),
    )?;
    write(out, "curve.svg", svg)?;
    report.results.push(summary("scenario", rod, &eq, k));
    report.wall_clock_s = started.elapsed().as_secs_f64();
    write(out, "report.json", report.to_json())?;
    write(out, "timing.json", report.timing_json())?;
    Ok(report)
}

/// Sweeps every battery variant; the three stiffness experiments unless the
/// scenario lists its own variants.
pub fn cmd_battery(scenario_path: &Path, out: &Path, check_trends: bool, overrides: Option<&str>) -> Result<RunReport> {
    let started = Instant::now();
    let (scenario, bytes) = Scenario::load(scenario_path)?;
    let mut settings = scenario.settings;
    if let Some(o) = overrides {
        apply_overrides(&mut settings, o)?;
    }
    settings.validate()?;
    let protocol = scenario
        .protocol
        .sweep()
        .ok_or_else(|| CliError::Input("battery scenarios need a `sweep` protocol".into()))?;
    let variants = scenario
        .battery
        .as_ref()
        .and_then(|b| b.variants.clone())
        .unwrap_or_else(stiffness_variants);
    let base = scenario.rod.with_bands(Vec::new())?;
    let battery = run_battery(&base, variants, &scenario.material, &protocol, &settings)?;

    let mut report = RunReport::new("battery", &bytes);
    ensure_dir(out)?;
    let curves_dir = out.join("curves");
    ensure_dir(&curves_dir)?;
    write(out, "battery.csv", battery_csv(&battery))?;
    for r in &battery.results {
        write(&curves_dir, &format!("{}.csv", r.id), curve_csv(r.stiffness.curve.samples()))?;
    }
    let series: Vec<Series> = battery
        .results
        .iter()
        .map(|r| Series {
            label: &r.id,
            samples: r.stiffness.curve.samples(),
        })
        .collect();
    write(out, "curves.svg", plot_curves(&series, &PlotStyle::default())?)?;

    for r in &battery.results {
        report.results.push(VariantSummary {
            id: r.id.clone(),
            band_count: r.band_count,
            placements_m: r.placements.clone(),
            reduction_ratio: r.reduction_ratio,
            stiffness_index_n_per_m: Some(r.stiffness_index()),
            terminal_force_n: r.terminal_force(),
            terminal_displacement_m: r.stiffness.curve.max_displacement(),
            tip_position_m: None,
            shooting_residual_n_m: None,
        });
    }
    report.wall_clock_s = started.elapsed().as_secs_f64();
    write(out, "report.json", report.to_json())?;
    write(out, "timing.json", report.timing_json())?;

    if check_trends {
        let violations = battery.trend_violations();
        if !violations.is_empty() {
            let text: Vec<String> = violations
                .iter()
                .map(|v| format!("{:?}: k({})={} !> k({})={}", v.experiment, v.earlier, v.k_earlier, v.later, v.k_later))
                .collect();
            return Err(CliError::Trend(text.join("; ")));
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FitKind {
    Modulus,
    Alpha,
    Eversion,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EversionFitReport {
    pub model: EversionPressureModel,
    /// `(reduction_ratio, measured kPa, predicted kPa)`.
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitOutput {
    Modulus(FitResult),
    Alpha(FitResult),
    Eversion(EversionFitReport),
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Input(format!("no CSV files in {}", dir.display())));
    }
    Ok(files)
}

/// Dispatches to the calibration routines and writes `fit.json`.
pub fn cmd_fit(data: &Path, kind: FitKind, out: &Path, law: PressureLaw, overrides: Option<&str>) -> Result<FitOutput> {
    let output = match kind {
        FitKind::Eversion => {
            let files = if data.is_dir() { csv_files(data)? } else { vec![data.to_path_buf()] };
            let mut points = Vec::new();
            for f in &files {
                points.extend(read_eversion_points(f)?);
            }
            let model = fit_eversion_pressure_with(&points, law)?;
            let points = points
                .iter()
                .map(|&(r, p)| (r, p, model.pressure_kpa(r)))
                .collect();
            FitOutput::Eversion(EversionFitReport { model, points })
        }
        FitKind::Modulus | FitKind::Alpha => {
            if !data.is_dir() {
                return Err(CliError::Input(format!(
                    "{} must be a directory holding setup.json and curve CSVs",
                    data.display()
                )));
            }
            let setup = FitSetup::load(&data.join("setup.json"))?;
            let mut settings = setup.settings;
            if let Some(o) = overrides {
                apply_overrides(&mut settings, o)?;
            }
            let pressure = setup.rod.pressure() / 1e3;
            let curves = csv_files(data)?
                .iter()
                .map(|f| read_measured_curve(f, pressure))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if kind == FitKind::Modulus {
                FitOutput::Modulus(fit_effective_modulus(&curves, &setup.rod, &setup.material, &settings, &setup.fit)?)
            } else {
                FitOutput::Alpha(fit_alpha(&curves, &setup.rod, &setup.material, &settings, &setup.fit)?)
            }
        }
    };
    ensure_dir(out)?;
    let mut json = serde_json::to_string_pretty(&output).expect("fit output serializes");
    json.push('\n');
    write(out, "fit.json", json)?;
    Ok(output)
}

/// Runs the band designer and writes `design.json` and `fabrication.txt`.
pub fn cmd_design(problem_path: &Path, out: &Path, overrides: Option<&str>) -> Result<DesignResult> {
    let (doc, _) = DesignDocument::load(problem_path)?;
    let mut settings = doc.settings;
    if let Some(o) = overrides {
        apply_overrides(&mut settings, o)?;
    }
    let result = design_bands(&doc.problem, &doc.material, &settings)?;
    ensure_dir(out)?;
    let mut json = serde_json::to_string_pretty(&result).expect("design serializes");
    json.push('\n');
    write(out, "design.json", json)?;
    write(out, "fabrication.txt", result.fabrication.to_text())?;
    Ok(result)
}

/// Plots `displacement_m,force_n` CSV files into one SVG.
pub fn cmd_plot(inputs: &[PathBuf], out: &Path, title: Option<&str>) -> Result<String> {
    let curves = inputs
        .iter()
        .map(|p| read_curve(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let labels: Vec<String> = inputs
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let series: Vec<Series> = curves
        .iter()
        .zip(&labels)
        .map(|(c, l)| Series { label: l, samples: c })
        .collect();
    let mut style = PlotStyle::default();
    if let Some(t) = title {
        style.title = t.to_string();
    }
    let svg = plot_curves(&series, &style)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_file(out, svg.as_bytes())?;
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse() {
        let mut s = SolverSettings::default();
        apply_overrides(&mut s, "nodes=300, moment_tol=1e-8").unwrap();
        assert_eq!(s.nodes, 300);
        assert_eq!(s.moment_tol, 1e-8);
        assert!(apply_overrides(&mut s, "nodes=10").is_err());
        assert!(apply_overrides(&mut s, "colour=1").is_err());
        assert!(apply_overrides(&mut s, "nodes").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(DesignError::Infeasible("x".into())).exit_code(), 4);
        let no_eq = SolverError::NoEquilibrium { iterations: 3, best_residual: 1.0 };
        assert_eq!(CliError::from(no_eq.clone()).exit_code(), 3);
        assert_eq!(CliError::from(LabError::Solver { displacement: 0.01, source: no_eq }).exit_code(), 3);
        assert_eq!(CliError::from(SolverError::InvalidLoad("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(CalibrationError::Data("x".into())).exit_code(), 2);
    }
}

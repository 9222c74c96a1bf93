//! Simulated characterization: displacement-controlled sweeps, the secant
//! stiffness index and the band count / location / reduction batteries.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BandSpec, DomainError, MaterialModel, RodSpec};
use crate::solver::{Equilibrium, LoadCase, RodModel, SolverError, SolverSettings, WarmStart};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("solver failed at displacement {displacement} m: {source}")]
    Solver {
        displacement: f64,
        #[source]
        source: SolverError,
    },
    #[error(transparent)]
    Setup(SolverError),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("stroke {stroke} m outside curve support [0, {max}] m")]
    Range { stroke: f64, max: f64 },
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    pub label: String,
    pub direction: [f64; 3],
    pub pressure_kpa: f64,
}

/// Sampled `(displacement, force)` pairs starting at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceDisplacementCurve {
    samples: Vec<(f64, f64)>,
    pub metadata: CurveMetadata,
}

impl ForceDisplacementCurve {
    pub fn new(samples: Vec<(f64, f64)>, metadata: CurveMetadata) -> Result<Self> {
        let bad = |m: String| Err(LabError::InvalidCurve(m));
        match samples.first() {
            None => return bad("curve has no samples".into()),
            Some(&(x, f)) if x != 0.0 || f != 0.0 => {
                return bad(format!("curve must start at (0, 0), got ({x}, {f})"))
            }
            _ => {}
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return bad("displacements must be strictly increasing".into());
        }
        if samples.iter().any(|&(x, f)| !(x.is_finite() && f.is_finite() && f >= 0.0)) {
            return bad("forces must be finite and non-negative".into());
        }
        Ok(Self { samples, metadata })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn max_displacement(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }

    pub fn terminal_force(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.1)
    }

    /// Force at displacement `x`, linear between samples.
    pub fn force_at(&self, x: f64) -> Option<f64> {
        let s = &self.samples;
        if !(x >= 0.0 && x <= self.max_displacement()) {
            return None;
        }
        let i = s.partition_point(|p| p.0 < x);
        if s[i].0 == x {
            return Some(s[i].1);
        }
        let (a, b) = (s[i - 1], s[i]);
        Some(a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0))
    }
}

/// Secant stiffness `(F(Δx) - F(0)) / Δx`.
pub fn stiffness_index(curve: &ForceDisplacementCurve, stroke: f64) -> Result<f64> {
    if !(stroke > 0.0) {
        return Err(LabError::Range {
            stroke,
            max: curve.max_displacement(),
        });
    }
    let f = curve.force_at(stroke).ok_or(LabError::Range {
        stroke,
        max: curve.max_displacement(),
    })?;
    let f0 = curve.samples[0].1;
    Ok((f - f0) / stroke)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StiffnessResult {
    pub curve: ForceDisplacementCurve,
    pub stiffness_index: f64,
    pub stroke: f64,
}

/// Displacement-controlled test: lateral push of one station up to a stroke.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepProtocol {
    pub direction: [f64; 3],
    #[serde(rename = "max_displacement_m")]
    pub max_displacement: f64,
    pub samples: usize,
    /// Load station (m); the tip when absent.
    #[serde(rename = "station_m", default, skip_serializing_if = "Option::is_none")]
    pub station: Option<f64>,
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            direction: [1.0, 0.0, 0.0],
            max_displacement: 0.02,
            samples: 11,
            station: None,
        }
    }
}

impl SweepProtocol {
    fn validate(&self) -> Result<()> {
        if !(self.max_displacement > 0.0 && self.max_displacement.is_finite()) {
            return Err(LabError::InvalidProtocol(format!(
                "stroke must be positive, got {}",
                self.max_displacement
            )));
        }
        if self.samples < 2 {
            return Err(LabError::InvalidProtocol(format!(
                "need at least 2 samples, got {}",
                self.samples
            )));
        }
        Ok(())
    }

    pub fn displacements(&self) -> Vec<f64> {
        let last = self.samples - 1;
        (0..self.samples)
            .map(|i| {
                if i == last {
                    self.max_displacement
                } else {
                    self.max_displacement * i as f64 / last as f64
                }
            })
            .collect()
    }
}

/// Solves displacement-controlled cases at each of `targets` in order,
/// warm-starting every solve from the previous one. Returns the equilibria.
pub fn solve_displacements(
    model: &RodModel,
    station: f64,
    direction: Vector3<f64>,
    targets: &[f64],
    settings: &SolverSettings,
) -> Result<Vec<Equilibrium>> {
    let mut out: Vec<Equilibrium> = Vec::with_capacity(targets.len());
    let mut warm: Option<WarmStart> = None;
    for &x in targets {
        let wrap = |source| LabError::Solver {
            displacement: x,
            source,
        };
        let load = LoadCase::displacement(station, direction, x).map_err(wrap)?;
        let eq = model
            .solve_imposed_displacement(&load, settings, warm.as_ref())
            .map_err(wrap)?;
        if eq.force > 0.0 {
            warm = Some(WarmStart::from(&eq));
        }
        out.push(eq);
    }
    Ok(out)
}

/// A sweep's curve plus the equilibrium at the end of the stroke.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub curve: ForceDisplacementCurve,
    pub terminal: Equilibrium,
}

pub fn run_sweep(
    spec: &RodSpec,
    mat: &MaterialModel,
    protocol: &SweepProtocol,
    settings: &SolverSettings,
    label: &str,
) -> Result<Sweep> {
    protocol.validate()?;
    let model = RodModel::new(spec, mat).map_err(LabError::Setup)?;
    let station = protocol.station.unwrap_or(spec.length());
    let direction = Vector3::from(protocol.direction);
    let xs = protocol.displacements();
    let mut eqs = solve_displacements(&model, station, direction, &xs, settings)?;
    let unit = direction.normalize();
    let samples = xs
        .iter()
        .zip(&eqs)
        .map(|(&x, eq)| (x, if x == 0.0 { 0.0 } else { eq.force }))
        .collect();
    let curve = ForceDisplacementCurve::new(
        samples,
        CurveMetadata {
            label: label.to_string(),
            direction: [unit.x, unit.y, unit.z],
            pressure_kpa: spec.pressure() / 1e3,
        },
    )?;
    Ok(Sweep {
        curve,
        terminal: eqs.pop().expect("at least two samples"),
    })
}

/// `n_samples` evenly spaced displacement-controlled solves on `[0, max]`.
pub fn sweep_force_displacement(
    spec: &RodSpec,
    mat: &MaterialModel,
    direction: Vector3<f64>,
    max_displacement: f64,
    n_samples: usize,
    settings: &SolverSettings,
) -> Result<ForceDisplacementCurve> {
    let protocol = SweepProtocol {
        direction: [direction.x, direction.y, direction.z],
        max_displacement,
        samples: n_samples,
        station: None,
    };
    Ok(run_sweep(spec, mat, &protocol, settings, "sweep")?.curve)
}

/// Which characterization series a prototype belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// 0 to 4 half-diameter bands at 50 mm spacing from the tip.
    BandCount,
    /// One half-diameter band 30 to 100 mm from the tip.
    BandLocation,
    /// One band 100 mm from the tip, 10 to 50 % reduction.
    ReductionRatio,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [
        Experiment::BandCount,
        Experiment::BandLocation,
        Experiment::ReductionRatio,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub id: String,
    pub bands: Vec<BandSpec>,
    /// `(experiment, row)` memberships; empty for user-defined variants.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<(Experiment, usize)>,
}

fn variant_id(bands: &[BandSpec]) -> String {
    if bands.is_empty() {
        return "base".into();
    }
    let rho = bands[0].reduction_ratio;
    let mut places: Vec<f64> = bands.iter().map(|b| b.distance_from_tip).collect();
    places.sort_by(f64::total_cmp);
    let places: Vec<String> = places
        .iter()
        .map(|d| format!("{}", (d * 1e3).round() as i64))
        .collect();
    format!("r{}@{}", (rho * 100.0).round() as i64, places.join("+"))
}

/// The distinct prototypes of the three stiffness experiments, in first-seen
/// order. Shared prototypes (the unbanded robot, the single 50 % band at 50 mm
/// and at 100 mm) appear once with several row memberships.
pub fn stiffness_variants() -> Vec<Variant> {
    let mut rows: Vec<(Experiment, Vec<BandSpec>)> = Vec::new();
    for count in 0..=4 {
        let bands = (1..=count).map(|i| BandSpec::new(0.05 * i as f64, 0.5)).collect();
        rows.push((Experiment::BandCount, bands));
    }
    rows.push((Experiment::BandLocation, vec![]));
    for mm in (30..=100).step_by(10) {
        rows.push((Experiment::BandLocation, vec![BandSpec::new(mm as f64 * 1e-3, 0.5)]));
    }
    rows.push((Experiment::ReductionRatio, vec![]));
    for pct in 1..=5 {
        rows.push((Experiment::ReductionRatio, vec![BandSpec::new(0.1, pct as f64 / 10.0)]));
    }

    let mut variants: Vec<Variant> = Vec::new();
    let mut row_index = std::collections::HashMap::new();
    for (exp, bands) in rows {
        let row = {
            let r = row_index.entry(exp).or_insert(0usize);
            *r += 1;
            *r - 1
        };
        let id = variant_id(&bands);
        match variants.iter_mut().find(|v| v.id == id) {
            Some(v) => v.rows.push((exp, row)),
            None => variants.push(Variant {
                id,
                bands,
                rows: vec![(exp, row)],
            }),
        }
    }
    variants
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantResult {
    pub id: String,
    pub band_count: usize,
    /// Band distances from the tip (m), ascending.
    pub placements: Vec<f64>,
    /// Shared reduction ratio; `None` for the unbanded robot.
    pub reduction_ratio: Option<f64>,
    pub stiffness: StiffnessResult,
}

impl VariantResult {
    pub fn stiffness_index(&self) -> f64 {
        self.stiffness.stiffness_index
    }

    pub fn terminal_force(&self) -> f64 {
        self.stiffness.curve.terminal_force()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentBattery {
    pub base: RodSpec,
    pub protocol: SweepProtocol,
    pub variants: Vec<Variant>,
    pub results: Vec<VariantResult>,
}

/// A strict ordering that failed to hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendViolation {
    pub experiment: Experiment,
    pub earlier: String,
    pub later: String,
    pub k_earlier: f64,
    pub k_later: f64,
}

impl ExperimentBattery {
    /// Results of one experiment in row order.
    pub fn experiment_rows(&self, experiment: Experiment) -> Vec<&VariantResult> {
        let mut rows: Vec<(usize, &VariantResult)> = self
            .variants
            .iter()
            .zip(&self.results)
            .flat_map(|(v, r)| {
                v.rows
                    .iter()
                    .filter(move |(e, _)| *e == experiment)
                    .map(move |(_, row)| (*row, r))
            })
            .collect();
        rows.sort_by_key(|(row, _)| *row);
        rows.into_iter().map(|(_, r)| r).collect()
    }

    /// Every experiment's stiffness index must strictly decrease down its rows.
    pub fn trend_violations(&self) -> Vec<TrendViolation> {
        let mut out = Vec::new();
        for exp in Experiment::ALL {
            let rows = self.experiment_rows(exp);
            for w in rows.windows(2) {
                if !(w[1].stiffness_index() < w[0].stiffness_index()) {
                    out.push(TrendViolation {
                        experiment: exp,
                        earlier: w[0].id.clone(),
                        later: w[1].id.clone(),
                        k_earlier: w[0].stiffness_index(),
                        k_later: w[1].stiffness_index(),
                    });
                }
            }
        }
        out
    }
}

/// Sweeps every variant of `base` (in parallel on the current rayon pool).
pub fn run_battery(
    base: &RodSpec,
    variants: Vec<Variant>,
    mat: &MaterialModel,
    protocol: &SweepProtocol,
    settings: &SolverSettings,
) -> Result<ExperimentBattery> {
    protocol.validate()?;
    let specs: Vec<RodSpec> = variants
        .iter()
        .map(|v| base.with_bands(v.bands.clone()))
        .collect::<std::result::Result<_, _>>()?;
    let results = variants
        .par_iter()
        .zip(specs.par_iter())
        .map(|(v, spec)| {
            let sweep = run_sweep(spec, mat, protocol, settings, &v.id)?;
            let k = stiffness_index(&sweep.curve, protocol.max_displacement)?;
            log::info!("variant {}: k = {k:.6} N/m", v.id);
            let mut placements: Vec<f64> = spec.bands().iter().map(|b| b.distance_from_tip).collect();
            placements.sort_by(f64::total_cmp);
            Ok(VariantResult {
                id: v.id.clone(),
                band_count: spec.bands().len(),
                placements,
                reduction_ratio: spec.bands().first().map(|b| b.reduction_ratio),
                stiffness: StiffnessResult {
                    curve: sweep.curve,
                    stiffness_index: k,
                    stroke: protocol.max_displacement,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentBattery {
        base: base.clone(),
        protocol: *protocol,
        variants,
        results,
    })
}

/// The three stiffness experiments on the reference 600 mm robot, pushed
/// 20 mm sideways at the tip.
pub fn run_stiffness_battery(mat: &MaterialModel, settings: &SolverSettings) -> Result<ExperimentBattery> {
    let base = RodSpec::reference(vec![])?;
    run_battery(&base, stiffness_variants(), mat, &SweepProtocol::default(), settings)
}

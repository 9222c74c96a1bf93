//! Band-layout search under an eversion-pressure budget, and the flat-sheet
//! fabrication dimensions of the chosen layout.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::EversionPressureModel;
use crate::domain::{BandSpec, DomainError, MaterialModel, RodSpec, DEFAULT_BAND_WIDTH};
use crate::lab::{run_sweep, stiffness_index, LabError, SweepProtocol};
use crate::solver::SolverSettings;

/// Above this many candidate layouts the search switches to greedy insertion.
pub const EXHAUSTIVE_LIMIT: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("invalid design problem: {0}")]
    InvalidProblem(String),
    #[error("no feasible layout: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

pub type Result<T> = std::result::Result<T, DesignError>;

fn default_protocol() -> SweepProtocol {
    SweepProtocol {
        samples: 2,
        ..SweepProtocol::default()
    }
}

fn default_width() -> f64 {
    DEFAULT_BAND_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignProblem {
    /// Band-free robot the layout is added to.
    pub base: RodSpec,
    pub max_bands: usize,
    /// Candidate band-center distances from the tip (m).
    #[serde(rename = "placements_m")]
    pub placements: Vec<f64>,
    /// Minimum center-to-center spacing between bands (m).
    #[serde(rename = "min_spacing_m")]
    pub min_spacing: f64,
    pub reduction_ratios: Vec<f64>,
    /// Maximum allowed eversion pressure; `None` means unconstrained.
    #[serde(default)]
    pub pressure_budget_kpa: Option<f64>,
    pub eversion_model: EversionPressureModel,
    #[serde(rename = "band_width_m", default = "default_width")]
    pub band_width: f64,
    #[serde(default = "default_protocol")]
    pub protocol: SweepProtocol,
}

impl DesignProblem {
    fn validate(&self, mat: &MaterialModel) -> Result<()> {
        let bad = |m: String| Err(DesignError::InvalidProblem(m));
        if !self.base.bands().is_empty() {
            return bad("base robot must be band-free".into());
        }
        if self.band_width <= 0.0 {
            return bad("band width must be positive".into());
        }
        if self.min_spacing < self.band_width {
            return bad(format!(
                "minimum spacing {} m is below the band width {} m",
                self.min_spacing, self.band_width
            ));
        }
        let l = self.base.length();
        for &d in &self.placements {
            if !(d - 0.5 * self.band_width >= 0.0 && d + 0.5 * self.band_width <= l) {
                return bad(format!("placement {d} m does not fit on a {l} m robot"));
            }
        }
        let hull = mat.max_calibrated_ratio();
        for &r in &self.reduction_ratios {
            if !(r > 0.0 && r <= hull) {
                return bad(format!(
                    "reduction ratio {r} outside the calibrated range (0, {hull}]"
                ));
            }
        }
        if let Some(b) = self.pressure_budget_kpa {
            if !(b > 0.0) {
                return bad(format!("pressure budget must be positive, got {b}"));
            }
        }
        Ok(())
    }

    fn budget(&self) -> f64 {
        self.pressure_budget_kpa.unwrap_or(f64::INFINITY)
    }

    /// Eversion pressure gated by the tightest band of the layout.
    pub fn layout_pressure(&self, layout: &Layout) -> f64 {
        self.eversion_model.pressure_kpa(layout.reduction_ratio.unwrap_or(0.0))
    }
}

/// Candidate layout: placements (m from tip, ordered base-first) sharing one ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout {
    pub placements: Vec<f64>,
    pub reduction_ratio: Option<f64>,
}

impl Layout {
    fn empty() -> Self {
        Self {
            placements: Vec::new(),
            reduction_ratio: None,
        }
    }

    pub fn bands(&self, width: f64) -> Vec<BandSpec> {
        match self.reduction_ratio {
            None => Vec::new(),
            Some(r) => self
                .placements
                .iter()
                .map(|&d| BandSpec::new(d, r).with_width(width))
                .collect(),
        }
    }

    /// Deterministic preference among equally stiff layouts: fewer bands,
    /// then smaller ratio, then placements nearer the base.
    fn tie_break(&self, other: &Self) -> Ordering {
        self.placements
            .len()
            .cmp(&other.placements.len())
            .then_with(|| {
                self.reduction_ratio
                    .unwrap_or(0.0)
                    .total_cmp(&other.reduction_ratio.unwrap_or(0.0))
            })
            .then_with(|| {
                for (a, b) in self.placements.iter().zip(&other.placements) {
                    match b.total_cmp(a) {
                        Ordering::Equal => continue,
                        o => return o,
                    }
                }
                Ordering::Equal
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Strip {
    pub distance_from_tip_m: f64,
    pub reduction_ratio: f64,
    pub length_m: f64,
    pub width_m: f64,
}

/// Flat-sheet cutting dimensions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FabricationSheet {
    pub sheet_width_m: f64,
    pub sheet_length_m: f64,
    pub strips: Vec<Strip>,
}

impl FabricationSheet {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "tube sheet: {:.1} mm x {:.1} mm", self.sheet_width_m * 1e3, self.sheet_length_m * 1e3);
        if self.strips.is_empty() {
            let _ = writeln!(s, "band strips: none");
        }
        for (i, st) in self.strips.iter().enumerate() {
            let _ = writeln!(
                s,
                "band {}: {:.1} mm from tip, {:.0}% reduction, strip {:.1} mm x {:.1} mm",
                i + 1,
                st.distance_from_tip_m * 1e3,
                st.reduction_ratio * 100.0,
                st.length_m * 1e3,
                st.width_m * 1e3
            );
        }
        s
    }
}

/// Sheet width is the tube circumference; each band strip is the
/// circumference of the constricted section.
pub fn fabrication_sheet(bands: &[BandSpec], spec: &RodSpec) -> FabricationSheet {
    let diameter = 2.0 * spec.base_radius();
    let mut strips: Vec<Strip> = bands
        .iter()
        .map(|b| Strip {
            distance_from_tip_m: b.distance_from_tip,
            reduction_ratio: b.reduction_ratio,
            length_m: PI * diameter * (1.0 - b.reduction_ratio),
            width_m: b.width,
        })
        .collect();
    strips.sort_by(|a, b| a.distance_from_tip_m.total_cmp(&b.distance_from_tip_m));
    FabricationSheet {
        sheet_width_m: PI * diameter,
        sheet_length_m: spec.length(),
        strips,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluated {
    pub layout: Layout,
    pub stiffness_index: f64,
    pub eversion_pressure_kpa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignResult {
    pub bands: Vec<BandSpec>,
    pub stiffness_index: f64,
    pub eversion_pressure_kpa: f64,
    pub fabrication: FabricationSheet,
    pub search: SearchMode,
    /// Every feasible layout that was simulated, in canonical order.
    pub evaluated: Vec<Evaluated>,
}

/// Placements sorted base-first (largest distance from tip first).
fn sorted_placements(problem: &DesignProblem) -> Vec<f64> {
    let mut p = problem.placements.clone();
    p.sort_by(|a, b| b.total_cmp(a));
    p.dedup();
    p
}

/// All spacing-compatible subsets of size `count`, lexicographic in the
/// base-first placement order.
fn spaced_subsets(places: &[f64], count: usize, spacing: f64) -> Vec<Vec<f64>> {
    fn rec(places: &[f64], start: usize, count: usize, spacing: f64, cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == count {
            out.push(cur.clone());
            return;
        }
        for i in start..places.len() {
            if let Some(&last) = cur.last() {
                if last - places[i] < spacing - 1e-12 {
                    continue;
                }
            }
            cur.push(places[i]);
            rec(places, i + 1, count, spacing, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(places, 0, count, spacing, &mut Vec::new(), &mut out);
    out
}

fn feasible_ratios(problem: &DesignProblem) -> Vec<f64> {
    let mut r: Vec<f64> = problem
        .reduction_ratios
        .iter()
        .copied()
        .filter(|&r| problem.eversion_model.pressure_kpa(r) <= problem.budget())
        .collect();
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// Every feasible layout in canonical order: band count, then ratio, then
/// base-first lexicographic placements.
pub fn enumerate_layouts(problem: &DesignProblem) -> Vec<Layout> {
    let places = sorted_placements(problem);
    let ratios = feasible_ratios(problem);
    let mut out = vec![Layout::empty()];
    for count in 1..=problem.max_bands.min(places.len()) {
        for &r in &ratios {
            for subset in spaced_subsets(&places, count, problem.min_spacing) {
                out.push(Layout {
                    placements: subset,
                    reduction_ratio: Some(r),
                });
            }
        }
    }
    out
}

fn evaluate(
    layouts: &[Layout],
    problem: &DesignProblem,
    mat: &MaterialModel,
    settings: &SolverSettings,
) -> Result<Vec<Evaluated>> {
    Ok(layouts
        .par_iter()
        .map(|layout| {
            let spec = problem.base.with_bands(layout.bands(problem.band_width))?;
            let sweep = run_sweep(&spec, mat, &problem.protocol, settings, "candidate")?;
            let k = stiffness_index(&sweep.curve, problem.protocol.max_displacement)?;
            Ok(Evaluated {
                layout: layout.clone(),
                stiffness_index: k,
                eversion_pressure_kpa: problem.layout_pressure(layout),
            })
        })
        .collect::<std::result::Result<Vec<_>, LabError>>()?)
}

fn better(a: &Evaluated, b: &Evaluated) -> bool {
    match a.stiffness_index.total_cmp(&b.stiffness_index) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a.layout.tie_break(&b.layout) == Ordering::Less,
    }
}

fn select(evaluated: &[Evaluated]) -> &Evaluated {
    let mut best = &evaluated[0];
    for e in &evaluated[1..] {
        if better(e, best) {
            best = e;
        }
    }
    best
}

/// Greedy insertion per feasible ratio: keep adding the band that lowers
/// the stiffness index most until the count limit or no improvement.
fn greedy(
    problem: &DesignProblem,
    mat: &MaterialModel,
    settings: &SolverSettings,
) -> Result<Vec<Evaluated>> {
    let places = sorted_placements(problem);
    let mut all = evaluate(&[Layout::empty()], problem, mat, settings)?;
    for r in feasible_ratios(problem) {
        let mut current = all[0].clone();
        for _ in 0..problem.max_bands {
            let candidates: Vec<Layout> = places
                .iter()
                .filter(|p| {
                    current
                        .layout
                        .placements
                        .iter()
                        .all(|q| (*q - **p).abs() >= problem.min_spacing - 1e-12)
                })
                .map(|&p| {
                    let mut placements = current.layout.placements.clone();
                    placements.push(p);
                    placements.sort_by(|a, b| b.total_cmp(a));
                    Layout {
                        placements,
                        reduction_ratio: Some(r),
                    }
                })
                .collect();
            if candidates.is_empty() {
                break;
            }
            let evaluated = evaluate(&candidates, problem, mat, settings)?;
            let step_best = select(&evaluated).clone();
            all.extend(evaluated);
            if !better(&step_best, &current) {
                break;
            }
            current = step_best;
        }
    }
    Ok(all)
}

pub fn design_bands(
    problem: &DesignProblem,
    mat: &MaterialModel,
    settings: &SolverSettings,
) -> Result<DesignResult> {
    problem.validate(mat)?;
    let p0 = problem.eversion_model.pressure_kpa(0.0);
    if p0 > problem.budget() {
        return Err(DesignError::Infeasible(format!(
            "unrestricted eversion pressure {p0:.3} kPa exceeds the {:.3} kPa budget",
            problem.budget()
        )));
    }
    let layouts = enumerate_layouts(problem);
    let (search, evaluated) = if layouts.len() <= EXHAUSTIVE_LIMIT {
        (SearchMode::Exhaustive, evaluate(&layouts, problem, mat, settings)?)
    } else {
        (SearchMode::Greedy, greedy(problem, mat, settings)?)
    };
    log::info!("{search:?} search evaluated {} layout(s)", evaluated.len());
    let best = select(&evaluated).clone();
    let bands = best.layout.bands(problem.band_width);
    let fabrication = fabrication_sheet(&bands, &problem.base);
    Ok(DesignResult {
        bands,
        stiffness_index: best.stiffness_index,
        eversion_pressure_kpa: best.eversion_pressure_kpa,
        fabrication,
        search,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{fit_eversion_pressure, MEDIAN_EVERSION_PRESSURES};

    fn problem(budget: Option<f64>, ratios: Vec<f64>) -> DesignProblem {
        DesignProblem {
            base: RodSpec::reference(vec![]).unwrap(),
            max_bands: 2,
            placements: vec![0.05, 0.1, 0.15],
            min_spacing: 0.05,
            reduction_ratios: ratios,
            pressure_budget_kpa: budget,
            eversion_model: fit_eversion_pressure(&MEDIAN_EVERSION_PRESSURES).unwrap(),
            band_width: 0.015,
            protocol: default_protocol(),
        }
    }

    #[test]
    fn reference_sheet_dimensions() {
        let spec = RodSpec::reference(vec![]).unwrap();
        let sheet = fabrication_sheet(&[BandSpec::new(0.05, 0.5), BandSpec::new(0.1, 0.0)], &spec);
        assert!((sheet.sheet_width_m * 1e3 - 125.7).abs() < 0.05);
        assert_eq!(sheet.sheet_length_m, 0.6);
        assert!((sheet.strips[0].length_m * 1e3 - 62.8).abs() < 0.05);
        assert_eq!(sheet.strips[1].length_m, sheet.sheet_width_m);
        assert_eq!(sheet.strips[0].width_m, 0.015);
        let text = sheet.to_text();
        assert!(text.contains("125.7 mm x 600.0 mm"));
        assert!(text.contains("strip 62.8 mm x 15.0 mm"));
    }

    #[test]
    fn budget_below_base_pressure_is_infeasible() {
        let p = problem(Some(0.1), vec![0.1]);
        let err = design_bands(&p, &MaterialModel::reference(), &SolverSettings::default());
        assert!(matches!(err, Err(DesignError::Infeasible(_))), "{err:?}");
    }

    #[test]
    fn enumeration_respects_spacing_and_budget() {
        let p = problem(Some(3.0), vec![0.1, 0.3, 0.4, 0.5]);
        let layouts = enumerate_layouts(&p);
        // 1 empty + 2 ratios x (3 singles + 3 spaced pairs)
        assert_eq!(layouts.len(), 13);
        assert!(layouts.iter().all(|l| l.reduction_ratio.unwrap_or(0.0) <= 0.3));
        let tight = DesignProblem { min_spacing: 0.06, ..p };
        // pairs must be 100 mm apart now
        assert_eq!(enumerate_layouts(&tight).len(), 1 + 2 * (3 + 1));
    }

    #[test]
    fn invalid_problems() {
        let mat = MaterialModel::reference();
        let set = SolverSettings::default();
        let mut p = problem(None, vec![0.55]);
        assert!(matches!(design_bands(&p, &mat, &set), Err(DesignError::InvalidProblem(_))));
        p.reduction_ratios = vec![0.5];
        p.min_spacing = 0.01;
        assert!(matches!(design_bands(&p, &mat, &set), Err(DesignError::InvalidProblem(_))));
        p.min_spacing = 0.05;
        p.placements = vec![0.7];
        assert!(matches!(design_bands(&p, &mat, &set), Err(DesignError::InvalidProblem(_))));
    }

    #[test]
    fn tie_break_order() {
        let a = Layout { placements: vec![0.1], reduction_ratio: Some(0.2) };
        let b = Layout { placements: vec![0.1, 0.05], reduction_ratio: Some(0.1) };
        let c = Layout { placements: vec![0.1], reduction_ratio: Some(0.3) };
        let d = Layout { placements: vec![0.05], reduction_ratio: Some(0.2) };
        assert_eq!(a.tie_break(&b), Ordering::Less);
        assert_eq!(a.tie_break(&c), Ordering::Less);
        assert_eq!(a.tie_break(&d), Ordering::Less);
    }
}

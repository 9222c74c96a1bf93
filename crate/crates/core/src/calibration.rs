//! Parameter identification: effective modulus and band reduction factors
//! from force–displacement data, and the minimum-eversion-pressure law.

use nalgebra::{DMatrix, DVector, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, MaterialModel, RodSpec, MAX_REDUCTION_RATIO};
use crate::lab::{solve_displacements, LabError};
use crate::solver::{RodModel, SolverSettings};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("calibration data error: {0}")]
    Data(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

pub type Result<T> = std::result::Result<T, CalibrationError>;

/// Measured `(displacement, force)` samples of one test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    samples: Vec<(f64, f64)>,
    pub configuration: String,
    pub pressure_kpa: f64,
}

impl MeasuredCurve {
    pub const MIN_SAMPLES: usize = 5;

    pub fn new(samples: Vec<(f64, f64)>, configuration: impl Into<String>, pressure_kpa: f64) -> Result<Self> {
        if samples.len() < Self::MIN_SAMPLES {
            return Err(CalibrationError::Data(format!(
                "a measured curve needs at least {} samples, got {}",
                Self::MIN_SAMPLES,
                samples.len()
            )));
        }
        if samples.iter().any(|(x, f)| !(x.is_finite() && f.is_finite() && *x >= 0.0)) {
            return Err(CalibrationError::Data("non-finite or negative sample".into()));
        }
        if samples.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(CalibrationError::Data("displacements must be non-decreasing".into()));
        }
        Ok(Self {
            samples,
            configuration: configuration.into(),
            pressure_kpa,
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn displacements(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    /// Euclidean norm of the residual vector at the estimate.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the estimate sits on a bound of its admissible range.
    pub at_boundary: bool,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    /// Also fit the free length as a nuisance parameter.
    pub fit_length: bool,
    pub max_iterations: usize,
    /// Convergence threshold on the relative parameter step.
    pub step_tol: f64,
    pub direction: [f64; 3],
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            fit_length: false,
            max_iterations: 50,
            step_tol: 1e-6,
            direction: [1.0, 0.0, 0.0],
        }
    }
}

struct LsOutcome {
    x: Vec<f64>,
    residual_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Bound-constrained Levenberg–Marquardt with a forward-difference Jacobian
/// and Marquardt diagonal scaling. Steps are projected onto the box.
fn least_squares<F>(
    residuals: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &FitOptions,
) -> Result<LsOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let clamp = |x: &mut Vec<f64>| {
        for i in 0..n {
            x[i] = x[i].clamp(lower[i], upper[i]);
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let mut r = DVector::from_vec(residuals(&x)?);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut jac = DMatrix::zeros(r.len(), n);
        for k in 0..n {
            let mut h = 1e-6 * x[k].abs().max(1e-12);
            if x[k] + h > upper[k] {
                h = -h;
            }
            let mut xp = x.clone();
            xp[k] += h;
            let rp = DVector::from_vec(residuals(&xp)?);
            jac.set_column(k, &((rp - &r) / h));
        }
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * &r;
        if jtj.diagonal().iter().all(|d| *d == 0.0) {
            break;
        }

        let mut improved = false;
        for _ in 0..20 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = x.clone();
            for i in 0..n {
                cand[i] += step[i];
            }
            clamp(&mut cand);
            let rc = DVector::from_vec(residuals(&cand)?);
            let cc = rc.norm_squared();
            if cc <= cost {
                let rel_step = (0..n)
                    .map(|i| (cand[i] - x[i]).abs() / x[i].abs().max(1e-300))
                    .fold(0.0, f64::max);
                x = cand;
                r = rc;
                cost = cc;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if rel_step < opts.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // No descent direction left: the current point is stationary to
            // working precision.
            converged = true;
            break;
        }
    }
    Ok(LsOutcome {
        x,
        residual_norm: cost.sqrt(),
        iterations,
        converged,
    })
}

/// Simulated force at each displacement of every curve, curves in parallel.
fn predicted_forces(
    spec: &RodSpec,
    mat: &MaterialModel,
    curves: &[MeasuredCurve],
    opts: &FitOptions,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    let model = RodModel::new(spec, mat).map_err(LabError::Setup)?;
    let direction = Vector3::from(opts.direction);
    let per_curve = curves
        .par_iter()
        .map(|c| {
            let mut xs = c.displacements();
            xs.dedup();
            let eqs = solve_displacements(&model, spec.length(), direction, &xs, settings)?;
            Ok(c
                .samples()
                .iter()
                .map(|(x, _)| {
                    let i = xs.partition_point(|v| v < x);
                    eqs[i].force
                })
                .collect::<Vec<_>>())
        })
        .collect::<std::result::Result<Vec<_>, LabError>>()?;
    Ok(per_curve.into_iter().flatten().collect())
}

fn measured_forces(curves: &[MeasuredCurve]) -> Vec<f64> {
    curves.iter().flat_map(|c| c.samples().iter().map(|s| s.1)).collect()
}

fn check_curves(curves: &[MeasuredCurve]) -> Result<()> {
    if curves.is_empty() {
        return Err(CalibrationError::Data("no curves supplied".into()));
    }
    if measured_forces(curves).iter().all(|f| *f == 0.0) {
        return Err(CalibrationError::Data("all measured forces are zero".into()));
    }
    Ok(())
}

/// Least-squares effective modulus from curves of band-free robots, starting
/// from the modulus currently in `mat`. With `fit_length` the free length is
/// co-fitted as a nuisance parameter.
pub fn fit_effective_modulus(
    curves: &[MeasuredCurve],
    spec: &RodSpec,
    mat: &MaterialModel,
    settings: &SolverSettings,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_curves(curves)?;
    if spec.bands().iter().any(|b| b.reduction_ratio > 0.0) {
        return Err(CalibrationError::Data(
            "modulus identification needs band-free curves".into(),
        ));
    }
    let measured = measured_forces(curves);
    let e0 = mat.effective_modulus_at(spec.pressure())?;
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let m = mat.with_modulus(x[0])?;
        let s = if opts.fit_length { spec.with_length(x[1])? } else { spec.clone() };
        let pred = predicted_forces(&s, &m, curves, opts, settings)?;
        Ok(pred.iter().zip(&measured).map(|(p, q)| p - q).collect())
    };
    let (x0, lo, hi) = if opts.fit_length {
        let l = spec.length();
        (vec![e0, l], vec![1e3, 0.5 * l], vec![1e12, 1.5 * l])
    } else {
        (vec![e0], vec![1e3], vec![1e12])
    };
    let out = least_squares(residuals, &x0, &lo, &hi, opts)?;
    let at_boundary = out.x.iter().zip(lo.iter().zip(&hi)).any(|(x, (l, h))| x <= l || x >= h);
    let mut parameters = vec![FitParameter {
        name: "effective_modulus".into(),
        unit: "Pa".into(),
        value: out.x[0],
    }];
    if opts.fit_length {
        parameters.push(FitParameter {
            name: "length".into(),
            unit: "m".into(),
            value: out.x[1],
        });
    }
    Ok(FitResult {
        parameters,
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        at_boundary,
    })
}

/// Smallest admissible reduction factor in the search.
const ALPHA_FLOOR: f64 = 1e-3;

/// Least-squares reduction factor for the (single, shared) band ratio of
/// `spec`, with the effective modulus fixed by `mat`.
pub fn fit_alpha(
    curves: &[MeasuredCurve],
    spec: &RodSpec,
    mat: &MaterialModel,
    settings: &SolverSettings,
    opts: &FitOptions,
) -> Result<FitResult> {
    check_curves(curves)?;
    let ratios: Vec<f64> = spec.bands().iter().map(|b| b.reduction_ratio).collect();
    let rho = match ratios.first() {
        Some(&r) if r > 0.0 => r,
        _ => {
            // Nothing to soften: alpha is unidentifiable and pinned at 1.
            let measured = measured_forces(curves);
            let pred = predicted_forces(spec, mat, curves, opts, settings)?;
            let res: f64 = pred.iter().zip(&measured).map(|(p, q)| (p - q).powi(2)).sum();
            return Ok(FitResult {
                parameters: vec![alpha_parameter(0.0, 1.0)],
                residual_norm: res.sqrt(),
                iterations: 0,
                converged: true,
                at_boundary: true,
            });
        }
    };
    if ratios.iter().any(|&r| r != rho) {
        return Err(CalibrationError::Data(
            "all bands must share one reduction ratio".into(),
        ));
    }
    let measured = measured_forces(curves);
    let start = mat.alpha(rho).unwrap_or(0.5);
    let residuals = |x: &[f64]| -> Result<Vec<f64>> {
        let m = mat.with_alpha(rho, x[0])?;
        let pred = predicted_forces(spec, &m, curves, opts, settings)?;
        Ok(pred.iter().zip(&measured).map(|(p, q)| p - q).collect())
    };
    let out = least_squares(residuals, &[start], &[ALPHA_FLOOR], &[1.0], opts)?;
    let alpha = out.x[0];
    Ok(FitResult {
        parameters: vec![alpha_parameter(rho, alpha)],
        residual_norm: out.residual_norm,
        iterations: out.iterations,
        converged: out.converged,
        at_boundary: alpha >= 1.0 || alpha <= ALPHA_FLOOR,
    })
}

fn alpha_parameter(rho: f64, alpha: f64) -> FitParameter {
    FitParameter {
        name: format!("alpha(rho={rho})"),
        unit: "1".into(),
        value: alpha,
    }
}

/// Functional form of the minimum-eversion-pressure law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PressureLaw {
    /// `p0 (1 - rho)^(-c)`
    #[default]
    PowerLaw,
    /// `p0 exp(c rho)`
    Exponential,
}

impl PressureLaw {
    /// Regressor `x(rho)` such that `ln p = ln p0 + c x`.
    fn regressor(self, rho: f64) -> f64 {
        match self {
            PressureLaw::Exponential => rho,
            PressureLaw::PowerLaw => -(1.0 - rho).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EversionPressureModel {
    pub law: PressureLaw,
    /// Pressure needed without restriction (kPa).
    pub p0_kpa: f64,
    pub growth_rate: f64,
    /// `ln p_measured - ln p_model` per fitted point.
    #[serde(default)]
    pub log_residuals: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PressurePrediction {
    pub pressure_kpa: f64,
    /// The ratio lies outside the validated `[0, 0.6]` range.
    pub out_of_range: bool,
}

impl EversionPressureModel {
    pub fn new(law: PressureLaw, p0_kpa: f64, growth_rate: f64) -> Result<Self> {
        if !(p0_kpa > 0.0 && growth_rate > 0.0 && p0_kpa.is_finite() && growth_rate.is_finite()) {
            return Err(CalibrationError::Data(format!(
                "eversion law needs p0 > 0 and c > 0, got p0 = {p0_kpa}, c = {growth_rate}"
            )));
        }
        Ok(Self {
            law,
            p0_kpa,
            growth_rate,
            log_residuals: Vec::new(),
        })
    }

    pub fn pressure_kpa(&self, rho: f64) -> f64 {
        self.p0_kpa * (self.growth_rate * self.law.regressor(rho)).exp()
    }

    pub fn predict(&self, rho: f64) -> PressurePrediction {
        let out_of_range = !(0.0..=MAX_REDUCTION_RATIO).contains(&rho);
        if out_of_range {
            log::warn!("eversion pressure requested at rho = {rho}, outside the validated range");
        }
        PressurePrediction {
            pressure_kpa: self.pressure_kpa(rho),
            out_of_range,
        }
    }
}

pub fn predict_eversion_pressure(model: &EversionPressureModel, rho: f64) -> PressurePrediction {
    model.predict(rho)
}

/// Fits the default (power-law) eversion model.
pub fn fit_eversion_pressure(points: &[(f64, f64)]) -> Result<EversionPressureModel> {
    fit_eversion_pressure_with(points, PressureLaw::default())
}

/// Ordinary least squares of `ln p` on the law's regressor.
pub fn fit_eversion_pressure_with(points: &[(f64, f64)], law: PressureLaw) -> Result<EversionPressureModel> {
    if points.len() < 3 {
        return Err(CalibrationError::Data(format!(
            "need at least 3 (ratio, pressure) points, got {}",
            points.len()
        )));
    }
    for &(rho, p) in points {
        if !(p > 0.0 && p.is_finite()) {
            return Err(CalibrationError::Data(format!("non-positive pressure {p} kPa")));
        }
        if !(0.0..1.0).contains(&rho) {
            return Err(CalibrationError::Data(format!("reduction ratio {rho} outside [0, 1)")));
        }
    }
    let mut sorted: Vec<f64> = points.iter().map(|p| p.0).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(CalibrationError::Data("reduction ratios must be distinct".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| law.regressor(p.0)).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut model = EversionPressureModel::new(law, intercept.exp(), slope)?;
    model.log_residuals = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| y - (intercept + slope * x))
        .collect();
    Ok(model)
}

/// Median minimum eversion pressures (kPa) for 0..50 % restriction.
pub const MEDIAN_EVERSION_PRESSURES: [(f64, f64); 6] = [
    (0.0, 0.46),
    (0.1, 0.62),
    (0.2, 1.16),
    (0.3, 1.53),
    (0.4, 3.39),
    (0.5, 9.01),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_round_trip() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| {
            let r = i as f64 * 0.1;
            (r, (4.0 * r).exp())
        }).collect();
        let m = fit_eversion_pressure_with(&pts, PressureLaw::Exponential).unwrap();
        assert!((m.p0_kpa - 1.0).abs() < 1e-9);
        assert!((m.growth_rate - 4.0).abs() < 1e-9);
    }

    #[test]
    fn exact_power_law_round_trip() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| {
            let r = i as f64 * 0.1;
            (r, 0.5 * (1.0 - r).powf(-3.0))
        }).collect();
        let m = fit_eversion_pressure(&pts).unwrap();
        assert!((m.p0_kpa - 0.5).abs() < 1e-9);
        assert!((m.growth_rate - 3.0).abs() < 1e-9);
    }

    #[test]
    fn log_residuals_have_zero_mean() {
        for law in [PressureLaw::PowerLaw, PressureLaw::Exponential] {
            let m = fit_eversion_pressure_with(&MEDIAN_EVERSION_PRESSURES, law).unwrap();
            let mean: f64 = m.log_residuals.iter().sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn eversion_data_errors() {
        assert!(fit_eversion_pressure(&[(0.0, 1.0), (0.1, 2.0)]).is_err());
        assert!(fit_eversion_pressure(&[(0.0, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
        assert!(fit_eversion_pressure(&[(0.0, 1.0), (0.1, 0.0), (0.2, 3.0)]).is_err());
        // decreasing data has no positive growth rate
        assert!(fit_eversion_pressure(&[(0.0, 3.0), (0.1, 2.0), (0.2, 1.0)]).is_err());
    }

    #[test]
    fn prediction_properties() {
        let m = fit_eversion_pressure(&MEDIAN_EVERSION_PRESSURES).unwrap();
        assert_eq!(m.predict(0.0).pressure_kpa, m.p0_kpa);
        let mut last = 0.0;
        for i in 0..=12 {
            let p = m.predict(i as f64 / 20.0);
            assert!(!p.out_of_range);
            assert!(p.pressure_kpa > last);
            last = p.pressure_kpa;
        }
        assert!(m.predict(0.7).out_of_range);
        let p5 = m.predict(0.5).pressure_kpa;
        assert!((p5 / 9.01 - 1.0).abs() < 0.35);
    }

    #[test]
    fn measured_curve_validation() {
        assert!(MeasuredCurve::new(vec![(0.0, 0.0); 4], "x", 6.9).is_err());
        let dec = vec![(0.0, 0.0), (0.01, 0.1), (0.005, 0.1), (0.02, 0.2), (0.03, 0.3)];
        assert!(MeasuredCurve::new(dec, "x", 6.9).is_err());
        let ok = vec![(0.0, 0.0), (0.0, 0.0), (0.01, 0.1), (0.02, 0.2), (0.03, 0.3)];
        assert!(MeasuredCurve::new(ok, "x", 6.9).is_ok());
    }

    #[test]
    fn empty_and_degenerate_curve_sets() {
        let spec = RodSpec::reference(vec![]).unwrap();
        let mat = MaterialModel::reference();
        let set = SolverSettings::default();
        let opts = FitOptions::default();
        assert!(matches!(
            fit_effective_modulus(&[], &spec, &mat, &set, &opts),
            Err(CalibrationError::Data(_))
        ));
        let zeros = MeasuredCurve::new((0..5).map(|i| (i as f64 * 0.005, 0.0)).collect(), "z", 6.9).unwrap();
        assert!(matches!(
            fit_effective_modulus(&[zeros], &spec, &mat, &set, &opts),
            Err(CalibrationError::Data(_))
        ));
    }

    #[test]
    fn least_squares_fits_a_line_within_bounds() {
        let data: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 + 1.0)).collect();
        let res = |p: &[f64]| -> Result<Vec<f64>> {
            Ok(data.iter().map(|(x, y)| p[0] * x + p[1] - y).collect())
        };
        let opts = FitOptions::default();
        let out = least_squares(res, &[1.0, 0.5], &[0.0, 0.0], &[10.0, 10.0], &opts).unwrap();
        assert!(out.converged);
        assert!((out.x[0] - 3.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-5);
        let capped = least_squares(res, &[1.0, 0.5], &[0.0, 0.0], &[2.0, 10.0], &opts).unwrap();
        assert_eq!(capped.x[0], 2.0);
    }
}

//! Physical description of a banded, pressurized tube: geometry, band layout,
//! thin-wall cross sections and the pressure-dependent effective modulus.

use std::f64::consts::PI;
use std::sync::Once;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default band strip width (m).
pub const DEFAULT_BAND_WIDTH: f64 = 0.015;
/// Largest reduction ratio the model is validated for.
pub const MAX_REDUCTION_RATIO: f64 = 0.6;
/// Default Poisson ratio of the TPU wall.
pub const DEFAULT_POISSON_RATIO: f64 = 0.4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid rod spec: {0}")]
    InvalidSpec(String),
    #[error("invalid material model: {0}")]
    InvalidMaterial(String),
    #[error("arc length {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("no calibrated reduction factor for reduction ratio {rho}")]
    CalibrationMissing { rho: f64 },
    #[error("pressure {pressure} Pa outside calibrated range [{min}, {max}] Pa")]
    PressureOutOfRange { pressure: f64, min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, DomainError>;

/// One constrictive band, located by the distance of its center from the tip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    #[serde(rename = "distance_from_tip_m")]
    pub distance_from_tip: f64,
    pub reduction_ratio: f64,
    #[serde(rename = "width_m", default = "default_band_width")]
    pub width: f64,
}

fn default_band_width() -> f64 {
    DEFAULT_BAND_WIDTH
}

impl BandSpec {
    pub fn new(distance_from_tip: f64, reduction_ratio: f64) -> Self {
        Self {
            distance_from_tip,
            reduction_ratio,
            width: DEFAULT_BAND_WIDTH,
        }
    }

    pub fn with_width(mut self, width: f64) -> Self {
        self.width = width;
        self
    }

    /// Arc position of the band center on a rod of the given length.
    pub fn center(&self, length: f64) -> f64 {
        length - self.distance_from_tip
    }

    /// Closed arc-length support `[lo, hi]` of the band.
    pub fn support(&self, length: f64) -> (f64, f64) {
        let c = self.center(length);
        (c - 0.5 * self.width, c + 0.5 * self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RodSpecFile {
    length_m: f64,
    base_radius_m: f64,
    wall_thickness_m: f64,
    #[serde(default)]
    bands: Vec<BandSpec>,
    #[serde(default)]
    pressure_kpa: f64,
}

/// Geometry, band layout and inflation pressure of one prototype.
///
/// Construction validates every invariant; the fields are read-only through
/// accessors so a `RodSpec` is always consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RodSpecFile", into = "RodSpecFile")]
pub struct RodSpec {
    length: f64,
    base_radius: f64,
    wall_thickness: f64,
    bands: Vec<BandSpec>,
    pressure: f64,
}

impl TryFrom<RodSpecFile> for RodSpec {
    type Error = DomainError;

    fn try_from(f: RodSpecFile) -> Result<Self> {
        RodSpec::new(
            f.length_m,
            f.base_radius_m,
            f.wall_thickness_m,
            f.bands,
            f.pressure_kpa * 1e3,
        )
    }
}

impl From<RodSpec> for RodSpecFile {
    fn from(r: RodSpec) -> Self {
        RodSpecFile {
            length_m: r.length,
            base_radius_m: r.base_radius,
            wall_thickness_m: r.wall_thickness,
            bands: r.bands,
            pressure_kpa: r.pressure / 1e3,
        }
    }
}

impl RodSpec {
    /// Builds a validated spec. Bands may be given in any order; they are
    /// stored sorted by arc position (base to tip).
    pub fn new(
        length: f64,
        base_radius: f64,
        wall_thickness: f64,
        mut bands: Vec<BandSpec>,
        pressure: f64,
    ) -> Result<Self> {
        let bad = |msg: String| Err(DomainError::InvalidSpec(msg));
        if !(length.is_finite() && length > 0.0) {
            return bad(format!("length must be positive, got {length}"));
        }
        if !(base_radius.is_finite() && base_radius > 0.0) {
            return bad(format!("base radius must be positive, got {base_radius}"));
        }
        if !(wall_thickness.is_finite() && wall_thickness > 0.0 && wall_thickness < base_radius) {
            return bad(format!(
                "wall thickness must lie in (0, {base_radius}), got {wall_thickness}"
            ));
        }
        if !(pressure.is_finite() && pressure >= 0.0) {
            return bad(format!("internal pressure must be non-negative, got {pressure}"));
        }
        for b in &bands {
            if !(b.width.is_finite() && b.width > 0.0) {
                return bad(format!("band width must be positive, got {}", b.width));
            }
            if !(0.0..=MAX_REDUCTION_RATIO).contains(&b.reduction_ratio) {
                return bad(format!(
                    "reduction ratio {} outside [0, {MAX_REDUCTION_RATIO}]",
                    b.reduction_ratio
                ));
            }
            if !(0.0..=length).contains(&b.distance_from_tip) {
                return bad(format!(
                    "band at {} m from tip lies outside a {length} m rod",
                    b.distance_from_tip
                ));
            }
            let (lo, hi) = b.support(length);
            if lo < 0.0 || hi > length {
                return bad(format!(
                    "band at {} m from tip (support [{lo}, {hi}]) not fully inside [0, {length}]",
                    b.distance_from_tip
                ));
            }
        }
        bands.sort_by(|a, b| a.center(length).total_cmp(&b.center(length)));
        for pair in bands.windows(2) {
            let (_, hi) = pair[0].support(length);
            let (lo, _) = pair[1].support(length);
            if lo < hi {
                return bad(format!(
                    "bands at {} m and {} m from tip overlap",
                    pair[0].distance_from_tip, pair[1].distance_from_tip
                ));
            }
        }
        Ok(Self {
            length,
            base_radius,
            wall_thickness,
            bands,
            pressure,
        })
    }

    /// The 600 mm long, 40 mm diameter prototype inflated to 6.9 kPa.
    pub fn reference(bands: Vec<BandSpec>) -> Result<Self> {
        Self::new(0.6, 0.020, 5e-5, bands, 6.9e3)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn base_radius(&self) -> f64 {
        self.base_radius
    }

    pub fn wall_thickness(&self) -> f64 {
        self.wall_thickness
    }

    /// Bands sorted by arc position, base first.
    pub fn bands(&self) -> &[BandSpec] {
        &self.bands
    }

    /// Internal pressure (Pa).
    pub fn pressure(&self) -> f64 {
        self.pressure
    }

    /// Same geometry and pressure, different band layout.
    pub fn with_bands(&self, bands: Vec<BandSpec>) -> Result<Self> {
        Self::new(
            self.length,
            self.base_radius,
            self.wall_thickness,
            bands,
            self.pressure,
        )
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        Self::new(
            length,
            self.base_radius,
            self.wall_thickness,
            self.bands.clone(),
            self.pressure,
        )
    }

    fn check_station(&self, s: f64) -> Result<()> {
        if (0.0..=self.length).contains(&s) {
            Ok(())
        } else {
            Err(DomainError::OutOfRange {
                s,
                length: self.length,
            })
        }
    }

    /// Band whose closed support contains `s`, if any.
    pub fn band_at(&self, s: f64) -> Option<&BandSpec> {
        self.bands.iter().find(|b| {
            let (lo, hi) = b.support(self.length);
            lo <= s && s <= hi
        })
    }

    /// Interior arc positions where the section properties jump, ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.bands.len());
        for b in &self.bands {
            let (lo, hi) = b.support(self.length);
            for e in [lo, hi] {
                if e > 0.0 && e < self.length && out.last().is_none_or(|&l| e > l) {
                    out.push(e);
                }
            }
        }
        out
    }
}

/// Tube radius at arc length `s`: `r0` outside bands, `r0 (1 - rho)` inside.
pub fn radius_profile(spec: &RodSpec, s: f64) -> Result<f64> {
    spec.check_station(s)?;
    Ok(match spec.band_at(s) {
        Some(b) => spec.base_radius * (1.0 - b.reduction_ratio),
        None => spec.base_radius,
    })
}

/// Thin-walled annulus properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossSection {
    pub radius: f64,
    pub area: f64,
    pub second_moment: f64,
}

impl CrossSection {
    pub fn thin_wall(radius: f64, thickness: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0 && thickness.is_finite() && thickness > 0.0) {
            return Err(DomainError::InvalidSpec(format!(
                "cross section needs positive radius and thickness, got r = {radius}, t = {thickness}"
            )));
        }
        Ok(Self {
            radius,
            area: 2.0 * PI * radius * thickness,
            second_moment: PI * radius.powi(3) * thickness,
        })
    }
}

pub fn cross_section_at(spec: &RodSpec, s: f64) -> Result<CrossSection> {
    CrossSection::thin_wall(radius_profile(spec, s)?, spec.wall_thickness)
}

/// One (pressure, effective modulus) calibration point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulusPoint {
    pub pressure_kpa: f64,
    pub modulus_pa: f64,
}

/// One (reduction ratio, reduction factor) calibration point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaPoint {
    pub reduction_ratio: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialFile {
    modulus_table: Vec<ModulusPoint>,
    #[serde(default = "default_poisson")]
    poisson_ratio: f64,
    alpha_table: Vec<AlphaPoint>,
}

fn default_poisson() -> f64 {
    DEFAULT_POISSON_RATIO
}

/// Effective-modulus law `E(p, s) = alpha(s) E_eff(p)` plus the Poisson ratio
/// used to derive the shear modulus.
///
/// `E_eff(p)` is linearly interpolated over a pressure table; a one-entry
/// table applies its modulus at every pressure. `alpha(rho)` is linearly
/// interpolated over the calibrated ratios and never extrapolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MaterialFile", into = "MaterialFile")]
pub struct MaterialModel {
    modulus_table: Vec<ModulusPoint>,
    poisson_ratio: f64,
    alpha_table: Vec<AlphaPoint>,
}

impl TryFrom<MaterialFile> for MaterialModel {
    type Error = DomainError;
    fn try_from(f: MaterialFile) -> Result<Self> {
        MaterialModel::new(f.modulus_table, f.poisson_ratio, f.alpha_table)
    }
}

impl From<MaterialModel> for MaterialFile {
    fn from(m: MaterialModel) -> Self {
        MaterialFile {
            modulus_table: m.modulus_table,
            poisson_ratio: m.poisson_ratio,
            alpha_table: m.alpha_table,
        }
    }
}

/// Reduction factors identified for the 10..50 % bands, with the unbanded anchor.
pub const REFERENCE_ALPHA: [(f64, f64); 6] = [
    (0.0, 1.0),
    (0.1, 0.55),
    (0.2, 0.53),
    (0.3, 0.46),
    (0.4, 0.43),
    (0.5, 0.36),
];
/// Effective modulus identified at the characterization pressure.
pub const REFERENCE_MODULUS: f64 = 25.2e6;
/// Characterization pressure, 1 psi.
pub const REFERENCE_PRESSURE: f64 = 6.9e3;

impl MaterialModel {
    pub fn new(
        mut modulus_table: Vec<ModulusPoint>,
        poisson_ratio: f64,
        mut alpha_table: Vec<AlphaPoint>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(DomainError::InvalidMaterial(msg));
        if modulus_table.is_empty() {
            return bad("modulus table is empty".into());
        }
        for p in &modulus_table {
            if !(p.modulus_pa.is_finite() && p.modulus_pa > 0.0) {
                return bad(format!("effective modulus must be positive, got {}", p.modulus_pa));
            }
            if !(p.pressure_kpa.is_finite() && p.pressure_kpa >= 0.0) {
                return bad(format!("pressure must be non-negative, got {}", p.pressure_kpa));
            }
        }
        modulus_table.sort_by(|a, b| a.pressure_kpa.total_cmp(&b.pressure_kpa));
        if modulus_table
            .windows(2)
            .any(|w| w[0].pressure_kpa == w[1].pressure_kpa)
        {
            return bad("duplicate pressure in modulus table".into());
        }
        if !(0.0..0.5).contains(&poisson_ratio) {
            return bad(format!("Poisson ratio {poisson_ratio} outside [0, 0.5)"));
        }
        for a in &alpha_table {
            if !(a.alpha > 0.0 && a.alpha <= 1.0) {
                return bad(format!("reduction factor {} outside (0, 1]", a.alpha));
            }
            if !(0.0..1.0).contains(&a.reduction_ratio) {
                return bad(format!("reduction ratio {} outside [0, 1)", a.reduction_ratio));
            }
        }
        alpha_table.sort_by(|a, b| a.reduction_ratio.total_cmp(&b.reduction_ratio));
        if alpha_table
            .windows(2)
            .any(|w| w[0].reduction_ratio == w[1].reduction_ratio)
        {
            return bad("duplicate reduction ratio in alpha table".into());
        }
        match alpha_table.first() {
            Some(a) if a.reduction_ratio == 0.0 && a.alpha == 1.0 => {}
            _ => return bad("alpha table must map reduction ratio 0 to 1".into()),
        }
        Ok(Self {
            modulus_table,
            poisson_ratio,
            alpha_table,
        })
    }

    /// Single-pressure model with the identified modulus and reduction factors.
    pub fn reference() -> Self {
        Self::single_point(REFERENCE_PRESSURE, REFERENCE_MODULUS, &REFERENCE_ALPHA)
            .expect("reference material is valid")
    }

    /// Builds a one-entry modulus table. `alpha` pairs are `(rho, alpha)`.
    pub fn single_point(pressure: f64, modulus: f64, alpha: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            vec![ModulusPoint {
                pressure_kpa: pressure / 1e3,
                modulus_pa: modulus,
            }],
            DEFAULT_POISSON_RATIO,
            alpha
                .iter()
                .map(|&(reduction_ratio, alpha)| AlphaPoint {
                    reduction_ratio,
                    alpha,
                })
                .collect(),
        )
    }

    pub fn poisson_ratio(&self) -> f64 {
        self.poisson_ratio
    }

    pub fn modulus_table(&self) -> &[ModulusPoint] {
        &self.modulus_table
    }

    pub fn alpha_table(&self) -> &[AlphaPoint] {
        &self.alpha_table
    }

    /// Copy with the whole modulus table rescaled so its lowest-pressure entry
    /// equals `modulus`.
    pub fn with_modulus(&self, modulus: f64) -> Result<Self> {
        let ratio = modulus / self.modulus_table[0].modulus_pa;
        let table = self
            .modulus_table
            .iter()
            .map(|p| ModulusPoint {
                pressure_kpa: p.pressure_kpa,
                modulus_pa: p.modulus_pa * ratio,
            })
            .collect();
        Self::new(table, self.poisson_ratio, self.alpha_table.clone())
    }

    /// Copy with `alpha(rho)` set (inserted or replaced).
    pub fn with_alpha(&self, reduction_ratio: f64, alpha: f64) -> Result<Self> {
        let mut table: Vec<AlphaPoint> = self
            .alpha_table
            .iter()
            .copied()
            .filter(|a| a.reduction_ratio != reduction_ratio)
            .collect();
        table.push(AlphaPoint {
            reduction_ratio,
            alpha,
        });
        Self::new(self.modulus_table.clone(), self.poisson_ratio, table)
    }

    pub fn with_poisson_ratio(&self, nu: f64) -> Result<Self> {
        Self::new(self.modulus_table.clone(), nu, self.alpha_table.clone())
    }

    /// `E_eff(p)` for a pressure in pascals.
    pub fn effective_modulus_at(&self, pressure: f64) -> Result<f64> {
        let kpa = pressure / 1e3;
        let table = &self.modulus_table;
        if table.len() == 1 {
            static WARN: Once = Once::new();
            WARN.call_once(|| {
                log::warn!(
                    "single-point effective modulus table ({} kPa); applying it at every pressure",
                    table[0].pressure_kpa
                )
            });
            return Ok(table[0].modulus_pa);
        }
        let (first, last) = (table[0], table[table.len() - 1]);
        if kpa < first.pressure_kpa || kpa > last.pressure_kpa {
            return Err(DomainError::PressureOutOfRange {
                pressure,
                min: first.pressure_kpa * 1e3,
                max: last.pressure_kpa * 1e3,
            });
        }
        let xs: Vec<f64> = table.iter().map(|p| p.pressure_kpa).collect();
        let ys: Vec<f64> = table.iter().map(|p| p.modulus_pa).collect();
        Ok(interpolate(&xs, &ys, kpa).expect("inside hull"))
    }

    /// Reduction factor for a band of ratio `rho`.
    pub fn alpha(&self, rho: f64) -> Result<f64> {
        let xs: Vec<f64> = self.alpha_table.iter().map(|a| a.reduction_ratio).collect();
        let ys: Vec<f64> = self.alpha_table.iter().map(|a| a.alpha).collect();
        interpolate(&xs, &ys, rho).ok_or(DomainError::CalibrationMissing { rho })
    }

    /// Largest reduction ratio covered by the alpha table.
    pub fn max_calibrated_ratio(&self) -> f64 {
        self.alpha_table.last().map_or(0.0, |a| a.reduction_ratio)
    }

    pub fn shear_modulus(&self, modulus: f64) -> f64 {
        modulus / (2.0 * (1.0 + self.poisson_ratio))
    }
}

/// Piecewise-linear interpolation on ascending `xs`; `None` outside the hull.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    if xs.is_empty() || x.is_nan() || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v <= x);
    if i == 0 {
        return Some(ys[0]);
    }
    if i == xs.len() {
        return Some(ys[xs.len() - 1]);
    }
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    if x == x0 {
        return Some(y0);
    }
    Some(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
}

/// `E(p, s)`: the effective modulus scaled by the local reduction factor.
pub fn effective_modulus(mat: &MaterialModel, spec: &RodSpec, s: f64) -> Result<f64> {
    spec.check_station(s)?;
    let e_eff = mat.effective_modulus_at(spec.pressure)?;
    let alpha = match spec.band_at(s) {
        Some(b) => mat.alpha(b.reduction_ratio)?,
        None => 1.0,
    };
    Ok(alpha * e_eff)
}

/// Diagonal constitutive matrices of one cross section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StiffnessMatrices {
    /// Diagonal of `K_se`: (GA, GA, EA).
    pub shear_extension: Vector3<f64>,
    /// Diagonal of `K_bt`: (EI, EI, 2GI).
    pub bending_torsion: Vector3<f64>,
}

impl StiffnessMatrices {
    pub fn new(modulus: f64, shear_modulus: f64, section: &CrossSection) -> Self {
        let (a, i) = (section.area, section.second_moment);
        Self {
            shear_extension: Vector3::new(shear_modulus * a, shear_modulus * a, modulus * a),
            bending_torsion: Vector3::new(modulus * i, modulus * i, 2.0 * shear_modulus * i),
        }
    }

    pub fn k_se(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.shear_extension)
    }

    pub fn k_bt(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.bending_torsion)
    }

    pub fn bending_stiffness(&self) -> f64 {
        self.bending_torsion.x
    }
}

pub fn stiffness_matrices_at(mat: &MaterialModel, spec: &RodSpec, s: f64) -> Result<StiffnessMatrices> {
    let e = effective_modulus(mat, spec, s)?;
    let section = cross_section_at(spec, s)?;
    Ok(StiffnessMatrices::new(e, mat.shear_modulus(e), &section))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    fn half_band() -> RodSpec {
        RodSpec::reference(vec![BandSpec::new(0.050, 0.5)]).unwrap()
    }

    #[test]
    fn radius_without_bands_is_base_radius() {
        let spec = RodSpec::reference(vec![]).unwrap();
        assert_eq!(radius_profile(&spec, 0.3).unwrap(), 0.020);
    }

    #[test]
    fn radius_inside_and_outside_band() {
        let spec = half_band();
        assert!(close(radius_profile(&spec, 0.550).unwrap(), 0.010, 1e-12));
        assert_eq!(radius_profile(&spec, 0.500).unwrap(), 0.020);
    }

    #[test]
    fn radius_out_of_range() {
        let spec = half_band();
        assert!(matches!(
            radius_profile(&spec, 0.61),
            Err(DomainError::OutOfRange { .. })
        ));
        assert!(radius_profile(&spec, -1e-9).is_err());
    }

    #[test]
    fn thin_wall_section_values() {
        let cs = CrossSection::thin_wall(0.020, 5e-5).unwrap();
        assert!(close(cs.area, 6.2832e-6, 1e-4));
        assert!(close(cs.second_moment, 1.25664e-9, 1e-5));
        let banded = CrossSection::thin_wall(0.010, 5e-5).unwrap();
        assert!(close(banded.second_moment, 1.5708e-10, 1e-4));
        assert!(close(cs.second_moment / banded.second_moment, 8.0, 1e-12));
    }

    #[test]
    fn zero_thickness_rejected() {
        assert!(CrossSection::thin_wall(0.02, 0.0).is_err());
        assert!(RodSpec::new(0.6, 0.02, 0.0, vec![], 0.0).is_err());
        assert!(RodSpec::new(0.6, 0.02, 0.03, vec![], 0.0).is_err());
    }

    #[test]
    fn effective_modulus_examples() {
        let mat = MaterialModel::reference();
        let spec = RodSpec::reference(vec![BandSpec::new(0.05, 0.5), BandSpec::new(0.1, 0.1)]).unwrap();
        assert_eq!(effective_modulus(&mat, &spec, 0.3).unwrap(), 25.2e6);
        assert!(close(effective_modulus(&mat, &spec, 0.55).unwrap(), 9.072e6, 1e-12));
        assert!(close(effective_modulus(&mat, &spec, 0.5).unwrap(), 13.86e6, 1e-12));
    }

    #[test]
    fn alpha_interpolates_and_refuses_extrapolation() {
        let mat = MaterialModel::reference();
        assert!(close(mat.alpha(0.25).unwrap(), 0.495, 1e-12));
        assert!(close(mat.alpha(0.05).unwrap(), 0.775, 1e-12));
        assert_eq!(mat.alpha(0.5).unwrap(), 0.36);
        assert_eq!(
            mat.alpha(0.55),
            Err(DomainError::CalibrationMissing { rho: 0.55 })
        );
        let spec = RodSpec::reference(vec![BandSpec::new(0.1, 0.55)]).unwrap();
        assert!(matches!(
            effective_modulus(&mat, &spec, 0.5),
            Err(DomainError::CalibrationMissing { .. })
        ));
    }

    #[test]
    fn multi_point_modulus_table() {
        let mat = MaterialModel::new(
            vec![
                ModulusPoint { pressure_kpa: 4.0, modulus_pa: 20e6 },
                ModulusPoint { pressure_kpa: 8.0, modulus_pa: 30e6 },
            ],
            0.4,
            vec![AlphaPoint { reduction_ratio: 0.0, alpha: 1.0 }],
        )
        .unwrap();
        assert!(close(mat.effective_modulus_at(6e3).unwrap(), 25e6, 1e-12));
        assert!(matches!(
            mat.effective_modulus_at(9e3),
            Err(DomainError::PressureOutOfRange { .. })
        ));
    }

    #[test]
    fn material_invariants() {
        let no_anchor = MaterialModel::single_point(6.9e3, 25.2e6, &[(0.1, 0.5)]);
        assert!(no_anchor.is_err());
        let bad_alpha = MaterialModel::single_point(6.9e3, 25.2e6, &[(0.0, 1.0), (0.1, 1.2)]);
        assert!(bad_alpha.is_err());
        assert!(MaterialModel::reference().with_poisson_ratio(0.5).is_err());
        assert!(MaterialModel::single_point(6.9e3, -1.0, &REFERENCE_ALPHA).is_err());
    }

    #[test]
    fn stiffness_matrices_examples() {
        let mat = MaterialModel::reference();
        let spec = half_band();
        let k = stiffness_matrices_at(&mat, &spec, 0.3).unwrap();
        assert!(close(k.bending_torsion.x, 3.1667e-2, 1e-4));
        assert!(close(k.shear_extension.x / k.shear_extension.z, 1.0 / 2.8, 1e-12));
        assert!(close(k.bending_torsion.z, 2.0 * 25.2e6 / 2.8 * 1.25664e-9, 1e-5));
        let kb = stiffness_matrices_at(&mat, &spec, 0.55).unwrap();
        assert!(close(kb.bending_stiffness() / k.bending_stiffness(), 0.045, 1e-12));
        assert_eq!(k.k_bt()[(1, 1)], k.bending_torsion.y);
        assert_eq!(k.k_se()[(0, 1)], 0.0);
    }

    #[test]
    fn band_validation() {
        // 700 mm from the tip of a 600 mm rod
        assert!(RodSpec::reference(vec![BandSpec::new(0.7, 0.5)]).is_err());
        // support spills past the tip
        assert!(RodSpec::reference(vec![BandSpec::new(0.005, 0.5)]).is_err());
        // overlapping
        assert!(RodSpec::reference(vec![BandSpec::new(0.05, 0.5), BandSpec::new(0.06, 0.5)]).is_err());
        assert!(RodSpec::reference(vec![BandSpec::new(0.05, 0.7)]).is_err());
        assert!(RodSpec::reference(vec![BandSpec::new(0.05, 0.5).with_width(0.0)]).is_err());
        // given tip-first, stored base-first
        let spec = RodSpec::reference(vec![BandSpec::new(0.05, 0.5), BandSpec::new(0.2, 0.5)]).unwrap();
        assert_eq!(spec.bands()[0].distance_from_tip, 0.2);
    }

    #[test]
    fn json_uses_kpa_and_rejects_unknown_fields() {
        let spec = half_band();
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"pressure_kpa\":6.9"));
        let back: RodSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let extra = text.replacen('{', "{\"colour\":1,", 1);
        assert!(serde_json::from_str::<RodSpec>(&extra).is_err());
        let mat = MaterialModel::reference();
        let back: MaterialModel = serde_json::from_str(&serde_json::to_string(&mat).unwrap()).unwrap();
        assert_eq!(back, mat);
    }

    #[test]
    fn breakpoints_are_band_edges() {
        let spec = RodSpec::reference(vec![BandSpec::new(0.05, 0.5), BandSpec::new(0.1, 0.5)]).unwrap();
        let bp = spec.breakpoints();
        assert_eq!(bp.len(), 4);
        assert!(close(bp[0], 0.4925, 1e-12));
        assert!(close(bp[3], 0.5575, 1e-12));
    }
}

//! CSV tables: comma separated, '.' decimals, LF line endings, mandatory
//! header. Floats are written in shortest round-trip form.

use std::io::Write;
use std::path::Path;

use crate::calibration::MeasuredCurve;
use crate::lab::{ExperimentBattery, ForceDisplacementCurve};
use crate::solver::RodState;

use super::{read_file, IoError, Result};

pub const CURVE_HEADER: [&str; 2] = ["displacement_m", "force_n"];
pub const EVERSION_HEADER: [&str; 2] = ["reduction_ratio", "pressure_kpa"];
pub const STATE_HEADER: [&str; 19] = [
    "s", "Px", "Py", "Pz", "R11", "R12", "R13", "R21", "R22", "R23", "R31", "R32", "R33", "nx",
    "ny", "nz", "mx", "my", "mz",
];
pub const BATTERY_HEADER: [&str; 6] = [
    "variant",
    "band_count",
    "placements_mm",
    "reduction_ratio",
    "stiffness_index_n_per_m",
    "terminal_force_n",
];

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory writer")
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn state_csv(state: &RodState) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(STATE_HEADER).unwrap();
    for i in 0..state.len() {
        let p = state.positions[i];
        let r = state.rotations[i];
        let n = state.forces[i];
        let m = state.moments[i];
        let mut row = vec![num(state.stations[i]), num(p.x), num(p.y), num(p.z)];
        for a in 0..3 {
            for b in 0..3 {
                row.push(num(r[(a, b)]));
            }
        }
        row.extend([n.x, n.y, n.z, m.x, m.y, m.z].map(num));
        w.write_record(&row).unwrap();
    }
    finish(w)
}

pub fn curve_csv(samples: &[(f64, f64)]) -> Vec<u8> {
    pairs_csv(CURVE_HEADER, samples)
}

pub fn eversion_csv(points: &[(f64, f64)]) -> Vec<u8> {
    pairs_csv(EVERSION_HEADER, points)
}

fn pairs_csv(header: [&str; 2], rows: &[(f64, f64)]) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(header).unwrap();
    for &(a, b) in rows {
        w.write_record([num(a), num(b)]).unwrap();
    }
    finish(w)
}

pub fn battery_csv(battery: &ExperimentBattery) -> Vec<u8> {
    let mut w = writer(Vec::new());
    w.write_record(BATTERY_HEADER).unwrap();
    for r in &battery.results {
        let placements: Vec<String> = r.placements.iter().map(|d| num(d * 1e3)).collect();
        w.write_record([
            r.id.clone(),
            r.band_count.to_string(),
            placements.join(";"),
            r.reduction_ratio.map(num).unwrap_or_default(),
            num(r.stiffness_index()),
            num(r.terminal_force()),
        ])
        .unwrap();
    }
    finish(w)
}

/// Two-column numeric table with an exact header.
pub fn parse_pairs(bytes: &[u8], header: [&str; 2], origin: &str) -> Result<Vec<(f64, f64)>> {
    let err = |message: String| IoError::Parse {
        path: origin.to_string(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let found = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
    if found.len() != 2 || found.get(0) != Some(header[0]) || found.get(1) != Some(header[1]) {
        return Err(err(format!(
            "expected header `{},{}`, found `{}`",
            header[0],
            header[1],
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let line = i + 2;
        let field = |j: usize| -> Result<f64> {
            rec.get(j)
                .ok_or_else(|| err(format!("line {line}: missing column {}", header[j])))?
                .parse::<f64>()
                .map_err(|e| err(format!("line {line}, column {}: {e}", header[j])))
        };
        out.push((field(0)?, field(1)?));
    }
    Ok(out)
}

pub fn read_measured_curve(path: &Path, pressure_kpa: f64) -> Result<MeasuredCurve> {
    let origin = path.display().to_string();
    let pairs = parse_pairs(&read_file(path)?, CURVE_HEADER, &origin)?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    MeasuredCurve::new(pairs, label, pressure_kpa).map_err(|e| IoError::Parse {
        path: origin,
        message: e.to_string(),
    })
}

pub fn read_eversion_points(path: &Path) -> Result<Vec<(f64, f64)>> {
    parse_pairs(&read_file(path)?, EVERSION_HEADER, &path.display().to_string())
}

/// A plotted/exported curve re-read from CSV.
pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    parse_pairs(&read_file(path)?, CURVE_HEADER, &path.display().to_string())
}

pub fn curve_of(c: &ForceDisplacementCurve) -> Vec<u8> {
    curve_csv(c.samples())
}

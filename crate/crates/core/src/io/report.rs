use serde::Serialize;
use sha2::{Digest, Sha256};

/// Hex SHA-256 of the input document bytes.
pub fn digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantSummary {
    pub id: String,
    pub band_count: usize,
    pub placements_m: Vec<f64>,
    pub reduction_ratio: Option<f64>,
    /// `None` for an empty stroke.
    pub stiffness_index_n_per_m: Option<f64>,
    pub terminal_force_n: f64,
    pub terminal_displacement_m: f64,
    /// Only for single-rod runs; batteries keep curves, not shapes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tip_position_m: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shooting_residual_n_m: Option<f64>,
}

/// Deterministic run summary; wall-clock time is kept out of it so re-runs
/// compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub input_digest: String,
    pub results: Vec<VariantSummary>,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn new(command: &str, input: &[u8]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            input_digest: digest(input),
            results: Vec::new(),
            wall_clock_s: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Side file carrying the non-reproducible timing.
    pub fn timing_json(&self) -> String {
        format!(
            "{{\n  \"input_digest\": \"{}\",\n  \"wall_clock_s\": {}\n}}\n",
            self.input_digest, self.wall_clock_s
        )
    }
}

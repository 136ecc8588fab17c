//! Row types for every CSV the harness writes and reads back.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub model: String,
    pub x: f64,
    pub growth: f64,
    pub net_growth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub model: String,
    pub state_index: usize,
    pub state: f64,
    pub action_index: usize,
    pub quota: f64,
    pub escapement: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scenario: String,
    pub model: String,
    pub replicate: usize,
    pub t: usize,
    pub state: f64,
    pub action: f64,
    pub observed_next: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub model: String,
    pub replicate: usize,
    pub t: usize,
    pub state: f64,
    pub quota: f64,
    pub harvest: f64,
    pub reward: f64,
    pub next_state: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveRow {
    pub mode: String,
    pub replicate: usize,
    pub t: usize,
    pub state: f64,
    pub quota: f64,
    pub harvest: f64,
    pub reward: f64,
    pub belief_model1: f64,
    pub belief_top_label: String,
    pub belief_top_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiFile {
    pub voi: f64,
    pub relative_voi: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub relative_ci_low: f64,
    pub relative_ci_high: f64,
    pub npv_learning: f64,
    pub npv_planning: f64,
    pub reps: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: usize,
    #[serde(rename = "B")]
    pub bass: f64,
    #[serde(rename = "C")]
    pub cormorant: f64,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    #[serde(rename = "H3")]
    pub h3: f64,
}

/// One season of a regime under the truth; the final row has no harvest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub scenario: String,
    pub model: String,
    pub replicate: usize,
    pub t: usize,
    #[serde(rename = "B")]
    pub bass: f64,
    #[serde(rename = "C")]
    pub cormorant: f64,
    #[serde(rename = "H1")]
    pub h1: f64,
    #[serde(rename = "H2")]
    pub h2: f64,
    #[serde(rename = "H3")]
    pub h3: f64,
    #[serde(rename = "harvest_B")]
    pub harvest_bass: Option<f64>,
    #[serde(rename = "harvest_H")]
    pub harvest_herring: Option<f64>,
    pub utility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub model: String,
    /// `own` or `truth_optimum`.
    pub efforts: String,
    pub t: usize,
    #[serde(rename = "B_med")]
    pub b_med: f64,
    #[serde(rename = "B_lo")]
    pub b_lo: f64,
    #[serde(rename = "B_hi")]
    pub b_hi: f64,
    #[serde(rename = "C_med")]
    pub c_med: f64,
    #[serde(rename = "C_lo")]
    pub c_lo: f64,
    #[serde(rename = "C_hi")]
    pub c_hi: f64,
    #[serde(rename = "B_mean")]
    pub b_mean: f64,
    #[serde(rename = "C_mean")]
    pub c_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub model: String,
    pub effort_bass: f64,
    pub effort_herring: f64,
    pub value: f64,
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Csv(e.into_error().into()))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?;
    Ok(rows)
}

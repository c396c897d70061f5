//! Human judgments of generated responses and the γ curve fitted from them.

mod curve;
mod store;

pub use curve::{
    compute_gamma_curve, fit_gamma_opt, gamma_grid, per_emotion_curves, snap_to_grid, CurveOptions, GammaAssigner, GammaCurve,
    GAMMA_GRID_MAX, GAMMA_GRID_POINTS,
};
pub use store::{read_records, AnnotationStore};

use serde::{Deserialize, Serialize};

use crate::affect::{emotion_to_vad, vad_distance, EmotionDistribution, VadVector};
use crate::error::{Error, Result};

/// Allowed disagreement between a client-computed and the recomputed ΔE.
pub const DELTA_E_TOLERANCE: f64 = 1e-6;

/// One AffectButton judgment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: u64,
    pub prompt: String,
    pub response: String,
    pub target_emotion: EmotionDistribution<f64>,
    pub gamma_used: f64,
    pub annotated_vad: VadVector<f64>,
    /// `‖annotated_vad − M_VAD · target_emotion‖₂`.
    pub delta_e: f64,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// What a client submits; the store assigns `id` and `timestamp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewAnnotation {
    pub prompt: String,
    pub response: String,
    pub target_emotion: EmotionDistribution<f64>,
    pub gamma_used: f64,
    pub annotated_vad: VadVector<f64>,
    #[serde(default)]
    pub delta_e: Option<f64>,
}

pub fn delta_e(annotated: &VadVector<f64>, target: &EmotionDistribution<f64>) -> f64 {
    vad_distance(annotated, &emotion_to_vad(target))
}

impl NewAnnotation {
    /// Checks the judgment and returns the server-side ΔE.
    pub fn validate(&self) -> Result<f64> {
        if !self.annotated_vad.is_finite() || !self.annotated_vad.in_unit_cube() {
            return Err(Error::Annotation(format!("annotated VAD {:?} outside [0,1]^3", self.annotated_vad.to_array())));
        }
        if !self.gamma_used.is_finite() || self.gamma_used < 0.0 {
            return Err(Error::Annotation(format!("gamma_used must be a non-negative number, got {}", self.gamma_used)));
        }
        let d = delta_e(&self.annotated_vad, &self.target_emotion);
        if let Some(client) = self.delta_e {
            if !((client - d).abs() <= DELTA_E_TOLERANCE) {
                return Err(Error::Annotation(format!("delta_e {client} disagrees with recomputed {d}")));
            }
        }
        Ok(d)
    }
}

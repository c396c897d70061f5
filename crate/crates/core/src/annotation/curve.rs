use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use super::AnnotationRecord;
use crate::error::{Error, Result};

pub const GAMMA_GRID_POINTS: usize = 20;
pub const GAMMA_GRID_MAX: f64 = 10.0;

/// 20 evenly spaced values covering `[0, 10]`, both ends included.
pub fn gamma_grid() -> Vec<f64> {
    let step = GAMMA_GRID_MAX / (GAMMA_GRID_POINTS - 1) as f64;
    (0..GAMMA_GRID_POINTS).map(|i| if i + 1 == GAMMA_GRID_POINTS { GAMMA_GRID_MAX } else { i as f64 * step }).collect()
}

/// Index of the nearest grid point; halfway values go to the smaller one.
pub fn snap_to_grid(grid: &[f64], gamma: f64) -> usize {
    let mut best = 0;
    for (i, g) in grid.iter().enumerate() {
        if (g - gamma).abs() < (grid[best] - gamma).abs() {
            best = i;
        }
    }
    best
}

/// Mean ΔE per γ bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCurve {
    pub grid: Vec<f64>,
    /// `None` for empty bins.
    pub mean_delta_e: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveOptions {
    /// Keep only judgments whose annotated VAD norm exceeds this.
    pub min_vad_norm: Option<f64>,
}

impl CurveOptions {
    fn keeps(&self, r: &AnnotationRecord) -> bool {
        self.min_vad_norm.is_none_or(|t| r.annotated_vad.norm() > t)
    }
}

fn curve_of<'a>(records: impl Iterator<Item = &'a AnnotationRecord>) -> GammaCurve {
    let grid = gamma_grid();
    let mut sums = vec![0.0; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    for r in records {
        let i = snap_to_grid(&grid, r.gamma_used);
        sums[i] += r.delta_e;
        counts[i] += 1;
    }
    let mean_delta_e = sums.iter().zip(&counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
    GammaCurve { grid, mean_delta_e, counts }
}

pub fn compute_gamma_curve(records: &[AnnotationRecord], opts: &CurveOptions) -> Result<GammaCurve> {
    if records.is_empty() {
        return Err(Error::Empty("compute_gamma_curve"));
    }
    let curve = curve_of(records.iter().filter(|r| opts.keeps(r)));
    if curve.counts.iter().all(|&c| c == 0) {
        return Err(Error::Empty("compute_gamma_curve after filtering"));
    }
    Ok(curve)
}

/// One curve per dominant target emotion.
pub fn per_emotion_curves(records: &[AnnotationRecord], opts: &CurveOptions) -> BTreeMap<String, GammaCurve> {
    let mut groups: BTreeMap<String, Vec<&AnnotationRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| opts.keeps(r)) {
        groups.entry(r.target_emotion.argmax().name().to_string()).or_default().push(r);
    }
    groups.into_iter().map(|(k, v)| (k, curve_of(v.into_iter()))).collect()
}

/// γ with the smallest mean ΔE among non-empty bins; ties go to the smaller γ.
pub fn fit_gamma_opt(curve: &GammaCurve) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for (g, m) in curve.grid.iter().zip(&curve.mean_delta_e) {
        if let Some(m) = *m {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((*g, m));
            }
        }
    }
    best.map(|(g, _)| g).ok_or(Error::Empty("fit_gamma_opt"))
}

/// Hands out grid values in turn so every bin fills at the same rate.
#[derive(Debug, Default)]
pub struct GammaAssigner {
    next: AtomicUsize,
}

impl GammaAssigner {
    pub fn starting_at(n: usize) -> Self {
        Self { next: AtomicUsize::new(n) }
    }

    pub fn next_gamma(&self) -> f64 {
        let i = self.next.fetch_add(1, Ordering::Relaxed) % GAMMA_GRID_POINTS;
        gamma_grid()[i]
    }
}

//! Deterministic transition maps.

use serde::{Deserialize, Serialize};

/// One affine map `x' = matrix · x + offset` (matrix stored row-major,
/// `next_dim × state_dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub matrix: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
}

impl AffineMap {
    /// Uniform scaling plus offset.
    pub fn scaling(state_dim: usize, scale: f64, offset: Vec<f64>) -> Self {
        let matrix = (0..offset.len())
            .map(|r| {
                (0..state_dim)
                    .map(|c| if r == c { scale } else { 0.0 })
                    .collect()
            })
            .collect();
        AffineMap { matrix, offset }
    }

    /// Planar rotation by `angle` scaled by `scale`, plus offset (2-D only).
    pub fn scaled_rotation(scale: f64, angle: f64, offset: Vec<f64>) -> Self {
        let (sin, cos) = angle.sin_cos();
        AffineMap {
            matrix: vec![
                vec![scale * cos, -scale * sin],
                vec![scale * sin, scale * cos],
            ],
            offset,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, off)| row.iter().zip(x).map(|(m, xi)| m * xi).sum::<f64>() + off)
            .collect()
    }
}

/// Per-action deterministic transition map. Affine families cover every
/// builtin environment; anything richer can be added as a new variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransitionSpec {
    Affine { maps: Vec<AffineMap> },
}

impl TransitionSpec {
    pub fn action_count(&self) -> usize {
        match self {
            TransitionSpec::Affine { maps } => maps.len(),
        }
    }

    pub fn apply(&self, x: &[f64], action: usize) -> Vec<f64> {
        match self {
            TransitionSpec::Affine { maps } => maps[action].apply(x),
        }
    }
}

//! Axis-aligned boxes and per-action support regions.
//!
//! Supports are finite unions of closed boxes so that connectivity and
//! pairwise intersection are decidable exactly.

use serde::{Deserialize, Serialize};

/// Closed axis-aligned box `[lo, hi]` in each coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box corner dimensions differ");
        BoxRegion { lo, hi }
    }

    /// The full unit box `[0,1]^dim`.
    pub fn unit(dim: usize) -> Self {
        BoxRegion {
            lo: vec![0.0; dim],
            hi: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn is_nonempty(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| l <= h)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h)
    }

    /// Closed boxes intersect iff they overlap (or touch) in every coordinate.
    pub fn intersects(&self, other: &BoxRegion) -> bool {
        self.dim() == other.dim()
            && self
                .lo
                .iter()
                .zip(&self.hi)
                .zip(other.lo.iter().zip(&other.hi))
                .all(|((&l1, &h1), (&l2, &h2))| l1 <= h2 && l2 <= h1)
    }

    pub fn contained_in_unit_box(&self) -> bool {
        self.lo.iter().all(|&l| l >= 0.0) && self.hi.iter().all(|&h| h <= 1.0)
    }
}

/// Per-action support regions: `regions[a]` is the union of boxes carrying the
/// conditional state mass of action `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSpec {
    pub regions: Vec<Vec<BoxRegion>>,
}

impl SupportSpec {
    /// Every action supported on the full unit box.
    pub fn full(dim: usize, action_count: usize) -> Self {
        SupportSpec {
            regions: vec![vec![BoxRegion::unit(dim)]; action_count],
        }
    }

    pub fn action_count(&self) -> usize {
        self.regions.len()
    }

    pub fn contains(&self, action: usize, x: &[f64]) -> bool {
        self.regions[action].iter().any(|b| b.contains(x))
    }

    /// Actions whose support contains `x`.
    pub fn actions_at(&self, x: &[f64]) -> Vec<usize> {
        (0..self.regions.len())
            .filter(|&a| self.contains(a, x))
            .collect()
    }

    /// Bounding box of the union of all supports.
    pub fn bounding_box(&self) -> BoxRegion {
        let dim = self.regions[0][0].dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for boxes in &self.regions {
            for b in boxes {
                for i in 0..dim {
                    lo[i] = lo[i].min(b.lo[i]);
                    hi[i] = hi[i].max(b.hi[i]);
                }
            }
        }
        BoxRegion { lo, hi }
    }

    /// Whether the union of boxes for one action is connected, decided by
    /// box-adjacency: two closed boxes are adjacent iff they intersect.
    pub fn action_support_connected(&self, action: usize) -> bool {
        let boxes = &self.regions[action];
        if boxes.len() <= 1 {
            return true;
        }
        let mut visited = vec![false; boxes.len()];
        let mut stack = vec![0usize];
        visited[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..boxes.len() {
                if !visited[j] && boxes[i].intersects(&boxes[j]) {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        visited.into_iter().all(|v| v)
    }

    /// Whether the supports of two actions intersect.
    pub fn supports_intersect(&self, a1: usize, a2: usize) -> bool {
        self.regions[a1]
            .iter()
            .any(|b1| self.regions[a2].iter().any(|b2| b1.intersects(b2)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_boxes_touching_at_boundary_intersect() {
        let a = BoxRegion::new(vec![0.0, 0.0], vec![0.5, 1.0]);
        let b = BoxRegion::new(vec![0.5, 0.0], vec![1.0, 1.0]);
        assert!(a.intersects(&b));
    }

    #[test]
    fn boxes_with_gap_do_not_intersect() {
        let a = BoxRegion::new(vec![0.0, 0.0], vec![0.45, 1.0]);
        let b = BoxRegion::new(vec![0.55, 0.0], vec![1.0, 1.0]);
        assert!(!a.intersects(&b));
    }

    #[test]
    fn two_piece_support_is_disconnected() {
        let support = SupportSpec {
            regions: vec![vec![
                BoxRegion::new(vec![0.0, 0.0], vec![0.3, 1.0]),
                BoxRegion::new(vec![0.7, 0.0], vec![1.0, 1.0]),
            ]],
        };
        assert!(!support.action_support_connected(0));
    }

    #[test]
    fn chained_boxes_are_connected() {
        let support = SupportSpec {
            regions: vec![vec![
                BoxRegion::new(vec![0.0, 0.0], vec![0.4, 1.0]),
                BoxRegion::new(vec![0.4, 0.0], vec![0.8, 1.0]),
                BoxRegion::new(vec![0.8, 0.0], vec![1.0, 1.0]),
            ]],
        };
        assert!(support.action_support_connected(0));
    }

    #[test]
    fn boundary_points_count_as_in_support() {
        let support = SupportSpec::full(2, 1);
        assert!(support.contains(0, &[0.0, 1.0]));
        assert!(!support.contains(0, &[1.0, 1.0 + 1e-12]));
    }
}

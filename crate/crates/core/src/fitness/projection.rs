//! Exact order-preserving projection of markers onto the arm polyline.
//!
//! For a fixed joint configuration the arm is piecewise linear, so the best
//! monotone assignment of markers to arc-length positions can be found
//! exactly: markers are distributed over segments in order by dynamic
//! programming, and markers sharing a segment are placed by weighted
//! isotonic regression of their orthogonal-projection parameters, clamped
//! to the segment.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::kinematics::ArmPolyline;

/// Weights below this are lifted to it when placing markers, so that
/// zero-weight markers still land on their closest admissible point.
const WEIGHT_FLOOR: f64 = 1e-9;

/// Minimum separation between consecutive sigmas.
pub const SIGMA_GAP: f64 = 1e-9;

/// Normalised arc-length position of each marker on the arm, strictly
/// increasing from base to hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SigmaAssignment(Vec<f64>);

impl SigmaAssignment {
    /// Accepts any nondecreasing vector in `[0, 1]`, separating ties by
    /// [`SIGMA_GAP`].
    pub fn new(mut sigma: Vec<f64>) -> Option<Self> {
        if sigma.iter().any(|s| !(0.0..=1.0).contains(s)) || sigma.windows(2).any(|w| w[0] > w[1]) {
            return None;
        }
        separate_ties(&mut sigma);
        Some(Self(sigma))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

fn separate_ties(sigma: &mut [f64]) {
    let m = sigma.len();
    if m < 2 || (m - 1) as f64 * SIGMA_GAP > 1.0 {
        return;
    }
    for i in 1..m {
        if sigma[i] < sigma[i - 1] + SIGMA_GAP {
            sigma[i] = sigma[i - 1] + SIGMA_GAP;
        }
    }
    if sigma[m - 1] > 1.0 {
        sigma[m - 1] = 1.0;
        for i in (0..m - 1).rev() {
            if sigma[i] > sigma[i + 1] - SIGMA_GAP {
                sigma[i] = sigma[i + 1] - SIGMA_GAP;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub sigma: SigmaAssignment,
    /// `sum_i w_i * |s(sigma_i) - p_i|^2` at the optimum.
    pub objective: f64,
}

/// Scratch buffers for repeated projections with the same marker count.
#[derive(Debug, Default, Clone)]
pub struct Projector {
    along: Vec<f64>,
    perp2: Vec<f64>,
    cost: Vec<f64>,
    next: Vec<f64>,
    choice: Vec<usize>,
    blocks: Vec<(f64, f64, usize)>,
    fitted: Vec<f64>,
    segment_of: Vec<usize>,
    t_of: Vec<f64>,
}

impl Projector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Minimal weighted squared distance only.
    pub fn objective(&mut self, poly: &ArmPolyline, markers: &[Vector3<f64>], weights: &[f64]) -> f64 {
        self.solve(poly, markers, weights, false)
    }

    pub fn project(&mut self, poly: &ArmPolyline, markers: &[Vector3<f64>], weights: &[f64]) -> Projection {
        let objective = self.solve(poly, markers, weights, true);
        let total = poly.length();
        let m = markers.len();
        let mut sigma: Vec<f64> = if total > 0.0 {
            (0..m)
                .map(|i| ((poly.cumulative[self.segment_of[i]] + self.t_of[i]) / total).clamp(0.0, 1.0))
                .collect()
        } else {
            vec![1.0; m]
        };
        separate_ties(&mut sigma);
        Projection {
            sigma: SigmaAssignment(sigma),
            objective,
        }
    }

    fn solve(&mut self, poly: &ArmPolyline, markers: &[Vector3<f64>], weights: &[f64], keep: bool) -> f64 {
        let m = markers.len();
        let segments = poly.segment_count();
        if segments == 0 {
            let base = poly.end();
            self.segment_of.clear();
            self.segment_of.resize(m, 0);
            self.t_of.clear();
            self.t_of.resize(m, 0.0);
            return markers
                .iter()
                .zip(weights)
                .map(|(p, w)| w * (p - base).norm_squared())
                .sum();
        }

        // Per (segment, marker): parameter of the orthogonal foot and squared
        // distance to the supporting line.
        self.along.clear();
        self.perp2.clear();
        for k in 0..segments {
            let start = poly.points[k];
            let dir = (poly.points[k + 1] - start) / (poly.cumulative[k + 1] - poly.cumulative[k]);
            for p in markers {
                let rel = p - start;
                let t = rel.dot(&dir);
                self.along.push(t);
                self.perp2.push((rel.norm_squared() - t * t).max(0.0));
            }
        }

        // cost[j]: best cost for markers 0..j on the segments processed so far.
        self.cost.clear();
        self.cost.resize(m + 1, f64::INFINITY);
        self.cost[0] = 0.0;
        self.next.clear();
        self.next.resize(m + 1, f64::INFINITY);
        if keep {
            self.choice.clear();
            self.choice.resize(segments * (m + 1), 0);
        }
        for k in 0..segments {
            let len = poly.cumulative[k + 1] - poly.cumulative[k];
            for j in 0..=m {
                let mut best = f64::INFINITY;
                let mut arg = j;
                for i in 0..=j {
                    if !self.cost[i].is_finite() {
                        continue;
                    }
                    let c = self.cost[i] + self.group_cost(k, i, j, m, len, weights);
                    if c < best {
                        best = c;
                        arg = i;
                    }
                }
                self.next[j] = best;
                if keep {
                    self.choice[k * (m + 1) + j] = arg;
                }
            }
            std::mem::swap(&mut self.cost, &mut self.next);
        }
        let total = self.cost[m];

        if keep {
            self.segment_of.clear();
            self.segment_of.resize(m, 0);
            self.t_of.clear();
            self.t_of.resize(m, 0.0);
            let mut j = m;
            for k in (0..segments).rev() {
                let i = self.choice[k * (m + 1) + j];
                if i < j {
                    let len = poly.cumulative[k + 1] - poly.cumulative[k];
                    self.fit_group(k, i, j, m, len, weights);
                    for (offset, r) in (i..j).enumerate() {
                        self.segment_of[r] = k;
                        self.t_of[r] = self.fitted[offset];
                    }
                }
                j = i;
            }
        }

        // The placement used floored weights; report the true objective.
        if keep && weights.iter().any(|&w| w < WEIGHT_FLOOR) {
            return (0..m)
                .map(|i| {
                    let k = self.segment_of[i];
                    let d = self.t_of[i] - self.along[k * m + i];
                    weights[i] * (self.perp2[k * m + i] + d * d)
                })
                .sum();
        }
        total
    }

    /// Weighted isotonic fit of markers `i..j` on segment `k`, clamped to
    /// `[0, len]`. Leaves the fitted parameters in `self.fitted`.
    fn fit_group(&mut self, k: usize, i: usize, j: usize, m: usize, len: f64, weights: &[f64]) {
        self.blocks.clear();
        #[allow(clippy::needless_range_loop)]
        for r in i..j {
            let w = weights[r].max(WEIGHT_FLOOR);
            let mut block = (w, w * self.along[k * m + r], 1usize);
            while let Some(&(pw, pwy, pc)) = self.blocks.last() {
                if pwy / pw <= block.1 / block.0 {
                    break;
                }
                self.blocks.pop();
                block = (block.0 + pw, block.1 + pwy, block.2 + pc);
            }
            self.blocks.push(block);
        }
        self.fitted.clear();
        for &(w, wy, count) in &self.blocks {
            let v = (wy / w).clamp(0.0, len);
            self.fitted.extend(std::iter::repeat_n(v, count));
        }
    }

    fn group_cost(&mut self, k: usize, i: usize, j: usize, m: usize, len: f64, weights: &[f64]) -> f64 {
        if i == j {
            return 0.0;
        }
        self.fit_group(k, i, j, m, len, weights);
        (i..j)
            .zip(&self.fitted)
            .map(|(r, &t)| {
                let d = t - self.along[k * m + r];
                weights[r].max(WEIGHT_FLOOR) * (self.perp2[k * m + r] + d * d)
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{arm_polyline, DhLink, JointConfig, RobotDesign};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly_of(design: &RobotDesign, q: &[f64]) -> ArmPolyline {
        arm_polyline(design, &JointConfig(q.to_vec())).unwrap()
    }

    /// Brute-force oracle: every monotone sigma vector on a uniform grid,
    /// plus the polyline breakpoints.
    fn grid_oracle(poly: &ArmPolyline, markers: &[Vector3<f64>], w: &[f64], steps: usize) -> f64 {
        let mut arc: Vec<f64> = (0..=steps).map(|k| poly.length() * k as f64 / steps as f64).collect();
        arc.extend(poly.cumulative.iter().copied());
        arc.sort_by(f64::total_cmp);
        let pts: Vec<Vector3<f64>> = arc.iter().map(|&s| poly.point_at_length(s)).collect();
        // best[g]: minimal cost so far with the last marker at grid index <= g.
        let mut best = vec![0.0; pts.len()];
        for (p, &wi) in markers.iter().zip(w) {
            let mut running = f64::INFINITY;
            for (g, b) in best.iter_mut().enumerate() {
                running = running.min(*b + wi * (pts[g] - p).norm_squared());
                *b = running;
            }
        }
        best[pts.len() - 1]
    }

    #[test]
    fn recovers_generating_anchors() {
        let design = RobotDesign::new(
            vec![
                DhLink::new(0.4, 0.3, 0.1),
                DhLink::new(-0.6, 0.25, 0.0),
                DhLink::new(0.2, 0.2, 0.05),
            ],
            None,
        )
        .unwrap();
        let poly = poly_of(&design, &[0.3, -0.8, 0.5]);
        let anchors = [0.3, 0.6, 1.0];
        let markers: Vec<_> = anchors.iter().map(|&s| poly.point_at(s).unwrap()).collect();
        let proj = Projector::new().project(&poly, &markers, &[1.0 / 6.0, 1.0 / 3.0, 0.5]);
        for (s, a) in proj.sigma.as_slice().iter().zip(anchors) {
            assert_relative_eq!(*s, a, epsilon = 1e-9);
        }
        assert!(proj.objective < 1e-16, "{}", proj.objective);
    }

    #[test]
    fn single_marker_at_end_effector() {
        let design = RobotDesign::new(vec![DhLink::new(0.0, 0.5, 0.2)], None).unwrap();
        let poly = poly_of(&design, &[0.7]);
        let proj = Projector::new().project(&poly, &[poly.end()], &[1.0]);
        assert_relative_eq!(proj.sigma.as_slice()[0], 1.0);
    }

    #[test]
    fn ordering_is_enforced_for_crossed_markers() {
        // Straight unit arm; markers in reverse order pool to their mean.
        let design = RobotDesign::new(vec![DhLink::new(0.0, 1.0, 0.0)], None).unwrap();
        let poly = poly_of(&design, &[0.0]);
        let markers = [Vector3::new(0.7, 0.0, 0.0), Vector3::new(0.3, 0.0, 0.0)];
        let proj = Projector::new().project(&poly, &markers, &[0.5, 0.5]);
        let s = proj.sigma.as_slice();
        assert!(s[0] < s[1]);
        assert_relative_eq!(s[0], 0.5, epsilon = 1e-8);
        assert_relative_eq!(proj.objective, 0.5 * 0.04 + 0.5 * 0.04, epsilon = 1e-12);
    }

    #[test]
    fn ties_are_separated() {
        let design = RobotDesign::new(vec![DhLink::new(0.0, 1.0, 0.0)], None).unwrap();
        let poly = poly_of(&design, &[0.0]);
        let beyond = [Vector3::new(1.5, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0)];
        let proj = Projector::new().project(&poly, &beyond, &[0.5, 0.5]);
        let s = proj.sigma.as_slice();
        assert!(s[0] < s[1] && s[1] <= 1.0);
    }

    #[test]
    fn zero_weight_marker_still_placed_sensibly() {
        let design = RobotDesign::new(vec![DhLink::new(0.0, 1.0, 0.0)], None).unwrap();
        let poly = poly_of(&design, &[0.0]);
        let markers = [Vector3::new(0.25, 0.1, 0.0), Vector3::new(0.9, 0.0, 0.0)];
        let proj = Projector::new().project(&poly, &markers, &[0.0, 1.0]);
        assert_relative_eq!(proj.sigma.as_slice()[0], 0.25, epsilon = 1e-9);
        assert_relative_eq!(proj.objective, 0.0, epsilon = 1e-20);
    }

    #[test]
    fn matches_grid_oracle_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.gen_range(1..=4);
            let links = (0..n)
                .map(|_| {
                    DhLink::new(
                        rng.gen_range(-1.5..1.5),
                        rng.gen_range(0.0..0.5),
                        rng.gen_range(0.0..0.5),
                    )
                })
                .collect();
            let design = RobotDesign::new(links, None).unwrap();
            let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let poly = poly_of(&design, &q);
            let m = rng.gen_range(1..=3);
            let markers: Vec<_> = (0..m)
                .map(|_| {
                    Vector3::new(
                        rng.gen_range(-0.8..0.8),
                        rng.gen_range(-0.8..0.8),
                        rng.gen_range(-0.8..0.8),
                    )
                })
                .collect();
            let w: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
            let exact = Projector::new().objective(&poly, &markers, &w);
            let grid = grid_oracle(&poly, &markers, &w, 10_000);
            // The grid can only be worse, and only by its resolution.
            assert!(exact <= grid + 1e-12, "exact {exact} grid {grid}");
            assert!(grid - exact < 1e-6, "exact {exact} grid {grid}");
        }
    }
}

//! Particle swarm over a box of joint angles, optionally intersected with a
//! continuity ball around the previous configuration. Used for the
//! per-frame multi-point IK problems.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::ContinuityNorm;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JointSwarmConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Stop after this many iterations without an improvement above
    /// `tolerance`.
    pub stall_iterations: usize,
    pub tolerance: f64,
    /// Stop as soon as the best cost is at or below this value.
    pub target: f64,
    /// Budget of the compass-search refinement run on the swarm's best.
    pub polish_evaluations: usize,
    /// Smallest compass step, radians.
    pub polish_step: f64,
    /// Iterations of the least-squares refinement, where a residual is available.
    pub lm_iterations: usize,
}

impl Default for JointSwarmConfig {
    fn default() -> Self {
        Self {
            particles: 40,
            iterations: 60,
            inertia: 0.7298,
            cognitive: 1.49618,
            social: 1.49618,
            stall_iterations: 15,
            tolerance: 1e-9,
            target: 1e-12,
            polish_evaluations: 300,
            polish_step: 1e-7,
            lm_iterations: 30,
        }
    }
}

/// Feasible search region: a box, optionally intersected with a ball.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub ball: Option<(Vec<f64>, f64, ContinuityNorm)>,
}

impl JointRegion {
    pub fn full(n: usize, q_min: f64, q_max: f64) -> Self {
        Self {
            lower: vec![q_min; n],
            upper: vec![q_max; n],
            ball: None,
        }
    }

    /// Box of joint limits intersected with `{q : |q - center| <= radius}`.
    pub fn around(center: &[f64], radius: f64, norm: ContinuityNorm, q_min: f64, q_max: f64) -> Self {
        // The per-joint ball is itself a box; tighten the bounds so sampling
        // stays efficient either way.
        let lower = center.iter().map(|c| (c - radius).max(q_min)).collect();
        let upper = center.iter().map(|c| (c + radius).min(q_max)).collect();
        let ball = match norm {
            ContinuityNorm::Euclidean => Some((center.to_vec(), radius, norm)),
            ContinuityNorm::PerJoint => None,
        };
        Self { lower, upper, ball }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, q: &[f64]) -> bool {
        let in_box = q
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| v >= lo && v <= hi);
        in_box
            && match &self.ball {
                None => true,
                Some((c, r, _)) => euclid(q, c) <= *r,
            }
    }

    /// Nearest-ish feasible point: clamp to the box, then pull radially
    /// into the ball. The centre lies in the box, so the result does too.
    pub fn project(&self, q: &mut [f64]) {
        for (v, (lo, hi)) in q.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
        if let Some((c, r, _)) = &self.ball {
            let dist = euclid(q, c);
            if dist > *r {
                // Shrink slightly past the boundary so rounding cannot leave
                // the point a hair outside.
                let scale = r / dist * (1.0 - 1e-12);
                for (v, cv) in q.iter_mut().zip(c) {
                    *v = cv + (*v - cv) * scale;
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        for _ in 0..64 {
            for (v, (lo, hi)) in out.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
                *v = if hi > lo { rng.gen_range(*lo..=*hi) } else { *lo };
            }
            if self.contains(out) {
                return;
            }
        }
        self.project(out);
    }

    fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(lo, hi)| hi - lo).collect()
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSolution {
    pub q: Vec<f64>,
    pub cost: f64,
    pub evaluations: usize,
}

/// Minimise `objective` over `region`. Every entry of `seeds` is placed in
/// the initial population verbatim (after projection); the rest is drawn
/// uniformly from the region.
pub fn minimize<F, R>(
    mut objective: F,
    region: &JointRegion,
    seeds: &[&[f64]],
    config: &JointSwarmConfig,
    rng: &mut R,
) -> JointSolution
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let n = region.dim();
    let count = config.particles.max(seeds.len()).max(1);
    let widths = region.widths();
    let mut evaluations = 0usize;
    let mut eval = |q: &[f64]| {
        evaluations += 1;
        let c = objective(q);
        if c.is_nan() {
            f64::INFINITY
        } else {
            c
        }
    };

    let mut pos = vec![0.0; count * n];
    let mut vel = vec![0.0; count * n];
    for (k, chunk) in pos.chunks_mut(n).enumerate() {
        match seeds.get(k) {
            Some(seed) => {
                chunk.copy_from_slice(seed);
                region.project(chunk);
            }
            None => region.sample(rng, chunk),
        }
    }
    for (v, w) in vel.iter_mut().zip(widths.iter().cycle()) {
        *v = if *w > 0.0 {
            rng.gen_range(-0.1 * w..=0.1 * w)
        } else {
            0.0
        };
    }
    let mut best_pos = pos.clone();
    let mut best_cost: Vec<f64> = pos.chunks(n).map(&mut eval).collect();
    let g = argmin(&best_cost);
    let mut g_pos = best_pos[g * n..(g + 1) * n].to_vec();
    let mut g_cost = best_cost[g];

    let mut stall = 0usize;
    for _ in 0..config.iterations {
        if g_cost <= config.target {
            break;
        }
        let before = g_cost;
        for k in 0..count {
            let x = &mut pos[k * n..(k + 1) * n];
            let v = &mut vel[k * n..(k + 1) * n];
            let p = &best_pos[k * n..(k + 1) * n];
            for d in 0..n {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let nv = config.inertia * v[d]
                    + config.cognitive * r1 * (p[d] - x[d])
                    + config.social * r2 * (g_pos[d] - x[d]);
                v[d] = nv.clamp(-widths[d], widths[d]);
                x[d] += v[d];
            }
            region.project(x);
            let c = eval(x);
            if c < best_cost[k] {
                best_cost[k] = c;
                best_pos[k * n..(k + 1) * n].copy_from_slice(x);
                if c < g_cost {
                    g_cost = c;
                    g_pos.copy_from_slice(x);
                }
            }
        }
        if before - g_cost > config.tolerance {
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.stall_iterations {
                break;
            }
        }
    }
    if config.polish_evaluations > 0 && g_cost.is_finite() && g_cost > config.target {
        let (q, c) = compass_polish(&mut eval, region, g_pos, g_cost, config);
        g_pos = q;
        g_cost = c;
    }

    JointSolution {
        q: g_pos,
        cost: g_cost,
        evaluations,
    }
}

/// Coordinate pattern search with step halving, kept inside the region.
fn compass_polish<F>(
    eval: &mut F,
    region: &JointRegion,
    mut x: Vec<f64>,
    mut fx: f64,
    config: &JointSwarmConfig,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let mean_width = region.widths().iter().sum::<f64>() / n.max(1) as f64;
    let mut step = (0.02 * mean_width).max(config.polish_step);
    let mut budget = config.polish_evaluations;
    let mut trial = x.clone();
    while step >= config.polish_step && budget > 0 {
        let mut improved = false;
        'dims: for d in 0..n {
            for dir in [1.0, -1.0] {
                if budget == 0 {
                    break 'dims;
                }
                trial.copy_from_slice(&x);
                trial[d] += dir * step;
                region.project(&mut trial);
                budget -= 1;
                let c = eval(&trial);
                if c < fx {
                    fx = c;
                    x.copy_from_slice(&trial);
                    improved = true;
                    if fx <= config.target {
                        return (x, fx);
                    }
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub q: Vec<f64>,
    /// Sum of squared residuals at `q`.
    pub cost: f64,
    pub evaluations: usize,
}

/// Levenberg-Marquardt on `residual(q, out)` from `x0`, with forward
/// difference Jacobians and every iterate projected into `region`.
pub fn least_squares_polish<F>(mut residual: F, region: &JointRegion, x0: &[f64], iterations: usize) -> LeastSquares
where
    F: FnMut(&[f64], &mut Vec<f64>),
{
    const H: f64 = 1e-7;
    let n = x0.len();
    let mut x = x0.to_vec();
    region.project(&mut x);
    let mut r = Vec::new();
    residual(&x, &mut r);
    let mut evaluations = 1;
    let sq = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();
    let mut cost = sq(&r);
    if !cost.is_finite() {
        return LeastSquares {
            q: x,
            cost,
            evaluations,
        };
    }
    let k = r.len();
    let mut jac = DMatrix::<f64>::zeros(k, n);
    let mut probe = x.clone();
    let mut rp = Vec::new();
    let mut trial = x.clone();
    let mut lambda = 1e-3;
    for _ in 0..iterations {
        if cost < 1e-30 {
            break;
        }
        for d in 0..n {
            probe.copy_from_slice(&x);
            let step = if x[d] + H <= region.upper[d] { H } else { -H };
            probe[d] += step;
            residual(&probe, &mut rp);
            evaluations += 1;
            for i in 0..k {
                jac[(i, d)] = (rp[i] - r[i]) / step;
            }
        }
        let rv = DVector::from_column_slice(&r);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * rv;
        let mut accepted = false;
        for _ in 0..8 {
            let mut a = jtj.clone();
            for d in 0..n {
                a[(d, d)] += lambda * (jtj[(d, d)] + 1e-9);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            for d in 0..n {
                trial[d] = x[d] + delta[d];
            }
            region.project(&mut trial);
            residual(&trial, &mut rp);
            evaluations += 1;
            let c = sq(&rp);
            if c < cost {
                let gain = cost - c;
                x.copy_from_slice(&trial);
                std::mem::swap(&mut r, &mut rp);
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if gain <= 1e-12 * cost {
                    return LeastSquares {
                        q: x,
                        cost,
                        evaluations,
                    };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    LeastSquares {
        q: x,
        cost,
        evaluations,
    }
}

fn argmin(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bv), (i, &x)| if x < bv { (i, x) } else { (bi, bv) },
        )
        .0
}

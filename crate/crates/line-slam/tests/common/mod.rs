//! Shared oracles and instance generators for the integration suites.

use line_slam::assoc::{
    chi2_gate, joint_nis, AssociationProblem, Hypothesis, LineMeasurement, PredictedObservation,
};
use line_slam::geometry::{transform_line_to_frame, LineParams, Point2, Pose2};
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive branch-and-bound oracle: enumerate every assignment of
/// measurements to distinct landmarks (or to nothing) that satisfies the
/// same admissibility rule as the search under test (each pair passes the
/// 2-dof gate; every prefix in measurement order passes the joint gate at
/// 2k dof), and return the best by (pairing count, then joint NIS).
pub fn exhaustive_best(problem: &AssociationProblem, significance: f64) -> Hypothesis {
    let nm = problem.measurements.len();
    let np = problem.predictions.len();
    let single_gate = chi2_gate(2, significance);
    let mut best = Hypothesis { pairings: vec![None; nm], joint_nis: 0.0 };

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        problem: &AssociationProblem,
        significance: f64,
        single_gate: f64,
        np: usize,
        nm: usize,
        mi: usize,
        pairs: &mut Vec<(usize, usize)>,
        assignment: &mut Vec<Option<usize>>,
        best: &mut Hypothesis,
    ) {
        if mi == nm {
            let nis = joint_nis(problem, pairs).unwrap_or(f64::INFINITY);
            let count = pairs.len();
            if count > best.pairing_count()
                || (count == best.pairing_count() && nis < best.joint_nis)
            {
                *best = Hypothesis { pairings: assignment.clone(), joint_nis: nis };
            }
            return;
        }
        for pi in 0..np {
            if pairs.iter().any(|&(_, p)| p == pi) {
                continue;
            }
            let Some(single) = joint_nis(problem, &[(mi, pi)]) else { continue };
            if single > single_gate {
                continue;
            }
            pairs.push((mi, pi));
            let k = pairs.len();
            let joint = joint_nis(problem, pairs).unwrap_or(f64::INFINITY);
            if joint <= chi2_gate(2 * k, significance) {
                assignment.push(Some(pi));
                recurse(problem, significance, single_gate, np, nm, mi + 1, pairs, assignment, best);
                assignment.pop();
            }
            pairs.pop();
        }
        assignment.push(None);
        recurse(problem, significance, single_gate, np, nm, mi + 1, pairs, assignment, best);
        assignment.pop();
    }

    let mut assignment = Vec::with_capacity(nm);
    let mut pairs = Vec::new();
    recurse(
        problem,
        significance,
        single_gate,
        np,
        nm,
        0,
        &mut pairs,
        &mut assignment,
        &mut best,
    );
    best
}

/// Random association instance with up to 4 measurements and 4 landmarks:
/// most measurements are noisy views of real landmarks, the rest clutter.
pub fn random_association_problem(seed: u64) -> AssociationProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pose = Pose2::new(
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-2.0..2.0),
        rng.gen_range(-3.0..3.0),
    );
    let nl = rng.gen_range(1..=4usize);
    let nm = rng.gen_range(1..=4usize);
    let landmarks: Vec<LineParams> = (0..nl)
        .map(|_| {
            LineParams::new(
                rng.gen_range(1.0..6.0),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            )
        })
        .collect();
    let predictions: Vec<PredictedObservation> = landmarks
        .iter()
        .enumerate()
        .map(|(id, l)| {
            let (predicted, jac_pose, jac_line) = transform_line_to_frame(l, &pose);
            PredictedObservation { landmark_id: id, predicted, jac_pose, jac_line }
        })
        .collect();
    let dim = 3 + 2 * nl;
    let mut joint_cov = DMatrix::zeros(dim, dim);
    for i in 0..3 {
        joint_cov[(i, i)] = if i < 2 { 0.03f64.powi(2) } else { 0.015f64.powi(2) };
    }
    for j in 0..nl {
        joint_cov[(3 + 2 * j, 3 + 2 * j)] = 0.02f64.powi(2);
        joint_cov[(4 + 2 * j, 4 + 2 * j)] = 0.01f64.powi(2);
    }
    let r_cov = Matrix2::from_diagonal(&nalgebra::Vector2::new(0.03f64.powi(2), 0.015f64.powi(2)));
    let measurements: Vec<LineMeasurement> = (0..nm)
        .map(|_| {
            let line = if rng.gen_bool(0.7) {
                let pick = rng.gen_range(0..nl);
                let base = predictions[pick].predicted;
                LineParams::new(
                    base.r + 0.03 * rng.gen_range(-1.5..1.5),
                    base.alpha + 0.015 * rng.gen_range(-1.5..1.5),
                )
            } else {
                LineParams::new(
                    rng.gen_range(0.5..8.0),
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                )
            };
            LineMeasurement { line, cov: r_cov }
        })
        .collect();
    AssociationProblem { measurements, predictions, joint_cov }
}

/// Points sampled along a line between projection coordinates t0 and t1,
/// with Gaussian perpendicular noise.
pub fn noisy_line_points(
    line: &LineParams,
    n: usize,
    t0: f64,
    t1: f64,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Point2> {
    let (nx, ny) = line.normal();
    (0..n)
        .map(|k| {
            let t = t0 + (t1 - t0) * k as f64 / (n.max(2) - 1) as f64;
            let p = line.point_at(t);
            let e = sigma * gauss(rng);
            Point2::new(p.x + e * nx, p.y + e * ny)
        })
        .collect()
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// The supporting line of a wall segment, in the canonical chart.
pub fn segment_line(ax: f64, ay: f64, bx: f64, by: f64) -> LineParams {
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();
    let (nx, ny) = (-dy / len, dx / len);
    LineParams::new(ax * nx + ay * ny, ny.atan2(nx))
}

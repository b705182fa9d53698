//! Data association: NIS-gated single compatibility, joint compatibility
//! branch and bound, and the segment-validation pre-gate.

use crate::geometry::LineParams;
use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Vector2};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("innovation covariance is singular to working precision")]
    SingularInnovation,
}

/// Default NIS gate: chi-square 2-dof 95% quantile.
pub const DEFAULT_GATE: f64 = 5.99;

/// A line observed in the current scan, with its measurement covariance.
#[derive(Debug, Clone)]
pub struct LineMeasurement {
    pub line: LineParams,
    pub cov: Matrix2<f64>,
}

/// A map landmark predicted into the robot frame at the current estimate.
#[derive(Debug, Clone)]
pub struct PredictedObservation {
    pub landmark_id: usize,
    pub predicted: LineParams,
    pub jac_pose: Matrix2x3<f64>,
    pub jac_line: Matrix2<f64>,
}

/// One association episode: measurements, predictions, and the joint
/// covariance of (pose, landmark_1, ..., landmark_n) in prediction order
/// (3 + 2n square).
#[derive(Debug, Clone)]
pub struct AssociationProblem {
    pub measurements: Vec<LineMeasurement>,
    pub predictions: Vec<PredictedObservation>,
    pub joint_cov: DMatrix<f64>,
}

/// A set of measurement-to-landmark pairings (None = unmatched) and its
/// joint normalized innovation squared.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub pairings: Vec<Option<usize>>,
    pub joint_nis: f64,
}

impl Hypothesis {
    pub fn pairing_count(&self) -> usize {
        self.pairings.iter().filter(|p| p.is_some()).count()
    }
}

/// Normalized innovation squared eᵀS⁻¹e.
pub fn nis(innovation: &Vector2<f64>, s: &Matrix2<f64>) -> Result<f64, AssocError> {
    let det = s.determinant();
    if !det.is_finite() || det.abs() < 1e-300 {
        return Err(AssocError::SingularInnovation);
    }
    let inv = s.try_inverse().ok_or(AssocError::SingularInnovation)?;
    Ok((innovation.transpose() * inv * innovation)[(0, 0)])
}

/// Innovation for a (measurement, prediction) pair, taking the line-chart
/// sign flip into account: both representations of the predicted line are
/// tried and the smaller-NIS innovation wins.
fn innovation(m: &LineMeasurement, p: &PredictedObservation) -> Vector2<f64> {
    let (dr, da) = p.predicted.residual_to(&m.line);
    Vector2::new(dr, da)
}

fn pair_innovation_cov(problem: &AssociationProblem, m: usize, p: usize) -> Matrix2<f64> {
    let pred = &problem.predictions[p];
    let cov = &problem.joint_cov;
    let pose_cov = cov.view((0, 0), (3, 3));
    let off = 3 + 2 * p;
    let line_cov = cov.view((off, off), (2, 2));
    let cross = cov.view((0, off), (3, 2));
    let hp = pred.jac_pose;
    let hl = pred.jac_line;
    let mut s = hp * pose_cov * hp.transpose()
        + hl * line_cov * hl.transpose()
        + problem.measurements[m].cov;
    let mixed = hp * cross * hl.transpose();
    s += mixed + mixed.transpose();
    s
}

/// Single compatibility: per-measurement candidate landmark lists with
/// NIS at most `gate`, sorted ascending by NIS.
pub fn single_compat(
    problem: &AssociationProblem,
    gate: f64,
) -> Vec<Vec<(usize, f64)>> {
    problem
        .measurements
        .iter()
        .enumerate()
        .map(|(mi, m)| {
            let mut cands: Vec<(usize, f64)> = problem
                .predictions
                .iter()
                .enumerate()
                .filter_map(|(pi, p)| {
                    let e = innovation(m, p);
                    let s = pair_innovation_cov(problem, mi, pi);
                    match nis(&e, &s) {
                        Ok(d) if d <= gate => Some((pi, d)),
                        _ => None,
                    }
                })
                .collect();
            cands.sort_by(|a, b| a.1.total_cmp(&b.1));
            cands
        })
        .collect()
}

pub fn chi2_gate(dof: usize, significance: f64) -> f64 {
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - significance)
}

/// Joint NIS of a set of pairings: stack the innovation and the full
/// (correlated) joint innovation covariance, then eᵀS⁻¹e.
pub fn joint_nis(problem: &AssociationProblem, pairs: &[(usize, usize)]) -> Option<f64> {
    let k = pairs.len();
    if k == 0 {
        return Some(0.0);
    }
    let dim = 2 * k;
    let nv = problem.joint_cov.nrows();
    let mut h = DMatrix::zeros(dim, nv);
    let mut e = DVector::zeros(dim);
    let mut r = DMatrix::zeros(dim, dim);
    for (row, &(mi, pi)) in pairs.iter().enumerate() {
        let m = &problem.measurements[mi];
        let p = &problem.predictions[pi];
        let inn = innovation(m, p);
        e[2 * row] = inn[0];
        e[2 * row + 1] = inn[1];
        for i in 0..2 {
            for j in 0..3 {
                h[(2 * row + i, j)] = p.jac_pose[(i, j)];
            }
            for j in 0..2 {
                h[(2 * row + i, 3 + 2 * pi + j)] = p.jac_line[(i, j)];
                r[(2 * row + i, 2 * row + j)] = m.cov[(i, j)];
            }
        }
    }
    let s = &h * &problem.joint_cov * h.transpose() + r;
    let chol = s.cholesky()?;
    let x = chol.solve(&e);
    Some(e.dot(&x))
}

/// Joint compatibility branch and bound.
///
/// Returns the hypothesis with the most pairings, ties broken by smallest
/// joint NIS. Every prefix of the returned hypothesis passes the chi-square
/// gate at 2k dof for k pairings. When `sv_probs` is given, the pair (m, l)
/// is admissible only if its geometric match probability is at least 0.5.
pub fn jcbb(
    problem: &AssociationProblem,
    significance: f64,
    sv_probs: Option<&[Vec<f64>]>,
) -> Hypothesis {
    let nm = problem.measurements.len();
    let admissible: Vec<Vec<bool>> = (0..nm)
        .map(|mi| {
            (0..problem.predictions.len())
                .map(|pi| sv_probs.is_none_or(|sv| sv[mi][pi] >= 0.5))
                .collect()
        })
        .collect();
    // Individual gates prune the tree before any joint solve.
    let singles = single_compat(problem, chi2_gate(2, significance));

    struct Search<'a> {
        problem: &'a AssociationProblem,
        admissible: &'a [Vec<bool>],
        singles: &'a [Vec<(usize, f64)>],
        significance: f64,
        best: Hypothesis,
    }

    impl Search<'_> {
        fn recurse(&mut self, mi: usize, pairs: &mut Vec<(usize, usize)>, assignment: &mut Vec<Option<usize>>) {
            let nm = self.problem.measurements.len();
            if pairs.len() + (nm - mi) < self.best.pairing_count() {
                return; // cannot beat the incumbent even pairing everything
            }
            if mi == nm {
                let count = pairs.len();
                let nis = joint_nis(self.problem, pairs).unwrap_or(f64::INFINITY);
                if count > self.best.pairing_count()
                    || (count == self.best.pairing_count() && nis < self.best.joint_nis)
                {
                    self.best = Hypothesis { pairings: assignment.clone(), joint_nis: nis };
                }
                return;
            }
            for &(pi, _) in &self.singles[mi] {
                if !self.admissible[mi][pi] || pairs.iter().any(|&(_, q)| q == pi) {
                    continue;
                }
                pairs.push((mi, pi));
                let k = pairs.len();
                let gate = chi2_gate(2 * k, self.significance);
                let ok = joint_nis(self.problem, pairs).is_some_and(|d| d <= gate);
                if ok {
                    assignment[mi] = Some(pi);
                    self.recurse(mi + 1, pairs, assignment);
                    assignment[mi] = None;
                }
                pairs.pop();
            }
            self.recurse(mi + 1, pairs, assignment);
        }
    }

    let mut search = Search {
        problem,
        admissible: &admissible,
        singles: &singles,
        significance,
        best: Hypothesis { pairings: vec![None; nm], joint_nis: 0.0 },
    };
    search.recurse(0, &mut Vec::new(), &mut vec![None; nm]);
    search.best
}

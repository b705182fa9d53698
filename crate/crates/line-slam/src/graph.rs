//! Full-SLAM smoothing backend: a factor graph over robot poses and line
//! landmarks, solved as sparse nonlinear least squares by Gauss-Newton
//! with Levenberg damping, plus marginal covariance recovery for the
//! association front end.
//!
//! Variable ordering is poses first, landmarks last. The linear solve is a
//! Cholesky factorization of the normal equations; at desk scale (a few
//! hundred poses) full relinearization per solve is cheap, so the
//! incremental mode simply runs one damped step per scan and a full solve
//! periodically.

use crate::geometry::{
    line_to_global, transform_line_to_frame, wrap_angle, LineParams, Pose2,
};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("linearized system is rank-deficient near {variable}; missing prior or unobserved landmark?")]
    IndeterminateSystem { variable: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarId {
    Pose(usize),
    Landmark(usize),
}

impl std::fmt::Display for VarId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VarId::Pose(i) => write!(f, "pose {i}"),
            VarId::Landmark(i) => write!(f, "landmark {i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PriorFactor {
    pub pose: usize,
    pub value: Pose2,
    pub info: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct OdometryFactor {
    pub from: usize,
    pub to: usize,
    pub u: Pose2,
    pub info: Matrix3<f64>,
}

#[derive(Debug, Clone)]
pub struct MeasurementFactor {
    pub pose: usize,
    pub landmark: usize,
    pub z: LineParams,
    pub info: Matrix2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct FactorGraph {
    pub num_poses: usize,
    pub num_landmarks: usize,
    pub priors: Vec<PriorFactor>,
    pub odometry: Vec<OdometryFactor>,
    pub measurements: Vec<MeasurementFactor>,
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub poses: Vec<Pose2>,
    pub landmarks: Vec<LineParams>,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Initial Levenberg damping factor.
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: 50, rel_tol: 1e-12, damping: 1e-9 }
    }
}

/// Pose composition x ⊕ u with exact Jacobians with respect to the
/// previous pose and the increment.
pub fn motion_model(x_prev: &Pose2, u: &Pose2) -> (Pose2, Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = x_prev.theta.sin_cos();
    let next = x_prev.compose(u);
    let jac_x = Matrix3::new(
        1.0, 0.0, -s * u.x - c * u.y,
        0.0, 1.0, c * u.x - s * u.y,
        0.0, 0.0, 1.0,
    );
    let jac_u = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    (next, jac_x, jac_u)
}

/// Predicted line observation h(x, l) with Jacobians; delegates to the
/// frame transform.
pub fn measurement_model(
    x: &Pose2,
    l: &LineParams,
) -> (LineParams, Matrix2x3<f64>, Matrix2<f64>) {
    transform_line_to_frame(l, x)
}

/// Residual h(x, l) − z on the (Δr, wrapped Δα) chart, choosing the line
/// representation (direct or r-flipped) that minimizes the information
/// norm, with Jacobians consistent with the choice.
fn measurement_residual(
    x: &Pose2,
    l: &LineParams,
    z: &LineParams,
    info: &Matrix2<f64>,
) -> (Vector2<f64>, Matrix2x3<f64>, Matrix2<f64>) {
    let (pred, jp, jl) = measurement_model(x, l);
    let direct = Vector2::new(pred.r - z.r, wrap_angle(pred.alpha - z.alpha));
    let flipped = Vector2::new(-pred.r - z.r, wrap_angle(pred.alpha + crate::geometry::PI - z.alpha));
    let nd = (direct.transpose() * info * direct)[(0, 0)];
    let nf = (flipped.transpose() * info * flipped)[(0, 0)];
    if nd <= nf {
        (direct, jp, jl)
    } else {
        let mut jp2 = jp;
        let mut jl2 = jl;
        for c in 0..3 {
            jp2[(0, c)] = -jp2[(0, c)];
        }
        jl2[(0, 0)] = -jl2[(0, 0)];
        jl2[(0, 1)] = -jl2[(0, 1)];
        (flipped, jp2, jl2)
    }
}

fn pose_offset(i: usize) -> usize {
    3 * i
}

impl FactorGraph {
    pub fn dim(&self) -> usize {
        3 * self.num_poses + 2 * self.num_landmarks
    }

    fn landmark_offset(&self, j: usize) -> usize {
        3 * self.num_poses + 2 * j
    }

    /// Pairs of variables coupled by at least one factor (the block
    /// sparsity pattern of the information matrix).
    pub fn connected_pairs(&self) -> std::collections::BTreeSet<(VarId, VarId)> {
        let mut set = std::collections::BTreeSet::new();
        for f in &self.odometry {
            set.insert((VarId::Pose(f.from.min(f.to)), VarId::Pose(f.from.max(f.to))));
        }
        for f in &self.measurements {
            set.insert((VarId::Pose(f.pose), VarId::Landmark(f.landmark)));
        }
        set
    }

    /// Total Mahalanobis objective at the given values.
    pub fn objective(&self, poses: &[Pose2], landmarks: &[LineParams]) -> f64 {
        let mut obj = 0.0;
        for f in &self.priors {
            let x = &poses[f.pose];
            let e = Vector3::new(
                x.x - f.value.x,
                x.y - f.value.y,
                wrap_angle(x.theta - f.value.theta),
            );
            obj += (e.transpose() * f.info * e)[(0, 0)];
        }
        for f in &self.odometry {
            let (pred, _, _) = motion_model(&poses[f.from], &f.u);
            let x = &poses[f.to];
            let e = Vector3::new(pred.x - x.x, pred.y - x.y, wrap_angle(pred.theta - x.theta));
            obj += (e.transpose() * f.info * e)[(0, 0)];
        }
        for f in &self.measurements {
            let (e, _, _) = measurement_residual(&poses[f.pose], &landmarks[f.landmark], &f.z, &f.info);
            obj += (e.transpose() * f.info * e)[(0, 0)];
        }
        obj
    }

    /// Assemble the Gauss-Newton normal equations H Δ = −g at the given
    /// linearization point. Returns (H, g, objective).
    fn linearize(&self, poses: &[Pose2], landmarks: &[LineParams]) -> (DMatrix<f64>, DVector<f64>, f64) {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        let mut obj = 0.0;

        let add_block = |h: &mut DMatrix<f64>, g: &mut DVector<f64>,
                             offs: &[usize], jacs: &[DMatrix<f64>],
                             info: &DMatrix<f64>, e: &DVector<f64>| {
            for (a, &oa) in offs.iter().enumerate() {
                let ja = &jacs[a];
                let jt_w = ja.transpose() * info;
                let gb = &jt_w * e;
                for i in 0..ja.ncols() {
                    g[oa + i] += gb[i];
                }
                for (b, &ob) in offs.iter().enumerate() {
                    let hb = &jt_w * &jacs[b];
                    for i in 0..hb.nrows() {
                        for j in 0..hb.ncols() {
                            h[(oa + i, ob + j)] += hb[(i, j)];
                        }
                    }
                }
            }
        };

        for f in &self.priors {
            let x = &poses[f.pose];
            let e = DVector::from_vec(vec![
                x.x - f.value.x,
                x.y - f.value.y,
                wrap_angle(x.theta - f.value.theta),
            ]);
            let info = DMatrix::from_fn(3, 3, |i, j| f.info[(i, j)]);
            obj += (e.transpose() * &info * &e)[(0, 0)];
            add_block(&mut h, &mut g, &[pose_offset(f.pose)], &[DMatrix::identity(3, 3)], &info, &e);
        }
        for f in &self.odometry {
            let (pred, jx, _) = motion_model(&poses[f.from], &f.u);
            let x = &poses[f.to];
            let e = DVector::from_vec(vec![
                pred.x - x.x,
                pred.y - x.y,
                wrap_angle(pred.theta - x.theta),
            ]);
            let info = DMatrix::from_fn(3, 3, |i, j| f.info[(i, j)]);
            obj += (e.transpose() * &info * &e)[(0, 0)];
            let j_from = DMatrix::from_fn(3, 3, |i, j| jx[(i, j)]);
            let j_to = -DMatrix::identity(3, 3);
            add_block(
                &mut h,
                &mut g,
                &[pose_offset(f.from), pose_offset(f.to)],
                &[j_from, j_to],
                &info,
                &e,
            );
        }
        for f in &self.measurements {
            let (e, jp, jl) = measurement_residual(&poses[f.pose], &landmarks[f.landmark], &f.z, &f.info);
            let info = DMatrix::from_fn(2, 2, |i, j| f.info[(i, j)]);
            let ev = DVector::from_vec(vec![e[0], e[1]]);
            obj += (ev.transpose() * &info * &ev)[(0, 0)];
            let jp = DMatrix::from_fn(2, 3, |i, j| jp[(i, j)]);
            let jl = DMatrix::from_fn(2, 2, |i, j| jl[(i, j)]);
            add_block(
                &mut h,
                &mut g,
                &[pose_offset(f.pose), self.landmark_offset(f.landmark)],
                &[jp, jl],
                &info,
                &ev,
            );
        }
        (h, g, obj)
    }

    fn indeterminate_hint(&self, h: &DMatrix<f64>) -> GraphError {
        // Point at the variable with the weakest diagonal information.
        let mut worst = (f64::INFINITY, VarId::Pose(0));
        for i in 0..self.num_poses {
            let d: f64 = (0..3).map(|k| h[(pose_offset(i) + k, pose_offset(i) + k)]).product();
            if d < worst.0 {
                worst = (d, VarId::Pose(i));
            }
        }
        for j in 0..self.num_landmarks {
            let o = self.landmark_offset(j);
            let d: f64 = (0..2).map(|k| h[(o + k, o + k)]).product();
            if d < worst.0 {
                worst = (d, VarId::Landmark(j));
            }
        }
        GraphError::IndeterminateSystem { variable: worst.1.to_string() }
    }

    fn apply_step(poses: &mut [Pose2], landmarks: &mut [LineParams], num_poses: usize, dx: &DVector<f64>) {
        for (i, p) in poses.iter_mut().enumerate() {
            *p = Pose2::new(p.x + dx[3 * i], p.y + dx[3 * i + 1], p.theta + dx[3 * i + 2]);
        }
        for (j, l) in landmarks.iter_mut().enumerate() {
            let o = 3 * num_poses + 2 * j;
            *l = LineParams::new(l.r + dx[o], l.alpha + dx[o + 1]);
        }
    }

    /// One damped Gauss-Newton step. Returns the new objective, or an error
    /// if the system is rank-deficient even with damping. The accepted step
    /// never increases the objective (a non-improving step is rejected and
    /// the values left unchanged).
    fn damped_step(
        &self,
        poses: &mut Vec<Pose2>,
        landmarks: &mut Vec<LineParams>,
        lambda: &mut f64,
    ) -> Result<f64, GraphError> {
        let (h, g, obj) = self.linearize(poses, landmarks);
        let mut lam = *lambda;
        for _ in 0..12 {
            let mut damped = h.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lam * h[(i, i)].max(1e-12);
            }
            let Some(chol) = damped.cholesky() else {
                lam = (lam * 10.0).max(1e-9);
                continue;
            };
            let dx = chol.solve(&(-&g));
            let mut new_poses = poses.clone();
            let mut new_landmarks = landmarks.clone();
            Self::apply_step(&mut new_poses, &mut new_landmarks, self.num_poses, &dx);
            let new_obj = self.objective(&new_poses, &new_landmarks);
            if new_obj <= obj + 1e-15 {
                *poses = new_poses;
                *landmarks = new_landmarks;
                *lambda = (lam * 0.3).max(1e-12);
                return Ok(new_obj);
            }
            lam *= 10.0;
        }
        if h.clone().cholesky().is_none() {
            return Err(self.indeterminate_hint(&h));
        }
        // Converged: no damping level improves the objective.
        *lambda = lam;
        Ok(obj)
    }

    /// Batch solve: damped Gauss-Newton to convergence. The returned
    /// objective never exceeds the initial one.
    pub fn solve(&self, initial: &Estimate, opts: &SolveOptions) -> Result<Estimate, GraphError> {
        let mut poses = initial.poses.clone();
        let mut landmarks = initial.landmarks.clone();
        let mut lambda = opts.damping;
        let (h0, _, _) = self.linearize(&poses, &landmarks);
        if h0.clone().cholesky().is_none() {
            return Err(self.indeterminate_hint(&h0));
        }
        let mut prev_obj = self.objective(&poses, &landmarks);
        for _ in 0..opts.max_iters {
            let obj = self.damped_step(&mut poses, &mut landmarks, &mut lambda)?;
            if prev_obj - obj < opts.rel_tol * prev_obj.max(1e-12) {
                prev_obj = obj;
                break;
            }
            prev_obj = obj;
        }
        Ok(Estimate { poses, landmarks, objective: prev_obj })
    }

    /// The Gauss-Newton information matrix JᵀΣ⁻¹J at the given estimate,
    /// for debugging and cross-checking marginal recovery.
    pub fn information_matrix(&self, estimate: &Estimate) -> DMatrix<f64> {
        self.linearize(&estimate.poses, &estimate.landmarks).0
    }

    /// Marginal covariance over the requested variables at a converged
    /// estimate: the corresponding block of the inverse Gauss-Newton
    /// information matrix, recovered column-by-column through the Cholesky
    /// factor.
    pub fn marginal_covariance(
        &self,
        estimate: &Estimate,
        blocks: &[VarId],
    ) -> Result<DMatrix<f64>, GraphError> {
        let (h, _, _) = self.linearize(&estimate.poses, &estimate.landmarks);
        let chol = h.clone().cholesky().ok_or_else(|| self.indeterminate_hint(&h))?;
        let mut indices = Vec::new();
        for b in blocks {
            match *b {
                VarId::Pose(i) => indices.extend((0..3).map(|k| pose_offset(i) + k)),
                VarId::Landmark(j) => indices.extend((0..2).map(|k| self.landmark_offset(j) + k)),
            }
        }
        let n = h.nrows();
        let mut cov = DMatrix::zeros(indices.len(), indices.len());
        for (col, &gi) in indices.iter().enumerate() {
            let mut e = DVector::zeros(n);
            e[gi] = 1.0;
            let x = chol.solve(&e);
            for (row, &gj) in indices.iter().enumerate() {
                cov[(row, col)] = x[gj];
            }
        }
        // Symmetrize away solve round-off.
        let cov = (&cov + cov.transpose()) * 0.5;
        Ok(cov)
    }
}

/// Incremental smoothing wrapper: appends factors scan by scan, runs one
/// damped step per scan and a full batch solve every `relinearize_every`
/// scans.
#[derive(Debug)]
pub struct Smoother {
    pub graph: FactorGraph,
    pub estimate: Estimate,
    pub opts: SolveOptions,
    relinearize_every: usize,
    scans_since_solve: usize,
    lambda: f64,
}

impl Smoother {
    pub fn new(prior_pose: Pose2, prior_info: Matrix3<f64>, opts: SolveOptions, relinearize_every: usize) -> Self {
        let graph = FactorGraph {
            num_poses: 1,
            priors: vec![PriorFactor { pose: 0, value: prior_pose, info: prior_info }],
            ..Default::default()
        };
        let estimate = Estimate { poses: vec![prior_pose], landmarks: vec![], objective: 0.0 };
        Self {
            graph,
            estimate,
            opts,
            relinearize_every: relinearize_every.max(1),
            scans_since_solve: 0,
            lambda: opts.damping,
        }
    }

    pub fn current_pose(&self) -> Pose2 {
        *self.estimate.poses.last().unwrap()
    }

    /// Append a pose connected by an odometry factor; the new pose is
    /// initialized by composing the odometry onto the last estimate.
    pub fn add_odometry(&mut self, u: Pose2, info: Matrix3<f64>) -> usize {
        let from = self.graph.num_poses - 1;
        let to = self.graph.num_poses;
        let (pred, _, _) = motion_model(&self.estimate.poses[from], &u);
        self.graph.odometry.push(OdometryFactor { from, to, u, info });
        self.graph.num_poses += 1;
        self.estimate.poses.push(pred);
        to
    }

    /// Create a landmark from its first observation: the robot-frame line
    /// is lifted to the global frame at the observing pose, so the initial
    /// prediction reproduces the measurement exactly.
    pub fn add_landmark(&mut self, pose: usize, z: LineParams, info: Matrix2<f64>) -> usize {
        let id = self.graph.num_landmarks;
        let l = line_to_global(&z, &self.estimate.poses[pose]);
        self.graph.num_landmarks += 1;
        self.estimate.landmarks.push(l);
        self.graph.measurements.push(MeasurementFactor { pose, landmark: id, z, info });
        id
    }

    pub fn add_measurement(&mut self, pose: usize, landmark: usize, z: LineParams, info: Matrix2<f64>) {
        self.graph.measurements.push(MeasurementFactor { pose, landmark, z, info });
    }

    /// Per-scan update: one damped Gauss-Newton step, escalated to a full
    /// batch solve every `relinearize_every` scans.
    pub fn update(&mut self) -> Result<(), GraphError> {
        self.scans_since_solve += 1;
        if self.scans_since_solve >= self.relinearize_every {
            self.estimate = self.graph.solve(&self.estimate, &self.opts)?;
            self.scans_since_solve = 0;
        } else {
            let obj = self.graph.damped_step(
                &mut self.estimate.poses,
                &mut self.estimate.landmarks,
                &mut self.lambda,
            )?;
            self.estimate.objective = obj;
        }
        Ok(())
    }

    /// Finish with a batch solve.
    pub fn finalize(&mut self) -> Result<(), GraphError> {
        self.estimate = self.graph.solve(&self.estimate, &self.opts)?;
        Ok(())
    }
}

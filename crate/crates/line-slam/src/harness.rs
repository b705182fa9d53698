//! Run harness: ground-truth matching metrics, the extraction benchmark,
//! trajectory generation, and the end-to-end SLAM pipeline with its file
//! outputs.
//!
//! All file outputs are deterministic for a fixed config and seed.
//! Wall-clock speed is reported only in the human-readable table (stderr),
//! never in output files.

use crate::assoc::{
    jcbb, single_compat, AssociationProblem, Hypothesis, LineMeasurement, PredictedObservation,
    DEFAULT_GATE,
};
use crate::extract::{extract, Cluster, ExtractError, ExtractorConfig, Method};
use crate::geometry::{transform_line_to_frame, LineParams, Point2, Pose2};
use crate::graph::{Smoother, SolveOptions, VarId};
use crate::segments::{
    extract_free_segments, geometric_match_prob, merge_segment_evidence, SegmentSet,
};
use crate::sim::{cast_scan, GroundTruthSegment, LaserScan, ScanRecord, SensorModel};
use anyhow::Context;
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_TOL_R: f64 = 0.05;
pub const DEFAULT_TOL_ALPHA: f64 = 0.05;

/// Aggregate extractor quality over a scan set.
#[derive(Debug, Clone, Serialize)]
pub struct ExtractionMetrics {
    /// Matched found lines over visible truth lines, percent.
    pub tp_rate: f64,
    /// Visible truth lines left unmatched, percent.
    pub nd_rate: f64,
    /// Mean |Δr| over matched pairs, millimeters.
    pub mean_err_r_mm: f64,
    /// Mean |Δα| over matched pairs, radians.
    pub mean_err_alpha_rad: f64,
    /// Extraction-stage throughput, scans per second wall clock.
    pub speed_hz: f64,
}

/// Ground-truth lines visible from `pose`, in the robot frame: a noise-free
/// cast groups hit points by the wall they land on; walls with at least
/// `min_hits` returns are fitted and collinear duplicates dropped.
pub fn visible_truth_lines(
    env: &[GroundTruthSegment],
    pose: &Pose2,
    sensor: &SensorModel,
    min_hits: usize,
) -> Vec<LineParams> {
    let noise_free = SensorModel { sigma: 0.0, ..*sensor };
    let scan = cast_scan(env, pose, &noise_free, 0, 0);
    let (st, ct) = pose.theta.sin_cos();
    let mut per_segment: std::collections::BTreeMap<u32, Vec<Point2>> = Default::default();
    for (_, p) in scan.hit_points() {
        let world = Point2::new(pose.x + ct * p.x - st * p.y, pose.y + st * p.x + ct * p.y);
        let owner = env
            .iter()
            .min_by(|a, b| a.distance_to(&world).total_cmp(&b.distance_to(&world)))
            .filter(|s| s.distance_to(&world) < 1e-6);
        if let Some(seg) = owner {
            per_segment.entry(seg.id).or_default().push(p);
        }
    }
    let mut lines: Vec<LineParams> = Vec::new();
    for pts in per_segment.values() {
        if pts.len() < min_hits {
            continue;
        }
        let Ok(fit) = crate::geometry::fit_line(pts, 1.0) else { continue };
        let duplicate = lines.iter().any(|l| {
            let (dr, da) = l.residual_to(&fit.params);
            dr.abs() < 1e-6 && da.abs() < 1e-6
        });
        if !duplicate {
            lines.push(fit.params);
        }
    }
    lines
}

/// Greedy one-to-one matching of found lines to truth lines. A pair is a
/// candidate when both |Δr| ≤ tol_r and |Δα| ≤ tol_alpha; candidates are
/// taken in order of |Δr|/tol_r + |Δα|/tol_alpha. Returns (found, truth)
/// index pairs.
pub fn match_lines(
    found: &[LineParams],
    truth: &[LineParams],
    tol_r: f64,
    tol_alpha: f64,
) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (fi, f) in found.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let (dr, da) = f.residual_to(t);
            if dr.abs() <= tol_r && da.abs() <= tol_alpha {
                candidates.push((dr.abs() / tol_r + da.abs() / tol_alpha, fi, ti));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_f = vec![false; found.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (_, fi, ti) in candidates {
        if !used_f[fi] && !used_t[ti] {
            used_f[fi] = true;
            used_t[ti] = true;
            pairs.push((fi, ti));
        }
    }
    pairs
}

/// Run every scan through one extractor; parallel over scans when the
/// `parallel` feature is on, sequential otherwise. Results are in scan
/// order either way.
pub type ExtractionResult = Result<(Vec<LineParams>, Vec<Cluster>), ExtractError>;

pub fn extract_all(scans: &[LaserScan], config: &ExtractorConfig) -> Vec<ExtractionResult> {
    #[cfg(feature = "parallel")]
    {
        scans.par_iter().map(|s| extract(s, config)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        scans.iter().map(|s| extract(s, config)).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchOutcome {
    pub name: String,
    pub metrics: ExtractionMetrics,
    /// Scans skipped because extraction failed.
    pub failures: usize,
}

/// Extraction benchmark over `poses`: noisy scans are cast once and fed to
/// each configured extractor; metrics are aggregated against noise-free
/// visibility ground truth. Wall clock covers the extraction stage only.
pub fn run_extraction_benchmark(
    env: &[GroundTruthSegment],
    sensor: &SensorModel,
    poses: &[Pose2],
    rng_seed: u64,
    extractors: &[(String, ExtractorConfig)],
    tol_r: f64,
    tol_alpha: f64,
) -> Vec<BenchOutcome> {
    let scans: Vec<LaserScan> = poses
        .iter()
        .enumerate()
        .map(|(i, p)| cast_scan(env, p, sensor, rng_seed, i as u64))
        .collect();
    let min_hits = extractors.iter().map(|(_, c)| c.min_cluster_size).min().unwrap_or(4);
    let truth: Vec<Vec<LineParams>> = poses
        .iter()
        .map(|p| visible_truth_lines(env, p, sensor, min_hits))
        .collect();

    extractors
        .iter()
        .map(|(name, config)| {
            let t0 = Instant::now();
            let results = extract_all(&scans, config);
            let elapsed = t0.elapsed().as_secs_f64();

            let mut tp_sum = 0.0;
            let mut nd_sum = 0.0;
            let mut scored_scans = 0usize;
            let mut err_r_sum = 0.0;
            let mut err_a_sum = 0.0;
            let mut matched = 0usize;
            let mut failures = 0usize;
            for (result, truth_lines) in results.iter().zip(&truth) {
                let found = match result {
                    Ok((lines, _)) => lines.clone(),
                    Err(ExtractError::NoClusters { .. }) => Vec::new(),
                    Err(_) => {
                        failures += 1;
                        continue;
                    }
                };
                if truth_lines.is_empty() {
                    continue;
                }
                let pairs = match_lines(&found, truth_lines, tol_r, tol_alpha);
                tp_sum += 100.0 * pairs.len() as f64 / truth_lines.len() as f64;
                nd_sum += 100.0 * (truth_lines.len() - pairs.len()) as f64 / truth_lines.len() as f64;
                scored_scans += 1;
                for (fi, ti) in pairs {
                    let (dr, da) = found[fi].residual_to(&truth_lines[ti]);
                    err_r_sum += dr.abs();
                    err_a_sum += da.abs();
                    matched += 1;
                }
            }
            let per_scan = |x: f64| if scored_scans > 0 { x / scored_scans as f64 } else { 0.0 };
            let per_match = |x: f64| if matched > 0 { x / matched as f64 } else { 0.0 };
            BenchOutcome {
                name: name.clone(),
                metrics: ExtractionMetrics {
                    tp_rate: per_scan(tp_sum),
                    nd_rate: per_scan(nd_sum),
                    mean_err_r_mm: per_match(err_r_sum) * 1000.0,
                    mean_err_alpha_rad: per_match(err_a_sum),
                    speed_hz: scans.len() as f64 / elapsed.max(1e-9),
                },
                failures,
            }
        })
        .collect()
}

/// Fixed header of the metrics CSV. Speed is deliberately absent: wall
/// clock varies between runs, and file outputs must be reproducible
/// byte for byte.
pub const METRICS_CSV_HEADER: &str =
    "extractor,tp_rate_percent,nd_rate_percent,mean_err_r_mm,mean_err_alpha_rad";

pub fn metrics_csv(outcomes: &[BenchOutcome]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for o in outcomes {
        out.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.6}\n",
            o.name, o.metrics.tp_rate, o.metrics.nd_rate, o.metrics.mean_err_r_mm,
            o.metrics.mean_err_alpha_rad
        ));
    }
    out
}

/// Human-readable table, including wall-clock speed.
pub fn metrics_table(outcomes: &[BenchOutcome]) -> String {
    let mut out = format!(
        "{:<12} {:>8} {:>8} {:>12} {:>14} {:>10} {:>6}\n",
        "extractor", "TP [%]", "ND [%]", "err_r [mm]", "err_a [rad]", "speed [Hz]", "fail"
    );
    for o in outcomes {
        out.push_str(&format!(
            "{:<12} {:>8.2} {:>8.2} {:>12.2} {:>14.4} {:>10.1} {:>6}\n",
            o.name,
            o.metrics.tp_rate,
            o.metrics.nd_rate,
            o.metrics.mean_err_r_mm,
            o.metrics.mean_err_alpha_rad,
            o.metrics.speed_hz,
            o.failures
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum AssociationMode {
    Sct,
    Jct,
    #[default]
    JctSv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedExtractor {
    pub name: String,
    pub config: ExtractorConfig,
}

fn default_scan_count() -> usize {
    200
}

/// The four-way comparison set used by the shipped benchmark: split-and-merge
/// and line tracking, each with and without odds-ratio merging. The base
/// thresholds are deliberately tight (2σ split deviation, 2σ tracking gate,
/// 6-point minimum cluster) so that over-splitting is the failure mode the
/// merge stage has to repair.
pub fn comparison_extractors() -> Vec<NamedExtractor> {
    let sm = ExtractorConfig {
        split_distance: 0.015,
        min_cluster_size: 6,
        ..ExtractorConfig::new(Method::SplitAndMerge, false)
    };
    let lt = ExtractorConfig {
        gate_sigmas: 2.0,
        min_cluster_size: 6,
        ..ExtractorConfig::new(Method::LineTracking, false)
    };
    vec![
        NamedExtractor { name: "SM".into(), config: sm.clone() },
        NamedExtractor { name: "SM+ORT".into(), config: ExtractorConfig { use_ort: true, ..sm } },
        NamedExtractor { name: "LT".into(), config: lt.clone() },
        NamedExtractor { name: "LT+ORT".into(), config: ExtractorConfig { use_ort: true, ..lt } },
    ]
}
fn default_extractors() -> Vec<NamedExtractor> {
    let mut v = Vec::new();
    for (name, method) in [
        ("SW", Method::SlidingWindow),
        ("SM", Method::SplitAndMerge),
        ("LT", Method::LineTracking),
        ("SR", Method::SequentialRansac),
    ] {
        v.push(NamedExtractor { name: name.into(), config: ExtractorConfig::new(method, false) });
        v.push(NamedExtractor {
            name: format!("{name}+ORT"),
            config: ExtractorConfig::new(method, true),
        });
    }
    v
}
fn default_significance() -> f64 {
    0.01
}
fn default_odom_sigma_xy() -> f64 {
    0.01
}
fn default_odom_sigma_theta() -> f64 {
    0.005
}
fn default_relinearize() -> usize {
    10
}
fn default_tol_r() -> f64 {
    DEFAULT_TOL_R
}
fn default_tol_alpha() -> f64 {
    DEFAULT_TOL_ALPHA
}

/// One configuration file drives both the extraction benchmark and the
/// SLAM pipeline; unused fields are ignored by each command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub environment: PathBuf,
    /// SLAM input scan log (JSONL); the benchmark generates its own scans.
    #[serde(default)]
    pub scan_log: Option<PathBuf>,
    #[serde(default = "default_scan_count")]
    pub scan_count: usize,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default = "default_extractors")]
    pub extractors: Vec<NamedExtractor>,
    #[serde(default)]
    pub association: AssociationMode,
    #[serde(default = "default_significance")]
    pub significance: f64,
    #[serde(default = "default_odom_sigma_xy")]
    pub odom_sigma_xy: f64,
    #[serde(default = "default_odom_sigma_theta")]
    pub odom_sigma_theta: f64,
    #[serde(default = "default_relinearize")]
    pub relinearize_every: usize,
    #[serde(default = "default_tol_r")]
    pub tol_r: f64,
    #[serde(default = "default_tol_alpha")]
    pub tol_alpha: f64,
    #[serde(default)]
    pub rng_seed: u64,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        if !config.environment.exists() {
            anyhow::bail!("environment file {} does not exist", config.environment.display());
        }
        Ok(config)
    }
}

/// Poses along an ellipse inscribed in the environment's bounding box,
/// heading tangent to the loop. Deterministic.
pub fn loop_trajectory(env: &[GroundTruthSegment], count: usize) -> Vec<Pose2> {
    let (lo, hi) = crate::sim::bounding_box(env);
    let cx = 0.5 * (lo.x + hi.x);
    let cy = 0.5 * (lo.y + hi.y);
    let rx = 0.335 * (hi.x - lo.x);
    let ry = 0.335 * (hi.y - lo.y);
    (0..count)
        .map(|k| {
            let phi = crate::geometry::TAU * k as f64 / count as f64;
            let (s, c) = phi.sin_cos();
            let heading = (ry * c).atan2(-rx * s);
            Pose2::new(cx + rx * c, cy + ry * s, heading)
        })
        .collect()
}

/// A map landmark with its accumulated segment evidence.
#[derive(Debug, Clone)]
pub struct Landmark {
    pub id: usize,
    /// Global-frame line, kept in sync with the graph estimate.
    pub line: LineParams,
    pub occupied: SegmentSet,
    pub free: SegmentSet,
    pub covariance: Matrix2<f64>,
    pub observations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanAssociation {
    pub pose_id: u64,
    /// One entry per extracted line: the landmark it was paired with, or
    /// null for a new landmark.
    pub pairings: Vec<Option<usize>>,
}

#[derive(Debug)]
pub struct SlamResult {
    pub trajectory: Vec<(u64, Pose2)>,
    pub dead_reckoning: Vec<(u64, Pose2)>,
    pub landmarks: Vec<Landmark>,
    pub associations: Vec<ScanAssociation>,
}

/// Covariance of a fitted line from the fit's chi-square curvature,
/// floored for conditioning.
pub fn fit_covariance(cluster: &Cluster) -> Matrix2<f64> {
    let h = cluster.fit.hessian;
    let cov = (h * 0.5).try_inverse().unwrap_or_else(|| Matrix2::identity() * 1e-2);
    cov + Matrix2::from_diagonal(&nalgebra::Vector2::new(1e-8, 1e-8))
}

const FREE_MARGIN: f64 = 0.1;

fn observation_segments(
    cluster: &Cluster,
    scan: &LaserScan,
    pose: &Pose2,
    on_line: &LineParams,
    gap_break: f64,
) -> SegmentSet {
    let pts = scan.hit_points();
    let (st, ct) = pose.theta.sin_cos();
    let by_index: std::collections::HashMap<usize, Point2> = pts.into_iter().collect();
    let ts: Vec<f64> = cluster
        .point_indices
        .iter()
        .filter_map(|i| by_index.get(i))
        .map(|p| {
            let world = Point2::new(pose.x + ct * p.x - st * p.y, pose.y + st * p.x + ct * p.y);
            crate::geometry::project_onto_line(&world, on_line)
        })
        .collect();
    SegmentSet::from_projections(*on_line, ts, gap_break)
}

fn greedy_single_compat(problem: &AssociationProblem) -> Hypothesis {
    let singles = single_compat(problem, DEFAULT_GATE);
    let mut taken = vec![false; problem.predictions.len()];
    let mut pairings = Vec::with_capacity(problem.measurements.len());
    let mut total = 0.0;
    for cands in &singles {
        let pick = cands.iter().find(|(pi, _)| !taken[*pi]);
        match pick {
            Some(&(pi, d)) => {
                taken[pi] = true;
                total += d;
                pairings.push(Some(pi));
            }
            None => pairings.push(None),
        }
    }
    Hypothesis { pairings, joint_nis: total }
}

/// End-to-end pipeline: per scan, extract lines, associate against the map
/// with the configured gate, grow the factor graph, and run the smoother.
pub fn run_slam(config: &RunConfig, records: &[ScanRecord]) -> anyhow::Result<SlamResult> {
    anyhow::ensure!(!records.is_empty(), "scan log is empty");
    let extractor = config
        .extractors
        .first()
        .map(|e| e.config.clone())
        .unwrap_or_else(|| ExtractorConfig::new(Method::SplitAndMerge, true));
    let gap_break = extractor.break_distance;

    let prior_pose = records[0].truth_pose().unwrap_or_else(Pose2::origin);
    let prior_info = Matrix3::from_diagonal(&Vector3::new(1e6, 1e6, 1e6));
    let odom_info = Matrix3::from_diagonal(&Vector3::new(
        config.odom_sigma_xy.powi(-2),
        config.odom_sigma_xy.powi(-2),
        config.odom_sigma_theta.powi(-2),
    ));
    let mut smoother = Smoother::new(
        prior_pose,
        prior_info,
        SolveOptions::default(),
        config.relinearize_every,
    );
    let mut landmarks: Vec<Landmark> = Vec::new();
    let mut associations = Vec::new();
    let mut dead_reckoning = vec![(records[0].pose_id, prior_pose)];

    for (i, record) in records.iter().enumerate() {
        let scan = record.to_scan(&config.sensor);
        let pose_idx = if i == 0 {
            0
        } else {
            let u = record
                .odom_increment()
                .ok_or_else(|| anyhow::anyhow!("scan {} has no odometry", record.pose_id))?;
            let dr = dead_reckoning.last().unwrap().1.compose(&u);
            dead_reckoning.push((record.pose_id, dr));
            smoother.add_odometry(u, odom_info)
        };
        let pose_est = smoother.estimate.poses[pose_idx];

        let (lines, clusters) = match extract(&scan, &extractor) {
            Ok(r) => r,
            Err(ExtractError::NoClusters { .. }) => (Vec::new(), Vec::new()),
            Err(e) => anyhow::bail!("extraction failed on scan {}: {e}", record.pose_id),
        };

        let measurements: Vec<LineMeasurement> = clusters
            .iter()
            .zip(&lines)
            .map(|(c, l)| LineMeasurement { line: *l, cov: fit_covariance(c) })
            .collect();
        let predictions: Vec<PredictedObservation> = landmarks
            .iter()
            .map(|lm| {
                let (pred, jac_pose, jac_line) = transform_line_to_frame(&lm.line, &pose_est);
                PredictedObservation { landmark_id: lm.id, predicted: pred, jac_pose, jac_line }
            })
            .collect();
        let mut vars = vec![VarId::Pose(pose_idx)];
        vars.extend(landmarks.iter().map(|lm| VarId::Landmark(lm.id)));
        let joint_cov = smoother
            .graph
            .marginal_covariance(&smoother.estimate, &vars)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let problem = AssociationProblem { measurements, predictions, joint_cov };

        let hypothesis = match config.association {
            AssociationMode::Sct => greedy_single_compat(&problem),
            AssociationMode::Jct => jcbb(&problem, config.significance, None),
            AssociationMode::JctSv => {
                let sv: Vec<Vec<f64>> = clusters
                    .iter()
                    .map(|c| {
                        landmarks
                            .iter()
                            .map(|lm| {
                                let obs =
                                    observation_segments(c, &scan, &pose_est, &lm.line, gap_break);
                                geometric_match_prob(&obs, &lm.occupied, &lm.free).unwrap_or(0.5)
                            })
                            .collect()
                    })
                    .collect();
                jcbb(&problem, config.significance, Some(&sv))
            }
        };

        let mut pairing_log = Vec::with_capacity(clusters.len());
        for (mi, pairing) in hypothesis.pairings.iter().enumerate() {
            let z = problem.measurements[mi].line;
            let info = problem.measurements[mi]
                .cov
                .try_inverse()
                .unwrap_or_else(|| Matrix2::identity() * 1e2);
            let lm_id = match pairing {
                Some(pi) => {
                    let id = problem.predictions[*pi].landmark_id;
                    smoother.add_measurement(pose_idx, id, z, info);
                    landmarks[id].observations += 1;
                    id
                }
                None => {
                    let id = smoother.add_landmark(pose_idx, z, info);
                    landmarks.push(Landmark {
                        id,
                        line: smoother.estimate.landmarks[id],
                        occupied: SegmentSet::empty(smoother.estimate.landmarks[id]),
                        free: SegmentSet::empty(smoother.estimate.landmarks[id]),
                        covariance: Matrix2::identity(),
                        observations: 1,
                    });
                    id
                }
            };
            pairing_log.push(pairing.map(|_| lm_id));
            // Fold this observation's occupied evidence into the landmark.
            let lm = &mut landmarks[lm_id];
            let obs = observation_segments(&clusters[mi], &scan, &pose_est, &lm.line, gap_break);
            let (occ, free) =
                merge_segment_evidence((&lm.occupied, &lm.free), (&obs, &SegmentSet::empty(lm.line)));
            lm.occupied = occ;
            lm.free = free;
        }
        // Free-space evidence accrues for every landmark the scan sees
        // through, matched or not.
        for lm in &mut landmarks {
            let free_obs = extract_free_segments(&scan, &pose_est, &lm.line, FREE_MARGIN, gap_break);
            let (occ, free) = merge_segment_evidence(
                (&lm.occupied, &lm.free),
                (&SegmentSet::empty(lm.line), &free_obs),
            );
            lm.occupied = occ;
            lm.free = free;
        }
        associations.push(ScanAssociation { pose_id: record.pose_id, pairings: pairing_log });

        smoother.update().map_err(|e| anyhow::anyhow!("{e}"))?;
        for lm in &mut landmarks {
            lm.line = smoother.estimate.landmarks[lm.id];
        }
    }
    smoother.finalize().map_err(|e| anyhow::anyhow!("{e}"))?;
    for lm in &mut landmarks {
        lm.line = smoother.estimate.landmarks[lm.id];
        let cov = smoother
            .graph
            .marginal_covariance(&smoother.estimate, &[VarId::Landmark(lm.id)])
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        lm.covariance = Matrix2::new(cov[(0, 0)], cov[(0, 1)], cov[(1, 0)], cov[(1, 1)]);
    }

    let trajectory = records
        .iter()
        .zip(&smoother.estimate.poses)
        .map(|(r, p)| (r.pose_id, *p))
        .collect();
    Ok(SlamResult { trajectory, dead_reckoning, landmarks, associations })
}

/// On-disk schema of one mapped line: its parameters, covariance, and
/// evidence intervals in the line's projection coordinate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapLandmarkOut {
    pub id: usize,
    pub r: f64,
    pub alpha: f64,
    pub covariance: [[f64; 2]; 2],
    pub occupied: Vec<[f64; 2]>,
    pub free: Vec<[f64; 2]>,
    pub observations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapOut {
    pub seed: u64,
    pub landmarks: Vec<MapLandmarkOut>,
}

/// Serialize the final map (lines, evidence intervals, covariances).
pub fn map_json(result: &SlamResult, seed: u64) -> String {
    let out = MapOut {
        seed,
        landmarks: result
            .landmarks
            .iter()
            .map(|lm| MapLandmarkOut {
                id: lm.id,
                r: lm.line.r,
                alpha: lm.line.alpha,
                covariance: [
                    [lm.covariance[(0, 0)], lm.covariance[(0, 1)]],
                    [lm.covariance[(1, 0)], lm.covariance[(1, 1)]],
                ],
                occupied: lm.occupied.intervals().iter().map(|iv| [iv.t0, iv.t1]).collect(),
                free: lm.free.intervals().iter().map(|iv| [iv.t0, iv.t1]).collect(),
                observations: lm.observations,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&out).expect("map serializes")
}

/// Write map, trajectory, and association log under the output directory.
/// Returns the map path for rendering.
pub fn write_slam_outputs(
    result: &SlamResult,
    seed: u64,
    out_dir: &Path,
) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out_dir)?;
    let map_path = out_dir.join("map.json");
    std::fs::write(&map_path, map_json(result, seed))?;

    let mut traj = String::new();
    for (id, p) in &result.trajectory {
        traj.push_str(&serde_json::to_string(&serde_json::json!({
            "pose_id": id, "pose": [p.x, p.y, p.theta]
        }))?);
        traj.push('\n');
    }
    std::fs::write(out_dir.join("trajectory.jsonl"), traj)?;

    let mut assoc = String::new();
    for a in &result.associations {
        assoc.push_str(&serde_json::to_string(a)?);
        assoc.push('\n');
    }
    std::fs::write(out_dir.join("associations.jsonl"), assoc)?;
    Ok(map_path)
}

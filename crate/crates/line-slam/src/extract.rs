//! Multiple-line extraction from one scan: an initial segmentation
//! (sliding window, split-and-merge, line tracking, or sequential RANSAC)
//! followed by agglomerative merging driven by a Bayesian odds ratio.
//!
//! The merge criterion compares the marginal likelihood of keeping two
//! clusters separate against merging them, via a Laplace approximation
//! around each least-squares fit. Values of the ratio above one favor the
//! merged model; the greedy loop stops when no pair clears that threshold.

use crate::geometry::{
    fit_line_moments, perp_distance, GeometryError, LineFit, LineParams, Moments, Point2, PI,
};
use crate::sim::LaserScan;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExtractError {
    #[error("no group of {min} adjacent points exists in the scan")]
    NoClusters { min: usize },
    #[error("singular chi-square Hessian (determinant {det:.3e}); cluster too degenerate to merge")]
    SingularHessian { det: f64 },
    #[error("quadrature grid too coarse: halving the resolution moved log R by {delta:.3}")]
    GridTooCoarse { delta: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    SlidingWindow,
    SplitAndMerge,
    LineTracking,
    SequentialRansac,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub method: Method,
    pub use_ort: bool,
    /// Range noise standard deviation, meters.
    pub sigma: f64,
    /// Sensor maximum range; the scale factor of the odds-ratio prior.
    pub r_max: f64,
    pub min_cluster_size: usize,
    /// Cartesian distance between consecutive points that breaks adjacency.
    pub break_distance: f64,
    /// Split-and-merge: max deviation from the chord before splitting.
    pub split_distance: f64,
    /// Line tracking / sliding window gate, in multiples of sigma.
    pub gate_sigmas: f64,
    /// Sequential RANSAC: inlier threshold in multiples of sigma.
    pub ransac_inlier_sigmas: f64,
    pub ransac_max_iterations: usize,
    pub ransac_confidence: f64,
    pub rng_seed: u64,
}

impl ExtractorConfig {
    pub fn new(method: Method, use_ort: bool) -> Self {
        Self {
            method,
            use_ort,
            sigma: 0.010,
            r_max: 30.0,
            min_cluster_size: 4,
            break_distance: 0.5,
            split_distance: 0.05,
            gate_sigmas: 3.0,
            ransac_inlier_sigmas: 3.0,
            ransac_max_iterations: 200,
            ransac_confidence: 0.99,
            rng_seed: 0,
        }
    }
}

/// A disjoint subset of scan points with its cached least-squares fit.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Beam indices into the scan, ascending.
    pub point_indices: Vec<usize>,
    pub moments: Moments,
    pub fit: LineFit,
}

impl Cluster {
    fn from_points(indices: Vec<usize>, points: &[Point2], sigma: f64) -> Result<Self, GeometryError> {
        let moments = Moments::from_points(points);
        let fit = fit_line_moments(&moments, sigma)?;
        Ok(Self { point_indices: indices, moments, fit })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Segmentation {
    pub clusters: Vec<Cluster>,
    pub unassigned: Vec<usize>,
}

/// Log odds ratio for merging two clusters, from the Laplace approximation
/// of the marginal-likelihood ratio:
///
/// `log R = log(r_max/2) + ½·(log det Ha + log det Hb − log det Hc)
///        + ½·(χ²a + χ²b − χ²c)`
///
/// `R > 1` (log R > 0) favors the merged, (M−1)-lines model.
pub fn odds_ratio(
    fit_a: &LineFit,
    fit_b: &LineFit,
    fit_merged: &LineFit,
    r_max: f64,
) -> Result<f64, ExtractError> {
    let da = fit_a.hessian.determinant();
    let db = fit_b.hessian.determinant();
    let dc = fit_merged.hessian.determinant();
    for det in [da, db, dc] {
        if det <= 0.0 || !det.is_finite() {
            return Err(ExtractError::SingularHessian { det });
        }
    }
    Ok((r_max / 2.0).ln() + 0.5 * (da.ln() + db.ln() - dc.ln())
        + 0.5 * (fit_a.chi2 + fit_b.chi2 - fit_merged.chi2))
}

/// Log of `∫∫ e^{−χ²/2} dr dα` over r ∈ [0, r_max], α ∈ (−π, π] for one
/// cluster. For fixed α the integrand is Gaussian in r, so the r-integral
/// is taken in closed form (erf) and only α is gridded.
fn log_evidence_integral(m: &Moments, sigma: f64, r_max: f64, alpha_step: f64) -> f64 {
    let n = m.n as f64;
    let s2 = sigma * sigma;
    let steps = (2.0 * PI / alpha_step).ceil() as usize;
    let s_r = (s2 / n).sqrt(); // std of the r-profile
    let mut terms: Vec<f64> = Vec::with_capacity(steps);
    for k in 0..steps {
        let alpha = -PI + (k as f64 + 0.5) * (2.0 * PI / steps as f64);
        let (sa, ca) = alpha.sin_cos();
        let s1 = ca * m.sx + sa * m.sy;
        let s2m = ca * ca * m.sxx + 2.0 * sa * ca * m.sxy + sa * sa * m.syy;
        let mu = s1 / n;
        // χ²(r)/2 = n(r−μ)²/(2σ²) + residual/(2σ²)
        let resid = (s2m - s1 * s1 / n).max(0.0);
        let erf_term =
            erf((r_max - mu) / (s_r * std::f64::consts::SQRT_2)) - erf(-mu / (s_r * std::f64::consts::SQRT_2));
        if erf_term <= 0.0 {
            continue;
        }
        let log_r_integral = (s_r * (PI / 2.0).sqrt() * erf_term).ln();
        terms.push(-resid / (2.0 * s2) + log_r_integral);
    }
    if terms.is_empty() {
        return f64::NEG_INFINITY;
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln() + (2.0 * PI / steps as f64).ln()
}

/// Brute-force evidence-ratio oracle: numerically integrates the marginal
/// likelihoods of the separate and merged models and returns
/// `log(2π·r_max) + log Ic − log Ia − log Ib`. Used only to validate
/// [`odds_ratio`]; it shares no code with the Laplace path.
pub fn evidence_ratio_oracle(
    points_a: &[Point2],
    points_b: &[Point2],
    sigma: f64,
    r_max: f64,
    grid_resolution: f64,
) -> Result<f64, ExtractError> {
    assert!(points_a.len() <= 50 && points_b.len() <= 50, "oracle is for small clusters");
    let ma = Moments::from_points(points_a);
    let mb = Moments::from_points(points_b);
    let mc = ma.merged(&mb);
    let eval = |step: f64| {
        (2.0 * PI * r_max).ln() + log_evidence_integral(&mc, sigma, r_max, step)
            - log_evidence_integral(&ma, sigma, r_max, step)
            - log_evidence_integral(&mb, sigma, r_max, step)
    };
    let coarse = eval(grid_resolution);
    let fine = eval(grid_resolution / 2.0);
    let delta = (fine - coarse).abs();
    if delta > 0.05 {
        return Err(ExtractError::GridTooCoarse { delta });
    }
    Ok(fine)
}

/// Split hit beams into runs of adjacent points, breaking at non-hit beams
/// and at Cartesian discontinuities.
fn adjacency_runs(indexed: &[(usize, Point2)], break_distance: f64) -> Vec<Vec<usize>> {
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (k, (idx, p)) in indexed.iter().enumerate() {
        let adjacent = k > 0 && {
            let (prev_idx, prev_p) = &indexed[k - 1];
            idx - prev_idx == 1 && p.dist(prev_p) <= break_distance
        };
        if adjacent {
            runs.last_mut().unwrap().push(k);
        } else {
            runs.push(vec![k]);
        }
    }
    runs.into_iter().map(|r| r.to_vec()).collect()
}

/// Iterative end-point-fit: recursively split a run at the point farthest
/// from the chord while that distance exceeds the threshold.
fn split_and_merge(run: &[usize], pts: &[(usize, Point2)], threshold: f64, out: &mut Vec<Vec<usize>>) {
    if run.len() < 2 {
        return;
    }
    let a = pts[run[0]].1;
    let b = pts[*run.last().unwrap()].1;
    let chord = chord_line(&a, &b);
    let (mut worst_k, mut worst_d) = (0, 0.0);
    for (pos, &k) in run.iter().enumerate().skip(1).take(run.len() - 2) {
        let d = perp_distance(&pts[k].1, &chord);
        if d > worst_d {
            worst_d = d;
            worst_k = pos;
        }
    }
    if worst_d > threshold && run.len() > 2 {
        split_and_merge(&run[..worst_k], pts, threshold, out);
        split_and_merge(&run[worst_k..], pts, threshold, out);
    } else {
        out.push(run.to_vec());
    }
}

fn chord_line(a: &Point2, b: &Point2) -> LineParams {
    let alpha = (b.y - a.y).atan2(b.x - a.x) + PI / 2.0;
    let r = a.x * alpha.cos() + a.y * alpha.sin();
    LineParams::new(r, alpha)
}

fn line_tracking(run: &[usize], pts: &[(usize, Point2)], gate: f64, out: &mut Vec<Vec<usize>>) {
    let mut current: Vec<usize> = Vec::new();
    let mut moments = Moments::default();
    for &k in run {
        let p = pts[k].1;
        if current.len() < 2 {
            current.push(k);
            moments.push(&p);
            continue;
        }
        let fit = fit_line_moments(&moments, 1.0);
        let ok = match fit {
            Ok(f) => perp_distance(&p, &f.params) <= gate,
            Err(_) => true, // coincident seed points; accept and move on
        };
        if ok {
            current.push(k);
            moments.push(&p);
        } else {
            out.push(std::mem::take(&mut current));
            moments = Moments::default();
            current.push(k);
            moments.push(&p);
        }
    }
    if current.len() >= 2 {
        out.push(current);
    }
}

fn sliding_window(
    run: &[usize],
    pts: &[(usize, Point2)],
    window: usize,
    gate: f64,
    out: &mut Vec<Vec<usize>>,
) {
    let window = window.max(2);
    let mut start = 0;
    while start + window <= run.len() {
        let seed = &run[start..start + window];
        let moments = Moments::from_points(&seed.iter().map(|&k| pts[k].1).collect::<Vec<_>>());
        let seed_ok = match fit_line_moments(&moments, 1.0) {
            Ok(f) => seed.iter().all(|&k| perp_distance(&pts[k].1, &f.params) <= gate),
            Err(_) => false,
        };
        if !seed_ok {
            start += 1;
            continue;
        }
        // Grow forward while the running fit keeps accepting points.
        let mut current: Vec<usize> = seed.to_vec();
        let mut m = moments;
        let mut end = start + window;
        while end < run.len() {
            let p = pts[run[end]].1;
            let fit = fit_line_moments(&m, 1.0).expect("non-degenerate window");
            if perp_distance(&p, &fit.params) <= gate {
                current.push(run[end]);
                m.push(&p);
                end += 1;
            } else {
                break;
            }
        }
        out.push(current);
        start = end;
    }
}

fn sequential_ransac(
    run_points: &[(usize, Point2)],
    config: &ExtractorConfig,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Vec<usize>>,
) {
    let threshold = config.ransac_inlier_sigmas * config.sigma;
    let mut remaining: Vec<usize> = (0..run_points.len()).collect();
    loop {
        if remaining.len() < config.min_cluster_size {
            break;
        }
        let mut best_inliers: Vec<usize> = Vec::new();
        let mut iterations = config.ransac_max_iterations;
        let mut i = 0;
        while i < iterations {
            i += 1;
            let pick_a = remaining[rng.gen_range(0..remaining.len())];
            let pick_b = remaining[rng.gen_range(0..remaining.len())];
            if pick_a == pick_b {
                continue;
            }
            let (pa, pb) = (run_points[pick_a].1, run_points[pick_b].1);
            if pa.dist(&pb) < 1e-9 {
                continue;
            }
            let model = chord_line(&pa, &pb);
            let inliers: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&k| perp_distance(&run_points[k].1, &model) <= threshold)
                .collect();
            if inliers.len() > best_inliers.len() {
                best_inliers = inliers;
                // Standard 99%-confidence iteration bound, capped by config.
                let w = best_inliers.len() as f64 / remaining.len() as f64;
                let denom = (1.0 - w * w).max(1e-12).ln();
                let needed = ((1.0 - config.ransac_confidence).ln() / denom).ceil();
                iterations = iterations.min((needed.max(1.0)) as usize).max(i);
            }
        }
        if best_inliers.len() < config.min_cluster_size {
            break;
        }
        // Keep only runs of >= min_cluster_size consecutive beams.
        best_inliers.sort_unstable();
        let mut runs: Vec<Vec<usize>> = Vec::new();
        for &k in &best_inliers {
            match runs.last_mut() {
                Some(r) if run_points[k].0 == run_points[*r.last().unwrap()].0 + 1 => r.push(k),
                _ => runs.push(vec![k]),
            }
        }
        let mut consumed = Vec::new();
        for r in runs.into_iter().filter(|r| r.len() >= config.min_cluster_size) {
            consumed.extend_from_slice(&r);
            out.push(r);
        }
        if consumed.is_empty() {
            break;
        }
        remaining.retain(|k| !consumed.contains(k));
    }
}

/// First stage of extraction: group adjacent points into linear clusters
/// with the configured method. Clusters keep only adjacent-in-scan points;
/// sequential RANSAC instead returns greedy maximal consecutive inlier runs.
pub fn initial_segmentation(
    scan: &LaserScan,
    config: &ExtractorConfig,
) -> Result<Segmentation, ExtractError> {
    let pts = scan.hit_points();
    let runs = adjacency_runs(&pts, config.break_distance);
    let gate = config.gate_sigmas * config.sigma;

    let mut groups: Vec<Vec<usize>> = Vec::new();
    match config.method {
        Method::SplitAndMerge => {
            for run in runs.iter().filter(|r| r.len() >= 2) {
                split_and_merge(run, &pts, config.split_distance, &mut groups);
            }
        }
        Method::LineTracking => {
            for run in runs.iter().filter(|r| r.len() >= 2) {
                line_tracking(run, &pts, gate, &mut groups);
            }
        }
        Method::SlidingWindow => {
            for run in runs.iter().filter(|r| r.len() >= 2) {
                sliding_window(run, &pts, config.min_cluster_size, gate, &mut groups);
            }
        }
        Method::SequentialRansac => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
            for run in runs.iter().filter(|r| r.len() >= 2) {
                let run_points: Vec<(usize, Point2)> = run.iter().map(|&k| pts[k]).collect();
                let mut local = Vec::new();
                sequential_ransac(&run_points, config, &mut rng, &mut local);
                // Map back to positions in `pts`.
                for g in local {
                    groups.push(g.into_iter().map(|k| run[k]).collect());
                }
            }
        }
    }

    let mut assigned = vec![false; pts.len()];
    let mut clusters = Vec::new();
    for group in groups {
        if group.len() < 2 {
            continue;
        }
        let indices: Vec<usize> = group.iter().map(|&k| pts[k].0).collect();
        let points: Vec<Point2> = group.iter().map(|&k| pts[k].1).collect();
        match Cluster::from_points(indices, &points, config.sigma) {
            Ok(c) => {
                for &k in &group {
                    assigned[k] = true;
                }
                clusters.push(c);
            }
            Err(GeometryError::DegenerateCluster) => {}
        }
    }
    if !clusters.iter().any(|c| c.point_indices.len() >= config.min_cluster_size) {
        return Err(ExtractError::NoClusters { min: config.min_cluster_size });
    }
    let unassigned = pts
        .iter()
        .enumerate()
        .filter(|(k, _)| !assigned[*k])
        .map(|(_, (idx, _))| *idx)
        .collect();
    Ok(Segmentation { clusters, unassigned })
}

/// Greedy odds-ratio merging: repeatedly merge the cluster pair with the
/// highest log odds ratio while it is positive. Candidate pairs are all
/// pairs, not only scan-adjacent ones; pairs with singular Hessians are
/// excluded. Ties break on the lexicographically smallest pair of cluster
/// ids for determinism.
pub fn ort_merge(
    seg: Segmentation,
    config: &ExtractorConfig,
) -> Result<(Vec<LineParams>, Vec<Cluster>), ExtractError> {
    let mut clusters: Vec<Option<Cluster>> = seg.clusters.into_iter().map(Some).collect();
    let n = clusters.len();

    // Pairwise log-R cache; None marks singular or stale-free entries.
    let score = |a: &Cluster, b: &Cluster| -> Option<(f64, LineFit, Moments)> {
        let m = a.moments.merged(&b.moments);
        let fit = fit_line_moments(&m, config.sigma).ok()?;
        let log_r = odds_ratio(&a.fit, &b.fit, &fit, config.r_max).ok()?;
        Some((log_r, fit, m))
    };
    let mut table: Vec<Vec<Option<f64>>> = vec![vec![None; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if let (Some(a), Some(b)) = (&clusters[i], &clusters[j]) {
                table[i][j] = score(a, b).map(|(lr, _, _)| lr);
            }
        }
    }

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if clusters[i].is_none() {
                continue;
            }
            for j in (i + 1)..n {
                if clusters[j].is_none() {
                    continue;
                }
                if let Some(lr) = table[i][j] {
                    // Strict > keeps the first (lexicographically smallest)
                    // pair on ties.
                    if best.is_none_or(|(b, _, _)| lr > b) {
                        best = Some((lr, i, j));
                    }
                }
            }
        }
        let Some((log_r, i, j)) = best else { break };
        if log_r <= 0.0 {
            break;
        }
        let b = clusters[j].take().unwrap();
        let a = clusters[i].as_mut().unwrap();
        let (_, fit, moments) = score(a, &b).expect("scored pair is mergeable");
        a.point_indices.extend_from_slice(&b.point_indices);
        a.point_indices.sort_unstable();
        a.moments = moments;
        a.fit = fit;
        // Refresh cached scores touching the merged cluster.
        for k in 0..n {
            if k == i || clusters[k].is_none() {
                continue;
            }
            let (lo, hi) = (k.min(i), k.max(i));
            let (ca, cb) = (clusters[lo].as_ref().unwrap(), clusters[hi].as_ref().unwrap());
            table[lo][hi] = score(ca, cb).map(|(lr, _, _)| lr);
        }
    }

    let clusters: Vec<Cluster> = clusters.into_iter().flatten().collect();
    let lines = clusters.iter().map(|c| c.fit.params).collect();
    Ok((lines, clusters))
}

/// Full extraction: initial segmentation, optional odds-ratio merging, and
/// the final minimum-size filter.
pub fn extract(
    scan: &LaserScan,
    config: &ExtractorConfig,
) -> Result<(Vec<LineParams>, Vec<Cluster>), ExtractError> {
    let seg = initial_segmentation(scan, config)?;
    let (_, clusters) = if config.use_ort {
        ort_merge(seg, config)?
    } else {
        let lines = seg.clusters.iter().map(|c| c.fit.params).collect();
        (lines, seg.clusters)
    };
    let kept: Vec<Cluster> = clusters
        .into_iter()
        .filter(|c| c.point_indices.len() >= config.min_cluster_size)
        .collect();
    let lines = kept.iter().map(|c| c.fit.params).collect();
    Ok((lines, kept))
}

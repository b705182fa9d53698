//! Deterministic lidar simulator: ray casting against a segment world with
//! Gaussian range noise, plus pose sampling and the scan-log file format.
//!
//! RNG rule: every scan uses a ChaCha8 generator seeded with the run seed
//! and with its stream set to the scan's `pose_id`, so scans are
//! reproducible independently of generation order.

use crate::geometry::{wrap_angle, Point2, Pose2, PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("pose sampling exhausted after {attempts} rejections; environment too dense for clearance {clearance}")]
    SamplingExhausted { attempts: usize, clearance: f64 },
}

/// One wall piece of the ground-truth world.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GroundTruthSegment {
    pub a: Point2,
    pub b: Point2,
    pub id: u32,
}

impl GroundTruthSegment {
    pub fn new(id: u32, ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        assert!((ax, ay) != (bx, by), "zero-length segment");
        Self { a: Point2::new(ax, ay), b: Point2::new(bx, by), id }
    }

    /// Distance from a point to this segment.
    pub fn distance_to(&self, p: &Point2) -> f64 {
        let vx = self.b.x - self.a.x;
        let vy = self.b.y - self.a.y;
        let len2 = vx * vx + vy * vy;
        let t = (((p.x - self.a.x) * vx + (p.y - self.a.y) * vy) / len2).clamp(0.0, 1.0);
        p.dist(&Point2::new(self.a.x + t * vx, self.a.y + t * vy))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SensorModel {
    pub max_range: f64,
    pub fov: f64,
    pub angular_resolution: f64,
    pub sigma: f64,
}

impl Default for SensorModel {
    /// 30 m over a 180° arc at 0.5° resolution, σ = 10 mm.
    fn default() -> Self {
        Self {
            max_range: 30.0,
            fov: PI,
            angular_resolution: 0.5f64.to_radians(),
            sigma: 0.010,
        }
    }
}

impl SensorModel {
    pub fn beam_count(&self) -> usize {
        (self.fov / self.angular_resolution).floor() as usize + 1
    }

    pub fn bearing(&self, i: usize) -> f64 {
        -self.fov / 2.0 + i as f64 * self.angular_resolution
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Beam {
    pub bearing: f64,
    pub range: f64,
    pub hit: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LaserScan {
    pub pose_id: u64,
    pub beams: Vec<Beam>,
    pub sensor: SensorModel,
}

impl LaserScan {
    /// Cartesian endpoints of hit beams, in the sensor frame, indexed by
    /// beam position.
    pub fn hit_points(&self) -> Vec<(usize, Point2)> {
        self.beams
            .iter()
            .enumerate()
            .filter(|(_, b)| b.hit)
            .map(|(i, b)| {
                let (s, c) = b.bearing.sin_cos();
                (i, Point2::new(b.range * c, b.range * s))
            })
            .collect()
    }
}

/// Distance along a ray from `origin` in direction `angle` to the first
/// crossing of `seg`, if any.
fn ray_segment_intersection(
    origin: &Point2,
    angle: f64,
    seg: &GroundTruthSegment,
) -> Option<f64> {
    let (dy, dx) = angle.sin_cos();
    let ex = seg.b.x - seg.a.x;
    let ey = seg.b.y - seg.a.y;
    let denom = dx * ey - dy * ex;
    if denom.abs() < 1e-15 {
        return None;
    }
    let ax = seg.a.x - origin.x;
    let ay = seg.a.y - origin.y;
    let s = (ax * ey - ay * ex) / denom;
    let u = (ax * dy - ay * dx) / denom;
    if s > 1e-12 && (0.0..=1.0).contains(&u) {
        Some(s)
    } else {
        None
    }
}

/// Cast one scan from `pose`. Each beam carries the nearest ray-segment
/// intersection distance plus Gaussian range noise, clamped to
/// [1 mm, max_range]; beams with no intersection in range have `hit = false`.
/// Identical seeds give identical scans.
pub fn cast_scan(
    env: &[GroundTruthSegment],
    pose: &Pose2,
    sensor: &SensorModel,
    rng_seed: u64,
    pose_id: u64,
) -> LaserScan {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(pose_id);
    let noise = Normal::new(0.0, sensor.sigma.max(0.0)).expect("valid sigma");
    let origin = Point2::new(pose.x, pose.y);
    let beams = (0..sensor.beam_count())
        .map(|i| {
            let bearing = sensor.bearing(i);
            let angle = pose.theta + bearing;
            let nearest = env
                .iter()
                .filter_map(|seg| ray_segment_intersection(&origin, angle, seg))
                .fold(f64::INFINITY, f64::min);
            if nearest <= sensor.max_range {
                let range = if sensor.sigma > 0.0 {
                    (nearest + noise.sample(&mut rng)).clamp(0.001, sensor.max_range)
                } else {
                    nearest
                };
                Beam { bearing, range, hit: true }
            } else {
                // Keep the noise stream aligned regardless of hit pattern.
                if sensor.sigma > 0.0 {
                    let _ = noise.sample(&mut rng);
                }
                Beam { bearing, range: sensor.max_range, hit: false }
            }
        })
        .collect();
    LaserScan { pose_id, beams, sensor: *sensor }
}

/// Axis-aligned bounding box of the environment, or a default ±5 m box for
/// an empty one.
pub fn bounding_box(env: &[GroundTruthSegment]) -> (Point2, Point2) {
    if env.is_empty() {
        return (Point2::new(-5.0, -5.0), Point2::new(5.0, 5.0));
    }
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for s in env {
        for p in [&s.a, &s.b] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
    }
    (lo, hi)
}

/// Sample `count` poses uniformly in the bounding box, rejecting poses
/// within `clearance` of any segment. Deterministic per seed.
pub fn sample_poses(
    env: &[GroundTruthSegment],
    count: usize,
    rng_seed: u64,
    clearance: f64,
) -> Result<Vec<Pose2>, SimError> {
    assert!(count >= 1);
    let (lo, hi) = bounding_box(env);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut poses = Vec::with_capacity(count);
    let max_attempts = count * 1000;
    let mut attempts = 0;
    while poses.len() < count {
        if attempts >= max_attempts {
            return Err(SimError::SamplingExhausted { attempts, clearance });
        }
        attempts += 1;
        let p = Point2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if env.iter().all(|s| s.distance_to(&p) >= clearance) {
            let theta = wrap_angle(rng.gen_range(-PI..PI));
            poses.push(Pose2::new(p.x, p.y, theta));
        }
    }
    Ok(poses)
}

/// One line of the scan-log JSONL file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRecord {
    pub pose_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pose: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odom: Option<[f64; 3]>,
    pub bearings: Vec<f64>,
    pub ranges: Vec<f64>,
    pub hits: Vec<bool>,
}

impl ScanRecord {
    pub fn from_scan(scan: &LaserScan, pose: Option<Pose2>, odom: Option<Pose2>) -> Self {
        Self {
            pose_id: scan.pose_id,
            pose: pose.map(|p| [p.x, p.y, p.theta]),
            odom: odom.map(|p| [p.x, p.y, p.theta]),
            bearings: scan.beams.iter().map(|b| b.bearing).collect(),
            ranges: scan.beams.iter().map(|b| b.range).collect(),
            hits: scan.beams.iter().map(|b| b.hit).collect(),
        }
    }

    pub fn to_scan(&self, sensor: &SensorModel) -> LaserScan {
        let beams = self
            .bearings
            .iter()
            .zip(&self.ranges)
            .zip(&self.hits)
            .map(|((&bearing, &range), &hit)| Beam { bearing, range, hit })
            .collect();
        LaserScan { pose_id: self.pose_id, beams, sensor: *sensor }
    }

    pub fn truth_pose(&self) -> Option<Pose2> {
        self.pose.map(|p| Pose2::new(p[0], p[1], p[2]))
    }

    pub fn odom_increment(&self) -> Option<Pose2> {
        self.odom.map(|p| Pose2::new(p[0], p[1], p[2]))
    }
}

/// The shipped 42-segment benchmark world: an outer shell subdivided into
/// rooms whose doorways carry a door leaf parallel to the wall, 300 mm
/// away, plus free-standing clutter.
pub fn benchmark_env_42() -> Vec<GroundTruthSegment> {
    let mut segs = Vec::new();
    let mut id = 0u32;
    let mut add = |ax: f64, ay: f64, bx: f64, by: f64| {
        segs.push(GroundTruthSegment::new(id, ax, ay, bx, by));
        id += 1;
    };

    // Outer shell, 12 m x 10 m.
    add(0.0, 0.0, 12.0, 0.0);
    add(12.0, 0.0, 12.0, 10.0);
    add(12.0, 10.0, 0.0, 10.0);
    add(0.0, 10.0, 0.0, 0.0);

    // Vertical wall x = 4 with two doorways; each doorway has a door leaf
    // parallel to the wall at 300 mm.
    add(4.0, 0.0, 4.0, 3.0);
    add(4.0, 4.0, 4.0, 6.5);
    add(4.0, 7.5, 4.0, 10.0);
    add(4.3, 3.0, 4.3, 4.0); // door leaf
    add(3.7, 6.5, 3.7, 7.5); // door leaf

    // Horizontal wall y = 5 (right half) with one doorway + leaf.
    add(4.0, 5.0, 7.0, 5.0);
    add(8.0, 5.0, 12.0, 5.0);
    add(7.0, 5.3, 8.0, 5.3); // door leaf

    // Vertical wall x = 8 above y = 5 with doorway + leaf.
    add(8.0, 5.0, 8.0, 7.0);
    add(8.0, 7.9, 8.0, 10.0);
    add(7.7, 7.0, 7.7, 7.9); // door leaf

    // Horizontal wall y = 3 (left region) with doorway + leaf.
    add(0.0, 3.0, 1.5, 3.0);
    add(2.4, 3.0, 4.0, 3.0);
    add(1.5, 2.7, 2.4, 2.7); // door leaf

    // Vertical wall x = 9 below y = 5 with doorway + leaf.
    add(9.0, 0.0, 9.0, 2.0);
    add(9.0, 2.9, 9.0, 5.0);
    add(9.3, 2.0, 9.3, 2.9); // door leaf

    // Horizontal wall y = 7 (left room) with doorway + leaf.
    add(0.0, 7.0, 1.2, 7.0);
    add(2.1, 7.0, 4.0, 7.0);
    add(1.2, 7.3, 2.1, 7.3); // door leaf

    // Free-standing clutter: cabinets, desks, a pillar.
    add(5.0, 1.0, 6.5, 1.0);
    add(6.5, 1.0, 6.5, 1.6);
    add(6.5, 1.6, 5.0, 1.6);
    add(5.0, 1.6, 5.0, 1.0);

    add(10.0, 6.5, 11.5, 6.5);
    add(11.5, 6.5, 11.5, 7.1);
    add(11.5, 7.1, 10.0, 7.1);
    add(10.0, 7.1, 10.0, 6.5);

    add(0.8, 4.2, 1.4, 4.2);
    add(1.4, 4.2, 1.4, 4.8);
    add(1.4, 4.8, 0.8, 4.8);
    add(0.8, 4.8, 0.8, 4.2);

    add(5.5, 7.8, 6.3, 7.8);
    add(6.3, 7.8, 6.3, 8.6);
    add(6.3, 8.6, 5.5, 8.6);
    add(5.5, 8.6, 5.5, 7.8);

    add(10.2, 1.2, 11.0, 2.0);
    add(2.6, 8.6, 3.4, 9.2);

    assert_eq!(segs.len(), 42);
    segs
}

/// Small single-room world for SLAM loop tests: a rectangle with one
/// interior wall + door pair.
pub fn room_env() -> Vec<GroundTruthSegment> {
    let mut segs = Vec::new();
    let mut id = 0u32;
    let mut add = |ax: f64, ay: f64, bx: f64, by: f64| {
        segs.push(GroundTruthSegment::new(id, ax, ay, bx, by));
        id += 1;
    };
    add(0.0, 0.0, 10.0, 0.0);
    add(10.0, 0.0, 10.0, 8.0);
    add(10.0, 8.0, 0.0, 8.0);
    add(0.0, 8.0, 0.0, 0.0);
    // Interior wall stub with a doorway and its leaf 300 mm away.
    add(6.0, 0.0, 6.0, 2.5);
    add(6.0, 3.5, 6.0, 5.0);
    add(6.3, 2.5, 6.3, 3.5);
    segs
}

pub fn save_environment(path: &std::path::Path, env: &[GroundTruthSegment]) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Rec {
        a: [f64; 2],
        b: [f64; 2],
        id: u32,
    }
    let recs: Vec<Rec> = env
        .iter()
        .map(|s| Rec { a: [s.a.x, s.a.y], b: [s.b.x, s.b.y], id: s.id })
        .collect();
    std::fs::write(path, serde_json::to_string_pretty(&recs)?)?;
    Ok(())
}

pub fn load_environment(path: &std::path::Path) -> anyhow::Result<Vec<GroundTruthSegment>> {
    #[derive(Deserialize)]
    struct Rec {
        a: [f64; 2],
        b: [f64; 2],
        id: u32,
    }
    let recs: Vec<Rec> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(recs
        .into_iter()
        .map(|r| GroundTruthSegment::new(r.id, r.a[0], r.a[1], r.b[0], r.b[1]))
        .collect())
}

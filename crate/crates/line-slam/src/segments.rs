//! Interval algebra along a line: occupied segments from inliers, free
//! segments from rays crossing the line, and the geometric match
//! probability used as the segment-validation gate.

use crate::geometry::{project_onto_line, LineParams, Point2, Pose2};
use crate::sim::LaserScan;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentError {
    #[error("segment sets live on different lines (Δr = {dr:.3} m, Δα = {dalpha:.3} rad)")]
    FrameMismatch { dr: f64, dalpha: f64 },
}

/// Closed interval [t0, t1] in line projection coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub t0: f64,
    pub t1: f64,
}

impl Interval {
    pub fn new(t0: f64, t1: f64) -> Self {
        assert!(t0 <= t1, "interval endpoints out of order");
        Self { t0, t1 }
    }

    pub fn len(&self) -> f64 {
        self.t1 - self.t0
    }
}

/// Sorted, coalesced set of intervals on one line. Overlapping or touching
/// intervals are merged on every construction path, so the stored list is
/// always pairwise disjoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSet {
    pub line: LineParams,
    intervals: Vec<Interval>,
}

/// Tolerance for treating two lines as the same frame when intersecting
/// their segment sets. Wider than the association gates so that a gated
/// candidate pair is never rejected here first.
pub const FRAME_TOL_R: f64 = 0.5;
pub const FRAME_TOL_ALPHA: f64 = 0.3;

impl SegmentSet {
    pub fn empty(line: LineParams) -> Self {
        Self { line, intervals: Vec::new() }
    }

    pub fn from_intervals(line: LineParams, mut raw: Vec<Interval>) -> Self {
        raw.sort_by(|a, b| a.t0.total_cmp(&b.t0));
        let mut intervals: Vec<Interval> = Vec::with_capacity(raw.len());
        for iv in raw {
            match intervals.last_mut() {
                Some(last) if iv.t0 <= last.t1 => last.t1 = last.t1.max(iv.t1),
                _ => intervals.push(iv),
            }
        }
        Self { line, intervals }
    }

    /// Coalesce a sorted list of point coordinates into maximal runs whose
    /// consecutive gaps are at most `gap_break`.
    pub fn from_projections(line: LineParams, mut ts: Vec<f64>, gap_break: f64) -> Self {
        ts.sort_by(f64::total_cmp);
        let mut intervals = Vec::new();
        let mut i = 0;
        while i < ts.len() {
            let start = ts[i];
            let mut end = start;
            while i + 1 < ts.len() && ts[i + 1] - end <= gap_break {
                i += 1;
                end = ts[i];
            }
            intervals.push(Interval::new(start, end));
            i += 1;
        }
        Self { line, intervals }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(Interval::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    fn check_frame(&self, other: &SegmentSet) -> Result<(), SegmentError> {
        let (dr, da) = self.line.residual_to(&other.line);
        if dr.abs() > FRAME_TOL_R || da.abs() > FRAME_TOL_ALPHA {
            return Err(SegmentError::FrameMismatch { dr: dr.abs(), dalpha: da.abs() });
        }
        Ok(())
    }

    /// Union, keeping this set's line as the frame.
    pub fn union(&self, other: &SegmentSet) -> SegmentSet {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        SegmentSet::from_intervals(self.line, all)
    }

    /// Set difference self \ other.
    pub fn subtract(&self, other: &SegmentSet) -> SegmentSet {
        let mut out = Vec::new();
        for iv in &self.intervals {
            let mut pieces = vec![*iv];
            for cut in &other.intervals {
                let mut next = Vec::new();
                for p in pieces {
                    if cut.t1 <= p.t0 || cut.t0 >= p.t1 {
                        next.push(p);
                    } else {
                        if cut.t0 > p.t0 {
                            next.push(Interval::new(p.t0, cut.t0));
                        }
                        if cut.t1 < p.t1 {
                            next.push(Interval::new(cut.t1, p.t1));
                        }
                    }
                }
                pieces = next;
            }
            out.extend(pieces);
        }
        SegmentSet { line: self.line, intervals: out }
    }
}

/// Total length of the intersection of two segment sets on the same line.
pub fn intersection_length(a: &SegmentSet, b: &SegmentSet) -> Result<f64, SegmentError> {
    a.check_frame(b)?;
    let mut total = 0.0;
    for ia in a.intervals() {
        for ib in b.intervals() {
            let lo = ia.t0.max(ib.t0);
            let hi = ia.t1.min(ib.t1);
            if hi > lo {
                total += hi - lo;
            }
        }
    }
    Ok(total)
}

/// Occupied segments of a line from its inlier points: project, sort, and
/// split into runs with gaps at most `gap_break`.
pub fn extract_segments(points: &[Point2], line: &LineParams, gap_break: f64) -> SegmentSet {
    let ts = points.iter().map(|p| project_onto_line(p, line)).collect();
    SegmentSet::from_projections(*line, ts, gap_break)
}

/// Free segments of a global-frame line: intervals crossed by measurement
/// rays that terminate strictly beyond the line (by more than `margin`).
pub fn extract_free_segments(
    scan: &LaserScan,
    pose: &Pose2,
    line: &LineParams,
    margin: f64,
    gap_break: f64,
) -> SegmentSet {
    let (nx, ny) = line.normal();
    let origin_dot = pose.x * nx + pose.y * ny;
    let mut ts = Vec::new();
    for beam in &scan.beams {
        if !beam.hit {
            continue;
        }
        let angle = pose.theta + beam.bearing;
        let (dy, dx) = angle.sin_cos();
        let denom = dx * nx + dy * ny;
        if denom.abs() < 1e-12 {
            continue;
        }
        let s = (line.r - origin_dot) / denom;
        if s > 0.0 && s < beam.range - margin {
            let q = Point2::new(pose.x + s * dx, pose.y + s * dy);
            ts.push(project_onto_line(&q, line));
        }
    }
    SegmentSet::from_projections(*line, ts, gap_break)
}

/// Probability that an observed line and a map line are geometrically the
/// same line, from the overlap of the observation with the map line's
/// occupied versus free evidence. All three sets must be in one frame.
pub fn geometric_match_prob(
    s_new: &SegmentSet,
    s_map: &SegmentSet,
    s_free: &SegmentSet,
) -> Result<f64, SegmentError> {
    let occ = intersection_length(s_new, s_map)?;
    let free = intersection_length(s_new, s_free)?;
    if occ + free == 0.0 {
        Ok(0.5)
    } else {
        Ok(occ / (occ + free))
    }
}

/// Fold one observation's (occupied, free) evidence into a landmark's
/// accumulated evidence. Occupied evidence dominates: any free interval now
/// covered by occupied space is removed.
pub fn merge_segment_evidence(
    existing: (&SegmentSet, &SegmentSet),
    observed: (&SegmentSet, &SegmentSet),
) -> (SegmentSet, SegmentSet) {
    let occupied = existing.0.union(observed.0);
    let free = existing.1.union(observed.1).subtract(&occupied);
    (occupied, free)
}

//! Static SVG rendering of a mapped environment: occupied line segments,
//! free-space evidence, and the estimated trajectory. Output is a plain
//! deterministic string for a fixed input.

use crate::geometry::{LineParams, Pose2};
use crate::harness::MapOut;
use std::fmt::Write;

const MARGIN: f64 = 1.0;
const SCALE: f64 = 40.0;

fn bounds(map: &MapOut, trajectory: &[(u64, Pose2)]) -> (f64, f64, f64, f64) {
    let mut lo = (f64::INFINITY, f64::INFINITY);
    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut take = |x: f64, y: f64| {
        lo.0 = lo.0.min(x);
        lo.1 = lo.1.min(y);
        hi.0 = hi.0.max(x);
        hi.1 = hi.1.max(y);
    };
    for lm in &map.landmarks {
        let line = LineParams::new(lm.r, lm.alpha);
        for iv in lm.occupied.iter().chain(&lm.free) {
            for t in [iv[0], iv[1]] {
                let p = line.point_at(t);
                take(p.x, p.y);
            }
        }
    }
    for (_, p) in trajectory {
        take(p.x, p.y);
    }
    if !lo.0.is_finite() {
        return (-5.0, -5.0, 5.0, 5.0);
    }
    (lo.0 - MARGIN, lo.1 - MARGIN, hi.0 + MARGIN, hi.1 + MARGIN)
}

/// Render the map and (optionally empty) trajectory as an SVG document.
/// World y points up; the document flips it into screen coordinates.
pub fn render_svg(map: &MapOut, trajectory: &[(u64, Pose2)]) -> String {
    let (x0, y0, x1, y1) = bounds(map, trajectory);
    let w = (x1 - x0) * SCALE;
    let h = (y1 - y0) * SCALE;
    let px = |x: f64| (x - x0) * SCALE;
    let py = |y: f64| (y1 - y) * SCALE;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");

    for lm in &map.landmarks {
        let line = LineParams::new(lm.r, lm.alpha);
        for iv in &lm.free {
            let a = line.point_at(iv[0]);
            let b = line.point_at(iv[1]);
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#bbbbbb\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>",
                px(a.x), py(a.y), px(b.x), py(b.y)
            );
        }
        for iv in &lm.occupied {
            let a = line.point_at(iv[0]);
            let b = line.point_at(iv[1]);
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#222222\" stroke-width=\"3\"/>",
                px(a.x), py(a.y), px(b.x), py(b.y)
            );
        }
    }

    if trajectory.len() >= 2 {
        let mut points = String::new();
        for (_, p) in trajectory {
            let _ = write!(points, "{:.2},{:.2} ", px(p.x), py(p.y));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#1f6fd0\" stroke-width=\"1.5\"/>",
            points.trim_end()
        );
    }
    if let Some((_, p)) = trajectory.first() {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f6fd0\"/>",
            px(p.x), py(p.y)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

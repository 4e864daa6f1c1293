//! Static bird's-eye SVG of trajectories in the ego frame: forward (x) points
//! up, left (y) points left. Each track is one polyline through its box
//! centers in frame order, colored by track id.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use dsmt_core::io::KittiRecord;

const PIXELS_PER_METER: f64 = 10.0;
const MARGIN_M: f64 = 2.0;
/// Extent drawn when there are no tracks: x in [0, 40], y in [-18, 18].
const EMPTY_EXTENT: (f64, f64, f64, f64) = (0.0, 40.0, -18.0, 18.0);

/// Hue spread by the golden angle so consecutive ids get distinct colors.
pub fn track_color(track_id: i64) -> String {
    let hue = (track_id.rem_euclid(360) as f64 * 137.507_764_050_037_85).rem_euclid(360.0);
    format!("hsl({hue:.1},70%,40%)")
}

pub fn render_svg(records: &[KittiRecord]) -> String {
    let mut tracks: BTreeMap<i64, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_dont_care()) {
        let b = r.box3d();
        tracks.entry(r.track_id).or_default().push((r.frame, b.center_x, b.center_y));
    }
    for points in tracks.values_mut() {
        points.sort_by_key(|p| p.0);
    }

    let (mut x_min, mut x_max, mut y_min, mut y_max) = EMPTY_EXTENT;
    if !tracks.is_empty() {
        (x_min, x_max, y_min, y_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(_, x, y) in tracks.values().flatten() {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    let (x_min, x_max, y_min, y_max) = (x_min - MARGIN_M, x_max + MARGIN_M, y_min - MARGIN_M, y_max + MARGIN_M);
    let width = (y_max - y_min) * PIXELS_PER_METER;
    let height = (x_max - x_min) * PIXELS_PER_METER;
    // Ego (x, y) to SVG (u, v): u grows rightward as y decreases, v grows
    // downward as x decreases.
    let to_px = |x: f64, y: f64| ((y_max - y) * PIXELS_PER_METER, (x_max - x) * PIXELS_PER_METER);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, r#"  <rect x="0" y="0" width="{width:.1}" height="{height:.1}" fill="white"/>"#);
    if (y_min..=y_max).contains(&0.0) {
        let (u, _) = to_px(0.0, 0.0);
        let _ = writeln!(svg, r##"  <line x1="{u:.1}" y1="0" x2="{u:.1}" y2="{height:.1}" stroke="#cccccc" stroke-dasharray="4 4"/>"##);
    }
    for (id, points) in &tracks {
        let color = track_color(*id);
        let coords: Vec<String> = points
            .iter()
            .map(|&(_, x, y)| {
                let (u, v) = to_px(x, y);
                format!("{u:.2},{v:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            r#"  <polyline data-track="{id}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        let (u, v) = to_px(points[0].1, points[0].2);
        let _ = writeln!(svg, r#"  <circle cx="{u:.2}" cy="{v:.2}" r="3" fill="{color}"/>"#);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsmt_core::types::Box2D;

    fn record(frame: usize, track_id: i64, x_cam: f64, z_cam: f64) -> KittiRecord {
        KittiRecord {
            frame,
            track_id,
            object_type: "Car".into(),
            truncated: 0.0,
            occluded: 0,
            alpha: 0.0,
            bbox: Box2D { left: 0.0, top: 0.0, right: 1.0, bottom: 1.0 },
            dimensions: [1.5, 1.8, 4.0],
            location: [x_cam, 1.65, z_cam],
            rotation_y: 0.0,
            score: None,
        }
    }

    #[test]
    fn empty_input_is_a_complete_document() {
        let svg = render_svg(&[]);
        assert!(svg.starts_with("<svg ") && svg.ends_with("</svg>\n"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn one_polyline_per_track_in_frame_order() {
        let recs = vec![record(1, 3, 0.0, 12.0), record(0, 3, 0.0, 10.0), record(0, 5, 2.0, 20.0)];
        let svg = render_svg(&recs);
        assert_eq!(svg.matches("<polyline").count(), 2);
        let line = svg.lines().find(|l| l.contains(r#"data-track="3""#)).unwrap();
        // Frame 0 (10 m ahead) is drawn below frame 1 (12 m ahead).
        let pts: Vec<f64> = line.split('"').nth(3).unwrap().split([' ', ',']).map(|v| v.parse().unwrap()).collect();
        assert!(pts[1] > pts[3]);
    }

    #[test]
    fn colors_are_stable_and_distinct_for_neighbours() {
        assert_eq!(track_color(7), track_color(7));
        assert_ne!(track_color(0), track_color(1));
        assert_eq!(render_svg(&[record(0, 1, 0.0, 9.0)]), render_svg(&[record(0, 1, 0.0, 9.0)]));
    }
}

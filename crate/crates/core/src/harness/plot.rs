//! Static SVG figures: trajectories over a house, matrix heatmaps and the
//! noise sweep.

use std::fmt::Write;

use crate::grid::Cell;
use crate::matrix::Matrix;
use crate::simworld::GridWorld;

const PX: f64 = 6.0;

fn header(w: f64, h: f64) -> String {
    format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n")
}

/// House walls and objects with one polyline per trajectory. The y axis is
/// flipped so north is up.
pub fn trajectories_svg(world: &GridWorld, paths: &[Vec<[f64; 2]>], goal: Option<usize>) -> String {
    let (w, h) = (world.width() as f64 * PX, world.height() as f64 * PX);
    let mut s = header(w, h);
    let _ = writeln!(s, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>");
    let ymap = |y: i64| (world.height() as i64 - 1 - y) as f64 * PX;
    for c in world.occupancy().cells() {
        if world.occupancy()[c] && !world.objects.iter().any(|o| o.footprint.contains(c)) {
            let _ = writeln!(s, "<rect x=\"{:.0}\" y=\"{:.0}\" width=\"{PX}\" height=\"{PX}\" fill=\"#444\"/>", c.x as f64 * PX, ymap(c.y));
        }
    }
    for o in &world.objects {
        let color = if goal == Some(o.category) && !o.decoy {
            "#2a9d3f"
        } else if o.decoy {
            "#e76f51"
        } else {
            "#8899aa"
        };
        let f = o.footprint;
        let top = Cell::new(f.x0, f.y0 + f.h as i64 - 1);
        let _ = writeln!(
            s,
            "<rect x=\"{:.0}\" y=\"{:.0}\" width=\"{:.0}\" height=\"{:.0}\" fill=\"{color}\"/>",
            top.x as f64 * PX,
            ymap(top.y),
            f.w as f64 * PX,
            f.h as f64 * PX
        );
    }
    let palette = ["#1d3557", "#e63946", "#457b9d", "#f4a261", "#6a4c93", "#2a9d8f"];
    let res = world.resolution;
    for (i, p) in paths.iter().enumerate() {
        let pts: Vec<String> = p.iter().map(|q| format!("{:.1},{:.1}", q[0] / res * PX, h - q[1] / res * PX)).collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            pts.join(" "),
            palette[i % palette.len()]
        );
        if let Some(q) = p.first() {
            let _ = writeln!(s, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"black\"/>", q[0] / res * PX, h - q[1] / res * PX);
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Heatmap with a white-to-blue ramp scaled to the matrix maximum.
pub fn heatmap_svg(m: &Matrix<f64>, title: &str, row_labels: &[String], col_labels: &[String]) -> String {
    let cell = 28.0;
    let (left, top) = (110.0, 110.0);
    let (w, h) = (left + m.cols() as f64 * cell + 20.0, top + m.rows() as f64 * cell + 20.0);
    let max = m.max_value().max(1e-12);
    let mut s = header(w, h);
    let _ = writeln!(s, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"10\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\">{}</text>", escape(title));
    for i in 0..m.rows() {
        let label = row_labels.get(i).cloned().unwrap_or_else(|| i.to_string());
        let _ = writeln!(
            s,
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            left - 4.0,
            top + (i as f64 + 0.65) * cell,
            escape(&label)
        );
        for j in 0..m.cols() {
            let v = (m[(i, j)] / max).clamp(0.0, 1.0);
            let shade = (255.0 * (1.0 - v)).round() as u8;
            let _ = writeln!(
                s,
                "<rect x=\"{:.0}\" y=\"{:.0}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#ddd\"><title>{:.3}</title></rect>",
                left + j as f64 * cell,
                top + i as f64 * cell,
                m[(i, j)]
            );
        }
    }
    for j in 0..m.cols() {
        let label = col_labels.get(j).cloned().unwrap_or_else(|| j.to_string());
        let (x, y) = (left + (j as f64 + 0.6) * cell, top - 4.0);
        let _ = writeln!(
            s,
            "<text x=\"{x:.0}\" y=\"{y:.0}\" font-family=\"sans-serif\" font-size=\"10\" transform=\"rotate(-60 {x:.0} {y:.0})\">{}</text>",
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line plot of success rate against pose noise level.
pub fn noise_sweep_svg(points: &[(u32, f64)]) -> String {
    let (w, h, pad) = (420.0, 280.0, 40.0);
    let mut s = header(w, h);
    let _ = writeln!(s, "<rect width=\"{w:.0}\" height=\"{h:.0}\" fill=\"white\"/>");
    let max_l = points.iter().map(|p| p.0).max().unwrap_or(1).max(1) as f64;
    let x = |l: u32| pad + l as f64 / max_l * (w - 2.0 * pad);
    let y = |v: f64| h - pad - v.clamp(0.0, 1.0) * (h - 2.0 * pad);
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{:.0}\" x2=\"{:.0}\" y2=\"{:.0}\" stroke=\"black\"/>", h - pad, w - pad, h - pad);
    let _ = writeln!(s, "<line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{:.0}\" stroke=\"black\"/>", h - pad);
    let pts: Vec<String> = points.iter().map(|&(l, v)| format!("{:.1},{:.1}", x(l), y(v))).collect();
    let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"#1d3557\" stroke-width=\"2\"/>", pts.join(" "));
    for &(l, v) in points {
        let _ = writeln!(s, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#e63946\"/>", x(l), y(v));
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{l}</text>",
            x(l),
            h - pad + 14.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">pose noise level</text>",
        w / 2.0,
        h - 6.0
    );
    let _ = writeln!(s, "<text x=\"12\" y=\"{pad}\" font-family=\"sans-serif\" font-size=\"11\">success</text>");
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

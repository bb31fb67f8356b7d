//! Minimal SVG emission: grid heatmaps, line plots, and 2-D vector fields.
//! Every plot writes a sibling CSV carrying the exact plotted values.

use std::fmt::Write as _;
use std::path::Path;

const CELL: f64 = 24.0;
const MARGIN: f64 = 40.0;

fn color_ramp(t: f64) -> String {
    // Dark blue through magenta to yellow.
    let t = t.clamp(0.0, 1.0);
    let r = (255.0 * (0.2 + 0.8 * t)).min(255.0) as u8;
    let g = (255.0 * t * t) as u8;
    let b = (255.0 * (0.55 - 0.45 * t)) as u8;
    format!("rgb({r},{g},{b})")
}

/// Heatmap over an nx×ny grid in user coordinates; `values` is row-major by
/// y then x. Writes `<stem>.svg` and `<stem>.csv` with (x, y, value) rows.
pub fn heatmap(
    dir: &Path,
    stem: &str,
    nx: usize,
    ny: usize,
    values: &[f64],
    title: &str,
) -> std::io::Result<()> {
    assert_eq!(values.len(), nx * ny);
    let mut csv = String::from("x,y,value\n");
    for iy in 0..ny {
        for ix in 0..nx {
            let _ = writeln!(csv, "{},{},{:.12e}", ix, iy, values[iy * nx + ix]);
        }
    }
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-300);
    let width = MARGIN * 2.0 + CELL * nx as f64;
    let height = MARGIN * 2.0 + CELL * ny as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" font-family="monospace" font-size="13">{}</text>"#,
        MARGIN, title
    );
    for iy in 0..ny {
        for ix in 0..nx {
            let v = (values[iy * nx + ix] - lo) / span;
            let x = MARGIN + CELL * ix as f64;
            // Flip so the origin sits bottom-left.
            let y = MARGIN + CELL * (ny - 1 - iy) as f64;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{CELL:.1}" height="{CELL:.1}" fill="{}"/>"#,
                color_ramp(v)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="monospace" font-size="11">range [{:.3e}, {:.3e}]</text>"#,
        MARGIN,
        height - 12.0,
        lo,
        hi
    );
    svg.push_str("</svg>\n");
    std::fs::write(dir.join(format!("{stem}.svg")), svg)
}

/// Line plot of one or more named series over a shared integer axis.
pub fn line_plot(
    dir: &Path,
    stem: &str,
    series: &[(&str, &[f64])],
    title: &str,
) -> std::io::Result<()> {
    let mut csv = String::from("index");
    for (name, _) in series {
        let _ = write!(csv, ",{name}");
    }
    csv.push('\n');
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for i in 0..len {
        let _ = write!(csv, "{i}");
        for (_, v) in series {
            if i < v.len() {
                let _ = write!(csv, ",{:.12e}", v[i]);
            } else {
                csv.push(',');
            }
        }
        csv.push('\n');
    }
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;

    let (w, h) = (560.0, 320.0);
    let lo = series
        .iter()
        .flat_map(|(_, v)| v.iter().cloned())
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let hi = series
        .iter()
        .flat_map(|(_, v)| v.iter().cloned())
        .fold(f64::NEG_INFINITY, f64::max)
        .max(lo + 1e-12);
    let colors = ["#1f6fb2", "#d1495b", "#3a7d44", "#8d5a97", "#c98a1e"];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="10" y="18" font-family="monospace" font-size="13">{title}</text>"#);
    let plot_w = w - 2.0 * MARGIN;
    let plot_h = h - 2.0 * MARGIN;
    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#888"/>"##
    );
    for (k, (name, values)) in series.iter().enumerate() {
        if values.is_empty() {
            continue;
        }
        let color = colors[k % colors.len()];
        let mut points = String::new();
        for (i, v) in values.iter().enumerate() {
            let x = MARGIN + plot_w * i as f64 / (len.max(2) - 1) as f64;
            let y = MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));
            let _ = write!(points, "{x:.1},{y:.1} ");
        }
        let _ = writeln!(svg, r#"<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="11" fill="{color}">{name}</text>"#,
            w - MARGIN - 120.0,
            MARGIN + 14.0 * (k + 1) as f64
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="10" y="{}" font-family="monospace" font-size="10">y range [{:.3e}, {:.3e}], x 0..{}</text>"#,
        h - 8.0,
        lo,
        hi,
        len.saturating_sub(1)
    );
    svg.push_str("</svg>\n");
    std::fs::write(dir.join(format!("{stem}.svg")), svg)
}

/// Two vector fields side by side over an nx×ny grid of unit-square cells.
/// `fields` are (dx, dy) per grid point, row-major by y then x.
pub fn vector_field_pair(
    dir: &Path,
    stem: &str,
    nx: usize,
    ny: usize,
    left: &[(f64, f64)],
    right: &[(f64, f64)],
    titles: (&str, &str),
) -> std::io::Result<()> {
    let mut csv = String::from("x,y,left_dx,left_dy,right_dx,right_dy\n");
    for iy in 0..ny {
        for ix in 0..nx {
            let i = iy * nx + ix;
            let _ = writeln!(
                csv,
                "{},{},{:.12e},{:.12e},{:.12e},{:.12e}",
                ix, iy, left[i].0, left[i].1, right[i].0, right[i].1
            );
        }
    }
    std::fs::write(dir.join(format!("{stem}.csv")), csv)?;

    let panel = CELL * nx as f64;
    let w = MARGIN * 3.0 + panel * 2.0;
    let h = MARGIN * 2.0 + CELL * ny as f64;
    let scale = CELL * 4.0; // display gain on the arrows
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    for (panel_idx, (field, title)) in [(left, titles.0), (right, titles.1)].iter().enumerate() {
        let x0 = MARGIN + panel_idx as f64 * (panel + MARGIN);
        let _ = writeln!(
            svg,
            r#"<text x="{x0}" y="20" font-family="monospace" font-size="13">{title}</text>"#
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x0}" y="{MARGIN}" width="{panel}" height="{}" fill="none" stroke="#888"/>"##,
            CELL * ny as f64
        );
        for iy in 0..ny {
            for ix in 0..nx {
                let (dx, dy) = field[iy * nx + ix];
                let cx = x0 + CELL * (ix as f64 + 0.5);
                let cy = MARGIN + CELL * ((ny - 1 - iy) as f64 + 0.5);
                let tx = cx + dx * scale;
                let ty = cy - dy * scale;
                let _ = writeln!(
                    svg,
                    r##"<line x1="{cx:.1}" y1="{cy:.1}" x2="{tx:.1}" y2="{ty:.1}" stroke="#1f6fb2" stroke-width="1"/>"##
                );
                let _ = writeln!(svg, r##"<circle cx="{tx:.1}" cy="{ty:.1}" r="1.4" fill="#d1495b"/>"##);
            }
        }
    }
    svg.push_str("</svg>\n");
    std::fs::write(dir.join(format!("{stem}.svg")), svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plots_write_svg_with_colocated_csv() {
        let dir = std::env::temp_dir().join("mmsim_svg_test");
        std::fs::create_dir_all(&dir).unwrap();
        heatmap(&dir, "hm", 3, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0], "t").unwrap();
        line_plot(&dir, "lp", &[("a", &[1.0, 2.0][..]), ("b", &[3.0][..])], "t").unwrap();
        vector_field_pair(&dir, "vf", 2, 2, &[(0.1, 0.0); 4], &[(0.0, 0.1); 4], ("l", "r")).unwrap();
        for stem in ["hm", "lp", "vf"] {
            let svg = std::fs::read_to_string(dir.join(format!("{stem}.svg"))).unwrap();
            assert!(svg.starts_with("<svg"));
            let csv = std::fs::read_to_string(dir.join(format!("{stem}.csv"))).unwrap();
            assert!(csv.lines().count() >= 2);
        }
        // Heatmap CSV schema: one row per grid cell.
        let csv = std::fs::read_to_string(dir.join("hm.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 6);
        assert_eq!(csv.lines().next().unwrap(), "x,y,value");
    }
}

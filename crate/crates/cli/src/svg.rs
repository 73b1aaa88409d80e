//! Minimal SVG output: log-log convergence plots and element heatmaps.

use std::fmt::Write;

use signorini::mesh::Mesh;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

/// Log-log plot of positive data; non-positive points are skipped.
pub fn loglog_plot(title: &str, xlabel: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| *x > 0.0 && *y > 0.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts() {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y.log10());
        y1 = y1.max(y.log10());
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| MARGIN + (x.log10() - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y.log10() - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
    for e in x0 as i32..=x1 as i32 {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x}" y1="{MARGIN}" x2="{x}" y2="{}" stroke="#ddd"/>"##, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">1e{e}</text>"#, HEIGHT - MARGIN + 18.0);
    }
    for e in y0 as i32..=y1 as i32 {
        let y = py(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, WIDTH - MARGIN);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">1e{e}</text>"#, MARGIN - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#, WIDTH / 2.0, HEIGHT - 15.0);
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = ser
            .points
            .iter()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.join(" "));
        for p in &path {
            let (cx, cy) = p.split_once(',').expect("formatted point");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, WIDTH - MARGIN - 150.0, ser.label);
    }
    s.push_str("</svg>\n");
    s
}

/// Mesh with each element colored by `log10` of its value.
pub fn heatmap(mesh: &Mesh, values: &[f64]) -> String {
    let (lo, hi) = values.iter().filter(|v| **v > 0.0).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v.log10()), b.max(v.log10()))
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (mut bx0, mut bx1, mut by0, mut by1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for v in mesh.vertices() {
        bx0 = bx0.min(v[0]);
        bx1 = bx1.max(v[0]);
        by0 = by0.min(v[1]);
        by1 = by1.max(v[1]);
    }
    let scale = (WIDTH - 2.0 * MARGIN) / (bx1 - bx0).max(by1 - by0);
    let px = |x: f64| MARGIN + (x - bx0) * scale;
    let py = |y: f64| MARGIN + (by1 - y) * scale;
    let mut s = String::new();
    let size = WIDTH;
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (t, &v) in values.iter().enumerate().take(mesh.num_elements()) {
        let c = if v > 0.0 && lo.is_finite() { (v.log10() - lo) / span } else { 0.0 };
        let (r, b) = ((255.0 * c) as u8, (255.0 * (1.0 - c)) as u8);
        let [a, p, q] = mesh.element_points(t);
        let _ = writeln!(
            s,
            r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="rgb({r},64,{b})" stroke="black" stroke-width="0.2"/>"#,
            px(a[0]),
            py(a[1]),
            px(p[0]),
            py(p[1]),
            px(q[0]),
            py(q[1])
        );
    }
    s.push_str("</svg>\n");
    s
}

//! Overlay of traced region boundaries as a standalone SVG.

use std::fmt::Write as _;

use multilink::percentile::{BoundaryRecord, RegionMethod};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 640.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 540.0;
const TICKS: usize = 5;

fn style(method: RegionMethod) -> (&'static str, &'static str) {
    match method {
        RegionMethod::Conservative => ("#1b9e77", "none"),
        RegionMethod::LikelihoodRatio => ("#d95f02", "8 4"),
        RegionMethod::ScoreTest => ("#7570b3", "2 3"),
    }
}

fn label(method: RegionMethod) -> &'static str {
    match method {
        RegionMethod::Conservative => "conservative",
        RegionMethod::LikelihoodRatio => "likelihood ratio",
        RegionMethod::ScoreTest => "score",
    }
}

struct Axes {
    window: [(f64, f64); 2],
}

impl Axes {
    fn px(&self, x1: f64) -> f64 {
        let (lo, hi) = self.window[0];
        LEFT + (x1 - lo) / (hi - lo) * (RIGHT - LEFT)
    }

    fn py(&self, x2: f64) -> f64 {
        let (lo, hi) = self.window[1];
        BOTTOM - (x2 - lo) / (hi - lo) * (BOTTOM - TOP)
    }
}

/// Closed outlines of each run of consecutive non-empty columns: lower
/// bounds left to right, then upper bounds back.
fn outlines(records: &[BoundaryRecord]) -> Vec<Vec<(f64, f64)>> {
    let mut runs: Vec<Vec<(f64, f64, f64)>> = Vec::new();
    let mut current = Vec::new();
    for r in records {
        match r.bounds {
            Some((lo, hi)) => current.push((r.x1, lo, hi)),
            None if !current.is_empty() => runs.push(std::mem::take(&mut current)),
            None => {}
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs.into_iter()
        .map(|run| {
            let mut pts: Vec<(f64, f64)> = run.iter().map(|&(x, lo, _)| (x, lo)).collect();
            pts.extend(run.iter().rev().map(|&(x, _, hi)| (x, hi)));
            pts.push(pts[0]);
            pts
        })
        .collect()
}

/// Render the boundaries of each region in `series` over `window`, with
/// `x0` marked when given.
pub fn render(series: &[(RegionMethod, &[BoundaryRecord])], window: &[(f64, f64)], x0: Option<&[f64]>) -> String {
    let axes = Axes {
        window: [window[0], window[1]],
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        RIGHT - LEFT,
        BOTTOM - TOP
    );
    for i in 0..TICKS {
        let t = i as f64 / (TICKS - 1) as f64;
        let v1 = window[0].0 + t * (window[0].1 - window[0].0);
        let v2 = window[1].0 + t * (window[1].1 - window[1].0);
        let (x, y) = (axes.px(v1), axes.py(v2));
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{BOTTOM}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{v1:.3}</text>"#,
            BOTTOM + 5.0,
            BOTTOM + 20.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v2:.3}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">x1</text>"#,
        0.5 * (LEFT + RIGHT),
        BOTTOM + 45.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">x2</text>"#,
        0.5 * (TOP + BOTTOM),
        0.5 * (TOP + BOTTOM)
    );

    for &(method, records) in series {
        let (colour, dash) = style(method);
        for outline in outlines(records) {
            let points: Vec<String> = outline
                .iter()
                .map(|&(a, b)| format!("{:.2},{:.2}", axes.px(a), axes.py(b)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="{}" fill="none" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}" points="{}"/>"#,
                method.key(),
                points.join(" ")
            );
        }
    }

    if let Some(x0) = x0 {
        let (x, y) = (axes.px(x0[0]), axes.py(x0[1]));
        let _ = writeln!(
            s,
            r#"<g class="x0" stroke="black" stroke-width="2"><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/><line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/></g>"#,
            x - 6.0,
            y - 6.0,
            x + 6.0,
            y + 6.0,
            x - 6.0,
            y + 6.0,
            x + 6.0,
            y - 6.0
        );
    }

    let legend_x = RIGHT + 20.0;
    let mut legend_y = TOP + 10.0;
    for &(method, _) in series {
        let (colour, dash) = style(method);
        let _ = writeln!(
            s,
            r#"<line x1="{legend_x}" y1="{legend_y}" x2="{}" y2="{legend_y}" stroke="{colour}" stroke-width="2" stroke-dasharray="{dash}"/><text x="{}" y="{}">{}</text>"#,
            legend_x + 30.0,
            legend_x + 38.0,
            legend_y + 4.0,
            label(method)
        );
        legend_y += 22.0;
    }
    if x0.is_some() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-weight="bold">&#215;</text><text x="{}" y="{}">x0</text>"#,
            legend_x + 10.0,
            legend_y + 4.0,
            legend_x + 38.0,
            legend_y + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

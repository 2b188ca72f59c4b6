//! Bubble plot of surface peaks on a fixed 800x600 canvas.
//!
//! Bubble radius is `min(MAX_RADIUS, RADIUS_SCALE / pval)` pixels, so it is
//! inversely proportional to the p-value until the cap. The surface itself
//! is drawn underneath as a grey heat map.

use std::fmt::Write;

use soda::localizer::{DiSurface, FdrMethod, PeakList};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const MAX_RADIUS: f64 = 40.0;
pub const RADIUS_SCALE: f64 = 2.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 60.0;

pub fn bubble_radius(pval: f64) -> f64 {
    if pval <= 0.0 {
        return MAX_RADIUS;
    }
    (RADIUS_SCALE / pval).min(MAX_RADIUS)
}

pub struct Legend {
    pub window: usize,
    pub q: f64,
    pub method: FdrMethod,
    pub seed: u64,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn bubble_svg(surface: &DiSurface, peaks: &PeakList, legend: &Legend, title: &str) -> String {
    let (rows, cols) = surface.shape();
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x_max = surface.tau_x.last().copied().unwrap_or(0).max(1) as f64;
    let y_max = surface.tau_y.last().copied().unwrap_or(0).max(1) as f64;
    let px = |t: f64| LEFT + t / x_max * plot_w;
    let py = |t: f64| TOP + plot_h - t / y_max * plot_h;
    let cell_w = plot_w / (x_max + 1.0) * surface.stride as f64;
    let cell_h = plot_h / (y_max + 1.0) * surface.stride as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="24" font-size="15">{}</text>"#, escape(title));

    let top = surface.max();
    let bottom = surface.di.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let span = (top - bottom).max(f64::MIN_POSITIVE);
    let _ = writeln!(s, r#"<g id="surface">"#);
    for i in 0..rows {
        for j in 0..cols {
            let shade = ((surface.di[i][j] - bottom) / span).clamp(0.0, 1.0);
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="black" fill-opacity="{:.3}"/>"#,
                px(surface.tau_x[i] as f64) - cell_w / 2.0,
                py(surface.tau_y[j] as f64) - cell_h / 2.0,
                cell_w,
                cell_h,
                0.05 + 0.3 * shade
            );
        }
    }
    let _ = writeln!(s, "</g>");

    // Axes with five ticks each.
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT} {TOP} V{} H{}" stroke="black" fill="none"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for t in 0..=4 {
        let vx = x_max * t as f64 / 4.0;
        let vy = y_max * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"#,
            px(vx),
            TOP + plot_h + 18.0,
            vx
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.0}</text>"#,
            LEFT - 8.0,
            py(vy) + 4.0,
            vy
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">tau_x (X window start)</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">tau_y (Y window start)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );

    let _ = writeln!(s, r#"<g id="peaks">"#);
    for p in peaks.peaks.iter().rev() {
        let (fill, stroke) = if p.significant {
            ("#d62728", "#7f1010")
        } else {
            ("#9e9e9e", "#555555")
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{fill}" fill-opacity="0.55" stroke="{stroke}"><title>tau_x={} tau_y={} di={:.4} p={:.3e}</title></circle>"#,
            px(p.tau_x as f64),
            py(p.tau_y as f64),
            bubble_radius(p.pval),
            p.tau_x,
            p.tau_y,
            p.di,
            p.pval
        );
    }
    let _ = writeln!(s, "</g>");

    let method = match legend.method {
        FdrMethod::Bh => "BH",
        FdrMethod::By => "BY",
    };
    let lx = WIDTH - RIGHT - 210.0;
    let _ = writeln!(
        s,
        r##"<g id="legend"><rect x="{lx}" y="34" width="210" height="22" fill="white" stroke="#888"/><text x="{}" y="49">T = {}, q = {} ({method}), seed = {}</text></g>"##,
        lx + 8.0,
        legend.window,
        legend.q,
        legend.seed
    );
    s.push_str("</svg>\n");
    s
}

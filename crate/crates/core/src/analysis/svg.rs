//! Minimal hand-written SVG charts.

use std::collections::BTreeMap;
use std::fmt::Write;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn open(width: f64, height: f64, title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        width / 2.0,
        escape(title)
    )
}

fn title_width(title: &str) -> f64 {
    8.5 * title.chars().count() as f64 + 20.0
}

/// White (0) to dark blue (100).
fn heat_color(pct: f64) -> String {
    let t = (pct / 100.0).clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// Grid of percentages; `None` cells are drawn grey.
pub fn heatmap(title: &str, rows: &[String], cols: &[String], values: &[Vec<Option<f64>>]) -> String {
    let (cell, left, top) = (40.0, 90.0, 70.0);
    let width = (left + cell * cols.len() as f64 + 20.0).max(title_width(title));
    let height = top + cell * rows.len() as f64 + 20.0;
    let mut s = open(width, height, title);
    for (c, name) in cols.iter().enumerate() {
        let x = left + cell * (c as f64 + 0.5);
        let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>", top - 8.0, escape(name));
    }
    for (r, name) in rows.iter().enumerate() {
        let y = top + cell * r as f64;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
            left - 6.0,
            y + cell / 2.0 + 4.0,
            escape(name)
        );
        for (c, v) in values[r].iter().enumerate() {
            let x = left + cell * c as f64;
            let (fill, label, ink) = match v {
                Some(p) => (heat_color(*p), format!("{p:.0}"), if *p > 55.0 { "white" } else { "black" }),
                None => ("#dddddd".to_string(), String::new(), "black"),
            };
            let _ = writeln!(
                s,
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" fill=\"{fill}\" stroke=\"white\"/>\
                 <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{ink}\">{label}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

struct Frame {
    left: f64,
    top: f64,
    width: f64,
    height: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x.1 - self.x.0).max(f64::EPSILON);
        self.left + (x - self.x.0) / span * self.width
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y.1 - self.y.0).max(f64::EPSILON);
        self.top + self.height - (y - self.y.0) / span * self.height
    }

    fn axes(&self, s: &mut String, x_label: &str, y_label: &str) {
        let (l, t, w, h) = (self.left, self.top, self.width, self.height);
        let _ = writeln!(
            s,
            "<path d=\"M{l},{t} V{} H{}\" fill=\"none\" stroke=\"black\"/>",
            t + h,
            l + w
        );
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", l + w / 2.0, t + h + 32.0, escape(x_label));
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>",
            l - 38.0,
            t + h / 2.0,
            l - 38.0,
            t + h / 2.0,
            escape(y_label)
        );
        for (v, label) in [(self.y.0, self.y.0), (self.y.1, self.y.1)] {
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{label:.2}</text>", l - 4.0, self.py(v) + 4.0);
        }
    }
}

/// Named series of (x, y) points on shared axes with a fixed y range.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    y_range: (f64, f64),
    series: &[(String, Vec<(f64, f64)>)],
) -> String {
    let xs = series.iter().flat_map(|(_, pts)| pts.iter().map(|p| p.0));
    let (xmin, xmax) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let (xmin, xmax) = if xmin.is_finite() { (xmin, xmax) } else { (0.0, 1.0) };
    let frame = Frame { left: 60.0, top: 35.0, width: 360.0, height: 220.0, x: (xmin, xmax), y: y_range };
    let mut s = open(560.0, 300.0, title);
    frame.axes(&mut s, x_label, y_label);
    let mut ticks: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x}</text>", frame.px(x), frame.top + frame.height + 14.0);
    }
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y))).collect();
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>", path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{color}\"/>", frame.px(x), frame.py(y));
        }
        let ly = 45.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"435\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/><text x=\"450\" y=\"{ly}\">{}</text>",
            ly - 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Vertical bars with an annotation line under the title.
pub fn bar_chart(title: &str, annotation: &str, labels: &[String], values: &[f64]) -> String {
    let ymax = values.iter().copied().fold(0.0, f64::max).max(f64::EPSILON);
    let frame = Frame { left: 60.0, top: 45.0, width: 40.0 * labels.len().max(1) as f64, height: 200.0, x: (0.0, 1.0), y: (0.0, ymax) };
    let width = (frame.left + frame.width + 30.0).max(260.0).max(title_width(title));
    let mut s = open(width, 290.0, title);
    let _ = writeln!(s, "<text x=\"{}\" y=\"34\" text-anchor=\"middle\">{}</text>", width / 2.0, escape(annotation));
    frame.axes(&mut s, "layer", "weight");
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = frame.left + 40.0 * i as f64 + 6.0;
        let y = frame.py(v);
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{y:.2}\" width=\"28\" height=\"{:.2}\" fill=\"{}\"/>\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            frame.top + frame.height - y,
            PALETTE[0],
            x + 14.0,
            frame.top + frame.height + 14.0,
            escape(label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Points coloured by key, with a legend in key order of first appearance.
pub fn scatter(title: &str, points: &[(f64, f64)], keys: &[String]) -> String {
    let fold = |f: fn(&(f64, f64)) -> f64| {
        points.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    };
    let (mut xr, mut yr) = (fold(|p| p.0), fold(|p| p.1));
    if !xr.0.is_finite() {
        (xr, yr) = ((0.0, 1.0), (0.0, 1.0));
    }
    let frame = Frame { left: 20.0, top: 30.0, width: 400.0, height: 400.0, x: xr, y: yr };
    let mut s = open(540.0, 450.0, title);
    let mut colors: BTreeMap<&str, usize> = BTreeMap::new();
    let mut order = Vec::new();
    for k in keys {
        if !colors.contains_key(k.as_str()) {
            colors.insert(k, order.len());
            order.push(k.as_str());
        }
    }
    for (&(x, y), k) in points.iter().zip(keys) {
        let color = PALETTE[colors[k.as_str()] % PALETTE.len()];
        let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\" fill-opacity=\"0.7\"/>", frame.px(x), frame.py(y));
    }
    for (i, k) in order.iter().enumerate() {
        let ly = 45.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<rect x=\"440\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"455\" y=\"{ly}\">{}</text>",
            ly - 9.0,
            PALETTE[i % PALETTE.len()],
            escape(k)
        );
    }
    s.push_str("</svg>\n");
    s
}

//! Objective scatter with the Pareto front drawn on top.

use std::fmt::Write;

use resbemf::search::SearchOutcome;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Axis { lo: 0.0, hi: 1.0 };
        }
        let pad = ((hi - lo) * 0.05).max(0.005);
        Axis {
            lo: (lo - pad).max(0.0),
            hi: (hi + pad).min(1.0),
        }
    }

    fn scale(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }
}

pub fn scatter(outcome: &SearchOutcome) -> String {
    let points: Vec<(usize, f64, f64)> = outcome
        .candidates
        .iter()
        .enumerate()
        .filter_map(|(j, c)| c.evaluated().map(|e| (j, e.objectives.coverage, e.objectives.one_minus_mae)))
        .collect();
    let xa = Axis::fit(points.iter().map(|p| p.1));
    let ya = Axis::fit(points.iter().map(|p| p.2));
    let x = |v: f64| xa.scale(v, MARGIN, WIDTH - MARGIN / 2.0);
    let y = |v: f64| ya.scale(v, HEIGHT - MARGIN, MARGIN / 2.0);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r##"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"##
    );
    let _ = writeln!(s, r##"<rect width="100%" height="100%" fill="white"/>"##);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN / 2.0, HEIGHT - MARGIN, MARGIN / 2.0);
    let _ = writeln!(
        s,
        r##"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{x1:.1} {y0:.1}" fill="none" stroke="black"/>"##
    );
    for t in 0..=4 {
        let f = t as f64 / 4.0;
        let xv = xa.lo + f * (xa.hi - xa.lo);
        let yv = ya.lo + f * (ya.hi - ya.lo);
        let (px, py) = (x(xv), y(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.3}</text>"##,
            y0 + 5.0,
            y0 + 20.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.3}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" text-anchor="middle">coverage</text>"##,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r##"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">1 - MAE</text>"##,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for &(j, c, q) in &points {
        if !outcome.front.contains(&j) {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#999999"/>"##, x(c), y(q));
        }
    }
    let front: Vec<(f64, f64)> = outcome
        .front
        .iter()
        .filter_map(|&j| outcome.candidates[j].evaluated())
        .map(|e| (x(e.objectives.coverage), y(e.objectives.one_minus_mae)))
        .collect();
    if front.len() > 1 {
        let path: Vec<String> = front.iter().map(|(a, b)| format!("{a:.2},{b:.2}")).collect();
        let _ = writeln!(
            s,
            r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="1.5"/>"##,
            path.join(" ")
        );
    }
    for (a, b) in &front {
        let _ = writeln!(s, r##"<circle cx="{a:.2}" cy="{b:.2}" r="4" fill="#c0392b"/>"##);
    }
    s.push_str("</svg>\n");
    s
}

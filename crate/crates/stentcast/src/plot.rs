//! Minimal SVG 1.1 chart rendering for report figures.
//!
//! Every drawing routine is a pure function of its inputs: coordinates are
//! written with two decimals and no timestamps or random ids are embedded,
//! so identical data yields byte-identical files.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;

const COLOR_ACTUAL: &str = "#2a6fbb";
const COLOR_PREDICTED: &str = "#e3842c";
const COLOR_GRID: &str = "#cccccc";
const COLOR_AXIS: &str = "#333333";

/// Data ranges of the plotting area, mapping data space to pixel space.
struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn of(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Frame {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in it {
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if !lo.is_finite() || lo == hi {
                // Degenerate span: pad around the single value (or zero).
                let c = if lo.is_finite() { lo } else { 0.0 };
                (c - 1.0, c + 1.0)
            } else {
                let pad = (hi - lo) * 0.06;
                (lo - pad, hi + pad)
            }
        };
        let (x_min, x_max) = span(&mut xs.clone());
        let (y_min, y_max) = span(&mut ys.clone());
        Frame { x_min, x_max, y_min, y_max }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Svg {
        let mut body = String::new();
        let _ = write!(
            body,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
             width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
             <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
        );
        let mut svg = Svg { body };
        svg.text(WIDTH / 2.0, MARGIN_T / 2.0 + 5.0, title, 16, "middle", COLOR_AXIS);
        svg
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, color: &str, width: f64, dash: Option<&str>) {
        let dash = dash.map(|d| format!(" stroke-dasharray=\"{d}\"")).unwrap_or_default();
        let _ = write!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
             stroke=\"{color}\" stroke-width=\"{width}\"{dash}/>\n"
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = write!(
            self.body,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"{r}\" fill=\"{color}\" fill-opacity=\"0.75\"/>\n"
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str) {
        let _ = write!(
            self.body,
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\" fill-opacity=\"0.85\"/>\n"
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str, width: f64) {
        if points.is_empty() {
            return;
        }
        let coords: Vec<String> =
            points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = write!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"/>\n",
            coords.join(" ")
        );
    }

    fn text(&mut self, x: f64, y: f64, content: &str, size: usize, anchor: &str, color: &str) {
        let content = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = write!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-family=\"sans-serif\" font-size=\"{size}\" \
             text-anchor=\"{anchor}\" fill=\"{color}\">{content}</text>\n"
        );
    }

    /// Axes with five ticks per side, plus axis labels.
    fn axes(&mut self, frame: &Frame, x_label: &str, y_label: &str) {
        let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
        self.line(x0, MARGIN_T, x0, y0, COLOR_AXIS, 1.0, None);
        self.line(x0, y0, WIDTH - MARGIN_R, y0, COLOR_AXIS, 1.0, None);
        for i in 0..=4 {
            let t = i as f64 / 4.0;
            let xv = frame.x_min + t * (frame.x_max - frame.x_min);
            let yv = frame.y_min + t * (frame.y_max - frame.y_min);
            let px = frame.px(xv);
            let py = frame.py(yv);
            self.line(px, y0, px, y0 + 4.0, COLOR_AXIS, 1.0, None);
            self.text(px, y0 + 18.0, &format!("{xv:.2}"), 11, "middle", COLOR_AXIS);
            self.line(x0 - 4.0, py, x0, py, COLOR_AXIS, 1.0, None);
            self.text(x0 - 8.0, py + 4.0, &format!("{yv:.2}"), 11, "end", COLOR_AXIS);
            if i > 0 {
                self.line(x0, py, WIDTH - MARGIN_R, py, COLOR_GRID, 0.5, Some("2,3"));
            }
        }
        self.text((MARGIN_L + WIDTH - MARGIN_R) / 2.0, HEIGHT - 14.0, x_label, 13, "middle", COLOR_AXIS);
        let _ = write!(
            self.body,
            "<text x=\"18\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"13\" \
             text-anchor=\"middle\" fill=\"{COLOR_AXIS}\" transform=\"rotate(-90 18 {:.2})\">{y_label}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Predicted-vs-actual scatter with the identity line.
pub fn scatter_plot(actual: &[f64], predicted: &[f64], title: &str, unit: &str) -> String {
    let all = actual.iter().chain(predicted).copied();
    let frame = Frame::of(all.clone(), all);
    let mut svg = Svg::new(title);
    svg.axes(&frame, &format!("actual ({unit})"), &format!("predicted ({unit})"));
    let lo = frame.x_min.max(frame.y_min);
    let hi = frame.x_max.min(frame.y_max);
    svg.line(frame.px(lo), frame.py(lo), frame.px(hi), frame.py(hi), COLOR_AXIS, 1.0, Some("4,3"));
    for (&a, &p) in actual.iter().zip(predicted) {
        svg.circle(frame.px(a), frame.py(p), 3.0, COLOR_PREDICTED);
    }
    svg.finish()
}

/// Residual (predicted minus actual) against actual, with the zero line.
pub fn residual_plot(actual: &[f64], predicted: &[f64], title: &str, unit: &str) -> String {
    let residuals: Vec<f64> = predicted.iter().zip(actual).map(|(p, a)| p - a).collect();
    let frame = Frame::of(actual.iter().copied(), residuals.iter().copied());
    let mut svg = Svg::new(title);
    svg.axes(&frame, &format!("actual ({unit})"), &format!("residual ({unit})"));
    if frame.y_min < 0.0 && frame.y_max > 0.0 {
        svg.line(frame.px(frame.x_min), frame.py(0.0), frame.px(frame.x_max), frame.py(0.0), COLOR_AXIS, 1.0, Some("4,3"));
    }
    for (&a, &r) in actual.iter().zip(&residuals) {
        svg.circle(frame.px(a), frame.py(r), 3.0, COLOR_PREDICTED);
    }
    svg.finish()
}

/// Paired bars of actual (blue) and predicted (orange) mSEI per lesion, with
/// the threshold line.
pub fn paired_bar_plot(
    lesion_ids: &[String],
    actual: &[f64],
    predicted: &[f64],
    threshold: f64,
    title: &str,
) -> String {
    let frame = Frame::of(
        (0..lesion_ids.len().max(1)).map(|i| i as f64),
        actual.iter().chain(predicted).copied().chain([0.0, threshold]),
    );
    let mut svg = Svg::new(title);
    svg.axes(&frame, "lesion", "mSEI (%)");
    let n = lesion_ids.len().max(1) as f64;
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / n;
    let bar = (slot * 0.35).min(14.0);
    let base = frame.py(frame.y_min.max(0.0));
    for (i, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        let cx = MARGIN_L + (i as f64 + 0.5) * slot;
        let (ya, yp) = (frame.py(a), frame.py(p));
        svg.rect(cx - bar, ya, bar, base - ya, COLOR_ACTUAL);
        svg.rect(cx, yp, bar, base - yp, COLOR_PREDICTED);
    }
    let ty = frame.py(threshold);
    svg.line(MARGIN_L, ty, WIDTH - MARGIN_R, ty, "#b03030", 1.2, Some("6,3"));
    svg.text(WIDTH - MARGIN_R - 4.0, ty - 5.0, &format!("{threshold:.0}%"), 11, "end", "#b03030");
    svg.text(MARGIN_L + 10.0, MARGIN_T + 14.0, "actual", 12, "start", COLOR_ACTUAL);
    svg.text(MARGIN_L + 70.0, MARGIN_T + 14.0, "predicted", 12, "start", COLOR_PREDICTED);
    svg.finish()
}

/// Actual and predicted lumen-area curves along the stented span.
pub fn area_curve_plot(
    frames: &[usize],
    actual: &[f64],
    predicted: &[f64],
    title: &str,
) -> String {
    let frame = Frame::of(
        frames.iter().map(|&f| f as f64),
        actual.iter().chain(predicted).copied(),
    );
    let mut svg = Svg::new(title);
    svg.axes(&frame, "frame", "lumen area (mm^2)");
    let curve = |vals: &[f64]| -> Vec<(f64, f64)> {
        frames.iter().zip(vals).map(|(&f, &v)| (frame.px(f as f64), frame.py(v))).collect()
    };
    svg.polyline(&curve(actual), COLOR_ACTUAL, 1.6);
    svg.polyline(&curve(predicted), COLOR_PREDICTED, 1.6);
    svg.text(MARGIN_L + 10.0, MARGIN_T + 14.0, "actual", 12, "start", COLOR_ACTUAL);
    svg.text(MARGIN_L + 70.0, MARGIN_T + 14.0, "predicted", 12, "start", COLOR_PREDICTED);
    svg.finish()
}

/// ROC curve with the chance diagonal.
pub fn roc_plot(points: &[(f64, f64)], auc: Option<f64>, title: &str) -> String {
    let frame = Frame { x_min: -0.02, x_max: 1.02, y_min: -0.02, y_max: 1.02 };
    let title = match auc {
        Some(a) => format!("{title} (AUC {a:.3})"),
        None => title.to_string(),
    };
    let mut svg = Svg::new(&title);
    svg.axes(&frame, "false positive rate", "true positive rate");
    svg.line(frame.px(0.0), frame.py(0.0), frame.px(1.0), frame.py(1.0), COLOR_GRID, 1.0, Some("4,3"));
    let px_points: Vec<(f64, f64)> =
        points.iter().map(|&(x, y)| (frame.px(x), frame.py(y))).collect();
    svg.polyline(&px_points, COLOR_PREDICTED, 1.8);
    for &(x, y) in &px_points {
        svg.circle(x, y, 2.2, COLOR_PREDICTED);
    }
    svg.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_is_deterministic_and_well_formed() {
        let a = vec![1.0, 2.0, 3.0];
        let p = vec![1.1, 1.9, 3.2];
        let s1 = scatter_plot(&a, &p, "predicted vs actual", "mm^2");
        let s2 = scatter_plot(&a, &p, "predicted vs actual", "mm^2");
        assert_eq!(s1, s2);
        assert!(s1.starts_with("<svg"));
        assert!(s1.ends_with("</svg>\n"));
        assert_eq!(s1.matches("<circle").count(), 3);
    }

    #[test]
    fn roc_plot_renders_every_point() {
        let pts = vec![(0.0, 0.0), (0.0, 0.5), (0.5, 1.0), (1.0, 1.0)];
        let s = roc_plot(&pts, Some(0.75), "ROC");
        assert!(s.contains("AUC 0.750"));
        assert_eq!(s.matches("<circle").count(), 4);
    }

    #[test]
    fn degenerate_ranges_do_not_produce_nan_coordinates() {
        let s = area_curve_plot(&[5, 5], &[2.0, 2.0], &[2.0, 2.0], "flat");
        assert!(!s.contains("NaN"));
        let s = paired_bar_plot(&["l0".into()], &[80.0], &[80.0], 80.0, "bars");
        assert!(!s.contains("NaN"));
    }

    #[test]
    fn titles_are_escaped() {
        let s = scatter_plot(&[1.0, 2.0], &[1.0, 2.0], "a < b & c", "mm^2");
        assert!(s.contains("a &lt; b &amp; c"));
    }
}

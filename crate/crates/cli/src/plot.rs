//! Bird's-eye SVG scatter plots in vehicle coordinates.
//!
//! Forward (+x) points up and +y (left) points left, so the horizontal axis
//! shows y mirrored.

use std::fmt::Write;

use radclutter::{Label, Vec2};

pub const SIZE: f64 = 640.0;
const MARGIN: f64 = 40.0;
const MIN_HALF_EXTENT: f64 = 10.0;
/// Arrow length per m/s of compensated velocity, meters.
const ARROW_SCALE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mark {
    /// Ground-truth label; `old` points come from earlier scans.
    Label { label: Label, old: bool },
    /// Truth class with correct/incorrect prediction.
    Outcome { truth: Label, correct: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotPoint {
    pub position: Vec2,
    pub mark: Mark,
    /// Velocity arrow, vehicle frame, m/s.
    pub arrow: Option<Vec2>,
}

fn base_color(label: Label) -> (&'static str, &'static str) {
    match label {
        Label::MovingObject => ("#1f4fd1", "#9fb5ee"),
        Label::Clutter => ("#d62728", "#f2a7a8"),
        Label::Stationary => ("#7f7f7f", "#cfcfcf"),
        Label::Unlabeled => ("#000000", "#a0a0a0"),
    }
}

pub fn color(mark: Mark) -> &'static str {
    match mark {
        Mark::Label { label, old } => {
            let (dark, pale) = base_color(label);
            if old {
                pale
            } else {
                dark
            }
        }
        Mark::Outcome { truth, correct } => {
            let (dark, pale) = base_color(truth);
            if correct {
                dark
            } else {
                pale
            }
        }
    }
}

struct View {
    cx: f64,
    cy: f64,
    scale: f64,
}

impl View {
    fn fit(points: &[PlotPoint]) -> Self {
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for p in points {
            xmin = xmin.min(p.position.x);
            xmax = xmax.max(p.position.x);
            ymin = ymin.min(p.position.y);
            ymax = ymax.max(p.position.y);
        }
        let half = ((xmax - xmin).max(ymax - ymin) / 2.0).max(MIN_HALF_EXTENT) * 1.05;
        View {
            cx: (xmin + xmax) / 2.0,
            cy: (ymin + ymax) / 2.0,
            scale: (SIZE - 2.0 * MARGIN) / (2.0 * half),
        }
    }

    /// Vehicle coordinates to SVG pixels.
    fn px(&self, p: Vec2) -> (f64, f64) {
        let c = SIZE / 2.0;
        (c - (p.y - self.cy) * self.scale, c - (p.x - self.cx) * self.scale)
    }
}

fn legend(out: &mut String, mode_confusion: bool) {
    let entries: Vec<(&str, &str)> = if mode_confusion {
        vec![
            ("moving, correct", color(Mark::Outcome { truth: Label::MovingObject, correct: true })),
            ("moving, wrong", color(Mark::Outcome { truth: Label::MovingObject, correct: false })),
            ("clutter, correct", color(Mark::Outcome { truth: Label::Clutter, correct: true })),
            ("clutter, wrong", color(Mark::Outcome { truth: Label::Clutter, correct: false })),
            ("stationary, correct", color(Mark::Outcome { truth: Label::Stationary, correct: true })),
            ("stationary, wrong", color(Mark::Outcome { truth: Label::Stationary, correct: false })),
        ]
    } else {
        vec![
            ("moving", color(Mark::Label { label: Label::MovingObject, old: false })),
            ("clutter", color(Mark::Label { label: Label::Clutter, old: false })),
            ("stationary", color(Mark::Label { label: Label::Stationary, old: false })),
        ]
    };
    for (i, (name, fill)) in entries.iter().enumerate() {
        let y = 12.0 + 14.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="8" y="{y}" width="10" height="10" fill="{fill}"/><text x="24" y="{}" font-size="11">{name}</text>"#,
            y + 9.0
        );
    }
}

/// Renders the points; markers are `<circle class="pt">` elements.
pub fn render(points: &[PlotPoint], title: &str, confusion_mode: bool) -> String {
    let view = View::fit(points);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (ox, oy) = view.px(Vec2::ZERO);
    let _ = writeln!(
        out,
        r#"<g class="axes" stroke="black" stroke-width="1"><line x1="0" y1="{oy:.2}" x2="{SIZE}" y2="{oy:.2}"/><line x1="{ox:.2}" y1="0" x2="{ox:.2}" y2="{SIZE}"/></g>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="14" font-size="12">x</text><text x="8" y="{:.2}" font-size="12">y</text>"#,
        ox + 4.0,
        oy - 4.0
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{title}</text>"#,
        SIZE - 8.0,
        SIZE - 8.0
    );
    legend(&mut out, confusion_mode);
    for p in points.iter().filter(|p| p.arrow.is_some()) {
        let a = p.arrow.expect("filtered");
        let (x1, y1) = view.px(p.position);
        let (x2, y2) = view.px(p.position + a.scale(ARROW_SCALE));
        let _ = writeln!(
            out,
            r#"<line class="arrow" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{}" stroke-width="1"/>"#,
            color(p.mark)
        );
    }
    // Old points first so the current scan is drawn on top.
    let mut order: Vec<&PlotPoint> = points.iter().collect();
    order.sort_by_key(|p| !matches!(p.mark, Mark::Label { old: true, .. }));
    for p in order {
        let (x, y) = view.px(p.position);
        let _ = writeln!(out, r#"<circle class="pt" cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{}"/>"#, color(p.mark));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plot_has_axes_only() {
        let svg = render(&[], "scan 0", false);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains(r#"class="axes""#));
        assert_eq!(svg.matches(r#"class="pt""#).count(), 0);
    }

    #[test]
    fn mirrored_horizontal_axis() {
        let pts = [
            PlotPoint {
                position: Vec2::new(0.0, 5.0),
                mark: Mark::Label { label: Label::Clutter, old: false },
                arrow: None,
            },
            PlotPoint {
                position: Vec2::new(5.0, 0.0),
                mark: Mark::Label { label: Label::Clutter, old: false },
                arrow: None,
            },
        ];
        let view = View::fit(&pts);
        let (left_x, _) = view.px(pts[0].position);
        let (origin_x, origin_y) = view.px(Vec2::ZERO);
        let (_, ahead_y) = view.px(pts[1].position);
        assert!(left_x < origin_x, "+y is drawn to the left");
        assert!(ahead_y < origin_y, "+x is drawn upwards");
    }
}

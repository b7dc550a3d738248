//! Static renderings: episode traces over the grid and the recovery chart.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::AggregateCurve;
use crate::gridworld::{Coord, GridWorld, Terrain};
use crate::policy::AbstractState;
use crate::rollout::Trajectory;

const CELL: usize = 32;
const BASE_COLOR: &str = "#ff7f0e";
const RANDOM_COLOR: &str = "#1f77b4";
const PALETTE: [&str; 8] = [
    "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

fn terrain_char(world: &GridWorld, c: Coord) -> char {
    if c == world.start() {
        return 'S';
    }
    match world.terrain(c) {
        Terrain::Wall => '#',
        Terrain::Empty => '.',
        Terrain::Lava => 'L',
        Terrain::Goal => 'G',
    }
}

/// Text trace: `*` marks cells where every executed action came from the
/// base policy, `o` cells where at least one action was random.
pub fn render_trace_text(world: &GridWorld, trajectory: &Trajectory) -> String {
    let w = world.width();
    let mut marks: Vec<Option<bool>> = vec![None; w * world.height()];
    for s in &trajectory.steps {
        let i = s.state.position.y * w + s.state.position.x;
        marks[i] = Some(marks[i].unwrap_or(false) | s.mutated);
    }
    let mut out = String::new();
    for y in 0..world.height() {
        for x in 0..w {
            out.push(match marks[y * w + x] {
                Some(true) => 'o',
                Some(false) => '*',
                None => terrain_char(world, Coord::new(x, y)),
            });
        }
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "@ outcome={} steps={} random_steps={}",
        trajectory.outcome.terminal_reason.name(),
        trajectory.len(),
        trajectory.len() - trajectory.original_steps()
    );
    out
}

fn centre(c: Coord) -> (usize, usize) {
    (c.x * CELL + CELL / 2, c.y * CELL + CELL / 2)
}

/// SVG trace: one marker per step, random-action steps in blue and
/// base-policy steps in orange. Kept states get a dashed outline.
pub fn render_trace_svg(world: &GridWorld, trajectory: &Trajectory, kept: &BTreeSet<AbstractState>) -> String {
    let (w, h) = (world.width() * CELL, world.height() * CELL);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    for y in 0..world.height() {
        for x in 0..world.width() {
            let c = Coord::new(x, y);
            let fill = match world.terrain(c) {
                Terrain::Wall => "#444444",
                Terrain::Empty => "#ffffff",
                Terrain::Lava => "#e8590c",
                Terrain::Goal => "#2f9e44",
            };
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{}" y="{}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#bbbbbb"/>"##,
                x * CELL,
                y * CELL
            );
        }
    }
    for k in kept {
        let p = k.position();
        let _ = writeln!(
            s,
            r##"<rect class="kept" x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#000000" stroke-dasharray="3,2"/>"##,
            p.x * CELL + 2,
            p.y * CELL + 2,
            CELL - 4,
            CELL - 4
        );
    }
    let (sx, sy) = centre(world.start());
    let _ = writeln!(
        s,
        r##"<circle class="start" cx="{sx}" cy="{sy}" r="10" fill="none" stroke="#000000"/>"##
    );
    if !trajectory.steps.is_empty() {
        let mut points: Vec<String> = trajectory
            .steps
            .iter()
            .map(|st| {
                let (x, y) = centre(st.state.position);
                format!("{x},{y}")
            })
            .collect();
        if let Some(last) = trajectory.steps.last() {
            let end = world.next_position(last.state.position, last.action);
            let (x, y) = centre(end);
            points.push(format!("{x},{y}"));
        }
        let _ = writeln!(
            s,
            r##"<polyline class="path" points="{}" fill="none" stroke="#555555" stroke-width="2"/>"##,
            points.join(" ")
        );
    }
    for (i, st) in trajectory.steps.iter().enumerate() {
        let (x, y) = centre(st.state.position);
        let (class, color) = if st.mutated {
            ("random", RANDOM_COLOR)
        } else {
            ("base", BASE_COLOR)
        };
        let _ = writeln!(
            s,
            r#"<circle class="step {class}" data-step="{i}" cx="{x}" cy="{y}" r="5" fill="{color}" fill-opacity="0.8"/>"#
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Line chart of mean reward fraction against r with a shaded band of one
/// standard error per method.
pub fn render_chart_svg(aggregates: &[AggregateCurve]) -> String {
    let (width, height) = (640.0, 420.0);
    let (left, right, top, bottom) = (60.0, 150.0, 30.0, 50.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;
    let y_max = aggregates
        .iter()
        .flat_map(|a| a.points.iter().map(|p| p.mean_reward_fraction + p.std_error))
        .fold(1.0f64, f64::max)
        .max(1.0)
        * 1.05;
    let px = |r: f64| left + r * plot_w;
    let py = |v: f64| top + plot_h - (v / y_max) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##
    );
    for i in 0..=10 {
        let r = i as f64 / 10.0;
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{b:.2}" stroke="#eeeeee"/>"##,
            x = px(r),
            b = top + plot_h
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{r:.1}</text>"#,
            px(r),
            top + plot_h + 18.0
        );
    }
    let y_ticks = (y_max / 0.2).floor() as usize;
    for i in 0..=y_ticks {
        let v = i as f64 * 0.2;
        let _ = writeln!(
            s,
            r##"<line class="grid" x1="{left:.2}" y1="{y:.2}" x2="{x2:.2}" y2="{y:.2}" stroke="#eeeeee"/>"##,
            y = py(v),
            x2 = left + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            left - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<rect class="frame" x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">fraction of ranked states kept (r)</text>"#,
        left + plot_w / 2.0,
        height - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">reward recovered</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0
    );

    for (k, a) in aggregates.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper = a
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.r), py(p.mean_reward_fraction + p.std_error)));
        let lower = a.points.iter().rev().map(|p| {
            format!(
                "{:.2},{:.2}",
                px(p.r),
                py((p.mean_reward_fraction - p.std_error).max(0.0))
            )
        });
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(
            s,
            r#"<polygon class="band" data-method="{}" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            a.method,
            band.join(" ")
        );
        let line: Vec<String> = a
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.r), py(p.mean_reward_fraction)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline class="mean" data-method="{}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            a.method,
            line.join(" ")
        );
        let ly = top + 16.0 + 20.0 * k as f64;
        let lx = left + plot_w + 14.0;
        let _ = writeln!(
            s,
            r#"<line class="legend" x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}">{} (AUC {:.3})</text>"#,
            lx + 26.0,
            ly + 4.0,
            a.method,
            a.auc
        );
    }
    s.push_str("</svg>\n");
    s
}

//! Minimal static SVG chart for evaluation summaries.

use stackplan_core::eval::{AggregateReport, PlannerId, TaskKind};

const COLORS: [&str; 3] = ["#2a6fdb", "#d97706", "#6b7280"];

/// Grouped bar chart of whole-chain rationality per task and planner.
pub fn rationality_chart(report: &AggregateReport) -> String {
    let planners: Vec<PlannerId> = PlannerId::ALL
        .into_iter()
        .filter(|&p| report.rows.iter().any(|r| r.planner == p))
        .collect();
    let tasks: Vec<TaskKind> = TaskKind::ALL
        .into_iter()
        .filter(|&t| report.rows.iter().any(|r| r.task == t))
        .collect();

    let (width, height) = (640.0, 360.0);
    let (left, bottom, top) = (60.0, 40.0, 30.0);
    let plot_w = width - left - 20.0;
    let plot_h = height - bottom - top;
    let group_w = plot_w / tasks.len().max(1) as f64;
    let bar_w = (group_w * 0.7) / planners.len().max(1) as f64;

    let mut body = String::new();
    for grid in 0..=4 {
        let frac = grid as f64 / 4.0;
        let y = top + plot_h * (1.0 - frac);
        body.push_str(&format!(
            "<line x1='{left}' y1='{y:.1}' x2='{:.1}' y2='{y:.1}' stroke='#ddd'/>\
             <text x='{:.1}' y='{:.1}' font-size='11' text-anchor='end'>{}%</text>",
            left + plot_w,
            left - 6.0,
            y + 4.0,
            (frac * 100.0) as u32
        ));
    }
    for (ti, task) in tasks.iter().enumerate() {
        let gx = left + ti as f64 * group_w;
        body.push_str(&format!(
            "<text x='{:.1}' y='{:.1}' font-size='13' text-anchor='middle'>{}</text>",
            gx + group_w / 2.0,
            height - bottom + 20.0,
            task.code().to_uppercase()
        ));
        for (pi, &planner) in planners.iter().enumerate() {
            let Some(row) = report.row(planner, *task) else {
                continue;
            };
            let h = plot_h * row.ar_w.mean;
            let x = gx + group_w * 0.15 + pi as f64 * bar_w;
            let y = top + plot_h - h;
            body.push_str(&format!(
                "<rect x='{x:.1}' y='{y:.1}' width='{:.1}' height='{h:.1}' fill='{}'/>",
                bar_w * 0.9,
                COLORS[pi % COLORS.len()]
            ));
        }
    }
    for (pi, &planner) in planners.iter().enumerate() {
        let x = left + pi as f64 * 150.0;
        body.push_str(&format!(
            "<rect x='{x:.1}' y='8' width='12' height='12' fill='{}'/>\
             <text x='{:.1}' y='18' font-size='12'>{}</text>",
            COLORS[pi % COLORS.len()],
            x + 16.0,
            planner.code()
        ));
    }
    format!(
        "<svg xmlns='http://www.w3.org/2000/svg' width='{width}' height='{height}' \
         font-family='sans-serif'>\
         <text x='{:.1}' y='{:.1}' font-size='12' text-anchor='middle' \
         transform='rotate(-90 14 {:.1})'>whole-chain rationality</text>{body}</svg>",
        14.0,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
    )
}

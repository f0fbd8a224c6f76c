//! Grouped bar charts: subgroups along x, one colored bar per model, error
//! bars of one sample standard deviation.
//!
//! Every bar carries `data-model`, `data-subgroup`, `data-mean`, `data-std`
//! and `data-defined-runs` attributes holding the plotted numbers verbatim.

use std::fmt::Write;

use ciid_core::metrics::{GroupedMetricsReport, Metric};

const BAR_W: f64 = 10.0;
const GROUP_GAP: f64 = 18.0;
const LEFT: f64 = 60.0;
const TOP: f64 = 40.0;
const PLOT_H: f64 = 300.0;
const BOTTOM: f64 = 90.0;
const LEGEND_W: f64 = 220.0;

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn color(i: usize, n: usize) -> String {
    let hue = 360.0 * i as f64 / n.max(1) as f64;
    let light = if i % 2 == 0 { 45 } else { 60 };
    format!("hsl({hue:.1},65%,{light}%)")
}

fn y_of(v: f64) -> f64 {
    TOP + PLOT_H * (1.0 - v.clamp(0.0, 1.0))
}

pub fn metric_chart(report: &GroupedMetricsReport, metric: Metric, title: &str) -> String {
    let n_models = report.models.len().max(1);
    let group_w = n_models as f64 * BAR_W + GROUP_GAP;
    let plot_w = report.subgroups.len().max(1) as f64 * group_w;
    let width = LEFT + plot_w + LEGEND_W;
    let height = TOP + PLOT_H + BOTTOM;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="20" font-size="14">{} ({}; error bars: std over runs)</text>"#,
        escape(title),
        metric.name()
    );

    // axes and ticks
    let x_end = LEFT + plot_w;
    let base = TOP + PLOT_H;
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{base}" x2="{x_end}" y2="{base}" stroke="black"/>"#);
    for t in 0..=5 {
        let v = t as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y}" x2="{x_end}" y2="{y}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{v:.1}</text>"##,
            LEFT - 5.0,
            y + 4.0
        );
    }

    for (g, sub) in report.subgroups.iter().enumerate() {
        let gx = LEFT + g as f64 * group_w + GROUP_GAP / 2.0;
        for (m, model) in report.models.iter().enumerate() {
            let Some(cell) = report.cell(model, sub, metric) else {
                continue;
            };
            let Some(mean) = cell.mean else {
                continue;
            };
            let x = gx + m as f64 * BAR_W;
            let y = y_of(mean);
            let std_attr = cell.std.map_or_else(String::new, |v| v.to_string());
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-model="{}" data-subgroup="{}" data-mean="{mean}" data-std="{std_attr}" data-defined-runs="{}" x="{x}" y="{y}" width="{BAR_W}" height="{}" fill="{}"/>"#,
                escape(model),
                escape(sub),
                cell.defined_runs,
                base - y,
                color(m, n_models)
            );
            if let Some(sd) = cell.std {
                let cx = x + BAR_W / 2.0;
                let (lo, hi) = (y_of(mean - sd), y_of(mean + sd));
                let _ = writeln!(
                    s,
                    r#"<path class="err" d="M{cx} {lo}V{hi}M{} {lo}H{}M{} {hi}H{}" stroke="black" fill="none"/>"#,
                    cx - 3.0,
                    cx + 3.0,
                    cx - 3.0,
                    cx + 3.0
                );
            }
        }
        let lx = gx + n_models as f64 * BAR_W / 2.0;
        let ly = base + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx}" y="{ly}" text-anchor="end" transform="rotate(-40 {lx} {ly})">{}</text>"#,
            escape(sub)
        );
    }

    for (m, model) in report.models.iter().enumerate() {
        let y = TOP + m as f64 * 16.0;
        let x = x_end + 20.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            color(m, n_models),
            x + 15.0,
            y + 9.0,
            escape(model)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ciid_core::metrics::RunRecord;

    fn report() -> GroupedMetricsReport {
        let rec = |run, model: &str, v| RunRecord {
            run,
            model: model.into(),
            subgroup: "Full".into(),
            metric: Metric::Accuracy,
            value: v,
        };
        let records = [rec(1, "a&b", Some(0.5)), rec(2, "a&b", Some(0.7)), rec(1, "c", None), rec(2, "c", None)];
        GroupedMetricsReport::aggregate(2, &["a&b".into(), "c".into()], &["Full".into()], &records)
    }

    #[test]
    fn bars_carry_values_and_skip_undefined() {
        let svg = metric_chart(&report(), Metric::Accuracy, "t");
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 1);
        assert!(svg.contains(r#"data-model="a&amp;b""#));
        assert!(svg.contains("data-mean=\"0.6\""));
        assert_eq!(svg.matches(r#"class="err""#).count(), 1);
    }

    #[test]
    fn escaping() {
        assert_eq!(escape(r#"<a "b">"#), "&lt;a &quot;b&quot;&gt;");
    }
}

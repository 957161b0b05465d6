//! CSV, SVG and failure-summary writers, plus the run fan-out.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::Context;
use serde::Serialize;

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FailureSummary<'a> {
    command: &'a str,
    passed: bool,
    failures: &'a [String],
}

/// Machine-readable verdict, written to `failures.json` and echoed on stderr
/// when anything failed.
pub fn write_summary(out: &Path, command: &str, failures: &[String]) -> anyhow::Result<()> {
    let summary = FailureSummary {
        command,
        passed: failures.is_empty(),
        failures,
    };
    let text = serde_json::to_string_pretty(&summary)?;
    std::fs::write(out.join("failures.json"), format!("{text}\n"))?;
    if !failures.is_empty() {
        eprintln!("{}", serde_json::to_string(&summary)?);
    }
    Ok(())
}

pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: &'a [f64],
}

/// Self-contained SVG line chart over step index.
pub fn line_plot(title: &str, series: &[Series<'_>]) -> String {
    let (w, h, pad) = (900.0, 320.0, 40.0);
    let len = series.iter().map(|s| s.values.len()).max().unwrap_or(0).max(2);
    let (mut lo, mut hi) = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let margin = 0.05 * (hi - lo);
    let (lo, hi) = (lo - margin, hi + margin);
    let x = |i: usize| pad + (w - 2.0 * pad) * i as f64 / (len - 1) as f64;
    let y = |v: f64| h - pad - (h - 2.0 * pad) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="#888"/>"##,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    for v in [lo + margin, hi - margin] {
        let _ = writeln!(
            s,
            r#"<text x="4" y="{:.1}">{v:.2}</text>"#,
            y(v) + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, x(len - 1) - 20.0, h - pad + 16.0, len - 1);
    for (k, ser) in series.iter().enumerate() {
        let pts: Vec<String> = ser
            .values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, &v)| format!("{:.2},{:.2}", x(i), y(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
            ser.color,
            pts.join(" ")
        );
        let lx = w - pad - 150.0;
        let ly = pad + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="{}" stroke-width="2"/><text x="{}" y="{ly}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            ser.color,
            lx + 26.0,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Runs `f` over `items` on up to `jobs` threads; results keep input order.
pub fn run_jobs<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_preserve_order() {
        let items: Vec<u64> = (0..37).collect();
        let serial = run_jobs(&items, 1, |x| x * x);
        assert_eq!(run_jobs(&items, 4, |x| x * x), serial);
        assert!(run_jobs(&Vec::<u64>::new(), 3, |x| *x).is_empty());
    }

    #[test]
    fn plot_is_a_single_svg_document() {
        let v = [0.0, 1.0, 0.5];
        let svg = line_plot("a <b>", &[Series { name: "x", color: "black", values: &v }]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &lt;b&gt;"));
        assert_eq!(svg.matches("<polyline").count(), 1);
    }
}

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::train::load_runs;
use super::validate::ReportsFile;
use super::{hash_header, load_run_config, read_file, text_table, write_file, PipelineError, REPORTS_FILE};
use crate::methodology::{learning_curves, LearningCurves};
use crate::stats::{mean, Summary};

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub run_dir: PathBuf,
    pub plots: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Learning curves as an SVG: mean line, 10th-90th percentile band, and a dot
/// above every epoch where the first two algorithms differ significantly.
pub fn render_svg(title: &str, curves: &LearningCurves, config_hash: &str) -> String {
    let points = curves.curves.iter().flat_map(|c| c.points.iter());
    let epochs = curves.curves.iter().map(|c| c.points.len()).max().unwrap_or(0);
    let (mut lo, mut hi) = points.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.p10), hi.max(p.p90)));
    if !lo.is_finite() || !hi.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |e: usize| MARGIN + if epochs > 1 { plot_w * e as f64 / (epochs - 1) as f64 } else { plot_w / 2.0 };
    let y = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(svg, "<!-- config_hash={config_hash} -->");
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" font-size="16" text-anchor="middle">{title}</text>"#, WIDTH / 2.0);
    let _ = writeln!(
        svg,
        r#"<path d="M{MARGIN} {MARGIN} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">epoch</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    for e in 0..epochs {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" font-size="10" text-anchor="middle">{e}</text>"#, x(e), HEIGHT - MARGIN + 14.0);
    }
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" font-size="10" text-anchor="end">{v:.3}</text>"#, MARGIN - 4.0, y(v) + 3.0);
    }

    for (i, curve) in curves.curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if curve.points.is_empty() {
            continue;
        }
        let upper: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.epoch), y(p.p90))).collect();
        let lower: Vec<String> = curve.points.iter().rev().map(|p| format!("{:.2},{:.2}", x(p.epoch), y(p.p10))).collect();
        let _ = writeln!(svg, r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, upper.join(" "), lower.join(" "));
        let line: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.epoch), y(p.mean))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64,
            curve.algorithm
        );
    }
    for (e, &sig) in curves.significant.iter().enumerate() {
        if sig {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{}" r="3" fill="black"/>"#, x(e), MARGIN - 8.0);
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn mean_std(xs: &[f64]) -> String {
    match Summary::of(xs) {
        Some(s) => format!("{:.4} +- {:.4}", s.mean, s.std),
        None => "-".into(),
    }
}

/// Per reward function: learning score and networking score per algorithm,
/// then the resource figures behind the networking score.
fn score_tables(reports: &ReportsFile) -> String {
    let mut out = String::new();
    let mut rewards: Vec<&str> = Vec::new();
    for r in &reports.reports {
        if !rewards.contains(&r.reward.as_str()) {
            rewards.push(&r.reward);
        }
    }
    let mut scores = Vec::new();
    let mut resources = Vec::new();
    for reward in &rewards {
        let mut algorithms: Vec<&str> = Vec::new();
        for r in reports.reports.iter().filter(|r| r.reward == *reward) {
            if !algorithms.contains(&r.algorithm.as_str()) {
                algorithms.push(&r.algorithm);
            }
        }
        for alg in algorithms {
            let rs: Vec<_> = reports.reports.iter().filter(|r| r.reward == *reward && r.algorithm == alg).collect();
            let col = |f: fn(&crate::methodology::ScoreReport) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let discarded = rs.iter().filter(|r| r.discarded).count();
            scores.push(vec![
                reward.to_string(),
                alg.to_string(),
                mean_std(&col(|r| r.learning_score)),
                mean_std(&col(|r| r.networking_score)),
                format!("{discarded}/{}", rs.len()),
            ]);
            resources.push(vec![
                reward.to_string(),
                alg.to_string(),
                mean_std(&col(|r| r.mean_replicas)),
                mean_std(&col(|r| r.mean_latency)),
                format!("{:.4}", col(|r| r.max_latency).iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            ]);
        }
    }
    out.push_str("\nscores (mean +- std over seeds)\n");
    out.push_str(&text_table(&["reward", "algorithm", "learning", "networking", "discarded"], &scores));
    out.push_str("\nresources (mean +- std over seeds)\n");
    out.push_str(&text_table(&["reward", "algorithm", "replicas", "latency", "max_latency"], &resources));
    out
}

/// Writes `plots/<reward>.svg` and `summary.txt` for a trained run. Missing
/// run files are reported as warnings and left out of the curves.
pub fn report(run_dir: &Path) -> Result<ReportSummary, PipelineError> {
    let cfg = load_run_config(run_dir)?;
    let hash = cfg.hash();
    let (runs, missing) = load_runs(run_dir, &cfg)?;
    if runs.is_empty() {
        return Err(PipelineError::Empty(format!("no run files under {}", run_dir.join("runs").display())));
    }
    let mut warnings: Vec<String> = missing.iter().map(|id| format!("missing run for {id}")).collect();

    let mut summary = hash_header(&hash);
    let mut plots = Vec::new();
    let mut curve_rows = Vec::new();
    for spec in cfg.reward_specs()? {
        let label = spec.label();
        let groups: Vec<(String, Vec<Vec<f64>>)> = cfg
            .experiment
            .algorithms
            .iter()
            .map(|alg| {
                let seeds = runs
                    .iter()
                    .filter(|r| r.job.reward == spec && r.job.algorithm == *alg)
                    .map(|r| r.performance())
                    .collect();
                (alg.to_string(), seeds)
            })
            .filter(|(_, seeds): &(String, Vec<Vec<f64>>)| !seeds.is_empty())
            .collect();
        if groups.is_empty() {
            warnings.push(format!("no runs for {label}"));
            continue;
        }
        let curves = learning_curves(&groups, cfg.selection.alpha)?;
        let path = run_dir.join("plots").join(format!("{label}.svg"));
        write_file(&path, &render_svg(&format!("{label} evaluation performance"), &curves, &hash))?;
        plots.push(path);
        for ((alg, seeds), curve) in groups.iter().zip(&curves.curves) {
            let last: Vec<f64> = seeds.iter().filter_map(|s| s.last().copied()).collect();
            curve_rows.push(vec![
                label.clone(),
                alg.clone(),
                seeds.len().to_string(),
                curve.points.first().map_or("-".into(), |p| format!("{:.4}", p.mean)),
                format!("{:.4}", mean(&last)),
            ]);
        }
    }
    summary.push_str("\nlearning curves\n");
    summary.push_str(&text_table(&["reward", "algorithm", "seeds", "epoch0", "final"], &curve_rows));

    let reports_path = run_dir.join(REPORTS_FILE);
    if reports_path.is_file() {
        let file: ReportsFile = serde_json::from_str(&read_file(&reports_path)?)
            .map_err(|e| PipelineError::Format { path: reports_path.clone(), message: e.to_string() })?;
        summary.push_str(&score_tables(&file));
    } else {
        warnings.push(format!("no {REPORTS_FILE}; run validate for score tables"));
    }
    for w in &warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    write_file(&run_dir.join("summary.txt"), &summary)?;
    Ok(ReportSummary { run_dir: run_dir.to_path_buf(), plots, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methodology::{AlgorithmCurve, CurvePoint};

    #[test]
    fn svg_has_band_line_and_dots() {
        let pts = |m: f64| (0..3).map(|e| CurvePoint { epoch: e, mean: m, p10: m - 0.1, p90: m + 0.1 }).collect();
        let curves = LearningCurves {
            curves: vec![
                AlgorithmCurve { algorithm: "dqn".into(), points: pts(0.5) },
                AlgorithmCurve { algorithm: "ppo".into(), points: pts(0.2) },
            ],
            compared: Some(("dqn".into(), "ppo".into())),
            significant: vec![false, true, true],
        };
        let svg = render_svg("RFn1", &curves, "abc");
        assert!(svg.contains("<!-- config_hash=abc -->"));
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 2);
        assert_eq!(svg, render_svg("RFn1", &curves, "abc"));
    }
}

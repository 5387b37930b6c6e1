//! Per-task result tables: mean and standard error per model for every
//! metric, Tukey-Kramer markers, dummy-coded OLS and the adaptation series.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use interlace_core::dims::{Criteria, Perspective, Target};
use interlace_core::survey::SurveyBank;
use interlace_core::{InteractionTrace, TaskKind};
use serde::{Deserialize, Serialize};

use crate::metrics::{compute_trace_metrics, rolling_average, AnalysisConfig, Method, MetricBank, MetricUnit, TraceMetrics};
use crate::stats::{group_summary, ols_dummy, tukey_kramer, GroupSample, OlsResult, TukeyResult, BONFERRONI_LEVEL};

pub const UNAVAILABLE: &str = "unavailable";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub analysis: AnalysisConfig,
    pub alpha: f64,
    pub correction_level: f64,
    /// Reference group for OLS; defaults to the first model in sorted order.
    pub reference_model: Option<String>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            analysis: AnalysisConfig::default(),
            alpha: crate::stats::DEFAULT_ALPHA,
            correction_level: BONFERRONI_LEVEL,
            reference_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model_id: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub se: Option<f64>,
    /// Labels of the models this one differs from significantly.
    pub markers: Vec<String>,
}

impl Cell {
    pub fn render(&self) -> String {
        let Some(mean) = self.mean else { return UNAVAILABLE.to_string() };
        let mut s = match self.se {
            Some(se) => format!("{mean:.2} ± {se:.2}"),
            None => format!("{mean:.2} ± n/a"),
        };
        if !self.markers.is_empty() {
            let _ = write!(s, " [{}]", self.markers.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub key: String,
    pub name: String,
    pub target: Target,
    pub perspective: Perspective,
    pub criteria: Criteria,
    pub unit: MetricUnit,
    pub method: Method,
    pub headline: bool,
    pub cells: Vec<Cell>,
    pub tukey: Option<TukeyResult>,
    pub ols: Option<OlsResult>,
    /// Why statistics are missing, if they are.
    pub note: Option<String>,
}

impl MetricRow {
    pub fn available(&self) -> bool {
        self.cells.iter().any(|c| c.mean.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesTable {
    pub name: String,
    /// Per model, the mean at each unit index and its rolling average.
    pub models: BTreeMap<String, SeriesLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLine {
    pub mean: Vec<Option<f64>>,
    pub rolling: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskKind,
    pub models: Vec<String>,
    /// Model id to the short label used in significance markers.
    pub labels: BTreeMap<String, String>,
    pub traces: usize,
    pub excluded: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub series: Vec<SeriesTable>,
    /// Per metric, per trace: value minus its model's mean.
    pub residuals: Vec<Residual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub metric: String,
    pub model_id: String,
    pub session_id: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: ReportConfig,
    pub tasks: Vec<TaskReport>,
}

fn label(i: usize) -> String {
    let mut n = i;
    let mut s = String::new();
    loop {
        s.insert(0, (b'a' + (n % 26) as u8) as char);
        if n < 26 {
            break;
        }
        n = n / 26 - 1;
    }
    s
}

fn series_mean(lines: &[&Vec<Option<f64>>]) -> Vec<Option<f64>> {
    let len = lines.iter().map(|l| l.len()).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let pts: Vec<f64> = lines.iter().filter_map(|l| l.get(i).copied().flatten()).collect();
            (!pts.is_empty()).then(|| pts.iter().sum::<f64>() / pts.len() as f64)
        })
        .collect()
}

fn task_report(
    task: TaskKind,
    metrics: &[TraceMetrics],
    bank: &MetricBank,
    config: &ReportConfig,
) -> TaskReport {
    let included: Vec<&TraceMetrics> = metrics.iter().filter(|m| !m.excluded).collect();
    let excluded: Vec<String> = metrics.iter().filter(|m| m.excluded).map(|m| m.session_id.clone()).collect();
    let models: Vec<String> = metrics.iter().map(|m| m.model_id.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let labels: BTreeMap<String, String> = models.iter().enumerate().map(|(i, m)| (m.clone(), label(i))).collect();

    let mut rows = Vec::new();
    let mut residuals = Vec::new();
    for spec in bank.for_task(task) {
        let samples: Vec<GroupSample> = models
            .iter()
            .map(|model| {
                let values = included
                    .iter()
                    .filter(|m| &m.model_id == model)
                    .filter_map(|m| m.value(&spec.key))
                    .collect();
                GroupSample::new(model.clone(), values)
            })
            .collect();
        let populated: Vec<GroupSample> = samples.iter().filter(|g| !g.values.is_empty()).cloned().collect();

        let mut note = None;
        let tukey = if populated.len() >= 2 {
            tukey_kramer(&populated, config.alpha).map_err(|e| note = Some(e.to_string())).ok()
        } else {
            note = Some("fewer than two groups with data".to_string());
            None
        };
        let ols = if populated.len() >= 2 {
            let reference = config
                .reference_model
                .clone()
                .filter(|r| populated.iter().any(|g| &g.group_id == r))
                .unwrap_or_else(|| populated[0].group_id.clone());
            ols_dummy(&populated, &reference, config.correction_level).ok()
        } else {
            None
        };

        let cells = samples
            .iter()
            .map(|g| {
                let summary = group_summary(&g.values).ok();
                let markers = tukey
                    .as_ref()
                    .map(|t| {
                        t.pairs
                            .iter()
                            .filter(|p| p.significant)
                            .filter_map(|p| {
                                if p.group_a == g.group_id {
                                    Some(labels[&p.group_b].clone())
                                } else if p.group_b == g.group_id {
                                    Some(labels[&p.group_a].clone())
                                } else {
                                    None
                                }
                            })
                            .collect()
                    })
                    .unwrap_or_default();
                Cell {
                    model_id: g.group_id.clone(),
                    n: g.values.len(),
                    mean: summary.map(|s| s.mean),
                    se: summary.and_then(|s| s.se),
                    markers,
                }
            })
            .collect::<Vec<_>>();

        for g in &samples {
            let Some(mean) = group_summary(&g.values).ok().map(|s| s.mean) else { continue };
            for m in included.iter().filter(|m| m.model_id == g.group_id) {
                if let Some(v) = m.value(&spec.key) {
                    residuals.push(Residual {
                        metric: spec.key.clone(),
                        model_id: g.group_id.clone(),
                        session_id: m.session_id.clone(),
                        residual: v - mean,
                    });
                }
            }
        }

        rows.push(MetricRow {
            key: spec.key.clone(),
            name: spec.name.clone(),
            target: spec.target,
            perspective: spec.perspective,
            criteria: spec.criteria,
            unit: spec.unit,
            method: spec.method,
            headline: spec.headline,
            cells,
            tukey,
            ols,
            note,
        });
    }

    let names: BTreeSet<&String> =
        included.iter().flat_map(|m| m.series.keys()).filter(|k| !k.ends_with("_rolling")).collect();
    let series = names
        .into_iter()
        .map(|name| {
            let models = models
                .iter()
                .filter_map(|model| {
                    let lines: Vec<&Vec<Option<f64>>> = included
                        .iter()
                        .filter(|m| &m.model_id == model)
                        .filter_map(|m| m.series.get(name))
                        .collect();
                    if lines.is_empty() {
                        return None;
                    }
                    let mean = series_mean(&lines);
                    let dense: Vec<f64> = mean.iter().flatten().copied().collect();
                    let rolling = rolling_average(&dense, config.analysis.rolling_window.max(1));
                    Some((model.clone(), SeriesLine { mean, rolling }))
                })
                .collect();
            SeriesTable { name: name.clone(), models }
        })
        .collect();

    TaskReport { task, models, labels, traces: metrics.len(), excluded, rows, series, residuals }
}

/// Builds the report for every task. The result depends only on the set of
/// traces, not on their order.
pub fn build_report(
    traces: &[InteractionTrace],
    surveys: &SurveyBank,
    bank: &MetricBank,
    config: &ReportConfig,
) -> Report {
    let mut metrics: Vec<TraceMetrics> =
        traces.iter().map(|t| compute_trace_metrics(t, surveys, bank, &config.analysis)).collect();
    metrics.sort_by(|a, b| a.session_id.cmp(&b.session_id));
    let tasks = TaskKind::ALL
        .iter()
        .map(|&task| {
            let mine: Vec<TraceMetrics> = metrics.iter().filter(|m| m.task == task).cloned().collect();
            task_report(task, &mine, bank, config)
        })
        .collect();
    Report { config: config.clone(), tasks }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.6}"))
}

pub fn render_table(t: &TaskReport) -> String {
    let mut out = String::from("metric\tname\ttarget\tperspective\tcriteria\tunit\tmethod");
    for m in &t.models {
        let _ = write!(out, "\t{} ({})", m, t.labels[m]);
    }
    out.push('\n');
    for row in &t.rows {
        let _ = write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.key,
            row.name,
            json_name(&row.target),
            json_name(&row.perspective),
            json_name(&row.criteria),
            json_name(&row.unit),
            json_name(&row.method)
        );
        for c in &row.cells {
            let _ = write!(out, "\t{}", c.render());
        }
        out.push('\n');
    }
    out
}

pub fn render_ols(t: &TaskReport) -> String {
    let mut out = String::from("metric\tmodel\treference\tfitted\tfitted_se\tbeta\tbeta_se\tt\tp\tsignificant\n");
    for row in &t.rows {
        let Some(ols) = &row.ols else { continue };
        for g in &ols.groups {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{:.6}\t{}\t{}\t{}\t{}\t{}\t{}",
                row.key,
                g.group_id,
                ols.reference,
                g.fitted,
                fmt_opt(g.fitted_se),
                fmt_opt(g.beta),
                fmt_opt(g.beta_se),
                fmt_opt(g.t),
                fmt_opt(g.p_value),
                if g.significant_vs_reference { "*" } else { "" }
            );
        }
    }
    out
}

fn render_series(s: &SeriesTable) -> String {
    let mut out = String::from("model\tindex\tmean\trolling\n");
    for (model, line) in &s.models {
        let mut dense = line.rolling.iter();
        for (i, m) in line.mean.iter().enumerate() {
            let r = m.and_then(|_| dense.next().copied());
            let _ = writeln!(out, "{model}\t{i}\t{}\t{}", fmt_opt(*m), fmt_opt(r));
        }
    }
    out
}

fn render_residuals(t: &TaskReport) -> String {
    let mut out = String::from("metric\tmodel\tsession\tresidual\n");
    for r in &t.residuals {
        let _ = writeln!(out, "{}\t{}\t{}\t{:.6}", r.metric, r.model_id, r.session_id, r.residual);
    }
    out
}

fn json_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

/// Writes `report.json` plus per-task tables, OLS tables, residuals and
/// series files under `out_dir`.
pub fn write_report(report: &Report, out_dir: &Path) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(out_dir.join("report.json"), json + "\n")?;
    for t in &report.tasks {
        let name = t.task.as_str();
        fs::write(out_dir.join(format!("{name}.tsv")), render_table(t))?;
        fs::write(out_dir.join(format!("{name}_ols.tsv")), render_ols(t))?;
        fs::write(out_dir.join(format!("{name}_residuals.tsv")), render_residuals(t))?;
        if !t.series.is_empty() {
            let dir = out_dir.join("series").join(name);
            fs::create_dir_all(&dir)?;
            for s in &t.series {
                fs::write(dir.join(format!("{}.tsv", s.name)), render_series(s))?;
            }
        }
    }
    Ok(())
}

//! Tables and figures from a set of evaluation reports.
//!
//! ```text
//! tables/summary.{csv,md}             task x model macro-F1 (native layer), baseline last
//! tables/subset.csv                   macro-F1 over a language subset and over the rest
//! heatmaps/<model>_per_language.*     % accuracy, task x language
//! layers/<model>_per_layer.csv        macro-F1 per task and layer
//! layers/<model>_<task>.svg           layer curve
//! layers/<model>_mixing.csv           mixing weights, lambda and K(s) per task
//! layers/<model>_<task>_mixing.svg    mixing-weight bars
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{EvalReport, LayerSource};
use crate::probe::BASELINE_MODEL_ID;

use super::svg;

#[derive(Debug, Clone, PartialEq)]
pub struct ReportGrouping {
    pub baseline_model: String,
    /// Languages forming the subset of the breakdown table, if one is wanted.
    pub language_subset: Option<BTreeSet<String>>,
}

impl Default for ReportGrouping {
    fn default() -> Self {
        ReportGrouping {
            baseline_model: BASELINE_MODEL_ID.into(),
            language_subset: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub tasks: Vec<String>,
    /// Model columns; the baseline, when present, is last.
    pub models: Vec<String>,
    pub cells: BTreeMap<(String, String), f64>,
}

impl SummaryTable {
    pub fn cell(&self, task: &str, model: &str) -> Option<f64> {
        self.cells.get(&(task.to_string(), model.to_string())).copied()
    }

    fn rows(&self) -> impl Iterator<Item = Vec<String>> + '_ {
        self.tasks.iter().map(move |t| {
            let mut row = vec![t.clone()];
            row.extend(self.models.iter().map(|m| self.cell(t, m).map(|v| v.to_string()).unwrap_or_default()));
            row
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("task,{}\n", self.models.join(","));
        for row in self.rows() {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| task | {} |\n", self.models.join(" | "));
        out.push_str(&format!("|{}\n", "---|".repeat(self.models.len() + 1)));
        for row in self.rows() {
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledReport {
    pub summary: SummaryTable,
    pub files: Vec<PathBuf>,
}

fn first_appearance<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    items.filter(|s| seen.insert(*s)).map(str::to_string).collect()
}

fn check_consistency(reports: &[EvalReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(Error::EmptyResult("no reports to assemble".into()));
    }
    let mut labels: BTreeMap<&str, &[String]> = BTreeMap::new();
    let mut keys = BTreeSet::new();
    for r in reports {
        let known = *labels.entry(&r.task_id).or_insert(&r.class_labels);
        if known != r.class_labels.as_slice() {
            return Err(Error::InconsistentReports(format!(
                "task {} appears with class labels {:?} and {:?}",
                r.task_id, known, r.class_labels
            )));
        }
        if !keys.insert((&r.task_id, &r.model_id, r.layer_source)) {
            return Err(Error::InconsistentReports(format!(
                "duplicate report for task {}, model {}, {}",
                r.task_id, r.model_id, r.layer_source
            )));
        }
    }
    Ok(())
}

/// Native-layer macro-F1 per task and model, copied from the reports as is.
pub fn summary_table(reports: &[EvalReport], baseline_model: &str) -> Result<SummaryTable> {
    check_consistency(reports)?;
    let native: Vec<&EvalReport> = reports.iter().filter(|r| r.layer_source == LayerSource::Native).collect();
    let tasks = first_appearance(reports.iter().map(|r| r.task_id.as_str()));
    let mut models = first_appearance(
        native.iter().map(|r| r.model_id.as_str()).filter(|m| *m != baseline_model),
    );
    if native.iter().any(|r| r.model_id == baseline_model) {
        models.push(baseline_model.to_string());
    }
    let cells = native
        .iter()
        .map(|r| ((r.task_id.clone(), r.model_id.clone()), r.macro_f1))
        .collect();
    Ok(SummaryTable { tasks, models, cells })
}

struct Writer {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn put(&mut self, rel: &str, contents: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(path);
        Ok(())
    }
}

fn per_language(w: &mut Writer, model: &str, reports: &[&EvalReport]) -> Result<()> {
    let tasks = first_appearance(reports.iter().map(|r| r.task_id.as_str()));
    let langs = first_appearance(reports.iter().flat_map(|r| r.per_language_accuracy.keys().map(String::as_str)));
    let grid: Vec<Vec<Option<f64>>> = tasks
        .iter()
        .map(|t| {
            let r = reports.iter().find(|r| &r.task_id == t).expect("task from reports");
            langs.iter().map(|l| r.per_language_accuracy.get(l).map(|a| 100.0 * a)).collect()
        })
        .collect();
    let mut csv = format!("task,{}\n", langs.join(","));
    for (t, row) in tasks.iter().zip(&grid) {
        let cells: Vec<String> = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
        csv.push_str(&format!("{t},{}\n", cells.join(",")));
    }
    w.put(&format!("heatmaps/{model}_per_language.csv"), &csv)?;
    w.put(
        &format!("heatmaps/{model}_per_language.svg"),
        &svg::heatmap(&format!("{model}: % accuracy per language"), &tasks, &langs, &grid),
    )
}

fn per_layer(w: &mut Writer, model: &str, reports: &[&EvalReport], baselines: &BTreeMap<&str, f64>) -> Result<()> {
    let mut by_task: BTreeMap<&str, Vec<(usize, f64)>> = BTreeMap::new();
    let order = first_appearance(reports.iter().map(|r| r.task_id.as_str()));
    for r in reports {
        if let LayerSource::Layer(l) = r.layer_source {
            by_task.entry(&r.task_id).or_default().push((l, r.macro_f1));
        }
    }
    if by_task.is_empty() {
        return Ok(());
    }
    let mut csv = String::from("task,layer,macro_f1\n");
    for task in &order {
        let Some(points) = by_task.get_mut(task.as_str()) else {
            continue;
        };
        points.sort_by_key(|p| p.0);
        for (l, f1) in points.iter() {
            csv.push_str(&format!("{task},{l},{f1}\n"));
        }
        let mut series = vec![(model.to_string(), points.iter().map(|&(l, f)| (l as f64, f)).collect::<Vec<_>>())];
        if let Some(&b) = baselines.get(task.as_str()) {
            let (lo, hi) = (points[0].0 as f64, points[points.len() - 1].0 as f64);
            series.push(("baseline".to_string(), vec![(lo, b), (hi, b)]));
        }
        w.put(
            &format!("layers/{model}_{task}.svg"),
            &svg::line_chart(&format!("{model} {task}"), "layer", "macro-F1", (0.0, 1.0), &series),
        )?;
    }
    w.put(&format!("layers/{model}_per_layer.csv"), &csv)
}

fn mixing(w: &mut Writer, model: &str, reports: &[&EvalReport]) -> Result<()> {
    let mixed: Vec<&&EvalReport> = reports.iter().filter(|r| r.mixing.is_some()).collect();
    if mixed.is_empty() {
        return Ok(());
    }
    let mut csv = String::from("task,lambda,kl,weights\n");
    for r in mixed {
        let m = r.mixing.as_ref().expect("filtered");
        let weights: Vec<String> = m.weights.iter().map(f64::to_string).collect();
        csv.push_str(&format!("{},{},{},{}\n", r.task_id, m.lambda, m.kl, weights.join(";")));
        let labels: Vec<String> = (1..=m.weights.len()).map(|l| l.to_string()).collect();
        w.put(
            &format!("layers/{model}_{}_mixing.svg", r.task_id),
            &svg::bar_chart(
                &format!("{model} {} mixing weights", r.task_id),
                &format!("K(s) = {:.4}   lambda = {:.3}", m.kl, m.lambda),
                &labels,
                &m.weights,
            ),
        )?;
    }
    w.put(&format!("layers/{model}_mixing.csv"), &csv)
}

fn subset_table(reports: &[EvalReport], subset: &BTreeSet<String>) -> String {
    let mut out = String::from("task,model_id,layer_source,subset_macro_f1,rest_macro_f1\n");
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        let inside = r.macro_f1_where(|l| subset.contains(l));
        let outside = r.macro_f1_where(|l| !subset.contains(l));
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.task_id,
            r.model_id,
            r.layer_source,
            fmt(inside),
            fmt(outside)
        ));
    }
    out
}

/// Writes every table and figure under `out_dir`.
pub fn assemble_reports(reports: &[EvalReport], grouping: &ReportGrouping, out_dir: &Path) -> Result<AssembledReport> {
    let summary = summary_table(reports, &grouping.baseline_model)?;
    let mut w = Writer { root: out_dir.to_path_buf(), files: Vec::new() };
    w.put("tables/summary.csv", &summary.to_csv())?;
    w.put("tables/summary.md", &summary.to_markdown())?;
    if let Some(subset) = &grouping.language_subset {
        w.put("tables/subset.csv", &subset_table(reports, subset))?;
    }

    let baselines: BTreeMap<&str, f64> = reports
        .iter()
        .filter(|r| r.model_id == grouping.baseline_model)
        .map(|r| (r.task_id.as_str(), r.macro_f1))
        .collect();
    for model in first_appearance(reports.iter().map(|r| r.model_id.as_str())) {
        if model == grouping.baseline_model {
            continue;
        }
        let own: Vec<&EvalReport> = reports.iter().filter(|r| r.model_id == model).collect();
        let native: Vec<&EvalReport> = own.iter().copied().filter(|r| r.layer_source == LayerSource::Native).collect();
        if !native.is_empty() {
            per_language(&mut w, &model, &native)?;
        }
        per_layer(&mut w, &model, &own, &baselines)?;
        mixing(&mut w, &model, &own)?;
    }
    Ok(AssembledReport { summary, files: w.files })
}

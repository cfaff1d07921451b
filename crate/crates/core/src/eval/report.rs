//! Result tables: one row per (task, model), columns Acc / P / R / F1
//! (macro) plus the weighted-F1 alternative, all rounded to two decimals.

use super::CvResult;
use crate::corpus::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tsv" => Some(ReportFormat::Tsv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

const COLUMNS: [&str; 7] = ["task", "model", "acc", "p", "r", "f1", "f1w"];

/// Renders cross-validation results with a stable row order (task, then
/// model name). Rerunning on equal inputs yields byte-identical text.
pub fn render_report(results: &[CvResult], format: ReportFormat) -> String {
    let mut rows: Vec<&CvResult> = results.iter().collect();
    let task_rank = |t: Task| Task::ALL.iter().position(|&x| x == t).unwrap();
    rows.sort_by(|a, b| {
        task_rank(a.task)
            .cmp(&task_rank(b.task))
            .then_with(|| a.model_id.cmp(&b.model_id))
    });

    let cells: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.task.name().to_string(),
                r.model_id.clone(),
                format!("{:.2}", r.mean.accuracy),
                format!("{:.2}", r.mean.macro_precision()),
                format!("{:.2}", r.mean.macro_recall()),
                format!("{:.2}", r.mean.macro_f1),
                format!("{:.2}", r.mean.weighted_f1),
            ]
        })
        .collect();

    match format {
        ReportFormat::Tsv => {
            let mut out = COLUMNS.join("\t");
            out.push('\n');
            for row in &cells {
                out.push_str(&row.join("\t"));
                out.push('\n');
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", COLUMNS.join(" | "));
            out.push_str(&format!("|{}\n", " --- |".repeat(COLUMNS.len())));
            for row in &cells {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
            out
        }
    }
}

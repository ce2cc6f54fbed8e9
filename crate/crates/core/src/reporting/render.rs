use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ChartKind, ChartSpec, ReportDraft};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSection {
    pub heading: String,
    pub table_refs: Vec<String>,
    pub chart_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestChart {
    pub chart_id: String,
    pub kind: ChartKind,
    pub path: String,
}

/// Machine-readable index of a rendered report. Paths are relative to the
/// report directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub title: String,
    pub report: String,
    pub sections: Vec<ManifestSection>,
    pub charts: Vec<ManifestChart>,
    pub sources: Vec<String>,
    pub word_count: usize,
    pub numeric_claims: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedReport {
    pub report: PathBuf,
    pub manifest: PathBuf,
    pub charts: Vec<PathBuf>,
}

fn chart_path(id: &str) -> String {
    format!("charts/{id}.json")
}

pub fn to_markdown(draft: &ReportDraft, charts: &[ChartSpec]) -> String {
    let mut md = format!("# {}\n", draft.title);
    for s in &draft.sections {
        md.push_str(&format!("\n## {}\n\n{}\n", s.heading, s.body.trim_end()));
        for id in &s.chart_refs {
            let caption = charts
                .iter()
                .find(|c| &c.chart_id == id)
                .map(|c| c.caption.as_str())
                .unwrap_or(id.as_str());
            md.push_str(&format!("\n![{caption}]({})\n", chart_path(id)));
        }
    }
    if !draft.sources.is_empty() {
        md.push_str("\n## Sources\n\n");
        for src in &draft.sources {
            md.push_str(&format!("- {src}\n"));
        }
    }
    md
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

/// Writes `report.md`, `charts/<chart_id>.json` and `manifest.json` under
/// `dir`. Output bytes depend only on the draft and charts.
pub fn render_report(dir: &Path, draft: &ReportDraft, charts: &[ChartSpec]) -> io::Result<RenderedReport> {
    let chart_dir = dir.join("charts");
    fs::create_dir_all(&chart_dir)?;
    let mut chart_files = Vec::new();
    for c in charts {
        let path = dir.join(chart_path(&c.chart_id));
        write_json(&path, c)?;
        chart_files.push(path);
    }
    let report = dir.join("report.md");
    fs::write(&report, to_markdown(draft, charts))?;
    let manifest = ReportManifest {
        title: draft.title.clone(),
        report: "report.md".into(),
        sections: draft
            .sections
            .iter()
            .map(|s| ManifestSection {
                heading: s.heading.clone(),
                table_refs: s.table_refs.clone(),
                chart_refs: s.chart_refs.clone(),
            })
            .collect(),
        charts: charts
            .iter()
            .map(|c| ManifestChart { chart_id: c.chart_id.clone(), kind: c.kind, path: chart_path(&c.chart_id) })
            .collect(),
        sources: draft.sources.clone(),
        word_count: draft.word_count(),
        numeric_claims: draft.numeric_claims.len(),
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;
    Ok(RenderedReport { report, manifest: manifest_path, charts: chart_files })
}

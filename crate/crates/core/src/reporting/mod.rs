//! Report writer, critic and chart emitter. Everything here reads a
//! [`ReportMaterials`] view built from shared references; there is no path
//! from this module back to the valuation inputs.

mod charts;
mod render;
mod verify;

pub use charts::{
    comparables_chart, make_charts, projection_chart, sensitivity_chart, ChartAxis, ChartKind,
    ChartSpec, Series,
};
pub use render::{render_report, ManifestChart, ManifestSection, RenderedReport, ReportManifest};
pub use verify::{extract_claims, verify_numbers, NumericClaim, Whitelist, PROSE_TOLERANCE};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::agents::{ComparablesTable, NewsDigest, NewsThresholds, RoundSummary};
use crate::error::LlmError;
use crate::llm::structured::{CritiqueDoc, DraftDoc, SectionDoc};
use crate::llm::{context, AgentRole, Attachment, Gateway, MAX_REPROMPTS};
use crate::store::Decision;
use crate::valuation::{SensitivityTable, ValuationInputs, ValuationResult, HORIZON};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueCategory {
    Length,
    UnverifiedNumber,
    MissingSource,
    DanglingReference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub category: IssueCategory,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueResult {
    pub issues: Vec<Issue>,
    pub verdict: Verdict,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CritiqueResult {
    pub fn from_issues(issues: Vec<Issue>, warnings: Vec<String>) -> Self {
        let verdict = if issues.is_empty() { Verdict::Pass } else { Verdict::Fail };
        Self { issues, verdict, warnings }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportBounds {
    pub min_words: usize,
    pub max_words: usize,
    pub max_revisions: u32,
}

impl Default for ReportBounds {
    fn default() -> Self {
        Self { min_words: 900, max_words: 2500, max_revisions: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub body: String,
    #[serde(default)]
    pub table_refs: Vec<String>,
    #[serde(default)]
    pub chart_refs: Vec<String>,
    /// Built from tables rather than written; excluded from word counts
    /// and claim extraction since every figure comes straight from a table.
    #[serde(default)]
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDraft {
    pub title: String,
    pub sections: Vec<Section>,
    pub numeric_claims: Vec<NumericClaim>,
    pub sources: Vec<String>,
}

impl ReportDraft {
    pub fn narrative(&self) -> impl Iterator<Item = &Section> {
        self.sections.iter().filter(|s| !s.generated)
    }

    /// Words of written prose.
    pub fn word_count(&self) -> usize {
        self.narrative().map(|s| s.body.split_whitespace().count()).sum()
    }

    fn refresh_claims(&mut self) {
        self.numeric_claims = self
            .sections
            .iter()
            .filter(|s| !s.generated)
            .flat_map(|s| extract_claims(&s.body, &s.heading))
            .collect();
    }
}

/// Read-only view of a finished run handed to the writer and critic.
#[derive(Debug, Clone)]
pub struct ReportMaterials<'a> {
    pub inputs: &'a ValuationInputs,
    pub result: &'a ValuationResult,
    pub decision: Decision,
    pub sensitivity: Option<&'a SensitivityTable>,
    pub comparables: Option<&'a ComparablesTable>,
    pub news: Option<&'a NewsDigest>,
    pub news_thresholds: NewsThresholds,
    pub history: &'a [RoundSummary],
    pub sources: Vec<String>,
    pub extra_numbers: Vec<f64>,
}

impl ReportMaterials<'_> {
    /// Identifiers sections may cite.
    pub fn table_ids(&self) -> Vec<&'static str> {
        let mut ids = vec!["drivers", "valuation", "cashflows"];
        if self.sensitivity.is_some() {
            ids.push("sensitivity");
        }
        if self.comparables.is_some_and(|c| !c.peers.is_empty()) {
            ids.push("comparables");
        }
        if self.news.is_some() {
            ids.push("news");
        }
        ids
    }

    pub fn charts(&self) -> Vec<ChartSpec> {
        make_charts(
            &self.result.table,
            self.sensitivity,
            self.comparables,
            &self.inputs.identity.listing_currency,
        )
    }

    fn state_attachments(&self) -> Vec<Attachment> {
        let mut out = vec![
            Attachment::json("inputs", self.inputs),
            Attachment::json("valuation", self.result),
            Attachment::json("history", &self.history),
        ];
        if let Some(t) = self.sensitivity {
            out.push(Attachment::json("sensitivity", t));
        }
        if let Some(c) = self.comparables {
            out.push(Attachment::json("comparables", c));
        }
        if let Some(n) = self.news {
            out.push(Attachment::json("news", n));
        }
        out
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}%", v * 100.0)
}

fn drivers_section(inputs: &ValuationInputs) -> Section {
    let d = &inputs.drivers;
    let mut body = String::from(
        "| Year | Revenue growth | Operating margin | Sales to capital | Cost of capital |\n|---|---|---|---|---|\n",
    );
    for t in 0..HORIZON {
        body.push_str(&format!(
            "| {} | {} | {} | {:.2} | {} |\n",
            t + 1,
            pct(d.revenue_growth[t]),
            pct(d.operating_margin[t]),
            d.sales_to_capital[t],
            pct(d.cost_of_capital[t])
        ));
    }
    body.push_str(&format!(
        "| Terminal | {} | {} | | {} |",
        pct(d.terminal_growth),
        pct(d.terminal_margin),
        pct(d.terminal_cost_of_capital)
    ));
    Section {
        heading: "Value drivers".into(),
        body,
        table_refs: vec!["drivers".into()],
        chart_refs: vec![],
        generated: true,
    }
}

fn valuation_section(m: &ReportMaterials<'_>) -> Section {
    let r = m.result;
    let cur = &m.inputs.identity.listing_currency;
    let multiple = r
        .terminal_ev_to_ebitda
        .map(|x| format!("{x:.2}x"))
        .unwrap_or_else(|| "not meaningful".into());
    let body = [
        format!("- Enterprise value: {:.2} {cur}", r.enterprise_value),
        format!("- Equity value: {:.2} {cur}", r.equity_value),
        format!("- Value per share: {:.2} {cur}", r.value_per_share),
        format!("- Market price: {:.2} {cur}", m.inputs.financials.market_price),
        format!("- Present value of terminal value: {:.2} {cur}", r.pv_terminal),
        format!("- Terminal EV/EBITDA: {multiple}"),
        format!("- Recommendation: {}", m.decision),
    ]
    .join("\n");
    Section {
        heading: "Valuation summary".into(),
        body,
        table_refs: vec!["valuation".into(), "cashflows".into()],
        chart_refs: vec!["projection".into()],
        generated: true,
    }
}

fn sensitivity_section(t: Option<&SensitivityTable>) -> Section {
    let Some(t) = t else {
        return Section {
            heading: "Sensitivity".into(),
            body: "No sensitivity table was produced in this run.".into(),
            table_refs: vec![],
            chart_refs: vec![],
            generated: true,
        };
    };
    let mut body = format!("Value per share; rows: {}, columns: {}.\n\n", t.row_axis.driver, t.col_axis.driver);
    body.push_str("| |");
    for c in &t.col_axis.values {
        body.push_str(&format!(" {c:.4} |"));
    }
    body.push_str("\n|---|");
    body.push_str(&"---|".repeat(t.col_axis.values.len()));
    for (rv, row) in t.row_axis.values.iter().zip(&t.cells) {
        body.push_str(&format!("\n| {rv:.4} |"));
        for cell in row {
            body.push_str(&format!(" {cell:.2} |"));
        }
    }
    Section {
        heading: "Sensitivity".into(),
        body,
        table_refs: vec!["sensitivity".into()],
        chart_refs: vec!["sensitivity".into()],
        generated: true,
    }
}

fn comparables_section(c: Option<&ComparablesTable>) -> Section {
    match c.filter(|c| !c.peers.is_empty()) {
        None => Section {
            heading: "Comparables".into(),
            body: "No comparable companies were available; the comparables chart is omitted.".into(),
            table_refs: vec![],
            chart_refs: vec![],
            generated: true,
        },
        Some(c) => {
            let own = c.ev_to_ebitda.map(|x| format!("{x:.2}x")).unwrap_or_else(|| "not meaningful".into());
            let mut body = format!(
                "| Company | EV/EBITDA | Revenue growth | Operating margin |\n|---|---|---|---|\n| {} (terminal) | {own} | | |",
                c.ticker
            );
            for p in &c.peers {
                body.push_str(&format!(
                    "\n| {} | {:.2}x | {} | {} |",
                    p.ticker,
                    p.ev_to_ebitda,
                    pct(p.revenue_growth),
                    pct(p.operating_margin)
                ));
            }
            Section {
                heading: "Comparables".into(),
                body,
                table_refs: vec!["comparables".into()],
                chart_refs: vec!["comparables".into()],
                generated: true,
            }
        }
    }
}

fn news_section(m: &ReportMaterials<'_>) -> Option<Section> {
    let digest = m.news?;
    let relevant: Vec<_> = digest.relevant_items(&m.news_thresholds).collect();
    if relevant.is_empty() {
        return None;
    }
    let mut lines = vec![digest.summary.clone(), String::new()];
    for t in relevant {
        lines.push(format!("- {} ({}, {})", t.item.headline, t.item.source_name, t.item.url));
        for img in &t.item.image_refs {
            lines.push(format!("  - ![{}]({})", img.caption, img.url));
        }
    }
    Some(Section {
        heading: "News".into(),
        body: lines.join("\n"),
        table_refs: vec!["news".into()],
        chart_refs: vec![],
        generated: true,
    })
}

fn generated_sections(m: &ReportMaterials<'_>) -> Vec<Section> {
    let mut out = vec![drivers_section(m.inputs), valuation_section(m), sensitivity_section(m.sensitivity)];
    out.push(comparables_section(m.comparables));
    out.extend(news_section(m));
    out
}

fn assemble(doc: DraftDoc, m: &ReportMaterials<'_>) -> ReportDraft {
    let mut sections: Vec<Section> = doc
        .sections
        .into_iter()
        .map(|s: SectionDoc| Section {
            heading: s.heading,
            body: s.body,
            table_refs: s.table_refs,
            chart_refs: s.chart_refs,
            generated: false,
        })
        .collect();
    sections.extend(generated_sections(m));
    let mut seen = BTreeSet::new();
    let sources = doc
        .sources
        .into_iter()
        .chain(m.sources.iter().cloned())
        .filter(|s| !s.trim().is_empty() && seen.insert(s.clone()))
        .collect();
    let mut draft = ReportDraft { title: doc.title, sections, numeric_claims: vec![], sources };
    draft.refresh_claims();
    draft
}

fn narrative_doc(draft: &ReportDraft) -> DraftDoc {
    DraftDoc {
        title: draft.title.clone(),
        sections: draft
            .narrative()
            .map(|s| SectionDoc {
                heading: s.heading.clone(),
                body: s.body.clone(),
                table_refs: s.table_refs.clone(),
                chart_refs: s.chart_refs.clone(),
            })
            .collect(),
        sources: draft.sources.clone(),
    }
}

/// Writer call plus the table-driven sections.
pub fn compose_report(
    gateway: &Gateway,
    m: &ReportMaterials<'_>,
    bounds: &ReportBounds,
) -> Result<ReportDraft, LlmError> {
    let charts: Vec<String> = m.charts().into_iter().map(|c| c.chart_id).collect();
    let artifacts = format!("tables [{}], charts [{}]", m.table_ids().join(", "), charts.join(", "));
    let vars = context([
        ("company_name", m.inputs.identity.name.clone()),
        ("ticker", m.inputs.identity.ticker.clone()),
        ("value_per_share", format!("{:.2}", m.result.value_per_share)),
        ("market_price", format!("{:.2}", m.inputs.financials.market_price)),
        ("decision", m.decision.to_string()),
        ("artifacts", artifacts),
        ("min_words", bounds.min_words.to_string()),
        ("max_words", bounds.max_words.to_string()),
    ]);
    let env = gateway.render(AgentRole::Writer, "report_writer", &vars, m.state_attachments())?;
    let answer = gateway.ask::<DraftDoc>(AgentRole::Writer, &env, MAX_REPROMPTS)?;
    Ok(assemble(answer.value, m))
}

/// Checks that need no model: number traceability, length, sources and
/// references.
pub fn deterministic_issues(draft: &ReportDraft, m: &ReportMaterials<'_>, bounds: &ReportBounds) -> Vec<Issue> {
    let mut issues = verify_numbers(draft, &Whitelist::from_materials(m));
    let words = draft.word_count();
    if words < bounds.min_words || words > bounds.max_words {
        issues.push(Issue {
            category: IssueCategory::Length,
            detail: format!("{words} words, expected {}-{}", bounds.min_words, bounds.max_words),
        });
    }
    if draft.sources.is_empty() {
        issues.push(Issue { category: IssueCategory::MissingSource, detail: "no sources listed".into() });
    }
    let tables = m.table_ids();
    let charts: Vec<String> = m.charts().into_iter().map(|c| c.chart_id).collect();
    for s in &draft.sections {
        for r in s.table_refs.iter().filter(|r| !tables.contains(&r.as_str())) {
            issues.push(Issue {
                category: IssueCategory::DanglingReference,
                detail: format!("section \"{}\" cites unknown table `{r}`", s.heading),
            });
        }
        for r in s.chart_refs.iter().filter(|r| !charts.contains(r)) {
            issues.push(Issue {
                category: IssueCategory::DanglingReference,
                detail: format!("section \"{}\" cites unknown chart `{r}`", s.heading),
            });
        }
    }
    issues
}

/// Deterministic issues plus whatever the critic adds. An unusable critic
/// reply leaves the deterministic issues to decide.
pub fn critique(
    gateway: &Gateway,
    draft: &ReportDraft,
    m: &ReportMaterials<'_>,
    bounds: &ReportBounds,
) -> Result<CritiqueResult, LlmError> {
    let mut issues = deterministic_issues(draft, m, bounds);
    let mut warnings = Vec::new();
    let vars = context([
        ("company_name", m.inputs.identity.name.clone()),
        ("min_words", bounds.min_words.to_string()),
        ("max_words", bounds.max_words.to_string()),
    ]);
    let env = gateway.render(AgentRole::Critic, "critic", &vars, vec![Attachment::json("draft", draft)])?;
    match gateway.ask::<CritiqueDoc>(AgentRole::Critic, &env, MAX_REPROMPTS) {
        Ok(answer) => {
            warnings.extend(answer.warnings);
            for doc in answer.value.issues {
                let issue = Issue { category: doc.category, detail: doc.detail };
                if !issues.contains(&issue) {
                    issues.push(issue);
                }
            }
        }
        Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => {
            warnings.push(format!("critic reply unusable, deterministic checks only: {e}"));
        }
        Err(e) => return Err(e),
    }
    Ok(CritiqueResult::from_issues(issues, warnings))
}

/// One writer re-prompt with the critique attached. An unusable reply
/// keeps the previous draft.
pub fn revise(
    gateway: &Gateway,
    draft: &ReportDraft,
    critique: &CritiqueResult,
    m: &ReportMaterials<'_>,
) -> Result<(ReportDraft, Vec<String>), LlmError> {
    let issues = critique
        .issues
        .iter()
        .map(|i| format!("- {}: {}", issue_label(i.category), i.detail))
        .collect::<Vec<_>>()
        .join("\n");
    let vars = context([("company_name", m.inputs.identity.name.clone()), ("issues", issues)]);
    let mut attachments = vec![Attachment::json("draft", &narrative_doc(draft))];
    attachments.extend(m.state_attachments());
    let env = gateway.render(AgentRole::Writer, "report_reviser", &vars, attachments)?;
    match gateway.ask::<DraftDoc>(AgentRole::Writer, &env, MAX_REPROMPTS) {
        Ok(answer) => Ok((assemble(answer.value, m), answer.warnings)),
        Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => {
            Ok((draft.clone(), vec![format!("revision unusable, keeping previous draft: {e}")]))
        }
        Err(e) => Err(e),
    }
}

pub fn issue_label(c: IssueCategory) -> &'static str {
    match c {
        IssueCategory::Length => "length",
        IssueCategory::UnverifiedNumber => "unverified_number",
        IssueCategory::MissingSource => "missing_source",
        IssueCategory::DanglingReference => "dangling_reference",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOutcome {
    pub draft: ReportDraft,
    pub critiques: Vec<CritiqueResult>,
    pub revisions: u32,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

/// Writer, critic and bounded revisions. A draft still failing after the
/// last revision is published with an annex listing the open issues.
pub fn write_report(
    gateway: &Gateway,
    m: &ReportMaterials<'_>,
    bounds: &ReportBounds,
) -> Result<ReportOutcome, LlmError> {
    let mut draft = compose_report(gateway, m, bounds)?;
    let mut warnings = Vec::new();
    let mut critiques = Vec::new();
    let mut revisions = 0;
    loop {
        let c = critique(gateway, &draft, m, bounds)?;
        warnings.extend(c.warnings.iter().cloned());
        let verdict = c.verdict;
        critiques.push(c);
        if verdict == Verdict::Pass {
            return Ok(ReportOutcome { draft, critiques, revisions, verdict, warnings });
        }
        if revisions == bounds.max_revisions {
            break;
        }
        let (next, w) = revise(gateway, &draft, critiques.last().expect("just pushed"), m)?;
        warnings.extend(w);
        draft = next;
        revisions += 1;
    }
    let open = &critiques.last().expect("at least one critique").issues;
    draft.sections.push(Section {
        heading: "Unresolved issues".into(),
        body: open
            .iter()
            .map(|i| format!("- {}: {}", issue_label(i.category), i.detail))
            .collect::<Vec<_>>()
            .join("\n"),
        table_refs: vec![],
        chart_refs: vec![],
        generated: true,
    });
    Ok(ReportOutcome { draft, critiques, revisions, verdict: Verdict::Fail, warnings })
}

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::{turn_from_proposal, AgentContext, AgentError, AgentTurn, Artifact, Direction, Route};
use crate::error::{DataError, LlmError};
use crate::fundamentals::{DataProvider, DocumentKind};
use crate::llm::structured::{DigestDoc, NewsRelevance, PatchProposal};
use crate::llm::{context, AgentRole, Attachment, Gateway, MAX_REPROMPTS};
use crate::valuation::{DriverSelector, ValuationInputs, ValuationResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub url: String,
    #[serde(default)]
    pub caption: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub headline: String,
    #[serde(default)]
    pub first_paragraph: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_text: Option<String>,
    pub source_name: String,
    pub url: String,
    pub published_at: DateTime<Utc>,
    #[serde(default)]
    pub image_refs: Vec<ImageRef>,
}

/// A source of news items. Full text is fetched separately, on demand.
pub trait NewsFeed: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn items(&self, ticker: &str, as_of: Option<NaiveDate>) -> Result<Vec<NewsItem>, DataError>;
    fn full_text(&self, item: &NewsItem) -> Result<String, DataError>;
}

#[derive(Debug, Deserialize)]
struct NewsDocument {
    #[serde(default)]
    items: Vec<NewsItem>,
}

/// Reads `<as_of>.news.json` through a data provider. Article bodies stay
/// behind [`NewsFeed::full_text`] so triage only reads what it needs.
#[derive(Debug)]
pub struct FixtureNewsFeed {
    name: String,
    provider: Arc<dyn DataProvider>,
    bodies: Mutex<BTreeMap<String, String>>,
}

impl FixtureNewsFeed {
    pub fn new(name: impl Into<String>, provider: Arc<dyn DataProvider>) -> Self {
        Self { name: name.into(), provider, bodies: Mutex::new(BTreeMap::new()) }
    }
}

impl NewsFeed for FixtureNewsFeed {
    fn name(&self) -> &str {
        &self.name
    }

    fn items(&self, ticker: &str, as_of: Option<NaiveDate>) -> Result<Vec<NewsItem>, DataError> {
        let text = self.provider.fetch(ticker, DocumentKind::News, as_of)?;
        let doc: NewsDocument =
            serde_json::from_str(&text).map_err(|e| DataError::schema(format!("news: {e}")))?;
        let mut bodies = self.bodies.lock().expect("news body cache");
        Ok(doc
            .items
            .into_iter()
            .map(|mut item| {
                if let Some(body) = item.full_text.take() {
                    bodies.insert(item.url.clone(), body);
                }
                item
            })
            .collect())
    }

    fn full_text(&self, item: &NewsItem) -> Result<String, DataError> {
        let bodies = self.bodies.lock().expect("news body cache");
        bodies.get(&item.url).cloned().ok_or_else(|| DataError::NotFound {
            ticker: item.source_name.clone(),
            what: format!("article body for {}", item.url),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NewsBatch {
    pub items: Vec<NewsItem>,
    pub warnings: Vec<String>,
}

/// Merges every feed's items, newest first with ties broken by source
/// name, keeps the first item per URL and drops anything published after
/// `cutoff`. A failing feed contributes a warning instead of items.
pub fn fetch_news(
    feeds: &[Arc<dyn NewsFeed>],
    ticker: &str,
    as_of: Option<NaiveDate>,
    cutoff: Option<DateTime<Utc>>,
) -> NewsBatch {
    let mut batch = NewsBatch::default();
    let mut all = Vec::new();
    for feed in feeds {
        match feed.items(ticker, as_of) {
            Ok(items) => all.extend(items),
            Err(DataError::NotFound { .. }) => {}
            Err(e) => batch.warnings.push(format!("news feed `{}`: {e}", feed.name())),
        }
    }
    all.sort_by(|a, b| {
        b.published_at
            .cmp(&a.published_at)
            .then_with(|| a.source_name.cmp(&b.source_name))
    });
    let mut seen = BTreeSet::new();
    for item in all {
        if item.headline.trim().is_empty() {
            batch.warnings.push(format!("news item {} has no headline; dropped", item.url));
            continue;
        }
        if cutoff.is_some_and(|c| item.published_at > c) {
            continue;
        }
        if seen.insert(item.url.clone()) {
            batch.items.push(item);
        }
    }
    batch
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewsThresholds {
    #[serde(default = "NewsThresholds::default_headline")]
    pub headline: f64,
    #[serde(default = "NewsThresholds::default_lede")]
    pub lede: f64,
}

impl NewsThresholds {
    fn default_headline() -> f64 {
        0.3
    }
    fn default_lede() -> f64 {
        0.6
    }
}

impl Default for NewsThresholds {
    fn default() -> Self {
        Self { headline: Self::default_headline(), lede: Self::default_lede() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Headline,
    Lede,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriagedItem {
    pub item: NewsItem,
    pub phase_reached: Phase,
    /// Score from the last phase that was scored.
    pub relevance: f64,
    pub headline_relevance: f64,
    pub lede_relevance: Option<f64>,
}

impl TriagedItem {
    fn is_relevant(&self, t: &NewsThresholds) -> bool {
        self.lede_relevance.is_some_and(|r| r >= t.headline)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverImplication {
    pub driver_path: String,
    pub direction: Direction,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NewsDigest {
    pub items: Vec<TriagedItem>,
    pub summary: String,
    pub driver_implications: Vec<DriverImplication>,
    pub full_fetches: usize,
    pub warnings: Vec<String>,
}

impl NewsDigest {
    pub fn relevant_items<'a>(&'a self, t: &'a NewsThresholds) -> impl Iterator<Item = &'a TriagedItem> + 'a {
        self.items.iter().filter(move |i| i.is_relevant(t))
    }
}

fn score(
    gateway: &Gateway,
    template: &str,
    vars: BTreeMap<String, String>,
) -> Result<Result<f64, String>, LlmError> {
    let env = gateway.render(AgentRole::News, template, &vars, vec![])?;
    match gateway.ask::<NewsRelevance>(AgentRole::News, &env, 0) {
        Ok(a) => Ok(Ok(a.value.relevance)),
        Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}

/// Three-phase reading: every headline is scored; items at or above the
/// headline threshold are re-scored with their first paragraph; items at
/// or above the lede threshold have their full text fetched. Relevant
/// items are then summarized in one call. An item whose score cannot be
/// parsed is dropped with a warning.
pub fn triage_news(
    gateway: &Gateway,
    company_name: &str,
    items: &[NewsItem],
    thresholds: &NewsThresholds,
    fetch_full: &mut dyn FnMut(&NewsItem) -> Result<String, DataError>,
) -> Result<NewsDigest, LlmError> {
    let mut digest = NewsDigest::default();
    for item in items {
        let vars = context([("company_name", company_name), ("headline", item.headline.as_str())]);
        let headline_relevance = match score(gateway, "news_headline", vars)? {
            Ok(r) => r,
            Err(e) => {
                digest.warnings.push(format!("news `{}` dropped: {e}", item.headline));
                continue;
            }
        };
        let mut triaged = TriagedItem {
            item: item.clone(),
            phase_reached: Phase::Headline,
            relevance: headline_relevance,
            headline_relevance,
            lede_relevance: None,
        };
        if headline_relevance >= thresholds.headline {
            let vars = context([
                ("company_name", company_name),
                ("headline", item.headline.as_str()),
                ("lede", item.first_paragraph.as_str()),
            ]);
            let lede = match score(gateway, "news_lede", vars)? {
                Ok(r) => r,
                Err(e) => {
                    digest.warnings.push(format!("news `{}` dropped: {e}", item.headline));
                    continue;
                }
            };
            triaged.phase_reached = Phase::Lede;
            triaged.relevance = lede;
            triaged.lede_relevance = Some(lede);
            if lede >= thresholds.lede {
                digest.full_fetches += 1;
                match fetch_full(item) {
                    Ok(body) => {
                        triaged.item.full_text = Some(body);
                        triaged.phase_reached = Phase::Full;
                    }
                    Err(e) => digest
                        .warnings
                        .push(format!("news `{}`: full text unavailable: {e}", item.headline)),
                }
            }
        }
        digest.items.push(triaged);
    }

    let relevant: Vec<&TriagedItem> = digest.relevant_items(thresholds).collect();
    if relevant.is_empty() {
        return Ok(digest);
    }
    let count = relevant.len().to_string();
    let vars = context([("company_name", company_name), ("item_count", count.as_str())]);
    let attachment = Attachment::json("news", &relevant);
    let headlines = relevant.iter().map(|t| t.item.headline.as_str()).collect::<Vec<_>>().join("; ");
    let env = gateway.render(AgentRole::News, "news_digest", &vars, vec![attachment])?;
    match gateway.ask::<DigestDoc>(AgentRole::News, &env, MAX_REPROMPTS) {
        Ok(answer) => {
            digest.warnings.extend(answer.warnings);
            digest.summary = answer.value.summary;
            for imp in answer.value.implications {
                match imp.path.parse::<DriverSelector>() {
                    Ok(sel) if sel.is_value_driver() => digest.driver_implications.push(DriverImplication {
                        driver_path: sel.as_str().to_string(),
                        direction: imp.direction,
                        rationale: imp.rationale,
                    }),
                    _ => digest
                        .warnings
                        .push(format!("news implication for unknown driver `{}` ignored", imp.path)),
                }
            }
        }
        Err(e @ (LlmError::MalformedOutput(_) | LlmError::SchemaViolation { .. })) => {
            digest.warnings.push(format!("news digest unavailable: {e}"));
            digest.summary = headlines;
        }
        Err(e) => return Err(e),
    }
    Ok(digest)
}

/// Turns the digest's implications into numeric changes. A digest without
/// implications yields an empty patch and no LLM call.
pub fn apply_news(
    ctx: &AgentContext<'_>,
    inputs: &ValuationInputs,
    result: &ValuationResult,
    digest: NewsDigest,
) -> Result<AgentTurn, AgentError> {
    let mut warnings = digest.warnings.clone();
    if digest.driver_implications.is_empty() {
        let proposal = PatchProposal {
            changes: vec![],
            rationale: "no news with valuation implications".to_string(),
        };
        return Ok(turn_from_proposal(inputs, ctx, Route::News, &proposal, vec![Artifact::News(digest)], warnings));
    }
    let gw = ctx.gateway;
    let vars = context([
        ("company_name", inputs.identity.name.as_str()),
        ("summary", digest.summary.as_str()),
        ("instruction", ctx.instruction),
    ]);
    let attachments = vec![
        Attachment::json("inputs", inputs),
        Attachment::json("valuation", result),
        Attachment::json("implications", &digest.driver_implications),
    ];
    let env = gw.render(AgentRole::News, "news_apply", &vars, attachments)?;
    let answer = gw.ask::<PatchProposal>(AgentRole::News, &env, MAX_REPROMPTS)?;
    warnings.extend(answer.warnings);
    Ok(turn_from_proposal(inputs, ctx, Route::News, &answer.value, vec![Artifact::News(digest)], warnings))
}

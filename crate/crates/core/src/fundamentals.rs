//! Company fundamentals, analyst consensus and comparables, plus the
//! provider boundary that serves them as canonical JSON documents.
//!
//! The canonical on-disk layout is one directory per ticker:
//!
//! ```text
//! fixtures/<TICKER>/<as_of>.json              fundamentals snapshot
//! fixtures/<TICKER>/<as_of>.consensus.json    consensus estimates
//! fixtures/<TICKER>/<as_of>.comparables.json  peer set
//! fixtures/<TICKER>/<as_of>.news.json         news items
//! ```

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyIdentity {
    pub name: String,
    pub ticker: String,
    pub listing_currency: String,
    pub country: String,
}

impl CompanyIdentity {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.ticker.is_empty() {
            out.push("identity.ticker: must be non-empty".to_string());
        } else if self.ticker.len() > 12 {
            out.push(format!("identity.ticker: `{}` longer than 12 chars", self.ticker));
        } else if self.ticker.chars().any(|c| c.is_ascii_lowercase()) {
            out.push(format!("identity.ticker: `{}` must be uppercase", self.ticker));
        }
        if self.name.trim().is_empty() {
            out.push("identity.name: must be non-empty".to_string());
        }
        if self.listing_currency.len() != 3
            || !self.listing_currency.chars().all(|c| c.is_ascii_uppercase())
        {
            out.push(format!(
                "identity.listing_currency: `{}` is not an ISO-4217 code",
                self.listing_currency
            ));
        }
        if self.country.len() != 2 || !self.country.chars().all(|c| c.is_ascii_uppercase()) {
            out.push(format!(
                "identity.country: `{}` is not an ISO-3166 alpha-2 code",
                self.country
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FundamentalsSnapshot {
    pub identity: CompanyIdentity,
    pub as_of: NaiveDate,
    /// Oldest first, 2 to 8 fiscal years.
    pub revenue_history: Vec<f64>,
    pub ebit: f64,
    #[serde(default)]
    pub depreciation_amortization: f64,
    pub effective_tax_rate: f64,
    pub total_debt: f64,
    pub cash_and_nonoperating: f64,
    pub invested_capital: f64,
    pub shares_outstanding: f64,
    pub market_price: f64,
}

impl FundamentalsSnapshot {
    pub fn latest_revenue(&self) -> f64 {
        self.revenue_history.last().copied().unwrap_or(0.0)
    }
}

/// Returns the snapshot unchanged iff every invariant holds; otherwise a
/// `SchemaViolation` listing each failure.
pub fn validate_snapshot(
    snapshot: FundamentalsSnapshot,
    today: NaiveDate,
) -> Result<FundamentalsSnapshot, DataError> {
    let mut problems = snapshot.identity.problems();
    let n = snapshot.revenue_history.len();
    if n < 2 {
        problems.push(format!("revenue_history: {n} observation(s), at least 2 required"));
    } else if n > 8 {
        problems.push(format!("revenue_history: {n} observations, at most 8 allowed"));
    }
    if snapshot.revenue_history.iter().any(|r| !r.is_finite()) {
        problems.push("revenue_history: contains a non-finite value".to_string());
    }
    for (field, v) in [
        ("ebit", snapshot.ebit),
        ("depreciation_amortization", snapshot.depreciation_amortization),
        ("total_debt", snapshot.total_debt),
        ("cash_and_nonoperating", snapshot.cash_and_nonoperating),
        ("invested_capital", snapshot.invested_capital),
        ("market_price", snapshot.market_price),
    ] {
        if !v.is_finite() {
            problems.push(format!("{field}: must be finite"));
        }
    }
    if !(snapshot.shares_outstanding.is_finite() && snapshot.shares_outstanding > 0.0) {
        problems.push("shares_outstanding: must be > 0".to_string());
    }
    if !(0.0..1.0).contains(&snapshot.effective_tax_rate) {
        problems.push(format!(
            "effective_tax_rate: {} outside [0, 1)",
            snapshot.effective_tax_rate
        ));
    }
    if snapshot.as_of > today {
        problems.push(format!(
            "as_of: {} is after the run clock ({today})",
            snapshot.as_of
        ));
    }
    if problems.is_empty() {
        Ok(snapshot)
    } else {
        Err(DataError::SchemaViolation(problems))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusEstimates {
    pub as_of: NaiveDate,
    #[serde(default)]
    pub revenue_growth_y1: Option<f64>,
    #[serde(default)]
    pub revenue_growth_y2: Option<f64>,
    #[serde(default)]
    pub operating_margin_fwd: Option<f64>,
    pub analyst_count: u32,
    #[serde(default)]
    pub median_target_price: Option<f64>,
}

impl ConsensusEstimates {
    fn has_estimates(&self) -> bool {
        self.revenue_growth_y1.is_some()
            || self.revenue_growth_y2.is_some()
            || self.operating_margin_fwd.is_some()
            || self.median_target_price.is_some()
    }

    pub fn validate(self) -> Result<Self, DataError> {
        if self.has_estimates() && self.analyst_count == 0 {
            return Err(DataError::schema(
                "analyst_count: must be >= 1 when estimates are present",
            ));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peer {
    pub identity: CompanyIdentity,
    pub ev_to_ebitda: f64,
    pub revenue_growth: f64,
    pub operating_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparablesSet {
    pub peers: Vec<Peer>,
}

impl ComparablesSet {
    pub fn validate(self) -> Result<Self, DataError> {
        let mut problems = Vec::new();
        if self.peers.is_empty() {
            problems.push("peers: must be non-empty".to_string());
        }
        let mut seen = HashSet::new();
        for peer in &self.peers {
            if !seen.insert(peer.identity.ticker.as_str()) {
                problems.push(format!("peers: duplicate ticker `{}`", peer.identity.ticker));
            }
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(DataError::SchemaViolation(problems))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Fundamentals,
    Consensus,
    Comparables,
    News,
}

impl DocumentKind {
    pub fn suffix(self) -> &'static str {
        match self {
            DocumentKind::Fundamentals => ".json",
            DocumentKind::Consensus => ".consensus.json",
            DocumentKind::Comparables => ".comparables.json",
            DocumentKind::News => ".news.json",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DocumentKind::Fundamentals => "fundamentals",
            DocumentKind::Consensus => "consensus",
            DocumentKind::Comparables => "comparables",
            DocumentKind::News => "news",
        }
    }
}

/// A data provider answers one request per document type with canonical
/// JSON text. `as_of = None` asks for the latest available document.
pub trait DataProvider: Send + Sync + fmt::Debug {
    fn fetch(
        &self,
        ticker: &str,
        kind: DocumentKind,
        as_of: Option<NaiveDate>,
    ) -> Result<String, DataError>;

    /// Dates for which a fundamentals document exists, ascending.
    fn available_dates(&self, ticker: &str) -> Result<Vec<NaiveDate>, DataError>;
}

/// Reads the canonical fixture tree from disk.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    root: PathBuf,
}

impl FixtureProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn resolve_date(&self, ticker: &str, as_of: Option<NaiveDate>) -> Result<NaiveDate, DataError> {
        let dates = self.available_dates(ticker)?;
        match as_of {
            Some(d) if dates.contains(&d) => Ok(d),
            Some(d) => Err(DataError::MissingFixture {
                ticker: ticker.to_string(),
                as_of: d.to_string(),
            }),
            None => dates.last().copied().ok_or_else(|| DataError::NotFound {
                ticker: ticker.to_string(),
                what: "fundamentals".to_string(),
            }),
        }
    }
}

impl DataProvider for FixtureProvider {
    fn fetch(
        &self,
        ticker: &str,
        kind: DocumentKind,
        as_of: Option<NaiveDate>,
    ) -> Result<String, DataError> {
        let date = self.resolve_date(ticker, as_of)?;
        let path = self.root.join(ticker).join(format!("{date}{}", kind.suffix()));
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(DataError::NotFound {
                ticker: ticker.to_string(),
                what: kind.label().to_string(),
            }),
            Err(e) => Err(DataError::Provider {
                message: format!("{}: {e}", path.display()),
                retryable: false,
            }),
        }
    }

    fn available_dates(&self, ticker: &str) -> Result<Vec<NaiveDate>, DataError> {
        let dir = self.root.join(ticker);
        let entries = std::fs::read_dir(&dir).map_err(|_| DataError::NotFound {
            ticker: ticker.to_string(),
            what: "fixture directory".to_string(),
        })?;
        let mut dates: Vec<NaiveDate> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                let stem = name.strip_suffix(".json")?;
                NaiveDate::parse_from_str(stem, "%Y-%m-%d").ok()
            })
            .collect();
        dates.sort();
        Ok(dates)
    }
}

/// Named provider adapters available to `provider:<name>` selectors.
#[derive(Debug, Default, Clone)]
pub struct ProviderRegistry {
    providers: BTreeMap<String, Arc<dyn DataProvider>>,
}

impl ProviderRegistry {
    pub fn register(&mut self, name: impl Into<String>, provider: Arc<dyn DataProvider>) {
        self.providers.insert(name.into(), provider);
    }

    /// Resolves `fixture:<path>` or `provider:<name>`.
    pub fn resolve(&self, selector: &str) -> Result<Arc<dyn DataProvider>, DataError> {
        if let Some(path) = selector.strip_prefix("fixture:") {
            if path.is_empty() {
                return Err(DataError::BadSource(selector.to_string()));
            }
            return Ok(Arc::new(FixtureProvider::new(path)));
        }
        if let Some(name) = selector.strip_prefix("provider:") {
            return self
                .providers
                .get(name)
                .cloned()
                .ok_or_else(|| DataError::BadSource(selector.to_string()));
        }
        Err(DataError::BadSource(selector.to_string()))
    }
}

fn parse_document<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, DataError> {
    serde_json::from_str(text).map_err(|e| DataError::schema(e.to_string()))
}

fn is_blank_document(text: &str) -> bool {
    let t = text.trim();
    t.is_empty() || t == "{}" || t == "null"
}

pub fn load_fundamentals(
    provider: &dyn DataProvider,
    ticker: &str,
    as_of: Option<NaiveDate>,
    today: NaiveDate,
) -> Result<FundamentalsSnapshot, DataError> {
    let text = provider.fetch(ticker, DocumentKind::Fundamentals, as_of)?;
    validate_snapshot(parse_fundamentals(&text, ticker)?, today)
}

/// Parses a fundamentals document for `ticker` without checking the
/// snapshot invariants.
pub fn parse_fundamentals(text: &str, ticker: &str) -> Result<FundamentalsSnapshot, DataError> {
    let snapshot: FundamentalsSnapshot = parse_document(text)?;
    if snapshot.identity.ticker != ticker {
        return Err(DataError::schema(format!(
            "identity.ticker: document is for `{}`, requested `{ticker}`",
            snapshot.identity.ticker
        )));
    }
    Ok(snapshot)
}

pub fn fetch_consensus(
    provider: &dyn DataProvider,
    ticker: &str,
    as_of: Option<NaiveDate>,
) -> Result<ConsensusEstimates, DataError> {
    let text = provider.fetch(ticker, DocumentKind::Consensus, as_of)?;
    if is_blank_document(&text) {
        return Err(DataError::NotFound {
            ticker: ticker.to_string(),
            what: "consensus".to_string(),
        });
    }
    parse_document::<ConsensusEstimates>(&text)?.validate()
}

/// An empty peer list is reported as `NotFound` so callers can skip the
/// comparables step; duplicates are a `SchemaViolation`.
pub fn fetch_comparables(
    provider: &dyn DataProvider,
    ticker: &str,
    as_of: Option<NaiveDate>,
) -> Result<ComparablesSet, DataError> {
    let text = provider.fetch(ticker, DocumentKind::Comparables, as_of)?;
    if is_blank_document(&text) {
        return Err(DataError::NotFound {
            ticker: ticker.to_string(),
            what: "comparables".to_string(),
        });
    }
    let set: ComparablesSet = parse_document(&text)?;
    if set.peers.is_empty() {
        return Err(DataError::NotFound {
            ticker: ticker.to_string(),
            what: "comparables".to_string(),
        });
    }
    set.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn identity(ticker: &str) -> CompanyIdentity {
        CompanyIdentity {
            name: format!("{ticker} Corp"),
            ticker: ticker.to_string(),
            listing_currency: "USD".to_string(),
            country: "US".to_string(),
        }
    }

    fn snapshot() -> FundamentalsSnapshot {
        FundamentalsSnapshot {
            identity: identity("ACME"),
            as_of: NaiveDate::from_ymd_opt(2024, 11, 4).unwrap(),
            revenue_history: vec![600.0, 800.0, 1000.0],
            ebit: 100.0,
            depreciation_amortization: 0.0,
            effective_tax_rate: 0.2,
            total_debt: 50.0,
            cash_and_nonoperating: 20.0,
            invested_capital: 500.0,
            shares_outstanding: 10.0,
            market_price: 30.0,
        }
    }

    fn today() -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 12, 31).unwrap()
    }

    #[test]
    fn valid_snapshot_passes_unchanged() {
        let s = snapshot();
        assert_eq!(validate_snapshot(s.clone(), today()).unwrap(), s);
    }

    #[test]
    fn short_history_rejected() {
        let mut s = snapshot();
        s.revenue_history = vec![1000.0];
        let err = validate_snapshot(s, today()).unwrap_err();
        assert!(matches!(err, DataError::SchemaViolation(ref p) if p[0].starts_with("revenue_history")));
    }

    #[test]
    fn non_finite_field_rejected() {
        let mut s = snapshot();
        s.total_debt = f64::NAN;
        let err = validate_snapshot(s, today()).unwrap_err();
        assert_eq!(err, DataError::SchemaViolation(vec!["total_debt: must be finite".into()]));
    }

    #[test]
    fn future_as_of_rejected() {
        let s = snapshot();
        let early = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        assert!(validate_snapshot(s, early).is_err());
    }

    #[test]
    fn every_failure_is_listed() {
        let mut s = snapshot();
        s.identity.ticker = "acme".into();
        s.shares_outstanding = 0.0;
        s.effective_tax_rate = 1.0;
        match validate_snapshot(s, today()).unwrap_err() {
            DataError::SchemaViolation(p) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ticker_rules() {
        let mut id = identity("BRK.B");
        assert!(id.problems().is_empty());
        id.ticker = "ABCDEFGHIJKLM".into();
        assert_eq!(id.problems().len(), 1);
        id.ticker = String::new();
        assert_eq!(id.problems().len(), 1);
    }

    #[test]
    fn consensus_requires_analysts_when_estimates_present() {
        let c = ConsensusEstimates {
            as_of: today(),
            revenue_growth_y1: Some(0.12),
            revenue_growth_y2: None,
            operating_margin_fwd: None,
            analyst_count: 0,
            median_target_price: None,
        };
        assert!(matches!(c.clone().validate(), Err(DataError::SchemaViolation(_))));
        let ok = ConsensusEstimates { analyst_count: 3, ..c };
        assert_eq!(ok.clone().validate().unwrap().revenue_growth_y1, Some(0.12));
    }

    #[test]
    fn comparables_rules() {
        let peer = |t: &str, r: f64| Peer {
            identity: identity(t),
            ev_to_ebitda: r,
            revenue_growth: 0.1,
            operating_margin: 0.05,
        };
        let single = ComparablesSet { peers: vec![peer("NIO", 10.2)] };
        assert_eq!(single.validate().unwrap().peers.len(), 1);
        let dup = ComparablesSet { peers: vec![peer("NIO", 10.2), peer("NIO", 11.0)] };
        assert!(matches!(dup.validate(), Err(DataError::SchemaViolation(_))));
    }

    #[test]
    fn selector_parsing() {
        let reg = ProviderRegistry::default();
        assert!(reg.resolve("fixture:some/dir").is_ok());
        assert_eq!(
            reg.resolve("provider:bloomberg").unwrap_err(),
            DataError::BadSource("provider:bloomberg".into())
        );
        assert!(reg.resolve("ftp://x").is_err());
    }
}

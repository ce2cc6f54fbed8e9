//! Machine-readable agent replies. Completions are free text; the first
//! well-formed JSON object in the text is extracted and checked against a
//! registered schema.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agents::{Direction, Route};
use crate::error::LlmError;
use crate::reporting::{ChartSpec, IssueCategory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDecision {
    pub route: Route,
    #[serde(default)]
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedChange {
    pub path: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchProposal {
    #[serde(default)]
    pub changes: Vec<ProposedChange>,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueIssueDoc {
    pub category: IssueCategory,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueDoc {
    #[serde(default)]
    pub issues: Vec<CritiqueIssueDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsRelevance {
    pub relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationDoc {
    pub path: String,
    pub direction: Direction,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigestDoc {
    pub summary: String,
    #[serde(default)]
    pub implications: Vec<ImplicationDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionDoc {
    pub heading: String,
    pub body: String,
    #[serde(default)]
    pub table_refs: Vec<String>,
    #[serde(default)]
    pub chart_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftDoc {
    pub title: String,
    pub sections: Vec<SectionDoc>,
    #[serde(default)]
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSelection {
    pub rows: String,
    pub cols: String,
}

pub trait StructuredOutput: DeserializeOwned {
    const SCHEMA: &'static str;

    fn check(&self) -> Result<(), String> {
        Ok(())
    }
}

impl StructuredOutput for RouteDecision {
    const SCHEMA: &'static str = "route-decision";
}

impl StructuredOutput for PatchProposal {
    const SCHEMA: &'static str = "input-patch";

    fn check(&self) -> Result<(), String> {
        match self.changes.iter().find(|c| !c.value.is_finite()) {
            Some(c) => Err(format!("non-finite value for `{}`", c.path)),
            None => Ok(()),
        }
    }
}

impl StructuredOutput for CritiqueDoc {
    const SCHEMA: &'static str = "critique";
}

impl StructuredOutput for ChartSpec {
    const SCHEMA: &'static str = "chart-spec";

    fn check(&self) -> Result<(), String> {
        self.check_shape()
    }
}

impl StructuredOutput for NewsRelevance {
    const SCHEMA: &'static str = "news-relevance";

    fn check(&self) -> Result<(), String> {
        if (0.0..=1.0).contains(&self.relevance) {
            Ok(())
        } else {
            Err(format!("relevance {} outside [0, 1]", self.relevance))
        }
    }
}

impl StructuredOutput for DigestDoc {
    const SCHEMA: &'static str = "news-digest";

    fn check(&self) -> Result<(), String> {
        if self.summary.trim().is_empty() {
            Err("empty summary".to_string())
        } else {
            Ok(())
        }
    }
}

impl StructuredOutput for DraftDoc {
    const SCHEMA: &'static str = "report-draft";

    fn check(&self) -> Result<(), String> {
        if self.title.trim().is_empty() {
            return Err("empty title".to_string());
        }
        if self.sections.is_empty() {
            return Err("no sections".to_string());
        }
        Ok(())
    }
}

impl StructuredOutput for AxisSelection {
    const SCHEMA: &'static str = "axis-selection";
}

/// Every registered schema id.
pub const SCHEMAS: [&str; 8] = [
    RouteDecision::SCHEMA,
    PatchProposal::SCHEMA,
    CritiqueDoc::SCHEMA,
    ChartSpec::SCHEMA,
    NewsRelevance::SCHEMA,
    DigestDoc::SCHEMA,
    DraftDoc::SCHEMA,
    AxisSelection::SCHEMA,
];

/// The first `{...}` in `text` that parses as a JSON object.
pub fn extract_first_object(text: &str) -> Option<Map<String, Value>> {
    text.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

pub fn parse_as<T: StructuredOutput>(text: &str) -> Result<T, LlmError> {
    let object = extract_first_object(text)
        .ok_or_else(|| LlmError::MalformedOutput(format!("no JSON object for `{}`", T::SCHEMA)))?;
    let violation = |detail: String| LlmError::SchemaViolation {
        schema: T::SCHEMA.to_string(),
        detail,
    };
    let value: T = serde_json::from_value(Value::Object(object)).map_err(|e| violation(e.to_string()))?;
    value.check().map_err(violation)?;
    Ok(value)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    Route(RouteDecision),
    Patch(PatchProposal),
    Critique(CritiqueDoc),
    Chart(ChartSpec),
    Relevance(NewsRelevance),
    Digest(DigestDoc),
    Draft(DraftDoc),
    Axes(AxisSelection),
}

/// Dynamic entry point keyed by schema id.
pub fn parse_structured(text: &str, schema_id: &str) -> Result<Structured, LlmError> {
    Ok(match schema_id {
        RouteDecision::SCHEMA => Structured::Route(parse_as(text)?),
        PatchProposal::SCHEMA => Structured::Patch(parse_as(text)?),
        CritiqueDoc::SCHEMA => Structured::Critique(parse_as(text)?),
        ChartSpec::SCHEMA => Structured::Chart(parse_as(text)?),
        NewsRelevance::SCHEMA => Structured::Relevance(parse_as(text)?),
        DigestDoc::SCHEMA => Structured::Digest(parse_as(text)?),
        DraftDoc::SCHEMA => Structured::Draft(parse_as(text)?),
        AxisSelection::SCHEMA => Structured::Axes(parse_as(text)?),
        other => return Err(LlmError::UnknownSchema(other.to_string())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn route_with_instruction() {
        let s = parse_structured(r#"{"route":"news","instruction":"check tariffs"}"#, "route-decision")
            .unwrap();
        assert_eq!(
            s,
            Structured::Route(RouteDecision { route: Route::News, instruction: "check tariffs".into() })
        );
    }

    #[test]
    fn route_embedded_in_prose() {
        let text = "Having weighed the evidence, I conclude: {\"route\":\"end\"} and that's all.";
        let r: RouteDecision = parse_as(text).unwrap();
        assert_eq!(r.route, Route::End);
    }

    #[test]
    fn unknown_route_is_schema_violation() {
        let err = parse_as::<RouteDecision>(r#"{"route":"fly_to_moon"}"#).unwrap_err();
        assert!(matches!(err, LlmError::SchemaViolation { .. }), "{err:?}");
    }

    #[test]
    fn no_object_is_malformed() {
        for text in ["", "end", "{route: end}", "[1,2]", "{\"route\":"] {
            assert!(
                matches!(parse_as::<RouteDecision>(text), Err(LlmError::MalformedOutput(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn skips_broken_braces_before_object() {
        let r: NewsRelevance = parse_as("score {0.9} => {\"relevance\": 0.9}").unwrap();
        assert_eq!(r.relevance, 0.9);
    }

    #[test]
    fn relevance_range_checked() {
        assert!(matches!(
            parse_as::<NewsRelevance>(r#"{"relevance": 1.5}"#),
            Err(LlmError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn unknown_schema() {
        assert_eq!(
            parse_structured("{}", "horoscope").unwrap_err(),
            LlmError::UnknownSchema("horoscope".into())
        );
    }

    #[test]
    fn missing_required_field_not_fabricated() {
        assert!(matches!(
            parse_as::<DraftDoc>(r#"{"sections": []}"#),
            Err(LlmError::SchemaViolation { .. })
        ));
    }

    proptest! {
        // totality: any text yields a value or a typed error, never a panic
        #[test]
        fn parse_is_total(text in ".{0,200}", schema in prop::sample::select(SCHEMAS.to_vec())) {
            match parse_structured(&text, schema) {
                Ok(_) | Err(LlmError::MalformedOutput(_)) | Err(LlmError::SchemaViolation { .. }) => {}
                Err(other) => prop_assert!(false, "unexpected {other:?}"),
            }
        }
    }
}

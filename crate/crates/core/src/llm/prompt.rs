use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LlmError;

/// A serialized table or document sent alongside the prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub name: String,
    pub content: String,
}

impl Attachment {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self { name: name.into(), content: content.into() }
    }

    /// Attaches `value` as compact JSON.
    pub fn json<T: Serialize>(name: impl Into<String>, value: &T) -> Self {
        let content = serde_json::to_string(value).expect("attachment serializes");
        Self::new(name, content)
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.content.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptEnvelope {
    pub template_id: String,
    pub rendered_text: String,
    pub attachments: Vec<Attachment>,
    pub temperature: f64,
    /// sha256 over the template id and each attachment's name and digest.
    pub context_fingerprint: String,
}

impl PromptEnvelope {
    pub fn fingerprint(template_id: &str, attachments: &[Attachment]) -> String {
        let mut h = Sha256::new();
        h.update(template_id.as_bytes());
        for a in attachments {
            h.update([0u8]);
            h.update(a.name.as_bytes());
            h.update([0u8]);
            h.update(a.digest().as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Same template and attachments with a correction note appended.
    pub fn with_note(&self, note: &str) -> Self {
        let mut next = self.clone();
        next.rendered_text.push_str("\n\n");
        next.rendered_text.push_str(note);
        next
    }

    /// Prompt text followed by every attachment, as sent to a remote model.
    pub fn full_text(&self) -> String {
        let mut out = self.rendered_text.clone();
        for a in &self.attachments {
            out.push_str(&format!("\n\n--- {} ---\n{}", a.name, a.content));
        }
        out
    }
}

enum Piece<'a> {
    Text(&'a str),
    Brace(char),
    Slot(&'a str),
}

fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let bytes = template.as_bytes();
    let mut i = 0;
    let mut start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&template[start..i]));
                out.push(Piece::Brace('{'));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&template[start..i]));
                out.push(Piece::Brace('}'));
                i += 2;
                start = i;
            }
            b'{' => {
                let rest = &template[i + 1..];
                let end = rest.find('}');
                let name = end.map(|e| &rest[..e]);
                match name {
                    Some(n)
                        if !n.is_empty()
                            && n.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_') =>
                    {
                        out.push(Piece::Text(&template[start..i]));
                        out.push(Piece::Slot(n));
                        i += n.len() + 2;
                        start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&template[start..]));
    out
}

/// Prompt templates keyed by id, `{placeholder}` syntax with `{{`/`}}` for
/// literal braces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptLibrary {
    templates: BTreeMap<String, String>,
}

macro_rules! builtin {
    ($($id:literal),* $(,)?) => {
        &[$(($id, include_str!(concat!("../../prompts/", $id, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin!(
    "market",
    "sensitivity_axes",
    "sensitivity",
    "consensus",
    "comparables",
    "news_headline",
    "news_lede",
    "news_digest",
    "news_apply",
    "router",
    "report_writer",
    "report_reviser",
    "critic",
);

impl PromptLibrary {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(id, text)| (id.to_string(), text.to_string()))
            .collect();
        Self { templates }
    }

    /// Built-in templates overridden by every `<template_id>.txt` in `dir`.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut lib = Self::builtin();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("txt") {
                continue;
            }
            if let Some(id) = path.file_stem().and_then(|s| s.to_str()) {
                lib.templates.insert(id.to_string(), std::fs::read_to_string(&path)?);
            }
        }
        Ok(lib)
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) {
        self.templates.insert(id.into(), text.into());
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.templates.get(id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.templates.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn render(
        &self,
        template_id: &str,
        context: &BTreeMap<String, String>,
        attachments: Vec<Attachment>,
    ) -> Result<PromptEnvelope, LlmError> {
        let template = self
            .get(template_id)
            .ok_or_else(|| LlmError::UnknownTemplate(template_id.to_string()))?;
        let mut missing = BTreeSet::new();
        let mut text = String::with_capacity(template.len());
        for piece in pieces(template) {
            match piece {
                Piece::Text(t) => text.push_str(t),
                Piece::Brace(c) => text.push(c),
                Piece::Slot(name) => match context.get(name) {
                    Some(v) => text.push_str(v),
                    None => {
                        missing.insert(name.to_string());
                    }
                },
            }
        }
        if !missing.is_empty() {
            return Err(LlmError::MissingPlaceholder(missing.into_iter().collect()));
        }
        if text.trim().is_empty() {
            return Err(LlmError::Config(format!("template `{template_id}` renders empty")));
        }
        let context_fingerprint = PromptEnvelope::fingerprint(template_id, &attachments);
        Ok(PromptEnvelope {
            template_id: template_id.to_string(),
            rendered_text: text,
            attachments,
            temperature: 0.0,
            context_fingerprint,
        })
    }
}

/// Builds a placeholder map from `(key, value)` pairs.
pub fn context<K: Into<String>, V: ToString>(pairs: impl IntoIterator<Item = (K, V)>) -> BTreeMap<String, String> {
    pairs.into_iter().map(|(k, v)| (k.into(), v.to_string())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lib() -> PromptLibrary {
        let mut lib = PromptLibrary::default();
        lib.insert("t", "Value {company_name} ({ticker}). Reply {{\"route\": \"end\"}}.");
        lib
    }

    #[test]
    fn renders_and_escapes() {
        let env = lib()
            .render("t", &context([("company_name", "BYD"), ("ticker", "BYD")]), vec![])
            .unwrap();
        assert_eq!(env.rendered_text, "Value BYD (BYD). Reply {\"route\": \"end\"}.");
    }

    #[test]
    fn missing_placeholder_lists_keys() {
        let err = lib().render("t", &context([("ticker", "BYD")]), vec![]).unwrap_err();
        assert_eq!(err, LlmError::MissingPlaceholder(vec!["company_name".into()]));
        let err = lib().render("t", &BTreeMap::new(), vec![]).unwrap_err();
        assert_eq!(
            err,
            LlmError::MissingPlaceholder(vec!["company_name".into(), "ticker".into()])
        );
    }

    #[test]
    fn unknown_template() {
        assert!(matches!(
            lib().render("nope", &BTreeMap::new(), vec![]),
            Err(LlmError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn fingerprint_is_deterministic_and_attachment_sensitive() {
        let ctx = context([("company_name", "BYD"), ("ticker", "BYD")]);
        let a = vec![Attachment::new("inputs", "{\"x\":1}")];
        let e1 = lib().render("t", &ctx, a.clone()).unwrap();
        let e2 = lib().render("t", &ctx, a).unwrap();
        assert_eq!(e1.context_fingerprint, e2.context_fingerprint);

        let changed = vec![Attachment::new("inputs", "{\"x\":2}")];
        let e3 = lib().render("t", &ctx, changed).unwrap();
        assert_ne!(e1.context_fingerprint, e3.context_fingerprint);

        // independent recomputation of the documented hash layout
        let mut h = Sha256::new();
        h.update(b"t");
        h.update([0u8]);
        h.update(b"inputs");
        h.update([0u8]);
        h.update(hex::encode(Sha256::digest(b"{\"x\":1}")).as_bytes());
        assert_eq!(e1.context_fingerprint, hex::encode(h.finalize()));
    }

    #[test]
    fn builtin_templates_present() {
        let lib = PromptLibrary::builtin();
        for (id, _) in BUILTIN {
            assert!(lib.get(id).is_some());
        }
    }
}

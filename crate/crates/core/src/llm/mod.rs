//! The language-model interface used for relevance judging, keyword
//! extraction and chain-of-thought generation.
//!
//! [`OracleLlm`] answers from relevance judgments and index statistics and is
//! fully deterministic; [`ChatClient`] talks to a chat-completion endpoint.

mod http;
mod oracle;
mod prompts;

pub use http::{ChatClient, ChatClientConfig, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
pub use oracle::{OracleLlm, DEFAULT_COT_MAX_CHARS};
pub use prompts::{PromptKind, PromptSet, PromptTemplate};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, QueryRecord};
use crate::error::Result;

/// Pointwise relevance verdict. `relevant` is always derived from
/// `raw_response`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelVerdict {
    relevant: bool,
    raw_response: String,
}

impl RelVerdict {
    pub fn from_response(raw: impl Into<String>) -> Self {
        let raw_response = raw.into();
        Self {
            relevant: parse_verdict(&raw_response),
            raw_response,
        }
    }

    pub fn relevant(&self) -> bool {
        self.relevant
    }

    pub fn raw_response(&self) -> &str {
        &self.raw_response
    }
}

/// Extracted keywords: non-empty, case-insensitively unique, first
/// occurrence kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermList {
    terms: Vec<String>,
}

impl TermList {
    pub fn new<I, T>(terms: I, m: usize) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut out: Vec<String> = Vec::new();
        for t in terms {
            let t: String = t.into();
            let t = t.trim();
            if t.is_empty() || out.iter().any(|o| o.to_lowercase() == t.to_lowercase()) {
                continue;
            }
            if out.len() == m {
                break;
            }
            out.push(t.to_string());
        }
        Self { terms: out }
    }

    /// Parses a comma- or newline-separated model response, dropping list
    /// markers, quotes and a leading `Keywords:` label.
    pub fn from_response(raw: &str, m: usize) -> Self {
        let items = raw
            .split([',', '\n', ';'])
            .map(clean_keyword)
            .filter(|s| !s.is_empty());
        Self::new(items, m)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

fn clean_keyword(item: &str) -> String {
    let mut s = item.trim();
    if let Some((head, rest)) = s.split_once(':') {
        if head.trim().eq_ignore_ascii_case("keywords") {
            s = rest.trim();
        }
    }
    let s = s.trim_start_matches(['-', '*', '•']).trim_start();
    // "1." / "2)" enumerations
    let digits = s.chars().take_while(char::is_ascii_digit).count();
    let s = if digits > 0 && s[digits..].starts_with(['.', ')']) {
        s[digits + 1..].trim_start()
    } else {
        s
    };
    s.trim_matches(|c: char| c == '"' || c == '\'' || c == '`' || c == '.' || c.is_whitespace())
        .to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotText {
    pub text: String,
}

impl CotText {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }

    pub fn is_empty(&self) -> bool {
        self.text.trim().is_empty()
    }
}

/// Reads a yes/no answer. The first word decides when it is "yes" or "no";
/// otherwise the first "yes"/"no" word anywhere. Anything else is "no".
pub fn parse_verdict(raw: &str) -> bool {
    let lower = raw.to_lowercase();
    let mut words = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty());
    match words.next() {
        Some("yes") => return true,
        Some("no") => return false,
        _ => {}
    }
    for w in lower.split(|c: char| !c.is_alphanumeric()) {
        match w {
            "yes" => return true,
            "no" => return false,
            _ => {}
        }
    }
    tracing::warn!(response = raw, "no yes/no in relevance verdict, treating as not relevant");
    false
}

/// The three model calls ProQE makes, plus the zero-shot pseudo-document
/// generator used by the query2doc baseline.
pub trait LanguageModel: Send + Sync {
    fn judge_relevance(&self, query: &QueryRecord, passage: &Document) -> Result<RelVerdict>;

    fn extract_terms(&self, query: &QueryRecord, passage: &Document, m: usize) -> Result<TermList>;

    fn generate_cot(&self, query: &QueryRecord) -> Result<CotText>;

    fn generate_passage(&self, query: &QueryRecord) -> Result<CotText>;
}

impl<L: LanguageModel + ?Sized> LanguageModel for &L {
    fn judge_relevance(&self, query: &QueryRecord, passage: &Document) -> Result<RelVerdict> {
        (**self).judge_relevance(query, passage)
    }

    fn extract_terms(&self, query: &QueryRecord, passage: &Document, m: usize) -> Result<TermList> {
        (**self).extract_terms(query, passage, m)
    }

    fn generate_cot(&self, query: &QueryRecord) -> Result<CotText> {
        (**self).generate_cot(query)
    }

    fn generate_passage(&self, query: &QueryRecord) -> Result<CotText> {
        (**self).generate_passage(query)
    }
}

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const RELEVANCE: &str = include_str!("../../prompts/relevance.txt");
const KEYWORDS: &str = include_str!("../../prompts/keywords.txt");
const COT: &str = include_str!("../../prompts/cot.txt");
const QUERY2DOC: &str = include_str!("../../prompts/query2doc.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptKind {
    Relevance,
    Keywords,
    Cot,
    Query2Doc,
}

impl PromptKind {
    pub const ALL: [PromptKind; 4] = [
        PromptKind::Relevance,
        PromptKind::Keywords,
        PromptKind::Cot,
        PromptKind::Query2Doc,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Relevance => "relevance.txt",
            PromptKind::Keywords => "keywords.txt",
            PromptKind::Cot => "cot.txt",
            PromptKind::Query2Doc => "query2doc.txt",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptKind::Relevance => RELEVANCE,
            PromptKind::Keywords => KEYWORDS,
            PromptKind::Cot => COT,
            PromptKind::Query2Doc => QUERY2DOC,
        }
    }

    fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            PromptKind::Relevance => &["{query}", "{passage}"],
            PromptKind::Keywords => &["{query}", "{passage}", "{m}"],
            PromptKind::Cot | PromptKind::Query2Doc => &["{query}"],
        }
    }
}

/// Prompt text with `{query}`, `{passage}` and `{m}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: PromptKind,
    text: String,
}

impl PromptTemplate {
    pub fn new(kind: PromptKind, text: impl Into<String>) -> Result<Self> {
        let text = text.into();
        for p in kind.required_placeholders() {
            if !text.contains(p) {
                return Err(Error::InvalidArgument(format!(
                    "{} template is missing placeholder {p}",
                    kind.file_name()
                )));
            }
        }
        Ok(Self { kind, text })
    }

    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// First line of the template: the task instruction.
    pub fn instruction(&self) -> &str {
        self.text.lines().next().unwrap_or("")
    }

    /// 64-bit FNV-1a of the template text, used in cache keys.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(self.text.as_bytes())
    }

    pub fn render(&self, query: &str, passage: Option<&str>, m: Option<usize>) -> String {
        let mut out = self.text.replace("{query}", query);
        if let Some(p) = passage {
            out = out.replace("{passage}", p);
        }
        if let Some(m) = m {
            out = out.replace("{m}", &m.to_string());
        }
        out
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    use std::hash::Hasher;
    let mut h = fnv::FnvHasher::default();
    h.write(bytes);
    h.finish()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub relevance: PromptTemplate,
    pub keywords: PromptTemplate,
    pub cot: PromptTemplate,
    pub query2doc: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let t = |k: PromptKind| PromptTemplate::new(k, k.builtin()).expect("shipped template is valid");
        Self {
            relevance: t(PromptKind::Relevance),
            keywords: t(PromptKind::Keywords),
            cot: t(PromptKind::Cot),
            query2doc: t(PromptKind::Query2Doc),
        }
    }

    /// Loads overrides from `dir`; files that are absent keep the shipped
    /// template.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = Self::builtin();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            *set.get_mut(kind) = PromptTemplate::new(kind, text)?;
        }
        Ok(set)
    }

    pub fn get(&self, kind: PromptKind) -> &PromptTemplate {
        match kind {
            PromptKind::Relevance => &self.relevance,
            PromptKind::Keywords => &self.keywords,
            PromptKind::Cot => &self.cot,
            PromptKind::Query2Doc => &self.query2doc,
        }
    }

    fn get_mut(&mut self, kind: PromptKind) -> &mut PromptTemplate {
        match kind {
            PromptKind::Relevance => &mut self.relevance,
            PromptKind::Keywords => &mut self.keywords,
            PromptKind::Cot => &mut self.cot,
            PromptKind::Query2Doc => &mut self.query2doc,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_placeholders() {
        let set = PromptSet::builtin();
        let r = set.keywords.render("who won", Some("the passage"), Some(5));
        assert_eq!(
            r,
            "Given the query and passage, extract 5 keywords that may be useful to better \
             retrieve relevant passages.\n\nQuery: who won\nPassage: the passage\n"
        );
    }

    #[test]
    fn missing_placeholder_rejected() {
        assert!(PromptTemplate::new(PromptKind::Relevance, "Is it related? {query}").is_err());
    }

    #[test]
    fn overrides_from_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("cot.txt"), "Think, then answer: {query}").unwrap();
        let set = PromptSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.cot.render("q", None, None), "Think, then answer: q");
        assert_eq!(set.relevance, PromptSet::builtin().relevance);
    }
}

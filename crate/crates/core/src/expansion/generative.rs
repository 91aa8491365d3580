//! Generative baselines: append model output to the boosted query.

use super::ExpandedQuery;
use crate::corpus::QueryRecord;
use crate::error::Result;
use crate::llm::LanguageModel;

/// `alpha` copies of the query followed by the chain-of-thought answer.
pub fn cot_expand<L: LanguageModel + ?Sized>(
    query: &QueryRecord,
    llm: &L,
    alpha_repetitions: usize,
) -> Result<ExpandedQuery> {
    let cot = llm.generate_cot(query)?;
    Ok(ExpandedQuery::boosted(&query.text, alpha_repetitions).with_appended(&cot.text))
}

/// `alpha` copies of the query followed by a zero-shot generated passage.
pub fn query2doc_expand<L: LanguageModel + ?Sized>(
    query: &QueryRecord,
    llm: &L,
    alpha_repetitions: usize,
) -> Result<ExpandedQuery> {
    let doc = llm.generate_passage(query)?;
    Ok(ExpandedQuery::boosted(&query.text, alpha_repetitions).with_appended(&doc.text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::llm::{CotText, RelVerdict, TermList};

    struct Fixed(&'static str);

    impl LanguageModel for Fixed {
        fn judge_relevance(&self, _: &QueryRecord, _: &Document) -> Result<RelVerdict> {
            Ok(RelVerdict::from_response("no"))
        }
        fn extract_terms(&self, _: &QueryRecord, _: &Document, _: usize) -> Result<TermList> {
            Ok(TermList::default())
        }
        fn generate_cot(&self, _: &QueryRecord) -> Result<CotText> {
            Ok(CotText::new(self.0))
        }
        fn generate_passage(&self, _: &QueryRecord) -> Result<CotText> {
            Ok(CotText::new(self.0))
        }
    }

    #[test]
    fn empty_generation_leaves_boosted_query() {
        let q = QueryRecord::new("q", "capital of france");
        assert_eq!(cot_expand(&q, &Fixed(""), 2).unwrap().text_form(), "capital of france capital of france");
        assert_eq!(query2doc_expand(&q, &Fixed("  "), 1).unwrap().text_form(), "capital of france");
    }

    #[test]
    fn generation_appended_once() {
        let q = QueryRecord::new("q", "capital of france");
        let e = cot_expand(&q, &Fixed("paris is the capital"), 1).unwrap();
        assert_eq!(e.text_form(), "capital of france paris is the capital");
        let e = query2doc_expand(&q, &Fixed("paris is the capital"), 1).unwrap();
        assert_eq!(e.appended.as_deref(), Some("paris is the capital"));
    }
}

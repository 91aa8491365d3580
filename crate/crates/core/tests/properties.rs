mod common;

use std::collections::{HashMap, HashSet};

use proptest::prelude::*;
use proqe::dense::{combine_final, combine_weighted, dense_search, Similarity};
use proqe::expansion::{formulate_sparse_query, proqe_update_weights};
use proqe::gateway::MeteredGateway;
use proqe::llm::RelVerdict;
use proqe::retriever::{Retriever, ScoredDoc};
use proqe::{
    Bm25Params, Corpus, DenseParams, Embedding, InvertedIndex, ProqeParams, QueryRecord, TermWeightTable,
    Tokenizer, VectorIndex, WeightedQuery,
};

fn docs_strategy() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..15, 1..12), 1..40)
}

fn build(docs: &[Vec<usize>]) -> (InvertedIndex, Vec<(String, Vec<String>)>) {
    let vocab = common::vocab(15);
    let toks: Vec<(String, Vec<String>)> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (format!("d{i:03}"), d.iter().map(|&t| vocab[t].clone()).collect()))
        .collect();
    let corpus = Corpus::from_pairs(toks.iter().map(|(id, t)| (id.clone(), t.join(" ")))).unwrap();
    let index = InvertedIndex::build(&corpus, Tokenizer::default(), Bm25Params::default()).unwrap();
    (index, toks)
}

fn emb(v: &[f64]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn bm25_matches_exhaustive_oracle(docs in docs_strategy(), q in prop::collection::vec((0usize..15, 1u32..3), 1..4)) {
        let (index, toks) = build(&docs);
        let vocab = common::vocab(15);
        let mut weights: Vec<(String, f64)> = Vec::new();
        for (t, w) in q {
            match weights.iter_mut().find(|(x, _)| *x == vocab[t]) {
                Some(slot) => slot.1 += f64::from(w),
                None => weights.push((vocab[t].clone(), f64::from(w))),
            }
        }
        let query = WeightedQuery::from_weights("q", weights.clone());
        let got = index.search(&query, toks.len(), &HashSet::new());
        let want = common::bm25_oracle(&toks, &weights, 0.9, 0.4);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(&g.doc_id, &w.0);
            prop_assert!((g.score - w.1).abs() < 1e-9);
        }
    }

    #[test]
    fn exclusion_yields_next_unseen(docs in docs_strategy(), t in 0usize..15, skip in 0usize..5) {
        let (index, _) = build(&docs);
        let query = WeightedQuery::from_weights("q", [(common::vocab(15)[t].clone(), 1.0)]);
        let full = index.search(&query, usize::MAX >> 1, &HashSet::new());
        let exclude: HashSet<String> = full.iter().take(skip).map(|d| d.doc_id.clone()).collect();
        let next = index.search(&query, 1, &exclude);
        prop_assert_eq!(next.first().map(|d| &d.doc_id), full.get(skip).map(|d| &d.doc_id));
    }

    #[test]
    fn weight_update_equals_counting(
        updates in prop::collection::vec((prop::collection::vec(0usize..8, 0..5), any::<bool>()), 0..30),
        gamma in 0u32..3,
    ) {
        let vocab = common::vocab(8);
        let params = ProqeParams { gamma: f64::from(gamma), ..ProqeParams::default() };
        let mut table = TermWeightTable::new();
        let mut replay = Vec::new();
        for (terms, rel) in &updates {
            let mut seen = HashSet::new();
            let terms: Vec<String> = terms.iter().filter(|t| seen.insert(**t)).map(|&t| vocab[t].clone()).collect();
            proqe_update_weights(&mut table, &terms, &RelVerdict::from_response(if *rel { "yes" } else { "no" }), &params);
            replay.push((terms, *rel));
        }
        let want = common::weight_by_counting(&replay, 1.0, f64::from(gamma));
        prop_assert_eq!(table.len(), want.len());
        for (t, w) in want {
            prop_assert_eq!(table.weight(&t), Some(w));
        }
    }

    #[test]
    fn weights_monotone_with_zero_gamma(rels in prop::collection::vec(any::<bool>(), 1..20)) {
        let mut table = TermWeightTable::new();
        let mut last = 0.0;
        for rel in rels {
            proqe_update_weights(&mut table, &["t".to_string()], &RelVerdict::from_response(if rel { "yes" } else { "no" }), &ProqeParams::default());
            let w = table.weight("t").unwrap();
            prop_assert!(w >= last);
            last = w;
        }
    }

    #[test]
    fn formulation_layout(
        entries in prop::collection::vec(-2.0f64..4.0, 0..8),
        alpha in 0usize..3,
    ) {
        let vocab = common::vocab(8);
        let mut table = TermWeightTable::new();
        let relevant = RelVerdict::from_response("yes");
        for (i, w) in entries.iter().enumerate() {
            let params = ProqeParams { beta: *w, ..ProqeParams::default() };
            proqe_update_weights(&mut table, &[vocab[i].clone()], &relevant, &params);
        }
        let q = QueryRecord::new("q", "base query");
        let expanded = formulate_sparse_query(&q, &table, alpha as f64);
        let mut want: Vec<String> = vec!["base query".to_string(); alpha];
        for (i, w) in entries.iter().enumerate() {
            if *w > 0.0 {
                for _ in 0..(w.floor() as usize) {
                    want.push(vocab[i].clone());
                }
            }
        }
        prop_assert_eq!(expanded.text_form(), want.join(" "));
        // Rebuilding from provenance alone gives the same text.
        let rebuilt: Vec<String> = std::iter::repeat_n("base query".to_string(), expanded.alpha_repetitions)
            .chain(expanded.provenance.iter().flat_map(|(t, n)| std::iter::repeat_n(t.clone(), *n)))
            .collect();
        prop_assert_eq!(rebuilt.join(" "), expanded.text_form());
        prop_assert_eq!(formulate_sparse_query(&q, &table, alpha as f64), expanded);
    }

    #[test]
    fn combinations_are_linear(
        x in prop::collection::vec(-1.0f64..1.0, 6),
        y in prop::collection::vec(-1.0f64..1.0, 6),
        t in prop::collection::vec(-1.0f64..1.0, 6),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        w in -2.0f64..2.0,
    ) {
        let p = DenseParams::default();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(x, y)| a * x + b * y).collect();
        let te = emb(&t);
        let f = |v: &[f64]| combine_weighted(&emb(v), &[(w, &te)], &p).unwrap();
        let g = |v: &[f64]| combine_final(&emb(v), &te, &p).unwrap();
        // Linear in the query slot once the fixed term/cot part is removed.
        let zero = vec![0.0; 6];
        for h in [&f as &dyn Fn(&[f64]) -> Embedding, &g] {
            let (fm, fx, fy, f0) = (h(&mix), h(&x), h(&y), h(&zero));
            for i in 0..6 {
                let lhs = fm[i] - f0[i];
                let rhs = a * (fx[i] - f0[i]) + b * (fy[i] - f0[i]);
                prop_assert!((lhs - rhs).abs() < 1e-9);
            }
        }
        let oracle = common::intermediate_oracle(&x, &[(w, t.clone())], 0.8, 0.2);
        let got = f(&x);
        for i in 0..6 {
            prop_assert!((got[i] - oracle[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn dense_order_invariant_under_positive_scaling(
        vecs in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..30),
        q in prop::collection::vec(-1.0f64..1.0, 4),
        c in 0.01f64..100.0,
        cosine in any::<bool>(),
    ) {
        let sim = if cosine { Similarity::Cosine } else { Similarity::Dot };
        let index = VectorIndex::from_vectors(4, sim, vecs.iter().enumerate().map(|(i, v)| (format!("v{i:02}"), emb(v)))).unwrap();
        let ids = |e: &Embedding| dense_search(&index, e, vecs.len(), &HashSet::new()).unwrap().into_iter().map(|d| d.doc_id).collect::<Vec<_>>();
        let mut oracle: Vec<(String, f64)> = vecs.iter().enumerate().map(|(i, v)| {
            (format!("v{i:02}"), if cosine { common::cosine(&q, v) } else { common::dot(&q, v) })
        }).collect();
        common::sort_ranked(&mut oracle);
        let base = ids(&emb(&q));
        // Scores equal to within rounding may swap; compare score sequences.
        let scores: Vec<f64> = base.iter().map(|id| oracle.iter().find(|(o, _)| o == id).unwrap().1).collect();
        for (s, (_, o)) in scores.iter().zip(&oracle) {
            prop_assert!((s - o).abs() < 1e-12);
        }
        let scaled = ids(&emb(&q).scaled(c));
        let scaled_scores: Vec<f64> = scaled.iter().map(|id| oracle.iter().find(|(o, _)| o == id).unwrap().1).collect();
        for (a, b) in scores.iter().zip(&scaled_scores) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

/// Returns a fixed list per query, ignoring exclusion.
struct Scripted(HashMap<u32, Vec<&'static str>>);

impl Retriever<f64> for Scripted {
    type Query = u32;

    fn retrieve(&self, q: &u32, k: usize, _: &HashSet<String>) -> proqe::Result<Vec<ScoredDoc<f64>>> {
        Ok(self.0[q]
            .iter()
            .take(k)
            .enumerate()
            .map(|(i, d)| ScoredDoc { doc_id: d.to_string(), score: -(i as f64) })
            .collect())
    }

    fn supports_exclusion(&self) -> bool {
        false
    }
}

fn scripted() -> Scripted {
    Scripted(HashMap::from([
        (0, vec!["a", "b", "c"]),
        (1, vec!["b", "c", "d"]),
        (2, vec!["e", "a"]),
        (3, vec!["f"]),
    ]))
}

proptest! {
    #[test]
    fn gateway_charge_tracks_unique_documents(
        calls in prop::collection::vec((0u32..4, 1usize..4, any::<bool>()), 1..40),
        cost in 0.0f64..2.0,
    ) {
        let script = scripted();
        let gateway = MeteredGateway::new(&script);
        let mut session = gateway.open_session("q", cost).unwrap();
        let mut seen: HashSet<String> = HashSet::new();
        for (q, k, top_new) in calls {
            if top_new {
                let got = gateway.retrieve_top_new::<f64>(&mut session, &q, k).unwrap();
                let want = script.0[&q].iter().find(|d| !seen.contains(**d));
                prop_assert_eq!(got.as_ref().map(|d| d.doc_id.as_str()), want.copied());
                if let Some(d) = got {
                    seen.insert(d.doc_id);
                }
            } else {
                let before = seen.len();
                let r = gateway.retrieve::<f64>(&mut session, &q, k).unwrap();
                seen.extend(r.docs.iter().map(|d| d.doc_id.clone()));
                prop_assert_eq!(r.newly_charged, seen.len() - before);
                let again = gateway.retrieve::<f64>(&mut session, &q, k).unwrap();
                prop_assert_eq!(again.newly_charged, 0);
            }
            prop_assert_eq!(session.charge(), cost * seen.len() as f64);
        }
    }
}

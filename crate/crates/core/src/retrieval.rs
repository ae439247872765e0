//! Local lexical retrieval over a document corpus.
//!
//! The verifier's search tool is backed by a BM25 inverted index:
//!
//! ```text
//! score(D,Q) = Σ idf(q) · tf(q,D)·(k1+1) / (tf(q,D) + k1·(1 − b + b·|D|/avgdl))
//! idf(q)     = ln(1 + (N − df(q) + 0.5)/(df(q) + 0.5))
//! ```
//!
//! Tokenization is lowercase, split on non-alphanumerics, no stemming.
//! Results are fully deterministic: ranked by descending score, ties broken
//! by ascending document id. An optional remote backend with the same
//! contract can be substituted via [`RetrievalBackend`].

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of documents returned per search.
pub const DEFAULT_TOP_K: usize = 3;

/// Rendered in place of hits when a search matches nothing.
pub const NO_RESULTS_SENTINEL: &str = "No results found.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalHit {
    pub doc: Document,
    pub score: f64,
    /// 1-based position in the ranking.
    pub rank: usize,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("retrieval backend failure: {0}")]
    Backend(String),
}

/// BM25 scoring parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Lowercase alphanumeric tokens; everything else separates.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Immutable inverted index. Internal structures are sorted, so building
/// from any permutation of the same corpus yields identical search results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchIndex {
    /// Documents sorted by ascending id; postings refer to positions here.
    docs: Vec<Document>,
    /// term → (doc position, term frequency), positions ascending.
    postings: BTreeMap<String, Vec<(usize, u32)>>,
    doc_lengths: Vec<usize>,
    avg_doc_length: f64,
    params: Bm25Params,
}

impl SearchIndex {
    pub fn doc_count(&self) -> usize {
        self.docs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.docs.len() as f64;
        (1.0 + (n - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
    }

    /// BM25 contribution of one term occurring `tf` times in a document of
    /// `len` tokens.
    fn term_score(&self, idf: f64, tf: u32, len: usize) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - self.params.b + self.params.b * (len as f64) / self.avg_doc_length;
        idf * tf * (self.params.k1 + 1.0) / (tf + self.params.k1 * norm)
    }
}

/// Builds an index with the given scoring parameters.
pub fn build_index_with(
    docs: impl IntoIterator<Item = Document>,
    params: Bm25Params,
) -> Result<SearchIndex, RetrievalError> {
    let mut docs: Vec<Document> = docs.into_iter().collect();
    if docs.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    docs.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in docs.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(RetrievalError::DuplicateId(pair[0].id.clone()));
        }
    }

    let mut postings: BTreeMap<String, Vec<(usize, u32)>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(docs.len());
    for (pos, doc) in docs.iter().enumerate() {
        let tokens = tokenize(&format!("{} {}", doc.title, doc.text));
        doc_lengths.push(tokens.len());
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0) += 1;
        }
        for (token, tf) in counts {
            postings.entry(token).or_default().push((pos, tf));
        }
    }
    let avg_doc_length = doc_lengths.iter().sum::<usize>() as f64 / docs.len() as f64;

    Ok(SearchIndex {
        docs,
        postings,
        doc_lengths,
        avg_doc_length,
        params,
    })
}

/// Builds an index with default BM25 parameters.
pub fn build_index(
    docs: impl IntoIterator<Item = Document>,
) -> Result<SearchIndex, RetrievalError> {
    build_index_with(docs, Bm25Params::default())
}

/// Top-k lexical search. Only documents sharing at least one term with the
/// query are hits; fewer than `k` may be returned.
pub fn search(index: &SearchIndex, query: &str, k: usize) -> Vec<RetrievalHit> {
    assert!(k >= 1, "k must be at least 1");
    let terms = tokenize(query);

    // Accumulate per-document scores term by term, in query order, so the
    // floating-point summation order is reproducible.
    let mut scores: BTreeMap<usize, f64> = BTreeMap::new();
    for term in &terms {
        if let Some(posting) = index.postings.get(term) {
            let idf = index.idf(posting.len());
            for &(pos, tf) in posting {
                let contribution = index.term_score(idf, tf, index.doc_lengths[pos]);
                match scores.entry(pos) {
                    Entry::Vacant(e) => {
                        e.insert(contribution);
                    }
                    Entry::Occupied(mut e) => {
                        *e.get_mut() += contribution;
                    }
                }
            }
        }
    }

    let mut ranked: Vec<(usize, f64)> = scores.into_iter().collect();
    // Descending score; ascending doc id (== ascending position) on ties.
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    ranked.truncate(k);

    ranked
        .into_iter()
        .enumerate()
        .map(|(i, (pos, score))| RetrievalHit {
            doc: index.docs[pos].clone(),
            score,
            rank: i + 1,
        })
        .collect()
}

/// Renders hits as the numbered block inserted between information tags.
pub fn format_information(hits: &[RetrievalHit]) -> String {
    if hits.is_empty() {
        return NO_RESULTS_SENTINEL.to_string();
    }
    hits.iter()
        .map(|hit| format!("[{}] {}: {}", hit.rank, hit.doc.title, hit.doc.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Truncates each hit's text to at most `max_chars` characters (on a char
/// boundary) before formatting.
pub fn truncate_hits(hits: &mut [RetrievalHit], max_chars: usize) {
    for hit in hits {
        if hit.doc.text.chars().count() > max_chars {
            hit.doc.text = hit.doc.text.chars().take(max_chars).collect();
        }
    }
}

/// A pluggable retrieval backend: the in-process lexical index or a remote
/// search endpoint speaking the JSON stub protocol
/// (`POST {"query", "k"}` → `{"hits": [{"id","title","text","score"}]}`).
pub enum RetrievalBackend {
    Lexical(SearchIndex),
    Remote(RemoteSearchConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteSearchConfig {
    pub endpoint: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    30
}

#[derive(Serialize)]
struct RemoteQuery<'a> {
    query: &'a str,
    k: usize,
}

#[derive(Deserialize)]
struct RemoteResponse {
    hits: Vec<RemoteHit>,
}

#[derive(Deserialize)]
struct RemoteHit {
    id: String,
    title: String,
    text: String,
    score: f64,
}

impl RetrievalBackend {
    /// Same contract for both backends: at most `k` hits, ranked.
    pub fn retrieve(&self, query: &str, k: usize) -> Result<Vec<RetrievalHit>, RetrievalError> {
        match self {
            RetrievalBackend::Lexical(index) => Ok(search(index, query, k)),
            RetrievalBackend::Remote(config) => remote_search(config, query, k),
        }
    }
}

fn remote_search(
    config: &RemoteSearchConfig,
    query: &str,
    k: usize,
) -> Result<Vec<RetrievalHit>, RetrievalError> {
    let agent = crate::httpclient::agent(config.timeout_secs);
    let response: RemoteResponse = agent
        .post(&config.endpoint)
        .send_json(&RemoteQuery { query, k })
        .map_err(|e| RetrievalError::Backend(e.to_string()))?
        .body_mut()
        .read_json()
        .map_err(|e| RetrievalError::Backend(e.to_string()))?;

    Ok(response
        .hits
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, hit)| RetrievalHit {
            doc: Document {
                id: hit.id,
                title: hit.title,
                text: hit.text,
            },
            score: hit.score,
            rank: i + 1,
        })
        .collect())
}

/// Reference scorer for tests: scores every document by scanning its tokens
/// directly, no inverted index involved. Kept in the library so both the
/// test suite and examples can cross-check rankings.
pub fn brute_force_search(
    docs: &[Document],
    params: Bm25Params,
    query: &str,
    k: usize,
) -> Vec<RetrievalHit> {
    let mut sorted: Vec<Document> = docs.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let token_lists: Vec<Vec<String>> = sorted
        .iter()
        .map(|d| tokenize(&format!("{} {}", d.title, d.text)))
        .collect();
    let n = sorted.len() as f64;
    let avgdl = token_lists.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms = tokenize(query);

    let mut scored: Vec<(usize, f64)> = Vec::new();
    for (pos, tokens) in token_lists.iter().enumerate() {
        let mut score = 0.0;
        let mut matched = false;
        for term in &terms {
            let tf = tokens.iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let df = token_lists
                .iter()
                .filter(|list| list.contains(term))
                .count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = 1.0 - params.b + params.b * (tokens.len() as f64) / avgdl;
            score += idf * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
            matched = true;
        }
        if matched {
            scored.push((pos, score));
        }
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(k);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (pos, score))| RetrievalHit {
            doc: sorted[pos].clone(),
            score,
            rank: i + 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samples;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn doc(id: &str, title: &str, text: &str) -> Document {
        Document {
            id: id.into(),
            title: title.into(),
            text: text.into(),
        }
    }

    #[test]
    fn index_statistics() {
        let index = build_index(vec![
            doc("a", "one", "alpha beta"),
            doc("b", "two", "gamma"),
            doc("c", "three", "delta epsilon zeta"),
        ])
        .unwrap();
        assert_eq!(index.doc_count(), 3);
        // Token counts include titles: 3 + 2 + 4 = 9.
        assert!((index.avg_doc_length() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(
            build_index(Vec::new()),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = build_index(vec![doc("a", "x", "y"), doc("a", "z", "w")]).unwrap_err();
        assert!(matches!(err, RetrievalError::DuplicateId(id) if id == "a"));
    }

    #[test]
    fn shuffled_corpus_searches_identically() {
        let docs = samples::mini_corpus();
        let index = build_index(docs.clone()).unwrap();
        let mut shuffled = docs;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        let reindex = build_index(shuffled).unwrap();
        for query in ["cisplatin ototoxicity", "microtubule taxane", "dna"] {
            let a = search(&index, query, 5);
            let b = search(&reindex, query, 5);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn both_term_doc_ranks_first() {
        let docs = samples::mini_corpus();
        let index = build_index(docs.clone()).unwrap();
        let hits = search(&index, "cisplatin ototoxicity", 3);
        // Exactly one sample document mentions both terms.
        assert_eq!(hits[0].doc.id, "pharm-cisplatin");
        // Brute-force oracle agrees on the whole ranking.
        let oracle = brute_force_search(&docs, Bm25Params::default(), "cisplatin ototoxicity", 3);
        let ids: Vec<_> = hits.iter().map(|h| &h.doc.id).collect();
        let oracle_ids: Vec<_> = oracle.iter().map(|h| &h.doc.id).collect();
        assert_eq!(ids, oracle_ids);
    }

    #[test]
    fn unmatched_query_returns_empty() {
        let index = build_index(samples::mini_corpus()).unwrap();
        assert!(search(&index, "zzz qqq", 3).is_empty());
    }

    #[test]
    fn information_formatting() {
        let hits = vec![
            RetrievalHit {
                doc: doc("a", "alpha", "first text"),
                score: 2.0,
                rank: 1,
            },
            RetrievalHit {
                doc: doc("b", "beta", "second text"),
                score: 1.0,
                rank: 2,
            },
        ];
        assert_eq!(
            format_information(&hits),
            "[1] alpha: first text\n[2] beta: second text"
        );
        assert_eq!(format_information(&[]), NO_RESULTS_SENTINEL);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        let mut hits = vec![RetrievalHit {
            doc: doc("a", "t", "αβγδε"),
            score: 1.0,
            rank: 1,
        }];
        truncate_hits(&mut hits, 3);
        assert_eq!(hits[0].doc.text, "αβγ");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hit_list() -> impl Strategy<Value = Vec<RetrievalHit>> {
            // Tag-free, colon-free titles and texts; ranks are positional.
            proptest::collection::vec(("[a-z]{1,8}", "[a-z0-9 ]{0,20}"), 0..4).prop_map(|entries| {
                entries
                    .into_iter()
                    .enumerate()
                    .map(|(i, (title, text))| RetrievalHit {
                        doc: Document {
                            id: format!("d{i}"),
                            title,
                            text,
                        },
                        score: 1.0 / (i + 1) as f64,
                        rank: i + 1,
                    })
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn formatting_is_injective(a in hit_list(), b in hit_list()) {
                let titles_texts = |hits: &[RetrievalHit]| -> Vec<(String, String)> {
                    hits.iter().map(|h| (h.doc.title.clone(), h.doc.text.clone())).collect()
                };
                if titles_texts(&a) != titles_texts(&b) {
                    prop_assert_ne!(format_information(&a), format_information(&b));
                }
            }
        }
    }

    #[test]
    fn disjoint_doc_keeps_top_hit_stable() {
        // Adding a document with disjoint vocabulary and mean length must not
        // change which document ranks first for an unrelated query.
        let base = vec![
            doc("a", "alpha", "cisplatin causes ototoxicity"),
            doc("b", "beta", "taxanes stabilize microtubules strongly"),
        ];
        let index = build_index(base.clone()).unwrap();
        let before = search(&index, "cisplatin", 1);

        let mut extended = base;
        extended.push(doc("c", "gamma", "unrelated zebra words here"));
        let extended_index = build_index(extended).unwrap();
        let after = search(&extended_index, "cisplatin", 1);
        assert_eq!(before[0].doc.id, after[0].doc.id);
    }
}

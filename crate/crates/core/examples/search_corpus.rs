//! Build a lexical index and serve formatted top-k snippets.
//!
//! Run with: cargo run --example search_corpus

use veriseek::retrieval::{
    brute_force_search, build_index, format_information, search, Bm25Params,
};
use veriseek::samples;

fn main() {
    let corpus = samples::mini_corpus();
    let index = build_index(corpus.clone()).expect("corpus is well-formed");
    println!(
        "indexed {} documents, average length {:.2} tokens",
        index.doc_count(),
        index.avg_doc_length()
    );

    for query in [
        "cisplatin ototoxicity",
        "paclitaxel microtubules",
        "quantum chromodynamics",
    ] {
        let hits = search(&index, query, 3);
        println!("\nquery: {query:?} -> {} hit(s)", hits.len());
        for hit in &hits {
            println!("  #{} {} (score {:.4})", hit.rank, hit.doc.id, hit.score);
        }
        // The exhaustive scorer agrees with the inverted index.
        let oracle = brute_force_search(&corpus, Bm25Params::default(), query, 3);
        let agree = oracle
            .iter()
            .map(|h| &h.doc.id)
            .eq(hits.iter().map(|h| &h.doc.id));
        println!("  brute-force agreement: {agree}");

        println!(
            "  information block:\n---\n{}\n---",
            format_information(&hits)
        );
    }
}

//! Question/suggestion statistics over a corpus.
//!
//! cargo run --example corpus_stats [-- <corpus> <format>]

use std::path::PathBuf;

use coq_forge::corpus::{corpus_stats, read_corpus, CorpusFormat};
use coq_forge::metrics::RuleClassifier;

fn main() -> coq_forge::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_meddg.json"));
    let format: CorpusFormat = args.next().as_deref().unwrap_or("meddg").parse()?;

    let stats = corpus_stats(read_corpus(&input, format)?, &RuleClassifier::default());
    println!("{}", serde_json::to_string_pretty(&stats).unwrap());
    Ok(())
}

//! Reads the bundled MedDG-style fixture and writes it as native JSONL.
//!
//! cargo run --example ingest_meddg [-- <input.json> <format>]

use std::path::PathBuf;

use coq_forge::corpus::{read_corpus, CorpusFormat};
use coq_forge::pipeline::run_ingest;

fn main() -> coq_forge::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_meddg.json"));
    let format: CorpusFormat = args.next().as_deref().unwrap_or("meddg").parse()?;

    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("corpus.jsonl");
    let summary = run_ingest(&input, format, &out)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());

    let first = read_corpus(&out, CorpusFormat::Native)?.next();
    if let Some(conv) = first {
        println!("\nfirst conversation `{}` ({}):", conv.id(), conv.source());
        for u in conv.utterances() {
            println!("  {}{}", u.speaker().prefix(), u.text());
        }
    }
    Ok(())
}

//! Rewrites the bundled fixtures from their seeded generators.
//!
//! cargo run --example regenerate_fixtures

use std::path::Path;

use coq_forge::corpus::write_corpus;
use coq_forge::synth;

fn main() -> coq_forge::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).expect("fixtures directory");

    let demo = dir.join("demo_meddg.json");
    std::fs::write(&demo, synth::demo_fixture_text(synth::DEMO_SEED)).expect("write demo fixture");
    println!("wrote {}", demo.display());

    let noise = dir.join("noise_exemplars.jsonl");
    let n = write_corpus(synth::noise_exemplar_corpus(synth::DEMO_SEED), &noise)?;
    println!("wrote {} ({n} conversations)", noise.display());
    Ok(())
}

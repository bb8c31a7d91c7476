//! Cleans the noise exemplar fixture with the default rules and shows what
//! each rule removed.
//!
//! cargo run --example clean_noise

use std::path::Path;

use coq_forge::cleaner::{Cleaner, RuleSet};
use coq_forge::corpus::{read_corpus, CorpusFormat};
use coq_forge::parallel::Workers;
use coq_forge::synth;

fn main() -> coq_forge::Result<()> {
    let cleaner = Cleaner::new(RuleSet::default_rules());
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/noise_exemplars.jsonl");

    for conv in read_corpus(&fixture, CorpusFormat::Native)?.take(9) {
        let exemplar = &conv.meta()["exemplar"];
        let Some(at) = conv.utterances().iter().position(|u| u.text().contains(exemplar)) else {
            continue;
        };
        let out = cleaner.clean_conversation(&conv);
        let after = match &out.conversation {
            Some(c) if c.utterances().len() == conv.utterances().len() => c.utterances()[at].text(),
            Some(_) => "(utterance dropped)",
            None => "(conversation dropped)",
        };
        println!("[{}]", conv.meta()["category"]);
        println!("  before: {}", conv.utterances()[at].text());
        println!("  after:  {after}");
    }

    let (_, report) = cleaner.clean_batch(synth::quality_corpus(7, 100, 11, 7), &Workers::sequential());
    println!(
        "\nsynthetic corpus: excellent rate {:.2} -> {:.2}",
        report.excellent_rate_before, report.excellent_rate_after
    );
    Ok(())
}

//! Polishes doctor suggestions through a local stub completion server.
//! Questions are left untouched and never sent.
//!
//! cargo run --example polish_with_stub

use std::path::Path;
use std::sync::Arc;

use coq_forge::corpus::{read_corpus, CorpusFormat};
use coq_forge::metrics::RuleClassifier;
use coq_forge::polisher::{
    ChatClient, LlmClientConfig, PolishCache, PolishPolicy, Polisher, PromptTemplate,
};
use coq_forge::stub::{StubBehavior, StubServer};

fn main() -> coq_forge::Result<()> {
    let stub = StubServer::start(StubBehavior::Digest("【润色】".into()))?;
    let config = LlmClientConfig {
        endpoint: stub.endpoint(),
        requests_per_minute: 0.0,
        ..Default::default()
    };
    let polisher = Polisher::new(
        ChatClient::with_api_key(config, "stub"),
        PolishCache::in_memory(),
        PromptTemplate::default(),
        Arc::new(RuleClassifier::default()),
        PolishPolicy::AllSuggestions,
    );

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_meddg.json");
    let convs: Vec<_> = read_corpus(fixture, CorpusFormat::Meddg)?.take(2).collect();
    for conv in &convs {
        let polished = polisher.polish_conversation(conv).expect("stub never fails");
        println!("{} ({:?})", conv.id(), polished.status);
        for (a, b) in conv.utterances().iter().zip(polished.conversation.utterances()) {
            if a.text() == b.text() {
                println!("  = {}{}", a.speaker().prefix(), a.text());
            } else {
                println!("  - {}{}", a.speaker().prefix(), a.text());
                println!("  + {}{}", b.speaker().prefix(), b.text());
            }
        }
    }
    println!("\n{} requests sent", stub.request_count());
    if let Some(prompt) = stub.prompts().first() {
        println!("first prompt:\n{prompt}");
    }
    Ok(())
}

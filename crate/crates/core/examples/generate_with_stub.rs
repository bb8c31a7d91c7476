//! Generates predictions for serialized contexts against a stub server
//! using the default sampling settings.
//!
//! cargo run --example generate_with_stub

use coq_forge::metrics::{generate_predictions, ContextRecord, GenerationConfig};
use coq_forge::polisher::{ChatClient, LlmClientConfig};
use coq_forge::stub::{StubBehavior, StubServer};

fn main() -> coq_forge::Result<()> {
    let stub = StubServer::start(StubBehavior::Digest("医生回复：".into()))?;
    let client = ChatClient::with_api_key(
        LlmClientConfig {
            endpoint: stub.endpoint(),
            requests_per_minute: 0.0,
            ..Default::default()
        },
        "stub",
    );
    let contexts = [
        "病人：嗓子疼三天了\n医生：",
        "病人：头晕\n医生：有没有高血压？\n病人：没有\n医生：",
    ]
    .into_iter()
    .enumerate()
    .map(|(i, input)| Ok(ContextRecord { id: format!("c{i}"), input: input.into() }));

    let report = generate_predictions(&client, contexts, &GenerationConfig::default(), |p| {
        println!("{}", serde_json::to_string(&p).unwrap());
        Ok(())
    })?;
    println!("{}", serde_json::to_string(&report).unwrap());
    println!("request body: {}", stub.requests()[0].body);
    Ok(())
}

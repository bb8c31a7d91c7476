//! Full ingest → clean → polish → serialize → stats run on the demo
//! fixture, polishing through a local stub server.
//!
//! cargo run --example pipeline_demo [-- <output dir>]

use std::path::{Path, PathBuf};

use coq_forge::pipeline::{run_pipeline, ClientSource, PipelineConfig};
use coq_forge::polisher::LlmClientConfig;
use coq_forge::stub::{StubBehavior, StubServer};
use coq_forge::synth;

fn main() {
    // The stub accepts any key.
    std::env::set_var("COQ_FORGE_API_KEY", "stub");
    let stub = StubServer::start(StubBehavior::Digest("建议：".into())).expect("stub server");

    let tmp = tempfile::tempdir().expect("temp dir");
    let output_dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| tmp.path().join("out"));
    let config = PipelineConfig {
        input: Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_meddg.json"),
        format: "meddg".into(),
        client: Some(ClientSource::Inline(LlmClientConfig {
            endpoint: stub.endpoint(),
            requests_per_minute: 0.0,
            ..Default::default()
        })),
        output_dir: output_dir.clone(),
        seed: synth::DEMO_SEED,
        ..Default::default()
    };

    match run_pipeline(&config) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary.stats).unwrap());
            println!(
                "{} train samples, {} polish requests, outputs in {}",
                summary.serialize.samples,
                stub.request_count(),
                output_dir.display()
            );
        }
        Err(failure) => {
            eprintln!("{failure}");
            std::process::exit(failure.error.exit_code());
        }
    }
}

//! Streams a synthetic corpus through clean + serialize + stats without
//! touching disk and reports throughput.
//!
//! cargo run --release --example scale_stream [-- <conversations>]

use std::time::Instant;

use coq_forge::cleaner::{Cleaner, RuleSet};
use coq_forge::corpus::StatsAccumulator;
use coq_forge::metrics::RuleClassifier;
use coq_forge::parallel::Workers;
use coq_forge::serializer::Serializer;
use coq_forge::synth;

fn main() -> coq_forge::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let cleaner = Cleaner::new(RuleSet::default_rules());
    let serializer = Serializer::default();
    let classifier = RuleClassifier::default();
    let mut stats = StatsAccumulator::default();
    let mut samples = 0usize;

    let start = Instant::now();
    let report = cleaner.clean_stream(synth::scale_stream(42, n), &Workers::new(None)?, |conv| {
        samples += serializer.samples(&conv).0.len();
        stats.add(&conv, &classifier);
        Ok(())
    })?;
    let secs = start.elapsed().as_secs_f64();

    println!(
        "{n} conversations in {secs:.2}s ({:.0}/s): kept {}, dropped {}, {samples} samples",
        n as f64 / secs,
        report.conversations_kept,
        report.conversations_dropped
    );
    println!("{}", serde_json::to_string(&stats.finish()).unwrap());
    Ok(())
}

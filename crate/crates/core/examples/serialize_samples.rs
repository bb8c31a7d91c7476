//! Expands one conversation into fine-tuning samples, first with the
//! default budget and then with a tight one to show front truncation.
//!
//! cargo run --example serialize_samples

use coq_forge::corpus::{Conversation, Speaker};
use coq_forge::serializer::{parse_input, ExpansionPolicy, LengthBudget, Serializer};

fn main() -> coq_forge::Result<()> {
    let conv = Conversation::assemble(
        "demo",
        "example",
        [
            (Speaker::Patient, "最近胃疼，吃完饭更明显"),
            (Speaker::Doctor, "疼了多久了？"),
            (Speaker::Patient, "大概两周"),
            (Speaker::Doctor, "有没有反酸、烧心？"),
            (Speaker::Patient, "有时候会反酸"),
            (Speaker::Doctor, "建议先做个胃镜，饮食清淡，少吃辛辣。"),
        ],
        Default::default(),
    )
    .expect("valid conversation");

    for (label, budget) in [
        ("default budget", LengthBudget::default()),
        ("tight budget (30 / 8)", LengthBudget::new(30, 8)?),
    ] {
        println!("== {label}");
        let (samples, report) = Serializer::new(budget, ExpansionPolicy::AllDoctorTurns).samples(&conv);
        for s in &samples {
            println!("{}", serde_json::json!({"input": s.input, "target": s.target}));
            println!("  parses back to {} utterances", parse_input(&s.input)?.len());
        }
        println!("{}\n", serde_json::to_string(&report).unwrap());
    }
    Ok(())
}

//! Sentence-level BLEU/ROUGE, the PQA confusion, and a full file-based
//! evaluation producing the results table.
//!
//! cargo run --example evaluate_metrics

use std::fs;

use coq_forge::corpus::AnswerKind;
use coq_forge::metrics::{
    bleu, classify_answer, evaluate, pqa, rouge, BleuOptions, EvalOptions, PqaConfusion,
    PqaVariant, Tokenizer,
};
use coq_forge::parallel::Workers;

const PAIRS: [(&str, &str); 4] = [
    ("请问您咳嗽多久了？", "咳嗽有多长时间了？"),
    ("建议多喝水，注意休息。", "多喝水，好好休息。"),
    ("建议去医院做个检查。", "发烧吗？"),
    ("有没有发烧？", "有发烧的情况吗？"),
];

fn main() -> coq_forge::Result<()> {
    let tok = Tokenizer::CharLevel;
    let mut conf = PqaConfusion::default();
    for (hyp, reference) in PAIRS {
        let (h, r) = (tok.tokenize(hyp), tok.tokenize(reference));
        let b = bleu(&h, &r, &BleuOptions::default());
        let rg = rouge(&h, &r);
        println!(
            "{hyp} | {reference}\n  BLEU-1..4 {:.3?}  R-1 F {:.3}  R-L F {:.3}",
            b.bleu, rg.rouge_1.f1, rg.rouge_l.f1
        );
        conf.record(classify_answer(reference), classify_answer(hyp));
    }
    let score = pqa(&conf, PqaVariant::PaperVerbatim);
    println!("\n{conf:?}\nPQA {:.4} (P {:.4}, R {:.4})", score.pqa, score.precision, score.recall);
    assert_eq!(classify_answer("有没有发烧？"), AnswerKind::Question);

    let dir = tempfile::tempdir().expect("temp dir");
    let (pred, refs) = (dir.path().join("pred.jsonl"), dir.path().join("ref.jsonl"));
    let line = |id: usize, key: &str, text: &str| serde_json::json!({"id": id.to_string(), key: text}).to_string();
    let p: Vec<_> = PAIRS.iter().enumerate().map(|(i, (h, _))| line(i, "prediction", h)).collect();
    let r: Vec<_> = PAIRS.iter().enumerate().map(|(i, (_, t))| line(i, "target", t)).collect();
    fs::write(&pred, p.join("\n")).expect("write predictions");
    fs::write(&refs, r.join("\n")).expect("write references");

    let opts = EvalOptions {
        dataset: "toy".into(),
        model: "example".into(),
        ..Default::default()
    };
    let outcome = evaluate(&pred, &refs, &opts, &Workers::sequential())?;
    println!("\n{}", outcome.report.to_table());
    Ok(())
}

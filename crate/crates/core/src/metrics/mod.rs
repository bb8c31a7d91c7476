//! Evaluation: tokenization, BLEU, ROUGE, answer classification, PQA and
//! report assembly, plus prediction generation against a model endpoint.

mod bleu;
mod classify;
mod eval;
mod generate;
mod pqa;
mod rouge;
mod tokenize;

pub use bleu::{bleu, corpus_bleu, BleuMode, BleuOptions, BleuScore, BleuStats, MAX_ORDER};
pub use classify::{
    classifier_by_name, classify_answer, AnswerClassifier, PunctuationClassifier, RuleClassifier,
    DEFAULT_INTERROGATIVES,
};
pub use eval::{evaluate, Conventions, EvalOptions, EvalOutcome, EvalReport, Evaluator};
pub use generate::{
    generate_predictions, read_contexts, ContextRecord, GenerateReport, GenerationConfig,
    Prediction, PredictionWriter,
};
pub use pqa::{pqa, PqaConfusion, PqaScore, PqaVariant};
pub use rouge::{lcs_len, rouge, rouge_l, rouge_n, PrfScore, RougeScore};
pub use tokenize::Tokenizer;

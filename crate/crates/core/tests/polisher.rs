use std::path::Path;
use std::sync::Arc;

use coq_forge::corpus::{read_corpus, AnswerKind, Conversation, CorpusFormat, Speaker};
use coq_forge::metrics::{
    classify_answer, generate_predictions, ContextRecord, GenerationConfig, RuleClassifier,
};
use coq_forge::pipeline::{checkpoint_path, run_polish, CorpusWriter};
use coq_forge::polisher::{
    ChatClient, LlmClientConfig, PolishCache, PolishPolicy, PolishStatus, Polisher, PromptTemplate,
};
use coq_forge::stub::{StubBehavior, StubServer};

fn demo(n: usize) -> Vec<Conversation> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo_meddg.json");
    read_corpus(path, CorpusFormat::Meddg).unwrap().take(n).collect()
}

fn config(endpoint: &str) -> LlmClientConfig {
    LlmClientConfig {
        endpoint: endpoint.to_string(),
        requests_per_minute: 0.0,
        retry_backoff_ms: 1,
        max_retries: 2,
        timeout_secs: 5.0,
        ..Default::default()
    }
}

fn polisher(config: LlmClientConfig, cache: PolishCache) -> Polisher {
    Polisher::new(
        ChatClient::with_api_key(config, "test-key"),
        cache,
        PromptTemplate::default(),
        Arc::new(RuleClassifier::default()),
        PolishPolicy::AllSuggestions,
    )
}

fn suggestions(convs: &[Conversation]) -> usize {
    convs
        .iter()
        .flat_map(|c| c.doctor_turns())
        .filter(|(_, u)| classify_answer(u.text()) == AnswerKind::Suggestion)
        .count()
}

fn polish_all(p: &Polisher, convs: &[Conversation]) -> Vec<Conversation> {
    let mut out = Vec::new();
    p.polish_corpus(convs.to_vec(), None, |c| {
        out.push(c.conversation);
        Ok(())
    })
    .unwrap();
    out
}

#[test]
fn questions_are_never_sent_or_changed() {
    let stub = StubServer::start(StubBehavior::Digest("润色：".into())).unwrap();
    let convs = demo(12);
    let p = polisher(config(&stub.endpoint()), PolishCache::in_memory());
    let out = polish_all(&p, &convs);

    assert_eq!(stub.request_count(), suggestions(&convs));
    for (before, after) in convs.iter().zip(&out) {
        assert_eq!(before.id(), after.id());
        for (b, a) in before.utterances().iter().zip(after.utterances()) {
            let is_question =
                b.speaker() == Speaker::Doctor && classify_answer(b.text()) == AnswerKind::Question;
            if b.speaker() == Speaker::Patient || is_question {
                assert_eq!(a.text().as_bytes(), b.text().as_bytes());
            } else {
                assert!(a.text().starts_with("润色："), "{}", a.text());
            }
        }
    }
    for prompt in stub.prompts() {
        assert!(prompt.contains("对话历史"));
    }
}

#[test]
fn cache_prevents_repeat_requests() {
    let dir = tempfile::tempdir().unwrap();
    let stub = StubServer::start(StubBehavior::Digest("p:".into())).unwrap();
    let convs = demo(8);
    let first = polish_all(&polisher(config(&stub.endpoint()), PolishCache::open(dir.path()).unwrap()), &convs);
    let sent = stub.request_count();
    assert_eq!(sent, suggestions(&convs));

    // A fresh process with the same cache directory.
    let p = polisher(config(&stub.endpoint()), PolishCache::open(dir.path()).unwrap());
    let mut second = Vec::new();
    let report = p
        .polish_corpus(convs.clone(), None, |c| {
            second.push(c.conversation);
            Ok(())
        })
        .unwrap();
    assert_eq!(stub.request_count(), sent);
    assert_eq!(second, first);
    assert_eq!(report.cache_hits, report.polished_turns);
}

#[test]
fn observed_rate_stays_under_ceiling() {
    let stub = StubServer::start(StubBehavior::Echo).unwrap();
    let rpm = 1200.0;
    let cfg = LlmClientConfig {
        requests_per_minute: rpm,
        max_in_flight: 4,
        ..config(&stub.endpoint())
    };
    let convs = demo(3);
    polish_all(&polisher(cfg, PolishCache::in_memory()), &convs);
    let mut times: Vec<_> = stub.requests().iter().map(|r| r.received_at).collect();
    times.sort();
    assert!(times.len() >= 10);
    let span = (*times.last().unwrap() - times[0]).as_secs_f64();
    let observed = (times.len() - 1) as f64 / span * 60.0;
    assert!(observed <= rpm * 1.05, "observed {observed:.1} rpm");
}

#[test]
fn empty_completion_keeps_original() {
    let stub = StubServer::start(StubBehavior::Empty).unwrap();
    let convs = demo(2);
    let p = polisher(config(&stub.endpoint()), PolishCache::in_memory());
    let c = p.polish_conversation(&convs[0]).unwrap();
    assert_eq!(c.conversation, convs[0]);
    assert_eq!(c.status, PolishStatus::Unpolished);
}

#[test]
fn unreachable_endpoint_degrades_to_original_text() {
    // Bind and drop to get a port with nothing listening.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = LlmClientConfig {
        timeout_secs: 1.0,
        max_retries: 1,
        ..config(&format!("http://127.0.0.1:{port}/v1/chat/completions"))
    };
    let convs = demo(2);
    let p = polisher(cfg, PolishCache::in_memory());
    let mut out = Vec::new();
    let report = p
        .polish_corpus(convs.clone(), None, |c| {
            out.push(c.conversation);
            Ok(())
        })
        .unwrap();
    assert_eq!(out, convs);
    assert_eq!(report.failed_turns as usize, suggestions(&convs));
    assert_eq!(report.unpolished_conversations, 2);
}

#[test]
fn fatal_error_checkpoints_and_resume_completes() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let output = dir.path().join("out.jsonl");
    let cache_dir = dir.path().join("cache");
    let convs = demo(10);
    let mut w = CorpusWriter::create(&input).unwrap();
    convs.iter().for_each(|c| w.write(c).unwrap());
    w.finish().unwrap();

    let ok = 12;
    let failing = StubServer::start(StubBehavior::Switch {
        after: ok,
        first: Box::new(StubBehavior::Digest("p:".into())),
        then: Box::new(StubBehavior::Status(401)),
    })
    .unwrap();
    let serial = |endpoint: &str| LlmClientConfig {
        max_in_flight: 1,
        ..config(endpoint)
    };
    let abort = run_polish(
        &input,
        &output,
        &polisher(serial(&failing.endpoint()), PolishCache::open(&cache_dir).unwrap()),
        false,
    )
    .unwrap_err();
    assert_eq!(abort.error.exit_code(), 3);
    let done = abort.report.conversations as usize;
    assert!(done > 0 && done < convs.len());
    assert_eq!(abort.checkpoint.as_deref(), Some(convs[done - 1].id()));
    assert!(checkpoint_path(&output).exists());

    let healthy = StubServer::start(StubBehavior::Digest("p:".into())).unwrap();
    let p = polisher(serial(&healthy.endpoint()), PolishCache::open(&cache_dir).unwrap());
    let report = run_polish(&input, &output, &p, true).unwrap();
    assert_eq!(report.resumed_skipped as usize, done);
    assert_eq!(healthy.request_count(), suggestions(&convs) - ok);
    assert!(!checkpoint_path(&output).exists());

    let reference = StubServer::start(StubBehavior::Digest("p:".into())).unwrap();
    let expected = polish_all(&polisher(config(&reference.endpoint()), PolishCache::in_memory()), &convs);
    let written: Vec<Conversation> = read_corpus(&output, CorpusFormat::Native).unwrap().collect();
    assert_eq!(written, expected);
}

#[test]
fn generation_requests_carry_sampling_defaults() {
    let stub = StubServer::start(StubBehavior::Echo).unwrap();
    let client = ChatClient::with_api_key(config(&stub.endpoint()), "k");
    let contexts = (0..5).map(|i| {
        Ok(ContextRecord {
            id: format!("s{i}"),
            input: format!("病人：咳嗽{i}天\n医生："),
        })
    });
    let mut preds = Vec::new();
    let report = generate_predictions(&client, contexts, &GenerationConfig::default(), |p| {
        preds.push(p);
        Ok(())
    })
    .unwrap();
    assert_eq!(report.contexts, 5);
    assert_eq!(report.failed, 0);
    let ids: Vec<_> = preds.iter().map(|p| p.id.as_str()).collect();
    assert_eq!(ids, ["s0", "s1", "s2", "s3", "s4"]);
    for r in stub.requests() {
        assert_eq!(r.body["top_p"], 0.75);
        assert_eq!(r.body["temperature"], 0.95);
        assert_eq!(r.body["max_tokens"], 512);
    }
}

#[test]
fn failed_generation_is_flagged() {
    let stub = StubServer::start(StubBehavior::Status(500)).unwrap();
    let client = ChatClient::with_api_key(config(&stub.endpoint()), "k");
    let contexts = [Ok(ContextRecord {
        id: "a".into(),
        input: "病人：头疼\n医生：".into(),
    })];
    let mut preds = Vec::new();
    let report = generate_predictions(&client, contexts, &GenerationConfig::default(), |p| {
        preds.push(p);
        Ok(())
    })
    .unwrap();
    assert_eq!(report.failed, 1);
    assert!(preds[0].failed && preds[0].prediction.is_empty());
}

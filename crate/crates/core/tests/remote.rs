mod common;

use std::collections::BTreeMap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use common::{MockServer, Mode};
use prp_rerank::comparator::{
    assign_slots, Comparator, ComparatorError, CompletionBackend, HttpBackend, OrderPolicy, RemoteComparator,
    RemoteConfig, Winner,
};
use prp_rerank::model::{Candidate, Corpus, Document, Query};
use prp_rerank::prompt::{bundled_templates, find_template};

fn corpus() -> Arc<Corpus> {
    let mut c = Corpus::default();
    for (id, text) in [("d1", "first passage"), ("d2", "second passage")] {
        c.insert(Document {
            id: id.into(),
            text: text.into(),
            token_count: None,
        })
        .unwrap();
    }
    Arc::new(c)
}

fn cand(id: &str, rank: usize) -> Candidate {
    Candidate {
        doc_id: id.into(),
        retriever_score: 1.0 / rank as f64,
        initial_rank: rank,
    }
}

#[test]
fn requests_are_single_token_greedy_and_answers_parse() {
    let server = MockServer::start(Mode::Reply, vec!["A".into(), " b\n".into(), "Passage".into()]);
    let mut cfg = RemoteConfig::new(server.url.clone());
    cfg.headers = BTreeMap::from([("X-Team".to_string(), "search".to_string())]);
    let template = find_template(&bundled_templates(), "Final Version").unwrap().clone();
    let cmp = RemoteComparator::new(HttpBackend::new(&cfg).unwrap(), template, corpus());
    let query = Query {
        id: "q1".into(),
        text: "which passage".into(),
        gold_doc_id: None,
    };
    let slots = assign_slots(&cand("d1", 1), &cand("d2", 2), OrderPolicy::AsGiven).unwrap();

    let winners: Vec<Winner> = (0..3).map(|_| cmp.compare(&query, &slots).unwrap().winner).collect();
    assert_eq!(winners, vec![Winner::A, Winner::B, Winner::Undecided]);

    let reqs = server.requests.lock().unwrap();
    assert_eq!(reqs.len(), 3);
    for r in reqs.iter() {
        assert_eq!(r.body["max_tokens"], 1);
        assert_eq!(r.body["temperature"].as_f64(), Some(0.0));
        let prompt = r.body["prompt"].as_str().unwrap();
        assert!(prompt.contains("which passage"));
        assert!(prompt.find("first passage").unwrap() < prompt.find("second passage").unwrap());
        assert_eq!(r.headers.get("x-team").map(String::as_str), Some("search"));
    }
}

#[test]
fn transport_failure_retries_then_errors() {
    let server = MockServer::start(Mode::Drop, vec![]);
    let mut cfg = RemoteConfig::new(server.url.clone());
    cfg.max_retries = 2;
    cfg.timeout_seconds = 5.0;
    let backend = HttpBackend::new(&cfg).unwrap();
    let err = backend.complete("prompt").unwrap_err();
    assert!(
        matches!(err, ComparatorError::Transport { attempts: 3, .. }),
        "unexpected error {err:?}"
    );
    // The listener thread may lag the client by a moment.
    for _ in 0..50 {
        if server.accepts.load(Ordering::SeqCst) >= 3 {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(10));
    }
    assert_eq!(server.accepts.load(Ordering::SeqCst), 3);
}

#[test]
fn endpoint_env_override_wins() {
    let server = MockServer::start(Mode::Reply, vec!["B".into()]);
    let mut cfg = RemoteConfig::new("http://127.0.0.1:9/unused");
    cfg.endpoint_env = Some("PRP_TEST_ENDPOINT_OVERRIDE".into());
    std::env::set_var("PRP_TEST_ENDPOINT_OVERRIDE", &server.url);
    let backend = HttpBackend::new(&cfg).unwrap();
    assert_eq!(backend.complete("p").unwrap().text, "B");
}

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use prp_rerank::bench::synthetic::{generate, write_dataset, GoldPlacement, SyntheticSpec};
use prp_rerank::bench::RunConfig;
use prp_rerank::comparator::{BiasModel, RelevanceTable, SimulatedComparator};
use prp_rerank::model::{Candidate, Provenance, Query, RankedList};

pub const QUERY_ID: &str = "q";

/// Candidate `i` is `d{i}` at retriever rank `i + 1` with hidden relevance `rels[i]`.
pub fn fixture_with(rels: &[f64], bias: BiasModel) -> (RankedList, Query, SimulatedComparator) {
    let mut table = RelevanceTable::new();
    let candidates = rels
        .iter()
        .enumerate()
        .map(|(i, r)| {
            table.insert(QUERY_ID, &format!("d{i}"), *r);
            Candidate {
                doc_id: format!("d{i}").into(),
                retriever_score: 1.0 - i as f64 * 0.01,
                initial_rank: i + 1,
            }
        })
        .collect();
    let list = RankedList {
        query_id: QUERY_ID.into(),
        candidates,
        provenance: Provenance::Truncated,
    };
    let query = Query {
        id: QUERY_ID.into(),
        text: "query".into(),
        gold_doc_id: None,
    };
    let cmp = SimulatedComparator::new(table, bias).expect("valid bias");
    (list, query, cmp)
}

pub fn fixture(rels: &[f64]) -> (RankedList, Query, SimulatedComparator) {
    fixture_with(rels, BiasModel::oracle(0))
}

/// Hidden relevances of `list` in list order, given the fixture's `rels`.
pub fn relevances(list: &RankedList, rels: &[f64]) -> Vec<f64> {
    list.candidates
        .iter()
        .map(|c| rels[c.doc_id[1..].parse::<usize>().unwrap()])
        .collect()
}

/// Writes a synthetic dataset into `dir` and returns its loaded config.
pub fn synthetic_config(dir: &Path, spec: &SyntheticSpec) -> RunConfig {
    let data = generate(spec).expect("generate");
    let path = write_dataset(&data, spec, dir).expect("write");
    RunConfig::load(&path).expect("load")
}

/// Explicit placement with `outside` of `queries` golds beyond the shortlist
/// head of size `head` (they sit at rank `head + 1`).
pub fn spec_with_outside(queries: usize, outside: usize, head: usize, shortlist: usize) -> SyntheticSpec {
    let ranks = (0..queries)
        .map(|i| Some(if i < outside { head + 1 } else { 1 + i % head }))
        .collect();
    SyntheticSpec {
        docs: queries * 4,
        queries,
        shortlist,
        placement: GoldPlacement::Explicit { ranks },
        absent_rate: 0.0,
        margin: 0.1,
        seed: 11,
    }
}

pub struct Captured {
    pub body: serde_json::Value,
    pub headers: BTreeMap<String, String>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Answer each request with the next scripted completion text.
    Reply,
    /// Accept the connection and close it without responding.
    Drop,
}

/// Minimal HTTP/1.1 completion endpoint on the loopback interface.
pub struct MockServer {
    pub url: String,
    pub accepts: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Captured>>>,
}

impl MockServer {
    pub fn start(mode: Mode, replies: Vec<String>) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}/v1/completions", listener.local_addr().unwrap());
        let accepts = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let (a, r) = (accepts.clone(), requests.clone());
        thread::spawn(move || {
            let mut next = 0usize;
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                a.fetch_add(1, Ordering::SeqCst);
                match mode {
                    Mode::Drop => drop(stream),
                    Mode::Reply => {
                        let text = replies.get(next % replies.len().max(1)).cloned().unwrap_or_default();
                        next += 1;
                        serve(stream, &text, &r);
                    }
                }
            }
        });
        MockServer { url, accepts, requests }
    }
}

fn serve(stream: TcpStream, text: &str, log: &Mutex<Vec<Captured>>) -> Option<()> {
    let mut reader = BufReader::new(stream.try_clone().ok()?);
    let mut headers = BTreeMap::new();
    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            headers.insert(k.trim().to_ascii_lowercase(), v.trim().to_owned());
        }
    }
    let len: usize = headers.get("content-length").and_then(|v| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    log.lock().unwrap().push(Captured {
        body: serde_json::from_slice(&body).ok()?,
        headers,
    });
    let payload = serde_json::json!({
        "choices": [{ "text": text }],
        "usage": { "completion_tokens": 1 },
    })
    .to_string();
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        payload.len(),
        payload
    )
    .ok()?;
    out.flush().ok()
}

/// Path of the compiled CLI binary.
pub fn cli_bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_prp"))
}

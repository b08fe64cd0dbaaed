//! Wire-protocol conformance against golden transcripts.
//!
//! Each `tests/golden/*.golden` file alternates `> request` and `< reply`
//! lines. The stub must answer every request with exactly the recorded
//! bytes. Set `UPDATE_GOLDEN=1` to rewrite the replies.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use consistency_engine::model::{build_toy_model, LogitModel, ModelSpec, ToyModelKind, Vocab};
use consistency_engine::remote::{RemoteModel, RemoteOptions, Response, StubServer, StubService};
use consistency_engine::Error;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn conformance_stub() -> StubServer {
    let model = build_toy_model(ModelSpec::new(8, 4, 0, 16).unwrap(), ToyModelKind::Peaked { p_top: 0.75, seed: 7 }).unwrap();
    let vocab = Vocab::new(["<eos>", "the", "a", "cat", "dog", "sat", "ran", "on"]).unwrap();
    StubServer::spawn("127.0.0.1:0", StubService::new(Arc::new(model), Some(vocab), "conformance-stub")).unwrap()
}

fn replay(path: &Path, server: &StubServer) {
    let text = std::fs::read_to_string(path).unwrap();
    let stream = TcpStream::connect(server.addr()).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut rewritten = String::new();
    let mut lines = text.lines().peekable();
    let mut exchanges = 0;
    while let Some(line) = lines.next() {
        let req = line.strip_prefix("> ").unwrap_or_else(|| panic!("{}: expected a request line, got {line:?}", path.display()));
        writer.write_all(req.as_bytes()).unwrap();
        writer.write_all(b"\n").unwrap();
        let mut reply = String::new();
        reader.read_line(&mut reply).unwrap();
        assert!(reply.ends_with('\n'), "reply not newline-terminated");
        let reply = reply.trim_end_matches('\n');
        let expected = match lines.peek() {
            Some(l) if l.starts_with("< ") => lines.next().map(|l| &l[2..]),
            _ => None,
        };
        if update {
            rewritten.push_str(&format!("> {req}\n< {reply}\n"));
        } else {
            assert_eq!(Some(reply), expected, "{}: reply to {req}", path.display());
            assert_canonical(reply);
        }
        exchanges += 1;
    }
    assert!(exchanges > 0);
    if update {
        std::fs::write(path, rewritten).unwrap();
    }
}

/// Framing check that does not depend on model values: the reply must be
/// byte-identical to the canonical encoding of what it decodes to. This is
/// the part of the transcripts a real logit server has to reproduce.
fn assert_canonical(reply: &str) {
    let parsed = Response::decode(reply).unwrap_or_else(|e| panic!("{e}: {reply}"));
    assert_eq!(parsed.encode().unwrap(), reply, "reply is not in canonical framing");
}

#[test]
fn framing_check_rejects_noncanonical_lines() {
    let bad = [
        "{\"op\":\"step\",\"logits\":[0.5],\"hidden\":[1.0000000000000000e0]}",
        "{\"op\":\"tokenize\", \"ids\":[1]}",
        "{\"ids\":[1],\"op\":\"tokenize\"}",
    ];
    for line in bad {
        assert!(std::panic::catch_unwind(|| assert_canonical(line)).is_err(), "{line}");
    }
    assert_canonical("{\"op\":\"step\",\"logits\":[5.0000000000000000e-1],\"hidden\":[-1.0000000000000000e0]}");
}

#[test]
fn stub_matches_golden_transcripts() {
    let server = conformance_stub();
    let mut files: Vec<PathBuf> = std::fs::read_dir(golden_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "golden"))
        .collect();
    files.sort();
    assert!(files.len() >= 4, "golden files missing");
    for f in files {
        replay(&f, &server);
    }
}

#[test]
fn remote_model_drives_generation_like_local() {
    use consistency_engine::decoding::SamplingConfig;
    use consistency_engine::pipeline::{generate_n, GenerationConfig};

    let server = conformance_stub();
    let local = build_toy_model(ModelSpec::new(8, 4, 0, 16).unwrap(), ToyModelKind::Peaked { p_top: 0.75, seed: 7 }).unwrap();
    let options = RemoteOptions {
        max_generation: 16,
        ..RemoteOptions::default()
    };
    let remote = RemoteModel::connect(&server.addr().to_string(), options).unwrap();
    let config = GenerationConfig::new(SamplingConfig::default());
    let a = generate_n(&local, &[1, 3], 6, &config).unwrap();
    let b = generate_n(&remote, &[1, 3], 6, &config).unwrap();
    for (x, y) in a.outputs.iter().zip(&b.outputs) {
        assert_eq!(x.response, y.response);
        assert_eq!(x.trace, y.trace);
    }
    let s1 = remote.step(&[2], &[3, 4], None).unwrap();
    let s2 = remote.step(&[2], &[3, 4], None).unwrap();
    assert_eq!(s1, s2);
}

/// A server that answers `hello` honestly and every step with `step_reply`.
fn fake_server(step_reply: String, drop_first: bool) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let mut first = true;
        for stream in listener.incoming() {
            let stream = stream.unwrap();
            let mut writer = stream.try_clone().unwrap();
            let mut reader = BufReader::new(stream);
            let mut line = String::new();
            while reader.read_line(&mut line).unwrap_or(0) > 0 {
                if line.contains("\"hello\"") {
                    writer
                        .write_all(b"{\"op\":\"hello\",\"name\":\"fake\",\"vocab_size\":32,\"hidden_dim\":2,\"eos\":0}\n")
                        .unwrap();
                } else if drop_first && first {
                    first = false;
                    break;
                } else {
                    writer.write_all(step_reply.as_bytes()).unwrap();
                    writer.write_all(b"\n").unwrap();
                }
                line.clear();
            }
        }
    });
    addr
}

fn step_reply(vocab: usize) -> String {
    Response::Step {
        logits: vec![0.0; vocab],
        hidden: vec![1.0, 0.0],
    }
    .encode()
    .unwrap()
}

#[test]
fn logit_length_is_checked_against_metadata() {
    let ok = RemoteModel::connect(&fake_server(step_reply(32), false), RemoteOptions::default()).unwrap();
    assert_eq!(ok.step(&[1], &[], None).unwrap().logits.len(), 32);
    let short = RemoteModel::connect(&fake_server(step_reply(31), false), RemoteOptions::default()).unwrap();
    assert!(matches!(short.step(&[1], &[], None), Err(Error::Protocol(_))));
}

#[test]
fn transport_failures_are_retried() {
    let addr = fake_server(step_reply(32), true);
    let retrying = RemoteModel::connect(&addr, RemoteOptions::default()).unwrap();
    assert_eq!(retrying.step(&[1], &[], None).unwrap().logits.len(), 32);

    let addr = fake_server(step_reply(32), true);
    let options = RemoteOptions {
        retries: 0,
        ..RemoteOptions::default()
    };
    let strict = RemoteModel::connect(&addr, options).unwrap();
    assert!(matches!(strict.step(&[1], &[], None), Err(Error::Io(_))));
}

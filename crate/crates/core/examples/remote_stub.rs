//! Driving the engine through the wire protocol.
//!
//! An in-process stub serves a toy model over TCP; `RemoteModel` speaks the
//! same newline-delimited JSON a real logit server would. Generation through
//! the socket matches generation against the local model exactly.
//!
//! Run with `cargo run --example remote_stub`.

use std::path::Path;
use std::sync::Arc;

use consistency_engine::model::{load_definition, LogitModel};
use consistency_engine::pipeline::{generate_n, GenerationConfig};
use consistency_engine::remote::{RemoteModel, RemoteOptions, Request, StubServer, StubService};

pub fn main() -> consistency_engine::Result<()> {
    let def = load_definition(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data/qa_ngram.toml"))?;
    let local = def.model.clone();
    let server = StubServer::spawn("127.0.0.1:0", StubService::new(Arc::new(def.model), def.vocab, "capitals"))?;
    println!("stub listening on {}", server.addr());

    let remote = RemoteModel::connect(&server.addr().to_string(), RemoteOptions::default())?;
    println!("connected to {:?}", remote.name());

    let prompt = remote.tokenize("capital of spain is")?;
    println!("tokenize -> {prompt:?}, detokenize -> {:?}", remote.detokenize(&prompt)?);
    println!("wire request: {}", Request::Step { prompt: prompt.clone(), prefix: vec![] }.encode());

    let config = GenerationConfig::selective(0.8, 3);
    let over_wire = generate_n(&remote, &prompt, 6, &config)?;
    let in_process = generate_n(&local, &prompt, 6, &config)?;
    let eos = remote.spec().eos_token;
    for r in over_wire.responses() {
        let body = r.strip_suffix(&[eos]).unwrap_or(r);
        println!("  {}", remote.detokenize(body)?);
    }
    println!("identical to local generation: {}", over_wire.responses() == in_process.responses());
    println!("reuse ratio {:.3}", over_wire.reuse_ratio()?);

    server.shutdown();
    Ok(())
}

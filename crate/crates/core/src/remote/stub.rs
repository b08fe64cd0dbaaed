use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use super::protocol::{codes, Request, Response};
use crate::error::{Error, Result};
use crate::model::{LogitModel, TokenId, Vocab};
use crate::scorers::{EmbeddingOracle, HashedBagOfWords};

/// Serves a local model over the wire protocol.
///
/// Tokenization is the identity map onto the vocabulary: each whitespace
/// word is looked up as-is. Without a vocabulary, words must be decimal ids.
/// `embed` returns the hashed bag-of-words vector of the text.
pub struct StubService {
    model: Arc<dyn LogitModel>,
    vocab: Option<Vocab>,
    name: String,
    embedder: HashedBagOfWords,
}

impl StubService {
    pub fn new(model: Arc<dyn LogitModel>, vocab: Option<Vocab>, name: impl Into<String>) -> Self {
        StubService {
            model,
            vocab,
            name: name.into(),
            embedder: HashedBagOfWords::default(),
        }
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        match &self.vocab {
            Some(v) => v.encode(text),
            None => text
                .split_whitespace()
                .map(|w| w.parse().map_err(|_| Error::input(format!("{w:?} is not a token id"))))
                .collect(),
        }
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.model.spec().check_tokens(ids)?;
        match &self.vocab {
            Some(v) => v.decode(ids),
            None => Ok(ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")),
        }
    }

    fn answer(&self, req: Request) -> Result<Response> {
        let spec = self.model.spec();
        Ok(match req {
            Request::Hello => Response::Hello {
                name: self.name.clone(),
                vocab_size: spec.vocab_size,
                hidden_dim: spec.hidden_dim,
                eos: spec.eos_token,
            },
            Request::Step { prompt, prefix } => {
                let out = self.model.step(&prompt, &prefix, None)?;
                Response::Step {
                    logits: out.logits,
                    hidden: out.hidden,
                }
            }
            Request::Tokenize { text } => {
                let ids = self.tokenize(&text)?;
                spec.check_tokens(&ids)?;
                Response::Tokenize { ids }
            }
            Request::Detokenize { ids } => Response::Detokenize {
                text: self.detokenize(&ids)?,
            },
            Request::Embed { text } => {
                let words: Vec<String> = text.split_whitespace().map(String::from).collect();
                Response::Embed {
                    vector: self.embedder.embed(&words)?,
                }
            }
        })
    }

    /// Reply line (without newline) for one request line. Never fails:
    /// problems become `error` replies.
    pub fn handle_line(&self, line: &str) -> String {
        let reply = match Request::decode(line) {
            Err(e) => Response::error(codes::BAD_REQUEST, e.to_string()),
            Ok(req) => match self.answer(req) {
                Ok(r) => r,
                Err(e @ Error::Input(_)) => Response::error(codes::OUT_OF_RANGE, e.to_string()),
                Err(e) => Response::error(codes::INTERNAL, e.to_string()),
            },
        };
        reply
            .encode()
            .unwrap_or_else(|e| Response::error(codes::INTERNAL, e.to_string()).encode().expect("error replies encode"))
    }

    fn serve_connection(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut writer = stream.try_clone()?;
        let reader = BufReader::new(stream);
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut reply = self.handle_line(&line);
            reply.push('\n');
            writer.write_all(reply.as_bytes())?;
            writer.flush()?;
        }
        Ok(())
    }
}

/// A running stub server; one thread per connection.
pub struct StubServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Bind `addr` (port 0 picks a free port) and start accepting.
    pub fn spawn(addr: &str, service: StubService) -> Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let local = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let service = Arc::new(service);
        let flag = Arc::clone(&stop);
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let service = Arc::clone(&service);
                thread::spawn(move || {
                    let _ = service.serve_connection(stream);
                });
            }
        });
        Ok(StubServer {
            addr: local,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Block until the accept loop ends.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    /// Stop accepting new connections. Open connections finish on their own.
    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        if let Some(h) = self.handle.take() {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            let _ = h.join();
        }
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use super::protocol::{Request, Response};
use crate::error::{Error, Result};
use crate::model::{LogitModel, ModelSpec, OpaqueState, StepOutput, TokenId};
use crate::scorers::EmbeddingOracle;

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteOptions {
    pub timeout: Duration,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    /// Step cap for generation; the server does not advertise one.
    pub max_generation: usize,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            timeout: Duration::from_secs(30),
            retries: 2,
            max_generation: 64,
        }
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Connection {
    fn open(addr: &str, timeout: Duration) -> Result<Self> {
        let mut last = None;
        for sa in addr.to_socket_addrs()? {
            match TcpStream::connect_timeout(&sa, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    stream.set_nodelay(true)?;
                    return Ok(Connection {
                        reader: BufReader::new(stream.try_clone()?),
                        writer: stream,
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.map(Error::Io).unwrap_or_else(|| Error::input(format!("address {addr:?} did not resolve"))))
    }

    fn round_trip(&mut self, line: &str) -> Result<String> {
        self.writer.write_all(line.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut reply = String::new();
        if self.reader.read_line(&mut reply)? == 0 {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                "server closed the connection",
            )));
        }
        Ok(reply)
    }
}

/// A logit provider behind the wire protocol. Requests on one session are
/// serialized; the client never ships opaque state, so every step sends the
/// full prompt and prefix.
pub struct RemoteModel {
    addr: String,
    options: RemoteOptions,
    name: String,
    spec: ModelSpec,
    conn: Mutex<Option<Connection>>,
}

impl std::fmt::Debug for RemoteModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteModel")
            .field("addr", &self.addr)
            .field("name", &self.name)
            .field("spec", &self.spec)
            .finish()
    }
}

impl RemoteModel {
    /// Connect and fetch the model metadata.
    pub fn connect(addr: &str, options: RemoteOptions) -> Result<Self> {
        let mut model = RemoteModel {
            addr: addr.to_string(),
            spec: ModelSpec::new(1, 1, 0, options.max_generation.max(1))?,
            options,
            name: String::new(),
            conn: Mutex::new(None),
        };
        match model.request(&Request::Hello)? {
            Response::Hello {
                name,
                vocab_size,
                hidden_dim,
                eos,
            } => {
                model.spec = ModelSpec::new(vocab_size, hidden_dim, eos, model.options.max_generation)
                    .map_err(|e| Error::Protocol(format!("server metadata rejected: {e}")))?;
                model.name = name;
            }
            other => return Err(unexpected("hello", &other)),
        }
        Ok(model)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    /// Send one request, reconnecting and retrying on transport failure.
    pub fn request(&self, req: &Request) -> Result<Response> {
        let line = req.encode();
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let mut attempt = 0;
        loop {
            let result = (|| {
                if guard.is_none() {
                    *guard = Some(Connection::open(&self.addr, self.options.timeout)?);
                }
                guard.as_mut().unwrap().round_trip(&line)
            })();
            match result {
                Ok(reply) => {
                    return match Response::decode(&reply)? {
                        Response::Error { code, message } => Err(Error::Remote { code, message }),
                        r => Ok(r),
                    };
                }
                Err(Error::Io(e)) => {
                    *guard = None;
                    if attempt >= self.options.retries {
                        return Err(Error::Io(e));
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        match self.request(&Request::Tokenize { text: text.to_string() })? {
            Response::Tokenize { ids } => {
                self.spec
                    .check_tokens(&ids)
                    .map_err(|e| Error::Protocol(format!("tokenizer returned {e}")))?;
                Ok(ids)
            }
            other => Err(unexpected("tokenize", &other)),
        }
    }

    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        self.spec.check_tokens(ids)?;
        match self.request(&Request::Detokenize { ids: ids.to_vec() })? {
            Response::Detokenize { text } => Ok(text),
            other => Err(unexpected("detokenize", &other)),
        }
    }

    pub fn embed(&self, text: &str) -> Result<Vec<f64>> {
        match self.request(&Request::Embed { text: text.to_string() })? {
            Response::Embed { vector } => Ok(vector),
            other => Err(unexpected("embed", &other)),
        }
    }
}

fn unexpected(op: &str, got: &Response) -> Error {
    Error::Protocol(format!("expected a {op} reply, got {}", got.op()))
}

impl LogitModel for RemoteModel {
    fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    fn step(&self, prompt: &[TokenId], prefix: &[TokenId], _prior_state: Option<&OpaqueState>) -> Result<StepOutput> {
        self.spec.check_tokens(prompt)?;
        self.spec.check_tokens(prefix)?;
        let req = Request::Step {
            prompt: prompt.to_vec(),
            prefix: prefix.to_vec(),
        };
        match self.request(&req)? {
            Response::Step { logits, hidden } => {
                let out = StepOutput {
                    logits,
                    hidden,
                    state: OpaqueState::empty(),
                };
                out.validate(&self.spec).map_err(|e| Error::Protocol(e.to_string()))?;
                Ok(out)
            }
            other => Err(unexpected("step", &other)),
        }
    }
}

/// Embeddings computed by the server's `embed` operation.
pub struct RemoteEmbedding<'a>(pub &'a RemoteModel);

impl EmbeddingOracle for RemoteEmbedding<'_> {
    fn embed(&self, words: &[String]) -> Result<Vec<f64>> {
        self.0.embed(&words.join(" ")).map_err(|e| Error::Oracle(e.to_string()))
    }
}

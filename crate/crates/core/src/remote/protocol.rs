//! Newline-delimited JSON messages exchanged with a logit server.
//!
//! Every message is one JSON object on one line, discriminated by `"op"`.
//! Encoders emit fields in a fixed order and print floats in scientific
//! notation with 17 significant digits so that they round-trip exactly.

use std::fmt::Write;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::TokenId;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Request {
    Hello,
    Step { prompt: Vec<TokenId>, prefix: Vec<TokenId> },
    Tokenize { text: String },
    Detokenize { ids: Vec<TokenId> },
    Embed { text: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Response {
    Hello {
        name: String,
        vocab_size: usize,
        hidden_dim: usize,
        eos: TokenId,
    },
    Step { logits: Vec<f64>, hidden: Vec<f64> },
    Tokenize { ids: Vec<TokenId> },
    Detokenize { text: String },
    Embed { vector: Vec<f64> },
    Error { code: String, message: String },
}

/// Stable error codes carried by `error` replies.
pub mod codes {
    pub const BAD_REQUEST: &str = "bad_request";
    pub const OUT_OF_RANGE: &str = "out_of_range";
    pub const UNSUPPORTED: &str = "unsupported";
    pub const INTERNAL: &str = "internal";
}

impl Request {
    pub fn op(&self) -> &'static str {
        match self {
            Request::Hello => "hello",
            Request::Step { .. } => "step",
            Request::Tokenize { .. } => "tokenize",
            Request::Detokenize { .. } => "detokenize",
            Request::Embed { .. } => "embed",
        }
    }

    pub fn encode(&self) -> String {
        let mut out = Line::new(self.op());
        match self {
            Request::Hello => {}
            Request::Step { prompt, prefix } => {
                out.ids("prompt", prompt);
                out.ids("prefix", prefix);
            }
            Request::Tokenize { text } | Request::Embed { text } => out.string("text", text),
            Request::Detokenize { ids } => out.ids("ids", ids),
        }
        out.finish()
    }

    pub fn decode(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(format!("malformed request: {e}")))
    }
}

impl Response {
    pub fn op(&self) -> &'static str {
        match self {
            Response::Hello { .. } => "hello",
            Response::Step { .. } => "step",
            Response::Tokenize { .. } => "tokenize",
            Response::Detokenize { .. } => "detokenize",
            Response::Embed { .. } => "embed",
            Response::Error { .. } => "error",
        }
    }

    pub fn error(code: &str, message: impl Into<String>) -> Self {
        Response::Error {
            code: code.to_string(),
            message: message.into(),
        }
    }

    /// Fails on non-finite floats, which have no JSON form.
    pub fn encode(&self) -> Result<String> {
        let mut out = Line::new(self.op());
        match self {
            Response::Hello {
                name,
                vocab_size,
                hidden_dim,
                eos,
            } => {
                out.string("name", name);
                out.raw("vocab_size", &vocab_size.to_string());
                out.raw("hidden_dim", &hidden_dim.to_string());
                out.raw("eos", &eos.to_string());
            }
            Response::Step { logits, hidden } => {
                out.floats("logits", logits)?;
                out.floats("hidden", hidden)?;
            }
            Response::Tokenize { ids } => out.ids("ids", ids),
            Response::Detokenize { text } => out.string("text", text),
            Response::Embed { vector } => out.floats("vector", vector)?,
            Response::Error { code, message } => {
                out.string("code", code);
                out.string("message", message);
            }
        }
        Ok(out.finish())
    }

    pub fn decode(line: &str) -> Result<Self> {
        serde_json::from_str(line.trim_end()).map_err(|e| Error::Protocol(format!("malformed response: {e}")))
    }
}

/// Format a float with 17 significant digits.
pub fn format_float(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::Protocol(format!("cannot encode non-finite value {x}")));
    }
    Ok(format!("{x:.16e}"))
}

struct Line(String);

impl Line {
    fn new(op: &str) -> Self {
        Line(format!("{{\"op\":\"{op}\""))
    }

    fn raw(&mut self, key: &str, value: &str) {
        write!(self.0, ",\"{key}\":{value}").unwrap();
    }

    fn string(&mut self, key: &str, value: &str) {
        let quoted = serde_json::to_string(value).expect("strings always serialize");
        self.raw(key, &quoted);
    }

    fn ids(&mut self, key: &str, ids: &[TokenId]) {
        let body: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        self.raw(key, &format!("[{}]", body.join(",")));
    }

    fn floats(&mut self, key: &str, xs: &[f64]) -> Result<()> {
        let body = xs.iter().map(|&x| format_float(x)).collect::<Result<Vec<_>>>()?;
        self.raw(key, &format!("[{}]", body.join(",")));
        Ok(())
    }

    fn finish(mut self) -> String {
        self.0.push('}');
        self.0
    }
}

//! Newline-delimited JSON protocol spoken by the proxy front end and the
//! reference backend.
//!
//! Every message is one JSON object on one UTF-8 line terminated by `0x0A`.
//! A query is answered by either `columns`, zero or more `row`, then `done`;
//! or by `done` alone (statements without a result set); or by `error`.
//!
//! ```text
//! -> {"type":"query","sql":"SELECT name FROM t"}
//! <- {"type":"columns","names":["name"]}
//! <- {"type":"row","values":["a"]}
//! <- {"type":"done","affected":1}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ErrorCode, ProxyError};

/// One result row; cell values travel as strings.
pub type Row = Vec<Option<String>>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Request {
    Query { sql: String },
    Begin,
    Commit,
    Rollback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Response {
    Columns { names: Vec<String> },
    Row { values: Row },
    Done { affected: u64 },
    Error { code: String, message: String },
}

impl Response {
    pub fn error(err: &ProxyError) -> Self {
        Response::Error {
            code: err.code.as_str().to_owned(),
            message: err.message.clone(),
        }
    }
}

/// A fully buffered result, used by the HTTP front end and by callers that
/// do not need streaming.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    pub affected: u64,
}

/// Body of `POST /query` on the HTTP front end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub sql: String,
}

/// Error body returned by the HTTP front end.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&ProxyError> for ErrorBody {
    fn from(err: &ProxyError) -> Self {
        ErrorBody {
            code: err.code.as_str().to_owned(),
            message: err.message.clone(),
        }
    }
}

impl ErrorBody {
    pub fn into_error(self) -> ProxyError {
        let code = ErrorCode::parse(&self.code).unwrap_or(ErrorCode::Internal);
        ProxyError::new(code, self.message)
    }
}

/// Serializes a message as one line including the trailing newline.
pub fn encode_line<T: Serialize>(msg: &T) -> String {
    let mut line = serde_json::to_string(msg).expect("protocol messages always serialize");
    line.push('\n');
    line
}

pub fn decode_line<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T, ProxyError> {
    serde_json::from_str(line.trim_end_matches(['\n', '\r']))
        .map_err(|e| ProxyError::new(ErrorCode::ProtocolError, format!("bad message: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn framing_is_bit_exact() {
        assert_eq!(
            encode_line(&Request::Query { sql: "SELECT 1".into() }),
            "{\"type\":\"query\",\"sql\":\"SELECT 1\"}\n"
        );
        assert_eq!(encode_line(&Request::Begin), "{\"type\":\"begin\"}\n");
        assert_eq!(
            encode_line(&Response::Row {
                values: vec![Some("a".into()), None]
            }),
            "{\"type\":\"row\",\"values\":[\"a\",null]}\n"
        );
        assert_eq!(
            encode_line(&Response::Done { affected: 3 }),
            "{\"type\":\"done\",\"affected\":3}\n"
        );
        assert_eq!(
            encode_line(&Response::Columns {
                names: vec!["x".into()]
            }),
            "{\"type\":\"columns\",\"names\":[\"x\"]}\n"
        );
        let err = ProxyError::new(ErrorCode::SessionUnresolvable, "no session");
        assert_eq!(
            encode_line(&Response::error(&err)),
            "{\"type\":\"error\",\"code\":\"session_unresolvable\",\"message\":\"no session\"}\n"
        );
    }

    #[test]
    fn decode_round_trip_and_garbage() {
        let msg: Request = decode_line("{\"type\":\"commit\"}\n").unwrap();
        assert_eq!(msg, Request::Commit);
        let bad: Result<Request, _> = decode_line("{\"type\":\"launch\"}");
        assert_eq!(bad.unwrap_err().code, ErrorCode::ProtocolError);
        // embedded newlines are escaped, never raw
        let line = encode_line(&Request::Query {
            sql: "SELECT 'a\nb'".into(),
        });
        assert_eq!(line.matches('\n').count(), 1);
    }
}

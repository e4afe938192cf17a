//! MySQL protocol adapter: a client connector ([`MysqlConnector`]) usable as
//! the proxy's backend, and a server-side front end ([`start_front`]) so stock
//! MySQL drivers can talk to the proxy.
//!
//! Only the subset needed for plain queries is spoken: handshake v10 with
//! `mysql_native_password`, `COM_QUERY` with text resultsets, `COM_PING`,
//! `COM_INIT_DB` and `COM_QUIT`. No TLS, no prepared statements.

mod client;
mod front;

pub use client::{MysqlConnection, MysqlConnector, MysqlOptions};
pub use front::{serve_front, start_front, FrontAuth};

use blindex_core::{ErrorCode, ProxyError};
use sha1::{Digest, Sha1};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

pub const CLIENT_LONG_PASSWORD: u32 = 0x0000_0001;
pub const CLIENT_LONG_FLAG: u32 = 0x0000_0004;
pub const CLIENT_CONNECT_WITH_DB: u32 = 0x0000_0008;
pub const CLIENT_PROTOCOL_41: u32 = 0x0000_0200;
pub const CLIENT_SSL: u32 = 0x0000_0800;
pub const CLIENT_TRANSACTIONS: u32 = 0x0000_2000;
pub const CLIENT_SECURE_CONNECTION: u32 = 0x0000_8000;
pub const CLIENT_PLUGIN_AUTH: u32 = 0x0008_0000;
pub const CLIENT_PLUGIN_AUTH_LENENC_DATA: u32 = 0x0020_0000;
pub const CLIENT_DEPRECATE_EOF: u32 = 0x0100_0000;

pub const COM_QUIT: u8 = 0x01;
pub const COM_INIT_DB: u8 = 0x02;
pub const COM_QUERY: u8 = 0x03;
pub const COM_PING: u8 = 0x0e;

pub const NATIVE_PASSWORD: &str = "mysql_native_password";
const MAX_PAYLOAD: usize = 0xff_ffff;
const SCRAMBLE_LEN: usize = 20;

pub(crate) fn protocol_error(msg: impl Into<String>) -> ProxyError {
    ProxyError::new(ErrorCode::ProtocolError, msg)
}

fn malformed() -> ProxyError {
    protocol_error("malformed mysql packet")
}

/// Reads one logical packet, joining 16 MiB continuation frames. Returns the
/// sequence id of the last frame.
pub(crate) async fn read_packet<R: AsyncRead + Unpin>(r: &mut R) -> Result<(u8, Vec<u8>), ProxyError> {
    let mut payload = Vec::new();
    loop {
        let mut header = [0u8; 4];
        r.read_exact(&mut header)
            .await
            .map_err(|e| protocol_error(format!("mysql connection lost: {e}")))?;
        let len = u32::from_le_bytes([header[0], header[1], header[2], 0]) as usize;
        let start = payload.len();
        payload.resize(start + len, 0);
        r.read_exact(&mut payload[start..])
            .await
            .map_err(|e| protocol_error(format!("mysql connection lost: {e}")))?;
        if len < MAX_PAYLOAD {
            return Ok((header[3], payload));
        }
    }
}

/// Writes `payload` as one or more frames starting at `seq`; returns the
/// next sequence id. Does not flush.
pub(crate) async fn write_packet<W: AsyncWrite + Unpin>(
    w: &mut W,
    mut seq: u8,
    payload: &[u8],
) -> Result<u8, ProxyError> {
    let io = |e: std::io::Error| protocol_error(format!("mysql write failed: {e}"));
    let mut chunks = payload.chunks(MAX_PAYLOAD).peekable();
    if payload.is_empty() {
        w.write_all(&[0, 0, 0, seq]).await.map_err(io)?;
        return Ok(seq.wrapping_add(1));
    }
    while let Some(chunk) = chunks.next() {
        let len = (chunk.len() as u32).to_le_bytes();
        w.write_all(&[len[0], len[1], len[2], seq]).await.map_err(io)?;
        w.write_all(chunk).await.map_err(io)?;
        seq = seq.wrapping_add(1);
        // a payload of exactly n * MAX_PAYLOAD ends with an empty frame
        if chunks.peek().is_none() && chunk.len() == MAX_PAYLOAD {
            w.write_all(&[0, 0, 0, seq]).await.map_err(io)?;
            seq = seq.wrapping_add(1);
        }
    }
    Ok(seq)
}

/// Cursor over a packet payload.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], ProxyError> {
        let end = self.pos.checked_add(n).ok_or_else(malformed)?;
        let out = self.buf.get(self.pos..end).ok_or_else(malformed)?;
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, ProxyError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, ProxyError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32, ProxyError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn peek(&self) -> Option<u8> {
        self.buf.get(self.pos).copied()
    }

    /// Length-encoded integer. `None` is the NULL marker 0xfb.
    pub fn lenenc(&mut self) -> Result<Option<u64>, ProxyError> {
        Ok(match self.u8()? {
            0xfb => None,
            0xfc => Some(self.u16()? as u64),
            0xfd => {
                let b = self.take(3)?;
                Some(u32::from_le_bytes([b[0], b[1], b[2], 0]) as u64)
            }
            0xfe => {
                let b = self.take(8)?;
                Some(u64::from_le_bytes(b.try_into().expect("8 bytes")))
            }
            0xff => return Err(malformed()),
            n => Some(n as u64),
        })
    }

    pub fn lenenc_bytes(&mut self) -> Result<Option<&'a [u8]>, ProxyError> {
        match self.lenenc()? {
            None => Ok(None),
            Some(n) => {
                let n = usize::try_from(n).map_err(|_| malformed())?;
                Ok(Some(self.take(n)?))
            }
        }
    }

    pub fn nul_str(&mut self) -> Result<&'a [u8], ProxyError> {
        let rest = &self.buf[self.pos..];
        let end = rest.iter().position(|&b| b == 0).ok_or_else(malformed)?;
        self.pos += end + 1;
        Ok(&rest[..end])
    }

    /// NUL-terminated string, or the rest of the packet if no NUL remains.
    pub fn nul_str_or_rest(&mut self) -> &'a [u8] {
        let rest = &self.buf[self.pos..];
        match rest.iter().position(|&b| b == 0) {
            Some(end) => {
                self.pos += end + 1;
                &rest[..end]
            }
            None => {
                self.pos = self.buf.len();
                rest
            }
        }
    }

    pub fn rest(&mut self) -> &'a [u8] {
        let out = &self.buf[self.pos..];
        self.pos = self.buf.len();
        out
    }
}

pub(crate) fn put_lenenc(out: &mut Vec<u8>, n: u64) {
    match n {
        0..=0xfa => out.push(n as u8),
        0xfb..=0xffff => {
            out.push(0xfc);
            out.extend_from_slice(&(n as u16).to_le_bytes());
        }
        0x1_0000..=0xff_ffff => {
            out.push(0xfd);
            out.extend_from_slice(&(n as u32).to_le_bytes()[..3]);
        }
        _ => {
            out.push(0xfe);
            out.extend_from_slice(&n.to_le_bytes());
        }
    }
}

pub(crate) fn put_lenenc_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_lenenc(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

/// `SHA1(pw) XOR SHA1(scramble || SHA1(SHA1(pw)))`; empty for an empty password.
pub fn native_password_token(password: &[u8], scramble: &[u8]) -> Vec<u8> {
    if password.is_empty() {
        return Vec::new();
    }
    let stage1 = Sha1::digest(password);
    let stage2 = Sha1::digest(stage1);
    let mut h = Sha1::new();
    h.update(scramble);
    h.update(stage2);
    let mix = h.finalize();
    stage1.iter().zip(mix.iter()).map(|(a, b)| a ^ b).collect()
}

/// Decoded server error packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrPacket {
    pub code: u16,
    pub state: String,
    pub message: String,
}

impl ErrPacket {
    pub fn parse(payload: &[u8]) -> Result<Self, ProxyError> {
        let mut r = Reader::new(payload);
        if r.u8()? != 0xff {
            return Err(malformed());
        }
        let code = r.u16()?;
        let state = if r.peek() == Some(b'#') {
            r.take(1)?;
            String::from_utf8_lossy(r.take(5)?).into_owned()
        } else {
            "HY000".to_string()
        };
        let message = String::from_utf8_lossy(r.rest()).into_owned();
        Ok(Self {
            code,
            state,
            message,
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![0xff];
        out.extend_from_slice(&self.code.to_le_bytes());
        out.push(b'#');
        let mut state = self.state.as_bytes().to_vec();
        state.resize(5, b'0');
        out.extend_from_slice(&state);
        out.extend_from_slice(self.message.as_bytes());
        out
    }
}

pub(crate) fn ok_packet(affected: u64, status: u16) -> Vec<u8> {
    let mut out = vec![0x00];
    put_lenenc(&mut out, affected);
    put_lenenc(&mut out, 0);
    out.extend_from_slice(&status.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out
}

pub(crate) fn eof_packet(status: u16) -> Vec<u8> {
    let mut out = vec![0xfe, 0, 0];
    out.extend_from_slice(&status.to_le_bytes());
    out
}

pub(crate) fn is_eof(payload: &[u8]) -> bool {
    payload.first() == Some(&0xfe) && payload.len() < 9
}

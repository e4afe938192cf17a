use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use blindex_core::crypto::random_bytes;
use blindex_core::wire::{Request, Response};
use blindex_core::ProxyError;
use tokio::io::{AsyncWrite, AsyncWriteExt, BufReader, BufWriter};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinHandle;

use super::*;
use crate::server::HandlerFactory;
use crate::sink::ResponseSink;

/// `ER_UNKNOWN_ERROR`, used for every proxy-side failure. The message starts
/// with the proxy error code.
pub(crate) const GENERIC_ERROR: u16 = 1105;
const ACCESS_DENIED: u16 = 1045;
const UNKNOWN_COMMAND: u16 = 1047;
const MALFORMED: u16 = 1835;

const SERVER_VERSION: &str = "8.0.0-blindex";
const STATUS_AUTOCOMMIT: u16 = 0x0002;
const UTF8MB4: u8 = 45;
const TYPE_VAR_STRING: u8 = 0xfd;

const SERVER_CAPS: u32 = CLIENT_LONG_PASSWORD
    | CLIENT_LONG_FLAG
    | CLIENT_CONNECT_WITH_DB
    | CLIENT_PROTOCOL_41
    | CLIENT_TRANSACTIONS
    | CLIENT_SECURE_CONNECTION
    | CLIENT_PLUGIN_AUTH
    | CLIENT_PLUGIN_AUTH_LENENC_DATA;

/// Credentials the front end accepts. Without one, any login succeeds.
#[derive(Debug, Clone)]
pub struct FrontAuth {
    pub user: String,
    pub password: String,
}

impl FrontAuth {
    /// `user[:password]`
    pub fn parse(spec: &str) -> Self {
        let (user, password) = spec.split_once(':').unwrap_or((spec, ""));
        Self {
            user: user.to_string(),
            password: password.to_string(),
        }
    }
}

static CONNECTION_IDS: AtomicU32 = AtomicU32::new(1);

fn err_packet(code: u16, state: &str, message: impl Into<String>) -> Vec<u8> {
    ErrPacket {
        code,
        state: state.to_string(),
        message: message.into(),
    }
    .encode()
}

fn proxy_err_packet(code: &str, message: &str) -> Vec<u8> {
    err_packet(GENERIC_ERROR, "HY000", format!("{code}: {message}"))
}

fn column_definition(name: &str) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + 2 * name.len());
    put_lenenc_bytes(&mut out, b"def");
    for _ in 0..3 {
        put_lenenc_bytes(&mut out, b"");
    }
    put_lenenc_bytes(&mut out, name.as_bytes());
    put_lenenc_bytes(&mut out, name.as_bytes());
    out.push(0x0c);
    out.extend_from_slice(&(UTF8MB4 as u16).to_le_bytes());
    out.extend_from_slice(&(u32::MAX).to_le_bytes());
    out.push(TYPE_VAR_STRING);
    out.extend_from_slice(&0u16.to_le_bytes());
    out.push(0);
    out.extend_from_slice(&[0, 0]);
    out
}

/// Encodes one statement's answer as a MySQL text resultset.
struct MysqlSink<'a, W: AsyncWrite + Unpin + Send> {
    w: &'a mut BufWriter<W>,
    seq: u8,
    columns: bool,
}

impl<W: AsyncWrite + Unpin + Send> MysqlSink<'_, W> {
    async fn put(&mut self, payload: &[u8]) -> Result<(), ProxyError> {
        self.seq = write_packet(self.w, self.seq, payload).await?;
        Ok(())
    }

    async fn flush(&mut self) -> Result<(), ProxyError> {
        self.w
            .flush()
            .await
            .map_err(|e| protocol_error(format!("client write failed: {e}")))
    }
}

#[async_trait]
impl<W: AsyncWrite + Unpin + Send> ResponseSink for MysqlSink<'_, W> {
    async fn send(&mut self, msg: Response) -> Result<(), ProxyError> {
        match msg {
            Response::Columns { names } => {
                let mut count = Vec::new();
                put_lenenc(&mut count, names.len() as u64);
                self.put(&count).await?;
                for name in &names {
                    self.put(&column_definition(name)).await?;
                }
                self.columns = true;
                self.put(&eof_packet(STATUS_AUTOCOMMIT)).await
            }
            Response::Row { values } => {
                let mut out = Vec::new();
                for v in &values {
                    match v {
                        None => out.push(0xfb),
                        Some(s) => put_lenenc_bytes(&mut out, s.as_bytes()),
                    }
                }
                self.put(&out).await
            }
            Response::Done { affected } => {
                if self.columns {
                    self.put(&eof_packet(STATUS_AUTOCOMMIT)).await?;
                } else {
                    self.put(&ok_packet(affected, STATUS_AUTOCOMMIT)).await?;
                }
                self.flush().await
            }
            Response::Error { code, message } => {
                self.put(&proxy_err_packet(&code, &message)).await?;
                self.flush().await
            }
        }
    }
}

struct HandshakeResponse {
    caps: u32,
    user: String,
    token: Vec<u8>,
    plugin: Option<String>,
}

fn parse_response(payload: &[u8]) -> Result<HandshakeResponse, ProxyError> {
    let mut r = Reader::new(payload);
    let caps = r.u32()?;
    if caps & CLIENT_PROTOCOL_41 == 0 {
        return Ok(HandshakeResponse {
            caps,
            user: String::new(),
            token: Vec::new(),
            plugin: None,
        });
    }
    let _max_packet = r.u32()?;
    let _charset = r.u8()?;
    r.take(23)?;
    let user = String::from_utf8_lossy(r.nul_str()?).into_owned();
    let token = if caps & CLIENT_PLUGIN_AUTH_LENENC_DATA != 0 {
        r.lenenc_bytes()?.unwrap_or_default().to_vec()
    } else if caps & CLIENT_SECURE_CONNECTION != 0 {
        let n = r.u8()? as usize;
        r.take(n)?.to_vec()
    } else {
        r.nul_str()?.to_vec()
    };
    if caps & CLIENT_CONNECT_WITH_DB != 0 && r.remaining() > 0 {
        r.nul_str_or_rest();
    }
    let plugin = if caps & CLIENT_PLUGIN_AUTH != 0 && r.remaining() > 0 {
        Some(String::from_utf8_lossy(r.nul_str_or_rest()).into_owned())
    } else {
        None
    };
    Ok(HandshakeResponse {
        caps,
        user,
        token,
        plugin,
    })
}

fn new_scramble() -> Result<[u8; SCRAMBLE_LEN], ProxyError> {
    let mut s = random_bytes::<SCRAMBLE_LEN>()?;
    // printable and never NUL, as stock servers do
    for b in &mut s {
        *b = 0x21 + *b % 0x5e;
    }
    Ok(s)
}

fn handshake_packet(conn_id: u32, scramble: &[u8; SCRAMBLE_LEN]) -> Vec<u8> {
    let mut out = vec![10];
    out.extend_from_slice(SERVER_VERSION.as_bytes());
    out.push(0);
    out.extend_from_slice(&conn_id.to_le_bytes());
    out.extend_from_slice(&scramble[..8]);
    out.push(0);
    out.extend_from_slice(&(SERVER_CAPS as u16).to_le_bytes());
    out.push(UTF8MB4);
    out.extend_from_slice(&STATUS_AUTOCOMMIT.to_le_bytes());
    out.extend_from_slice(&((SERVER_CAPS >> 16) as u16).to_le_bytes());
    out.push((SCRAMBLE_LEN + 1) as u8);
    out.extend_from_slice(&[0u8; 10]);
    out.extend_from_slice(&scramble[8..]);
    out.push(0);
    out.extend_from_slice(NATIVE_PASSWORD.as_bytes());
    out.push(0);
    out
}

async fn send_and_flush<W: AsyncWrite + Unpin>(
    w: &mut BufWriter<W>,
    seq: u8,
    payload: &[u8],
) -> Result<u8, ProxyError> {
    let next = write_packet(w, seq, payload).await?;
    w.flush()
        .await
        .map_err(|e| protocol_error(format!("client write failed: {e}")))?;
    Ok(next)
}

fn is_session_setting(sql: &str) -> bool {
    let head = sql.trim_start();
    head.len() >= 4 && head[..4].eq_ignore_ascii_case("SET ")
}

async fn connection(
    stream: TcpStream,
    factory: Arc<dyn HandlerFactory>,
    auth: Option<Arc<FrontAuth>>,
) -> Result<(), ProxyError> {
    let _ = stream.set_nodelay(true);
    let (read, write) = stream.into_split();
    let mut r = BufReader::new(read);
    let mut w = BufWriter::new(write);

    let scramble = new_scramble()?;
    let conn_id = CONNECTION_IDS.fetch_add(1, Ordering::Relaxed);
    send_and_flush(&mut w, 0, &handshake_packet(conn_id, &scramble)).await?;

    let (seq, payload) = read_packet(&mut r).await?;
    let mut seq = seq.wrapping_add(1);
    let resp = match parse_response(&payload) {
        Ok(resp) => resp,
        Err(e) => {
            send_and_flush(&mut w, seq, &err_packet(MALFORMED, "08S01", e.message.clone())).await?;
            return Err(e);
        }
    };
    if resp.caps & CLIENT_PROTOCOL_41 == 0 {
        send_and_flush(
            &mut w,
            seq,
            &err_packet(MALFORMED, "08004", "client must support protocol 4.1"),
        )
        .await?;
        return Err(protocol_error("client without protocol 4.1"));
    }
    if resp.caps & CLIENT_SSL != 0 && payload.len() == 32 {
        send_and_flush(&mut w, seq, &err_packet(MALFORMED, "08004", "TLS is not supported")).await?;
        return Err(protocol_error("client requested TLS"));
    }
    let mut token = resp.token;
    if resp.plugin.as_deref().is_some_and(|p| p != NATIVE_PASSWORD) {
        let mut switch = vec![0xfe];
        switch.extend_from_slice(NATIVE_PASSWORD.as_bytes());
        switch.push(0);
        switch.extend_from_slice(&scramble);
        switch.push(0);
        send_and_flush(&mut w, seq, &switch).await?;
        let (s, t) = read_packet(&mut r).await?;
        seq = s.wrapping_add(1);
        token = t;
    }
    if let Some(auth) = &auth {
        let expected = native_password_token(auth.password.as_bytes(), &scramble);
        if resp.user != auth.user || token != expected {
            let msg = format!("Access denied for user '{}'", resp.user);
            send_and_flush(&mut w, seq, &err_packet(ACCESS_DENIED, "28000", msg)).await?;
            return Ok(());
        }
    }
    let mut handler = match factory.open().await {
        Ok(h) => h,
        Err(e) => {
            send_and_flush(&mut w, seq, &proxy_err_packet(e.code.as_str(), &e.message)).await?;
            return Err(e);
        }
    };
    send_and_flush(&mut w, seq, &ok_packet(0, STATUS_AUTOCOMMIT)).await?;

    loop {
        let (_, payload) = match read_packet(&mut r).await {
            Ok(p) => p,
            Err(_) => return Ok(()),
        };
        let Some((&command, body)) = payload.split_first() else {
            send_and_flush(&mut w, 1, &err_packet(MALFORMED, "08S01", "empty command packet"))
                .await?;
            return Err(protocol_error("empty command packet"));
        };
        match command {
            COM_QUIT => return Ok(()),
            COM_PING | COM_INIT_DB => {
                send_and_flush(&mut w, 1, &ok_packet(0, STATUS_AUTOCOMMIT)).await?;
            }
            COM_QUERY => {
                let Ok(sql) = std::str::from_utf8(body) else {
                    send_and_flush(&mut w, 1, &err_packet(MALFORMED, "08S01", "query is not UTF-8"))
                        .await?;
                    return Err(protocol_error("query is not UTF-8"));
                };
                if is_session_setting(sql) {
                    // driver session setup such as SET NAMES
                    send_and_flush(&mut w, 1, &ok_packet(0, STATUS_AUTOCOMMIT)).await?;
                    continue;
                }
                let mut sink = MysqlSink {
                    w: &mut w,
                    seq: 1,
                    columns: false,
                };
                handler
                    .handle(Request::Query { sql: sql.to_string() }, &mut sink)
                    .await?;
            }
            other => {
                let msg = format!("command {other:#04x} is not supported");
                send_and_flush(&mut w, 1, &err_packet(UNKNOWN_COMMAND, "08S01", msg)).await?;
            }
        }
    }
}

/// Serves the MySQL protocol on `listener`, answering each connection with a
/// handler from `factory`.
pub fn serve_front(
    listener: TcpListener,
    factory: Arc<dyn HandlerFactory>,
    auth: Option<FrontAuth>,
) -> JoinHandle<()> {
    let auth = auth.map(Arc::new);
    tokio::spawn(async move {
        loop {
            match listener.accept().await {
                Ok((stream, peer)) => {
                    let factory = factory.clone();
                    let auth = auth.clone();
                    tokio::spawn(async move {
                        if let Err(e) = connection(stream, factory, auth).await {
                            tracing::debug!(%peer, error = %e, "mysql connection closed");
                        }
                    });
                }
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    tokio::time::sleep(std::time::Duration::from_millis(50)).await;
                }
            }
        }
    })
}

pub async fn start_front(
    factory: Arc<dyn HandlerFactory>,
    addr: &str,
    auth: Option<FrontAuth>,
) -> std::io::Result<(SocketAddr, JoinHandle<()>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    Ok((local, serve_front(listener, factory, auth)))
}

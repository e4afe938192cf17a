use async_trait::async_trait;
use blindex_core::wire::Row;
use blindex_core::{ErrorCode, ProxyError};
use tokio::io::{AsyncWriteExt, BufReader, BufWriter};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::TcpStream;

use super::*;
use crate::backend::{BackendConnection, BackendConnector, Exec};

/// Where and how to log in to a MySQL server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MysqlOptions {
    pub addr: String,
    pub user: String,
    pub password: String,
    pub database: Option<String>,
}

impl MysqlOptions {
    /// `credentials` is `user[:password][@database]`.
    pub fn parse(addr: &str, credentials: &str) -> Self {
        let (login, database) = match credentials.rsplit_once('@') {
            Some((l, db)) if !db.is_empty() => (l, Some(db.to_string())),
            Some((l, _)) => (l, None),
            None => (credentials, None),
        };
        let (user, password) = login.split_once(':').unwrap_or((login, ""));
        Self {
            addr: addr.to_string(),
            user: user.to_string(),
            password: password.to_string(),
            database,
        }
    }
}

pub struct MysqlConnector {
    opts: MysqlOptions,
}

impl MysqlConnector {
    pub fn new(opts: MysqlOptions) -> Self {
        Self { opts }
    }

    /// Logs in once, so bad credentials or an incompatible server are
    /// reported at startup.
    pub async fn probe(&self) -> Result<(), ProxyError> {
        let conn = MysqlConnection::connect(&self.opts).await?;
        conn.quit().await;
        Ok(())
    }
}

#[async_trait]
impl BackendConnector for MysqlConnector {
    async fn connect(&self) -> Result<Box<dyn BackendConnection>, ProxyError> {
        Ok(Box::new(MysqlConnection::connect(&self.opts).await?))
    }
}

/// Recovers a proxy error code that a blindex front end put in front of the
/// message; anything else is a plain backend error.
pub(crate) fn server_error(err: ErrPacket) -> ProxyError {
    if err.code == front::GENERIC_ERROR {
        if let Some((code, msg)) = err.message.split_once(": ") {
            if let Some(code) = ErrorCode::parse(code) {
                return ProxyError::new(code, msg);
            }
        }
    }
    ProxyError::new(
        ErrorCode::BackendError,
        format!("mysql error {} ({}): {}", err.code, err.state, err.message),
    )
}

enum State {
    Idle,
    Rows { width: usize, count: u64 },
    Broken,
}

pub struct MysqlConnection {
    reader: BufReader<OwnedReadHalf>,
    writer: BufWriter<OwnedWriteHalf>,
    state: State,
    affected: u64,
    pub server_version: String,
}

struct ServerHandshake {
    version: String,
    caps: u32,
    scramble: Vec<u8>,
    plugin: String,
}

fn parse_handshake(payload: &[u8]) -> Result<ServerHandshake, ProxyError> {
    if payload.first() == Some(&0xff) {
        return Err(server_error(ErrPacket::parse(payload)?));
    }
    let mut r = Reader::new(payload);
    let proto = r.u8()?;
    if proto != 10 {
        return Err(protocol_error(format!(
            "unsupported mysql handshake version {proto}"
        )));
    }
    let version = String::from_utf8_lossy(r.nul_str()?).into_owned();
    let _conn_id = r.u32()?;
    let mut scramble = r.take(8)?.to_vec();
    r.u8()?;
    let mut caps = r.u16()? as u32;
    let mut plugin = String::new();
    if r.remaining() > 0 {
        let _charset = r.u8()?;
        let _status = r.u16()?;
        caps |= (r.u16()? as u32) << 16;
        let auth_len = r.u8()? as usize;
        r.take(10)?;
        if caps & CLIENT_SECURE_CONNECTION != 0 {
            let n = auth_len.saturating_sub(8).max(13);
            let part = r.take(n.min(r.remaining()))?;
            let part = part.strip_suffix(&[0]).unwrap_or(part);
            scramble.extend_from_slice(part);
        }
        if caps & CLIENT_PLUGIN_AUTH != 0 {
            plugin = String::from_utf8_lossy(r.nul_str_or_rest()).into_owned();
        }
    }
    scramble.truncate(SCRAMBLE_LEN);
    Ok(ServerHandshake {
        version,
        caps,
        scramble,
        plugin,
    })
}

impl MysqlConnection {
    pub async fn connect(opts: &MysqlOptions) -> Result<Self, ProxyError> {
        let stream = TcpStream::connect(&opts.addr).await.map_err(|e| {
            ProxyError::new(
                ErrorCode::BackendError,
                format!("mysql backend {} unreachable: {e}", opts.addr),
            )
        })?;
        let _ = stream.set_nodelay(true);
        let (read, write) = stream.into_split();
        let mut conn = Self {
            reader: BufReader::new(read),
            writer: BufWriter::new(write),
            state: State::Idle,
            affected: 0,
            server_version: String::new(),
        };
        conn.login(opts).await?;
        Ok(conn)
    }

    async fn login(&mut self, opts: &MysqlOptions) -> Result<(), ProxyError> {
        let (seq, payload) = read_packet(&mut self.reader).await?;
        let hs = parse_handshake(&payload)?;
        let required = CLIENT_PROTOCOL_41 | CLIENT_SECURE_CONNECTION;
        if hs.caps & required != required {
            return Err(ProxyError::new(
                ErrorCode::BackendError,
                format!(
                    "unsupported mysql server capability flags {:#010x}: protocol 4.1 with secure authentication is required",
                    hs.caps
                ),
            ));
        }
        self.server_version = hs.version;
        let mut caps = CLIENT_LONG_PASSWORD
            | CLIENT_LONG_FLAG
            | CLIENT_PROTOCOL_41
            | CLIENT_TRANSACTIONS
            | CLIENT_SECURE_CONNECTION;
        caps |= hs.caps & CLIENT_PLUGIN_AUTH;
        if opts.database.is_some() {
            caps |= CLIENT_CONNECT_WITH_DB;
        }
        let token = native_password_token(opts.password.as_bytes(), &hs.scramble);
        let mut out = Vec::with_capacity(64 + opts.user.len());
        out.extend_from_slice(&caps.to_le_bytes());
        out.extend_from_slice(&(MAX_PAYLOAD as u32).to_le_bytes());
        out.push(45);
        out.extend_from_slice(&[0u8; 23]);
        out.extend_from_slice(opts.user.as_bytes());
        out.push(0);
        out.push(token.len() as u8);
        out.extend_from_slice(&token);
        if let Some(db) = &opts.database {
            out.extend_from_slice(db.as_bytes());
            out.push(0);
        }
        if caps & CLIENT_PLUGIN_AUTH != 0 {
            out.extend_from_slice(NATIVE_PASSWORD.as_bytes());
            out.push(0);
        }
        if !hs.plugin.is_empty() && hs.plugin != NATIVE_PASSWORD {
            tracing::debug!(plugin = %hs.plugin, "server default plugin differs, expecting a switch");
        }
        write_packet(&mut self.writer, seq.wrapping_add(1), &out).await?;
        self.flush().await?;
        loop {
            let (s, reply) = read_packet(&mut self.reader).await?;
            match reply.first() {
                Some(0x00) => return Ok(()),
                Some(0xff) => {
                    let err = ErrPacket::parse(&reply)?;
                    return Err(ProxyError::new(
                        ErrorCode::BackendError,
                        format!("mysql login failed: {} ({})", err.message, err.code),
                    ));
                }
                Some(0xfe) => {
                    let mut r = Reader::new(&reply[1..]);
                    let plugin = String::from_utf8_lossy(r.nul_str_or_rest()).into_owned();
                    if plugin != NATIVE_PASSWORD {
                        return Err(ProxyError::new(
                            ErrorCode::BackendError,
                            format!("mysql auth plugin {plugin:?} is not supported"),
                        ));
                    }
                    let data = r.rest();
                    let data = data.strip_suffix(&[0]).unwrap_or(data);
                    let token = native_password_token(opts.password.as_bytes(), data);
                    write_packet(&mut self.writer, s.wrapping_add(1), &token).await?;
                    self.flush().await?;
                }
                _ => return Err(protocol_error("unexpected packet during mysql login")),
            }
        }
    }

    async fn flush(&mut self) -> Result<(), ProxyError> {
        self.writer
            .flush()
            .await
            .map_err(|e| protocol_error(format!("mysql write failed: {e}")))
    }

    /// Sends `COM_QUIT` and closes.
    pub async fn quit(mut self) {
        if write_packet(&mut self.writer, 0, &[COM_QUIT]).await.is_ok() {
            let _ = self.flush().await;
        }
    }

    fn check(&self) -> Result<(), ProxyError> {
        match self.state {
            State::Broken => Err(ProxyError::new(
                ErrorCode::BackendError,
                "mysql connection is broken",
            )),
            _ => Ok(()),
        }
    }

    /// Marks the connection unusable after a framing error.
    fn fail<T>(&mut self, err: ProxyError) -> Result<T, ProxyError> {
        if err.code == ErrorCode::ProtocolError {
            self.state = State::Broken;
        }
        Err(err)
    }

    async fn read_result_header(&mut self) -> Result<Exec, ProxyError> {
        let (_, payload) = read_packet(&mut self.reader).await?;
        match payload.first() {
            Some(0x00) => {
                let mut r = Reader::new(&payload[1..]);
                let affected = r.lenenc()?.unwrap_or(0);
                self.affected = affected;
                Ok(Exec::Done(affected))
            }
            Some(0xff) => Err(server_error(ErrPacket::parse(&payload)?)),
            Some(0xfb) => Err(protocol_error("LOCAL INFILE requests are not supported")),
            Some(_) => {
                let width = Reader::new(&payload)
                    .lenenc()?
                    .ok_or_else(|| protocol_error("malformed column count"))?
                    as usize;
                let mut names = Vec::with_capacity(width);
                for _ in 0..width {
                    let (_, def) = read_packet(&mut self.reader).await?;
                    let mut r = Reader::new(&def);
                    for _ in 0..4 {
                        r.lenenc_bytes()?;
                    }
                    let name = r.lenenc_bytes()?.unwrap_or_default();
                    names.push(String::from_utf8_lossy(name).into_owned());
                }
                let (_, eof) = read_packet(&mut self.reader).await?;
                if !is_eof(&eof) {
                    return Err(protocol_error("expected EOF after column definitions"));
                }
                self.state = State::Rows { width, count: 0 };
                Ok(Exec::Rows(names))
            }
            None => Err(protocol_error("empty mysql packet")),
        }
    }

    async fn simple(&mut self, sql: &str) -> Result<(), ProxyError> {
        match self.execute(sql).await? {
            Exec::Done(_) => Ok(()),
            Exec::Rows(_) => {
                self.drain().await?;
                Ok(())
            }
        }
    }
}

#[async_trait]
impl BackendConnection for MysqlConnection {
    async fn execute(&mut self, sql: &str) -> Result<Exec, ProxyError> {
        self.check()?;
        if matches!(self.state, State::Rows { .. }) {
            self.drain().await?;
        }
        let mut payload = Vec::with_capacity(sql.len() + 1);
        payload.push(COM_QUERY);
        payload.extend_from_slice(sql.as_bytes());
        let sent = async {
            write_packet(&mut self.writer, 0, &payload).await?;
            self.flush().await
        }
        .await;
        if let Err(e) = sent {
            return self.fail(e);
        }
        match self.read_result_header().await {
            Ok(exec) => Ok(exec),
            Err(e) => self.fail(e),
        }
    }

    async fn next_row(&mut self) -> Result<Option<Row>, ProxyError> {
        self.check()?;
        let State::Rows { width, count } = self.state else {
            return Ok(None);
        };
        let payload = match read_packet(&mut self.reader).await {
            Ok((_, p)) => p,
            Err(e) => return self.fail(e),
        };
        if is_eof(&payload) {
            self.state = State::Idle;
            self.affected = count;
            return Ok(None);
        }
        if payload.first() == Some(&0xff) {
            self.state = State::Idle;
            return match ErrPacket::parse(&payload) {
                Ok(err) => Err(server_error(err)),
                Err(e) => self.fail(e),
            };
        }
        let mut r = Reader::new(&payload);
        let mut row = Vec::with_capacity(width);
        for _ in 0..width {
            match r.lenenc_bytes() {
                Ok(v) => row.push(v.map(|b| String::from_utf8_lossy(b).into_owned())),
                Err(e) => return self.fail(e),
            }
        }
        self.state = State::Rows {
            width,
            count: count + 1,
        };
        Ok(Some(row))
    }

    fn last_affected(&self) -> u64 {
        self.affected
    }

    async fn begin(&mut self) -> Result<(), ProxyError> {
        self.simple("START TRANSACTION").await
    }

    async fn commit(&mut self) -> Result<(), ProxyError> {
        self.simple("COMMIT").await
    }

    async fn rollback(&mut self) -> Result<(), ProxyError> {
        self.simple("ROLLBACK").await
    }
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use blindex_core::attestation::SimulatedSigner;
use blindex_core::crypto::ArgonParams;
use blindex_core::schema::load_config;
use blindex_proxy::backend::{BackendConnector, WireConnector};
use blindex_proxy::{start_proxy, Attester, ProxyContext};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BackendProtocol {
    Reference,
    Mysql,
}

#[derive(Debug, Parser)]
#[command(name = "blindex-proxy", version, about = "Database encryption proxy")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// Address for the newline-JSON front end.
    #[arg(long, env = "BLINDEX_LISTEN", default_value = "127.0.0.1:4406")]
    listen: String,

    /// Database address.
    #[arg(long, env = "BLINDEX_BACKEND", default_value = "127.0.0.1:4407")]
    backend: String,

    #[arg(long, env = "BLINDEX_BACKEND_PROTOCOL", value_enum, default_value = "reference")]
    backend_protocol: BackendProtocol,

    /// MySQL credentials as user[:password][@database].
    #[arg(long, env = "BLINDEX_MYSQL_USER", default_value = "root")]
    mysql_user: String,

    /// Schema file declaring encrypted columns.
    #[arg(long, env = "BLINDEX_SCHEMA")]
    schema: Option<PathBuf>,

    /// Attestation provider, `simulated:<fixture-dir>`.
    #[arg(long, env = "BLINDEX_ATTESTATION", default_value = "simulated:fixtures/attestation")]
    attestation: String,

    #[arg(long, env = "BLINDEX_SESSION_TTL", default_value = "4h", value_parser = humantime::parse_duration)]
    session_ttl: Duration,

    /// Also serve HTTP/JSON (`/healthz`, `/stats`, `/query`) on this address.
    #[arg(long, env = "BLINDEX_HTTP")]
    http: Option<String>,

    /// Serve a MySQL protocol front end on this address.
    #[arg(long, env = "BLINDEX_MYSQL_LISTEN")]
    mysql_listen: Option<String>,

    /// Credentials the MySQL front end requires, `user[:password]`.
    #[arg(long, env = "BLINDEX_MYSQL_FRONT_AUTH")]
    mysql_front_auth: Option<String>,

    /// Argon2id parameters for new user records, `m=<KiB>,t=<passes>,p=<lanes>`.
    #[arg(long, env = "BLINDEX_ARGON_PARAMS", default_value = "m=65536,t=3,p=1")]
    argon_params: ArgonParams,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a simulated attestation hierarchy (root, chain, signing key).
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "blindex-simulated")]
        seed: String,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    if let Some(Command::GenFixtures { out, seed }) = &cli.command {
        let signer = SimulatedSigner::generate(seed.as_bytes());
        return match signer.write_fixtures(out) {
            Ok(()) => {
                println!("wrote {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        };
    }
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    match runtime.block_on(run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

async fn run(cli: Cli) -> Result<(), String> {
    let schema = match &cli.schema {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("{}: {e}", path.display()))?;
            load_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => load_config("").map_err(|e| e.to_string())?,
    };
    let dir = cli
        .attestation
        .strip_prefix("simulated:")
        .ok_or_else(|| format!("unsupported attestation provider {:?}", cli.attestation))?;
    let signer = SimulatedSigner::load_fixtures(std::path::Path::new(dir))
        .map_err(|e| format!("attestation fixtures: {e}"))?;

    let backend: Arc<dyn BackendConnector> = match cli.backend_protocol {
        BackendProtocol::Reference => WireConnector::new(cli.backend.clone()),
        BackendProtocol::Mysql => {
            let opts = blindex_proxy::mysql::MysqlOptions::parse(&cli.backend, &cli.mysql_user);
            let connector = blindex_proxy::mysql::MysqlConnector::new(opts);
            connector
                .probe()
                .await
                .map_err(|e| format!("mysql backend: {e}"))?;
            Arc::new(connector)
        }
    };
    let ctx = ProxyContext::builder(schema, Attester::simulated(signer), backend)
        .session_ttl(cli.session_ttl)
        .argon_params(cli.argon_params)
        .build();
    let proxy = start_proxy(ctx.clone(), &cli.listen, cli.http.as_deref())
        .await
        .map_err(|e| format!("listen: {e}"))?;
    tracing::info!(listen = %proxy.addr, http = ?proxy.http_addr, backend = %cli.backend, "proxy ready");
    let mysql_task = match &cli.mysql_listen {
        Some(addr) => {
            let factory = Arc::new(blindex_proxy::server::ProxyFactory(ctx));
            let auth = cli
                .mysql_front_auth
                .as_deref()
                .map(blindex_proxy::mysql::FrontAuth::parse);
            let (local, task) = blindex_proxy::mysql::start_front(factory, addr, auth)
                .await
                .map_err(|e| format!("mysql listen: {e}"))?;
            tracing::info!(%local, "mysql front end ready");
            Some(task)
        }
        None => None,
    };
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = proxy.wait() => {}
    }
    if let Some(t) = mysql_task {
        t.abort();
    }
    Ok(())
}

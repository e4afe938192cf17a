use blindex_proxy::server::start_refdb;
use blindex_proxy::ReferenceDb;
use clap::Parser;

/// In-memory reference database over the newline-JSON protocol.
#[derive(Debug, Parser)]
#[command(name = "blindex-refdb", version)]
struct Cli {
    #[arg(long, env = "BLINDEX_REFDB_LISTEN", default_value = "127.0.0.1:4407")]
    listen: String,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let (addr, task) = start_refdb(ReferenceDb::new(), &cli.listen).await?;
    tracing::info!(%addr, "reference database ready");
    tokio::select! {
        _ = tokio::signal::ctrl_c() => {}
        _ = task => {}
    }
    Ok(())
}

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use blindex_bench::workload::{self, RunOptions, Target, Variant, WorkloadKind};
use blindex_bench::{dataset, read_csv, report, write_csv};
use blindex_core::attestation::{load_pinned_root, simulated_measurement, Measurement, SIMULATED_MEASUREMENT_LABEL};
use clap::{Args, Parser, Subcommand};

/// Workload driver for the blindex proxy.
#[derive(Parser)]
#[command(name = "blindex-bench", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Summaries and linear fits for a measurement CSV.
    Report {
        #[arg(long = "in", value_name = "CSV")]
        input: PathBuf,
    },
    /// Print the proxy schema for a dataset of `rows` records.
    Schema {
        #[arg(long, default_value_t = 1000)]
        rows: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Proxy wire-protocol address.
    #[arg(long, default_value = "127.0.0.1:4406")]
    proxy: String,
    /// Backend address for `cleartext-direct`.
    #[arg(long, default_value = "127.0.0.1:4407")]
    backend: String,
    /// Proxy HTTP address; enables the rows_decrypted column.
    #[arg(long)]
    stats: Option<String>,
    /// `simulated:<fixture dir>`.
    #[arg(long, default_value = "simulated:fixtures/attestation")]
    attestation: String,
    /// Expected proxy measurement as hex. Defaults to the simulated build.
    #[arg(long)]
    measurement: Option<String>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "select_n")]
    workload: Vec<WorkloadKind>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "e2e")]
    variant: Vec<Variant>,
    #[arg(long, default_value_t = 1000)]
    rows: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    reps: u32,
    /// N values for select_n and payload_size.
    #[arg(long = "n", value_delimiter = ',', default_value = "1,10,100,1000")]
    n_values: Vec<u64>,
    /// Name lengths for datasize_sweep.
    #[arg(long, value_delimiter = ',', default_value = "10,100,1000")]
    datasize: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Reuse the tables already in the backend.
    #[arg(long)]
    no_load: bool,
    #[arg(long, default_value = "bench")]
    user: String,
    #[arg(long, default_value = "bench")]
    password: String,
    /// Output CSV, `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

fn parse_measurement(hex: &str) -> Result<Measurement> {
    let hex = hex.trim();
    if hex.len() != 2 * std::mem::size_of::<Measurement>() || !hex.is_ascii() {
        bail!("measurement must be {} hex digits", 2 * std::mem::size_of::<Measurement>());
    }
    let mut m = [0u8; std::mem::size_of::<Measurement>()];
    for (i, byte) in m.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).context("measurement is not hex")?;
    }
    Ok(m)
}

fn target(args: &RunArgs) -> Result<Target> {
    let dir = args
        .attestation
        .strip_prefix("simulated:")
        .ok_or_else(|| anyhow!("unsupported attestation mode {:?}", args.attestation))?;
    let root = load_pinned_root(Path::new(dir)).with_context(|| format!("loading pinned root from {dir}"))?;
    let measurement = match &args.measurement {
        Some(hex) => parse_measurement(hex)?,
        None => simulated_measurement(SIMULATED_MEASUREMENT_LABEL),
    };
    Ok(Target {
        proxy: args.proxy.clone(),
        backend: args.backend.clone(),
        stats: args.stats.clone(),
        expected: HashSet::from([measurement]),
        root: Some(root),
        user: args.user.clone(),
        password: args.password.clone(),
    })
}

async fn run(args: RunArgs) -> Result<()> {
    let target = if args.variant.iter().any(|v| v.encrypted()) {
        target(&args)?
    } else {
        Target {
            proxy: args.proxy.clone(),
            backend: args.backend.clone(),
            stats: args.stats.clone(),
            expected: HashSet::new(),
            root: None,
            user: args.user.clone(),
            password: args.password.clone(),
        }
    };
    let opts = RunOptions {
        rows: args.rows,
        seed: args.seed,
        reps: args.reps,
        n_values: args.n_values.clone(),
        datasizes: args.datasize.clone(),
        parallel: args.parallel,
        skip_load: args.no_load,
        ..RunOptions::default()
    };
    let mut records = Vec::new();
    for &kind in &args.workload {
        for &variant in &args.variant {
            let rs = workload::run(&target, kind, variant, &opts)
                .await
                .with_context(|| format!("{} / {}", kind.as_str(), variant.as_str()))?;
            records.extend(rs);
        }
    }
    if args.out.as_os_str() == "-" {
        write_csv(io::stdout().lock(), &records)?;
    } else {
        let f = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        write_csv(f, &records)?;
    }
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Some(Command::Report { input }) => {
            let f = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let records = read_csv(f)?;
            print!("{}", report::render(&report::summarize(&records)));
        }
        Some(Command::Schema { rows }) => {
            io::stdout().write_all(dataset::schema_toml(rows).as_bytes())?;
        }
        None => run(cli.run).await?,
    }
    Ok(())
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context as _};
use clap::{Args, Parser, Subcommand};
use lisps_core::clock::SystemClock;
use lisps_core::config::Config;
use lisps_core::ledger::Genesis;
use lisps_core::security::{hia_key, verify_hashed_index, HiaVerdict, LedgerView};
use lisps_core::wire::FrameDecoder;
use lisps_node::bench::run_bench;
use lisps_node::edge::{run_edge, EdgeOptions, TOKEN_FRESHNESS_MS};
use lisps_node::fog::{run_fog, FogOptions};
use lisps_node::keys::load_key;
use lisps_node::miner::{Miner, MinerOptions};
use lisps_node::orchestrate::{lisps_exe, run_scenario, SimOptions};
use lisps_node::server::write_addr_file;
use lisps_node::HttpLedger;

#[derive(Parser)]
#[command(name = "lisps", version, about = "Edge feature streaming, fog scoring and ledger services")]
struct Cli {
    /// INI configuration file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scenario seed.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Address to bind, e.g. 127.0.0.1:8080 (port 0 picks a free one).
    #[arg(long, global = true)]
    listen: Option<String>,
    /// Ledger node addresses (comma separated or repeated).
    #[arg(long, global = true, value_delimiter = ',')]
    ledger: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an edge camera node.
    Edge(EdgeArgs),
    /// Run the fog node against one or more edges.
    Fog(FogArgs),
    /// Run a ledger miner.
    Miner(MinerArgs),
    /// Run a full scenario (miners, edges, fog) as local processes.
    Sim(SimArgs),
    /// Throughput and latency benchmarks.
    Bench(BenchArgs),
    /// Check a recorded wire stream against the ledger's hashed index.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct EdgeArgs {
    #[arg(long, default_value = "cam-01")]
    camera: String,
    /// Seed file, hex seed or key name.
    #[arg(long)]
    key: String,
    /// Directory for the wire copy and event log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    addr_file: Option<PathBuf>,
    /// Seconds to wait for the first subscriber before capturing.
    #[arg(long)]
    wait_subscriber: Option<u64>,
    /// Process frames as fast as possible.
    #[arg(long)]
    unpaced: bool,
}

#[derive(Args)]
struct FogArgs {
    /// Edge node address (repeatable).
    #[arg(long, required = true)]
    edge: Vec<String>,
    #[arg(long)]
    key: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seconds to keep retrying unreachable edges and refused streams.
    #[arg(long, default_value_t = 60)]
    connect_timeout: u64,
}

#[derive(Args)]
struct MinerArgs {
    #[arg(long)]
    genesis: PathBuf,
    /// Proposer key; omit for a non-mining replica.
    #[arg(long)]
    key: Option<String>,
    /// Key that signs `POST /register` transactions.
    #[arg(long)]
    registrar: Option<String>,
    /// Peer miner address (repeatable).
    #[arg(long)]
    peer: Vec<String>,
    /// File with one peer address per line, re-read while running.
    #[arg(long)]
    peers_file: Option<PathBuf>,
    #[arg(long)]
    addr_file: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value = "sim-out")]
    out: PathBuf,
    /// Seconds allowed for the run once the ledger is up.
    #[arg(long, default_value_t = 600)]
    timeout: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
    /// Shorter runs.
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Wire file written by an edge.
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, default_value = "cam-01")]
    camera: String,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn ledger(addrs: &[String]) -> anyhow::Result<Arc<HttpLedger>> {
    if addrs.is_empty() {
        bail!("--ledger is required");
    }
    Ok(Arc::new(HttpLedger::connect_within(addrs, Duration::from_secs(20))?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("lisps: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Edge(a) => {
            let report = run_edge(EdgeOptions {
                config,
                seed: cli.seed,
                camera: a.camera,
                listen: cli.listen.unwrap_or_else(|| "127.0.0.1:8080".into()),
                ledger: ledger(&cli.ledger)?,
                key: load_key(&a.key)?,
                clock: Arc::new(SystemClock),
                out_dir: a.out,
                addr_file: a.addr_file,
                wait_subscriber: a.wait_subscriber.map(Duration::from_secs),
                paced: !a.unpaced,
            })?;
            println!("{}", report.summary_line());
        }
        Command::Fog(a) => {
            let report = run_fog(FogOptions {
                config,
                edges: a.edge,
                key: load_key(&a.key)?,
                clock: Arc::new(SystemClock),
                out_dir: a.out,
                connect_timeout: Duration::from_secs(a.connect_timeout),
            })?;
            for (cam, n) in &report.frames {
                println!("frames {cam} {n}");
            }
            println!(
                "alerts {} decode_errors {} reconnects {}",
                report.alerts, report.decode_errors, report.reconnects
            );
        }
        Command::Miner(a) => {
            let text = std::fs::read_to_string(&a.genesis).with_context(|| a.genesis.display().to_string())?;
            let genesis: Genesis = text.parse().map_err(|e: String| anyhow!("genesis: {e}"))?;
            let miner = Miner::start(
                cli.listen.as_deref().unwrap_or("127.0.0.1:9000"),
                MinerOptions {
                    genesis,
                    key: a.key.as_deref().map(load_key).transpose()?,
                    peers: a.peer,
                    peers_file: a.peers_file,
                    registrar: a.registrar.as_deref().map(load_key).transpose()?,
                    clock: Arc::new(SystemClock),
                    token_freshness_ms: TOKEN_FRESHNESS_MS,
                },
            )?;
            if let Some(p) = &a.addr_file {
                write_addr_file(p, miner.addr())?;
            }
            eprintln!("miner listening on {}", miner.url());
            miner.run_forever();
        }
        Command::Sim(a) => {
            let outcome = run_scenario(&SimOptions {
                config,
                seed: cli.seed,
                out_dir: a.out,
                exe: lisps_exe()?,
                timeout: Duration::from_secs(a.timeout),
            })?;
            print!("{}", outcome.metrics.to_text());
        }
        Command::Bench(a) => {
            print!("{}", run_bench(&config, cli.seed, &a.out, lisps_exe()?, a.quick)?);
        }
        Command::Verify(a) => {
            let view = ledger(&cli.ledger)?;
            let bytes = std::fs::read(&a.stream).with_context(|| a.stream.display().to_string())?;
            let report = verify_stream(&*view, &a.camera, &bytes)?;
            print!("{}", report.text);
            if report.tampered > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

struct VerifyReport {
    text: String,
    tampered: usize,
}

/// One line per frame (`frame <i> authentic|tampered|unknown`), one `region` line per run of
/// undecodable bytes, then a summary.
fn verify_stream(view: &dyn LedgerView, camera: &str, bytes: &[u8]) -> anyhow::Result<VerifyReport> {
    let mut text = String::new();
    let (mut authentic, mut tampered, mut unknown) = (0usize, 0usize, 0usize);
    let mut decoder = FrameDecoder::new();
    decoder.push(bytes);
    let mut offset = 0usize;
    let mut bad: Option<(usize, usize)> = None;
    let close = |bad: &mut Option<(usize, usize)>, text: &mut String, tampered: &mut usize| {
        if let Some((start, end)) = bad.take() {
            text.push_str(&format!("region {start}..{end} tampered\n"));
            *tampered += 1;
        }
    };
    while let Some(item) = decoder.next_frame() {
        match item {
            Ok(f) => {
                close(&mut bad, &mut text, &mut tampered);
                let i = f.frame.frame_index;
                let verdict = if f.frame.camera_id != camera {
                    HiaVerdict::Tampered
                } else {
                    verify_hashed_index(view, &hia_key(camera, i), &f.raw)?
                };
                match verdict {
                    HiaVerdict::Authentic => authentic += 1,
                    HiaVerdict::Tampered => tampered += 1,
                    HiaVerdict::Unknown => unknown += 1,
                }
                text.push_str(&format!("frame {i} {}\n", verdict.as_str()));
                offset += f.raw.len();
            }
            Err(e) => {
                let end = offset + e.consumed;
                bad = Some(bad.map_or((offset, end), |(s, _)| (s, end)));
                offset = end;
            }
        }
    }
    close(&mut bad, &mut text, &mut tampered);
    if decoder.pending() > 0 {
        text.push_str(&format!("region {offset}..{} truncated\n", bytes.len()));
        tampered += 1;
    }
    text.push_str(&format!(
        "summary authentic={authentic} tampered={tampered} unknown={unknown}\n"
    ));
    Ok(VerifyReport { text, tampered })
}

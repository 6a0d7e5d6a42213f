//! `mnemo` command-line front end.
//!
//! State lives in a snapshot file (`--store`); every command loads it, acts,
//! and writes it back if it changed. Exit codes: 0 success (a rejected query
//! is a success), 1 evaluation threshold missed, 2 usage, 3 bad data,
//! 4 transport/I-O.

use std::fmt::Write as _;
use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use mnemo_core::conversation::parse_conversation;
use mnemo_core::engine::default_providers;
use mnemo_core::error::{Error as CoreError, ParamError, PersistError};
use mnemo_core::eval::{parse_jsonl, parse_locomo, run_eval, EchoAnswerer, Thresholds};
use mnemo_core::serve::Server;
use mnemo_core::{Engine, EngineStats, HyperParams, RetrievalResult, Verdict};

#[derive(Parser, Debug)]
#[command(
    name = "mnemo",
    version,
    about = "Graph-structured conversational memory"
)]
struct Cli {
    /// TOML file with hyperparameters (field names as in the config reference).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Snapshot file holding the memory.
    #[arg(long, global = true, default_value = "mnemo.snap")]
    store: PathBuf,
    /// Number of candidates to return.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Confidence below which queries are rejected.
    #[arg(long = "tau-gate", global = true)]
    tau_gate: Option<f64>,
    /// Seed of the offline embedder.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Records,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Append the turns of a conversation file, consolidating on cadence.
    Ingest { file: PathBuf },
    /// Retrieve memories for a question.
    Query {
        #[arg(required = true, num_args = 1..)]
        text: Vec<String>,
    },
    /// Consolidate the pending window now.
    Consolidate,
    /// Prune edges and archive dormant nodes.
    Compact,
    /// Node, edge and degree counts.
    Stats,
    /// Replay a QA dataset and score answers.
    Eval {
        dataset: PathBuf,
        /// The dataset is in LoCoMo's JSON layout instead of the native one.
        #[arg(long)]
        locomo: bool,
        #[arg(long)]
        min_f1: Option<f64>,
        #[arg(long)]
        min_bleu1: Option<f64>,
        #[arg(long)]
        max_false_refusal_rate: Option<f64>,
    },
    /// Answer newline-delimited requests on stdin/stdout or a TCP socket.
    Serve {
        /// Address to listen on, e.g. 127.0.0.1:7878.
        #[arg(long)]
        listen: Option<String>,
    },
    /// Copy the store to another snapshot file.
    SnapshotSave { path: PathBuf },
    /// Replace the store with a snapshot file after verifying it.
    SnapshotLoad { path: PathBuf },
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
struct ThresholdMissed(Vec<String>);

impl std::fmt::Display for ThresholdMissed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "thresholds missed: {}", self.0.join("; "))
    }
}

impl std::error::Error for ThresholdMissed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ThresholdMissed>() {
            return 1;
        }
        if cause.is::<Usage>() || cause.is::<ParamError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                _ if e.is_transport() => 4,
                CoreError::Params(_) => 2,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<PersistError>() {
            return if matches!(e, PersistError::Transport(_)) {
                4
            } else {
                3
            };
        }
        if cause.is::<io::Error>() {
            return 4;
        }
    }
    3
}

impl Cli {
    fn wants_overrides(&self) -> bool {
        self.config.is_some() || self.k.is_some() || self.tau_gate.is_some() || self.seed.is_some()
    }

    /// `base` overlaid with the config file and flags.
    fn params(&self, base: &HyperParams) -> Result<HyperParams> {
        let mut p = match &self.config {
            Some(path) => HyperParams::from_file(path)
                .with_context(|| format!("config {}", path.display()))?,
            None => base.clone(),
        };
        if let Some(k) = self.k {
            p.top_k = k;
        }
        if let Some(t) = self.tau_gate {
            p.tau_gate = t;
        }
        if let Some(s) = self.seed {
            p.embed_seed = s;
        }
        p.validate()?;
        Ok(p)
    }

    /// The stored engine, or an empty one when the store does not exist yet.
    fn open(&self) -> Result<Engine> {
        if self.store.exists() {
            let mut e = Engine::load(&self.store)
                .with_context(|| format!("store {}", self.store.display()))?;
            if self.wants_overrides() {
                let p = self.params(e.params())?;
                e.set_params(p)?;
            }
            info!(
                "loaded {} nodes from {}",
                e.graph().len(),
                self.store.display()
            );
            Ok(e)
        } else {
            info!("store {} not found, starting empty", self.store.display());
            Ok(Engine::new(self.params(&HyperParams::default())?)?)
        }
    }

    fn save(&self, e: &Engine) -> Result<()> {
        let bytes = e
            .save(&self.store)
            .with_context(|| format!("store {}", self.store.display()))?;
        info!("wrote {bytes} bytes to {}", self.store.display());
        Ok(())
    }
}

fn print_json(v: serde_json::Value) {
    println!("{v}");
}

fn query_table(r: &RetrievalResult) -> String {
    let mut out = String::new();
    let verdict = match r.verdict {
        Verdict::Answerable => "answerable",
        Verdict::Rejected => "rejected",
    };
    let _ = writeln!(out, "verdict: {verdict} (confidence {:.4})", r.confidence);
    if let Some(m) = &r.rejection_message {
        let _ = writeln!(out, "{m}");
    }
    if !r.candidates.is_empty() {
        let _ = writeln!(
            out,
            "{:>4}  {:<8}  {:>6}  {:>6}  {:>6}  {:>6}  text",
            "rank", "kind", "score", "sim", "act", "prior"
        );
    }
    for c in &r.candidates {
        let text = c.text.replace('\n', " / ");
        let _ = writeln!(
            out,
            "{:>4}  {:<8}  {:>6.3}  {:>6.3}  {:>6.3}  {:>6.3}  {text}",
            c.rank,
            format!("{:?}", c.kind).to_lowercase(),
            c.score,
            c.sim,
            c.activation,
            c.prior
        );
    }
    out
}

fn stats_table(s: &EngineStats) -> String {
    let mut out = String::new();
    let rows = [
        ("episodic nodes", s.episodic_nodes as u64),
        ("semantic nodes", s.semantic_nodes as u64),
        ("temporal edges", s.temporal_edges as u64),
        ("abstraction edges", s.abstraction_edges as u64),
        ("association edges", s.association_edges as u64),
        ("archived nodes", s.archived_nodes as u64),
        ("archived edges", s.archived_edges as u64),
        ("turns", s.turns),
        ("consolidations", s.consolidations),
    ];
    for (name, v) in rows {
        let _ = writeln!(out, "{name:<18} {v}");
    }
    let _ = writeln!(out, "in-degree histogram (degree: nodes)");
    for (d, n) in &s.in_degree_histogram {
        let _ = writeln!(out, "  {d:>4}: {n}");
    }
    out
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Ingest { file } => {
            let turns = parse_conversation(&read(file)?).map_err(CoreError::from)?;
            let mut e = cli.open()?;
            let mut consolidations = 0;
            for t in &turns {
                let out = e
                    .ingest_turn(&t.content(), "", t.timestamp)
                    .with_context(|| format!("line {}", t.line))?;
                consolidations += usize::from(out.consolidation.is_some());
            }
            cli.save(&e)?;
            match cli.format {
                Format::Table => println!(
                    "ingested {} turns, {consolidations} consolidations",
                    turns.len()
                ),
                Format::Records => print_json(
                    serde_json::json!({"turns": turns.len(), "consolidations": consolidations}),
                ),
            }
        }
        Command::Query { text } => {
            let e = cli.open()?;
            let r = e.retrieve(&text.join(" "))?;
            match cli.format {
                Format::Table => print!("{}", query_table(&r)),
                Format::Records => print_json(serde_json::to_value(&r)?),
            }
        }
        Command::Consolidate => {
            let mut e = cli.open()?;
            let report = e.consolidate()?;
            cli.save(&e)?;
            let created = report.created().count();
            let merged = report.outcomes.len() - created;
            match cli.format {
                Format::Table => println!(
                    "{created} created, {merged} merged, {} edges",
                    report.edges_created.len()
                ),
                Format::Records => print_json(serde_json::json!({
                    "index": report.index,
                    "created": created,
                    "merged": merged,
                    "edges_created": report.edges_created.len(),
                })),
            }
        }
        Command::Compact => {
            let mut e = cli.open()?;
            let report = e.compact()?;
            cli.save(&e)?;
            match cli.format {
                Format::Table => println!(
                    "{} edges pruned, {} nodes archived",
                    report.pruned_edges,
                    report.archived.len()
                ),
                Format::Records => print_json(serde_json::to_value(&report)?),
            }
        }
        Command::Stats => {
            let s = cli.open()?.stats();
            match cli.format {
                Format::Table => print!("{}", stats_table(&s)),
                Format::Records => print_json(serde_json::to_value(&s)?),
            }
        }
        Command::Eval {
            dataset,
            locomo,
            min_f1,
            min_bleu1,
            max_false_refusal_rate,
        } => {
            let text = read(dataset)?;
            let ds = if *locomo {
                parse_locomo(&text).map_err(CoreError::from)?
            } else {
                parse_jsonl(&text)
            };
            let params = cli.params(&HyperParams::default())?;
            let (embedder, extractor) = default_providers(&params)?;
            let report = run_eval(&ds, &params, embedder, extractor, &EchoAnswerer)?;
            match cli.format {
                Format::Table => print!("{}", report.to_table()),
                Format::Records => print_json(serde_json::to_value(&report)?),
            }
            let missed = report.check(&Thresholds {
                min_weighted_f1: *min_f1,
                min_weighted_bleu1: *min_bleu1,
                max_false_refusal_rate: *max_false_refusal_rate,
            });
            if !missed.is_empty() {
                return Err(ThresholdMissed(missed).into());
            }
        }
        Command::Serve { listen } => {
            let store = cli.store.exists().then(|| cli.store.clone());
            let mut server = Server::new(cli.open()?, store);
            match listen {
                None => server.serve(io::stdin().lock(), io::stdout().lock())?,
                Some(addr) => {
                    let listener =
                        TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
                    info!("listening on {}", listener.local_addr()?);
                    for stream in listener.incoming() {
                        let stream = stream?;
                        let reader = BufReader::new(stream.try_clone()?);
                        if let Err(e) = server.serve(reader, stream) {
                            log::warn!("connection closed: {e}");
                        }
                    }
                }
            }
        }
        Command::SnapshotSave { path } => {
            if !cli.store.exists() {
                return Err(Usage(format!("store {} does not exist", cli.store.display())).into());
            }
            let bytes = cli.open()?.save(path)?;
            println!("saved {bytes} bytes to {}", path.display());
        }
        Command::SnapshotLoad { path } => {
            let e = Engine::load(path).with_context(|| format!("snapshot {}", path.display()))?;
            cli.save(&e)?;
            println!(
                "loaded {} nodes into {}",
                e.graph().len(),
                cli.store.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::thread;

use chrono::Duration;
use clap::Parser;
use ews_alertd::{Engine, EngineConfig, Outcome};
use ews_core::ModelBundle;
use serde_json::json;

/// Scores NDJSON vital-sign events and writes alerts as NDJSON to stdout;
/// rejected lines go to stderr. Reads stdin unless --listen or --replay.
#[derive(Debug, Parser)]
#[command(name = "ews-alertd", version)]
struct Cli {
    /// Bundle written by `ews-bench train`.
    #[arg(long)]
    model: PathBuf,
    /// Accept event streams on this TCP address, e.g. 127.0.0.1:7070.
    #[arg(long, conflicts_with = "replay")]
    listen: Option<String>,
    /// Replay an event log; event timestamps drive every decision.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long, default_value_t = ews_alertd::engine::DEFAULT_COOLDOWN_HOURS)]
    cooldown_hours: i64,
    /// Write the final census here after a replay or stdin run.
    #[arg(long, conflicts_with = "listen")]
    census: Option<PathBuf>,
}

type Sink = Arc<Mutex<io::Stdout>>;

fn emit(sink: &Sink, line: &str) {
    let mut out = sink.lock().expect("stdout lock");
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn report_error(source: &str, line_no: usize, err: &dyn std::fmt::Display) {
    let rec = json!({"source": source, "line": line_no, "error": err.to_string()});
    eprintln!("{rec}");
}

/// Processes one stream. Snapshot replies go to `reply` when given, else to
/// the alert sink.
fn pump(
    engine: &Engine,
    input: impl BufRead,
    source: &str,
    sink: &Sink,
    mut reply: Option<&mut TcpStream>,
) {
    for (i, line) in input.lines().enumerate() {
        let line = match line {
            Ok(l) => l,
            Err(e) => {
                report_error(source, i + 1, &e);
                break;
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        match engine.handle_line(&line) {
            Ok(Outcome::Registered) | Ok(Outcome::Scored(None)) => {}
            Ok(Outcome::Scored(Some(alert))) => emit(
                sink,
                &serde_json::to_string(&alert).expect("alert serializes"),
            ),
            Ok(Outcome::Snapshot(census)) => {
                let body = serde_json::to_string(&census).expect("census serializes");
                match reply.as_deref_mut() {
                    Some(stream) => {
                        let _ = writeln!(stream, "{body}");
                    }
                    None => emit(sink, &body),
                }
            }
            Err(e) => report_error(source, i + 1, &e),
        }
    }
}

fn serve(engine: Arc<Engine>, addr: &str, sink: Sink) -> io::Result<()> {
    let listener = TcpListener::bind(addr)?;
    eprintln!(
        "{}",
        json!({"listening": listener.local_addr()?.to_string()})
    );
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                report_error("listener", 0, &e);
                continue;
            }
        };
        let (engine, sink) = (Arc::clone(&engine), Arc::clone(&sink));
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map_or_else(|_| "peer".to_string(), |a| a.to_string());
            let mut writer = match stream.try_clone() {
                Ok(w) => w,
                Err(e) => return report_error(&peer, 0, &e),
            };
            pump(
                &engine,
                BufReader::new(stream),
                &peer,
                &sink,
                Some(&mut writer),
            );
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let bundle = match ModelBundle::load(&cli.model) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {}: {e}", cli.model.display());
            return ExitCode::from(2);
        }
    };
    if cli.cooldown_hours < 0 {
        eprintln!("error: --cooldown-hours must be non-negative");
        return ExitCode::from(1);
    }
    let config = EngineConfig {
        cooldown: Duration::hours(cli.cooldown_hours),
        ..EngineConfig::default()
    };
    let engine = Arc::new(Engine::new(bundle, config));
    let sink: Sink = Arc::new(Mutex::new(io::stdout()));

    if let Some(addr) = &cli.listen {
        return match serve(engine, addr, sink) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {addr}: {e}");
                ExitCode::from(2)
            }
        };
    }
    match &cli.replay {
        Some(path) => match File::open(path) {
            Ok(f) => pump(
                &engine,
                BufReader::new(f),
                &path.display().to_string(),
                &sink,
                None,
            ),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => pump(&engine, io::stdin().lock(), "stdin", &sink, None),
    }
    if let Some(path) = &cli.census {
        let body = serde_json::to_string_pretty(&engine.snapshot()).expect("census serializes");
        if let Err(e) = std::fs::write(path, body + "\n") {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(3);
        }
    }
    ExitCode::SUCCESS
}

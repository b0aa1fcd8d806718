use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use autohouse::client::{Client, ClientError};
use autohouse::server;
use autohouse_core::daemon::{ConfigError, Daemon, ResolvedConfig, StateSnapshot, DEFAULT_BIND};
use autohouse_core::events::EventRecord;
use autohouse_core::hal::BackendKind;
use autohouse_core::house::default_house;
use autohouse_core::sim::load_scenario_file;
use autohouse_core::controller::CommandReply;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Auto Electric House controller.
#[derive(Parser)]
#[command(name = "autohouse", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the daemon. With --until-ms, run the simulator headlessly and exit.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Scenario file; replaces the one named in the config.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        until_ms: Option<u64>,
        /// Event log path; replaces the one named in the config.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Listen address; replaces the one named in the config.
        #[arg(long)]
        bind: Option<String>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Run a scenario on the simulator and print the resulting event log.
    Replay {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        until_ms: u64,
        /// Defaults to the built-in house, armed on start.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the log here. The file must not exist yet.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Show zones, alarm and tick of a running daemon.
    Status {
        #[command(flatten)]
        conn: Conn,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Switch a zone light.
    Light {
        zone: String,
        state: OnOff,
        #[command(flatten)]
        conn: Conn,
    },
    Arm {
        #[command(flatten)]
        conn: Conn,
    },
    Disarm {
        #[command(flatten)]
        conn: Conn,
    },
    Reset {
        #[command(flatten)]
        conn: Conn,
    },
    /// Print event records after --since; --follow keeps streaming.
    Events {
        #[arg(long, default_value_t = 0)]
        since: u64,
        #[arg(long)]
        follow: bool,
        #[command(flatten)]
        conn: Conn,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct Conn {
    /// Daemon address; defaults to the bind address of --config.
    #[arg(long)]
    addr: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api {
                status: 400,
                message,
                violations,
            } => Failure::Usage(format!("{message}: {}", violations.join("; "))),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Run {
            config,
            scenario,
            until_ms,
            log,
            bind,
            format,
        } => {
            let mut cfg = ResolvedConfig::from_file(&config)?;
            if let Some(path) = scenario {
                let events = load_scenario_file(&path).map_err(ConfigError::from)?;
                cfg = cfg.with_scenario(events)?;
            }
            if let Some(log) = log {
                cfg.log_path = log;
            }
            if let Some(bind) = bind {
                cfg.bind = bind;
            }
            let mut daemon = Daemon::from_config(&cfg).map_err(|e| Failure::Runtime(e.to_string()))?;
            match until_ms {
                Some(until) => {
                    daemon.run_until(until).map_err(|e| Failure::Runtime(e.to_string()))?;
                    print_state(&daemon.snapshot(), format);
                    Ok(())
                }
                None => serve(daemon, &cfg.bind),
            }
        }
        Cmd::Replay {
            scenario,
            until_ms,
            config,
            log,
        } => {
            let mut cfg = match config {
                Some(path) => ResolvedConfig::from_file(&path)?,
                None => ResolvedConfig {
                    house: default_house(),
                    backend: BackendKind::Sim,
                    scenario: Vec::new(),
                    arm_on_start: true,
                    bind: DEFAULT_BIND.to_string(),
                    log_path: PathBuf::new(),
                },
            };
            if cfg.backend != BackendKind::Sim {
                return Err(Failure::Usage("replay needs the sim backend".into()));
            }
            let events = load_scenario_file(&scenario).map_err(ConfigError::from)?;
            cfg = cfg.with_scenario(events)?;
            let log = match log {
                Some(path) if path.exists() => {
                    return Err(Failure::Usage(format!("{} already exists", path.display())));
                }
                Some(path) => {
                    let (log, _) = autohouse_core::EventLog::open(&path).map_err(|e| Failure::Runtime(e.to_string()))?;
                    Some(log)
                }
                None => None,
            };
            let backend = autohouse_core::daemon::Backend::Sim(autohouse_core::SimWorld::with_scenario(
                &cfg.house,
                cfg.scenario.clone(),
            ));
            let runtime = |e: autohouse_core::DaemonError| Failure::Runtime(e.to_string());
            let mut daemon = Daemon::new(cfg.house.clone(), backend, cfg.arm_on_start, log, Vec::new()).map_err(runtime)?;
            let res = daemon.run_until(until_ms);
            let mut out = std::io::stdout().lock();
            for rec in daemon.history() {
                let _ = writeln!(out, "{}", rec.to_line());
            }
            res.map_err(runtime)
        }
        Cmd::Status { conn, format } => {
            let state = client(&conn)?.state()?;
            print_state(&state, format);
            Ok(())
        }
        Cmd::Light { zone, state, conn } => {
            let reply = client(&conn)?.set_light(&zone, matches!(state, OnOff::On))?;
            print_reply(&reply);
            Ok(())
        }
        Cmd::Arm { conn } => {
            print_reply(&client(&conn)?.arm()?);
            Ok(())
        }
        Cmd::Disarm { conn } => {
            print_reply(&client(&conn)?.disarm()?);
            Ok(())
        }
        Cmd::Reset { conn } => {
            print_reply(&client(&conn)?.reset()?);
            Ok(())
        }
        Cmd::Events {
            since,
            follow,
            conn,
            format,
        } => {
            let c = client(&conn)?;
            let mut out = std::io::stdout().lock();
            let mut emit = |rec: &EventRecord| {
                let line = match format {
                    Format::Json => rec.to_line(),
                    Format::Text => text_record(rec),
                };
                // Stop quietly when the reader goes away.
                writeln!(out, "{line}").and_then(|_| out.flush()).is_ok()
            };
            if follow {
                c.follow(since, emit)?;
            } else {
                for rec in c.events_since(since)? {
                    if !emit(&rec) {
                        break;
                    }
                }
            }
            Ok(())
        }
    }
}

fn client(conn: &Conn) -> Result<Client, Failure> {
    let addr = match (&conn.addr, &conn.config) {
        (Some(a), _) => a.clone(),
        (None, Some(path)) => bind_of(path)?,
        (None, None) => DEFAULT_BIND.to_string(),
    };
    Ok(Client::new(&addr))
}

fn bind_of(path: &Path) -> Result<String, Failure> {
    Ok(autohouse_core::daemon::DaemonConfig::load(path)?.bind)
}

fn serve(daemon: Daemon, bind: &str) -> Result<(), Failure> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Runtime(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::Runtime(format!("cannot listen on {bind}: {e}")))?;
        let addr = listener.local_addr().map_err(|e| Failure::Runtime(e.to_string()))?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        server::serve(daemon, listener, shutdown)
            .await
            .map_err(|e| Failure::Runtime(e.to_string()))
    })
}

fn on_off(b: bool) -> &'static str {
    if b {
        "on"
    } else {
        "off"
    }
}

fn print_state(s: &StateSnapshot, format: Format) {
    if let Format::Json = format {
        println!("{}", serde_json::to_string(s).expect("state serializes"));
        return;
    }
    let c = &s.controller;
    for z in &c.zones {
        println!("zone.{}={}", z.id, on_off(z.output));
    }
    println!("siren={}", on_off(c.siren));
    println!("override={}", on_off(c.forced_all_on));
    println!("alarm={}", c.alarm.mode);
    println!("episode={}", c.alarm.episode);
    println!("tick={}", c.tick);
    println!("clock_ms={}", s.clock_ms);
    println!("backend={}", s.backend);
}

fn print_reply(r: &CommandReply) {
    match r {
        CommandReply::Accepted => println!("accepted"),
        CommandReply::Queued => println!("queued"),
        CommandReply::NoOp { reason } => println!("no-op: {reason}"),
    }
}

fn text_record(r: &EventRecord) -> String {
    let v = serde_json::to_value(r).expect("record serializes");
    format!("{} {} {} {}", r.seq, r.ts_ms, r.event.kind_name(), v["payload"])
}

//! Daemon configuration and the single-owner runtime that ties the
//! controller, the backend and the event log together.
//!
//! [`Daemon`] is synchronous. A network front end runs it on one task and
//! feeds it commands; headless runs call [`Daemon::run_until`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Command, CommandError, CommandReply, Controller, ControllerSnapshot};
use crate::events::{Event, EventLog, EventRecord, LogError};
use crate::hal::{BackendKind, HalBackend, HalError, HardwarePort};
use crate::house::{validate_config, HouseConfig, HouseError};
use crate::sim::{load_scenario_file, ScenarioError, ScenarioEvent, ScenarioKind, SimNotice, SimSnapshot, SimWorld};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HouseSource {
    Inline(HouseConfig),
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaemonConfig {
    pub house: HouseSource,
    pub backend: BackendKind,
    #[serde(default)]
    pub scenario: Option<PathBuf>,
    #[serde(default = "default_arm_on_start")]
    pub arm_on_start: bool,
    pub bind: String,
    pub log_path: PathBuf,
}

fn default_arm_on_start() -> bool {
    true
}

pub const DEFAULT_BIND: &str = "127.0.0.1:8470";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    House(#[from] HouseError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario entry {index} refers to unknown sensor {sensor_id:?}")]
    UnknownSensor { index: usize, sensor_id: String },
    #[error("a scenario needs the sim backend")]
    ScenarioWithoutSim,
}

/// A config file with every path resolved and every document loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub house: HouseConfig,
    pub backend: BackendKind,
    pub scenario: Vec<ScenarioEvent>,
    pub arm_on_start: bool,
    pub bind: String,
    pub log_path: PathBuf,
}

impl DaemonConfig {
    pub fn load(path: &Path) -> Result<DaemonConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Load referenced files relative to `base_dir` and validate everything.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedConfig, ConfigError> {
        let house = match &self.house {
            HouseSource::Inline(h) => {
                validate_config(h).map_err(HouseError::Invalid)?;
                h.clone()
            }
            HouseSource::Path(p) => HouseConfig::load(&base_dir.join(p))?,
        };
        let scenario = match &self.scenario {
            Some(p) => load_scenario_file(&base_dir.join(p))?,
            None => Vec::new(),
        };
        check_scenario(&house, self.backend, &scenario)?;
        Ok(ResolvedConfig {
            house,
            backend: self.backend,
            scenario,
            arm_on_start: self.arm_on_start,
            bind: self.bind.clone(),
            log_path: base_dir.join(&self.log_path),
        })
    }
}

impl ResolvedConfig {
    /// Read a config file and resolve it against the file's directory.
    pub fn from_file(path: &Path) -> Result<ResolvedConfig, ConfigError> {
        let cfg = DaemonConfig::load(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base)
    }

    pub fn with_scenario(mut self, events: Vec<ScenarioEvent>) -> Result<ResolvedConfig, ConfigError> {
        check_scenario(&self.house, self.backend, &events)?;
        self.scenario = events;
        Ok(self)
    }
}

fn check_scenario(house: &HouseConfig, backend: BackendKind, events: &[ScenarioEvent]) -> Result<(), ConfigError> {
    if !events.is_empty() && backend != BackendKind::Sim {
        return Err(ConfigError::ScenarioWithoutSim);
    }
    for (index, e) in events.iter().enumerate() {
        if let ScenarioKind::IrDisturbance { sensor_id, .. } = &e.kind {
            if house.sensor(sensor_id).is_none() {
                return Err(ConfigError::UnknownSensor {
                    index,
                    sensor_id: sensor_id.clone(),
                });
            }
        }
    }
    Ok(())
}

// A daemon holds exactly one of these, so the size gap costs nothing.
#[allow(clippy::large_enum_variant)]
pub enum Backend {
    Sim(SimWorld),
    External(Box<dyn HalBackend + Send>),
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Sim(w) => f.debug_tuple("Sim").field(&w.clock_ms()).finish(),
            Backend::External(b) => f.debug_tuple("External").field(&b.kind()).finish(),
        }
    }
}

impl HalBackend for Backend {
    fn kind(&self) -> BackendKind {
        match self {
            Backend::Sim(w) => w.kind(),
            Backend::External(b) => b.kind(),
        }
    }

    fn write_data(&mut self, value: u8) -> Result<(), HalError> {
        match self {
            Backend::Sim(w) => w.write_data(value),
            Backend::External(b) => b.write_data(value),
        }
    }

    fn read_status(&self) -> Result<u8, HalError> {
        match self {
            Backend::Sim(w) => w.read_status(),
            Backend::External(b) => b.read_status(),
        }
    }

    fn write_control(&mut self, value: u8) -> Result<(), HalError> {
        match self {
            Backend::Sim(w) => w.write_control(value),
            Backend::External(b) => b.write_control(value),
        }
    }
}

#[derive(Debug, Error)]
pub enum DaemonError {
    #[error("event log failure: {0}")]
    Storage(#[from] LogError),
    #[error("giving up after {0} consecutive hardware failures")]
    Hal(u32),
}

/// Full state as served to operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub backend: BackendKind,
    pub clock_ms: u64,
    #[serde(flatten)]
    pub controller: ControllerSnapshot,
    pub sim: Option<SimSnapshot>,
}

#[derive(Debug)]
pub struct Daemon {
    controller: Controller,
    backend: Backend,
    log: Option<EventLog>,
    history: Vec<EventRecord>,
    outbox: Vec<EventRecord>,
    poll_interval_ms: u64,
    started: Instant,
}

impl Daemon {
    /// Build a daemon for `cfg`, opening its event log.
    pub fn from_config(cfg: &ResolvedConfig) -> Result<Daemon, DaemonError> {
        let (log, history) = EventLog::open(&cfg.log_path)?;
        let backend = match cfg.backend {
            BackendKind::Sim => Backend::Sim(SimWorld::with_scenario(&cfg.house, cfg.scenario.clone())),
            BackendKind::Hardware => Backend::External(Box::new(HardwarePort::default())),
        };
        Daemon::new(cfg.house.clone(), backend, cfg.arm_on_start, Some(log), history)
    }

    /// Build a daemon over an explicit backend. `history` is what the log
    /// already holds.
    pub fn new(
        house: HouseConfig,
        backend: Backend,
        arm_on_start: bool,
        log: Option<EventLog>,
        history: Vec<EventRecord>,
    ) -> Result<Daemon, DaemonError> {
        let last_seq = history.last().map_or(0, |r| r.seq);
        let poll_interval_ms = house.poll_interval_ms;
        let controller = Controller::new(house, backend.kind(), last_seq);
        let mut d = Daemon {
            controller,
            backend,
            log,
            history,
            outbox: Vec::new(),
            poll_interval_ms,
            started: Instant::now(),
        };
        let now = d.now_ms();
        let recs = d.controller.start(&mut d.backend, arm_on_start, now);
        d.commit(recs)?;
        Ok(d)
    }

    pub fn poll_interval_ms(&self) -> u64 {
        self.poll_interval_ms
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn sim(&self) -> Option<&SimWorld> {
        match &self.backend {
            Backend::Sim(w) => Some(w),
            Backend::External(_) => None,
        }
    }

    /// Sim clock in sim mode, milliseconds since start otherwise.
    pub fn now_ms(&self) -> u64 {
        match &self.backend {
            Backend::Sim(w) => w.clock_ms(),
            Backend::External(_) => self.started.elapsed().as_millis() as u64,
        }
    }

    /// Every record in the log, oldest first.
    pub fn history(&self) -> &[EventRecord] {
        &self.history
    }

    pub fn events_since(&self, seq: u64) -> &[EventRecord] {
        let start = self.history.partition_point(|r| r.seq <= seq);
        &self.history[start..]
    }

    /// Records committed since the last call.
    pub fn take_new_records(&mut self) -> Vec<EventRecord> {
        std::mem::take(&mut self.outbox)
    }

    /// One poll period: advance the simulator (if any), then run the controller.
    pub fn tick(&mut self) -> Result<(), DaemonError> {
        if let Backend::Sim(world) = &mut self.backend {
            world.step(self.poll_interval_ms);
            let now = world.clock_ms();
            let notices = world.drain_notices();
            let recs = notices
                .into_iter()
                .filter_map(|n| notice_event(n, now))
                .map(|(ts, e)| self.controller.record(ts, e))
                .collect();
            self.commit(recs)?;
        }
        let now = self.now_ms();
        let recs = self.controller.poll_tick(&mut self.backend, now);
        self.commit(recs)?;
        if self.controller.halted() {
            return Err(DaemonError::Hal(crate::controller::MAX_HAL_FAILURES));
        }
        Ok(())
    }

    /// Tick until the sim clock reaches `until_ms`. Ticks land on multiples of
    /// the poll interval; no tick runs at time zero.
    ///
    /// With an external backend this paces ticks in real time instead.
    pub fn run_until(&mut self, until_ms: u64) -> Result<(), DaemonError> {
        let poll = self.poll_interval_ms;
        match self.backend {
            Backend::Sim(_) => {
                while self.now_ms() + poll <= until_ms {
                    self.tick()?;
                }
            }
            Backend::External(_) => {
                while self.now_ms() + poll <= until_ms {
                    std::thread::sleep(std::time::Duration::from_millis(poll));
                    self.tick()?;
                }
            }
        }
        Ok(())
    }

    pub fn handle(&mut self, cmd: &Command) -> Result<Result<CommandReply, CommandError>, DaemonError> {
        let now = self.now_ms();
        if let Command::Inject { event } = cmd {
            let Backend::Sim(world) = &mut self.backend else {
                return Ok(self.controller.handle_command(cmd, now).0);
            };
            world.inject(event.clone());
            let mut recs: Vec<EventRecord> = world
                .drain_notices()
                .into_iter()
                .filter_map(|n| notice_event(n, now))
                .map(|(ts, e)| self.controller.record(ts, e))
                .collect();
            recs.insert(0, self.controller.record(now, Event::Command { command: cmd.clone() }));
            self.commit(recs)?;
            return Ok(Ok(CommandReply::Queued));
        }
        let (reply, recs) = self.controller.handle_command(cmd, now);
        self.commit(recs)?;
        Ok(reply)
    }

    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            backend: self.backend.kind(),
            clock_ms: self.now_ms(),
            controller: self.controller.snapshot(),
            sim: self.sim().map(SimWorld::snapshot),
        }
    }

    fn commit(&mut self, recs: Vec<EventRecord>) -> Result<(), DaemonError> {
        for rec in recs {
            if let Some(log) = &mut self.log {
                if let Err(e) = log.append(&rec) {
                    let warning = EventRecord {
                        seq: rec.seq,
                        ts_ms: rec.ts_ms,
                        event: Event::Warning {
                            message: format!("event log failure: {e}"),
                        },
                    };
                    // Best effort; the original failure is what gets reported.
                    let _ = log.append(&warning);
                    return Err(e.into());
                }
            }
            self.history.push(rec.clone());
            self.outbox.push(rec);
        }
        Ok(())
    }
}

fn notice_event(n: SimNotice, now_ms: u64) -> Option<(u64, Event)> {
    match n {
        SimNotice::Applied { at_ms, event } => match event.kind {
            ScenarioKind::PowerLoss => Some((at_ms, Event::PowerChange { powered: false })),
            ScenarioKind::PowerRestore => Some((at_ms, Event::PowerChange { powered: true })),
            ScenarioKind::LineStuck { line, level } => Some((
                at_ms,
                Event::Warning {
                    message: format!("line {line} stuck {level:?}"),
                },
            )),
            ScenarioKind::LineRelease { line } => Some((
                at_ms,
                Event::Warning {
                    message: format!("line {line} released"),
                },
            )),
            ScenarioKind::IrDisturbance { .. } => None,
        },
        SimNotice::Clamped { requested_ms, applied_ms } => Some((
            applied_ms,
            Event::Warning {
                message: format!("event dated {requested_ms} ms is in the past; applied at {applied_ms} ms"),
            },
        )),
        SimNotice::UnknownSensor { at_ms, sensor_id } => Some((
            at_ms,
            Event::Warning {
                message: format!("disturbance on unknown sensor {sensor_id:?} ignored"),
            },
        )),
        SimNotice::ControlMasked { value, stored } => Some((
            now_ms,
            Event::Warning {
                message: format!("control write {value:#04x} masked to {stored:#04x}"),
            },
        )),
    }
}

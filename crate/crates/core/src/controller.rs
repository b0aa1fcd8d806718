//! The control loop: poll the status lines, debounce the sensors, run the
//! alarm, and write the relay byte.
//!
//! [`Controller`] owns all controller state and is driven by two calls:
//! [`Controller::poll_tick`] once per poll interval and
//! [`Controller::handle_command`] for operator input. Both return the event
//! records they produced; the caller persists them in order.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alarm::{self, AlarmAction, AlarmCommand, AlarmMode, AlarmState, Debouncer};
use crate::events::{Event, EventRecord};
use crate::hal::{BackendKind, HalBackend, HalError};
use crate::house::{compose_data_byte, HouseConfig, ZoneKind};
use crate::port::decode_status;
use crate::sim::ScenarioEvent;

/// Consecutive HAL failures after which the controller gives up.
pub const MAX_HAL_FAILURES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command")]
pub enum Command {
    SetLight { zone_id: String, on: bool },
    Arm,
    Disarm,
    Reset,
    GetState,
    Inject { event: ScenarioEvent },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CommandReply {
    /// Applied immediately.
    Accepted,
    /// Handed to the alarm; takes effect on a later tick.
    Queued,
    NoOp { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("zone {0:?} not found")]
    NotFound(String),
    #[error("{0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DaemonState {
    pub alarm: AlarmState,
    pub debouncers: BTreeMap<String, Debouncer>,
    pub raw_sensors: BTreeMap<String, bool>,
    pub desired_lights: BTreeMap<String, bool>,
    pub siren: bool,
    pub forced_all_on: bool,
    pub last_status_byte: Option<u8>,
    pub last_data_byte: Option<u8>,
    pub tick_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneState {
    pub id: String,
    pub name: String,
    pub kind: ZoneKind,
    pub channel: u8,
    /// Operator's requested state.
    pub light: bool,
    /// Bit for this channel in the last byte written to the port.
    pub output: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllerSnapshot {
    pub tick: u64,
    pub alarm: AlarmState,
    pub zones: Vec<ZoneState>,
    pub siren: bool,
    pub forced_all_on: bool,
    pub last_status_byte: Option<u8>,
    pub last_data_byte: Option<u8>,
    pub pending_commands: usize,
    pub sensors: BTreeMap<String, bool>,
}

#[derive(Debug, Clone)]
pub struct Controller {
    house: HouseConfig,
    state: DaemonState,
    queue: VecDeque<AlarmCommand>,
    backend: BackendKind,
    next_seq: u64,
    hal_failures: u32,
}

impl Controller {
    /// `last_seq` is the sequence number of the last record already in the log.
    pub fn new(house: HouseConfig, backend: BackendKind, last_seq: u64) -> Self {
        let threshold = house.debounce_samples;
        let state = DaemonState {
            alarm: AlarmState::default(),
            debouncers: house
                .sensors
                .iter()
                .map(|s| (s.sensor_id.clone(), Debouncer::new(threshold)))
                .collect(),
            raw_sensors: house.sensors.iter().map(|s| (s.sensor_id.clone(), false)).collect(),
            desired_lights: house.all_off(),
            siren: false,
            forced_all_on: false,
            last_status_byte: None,
            last_data_byte: None,
            tick_count: 0,
        };
        Controller {
            house,
            state,
            queue: VecDeque::new(),
            backend,
            next_seq: last_seq + 1,
            hal_failures: 0,
        }
    }

    pub fn house(&self) -> &HouseConfig {
        &self.house
    }

    pub fn state(&self) -> &DaemonState {
        &self.state
    }

    pub fn backend(&self) -> BackendKind {
        self.backend
    }

    /// True once [`MAX_HAL_FAILURES`] consecutive HAL operations have failed.
    pub fn halted(&self) -> bool {
        self.hal_failures >= MAX_HAL_FAILURES
    }

    /// Stamp an event with the next sequence number.
    pub fn record(&mut self, ts_ms: u64, event: Event) -> EventRecord {
        let rec = EventRecord {
            seq: self.next_seq,
            ts_ms,
            event,
        };
        self.next_seq += 1;
        rec
    }

    /// Bring the card to a known state and apply `arm_on_start`.
    ///
    /// The initial data write is not logged as a DataWrite: it is not a change
    /// the operator caused.
    pub fn start(&mut self, hal: &mut impl HalBackend, arm_on_start: bool, now_ms: u64) -> Vec<EventRecord> {
        let mut out = Vec::new();
        if arm_on_start {
            let from = self.state.alarm.mode;
            self.state.alarm.mode = AlarmMode::Armed;
            out.push(self.record(
                now_ms,
                Event::AlarmTransition {
                    from,
                    to: AlarmMode::Armed,
                    episode: self.state.alarm.episode,
                },
            ));
        }
        let byte = self.composed_byte();
        match hal.write_data(byte) {
            Ok(()) => self.state.last_data_byte = Some(byte),
            Err(e) => out.push(self.hal_failure(&e, now_ms)),
        }
        out
    }

    pub fn poll_tick(&mut self, hal: &mut impl HalBackend, now_ms: u64) -> Vec<EventRecord> {
        let mut events = Vec::new();
        self.state.tick_count += 1;

        let status = match hal.read_status() {
            Ok(s) => s,
            Err(e) => return vec![self.hal_failure(&e, now_ms)],
        };
        let levels = match decode_status(status) {
            Ok(l) => l,
            Err(e) => return vec![self.hal_failure(&HalError::Io(e.to_string()), now_ms)],
        };
        self.state.last_status_byte = Some(status);

        let mode = self.state.alarm.mode;
        let mut disturbance: Option<String> = None;
        for sensor in &self.house.sensors {
            let level = levels.get(sensor.line);
            let raw = level.is_high();
            let prev_raw = self.state.raw_sensors.insert(sensor.sensor_id.clone(), raw);
            if prev_raw != Some(raw) {
                events.push(Event::SensorRaw {
                    sensor_id: sensor.sensor_id.clone(),
                    line: sensor.line,
                    level,
                });
            }
            let deb = self
                .state
                .debouncers
                .get_mut(&sensor.sensor_id)
                .expect("one debouncer per sensor");
            let was_stable = deb.stable();
            let stable = deb.debounce(raw);
            // Armed mode watches the level; a disarmed system only notes new onsets.
            let asserted = match mode {
                AlarmMode::Disarmed => stable && !was_stable,
                _ => stable,
            };
            if asserted && disturbance.is_none() {
                disturbance = Some(sensor.sensor_id.clone());
            }
        }

        let cmd = self.queue.pop_front().unwrap_or(AlarmCommand::None);
        let before = self.state.alarm;
        let (after, actions) = alarm::step(before, disturbance.as_deref(), cmd);
        self.state.alarm = after;
        if after.mode != before.mode {
            events.push(Event::AlarmTransition {
                from: before.mode,
                to: after.mode,
                episode: after.episode,
            });
        }
        for action in actions {
            match action {
                AlarmAction::RaiseAlert { sensor_id, episode } => events.push(Event::Alert { sensor_id, episode }),
                AlarmAction::AllLightsOn => self.state.forced_all_on = true,
                AlarmAction::SirenOn => self.state.siren = true,
                AlarmAction::SirenOff => self.state.siren = false,
                AlarmAction::LogOnly { reason } => events.push(Event::Warning { message: reason }),
            }
        }
        if after.mode != AlarmMode::Triggered {
            self.state.forced_all_on = false;
        }

        let byte = self.composed_byte();
        if self.state.last_data_byte != Some(byte) {
            if let Err(e) = hal.write_data(byte) {
                let mut out = self.stamp(now_ms, events);
                out.push(self.hal_failure(&e, now_ms));
                return out;
            }
            self.state.last_data_byte = Some(byte);
            events.push(Event::DataWrite { value: byte });
        }
        self.hal_failures = 0;
        self.stamp(now_ms, events)
    }

    pub fn handle_command(&mut self, cmd: &Command, now_ms: u64) -> (Result<CommandReply, CommandError>, Vec<EventRecord>) {
        match cmd {
            Command::SetLight { zone_id, on } => {
                let Some(current) = self.state.desired_lights.get(zone_id).copied() else {
                    return (Err(CommandError::NotFound(zone_id.clone())), vec![]);
                };
                if current == *on {
                    let reason = format!("{zone_id} is already {}", if *on { "on" } else { "off" });
                    return self.no_op(reason, now_ms);
                }
                self.state.desired_lights.insert(zone_id.clone(), *on);
                let rec = self.record(now_ms, Event::Command { command: cmd.clone() });
                (Ok(CommandReply::Accepted), vec![rec])
            }
            Command::Arm | Command::Disarm | Command::Reset => {
                let alarm_cmd = match cmd {
                    Command::Arm => AlarmCommand::Arm,
                    Command::Disarm => AlarmCommand::Disarm,
                    _ => AlarmCommand::Reset,
                };
                let projected = self.projected_alarm();
                let (_, actions) = alarm::step(projected, None, alarm_cmd);
                if let Some(AlarmAction::LogOnly { reason }) = actions.first() {
                    let reason = format!("{reason}: {cmd_name:?} while {mode}", cmd_name = alarm_cmd, mode = projected.mode);
                    return self.no_op(reason, now_ms);
                }
                self.queue.push_back(alarm_cmd);
                let rec = self.record(now_ms, Event::Command { command: cmd.clone() });
                (Ok(CommandReply::Queued), vec![rec])
            }
            Command::GetState => (Ok(CommandReply::Accepted), vec![]),
            Command::Inject { .. } => (
                Err(CommandError::Unsupported(format!(
                    "inject requires the simulator backend (running {})",
                    self.backend
                ))),
                vec![],
            ),
        }
    }

    pub fn snapshot(&self) -> ControllerSnapshot {
        let out = self.state.last_data_byte.unwrap_or(0);
        ControllerSnapshot {
            tick: self.state.tick_count,
            alarm: self.state.alarm,
            zones: self
                .house
                .zones
                .iter()
                .map(|z| ZoneState {
                    id: z.id.clone(),
                    name: z.name.clone(),
                    kind: z.kind,
                    channel: z.channel,
                    light: self.state.desired_lights[&z.id],
                    output: out & (1 << z.channel) != 0,
                })
                .collect(),
            siren: self.state.siren,
            forced_all_on: self.state.forced_all_on,
            last_status_byte: self.state.last_status_byte,
            last_data_byte: self.state.last_data_byte,
            pending_commands: self.queue.len(),
            sensors: self.state.raw_sensors.clone(),
        }
    }

    fn composed_byte(&self) -> u8 {
        if self.state.forced_all_on {
            0xFF
        } else {
            compose_data_byte(&self.house, &self.state.desired_lights, self.state.siren)
                .expect("desired lights always cover exactly the configured zones")
        }
    }

    /// Alarm state after every queued command has been applied.
    fn projected_alarm(&self) -> AlarmState {
        self.queue
            .iter()
            .fold(self.state.alarm, |s, &c| alarm::step(s, None, c).0)
    }

    fn no_op(&mut self, reason: String, now_ms: u64) -> (Result<CommandReply, CommandError>, Vec<EventRecord>) {
        let rec = self.record(
            now_ms,
            Event::Warning {
                message: format!("no-op: {reason}"),
            },
        );
        (Ok(CommandReply::NoOp { reason }), vec![rec])
    }

    fn hal_failure(&mut self, e: &HalError, now_ms: u64) -> EventRecord {
        self.hal_failures += 1;
        let message = format!("hal failure {}/{MAX_HAL_FAILURES}: {e}", self.hal_failures);
        self.record(now_ms, Event::Warning { message })
    }

    fn stamp(&mut self, ts_ms: u64, events: Vec<Event>) -> Vec<EventRecord> {
        events.into_iter().map(|e| self.record(ts_ms, e)).collect()
    }
}

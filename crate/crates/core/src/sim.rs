//! Deterministic stand-in for the relay card, the house wiring and the
//! infrared sensors.
//!
//! Time is an integer millisecond clock that moves only through
//! [`SimWorld::step`]. Nothing here reads the wall clock or a random source,
//! so a scenario replayed against the same call sequence yields the same
//! trace every time.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::card::CardState;
use crate::hal::{BackendKind, HalBackend, HalError};
use crate::house::HouseConfig;
use crate::port::{encode_status, Level, Line, LineGroup, LineLevels, ParallelPort, PortRegisters};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum ScenarioKind {
    IrDisturbance { sensor_id: String, duration_ms: u64 },
    PowerLoss,
    PowerRestore,
    LineStuck { line: Line, level: Level },
    LineRelease { line: Line },
}

/// A timed stimulus. Serialized flat: `{"t_ms": 500, "kind": "PowerLoss"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: ScenarioKind,
}

impl ScenarioEvent {
    pub fn new(t_ms: u64, kind: ScenarioKind) -> Self {
        ScenarioEvent { t_ms, kind }
    }

    pub fn from_value(v: Value) -> Result<ScenarioEvent, String> {
        let Value::Object(mut map) = v else {
            return Err("entry must be an object".to_string());
        };
        let t = map.remove("t_ms").ok_or("missing field `t_ms`")?;
        let t_ms = match t.as_u64() {
            Some(t) => t,
            None if t.as_i64().is_some_and(|t| t < 0) => return Err(format!("t_ms must be non-negative, got {t}")),
            None => return Err(format!("t_ms must be a non-negative integer, got {t}")),
        };
        let kind: ScenarioKind = serde_json::from_value(Value::Object(map.clone())).map_err(|e| e.to_string())?;
        // Unit variants ignore extra keys during deserialization.
        if let Value::Object(known) = serde_json::to_value(&kind).map_err(|e| e.to_string())? {
            if let Some(extra) = map.keys().find(|k| !known.contains_key(*k)) {
                return Err(format!("unknown field `{extra}`"));
            }
        }
        match &kind {
            ScenarioKind::IrDisturbance { duration_ms: 0, .. } => {
                return Err("duration_ms must be positive".to_string());
            }
            ScenarioKind::LineStuck { line, .. } | ScenarioKind::LineRelease { line }
                if line.group() == LineGroup::Data =>
            {
                return Err(format!("{line} is a data line; only status and control lines can be faulted"));
            }
            _ => {}
        }
        Ok(ScenarioEvent { t_ms, kind })
    }
}

impl<'de> Deserialize<'de> for ScenarioEvent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        ScenarioEvent::from_value(v).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("malformed scenario document: {0}")]
    Malformed(String),
    #[error("scenario entry {index}: {message}")]
    Entry { index: usize, message: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

/// Parse a scenario document (a JSON array of events), sorted stably by time.
pub fn load_scenario(text: &str) -> Result<Vec<ScenarioEvent>, ScenarioError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ScenarioError::Malformed(e.to_string()))?;
    let Value::Array(entries) = doc else {
        return Err(ScenarioError::Malformed("top level must be an array".to_string()));
    };
    let mut events = entries
        .into_iter()
        .enumerate()
        .map(|(index, v)| ScenarioEvent::from_value(v).map_err(|message| ScenarioError::Entry { index, message }))
        .collect::<Result<Vec<_>, _>>()?;
    events.sort_by_key(|e| e.t_ms);
    Ok(events)
}

pub fn load_scenario_file(path: &Path) -> Result<Vec<ScenarioEvent>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    load_scenario(&text)
}

/// Something the world did that an observer may want to record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "notice")]
pub enum SimNotice {
    Applied { at_ms: u64, event: ScenarioEvent },
    Clamped { requested_ms: u64, applied_ms: u64 },
    UnknownSensor { at_ms: u64, sensor_id: String },
    ControlMasked { value: u8, stored: u8 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSnapshot {
    pub clock_ms: u64,
    pub card: CardState,
    pub registers: PortRegisters,
    pub levels: LineLevels,
    pub active_sensors: Vec<String>,
    pub stuck_lines: BTreeMap<Line, Level>,
    pub pending: usize,
    pub applied_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimWorld {
    clock_ms: u64,
    port: ParallelPort,
    card: CardState,
    levels: LineLevels,
    bindings: Vec<(String, Line)>,
    sensor_active_until_ms: BTreeMap<String, u64>,
    stuck: BTreeMap<Line, Level>,
    pending: VecDeque<ScenarioEvent>,
    applied_count: u64,
    notices: Vec<SimNotice>,
}

impl SimWorld {
    /// A powered card wired to the sensors of `house`, clock at zero.
    pub fn new(house: &HouseConfig) -> Self {
        let bindings = house.sensors.iter().map(|s| (s.sensor_id.clone(), s.line)).collect();
        let mut w = SimWorld {
            clock_ms: 0,
            port: ParallelPort::new(),
            card: CardState::powered(),
            levels: LineLevels::all_low(),
            bindings,
            sensor_active_until_ms: BTreeMap::new(),
            stuck: BTreeMap::new(),
            pending: VecDeque::new(),
            applied_count: 0,
            notices: Vec::new(),
        };
        w.recompute_levels();
        w
    }

    pub fn with_scenario(house: &HouseConfig, events: Vec<ScenarioEvent>) -> Self {
        let mut w = SimWorld::new(house);
        for e in events {
            w.enqueue(e);
        }
        w
    }

    pub fn clock_ms(&self) -> u64 {
        self.clock_ms
    }

    pub fn card(&self) -> &CardState {
        &self.card
    }

    pub fn levels(&self) -> &LineLevels {
        &self.levels
    }

    pub fn registers(&self) -> PortRegisters {
        let mut regs = self.port.registers();
        regs.status = encode_status(&self.levels);
        regs
    }

    pub fn pending(&self) -> impl Iterator<Item = &ScenarioEvent> {
        self.pending.iter()
    }

    pub fn applied_count(&self) -> u64 {
        self.applied_count
    }

    pub fn sensor_active(&self, sensor_id: &str) -> bool {
        self.sensor_active_until_ms
            .get(sensor_id)
            .is_some_and(|&until| self.clock_ms < until)
    }

    pub fn drain_notices(&mut self) -> Vec<SimNotice> {
        std::mem::take(&mut self.notices)
    }

    pub fn snapshot(&self) -> SimSnapshot {
        SimSnapshot {
            clock_ms: self.clock_ms,
            card: self.card,
            registers: self.registers(),
            levels: self.levels,
            active_sensors: self
                .sensor_active_until_ms
                .keys()
                .filter(|id| self.sensor_active(id))
                .cloned()
                .collect(),
            stuck_lines: self.stuck.clone(),
            pending: self.pending.len(),
            applied_count: self.applied_count,
        }
    }

    /// Advance the clock by `dt_ms` and apply every event now due.
    pub fn step(&mut self, dt_ms: u64) {
        assert!(dt_ms > 0, "simulation step must be positive");
        let now = self.clock_ms + dt_ms;
        while self.pending.front().is_some_and(|e| e.t_ms <= now) {
            let e = self.pending.pop_front().expect("front checked");
            self.apply(e);
        }
        self.clock_ms = now;
        self.sensor_active_until_ms.retain(|_, until| *until > now);
        self.recompute_levels();
    }

    /// Queue an event. Past-dated events are moved to the current clock.
    pub fn inject(&mut self, mut e: ScenarioEvent) {
        if e.t_ms < self.clock_ms {
            self.notices.push(SimNotice::Clamped {
                requested_ms: e.t_ms,
                applied_ms: self.clock_ms,
            });
            e.t_ms = self.clock_ms;
        }
        self.enqueue(e);
    }

    fn enqueue(&mut self, e: ScenarioEvent) {
        let at = self.pending.partition_point(|p| p.t_ms <= e.t_ms);
        self.pending.insert(at, e);
    }

    fn apply(&mut self, e: ScenarioEvent) {
        match &e.kind {
            ScenarioKind::IrDisturbance { sensor_id, duration_ms } => {
                if self.bindings.iter().any(|(id, _)| id == sensor_id) {
                    let until = e.t_ms + duration_ms;
                    let slot = self.sensor_active_until_ms.entry(sensor_id.clone()).or_insert(0);
                    *slot = (*slot).max(until);
                } else {
                    self.notices.push(SimNotice::UnknownSensor {
                        at_ms: e.t_ms,
                        sensor_id: sensor_id.clone(),
                    });
                }
            }
            ScenarioKind::PowerLoss => self.card = self.card.set_power(false),
            ScenarioKind::PowerRestore => self.card = self.card.set_power(true),
            ScenarioKind::LineStuck { line, level } => {
                self.stuck.insert(*line, *level);
            }
            ScenarioKind::LineRelease { line } => {
                self.stuck.remove(line);
            }
        }
        self.applied_count += 1;
        self.notices.push(SimNotice::Applied { at_ms: e.t_ms, event: e });
    }

    fn recompute_levels(&mut self) {
        let mut levels = *self.port.levels();
        for line in Line::STATUS {
            let active = self
                .bindings
                .iter()
                .any(|(id, l)| *l == line && self.sensor_active(id));
            levels.set(line, Level::from_bool(active));
        }
        for (&line, &level) in &self.stuck {
            levels.set(line, level);
        }
        self.levels = levels;
    }
}

impl HalBackend for SimWorld {
    fn kind(&self) -> BackendKind {
        BackendKind::Sim
    }

    fn write_data(&mut self, value: u8) -> Result<(), HalError> {
        self.port.write_data(value);
        self.card = self.card.apply_data(value);
        self.recompute_levels();
        Ok(())
    }

    fn read_status(&self) -> Result<u8, HalError> {
        Ok(encode_status(&self.levels))
    }

    fn write_control(&mut self, value: u8) -> Result<(), HalError> {
        let w = self.port.write_control(value);
        if w.masked_bits != 0 {
            self.notices.push(SimNotice::ControlMasked {
                value,
                stored: w.stored,
            });
        }
        self.recompute_levels();
        Ok(())
    }
}

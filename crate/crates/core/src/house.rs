//! Zones, sensors and relay wiring of the house.
//!
//! Six rooms and a lobby sit on the internal layer, each wired to one relay
//! channel. Infrared sensors sit on the external layer and report on status
//! lines. The spare eighth channel drives an alarm siren.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::card::CHANNELS;
use crate::port::{Line, LineGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneKind {
    Room,
    Lobby,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    External,
    Internal,
    DeepInternal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Zone {
    pub id: String,
    pub name: String,
    pub kind: ZoneKind,
    pub layer: Layer,
    pub channel: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensorTechnology {
    Infrared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorBinding {
    pub sensor_id: String,
    pub technology: SensorTechnology,
    pub line: Line,
    pub layer: Layer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseConfig {
    pub zones: Vec<Zone>,
    pub siren_channel: Option<u8>,
    pub sensors: Vec<SensorBinding>,
    pub poll_interval_ms: u64,
    pub debounce_samples: u32,
}

pub fn default_house() -> HouseConfig {
    let mut zones: Vec<Zone> = (1..=6)
        .map(|n| Zone {
            id: format!("room{n}"),
            name: format!("Room {n}"),
            kind: ZoneKind::Room,
            layer: Layer::Internal,
            channel: n - 1,
        })
        .collect();
    zones.push(Zone {
        id: "lobby".to_string(),
        name: "Lobby".to_string(),
        kind: ZoneKind::Lobby,
        layer: Layer::Internal,
        channel: 6,
    });
    HouseConfig {
        zones,
        siren_channel: Some(7),
        sensors: vec![SensorBinding {
            sensor_id: "ir-roof".to_string(),
            technology: SensorTechnology::Infrared,
            line: Line::Ack,
            layer: Layer::External,
        }],
        poll_interval_ms: 50,
        debounce_samples: 2,
    }
}

/// A single configuration problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    DuplicateChannel { channel: u8 },
    ChannelOutOfRange { owner: String, channel: u8 },
    LobbyCount { found: usize },
    NoSensors,
    DuplicateZoneId { id: String },
    DuplicateSensorId { id: String },
    EmptyId,
    SensorNotOnStatusLine { sensor_id: String, line: Line },
    DuplicateSensorLine { line: Line },
    ZoneLayer { zone_id: String, layer: Layer },
    SensorLayer { sensor_id: String, layer: Layer },
    NonPositivePollInterval,
    NonPositiveDebounce,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateChannel { channel } => write!(f, "duplicate channel {channel}"),
            Violation::ChannelOutOfRange { owner, channel } => {
                write!(f, "channel {channel} of {owner} is outside 0..7")
            }
            Violation::LobbyCount { found } => write!(f, "expected exactly one lobby, found {found}"),
            Violation::NoSensors => f.write_str("at least one sensor is required"),
            Violation::DuplicateZoneId { id } => write!(f, "duplicate zone id {id:?}"),
            Violation::DuplicateSensorId { id } => write!(f, "duplicate sensor id {id:?}"),
            Violation::EmptyId => f.write_str("ids must not be empty"),
            Violation::SensorNotOnStatusLine { sensor_id, line } => {
                write!(f, "sensor requires a status line ({sensor_id} is bound to {line})")
            }
            Violation::DuplicateSensorLine { line } => {
                write!(f, "status line {line} is bound to more than one sensor")
            }
            Violation::ZoneLayer { zone_id, layer } => {
                write!(f, "zone {zone_id} must be on the Internal layer, not {layer:?}")
            }
            Violation::SensorLayer { sensor_id, layer } => {
                write!(f, "sensor {sensor_id} must be on the External layer, not {layer:?}")
            }
            Violation::NonPositivePollInterval => f.write_str("poll_interval_ms must be positive"),
            Violation::NonPositiveDebounce => f.write_str("debounce_samples must be positive"),
        }
    }
}

/// Returns every violation found, in a fixed order.
pub fn validate_config(cfg: &HouseConfig) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();

    let mut owners: Vec<(String, u8)> = cfg.zones.iter().map(|z| (z.id.clone(), z.channel)).collect();
    if let Some(ch) = cfg.siren_channel {
        owners.push(("siren".to_string(), ch));
    }
    let mut seen = BTreeSet::new();
    let mut dup = BTreeSet::new();
    for (owner, ch) in &owners {
        if usize::from(*ch) >= CHANNELS {
            out.push(Violation::ChannelOutOfRange {
                owner: owner.clone(),
                channel: *ch,
            });
        }
        if !seen.insert(*ch) {
            dup.insert(*ch);
        }
    }
    out.extend(dup.into_iter().map(|channel| Violation::DuplicateChannel { channel }));

    let lobbies = cfg.zones.iter().filter(|z| z.kind == ZoneKind::Lobby).count();
    if lobbies != 1 {
        out.push(Violation::LobbyCount { found: lobbies });
    }

    let mut ids = BTreeSet::new();
    for z in &cfg.zones {
        if z.id.is_empty() {
            out.push(Violation::EmptyId);
        } else if !ids.insert(z.id.as_str()) {
            out.push(Violation::DuplicateZoneId { id: z.id.clone() });
        }
        if z.layer != Layer::Internal {
            out.push(Violation::ZoneLayer {
                zone_id: z.id.clone(),
                layer: z.layer,
            });
        }
    }

    if cfg.sensors.is_empty() {
        out.push(Violation::NoSensors);
    }
    let mut sensor_ids = BTreeSet::new();
    let mut lines = BTreeSet::new();
    for s in &cfg.sensors {
        if s.sensor_id.is_empty() {
            out.push(Violation::EmptyId);
        } else if !sensor_ids.insert(s.sensor_id.as_str()) {
            out.push(Violation::DuplicateSensorId { id: s.sensor_id.clone() });
        }
        if s.line.group() != LineGroup::Status {
            out.push(Violation::SensorNotOnStatusLine {
                sensor_id: s.sensor_id.clone(),
                line: s.line,
            });
        } else if !lines.insert(s.line) {
            out.push(Violation::DuplicateSensorLine { line: s.line });
        }
        if s.layer != Layer::External {
            out.push(Violation::SensorLayer {
                sensor_id: s.sensor_id.clone(),
                layer: s.layer,
            });
        }
    }

    if cfg.poll_interval_ms == 0 {
        out.push(Violation::NonPositivePollInterval);
    }
    if cfg.debounce_samples == 0 {
        out.push(Violation::NonPositiveDebounce);
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HouseError {
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("no light state given for zone {0:?}")]
    MissingZone(String),
    #[error("invalid house configuration: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("cannot read house configuration: {0}")]
    Io(String),
    #[error("malformed house configuration: {0}")]
    Parse(String),
}

pub fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

impl HouseConfig {
    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones.iter().find(|z| z.id == id)
    }

    pub fn sensor(&self, id: &str) -> Option<&SensorBinding> {
        self.sensors.iter().find(|s| s.sensor_id == id)
    }

    /// Parse a JSON house document and validate it.
    pub fn from_json(text: &str) -> Result<HouseConfig, HouseError> {
        let cfg: HouseConfig = serde_json::from_str(text).map_err(|e| HouseError::Parse(e.to_string()))?;
        validate_config(&cfg).map_err(HouseError::Invalid)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<HouseConfig, HouseError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HouseError::Io(format!("{}: {e}", path.display())))?;
        HouseConfig::from_json(&text)
    }

    pub fn all_off(&self) -> BTreeMap<String, bool> {
        self.zones.iter().map(|z| (z.id.clone(), false)).collect()
    }
}

/// Pack light states and the siren into the data byte.
pub fn compose_data_byte(
    cfg: &HouseConfig,
    lights: &BTreeMap<String, bool>,
    siren: bool,
) -> Result<u8, HouseError> {
    if let Some(unknown) = lights.keys().find(|id| cfg.zone(id).is_none()) {
        return Err(HouseError::UnknownZone(unknown.clone()));
    }
    let mut byte = 0u8;
    for z in &cfg.zones {
        match lights.get(&z.id) {
            Some(true) => byte |= 1 << z.channel,
            Some(false) => {}
            None => return Err(HouseError::MissingZone(z.id.clone())),
        }
    }
    if siren {
        if let Some(ch) = cfg.siren_channel {
            byte |= 1 << ch;
        }
    }
    Ok(byte)
}

/// Inverse of [`compose_data_byte`]. Bits on unassigned channels are ignored.
pub fn decompose_data_byte(cfg: &HouseConfig, value: u8) -> (BTreeMap<String, bool>, bool) {
    let lights = cfg
        .zones
        .iter()
        .map(|z| (z.id.clone(), value & (1 << z.channel) != 0))
        .collect();
    let siren = cfg.siren_channel.is_some_and(|ch| value & (1 << ch) != 0);
    (lights, siren)
}

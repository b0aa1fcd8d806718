//! Controller for a parallel-port driven relay card that switches the lights
//! of a house and runs an infrared intrusion alarm.
//!
//! The crate is layered bottom-up:
//!
//! - [`port`]: SPP register and pin model.
//! - [`hal`]: the three-call hardware boundary.
//! - [`card`]: the eight relay sub-circuits.
//! - [`house`]: zones, sensors and the data-byte codec.
//! - [`alarm`]: the latching alarm state machine.
//! - [`sim`]: a deterministic simulated card, house and sensor.
//! - [`controller`] and [`daemon`]: the poll loop, commands and event log.

pub mod alarm;
pub mod card;
pub mod controller;
pub mod daemon;
pub mod events;
pub mod hal;
pub mod house;
pub mod port;
pub mod sim;

pub use alarm::{AlarmAction, AlarmCommand, AlarmMode, AlarmState, Debouncer};
pub use card::{CardState, ComponentRatings, RelayChannel, Terminal};
pub use controller::{Command, CommandError, CommandReply, Controller};
pub use daemon::{Daemon, DaemonConfig, DaemonError, ResolvedConfig, StateSnapshot};
pub use events::{Event, EventLog, EventRecord};
pub use hal::{BackendKind, HalBackend, HalError};
pub use house::{default_house, HouseConfig};
pub use port::{Level, Line, LineLevels};
pub use sim::{ScenarioEvent, ScenarioKind, SimWorld};

//! Standard parallel port (SPP) model.
//!
//! The connector is split into three line groups: the eight data outputs
//! (D0-D7), five status inputs and three control outputs. Registers follow
//! the usual SPP layout:
//!
//! | register | bit | line   | inverted |
//! |----------|-----|--------|----------|
//! | status   | 3   | ERROR  | no       |
//! | status   | 4   | SLCT   | no       |
//! | status   | 5   | PE     | no       |
//! | status   | 6   | ACK    | no       |
//! | status   | 7   | BUSY   | yes      |
//! | control  | 1   | AUTOFD | yes      |
//! | control  | 2   | INIT   | no       |
//! | control  | 3   | SLCTIN | yes      |
//!
//! STROBE (control bit 0) is not wired on the relay card and always reads 0.

use std::fmt;
use std::str::FromStr;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LineGroup {
    Data,
    Status,
    Control,
}

/// One signal line on the 25-pin connector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Line {
    D0,
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
    Error,
    Slct,
    Pe,
    Ack,
    Busy,
    AutoFd,
    Init,
    SlctIn,
}

impl Line {
    pub const COUNT: usize = 16;

    pub const ALL: [Line; Line::COUNT] = [
        Line::D0,
        Line::D1,
        Line::D2,
        Line::D3,
        Line::D4,
        Line::D5,
        Line::D6,
        Line::D7,
        Line::Error,
        Line::Slct,
        Line::Pe,
        Line::Ack,
        Line::Busy,
        Line::AutoFd,
        Line::Init,
        Line::SlctIn,
    ];

    pub const DATA: [Line; 8] = [
        Line::D0,
        Line::D1,
        Line::D2,
        Line::D3,
        Line::D4,
        Line::D5,
        Line::D6,
        Line::D7,
    ];

    pub const STATUS: [Line; 5] = [Line::Error, Line::Slct, Line::Pe, Line::Ack, Line::Busy];

    pub const CONTROL: [Line; 3] = [Line::AutoFd, Line::Init, Line::SlctIn];

    pub fn group(self) -> LineGroup {
        match self {
            Line::D0
            | Line::D1
            | Line::D2
            | Line::D3
            | Line::D4
            | Line::D5
            | Line::D6
            | Line::D7 => LineGroup::Data,
            Line::Error | Line::Slct | Line::Pe | Line::Ack | Line::Busy => LineGroup::Status,
            Line::AutoFd | Line::Init | Line::SlctIn => LineGroup::Control,
        }
    }

    /// Connector hole number of the line.
    pub fn pin(self) -> u8 {
        match self {
            Line::D0 => 2,
            Line::D1 => 3,
            Line::D2 => 4,
            Line::D3 => 5,
            Line::D4 => 6,
            Line::D5 => 7,
            Line::D6 => 8,
            Line::D7 => 9,
            Line::Error => 15,
            Line::Slct => 13,
            Line::Pe => 12,
            Line::Ack => 10,
            Line::Busy => 11,
            Line::AutoFd => 14,
            Line::Init => 16,
            Line::SlctIn => 17,
        }
    }

    /// True when the register bit is the logical NOT of the wire level.
    pub fn inverted(self) -> bool {
        matches!(self, Line::Busy | Line::AutoFd | Line::SlctIn)
    }

    /// Register bit carrying this line within its group's register.
    pub fn register_bit(self) -> u8 {
        match self {
            Line::D0 => 0,
            Line::D1 => 1,
            Line::D2 => 2,
            Line::D3 => 3,
            Line::D4 => 4,
            Line::D5 => 5,
            Line::D6 => 6,
            Line::D7 => 7,
            Line::Error => 3,
            Line::Slct => 4,
            Line::Pe => 5,
            Line::Ack => 6,
            Line::Busy => 7,
            Line::AutoFd => 1,
            Line::Init => 2,
            Line::SlctIn => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Line::D0 => "D0",
            Line::D1 => "D1",
            Line::D2 => "D2",
            Line::D3 => "D3",
            Line::D4 => "D4",
            Line::D5 => "D5",
            Line::D6 => "D6",
            Line::D7 => "D7",
            Line::Error => "ERROR",
            Line::Slct => "SLCT",
            Line::Pe => "PE",
            Line::Ack => "ACK",
            Line::Busy => "BUSY",
            Line::AutoFd => "AUTOFD",
            Line::Init => "INIT",
            Line::SlctIn => "SLCTIN",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Line {
    type Err = PortError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Line::ALL
            .iter()
            .copied()
            .find(|l| l.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PortError::UnknownLine(s.to_string()))
    }
}

/// Connector hole number for `line`.
pub fn pin_of_line(line: Line) -> u8 {
    line.pin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Level {
    High,
    Low,
}

impl Level {
    pub fn from_bool(high: bool) -> Level {
        if high {
            Level::High
        } else {
            Level::Low
        }
    }

    pub fn is_high(self) -> bool {
        self == Level::High
    }
}

impl std::ops::Not for Level {
    type Output = Level;

    fn not(self) -> Level {
        match self {
            Level::High => Level::Low,
            Level::Low => Level::High,
        }
    }
}

/// Physical level of every connector line.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct LineLevels([Level; Line::COUNT]);

impl LineLevels {
    pub fn all_low() -> Self {
        LineLevels([Level::Low; Line::COUNT])
    }

    pub fn get(&self, line: Line) -> Level {
        self.0[line.index()]
    }

    pub fn set(&mut self, line: Line, level: Level) {
        self.0[line.index()] = level;
    }

    pub fn with(mut self, line: Line, level: Level) -> Self {
        self.set(line, level);
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (Line, Level)> + '_ {
        Line::ALL.iter().map(move |&l| (l, self.get(l)))
    }

    /// Data pins packed into a byte, D0 in bit 0.
    pub fn data_byte(&self) -> u8 {
        Line::DATA
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, &l)| if self.get(l).is_high() { acc | (1 << i) } else { acc })
    }

    /// Copy only the status lines from `other`.
    pub fn set_status_from(&mut self, other: &LineLevels) {
        for line in Line::STATUS {
            self.set(line, other.get(line));
        }
    }
}

impl Default for LineLevels {
    fn default() -> Self {
        Self::all_low()
    }
}

impl fmt::Debug for LineLevels {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.iter().map(|(l, v)| (l.name(), v))).finish()
    }
}

impl Serialize for LineLevels {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(Line::COUNT))?;
        for (line, level) in self.iter() {
            map.serialize_entry(&line, &level)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LineLevels {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LevelsVisitor;

        impl<'de> Visitor<'de> for LevelsVisitor {
            type Value = LineLevels;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map of line name to level")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<LineLevels, A::Error> {
                let mut levels = LineLevels::all_low();
                while let Some((line, level)) = access.next_entry::<Line, Level>()? {
                    levels.set(line, level);
                }
                Ok(levels)
            }
        }

        deserializer.deserialize_map(LevelsVisitor)
    }
}

pub const STATUS_RESERVED_MASK: u8 = 0x07;
pub const CONTROL_MASK: u8 = 0x0E;

/// Pack the status lines into a status register value.
pub fn encode_status(levels: &LineLevels) -> u8 {
    Line::STATUS.iter().fold(0u8, |acc, &line| {
        let bit = levels.get(line).is_high() != line.inverted();
        if bit {
            acc | (1 << line.register_bit())
        } else {
            acc
        }
    })
}

/// Inverse of [`encode_status`]. Non-status lines in the result are Low.
pub fn decode_status(value: u8) -> Result<LineLevels, PortError> {
    if value & STATUS_RESERVED_MASK != 0 {
        return Err(PortError::MalformedStatus(value));
    }
    let mut levels = LineLevels::all_low();
    for line in Line::STATUS {
        let bit = value & (1 << line.register_bit()) != 0;
        levels.set(line, Level::from_bool(bit != line.inverted()));
    }
    Ok(levels)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PortError {
    #[error("malformed status byte {0:#04x}: reserved bits 0-2 must be clear")]
    MalformedStatus(u8),
    #[error("unknown line {0:?}")]
    UnknownLine(String),
    #[error("line {0} is not a {1:?} line")]
    WrongGroup(Line, LineGroup),
}

/// The three port registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PortRegisters {
    pub data: u8,
    pub status: u8,
    pub control: u8,
}

/// Result of a control-register write.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControlWrite {
    pub stored: u8,
    /// Bits of the written value that were dropped by the mask.
    pub masked_bits: u8,
}

/// Registers plus the wire levels they drive.
///
/// Status lines are inputs: they change only through
/// [`ParallelPort::set_status_line`], which stands for the far end of the cable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParallelPort {
    regs: PortRegisters,
    levels: LineLevels,
}

impl Default for ParallelPort {
    fn default() -> Self {
        ParallelPort::new()
    }
}

impl ParallelPort {
    pub fn new() -> Self {
        let mut port = ParallelPort {
            regs: PortRegisters::default(),
            levels: LineLevels::all_low(),
        };
        port.write_data(0);
        port.write_control(0);
        port.refresh_status();
        port
    }

    pub fn write_data(&mut self, value: u8) {
        self.regs.data = value;
        for (i, &line) in Line::DATA.iter().enumerate() {
            self.levels.set(line, Level::from_bool(value & (1 << i) != 0));
        }
    }

    pub fn read_data(&self) -> u8 {
        self.regs.data
    }

    pub fn write_control(&mut self, value: u8) -> ControlWrite {
        let stored = value & CONTROL_MASK;
        self.regs.control = stored;
        for line in Line::CONTROL {
            let bit = stored & (1 << line.register_bit()) != 0;
            self.levels.set(line, Level::from_bool(bit != line.inverted()));
        }
        ControlWrite {
            stored,
            masked_bits: value & !CONTROL_MASK,
        }
    }

    pub fn read_control(&self) -> u8 {
        self.regs.control
    }

    pub fn read_status(&self) -> u8 {
        self.regs.status
    }

    pub fn set_status_line(&mut self, line: Line, level: Level) -> Result<(), PortError> {
        if line.group() != LineGroup::Status {
            return Err(PortError::WrongGroup(line, LineGroup::Status));
        }
        self.levels.set(line, level);
        self.refresh_status();
        Ok(())
    }

    pub fn registers(&self) -> PortRegisters {
        self.regs
    }

    pub fn levels(&self) -> &LineLevels {
        &self.levels
    }

    fn refresh_status(&mut self) {
        self.regs.status = encode_status(&self.levels);
    }
}

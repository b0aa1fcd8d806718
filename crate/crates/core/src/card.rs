//! The eight-channel relay card driven by the port's data lines.
//!
//! Each sub-circuit is a C945 transistor driving a 12 V relay through a
//! diode, with an LED across the switched side. A data bit of 1 reverse
//! biases the transistor and pulls the relay to terminal 2 (LED lit); a 0
//! leaves it forward biased at terminal 1. Only this idealized behavior is
//! modeled; component values are kept for rating checks.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHANNELS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRatings {
    pub relay_coil_volts: f64,
    pub contact_max_volts: f64,
    pub contact_max_amps: f64,
    pub transistor_model: String,
    pub transistor_min_volts: f64,
    pub transistor_max_volts: f64,
    pub transistor_max_amps: f64,
    pub resistor_ohms: [f64; 2],
    pub capacitor_farads: f64,
    pub capacitor_max_volts: f64,
    pub transformer_volts_ac: f64,
    pub transformer_amps: f64,
    pub mains_volts_ac: f64,
}

impl Default for ComponentRatings {
    fn default() -> Self {
        ComponentRatings {
            relay_coil_volts: 12.0,
            contact_max_volts: 220.0,
            contact_max_amps: 5.0,
            transistor_model: "C945".to_string(),
            transistor_min_volts: 1.0,
            transistor_max_volts: 1.5,
            transistor_max_amps: 0.3,
            resistor_ohms: [1_000.0, 4_700.0],
            capacitor_farads: 2200e-6,
            capacitor_max_volts: 25.0,
            transformer_volts_ac: 12.0,
            transformer_amps: 1.0,
            mains_volts_ac: 220.0,
        }
    }
}

impl ComponentRatings {
    /// Every rating must be strictly positive.
    pub fn is_consistent(&self) -> bool {
        let values = [
            self.relay_coil_volts,
            self.contact_max_volts,
            self.contact_max_amps,
            self.transistor_min_volts,
            self.transistor_max_volts,
            self.transistor_max_amps,
            self.resistor_ohms[0],
            self.resistor_ohms[1],
            self.capacitor_farads,
            self.capacitor_max_volts,
            self.transformer_volts_ac,
            self.transformer_amps,
            self.mains_volts_ac,
        ];
        values.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.transistor_min_volts <= self.transistor_max_volts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bias {
    Forward,
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Terminal {
    T1,
    T2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelayChannel {
    pub index: u8,
    pub bias: Bias,
    pub terminal: Terminal,
    pub led: bool,
}

impl RelayChannel {
    fn at_rest(index: u8) -> Self {
        RelayChannel {
            index,
            bias: Bias::Forward,
            terminal: Terminal::T1,
            led: false,
        }
    }

    fn driven(index: u8, bit: bool) -> Self {
        if bit {
            RelayChannel {
                index,
                bias: Bias::Reverse,
                terminal: Terminal::T2,
                led: true,
            }
        } else {
            RelayChannel::at_rest(index)
        }
    }

    /// True when the load on this channel is energized (terminal 2).
    pub fn energized(&self) -> bool {
        self.terminal == Terminal::T2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CardState {
    pub powered: bool,
    pub dc_rail_volts: f64,
    pub latched_data: u8,
    pub channels: [RelayChannel; CHANNELS],
}

impl Default for CardState {
    fn default() -> Self {
        CardState::unpowered()
    }
}

impl CardState {
    pub fn unpowered() -> Self {
        let mut card = CardState {
            powered: false,
            dc_rail_volts: 0.0,
            latched_data: 0,
            channels: [RelayChannel::at_rest(0); CHANNELS],
        };
        card.derive_channels();
        card
    }

    pub fn powered() -> Self {
        CardState::unpowered().set_power(true)
    }

    /// Latch `value` and drive the relays from it.
    pub fn apply_data(mut self, value: u8) -> Self {
        self.latched_data = value;
        self.derive_channels();
        self
    }

    pub fn set_power(mut self, on: bool) -> Self {
        self.powered = on;
        self.dc_rail_volts = if on {
            rectify(ComponentRatings::default().transformer_volts_ac)
                .expect("transformer voltage is positive")
        } else {
            0.0
        };
        self.derive_channels();
        self
    }

    /// Channel terminals packed into a byte, 1 for T2.
    pub fn energized_mask(&self) -> u8 {
        self.channels
            .iter()
            .enumerate()
            .fold(0u8, |acc, (i, c)| if c.energized() { acc | (1 << i) } else { acc })
    }

    fn derive_channels(&mut self) {
        for (i, ch) in self.channels.iter_mut().enumerate() {
            let bit = self.powered && self.latched_data & (1 << i) != 0;
            *ch = RelayChannel::driven(i as u8, bit);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoadFaultKind {
    OverCurrent,
    OverVoltage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    VoltsAc,
    Amps,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::VoltsAc => f.write_str("V AC"),
            Unit::Amps => f.write_str("A"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadFault {
    pub kind: LoadFaultKind,
    pub channel: Option<u8>,
    pub observed: f64,
    pub unit: Unit,
}

impl LoadFault {
    pub fn on_channel(mut self, channel: u8) -> Self {
        self.channel = Some(channel);
        self
    }
}

impl fmt::Display for LoadFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {} {}", self.kind, self.observed, self.unit)?;
        if let Some(ch) = self.channel {
            write!(f, " on channel {ch}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CardError {
    #[error("{quantity} must be a non-negative number, got {value}")]
    Domain { quantity: &'static str, value: f64 },
    #[error("load exceeds contact rating: {0}")]
    Load(LoadFault),
}

/// Ideal bridge rectifier with reservoir capacitor: RMS volts in, DC volts out.
pub fn rectify(ac_rms_volts: f64) -> Result<f64, CardError> {
    if !ac_rms_volts.is_finite() || ac_rms_volts < 0.0 {
        return Err(CardError::Domain {
            quantity: "AC input voltage",
            value: ac_rms_volts,
        });
    }
    Ok(ac_rms_volts)
}

/// Check a switched load against the relay contact rating.
///
/// Limits are inclusive. When both are exceeded the current fault wins.
pub fn validate_load(ratings: &ComponentRatings, volts_ac: f64, amps: f64) -> Result<(), CardError> {
    for (quantity, value) in [("load voltage", volts_ac), ("load current", amps)] {
        if !value.is_finite() || value < 0.0 {
            return Err(CardError::Domain { quantity, value });
        }
    }
    if amps > ratings.contact_max_amps {
        return Err(CardError::Load(LoadFault {
            kind: LoadFaultKind::OverCurrent,
            channel: None,
            observed: amps,
            unit: Unit::Amps,
        }));
    }
    if volts_ac > ratings.contact_max_volts {
        return Err(CardError::Load(LoadFault {
            kind: LoadFaultKind::OverVoltage,
            channel: None,
            observed: volts_ac,
            unit: Unit::VoltsAc,
        }));
    }
    Ok(())
}

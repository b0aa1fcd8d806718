//! Hardware abstraction boundary between the controller and the relay card.
//!
//! Three operations are the whole channel: write the data register, read the
//! status register, write the control register. Backends must keep
//! `read_status` free of side effects.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HalError {
    #[error("port unavailable: {0}")]
    Unavailable(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Sim,
    Hardware,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Sim => f.write_str("sim"),
            BackendKind::Hardware => f.write_str("hardware"),
        }
    }
}

pub trait HalBackend {
    fn kind(&self) -> BackendKind;

    fn write_data(&mut self, value: u8) -> Result<(), HalError>;

    fn read_status(&self) -> Result<u8, HalError>;

    fn write_control(&mut self, value: u8) -> Result<(), HalError>;
}

impl<T: HalBackend + ?Sized> HalBackend for &mut T {
    fn kind(&self) -> BackendKind {
        (**self).kind()
    }

    fn write_data(&mut self, value: u8) -> Result<(), HalError> {
        (**self).write_data(value)
    }

    fn read_status(&self) -> Result<u8, HalError> {
        (**self).read_status()
    }

    fn write_control(&mut self, value: u8) -> Result<(), HalError> {
        (**self).write_control(value)
    }
}

/// Placeholder for a physical LPT port at an I/O base address.
///
/// No driver ships with this crate; every call fails with
/// [`HalError::Unavailable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HardwarePort {
    pub io_base: u16,
}

impl HardwarePort {
    pub const DEFAULT_IO_BASE: u16 = 0x378;

    pub fn new(io_base: u16) -> Self {
        HardwarePort { io_base }
    }

    fn unavailable(&self) -> HalError {
        HalError::Unavailable(format!("no parallel port driver for {:#x}", self.io_base))
    }
}

impl Default for HardwarePort {
    fn default() -> Self {
        HardwarePort::new(Self::DEFAULT_IO_BASE)
    }
}

impl HalBackend for HardwarePort {
    fn kind(&self) -> BackendKind {
        BackendKind::Hardware
    }

    fn write_data(&mut self, _value: u8) -> Result<(), HalError> {
        Err(self.unavailable())
    }

    fn read_status(&self) -> Result<u8, HalError> {
        Err(self.unavailable())
    }

    fn write_control(&mut self, _value: u8) -> Result<(), HalError> {
        Err(self.unavailable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HalCall {
    WriteData(u8),
    ReadStatus(u8),
    WriteControl(u8),
}

/// Wraps a backend and records every successful call in order.
#[derive(Debug)]
pub struct RecordingHal<H> {
    inner: H,
    calls: std::cell::RefCell<Vec<HalCall>>,
}

impl<H: HalBackend> RecordingHal<H> {
    pub fn new(inner: H) -> Self {
        RecordingHal {
            inner,
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> Vec<HalCall> {
        self.calls.borrow().clone()
    }

    pub fn take_calls(&self) -> Vec<HalCall> {
        std::mem::take(&mut *self.calls.borrow_mut())
    }

    pub fn inner(&self) -> &H {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut H {
        &mut self.inner
    }

    pub fn into_inner(self) -> H {
        self.inner
    }
}

impl<H: HalBackend> HalBackend for RecordingHal<H> {
    fn kind(&self) -> BackendKind {
        self.inner.kind()
    }

    fn write_data(&mut self, value: u8) -> Result<(), HalError> {
        self.inner.write_data(value)?;
        self.calls.borrow_mut().push(HalCall::WriteData(value));
        Ok(())
    }

    fn read_status(&self) -> Result<u8, HalError> {
        let v = self.inner.read_status()?;
        self.calls.borrow_mut().push(HalCall::ReadStatus(v));
        Ok(v)
    }

    fn write_control(&mut self, value: u8) -> Result<(), HalError> {
        self.inner.write_control(value)?;
        self.calls.borrow_mut().push(HalCall::WriteControl(value));
        Ok(())
    }
}

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use autohouse::server;
use autohouse_core::daemon::{Backend, Daemon, DaemonError};
use autohouse_core::hal::{BackendKind, HalBackend, HalError};
use autohouse_core::house::default_house;
use autohouse_core::sim::SimWorld;
use tokio::sync::oneshot;

pub struct Running {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), DaemonError>>>,
}

impl Running {
    pub fn stop(mut self) -> Result<(), DaemonError> {
        let _ = self.stop.take().unwrap().send(());
        self.thread.take().unwrap().join().expect("server thread")
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

/// Serve `daemon` on an ephemeral port from a background runtime.
pub fn spawn(daemon: Daemon) -> Running {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            server::serve(daemon, listener, async {
                let _ = stop_rx.await;
            })
            .await
        })
    });
    Running {
        addr: addr_rx.recv().unwrap(),
        stop: Some(stop_tx),
        thread: Some(thread),
    }
}

pub fn sim_daemon(arm: bool) -> Daemon {
    let house = default_house();
    Daemon::new(house.clone(), Backend::Sim(SimWorld::new(&house)), arm, None, Vec::new()).unwrap()
}

/// A stand-in for real hardware: idle status lines, writes accepted.
pub struct IdlePort;

impl HalBackend for IdlePort {
    fn kind(&self) -> BackendKind {
        BackendKind::Hardware
    }
    fn write_data(&mut self, _value: u8) -> Result<(), HalError> {
        Ok(())
    }
    fn read_status(&self) -> Result<u8, HalError> {
        Ok(0x80)
    }
    fn write_control(&mut self, _value: u8) -> Result<(), HalError> {
        Ok(())
    }
}

pub fn hardware_daemon() -> Daemon {
    Daemon::new(default_house(), Backend::External(Box::new(IdlePort)), false, None, Vec::new()).unwrap()
}

pub fn wait_for<T>(what: &str, mut probe: impl FnMut() -> Option<T>) -> T {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        if let Some(v) = probe() {
            return v;
        }
        assert!(Instant::now() < deadline, "timed out waiting for {what}");
        std::thread::sleep(Duration::from_millis(20));
    }
}

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn shipped(rel: &str) -> PathBuf {
    workspace_root().join("config").join(rel)
}

pub fn autohouse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_autohouse"))
        .args(args)
        .output()
        .expect("run autohouse")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

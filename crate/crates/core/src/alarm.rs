//! Intrusion alarm: a latching Disarmed/Armed/Triggered machine fed by
//! debounced infrared input.
//!
//! [`step`] is pure. It never touches hardware; the side effects it wants are
//! returned as [`AlarmAction`]s for the controller to carry out.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlarmMode {
    Disarmed,
    Armed,
    Triggered,
}

impl fmt::Display for AlarmMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlarmState {
    pub mode: AlarmMode,
    /// Number of Armed to Triggered transitions so far.
    pub episode: u64,
}

impl AlarmState {
    pub fn new(mode: AlarmMode) -> Self {
        AlarmState { mode, episode: 0 }
    }
}

impl Default for AlarmState {
    fn default() -> Self {
        AlarmState::new(AlarmMode::Disarmed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action")]
pub enum AlarmAction {
    RaiseAlert { sensor_id: String, episode: u64 },
    AllLightsOn,
    SirenOn,
    SirenOff,
    LogOnly { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AlarmCommand {
    Arm,
    Disarm,
    Reset,
    #[default]
    None,
}

pub const REASON_REDUNDANT: &str = "redundant";
pub const REASON_RESET_REQUIRED: &str = "reset required";
pub const REASON_DISARMED_DISTURBANCE: &str = "disturbance while disarmed";

/// Counts consecutive asserted samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Debouncer {
    pub threshold: u32,
    pub run_length: u32,
}

impl Debouncer {
    pub fn new(threshold: u32) -> Self {
        assert!(threshold > 0, "debounce threshold must be positive");
        Debouncer {
            threshold,
            run_length: 0,
        }
    }

    pub fn stable(&self) -> bool {
        self.run_length >= self.threshold
    }

    /// Feed one raw sample and return the stable output.
    pub fn debounce(&mut self, raw: bool) -> bool {
        self.run_length = if raw { self.run_length.saturating_add(1) } else { 0 };
        self.stable()
    }
}

fn log_only(reason: &str) -> Vec<AlarmAction> {
    vec![AlarmAction::LogOnly {
        reason: reason.to_string(),
    }]
}

/// Advance the alarm by one sample.
///
/// `disturbance` names the sensor reporting an intrusion on this step, if
/// any. A command, when present, is handled instead of the disturbance.
pub fn step(s: AlarmState, disturbance: Option<&str>, cmd: AlarmCommand) -> (AlarmState, Vec<AlarmAction>) {
    use AlarmCommand as C;
    use AlarmMode as M;

    match (s.mode, cmd) {
        (M::Disarmed, C::Arm) => (AlarmState { mode: M::Armed, ..s }, vec![]),
        (M::Armed, C::Disarm) => (AlarmState { mode: M::Disarmed, ..s }, vec![]),
        (M::Triggered, C::Reset) => (AlarmState { mode: M::Disarmed, ..s }, vec![AlarmAction::SirenOff]),
        (M::Triggered, C::Disarm) => (s, log_only(REASON_RESET_REQUIRED)),
        (_, C::Arm | C::Disarm | C::Reset) => (s, log_only(REASON_REDUNDANT)),
        (mode, C::None) => match (mode, disturbance) {
            (M::Armed, Some(sensor)) => {
                let episode = s.episode + 1;
                (
                    AlarmState {
                        mode: M::Triggered,
                        episode,
                    },
                    vec![
                        AlarmAction::RaiseAlert {
                            sensor_id: sensor.to_string(),
                            episode,
                        },
                        AlarmAction::AllLightsOn,
                        AlarmAction::SirenOn,
                    ],
                )
            }
            (M::Disarmed, Some(_)) => (s, log_only(REASON_DISARMED_DISTURBANCE)),
            _ => (s, vec![]),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn debounce_examples() {
        let mut d = Debouncer::new(2);
        assert!(!d.debounce(true));
        assert_eq!(d.run_length, 1);
        assert!(d.debounce(true));
        assert_eq!(d.run_length, 2);
        let mut d = Debouncer {
            threshold: 2,
            run_length: 5,
        };
        assert!(!d.debounce(false));
        assert_eq!(d.run_length, 0);
    }

    #[test]
    fn step_examples() {
        let (s, a) = step(AlarmState::new(AlarmMode::Armed), Some("ir"), AlarmCommand::None);
        assert_eq!(s.mode, AlarmMode::Triggered);
        assert_eq!(s.episode, 1);
        assert_eq!(
            a,
            vec![
                AlarmAction::RaiseAlert {
                    sensor_id: "ir".into(),
                    episode: 1
                },
                AlarmAction::AllLightsOn,
                AlarmAction::SirenOn
            ]
        );

        let (s, a) = step(AlarmState::new(AlarmMode::Disarmed), Some("ir"), AlarmCommand::None);
        assert_eq!(s.mode, AlarmMode::Disarmed);
        assert!(matches!(a.as_slice(), [AlarmAction::LogOnly { .. }]));

        let (s, a) = step(
            AlarmState {
                mode: AlarmMode::Triggered,
                episode: 1,
            },
            None,
            AlarmCommand::Reset,
        );
        assert_eq!(s.mode, AlarmMode::Disarmed);
        assert_eq!(s.episode, 1);
        assert_eq!(a, vec![AlarmAction::SirenOff]);
    }

    #[test]
    fn transition_table() {
        use AlarmCommand as C;
        use AlarmMode as M;
        let cases = [
            (M::Disarmed, None, C::Arm, M::Armed, 0),
            (M::Armed, None, C::Disarm, M::Disarmed, 0),
            (M::Armed, Some("ir"), C::Disarm, M::Disarmed, 0),
            (M::Disarmed, Some("ir"), C::Arm, M::Armed, 0),
            (M::Triggered, Some("ir"), C::None, M::Triggered, 0),
            (M::Triggered, None, C::None, M::Triggered, 0),
            (M::Armed, None, C::None, M::Armed, 0),
            (M::Disarmed, None, C::None, M::Disarmed, 0),
            (M::Armed, None, C::Arm, M::Armed, 1),
            (M::Triggered, None, C::Arm, M::Triggered, 1),
            (M::Disarmed, None, C::Disarm, M::Disarmed, 1),
            (M::Triggered, None, C::Disarm, M::Triggered, 1),
            (M::Disarmed, None, C::Reset, M::Disarmed, 1),
            (M::Armed, Some("ir"), C::Reset, M::Armed, 1),
        ];
        for (from, dist, cmd, to, n_actions) in cases {
            let (s, a) = step(AlarmState::new(from), dist, cmd);
            assert_eq!(s.mode, to, "{from:?} {dist:?} {cmd:?}");
            assert_eq!(a.len(), n_actions, "{from:?} {dist:?} {cmd:?}: {a:?}");
            assert!(a.iter().all(|x| matches!(x, AlarmAction::LogOnly { .. })));
        }
    }

    fn command() -> impl Strategy<Value = AlarmCommand> {
        prop_oneof![
            Just(AlarmCommand::Arm),
            Just(AlarmCommand::Disarm),
            Just(AlarmCommand::Reset),
            Just(AlarmCommand::None),
        ]
    }

    proptest! {
        #[test]
        fn triggered_latches_without_reset(
            inputs in proptest::collection::vec((any::<bool>(), command()), 0..64)
        ) {
            let mut s = AlarmState { mode: AlarmMode::Triggered, episode: 3 };
            for (dist, cmd) in inputs {
                if cmd == AlarmCommand::Reset {
                    continue;
                }
                let (next, _) = step(s, dist.then_some("ir"), cmd);
                prop_assert_eq!(next, s);
                s = next;
            }
        }

        #[test]
        fn one_alert_per_episode(
            inputs in proptest::collection::vec((any::<bool>(), command()), 0..128)
        ) {
            let mut s = AlarmState::default();
            let mut alerts = 0u64;
            let mut triggers = 0u64;
            for (dist, cmd) in inputs {
                let (next, actions) = step(s, dist.then_some("ir"), cmd);
                if s.mode == AlarmMode::Armed && next.mode == AlarmMode::Triggered {
                    triggers += 1;
                }
                for a in &actions {
                    if let AlarmAction::RaiseAlert { episode, .. } = a {
                        alerts += 1;
                        prop_assert_eq!(*episode, next.episode);
                    }
                }
                if next.mode == s.mode && !(s.mode == AlarmMode::Disarmed && dist && cmd == AlarmCommand::None) {
                    let only_logs = actions.iter().all(|a| matches!(a, AlarmAction::LogOnly { .. }));
                    prop_assert!(only_logs);
                    if cmd == AlarmCommand::None {
                        prop_assert!(actions.is_empty());
                    }
                }
                s = next;
            }
            prop_assert_eq!(alerts, triggers);
            prop_assert_eq!(s.episode, triggers);
        }

        #[test]
        fn step_is_deterministic(dist in any::<bool>(), cmd in command(), mode in 0u8..3, ep in 0u64..5) {
            let mode = [AlarmMode::Disarmed, AlarmMode::Armed, AlarmMode::Triggered][mode as usize];
            let s = AlarmState { mode, episode: ep };
            prop_assert_eq!(step(s, dist.then_some("x"), cmd), step(s, dist.then_some("x"), cmd));
        }
    }
}

//! Operating modes of the protective vehicle and their transition rules.
//!
//! The vehicle starts in `Manual`. `SafeHalt` is the hub: every automated
//! mode is entered from it and every fallback ends in it. The monitor can
//! only ever push towards `SafeHalt`; it never overrides manual driving.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ability::MonitorStatus;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    #[default]
    Manual,
    SafeHalt,
    Coupled,
    Follow,
}

impl OperatingMode {
    pub const ALL: [OperatingMode; 4] = [
        OperatingMode::Manual,
        OperatingMode::SafeHalt,
        OperatingMode::Coupled,
        OperatingMode::Follow,
    ];

    pub fn is_automated(self) -> bool {
        matches!(self, OperatingMode::Coupled | OperatingMode::Follow)
    }
}

impl fmt::Display for OperatingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatingMode::Manual => "manual",
            OperatingMode::SafeHalt => "safe_halt",
            OperatingMode::Coupled => "coupled",
            OperatingMode::Follow => "follow",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestSource {
    Operator,
    Monitor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRequest {
    pub source: RequestSource,
    pub target: OperatingMode,
}

impl TransitionRequest {
    pub fn operator(target: OperatingMode) -> Self {
        Self {
            source: RequestSource::Operator,
            target,
        }
    }

    pub fn monitor() -> Self {
        Self {
            source: RequestSource::Monitor,
            target: OperatingMode::SafeHalt,
        }
    }
}

/// What `step` does with a `Degraded` status in an automated mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradedPolicy {
    #[default]
    Fallback,
    Continue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ModeError {
    #[error("transition {from} -> {to} is not allowed")]
    IllegalTransition {
        from: OperatingMode,
        to: OperatingMode,
    },
    #[error("cannot enter {target} while monitor status is {status}")]
    MonitorNotReady {
        target: OperatingMode,
        status: MonitorStatus,
    },
}

pub fn allowed_transitions(mode: OperatingMode) -> &'static [OperatingMode] {
    use OperatingMode::*;
    match mode {
        Manual => &[SafeHalt],
        SafeHalt => &[Manual, Coupled, Follow],
        Coupled => &[SafeHalt],
        Follow => &[SafeHalt],
    }
}

pub fn request_transition(
    mode: OperatingMode,
    req: TransitionRequest,
    monitor_status: MonitorStatus,
) -> Result<OperatingMode, ModeError> {
    match req.source {
        RequestSource::Monitor if req.target == OperatingMode::SafeHalt => {
            Ok(OperatingMode::SafeHalt)
        }
        RequestSource::Monitor => Err(ModeError::IllegalTransition {
            from: mode,
            to: req.target,
        }),
        RequestSource::Operator => {
            if !allowed_transitions(mode).contains(&req.target) {
                return Err(ModeError::IllegalTransition {
                    from: mode,
                    to: req.target,
                });
            }
            if req.target.is_automated() && monitor_status != MonitorStatus::Ok {
                return Err(ModeError::MonitorNotReady {
                    target: req.target,
                    status: monitor_status,
                });
            }
            Ok(req.target)
        }
    }
}

/// Monitor-driven fallback applied once per evaluation cycle.
pub fn step(
    mode: OperatingMode,
    monitor_status: MonitorStatus,
    policy: DegradedPolicy,
) -> OperatingMode {
    let forced = match monitor_status {
        MonitorStatus::Ok => false,
        MonitorStatus::Degraded => policy == DegradedPolicy::Fallback,
        MonitorStatus::Failed => true,
    };
    if mode.is_automated() && forced {
        OperatingMode::SafeHalt
    } else {
        mode
    }
}

/// Log entry for one mode change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeChange {
    pub t: f64,
    pub mode_from: OperatingMode,
    pub mode_to: OperatingMode,
    pub cause: RequestSource,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleOutcome {
    pub changes: Vec<ModeChange>,
    pub rejected: Vec<(TransitionRequest, ModeError)>,
}

/// Mode state plus a FIFO of pending requests, advanced once per cycle.
#[derive(Debug, Clone, Default)]
pub struct ModeMachine {
    mode: OperatingMode,
    policy: DegradedPolicy,
    pending: VecDeque<TransitionRequest>,
    log: Vec<ModeChange>,
}

impl ModeMachine {
    pub fn new(policy: DegradedPolicy) -> Self {
        Self {
            policy,
            ..Self::default()
        }
    }

    pub fn mode(&self) -> OperatingMode {
        self.mode
    }

    pub fn policy(&self) -> DegradedPolicy {
        self.policy
    }

    pub fn log(&self) -> &[ModeChange] {
        &self.log
    }

    pub fn enqueue(&mut self, req: TransitionRequest) {
        self.pending.push_back(req);
    }

    /// Processes queued requests in order, then applies [`step`].
    pub fn cycle(&mut self, t: f64, status: MonitorStatus) -> CycleOutcome {
        let mut out = CycleOutcome::default();
        while let Some(req) = self.pending.pop_front() {
            match request_transition(self.mode, req, status) {
                Ok(next) => self.record(&mut out, t, next, req.source),
                Err(e) => out.rejected.push((req, e)),
            }
        }
        let next = step(self.mode, status, self.policy);
        self.record(&mut out, t, next, RequestSource::Monitor);
        out
    }

    fn record(
        &mut self,
        out: &mut CycleOutcome,
        t: f64,
        next: OperatingMode,
        cause: RequestSource,
    ) {
        if next != self.mode {
            let change = ModeChange {
                t,
                mode_from: self.mode,
                mode_to: next,
                cause,
            };
            self.mode = next;
            self.log.push(change.clone());
            out.changes.push(change);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use MonitorStatus::*;
    use OperatingMode::*;

    #[test]
    fn transition_table() {
        assert_eq!(allowed_transitions(Manual), &[SafeHalt]);
        assert_eq!(allowed_transitions(SafeHalt), &[Manual, Coupled, Follow]);
        assert_eq!(allowed_transitions(Follow), &[SafeHalt]);
        assert_eq!(allowed_transitions(Coupled), &[SafeHalt]);
    }

    #[test]
    fn requests() {
        for s in [Ok, Degraded, Failed] {
            assert_eq!(
                request_transition(Manual, TransitionRequest::operator(SafeHalt), s),
                Result::Ok(SafeHalt)
            );
        }
        assert_eq!(
            request_transition(SafeHalt, TransitionRequest::operator(Follow), Degraded),
            Err(ModeError::MonitorNotReady {
                target: Follow,
                status: Degraded
            })
        );
        assert_eq!(
            request_transition(Follow, TransitionRequest::monitor(), Failed),
            Result::Ok(SafeHalt)
        );
        assert_eq!(
            request_transition(Manual, TransitionRequest::monitor(), Ok),
            Result::Ok(SafeHalt)
        );
        assert!(matches!(
            request_transition(Manual, TransitionRequest::operator(Follow), Ok),
            Err(ModeError::IllegalTransition { .. })
        ));
        assert!(matches!(
            request_transition(Follow, TransitionRequest::operator(Coupled), Ok),
            Err(ModeError::IllegalTransition { .. })
        ));
        let rogue = TransitionRequest {
            source: RequestSource::Monitor,
            target: Follow,
        };
        assert!(request_transition(SafeHalt, rogue, Ok).is_err());
        // Manual is reachable from SafeHalt regardless of status.
        assert_eq!(
            request_transition(SafeHalt, TransitionRequest::operator(Manual), Failed),
            Result::Ok(Manual)
        );
    }

    #[test]
    fn stepping() {
        let p = DegradedPolicy::Fallback;
        assert_eq!(step(Follow, Failed, p), SafeHalt);
        assert_eq!(step(Follow, Ok, p), Follow);
        assert_eq!(step(Manual, Failed, p), Manual);
        assert_eq!(step(Coupled, Degraded, p), SafeHalt);
        assert_eq!(step(Coupled, Degraded, DegradedPolicy::Continue), Coupled);
        assert_eq!(step(Coupled, Failed, DegradedPolicy::Continue), SafeHalt);
    }

    #[test]
    fn machine_processes_queue_in_order() {
        let mut m = ModeMachine::new(DegradedPolicy::Fallback);
        assert_eq!(m.mode(), Manual);
        m.enqueue(TransitionRequest::operator(SafeHalt));
        m.enqueue(TransitionRequest::operator(Follow));
        let out = m.cycle(0.0, Ok);
        assert_eq!(m.mode(), Follow);
        assert_eq!(out.changes.len(), 2);
        assert!(out.rejected.is_empty());

        let out = m.cycle(0.1, Degraded);
        assert_eq!(m.mode(), SafeHalt);
        assert_eq!(
            out.changes,
            vec![ModeChange {
                t: 0.1,
                mode_from: Follow,
                mode_to: SafeHalt,
                cause: RequestSource::Monitor
            }]
        );
        assert_eq!(m.log().len(), 3);

        m.enqueue(TransitionRequest::operator(Coupled));
        let out = m.cycle(0.2, Failed);
        assert_eq!(m.mode(), SafeHalt);
        assert_eq!(out.rejected.len(), 1);
    }

    #[test]
    fn serde_names() {
        assert_eq!(serde_json::to_string(&SafeHalt).unwrap(), "\"safe_halt\"");
        let c = ModeChange {
            t: 1.0,
            mode_from: Follow,
            mode_to: SafeHalt,
            cause: RequestSource::Monitor,
        };
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"t":1.0,"mode_from":"follow","mode_to":"safe_halt","cause":"monitor"}"#
        );
    }
}

//! The task that owns the session. Everything else talks to it through
//! [`SessionHandle`].

use serde_json::json;
use tokio::sync::{mpsc, oneshot, watch};

use crate::event_log::EventLog;
use crate::session::{Command, FramePair, SessionError, SessionEvent, SessionSnapshot, SessionState};

enum Request {
    Command(Command, oneshot::Sender<Result<SessionSnapshot, SessionError>>),
    StreamStarted,
}

#[derive(Clone)]
pub struct SessionHandle {
    tx: mpsc::Sender<Request>,
    snapshots: watch::Receiver<SessionSnapshot>,
}

impl SessionHandle {
    /// Runs a command and returns the resulting snapshot.
    pub async fn command(&self, command: Command) -> Result<SessionSnapshot, SessionError> {
        let (reply, rx) = oneshot::channel();
        self.tx
            .send(Request::Command(command, reply))
            .await
            .expect("session task outlives its handles");
        rx.await.expect("session task replies")
    }

    pub async fn stream_started(&self) {
        let _ = self.tx.send(Request::StreamStarted).await;
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        self.snapshots.borrow().clone()
    }

    /// Change notifications; the receiver starts at the current snapshot.
    pub fn subscribe(&self) -> watch::Receiver<SessionSnapshot> {
        self.snapshots.clone()
    }
}

/// Starts the session task. `latest` holds the most recent segmented pair,
/// which capture commands freeze.
pub fn spawn_session(latest: watch::Receiver<Option<FramePair>>, log: EventLog) -> SessionHandle {
    let mut state = SessionState::new();
    let (snap_tx, snapshots) = watch::channel(state.snapshot());
    let (tx, mut rx) = mpsc::channel::<Request>(64);
    tokio::spawn(async move {
        while let Some(req) = rx.recv().await {
            match req {
                Request::StreamStarted => {
                    if let Some(event) = state.start_streaming() {
                        log_events(&log, std::slice::from_ref(&event));
                        snap_tx.send_replace(state.snapshot());
                    }
                }
                Request::Command(cmd, reply) => {
                    let pair = latest.borrow().clone();
                    let outcome = state.handle(&cmd, pair.as_ref());
                    let result = match outcome {
                        Ok(events) => {
                            log_events(&log, &events);
                            let snap = state.snapshot();
                            snap_tx.send_replace(snap.clone());
                            Ok(snap)
                        }
                        Err(e) => {
                            log.record(json!({
                                "event": "command_rejected",
                                "command": cmd.name(),
                                "code": e.code(),
                                "reason": e.to_string(),
                            }));
                            Err(e)
                        }
                    };
                    let _ = reply.send(result);
                }
            }
        }
    });
    SessionHandle { tx, snapshots }
}

fn log_events(log: &EventLog, events: &[SessionEvent]) {
    for e in events {
        log.record(e);
    }
}

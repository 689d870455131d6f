use std::collections::HashMap;
use std::sync::Mutex;

use thiserror::Error;

pub type SessionId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Idle,
    Streaming,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamSession {
    pub peer: String,
    pub camera_id: String,
    pub state: SessionState,
    pub last_frame: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown session {0}")]
    Unknown(SessionId),
    #[error("session {id} cannot go from {from:?} to {to:?}")]
    Transition {
        id: SessionId,
        from: SessionState,
        to: SessionState,
    },
}

/// Streaming sessions of one edge server. Idle -> Streaming only after an access grant;
/// Stopped is terminal and a new fog request opens a fresh session.
#[derive(Debug, Default)]
pub struct SessionRegistry {
    inner: Mutex<(SessionId, HashMap<SessionId, StreamSession>)>,
}

impl SessionRegistry {
    pub fn new() -> Self {
        SessionRegistry::default()
    }

    pub fn open(&self, peer: &str, camera_id: &str) -> SessionId {
        let mut g = self.inner.lock().unwrap();
        g.0 += 1;
        let id = g.0;
        g.1.insert(
            id,
            StreamSession {
                peer: peer.to_string(),
                camera_id: camera_id.to_string(),
                state: SessionState::Idle,
                last_frame: None,
            },
        );
        id
    }

    fn transition(&self, id: SessionId, to: SessionState) -> Result<(), SessionError> {
        let mut g = self.inner.lock().unwrap();
        let s = g.1.get_mut(&id).ok_or(SessionError::Unknown(id))?;
        let ok = matches!(
            (s.state, to),
            (SessionState::Idle, SessionState::Streaming)
                | (SessionState::Idle, SessionState::Stopped)
                | (SessionState::Streaming, SessionState::Stopped)
        );
        if !ok {
            return Err(SessionError::Transition {
                id,
                from: s.state,
                to,
            });
        }
        s.state = to;
        Ok(())
    }

    pub fn start(&self, id: SessionId) -> Result<(), SessionError> {
        self.transition(id, SessionState::Streaming)
    }

    pub fn stop(&self, id: SessionId) -> Result<(), SessionError> {
        self.transition(id, SessionState::Stopped)
    }

    /// Records the last frame written to the peer.
    pub fn delivered(&self, id: SessionId, frame_index: u64) -> Result<(), SessionError> {
        let mut g = self.inner.lock().unwrap();
        let s = g.1.get_mut(&id).ok_or(SessionError::Unknown(id))?;
        if s.state != SessionState::Streaming {
            return Err(SessionError::Transition {
                id,
                from: s.state,
                to: SessionState::Streaming,
            });
        }
        s.last_frame = Some(frame_index);
        Ok(())
    }

    pub fn get(&self, id: SessionId) -> Option<StreamSession> {
        self.inner.lock().unwrap().1.get(&id).cloned()
    }

    pub fn streaming_count(&self) -> usize {
        self.inner
            .lock()
            .unwrap()
            .1
            .values()
            .filter(|s| s.state == SessionState::Streaming)
            .count()
    }

    /// Drops stopped sessions from the table.
    pub fn prune(&self) {
        self.inner
            .lock()
            .unwrap()
            .1
            .retain(|_, s| s.state != SessionState::Stopped);
    }
}

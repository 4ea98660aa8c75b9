use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime};

use super::engine::{ChatEngine, Reply};
use crate::corpus::Turn;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Session {
    pub id: String,
    pub history: Vec<Turn>,
    pub created_at: SystemTime,
    last_active: Instant,
}

impl Session {
    fn new(id: String) -> Self {
        Session {
            id,
            history: Vec::new(),
            created_at: SystemTime::now(),
            last_active: Instant::now(),
        }
    }
}

/// Chat sessions keyed by id. Each session has its own lock, so messages to
/// different sessions proceed in parallel while one session's turns are
/// serialized.
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    idle_timeout: Duration,
}

impl SessionStore {
    pub fn new(idle_timeout: Duration) -> Self {
        SessionStore {
            sessions: Mutex::new(HashMap::new()),
            idle_timeout,
        }
    }

    pub fn create(&self) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.sessions
            .lock()
            .unwrap()
            .insert(id.clone(), Arc::new(Mutex::new(Session::new(id.clone()))));
        id
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn handle(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(id.to_string()))
    }

    /// A snapshot of the session.
    pub fn get(&self, id: &str) -> Result<Session> {
        Ok(self.handle(id)?.lock().unwrap().clone())
    }

    /// Runs one turn and records it in the session's history.
    pub fn message(&self, engine: &ChatEngine, id: &str, text: &str) -> Result<Reply> {
        let handle = self.handle(id)?;
        let mut session = handle.lock().unwrap();
        let reply = engine.respond(&session.history, text)?;
        session.history.push(reply.turn.clone());
        session.last_active = Instant::now();
        Ok(reply)
    }

    /// Drops sessions idle for longer than the timeout; returns how many.
    pub fn expire_idle(&self) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| {
            // A session busy with a message is not idle.
            s.try_lock()
                .map_or(true, |s| s.last_active.elapsed() <= self.idle_timeout)
        });
        before - sessions.len()
    }
}

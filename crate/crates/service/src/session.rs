use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant, SystemTime};

use recourse_core::{ConstraintSet, RecoursePath};
use tokio::sync::Mutex;

/// One analyst's recourse path and the constraints it is searched under.
#[derive(Debug, Clone)]
pub struct Session {
    pub session_id: String,
    pub path: RecoursePath,
    pub constraints: ConstraintSet,
    pub created_at: SystemTime,
    pub last_used: Instant,
}

/// In-memory sessions. Each session sits behind its own mutex so mutations
/// on one session are serialized while distinct sessions proceed in parallel.
#[derive(Debug)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    idle_timeout: Option<Duration>,
}

impl SessionStore {
    pub fn new(idle_timeout: Option<Duration>) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            idle_timeout,
        }
    }

    /// Ids are sequential (`s1`, `s2`, ..) so a fresh server replays the
    /// same ids for the same request sequence.
    pub fn create(&self, constraints: ConstraintSet, target_outcome: f64) -> String {
        self.evict_idle();
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Session {
            session_id: id.clone(),
            path: RecoursePath::new(target_outcome),
            constraints,
            created_at: SystemTime::now(),
            last_used: Instant::now(),
        };
        self.sessions
            .write()
            .expect("session map lock")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn evict_idle(&self) {
        let Some(limit) = self.idle_timeout else {
            return;
        };
        let mut map = self.sessions.write().expect("session map lock");
        // sessions locked by an in-flight request are in use; keep them
        map.retain(|_, s| match s.try_lock() {
            Ok(guard) => guard.last_used.elapsed() < limit,
            Err(_) => true,
        });
    }
}

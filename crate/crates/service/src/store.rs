//! In-memory sessions with optional per-session JSON files.
//!
//! Writers to one session are serialized by that session's mutex; a change
//! is computed on a copy and only committed after it has been persisted.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use concord_core::session::{CreateSession, Session};
use tokio::sync::{Mutex, RwLock};
use tracing::{debug, info, warn};

use crate::error::{ServiceError, ServiceResult};

type Slot = Arc<Mutex<Session>>;

#[derive(Debug, Default)]
pub struct SessionStore {
    dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Slot>>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl SessionStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens a data directory, loading every `*.json` session in it.
    pub async fn open(dir: impl Into<PathBuf>) -> ServiceResult<Self> {
        let dir = dir.into();
        tokio::fs::create_dir_all(&dir).await?;
        let mut sessions = HashMap::new();
        let mut entries = tokio::fs::read_dir(&dir).await?;
        while let Some(entry) = entries.next_entry().await? {
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = tokio::fs::read_to_string(&path).await?;
            match Session::from_json(&text) {
                Ok(session) if valid_id(&session.id) => {
                    debug!(id = %session.id, "loaded session");
                    sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
                }
                Ok(_) => warn!(path = %path.display(), "skipping session file without a valid id"),
                Err(e) => {
                    warn!(path = %path.display(), error = %e, "skipping unreadable session file")
                }
            }
        }
        info!(dir = %dir.display(), count = sessions.len(), "session store opened");
        Ok(Self {
            dir: Some(dir),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub async fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().await.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Creates a session; an empty id is replaced by the next free `s<N>`.
    pub async fn create(&self, mut request: CreateSession) -> ServiceResult<Session> {
        let mut sessions = self.sessions.write().await;
        if request.id.is_empty() {
            let mut n = sessions.len() + 1;
            while sessions.contains_key(&format!("s{n}")) {
                n += 1;
            }
            request.id = format!("s{n}");
        }
        if !valid_id(&request.id) {
            return Err(ServiceError::BadId(request.id));
        }
        if sessions.contains_key(&request.id) {
            return Err(ServiceError::Exists(request.id));
        }
        let session = Session::create(request)?;
        self.persist(&session).await?;
        sessions.insert(session.id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    async fn slot(&self, id: &str) -> ServiceResult<Slot> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub async fn get(&self, id: &str) -> ServiceResult<Session> {
        Ok(self.slot(id).await?.lock().await.clone())
    }

    /// Runs `change` on a copy of the session off the async threads and
    /// commits the copy only if `change` succeeds and the copy is saved.
    pub async fn update<T, F>(&self, id: &str, change: F) -> ServiceResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&mut Session) -> concord_core::Result<T> + Send + 'static,
    {
        let slot = self.slot(id).await?;
        let mut guard = slot.lock().await;
        let mut draft = guard.clone();
        let (draft, out) = tokio::task::spawn_blocking(move || {
            let out = change(&mut draft);
            (draft, out)
        })
        .await
        .map_err(|e| ServiceError::Task(e.to_string()))?;
        let out = out?;
        self.persist(&draft).await?;
        *guard = draft;
        Ok(out)
    }

    /// Read-only computation on a snapshot.
    pub async fn read<T, F>(&self, id: &str, f: F) -> ServiceResult<T>
    where
        T: Send + 'static,
        F: FnOnce(&Session) -> concord_core::Result<T> + Send + 'static,
    {
        let snapshot = self.get(id).await?;
        let out = tokio::task::spawn_blocking(move || f(&snapshot))
            .await
            .map_err(|e| ServiceError::Task(e.to_string()))?;
        Ok(out?)
    }

    async fn persist(&self, session: &Session) -> ServiceResult<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let path = dir.join(format!("{}.json", session.id));
        let tmp = dir.join(format!(".{}.json.tmp", session.id));
        tokio::fs::write(&tmp, session.to_json()).await?;
        tokio::fs::rename(&tmp, &path).await?;
        debug!(id = %session.id, version = session.version, "saved session");
        Ok(())
    }
}

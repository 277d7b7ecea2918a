//! Session persistence: an in-memory map mirrored to a JSON snapshot file.
//! Each write replaces the file through a temporary file and a rename, so a
//! crash leaves either the old or the new snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::session::Session;

const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    sessions: BTreeMap<String, Session>,
}

#[derive(Debug, Default)]
pub struct SessionStore {
    path: Option<PathBuf>,
    sessions: Mutex<BTreeMap<String, Session>>,
    locks: Mutex<BTreeMap<String, Arc<Mutex<()>>>>,
}

fn poisoned<T>(_: T) -> ServiceError {
    ServiceError::Store("lock poisoned".into())
}

impl SessionStore {
    /// Volatile store, for tests.
    pub fn in_memory() -> Self {
        SessionStore::default()
    }

    /// Opens the snapshot at `path`, starting empty if it does not exist.
    pub fn open(path: &Path) -> ServiceResult<Self> {
        let sessions = match fs::read_to_string(path) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text)
                    .map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))?;
                if snap.version != SNAPSHOT_VERSION {
                    return Err(ServiceError::Store(format!(
                        "{}: unsupported snapshot version {}",
                        path.display(),
                        snap.version
                    )));
                }
                snap.sessions
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(ServiceError::Store(format!("{}: {e}", path.display()))),
        };
        Ok(SessionStore {
            path: Some(path.to_path_buf()),
            sessions: Mutex::new(sessions),
            locks: Mutex::new(BTreeMap::new()),
        })
    }

    /// Per-session lock; hold it across a read-modify-write.
    pub fn session_lock(&self, id: &str) -> ServiceResult<Arc<Mutex<()>>> {
        let mut locks = self.locks.lock().map_err(poisoned)?;
        Ok(locks.entry(id.to_string()).or_default().clone())
    }

    pub fn get(&self, id: &str) -> ServiceResult<Session> {
        self.sessions
            .lock()
            .map_err(poisoned)?
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::SessionNotFound(id.to_string()))
    }

    pub fn put(&self, session: Session) -> ServiceResult<()> {
        let mut sessions = self.sessions.lock().map_err(poisoned)?;
        let previous = sessions.insert(session.id.clone(), session.clone());
        if let Err(e) = self.persist(&sessions) {
            // keep memory and disk in agreement
            match previous {
                Some(p) => sessions.insert(p.id.clone(), p),
                None => sessions.remove(&session.id),
            };
            return Err(e);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().map(|s| s.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn persist(&self, sessions: &MutexGuard<'_, BTreeMap<String, Session>>) -> ServiceResult<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let snap = Snapshot {
            version: SNAPSHOT_VERSION,
            sessions: (*sessions).clone(),
        };
        let text = serde_json::to_string(&snap).map_err(|e| ServiceError::Store(e.to_string()))?;
        write_atomic(path, text.as_bytes()).map_err(|e| ServiceError::Store(format!("{}: {e}", path.display())))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

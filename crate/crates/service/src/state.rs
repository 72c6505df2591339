use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock, TryLockError};
use std::time::{SystemTime, UNIX_EPOCH};

use cardtune::cards::ModelCard;
use cardtune::encoder::{embedder_from_env, Embedder};
use cardtune::oracle::{Backend, HttpBackend, MockBackend};
use cardtune::registry::{Registry, RegistryError, RegistryStore, TuningRecord};

use crate::error::ApiError;
use crate::session::{BackendChoice, Session};

/// Where tuning records live.
pub enum RegistrySource {
    Memory(RwLock<Registry>),
    /// Every mutation is load, apply, save under the writer lock.
    Dir {
        store: RegistryStore,
        writer: Mutex<()>,
    },
}

impl RegistrySource {
    pub fn load(&self) -> Result<Registry, RegistryError> {
        match self {
            RegistrySource::Memory(r) => Ok(r.read().unwrap_or_else(|e| e.into_inner()).clone()),
            RegistrySource::Dir { store, .. } => store.load(),
        }
    }

    pub fn add(&self, model_card: Option<ModelCard>, record: TuningRecord) -> Result<Registry, RegistryError> {
        match self {
            RegistrySource::Memory(r) => {
                let mut reg = r.write().unwrap_or_else(|e| e.into_inner());
                let mut next = reg.clone();
                if let Some(card) = model_card {
                    next.register_model_card(card);
                }
                next.add_record(record)?;
                *reg = next.clone();
                Ok(next)
            }
            RegistrySource::Dir { store, writer } => {
                let _guard = writer.lock().unwrap_or_else(|e| e.into_inner());
                if let Some(card) = model_card {
                    let mut next = store.load()?;
                    next.register_model_card(card);
                    next.add_record(record)?;
                    cardtune::registry::save_registry(&next, store.dir())?;
                    Ok(next)
                } else {
                    store.add_record(record)
                }
            }
        }
    }
}

#[derive(Default)]
pub struct ServiceConfig {
    /// Registry directory; in-memory when absent.
    pub registry_dir: Option<PathBuf>,
    /// Sessions are restored from and written to this file.
    pub snapshot: Option<PathBuf>,
    /// Overrides the environment-configured HTTP backend.
    pub http_backend: Option<Arc<dyn Backend>>,
    /// Overrides the environment-selected embedder.
    pub embedder: Option<Arc<dyn Embedder>>,
}

pub type SessionSlot = Arc<Mutex<Session>>;

pub struct AppState {
    sessions: Mutex<HashMap<String, SessionSlot>>,
    pub registry: RegistrySource,
    http_backend: Option<Arc<dyn Backend>>,
    embedder: Option<Arc<dyn Embedder>>,
    pub snapshot: Option<PathBuf>,
}

pub fn now_secs() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0)
}

fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

impl AppState {
    pub fn new(config: ServiceConfig) -> AppState {
        let registry = match config.registry_dir {
            Some(dir) => RegistrySource::Dir {
                store: RegistryStore::new(dir),
                writer: Mutex::new(()),
            },
            None => RegistrySource::Memory(RwLock::new(Registry::new())),
        };
        AppState {
            sessions: Mutex::new(HashMap::new()),
            registry,
            http_backend: config.http_backend,
            embedder: config.embedder,
            snapshot: config.snapshot,
        }
    }

    fn table(&self) -> MutexGuard<'_, HashMap<String, SessionSlot>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn create_session(&self) -> String {
        let mut table = self.table();
        loop {
            let id = new_session_id();
            if !table.contains_key(&id) {
                table.insert(id.clone(), Arc::new(Mutex::new(Session::new(id.clone(), now_secs()))));
                return id;
            }
        }
    }

    pub fn slot(&self, id: &str) -> Result<SessionSlot, ApiError> {
        self.table()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    /// Claims a session for one request; a concurrent holder means busy.
    pub fn claim(slot: &SessionSlot) -> Result<MutexGuard<'_, Session>, ApiError> {
        match slot.try_lock() {
            Ok(g) => Ok(g),
            Err(TryLockError::Poisoned(p)) => Ok(p.into_inner()),
            Err(TryLockError::WouldBlock) => Err(ApiError::busy()),
        }
    }

    /// Resolves the backend. The HTTP client is built here, so call this
    /// from a blocking thread.
    pub fn backend(&self, choice: BackendChoice) -> Result<Arc<dyn Backend>, ApiError> {
        match choice {
            BackendChoice::Mock => Ok(Arc::new(MockBackend)),
            BackendChoice::Http => match &self.http_backend {
                Some(b) => Ok(b.clone()),
                None => HttpBackend::from_env()
                    .map(|b| Arc::new(b) as Arc<dyn Backend>)
                    .map_err(|e| ApiError::new(axum::http::StatusCode::BAD_GATEWAY, e.code(), e.to_string())),
            },
        }
    }

    /// Blocking-thread only, like [`AppState::backend`].
    pub fn embedder(&self) -> Result<Arc<dyn Embedder>, ApiError> {
        match &self.embedder {
            Some(e) => Ok(e.clone()),
            None => embedder_from_env()
                .map(Arc::from)
                .map_err(|e| ApiError::new(axum::http::StatusCode::BAD_GATEWAY, "embedder_failed", e.to_string())),
        }
    }

    /// Copies of all sessions not currently claimed by a request.
    pub fn sessions(&self) -> Vec<Session> {
        let slots: Vec<SessionSlot> = self.table().values().cloned().collect();
        let mut out: Vec<Session> = slots
            .iter()
            .filter_map(|s| AppState::claim(s).ok().map(|g| g.clone()))
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn restore(&self, sessions: Vec<Session>) {
        let mut table = self.table();
        for s in sessions {
            table.insert(s.id.clone(), Arc::new(Mutex::new(s)));
        }
    }

    pub fn len(&self) -> usize {
        self.table().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

//! Opening a clean bot connection before each test and wiping what the test
//! left in the bot's persistence store afterwards.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::agent::AgentDefinition;
use crate::sim::{
    ActionRegistry, BotReply, PersistenceStore, ResponseMode, Session, SessionError, SimConfig,
    StoreItem, StoreView,
};

pub const LOCAL_SIM: &str = "local-sim";
pub const DEFAULT_NAMESPACE: &str = "convogen";

#[derive(Debug, Error)]
pub enum ConnectError {
    #[error("no connector registered for service `{0}`")]
    UnknownService(String),
    #[error("connection already open")]
    AlreadyOpen,
    #[error("store {path} is not writable: {source}")]
    Store {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Which store items tear-down deletes.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ItemFilter {
    #[default]
    All,
    KeyPrefix(String),
}

impl ItemFilter {
    pub fn matches(&self, item: &StoreItem) -> bool {
        match self {
            ItemFilter::All => true,
            ItemFilter::KeyPrefix(p) => item.key.starts_with(p.as_str()),
        }
    }
}

#[derive(Debug, Clone)]
pub enum StoreLocation {
    /// A shared in-memory store; clones of the routine see the same data.
    Memory(PersistenceStore),
    Dir(PathBuf),
}

/// How to reach the bot and what to clean after each test.
#[derive(Debug, Clone)]
pub struct CleaningRoutine {
    pub service_id: String,
    pub mode: ResponseMode,
    pub seed: u64,
    /// Store namespace every connection of this routine uses. Tests share it,
    /// so state leaks between them unless tear-down cleans it.
    pub namespace: String,
    pub store: StoreLocation,
    pub item_filter: ItemFilter,
    /// When false tear-down closes the connection but deletes nothing.
    pub cleaning: bool,
}

impl CleaningRoutine {
    pub fn local_sim(mode: ResponseMode, seed: u64) -> Self {
        CleaningRoutine {
            service_id: LOCAL_SIM.to_string(),
            mode,
            seed,
            namespace: DEFAULT_NAMESPACE.to_string(),
            store: StoreLocation::Memory(PersistenceStore::in_memory()),
            item_filter: ItemFilter::All,
            cleaning: true,
        }
    }

    pub fn with_store_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.store = StoreLocation::Dir(dir.into());
        self
    }

    /// A copy for a parallel worker: same store, its own namespace.
    pub fn for_worker(&self, worker: usize) -> Self {
        let mut cr = self.clone();
        cr.namespace = format!("{}-w{worker}", self.namespace);
        cr
    }

    pub fn open_store(&self) -> Result<PersistenceStore, ConnectError> {
        match &self.store {
            StoreLocation::Memory(store) => Ok(store.clone()),
            StoreLocation::Dir(dir) => PersistenceStore::file_backed(dir)
                .map_err(|source| ConnectError::Store { path: dir.clone(), source }),
        }
    }
}

/// An open conversation channel to a bot plus access to its stored items.
pub trait BotConnection: Send {
    fn send(&mut self, text: &str) -> Result<BotReply, SessionError>;
    fn items(&self) -> Vec<StoreItem>;
    /// Deletes matching items, returning how many went.
    fn clean(&mut self, filter: &ItemFilter) -> usize;
    fn close(&mut self);
}

pub trait Connector: Send + Sync {
    fn connect(
        &self,
        cr: &CleaningRoutine,
        agent: &Arc<AgentDefinition>,
    ) -> Result<Box<dyn BotConnection>, ConnectError>;
}

/// Connects to the in-process simulator.
#[derive(Debug, Clone)]
pub struct LocalSimConnector {
    actions: Arc<ActionRegistry>,
}

impl LocalSimConnector {
    pub fn new(actions: Arc<ActionRegistry>) -> Self {
        LocalSimConnector { actions }
    }
}

impl Default for LocalSimConnector {
    fn default() -> Self {
        Self::new(Arc::new(ActionRegistry::with_builtins()))
    }
}

struct SimConnection {
    session: Session,
}

impl BotConnection for SimConnection {
    fn send(&mut self, text: &str) -> Result<BotReply, SessionError> {
        self.session.send_message(text)
    }

    fn items(&self) -> Vec<StoreItem> {
        self.session.store().items()
    }

    fn clean(&mut self, filter: &ItemFilter) -> usize {
        self.session.store().remove_where(|item| filter.matches(item))
    }

    fn close(&mut self) {
        self.session.close();
    }
}

impl Connector for LocalSimConnector {
    fn connect(
        &self,
        cr: &CleaningRoutine,
        agent: &Arc<AgentDefinition>,
    ) -> Result<Box<dyn BotConnection>, ConnectError> {
        let store = StoreView::new(cr.open_store()?, cr.namespace.clone());
        let session = Session::open(
            Arc::clone(agent),
            Arc::clone(&self.actions),
            store,
            SimConfig::new(cr.mode, cr.seed),
        );
        Ok(Box::new(SimConnection { session }))
    }
}

/// Connector factories by service id.
#[derive(Clone, Default)]
pub struct ConnectorRegistry {
    connectors: BTreeMap<String, Arc<dyn Connector>>,
}

impl fmt::Debug for ConnectorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.connectors.keys()).finish()
    }
}

impl ConnectorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry with `local-sim` bound to the built-in actions.
    pub fn with_local_sim() -> Self {
        let mut reg = Self::new();
        reg.register(LOCAL_SIM, LocalSimConnector::default());
        reg
    }

    /// Registers (or replaces) the connector for `service_id`.
    pub fn register(&mut self, service_id: impl Into<String>, connector: impl Connector + 'static) {
        self.connectors.insert(service_id.into(), Arc::new(connector));
    }

    pub fn get(&self, service_id: &str) -> Option<&Arc<dyn Connector>> {
        self.connectors.get(service_id)
    }
}

/// One routine instance: at most one open connection at a time.
pub struct Cleaner {
    routine: CleaningRoutine,
    registry: Arc<ConnectorRegistry>,
    agent: Arc<AgentDefinition>,
    conn: Option<Box<dyn BotConnection>>,
}

impl fmt::Debug for Cleaner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Cleaner")
            .field("routine", &self.routine)
            .field("open", &self.conn.is_some())
            .finish()
    }
}

impl Cleaner {
    pub fn new(
        routine: CleaningRoutine,
        registry: Arc<ConnectorRegistry>,
        agent: Arc<AgentDefinition>,
    ) -> Self {
        Cleaner { routine, registry, agent, conn: None }
    }

    /// A cleaner on the local simulator with the built-in actions.
    pub fn local(routine: CleaningRoutine, agent: Arc<AgentDefinition>) -> Self {
        Self::new(routine, Arc::new(ConnectorRegistry::with_local_sim()), agent)
    }

    pub fn routine(&self) -> &CleaningRoutine {
        &self.routine
    }

    pub fn routine_mut(&mut self) -> &mut CleaningRoutine {
        &mut self.routine
    }

    pub fn agent(&self) -> &Arc<AgentDefinition> {
        &self.agent
    }

    pub fn registry(&self) -> &Arc<ConnectorRegistry> {
        &self.registry
    }

    pub fn is_open(&self) -> bool {
        self.conn.is_some()
    }

    pub fn set_up(&mut self) -> Result<&mut dyn BotConnection, ConnectError> {
        if self.conn.is_some() {
            return Err(ConnectError::AlreadyOpen);
        }
        let connector = self
            .registry
            .get(&self.routine.service_id)
            .ok_or_else(|| ConnectError::UnknownService(self.routine.service_id.clone()))?;
        let conn = connector.connect(&self.routine, &self.agent)?;
        Ok(self.conn.insert(conn).as_mut())
    }

    pub fn connection(&mut self) -> Option<&mut dyn BotConnection> {
        match &mut self.conn {
            Some(c) => Some(c.as_mut()),
            None => None,
        }
    }

    /// Cleans the open connection's items (if enabled) and closes it.
    /// A no-op when nothing is open.
    pub fn tear_down(&mut self) {
        if let Some(mut conn) = self.conn.take() {
            if self.routine.cleaning && !conn.items().is_empty() {
                let removed = conn.clean(&self.routine.item_filter);
                log::debug!("tear-down removed {removed} item(s) from `{}`", self.routine.namespace);
            }
            conn.close();
        }
    }
}

impl Drop for Cleaner {
    fn drop(&mut self) {
        self.tear_down();
    }
}

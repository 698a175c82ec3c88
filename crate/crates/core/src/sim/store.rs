//! Namespaced persistence used by action handlers, either in memory or as one
//! JSON file per namespace.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreItem {
    pub key: String,
    pub payload: String,
}

#[derive(Debug)]
enum Backend {
    Memory(Mutex<BTreeMap<String, Vec<StoreItem>>>),
    Files { dir: PathBuf, lock: Mutex<()> },
}

/// A shared persistence backend. Clones share the same data.
#[derive(Debug, Clone)]
pub struct PersistenceStore {
    backend: Arc<Backend>,
}

impl Default for PersistenceStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

fn file_name(namespace: &str) -> String {
    let safe: String = namespace
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}

impl PersistenceStore {
    pub fn in_memory() -> Self {
        PersistenceStore { backend: Arc::new(Backend::Memory(Mutex::new(BTreeMap::new()))) }
    }

    /// A store keeping each namespace in `<dir>/<namespace>.json`.
    pub fn file_backed(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        // probe writability up front
        let probe = dir.join(".convogen-probe");
        fs::write(&probe, b"")?;
        fs::remove_file(&probe)?;
        Ok(PersistenceStore { backend: Arc::new(Backend::Files { dir, lock: Mutex::new(()) }) })
    }

    pub fn namespace_path(&self, namespace: &str) -> Option<PathBuf> {
        match &*self.backend {
            Backend::Files { dir, .. } => Some(dir.join(file_name(namespace))),
            Backend::Memory(_) => None,
        }
    }

    fn read_file(path: &Path) -> Vec<StoreItem> {
        match fs::read_to_string(path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(_) => Vec::new(),
        }
    }

    fn write_file(path: &Path, items: &[StoreItem]) {
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(items).expect("items serialize");
        if fs::write(&tmp, text).is_ok() {
            let _ = fs::rename(&tmp, path);
        }
    }

    /// Runs `f` over the namespace's items with writes serialized.
    fn with_items<R>(&self, namespace: &str, f: impl FnOnce(&mut Vec<StoreItem>) -> (R, bool)) -> R {
        match &*self.backend {
            Backend::Memory(map) => {
                let mut map = map.lock().unwrap_or_else(|e| e.into_inner());
                let items = map.entry(namespace.to_string()).or_default();
                let (out, _) = f(items);
                if items.is_empty() {
                    map.remove(namespace);
                }
                out
            }
            Backend::Files { dir, lock } => {
                let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
                let path = dir.join(file_name(namespace));
                let mut items = Self::read_file(&path);
                let (out, dirty) = f(&mut items);
                if dirty {
                    if items.is_empty() {
                        let _ = fs::remove_file(&path);
                    } else {
                        Self::write_file(&path, &items);
                    }
                }
                out
            }
        }
    }

    /// Items of a namespace in insertion order.
    pub fn items(&self, namespace: &str) -> Vec<StoreItem> {
        self.with_items(namespace, |items| (items.clone(), false))
    }

    pub fn get(&self, namespace: &str, key: &str) -> Option<StoreItem> {
        self.with_items(namespace, |items| (items.iter().find(|i| i.key == key).cloned(), false))
    }

    /// Inserts an item; an existing item with the same key keeps its position
    /// and takes the new payload.
    pub fn put(&self, namespace: &str, key: &str, payload: &str) {
        self.with_items(namespace, |items| {
            match items.iter_mut().find(|i| i.key == key) {
                Some(item) => item.payload = payload.to_string(),
                None => items.push(StoreItem { key: key.to_string(), payload: payload.to_string() }),
            }
            ((), true)
        })
    }

    /// Removes the items selected by `pred`, returning how many were removed.
    pub fn remove_where(&self, namespace: &str, pred: impl Fn(&StoreItem) -> bool) -> usize {
        self.with_items(namespace, |items| {
            let before = items.len();
            items.retain(|i| !pred(i));
            let removed = before - items.len();
            (removed, removed > 0)
        })
    }

    pub fn namespaces(&self) -> Vec<String> {
        match &*self.backend {
            Backend::Memory(map) => {
                map.lock().unwrap_or_else(|e| e.into_inner()).keys().cloned().collect()
            }
            Backend::Files { dir, .. } => {
                let mut out: Vec<String> = fs::read_dir(dir)
                    .into_iter()
                    .flatten()
                    .flatten()
                    .filter_map(|e| {
                        e.file_name().to_str()?.strip_suffix(".json").map(str::to_string)
                    })
                    .collect();
                out.sort();
                out
            }
        }
    }
}

/// A store handle bound to one namespace.
#[derive(Debug, Clone)]
pub struct StoreView {
    store: PersistenceStore,
    namespace: String,
}

impl StoreView {
    pub fn new(store: PersistenceStore, namespace: impl Into<String>) -> Self {
        StoreView { store, namespace: namespace.into() }
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn items(&self) -> Vec<StoreItem> {
        self.store.items(&self.namespace)
    }

    pub fn get(&self, key: &str) -> Option<StoreItem> {
        self.store.get(&self.namespace, key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    pub fn put(&self, key: &str, payload: &str) {
        self.store.put(&self.namespace, key, payload)
    }

    pub fn remove_where(&self, pred: impl Fn(&StoreItem) -> bool) -> usize {
        self.store.remove_where(&self.namespace, pred)
    }
}

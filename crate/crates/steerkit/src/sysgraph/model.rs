//! The documented JSON export schema and its referential-integrity checks.
//!
//! ```json
//! {
//!   "version": 1,
//!   "name": "model name",
//!   "components": [{"id": "c1", "name": "Bus", "parent": null}],
//!   "functions":  [{"id": "f1", "name": "Route data", "component": "c1"}],
//!   "exchanges":  [{"name": "Telemetry", "source": "f1", "target": "c1"}]
//! }
//! ```
//!
//! Containment must form a forest, functions must reference an existing
//! component, and exchange endpoints may name a function or a component.
//! The `|` character is reserved for triple serialization and rejected in
//! every name.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDef {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub parent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDef {
    pub id: String,
    pub name: String,
    /// The performing component.
    pub component: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeDef {
    pub name: String,
    pub source: String,
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemModel {
    pub version: u32,
    #[serde(default)]
    pub name: String,
    pub components: Vec<ComponentDef>,
    #[serde(default)]
    pub functions: Vec<FunctionDef>,
    #[serde(default)]
    pub exchanges: Vec<ExchangeDef>,
}

/// Internal reference into a validated model: either table, by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(super) enum EntityRef {
    Component(usize),
    Function(usize),
}

impl SystemModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: SystemModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(Error::SchemaViolation {
                location: "version".into(),
                reason: format!("expected {MODEL_VERSION}, got {}", self.version),
            });
        }

        let mut ids: BTreeMap<&str, EntityRef> = BTreeMap::new();
        for (i, c) in self.components.iter().enumerate() {
            check_name(&c.name)?;
            if c.id.is_empty() {
                return Err(Error::SchemaViolation {
                    location: format!("components[{i}]"),
                    reason: "empty id".into(),
                });
            }
            if ids.insert(&c.id, EntityRef::Component(i)).is_some() {
                return Err(Error::SchemaViolation {
                    location: format!("components[{i}] ({})", c.id),
                    reason: "duplicate id".into(),
                });
            }
        }
        for (i, f) in self.functions.iter().enumerate() {
            check_name(&f.name)?;
            if ids.insert(&f.id, EntityRef::Function(i)).is_some() {
                return Err(Error::SchemaViolation {
                    location: format!("functions[{i}] ({})", f.id),
                    reason: "duplicate id".into(),
                });
            }
        }

        // containment forms a forest over existing components
        for c in &self.components {
            if let Some(parent) = &c.parent {
                match ids.get(parent.as_str()) {
                    Some(EntityRef::Component(_)) => {}
                    _ => {
                        return Err(Error::DanglingReference {
                            location: format!("component {} parent", c.id),
                            reference: parent.clone(),
                        })
                    }
                }
            }
        }
        self.check_containment_acyclic(&ids)?;

        for f in &self.functions {
            match ids.get(f.component.as_str()) {
                Some(EntityRef::Component(_)) => {}
                _ => {
                    return Err(Error::DanglingReference {
                        location: format!("function {} component", f.id),
                        reference: f.component.clone(),
                    })
                }
            }
        }

        for (i, e) in self.exchanges.iter().enumerate() {
            check_name(&e.name)?;
            for (role, endpoint) in [("source", &e.source), ("target", &e.target)] {
                if !ids.contains_key(endpoint.as_str()) {
                    return Err(Error::DanglingReference {
                        location: format!("exchanges[{i}] ({}) {role}", e.name),
                        reference: endpoint.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    fn check_containment_acyclic(&self, ids: &BTreeMap<&str, EntityRef>) -> Result<()> {
        for start in &self.components {
            let mut hops = 0usize;
            let mut cur = start;
            while let Some(parent) = &cur.parent {
                hops += 1;
                if hops > self.components.len() {
                    return Err(Error::SchemaViolation {
                        location: format!("component {}", start.id),
                        reason: "containment cycle".into(),
                    });
                }
                let Some(EntityRef::Component(idx)) = ids.get(parent.as_str()) else {
                    break; // dangling parents are reported elsewhere
                };
                cur = &self.components[*idx];
            }
        }
        Ok(())
    }

    pub(super) fn entity_by_id(&self, id: &str) -> Option<EntityRef> {
        if let Some(i) = self.components.iter().position(|c| c.id == id) {
            return Some(EntityRef::Component(i));
        }
        self.functions
            .iter()
            .position(|f| f.id == id)
            .map(EntityRef::Function)
    }

    pub(super) fn entity_name(&self, r: EntityRef) -> &str {
        match r {
            EntityRef::Component(i) => &self.components[i].name,
            EntityRef::Function(i) => &self.functions[i].name,
        }
    }

    pub fn component_name(&self, id: &str) -> Option<&str> {
        self.components
            .iter()
            .find(|c| c.id == id)
            .map(|c| c.name.as_str())
    }
}

fn check_name(name: &str) -> Result<()> {
    if name.is_empty() {
        return Err(Error::SchemaViolation {
            location: "name".into(),
            reason: "empty name".into(),
        });
    }
    if name.contains('|') {
        return Err(Error::ReservedDelimiter {
            name: name.to_string(),
        });
    }
    Ok(())
}

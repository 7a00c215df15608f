//! The entity-definition dictionary and its line-delimited record format.
//!
//! Each line of a dictionary file is one JSON object:
//!
//! ```text
//! {"id": "E0007", "name": "chronic nephritis", "surfaces": ["chronic nephritis"], "definition": "a disease of the kidney ..."}
//! ```
//!
//! `surfaces` may be empty, in which case `name` is the only surface form.
//! Surface forms are matched case-insensitively against token spans, so they
//! are normalised with the same tokenizer as sentences.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::text::tokenize;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryRecord {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub surfaces: Vec<String>,
    pub definition: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DictionaryEntry {
    pub canonical_name: String,
    pub definition: String,
}

/// Maps entity ids to definitions and lowercase surface strings to ids.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefinitionDictionary {
    entries: BTreeMap<String, DictionaryEntry>,
    surface_forms: BTreeMap<String, String>,
    max_surface_tokens: usize,
}

/// Lowercased, space-joined token form used as the surface lookup key.
pub fn surface_key(text: &str) -> String {
    tokenize(text)
        .iter()
        .map(|t| t.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

impl DefinitionDictionary {
    pub fn from_records(records: impl IntoIterator<Item = DictionaryRecord>) -> Result<Self> {
        let mut dict = Self::default();
        for rec in records {
            dict.insert(rec)?;
        }
        Ok(dict)
    }

    pub fn insert(&mut self, record: DictionaryRecord) -> Result<()> {
        if record.id.is_empty() {
            return Err(Error::InvalidInput("dictionary record with empty id".into()));
        }
        if record.definition.trim().is_empty() {
            return Err(Error::InvalidInput(format!("entity {} has an empty definition", record.id)));
        }
        if self.entries.contains_key(&record.id) {
            return Err(Error::InvalidInput(format!("duplicate entity id {}", record.id)));
        }
        let mut surfaces = record.surfaces.clone();
        if surfaces.is_empty() {
            surfaces.push(record.name.clone());
        }
        for s in &surfaces {
            let key = surface_key(s);
            if key.is_empty() {
                continue;
            }
            if let Some(existing) = self.surface_forms.get(&key) {
                if existing != &record.id {
                    return Err(Error::InvalidInput(format!(
                        "surface {key:?} maps to both {existing} and {}",
                        record.id
                    )));
                }
            }
            self.max_surface_tokens = self.max_surface_tokens.max(key.split(' ').count());
            self.surface_forms.insert(key, record.id.clone());
        }
        self.entries.insert(
            record.id,
            DictionaryEntry {
                canonical_name: record.name,
                definition: record.definition,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, entity_id: &str) -> bool {
        self.entries.contains_key(entity_id)
    }

    pub fn entry(&self, entity_id: &str) -> Option<&DictionaryEntry> {
        self.entries.get(entity_id)
    }

    pub fn definition(&self, entity_id: &str) -> Option<&str> {
        self.entries.get(entity_id).map(|e| e.definition.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &DictionaryEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn surface_forms(&self) -> impl Iterator<Item = (&str, &str)> {
        self.surface_forms.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn lookup_surface(&self, key: &str) -> Option<&str> {
        self.surface_forms.get(key).map(String::as_str)
    }

    /// Longest surface form, in tokens.
    pub fn max_surface_tokens(&self) -> usize {
        self.max_surface_tokens
    }

    pub fn to_records(&self) -> Vec<DictionaryRecord> {
        let mut surfaces: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (s, id) in &self.surface_forms {
            surfaces.entry(id.as_str()).or_default().push(s.clone());
        }
        self.entries
            .iter()
            .map(|(id, e)| DictionaryRecord {
                id: id.clone(),
                name: e.canonical_name.clone(),
                surfaces: surfaces.remove(id.as_str()).unwrap_or_default(),
                definition: e.definition.clone(),
            })
            .collect()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DictionaryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for rec in self.to_records() {
            serde_json::to_writer(&mut out, &rec).expect("record serialises");
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

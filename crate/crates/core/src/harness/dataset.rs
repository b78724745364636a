use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::render::{sha256_hex, TableData};

/// One evaluation item. `seed` is derived, never read from the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: String,
    pub task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<TableData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    /// Text already extracted from the native image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    /// Label tokens for classification items, e.g. `["True", "False"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default)]
    pub references: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<serde_json::Value>,
    #[serde(skip_deserializing, default)]
    pub seed: u64,
}

impl Example {
    pub fn has_visual(&self) -> bool {
        self.table.is_some() || self.image_path.is_some()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.task.trim().is_empty() {
            return Err("empty task".into());
        }
        if self.references.is_empty() {
            return Err("references must be non-empty".into());
        }
        let has_input = self.input.as_deref().is_some_and(|s| !s.trim().is_empty());
        if !has_input && !self.has_visual() {
            return Err("needs at least one of input, table, image_path".into());
        }
        if let Some(t) = &self.table {
            t.validate().map_err(|e| e.to_string())?;
        }
        if let Some(c) = &self.choices {
            if c.is_empty() || c.iter().any(|l| l.trim().is_empty()) {
                return Err("choices must be non-empty labels".into());
            }
        }
        Ok(())
    }
}

/// First eight bytes of `sha256(run_seed_le || id)`.
pub fn example_seed(run_seed: u64, id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(run_seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Examples in file order plus the content hash of the file.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub id: String,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn load(path: impl AsRef<Path>, run_seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let text = String::from_utf8(bytes.clone()).map_err(|e| Error::SchemaError {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(Self {
            id: sha256_hex(&bytes),
            examples: parse_jsonl(&text, base, run_seed)?,
        })
    }

    pub fn from_examples(mut examples: Vec<Example>, run_seed: u64) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut h = Sha256::new();
        for (i, ex) in examples.iter_mut().enumerate() {
            ex.validate().map_err(|message| Error::SchemaError { line: i + 1, message })?;
            if !seen.insert(ex.id.clone()) {
                return Err(Error::SchemaError {
                    line: i + 1,
                    message: format!("duplicate id {:?}", ex.id),
                });
            }
            ex.seed = example_seed(run_seed, &ex.id);
            h.update(serde_json::to_vec(ex)?);
            h.update(b"\n");
        }
        Ok(Self {
            id: hex::encode(h.finalize()),
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Task names in order of first appearance.
    pub fn tasks(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.examples
            .iter()
            .filter(|e| seen.insert(e.task.as_str()))
            .map(|e| e.task.clone())
            .collect()
    }

    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &self.examples {
            *out.entry(e.task.clone()).or_insert(0) += 1;
        }
        out
    }
}

/// Reads a JSONL dataset. Blank lines are skipped; relative image paths are
/// resolved against the file's directory.
pub fn load_dataset(path: impl AsRef<Path>, run_seed: u64) -> Result<Vec<Example>> {
    Ok(Dataset::load(path, run_seed)?.examples)
}

fn parse_jsonl(text: &str, base: &Path, run_seed: u64) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let schema = |message: String| Error::SchemaError { line: line_no, message };
        let mut ex: Example = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        ex.validate().map_err(schema)?;
        if !seen.insert(ex.id.clone()) {
            return Err(schema(format!("duplicate id {:?}", ex.id)));
        }
        if let Some(p) = &ex.image_path {
            if p.is_relative() {
                ex.image_path = Some(base.join(p));
            }
        }
        ex.seed = example_seed(run_seed, &ex.id);
        out.push(ex);
    }
    Ok(out)
}

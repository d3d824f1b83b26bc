//! Chat-format JSONL datasets, inference prompts and model generations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pragma;

/// Placeholder line the model is asked to replace with a pragma.
pub const TARGET_MARKER: &str = "<TARGET_PRAGMA_LOCATION>";

/// Default system prompt, shipped as a versioned asset.
pub const DEFAULT_SYSTEM_PROMPT: &str = include_str!("../assets/system_prompt.txt");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Reads a system prompt asset; one trailing newline is not part of the prompt.
pub fn load_system_prompt(path: &Path) -> Result<String, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(trim_prompt(&text).to_string())
}

pub fn default_system_prompt() -> String {
    trim_prompt(DEFAULT_SYSTEM_PROMPT).to_string()
}

fn trim_prompt(text: &str) -> &str {
    text.strip_suffix('\n').unwrap_or(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub messages: Vec<Message>,
}

/// Marker line, newline, then the loop exactly as mined.
pub fn build_user_content(loop_text: &str) -> String {
    format!("{TARGET_MARKER}\n{loop_text}")
}

impl DatasetRecord {
    pub fn prompt(id: impl Into<String>, system: &str, loop_text: &str) -> Self {
        DatasetRecord {
            id: id.into(),
            messages: vec![
                Message {
                    role: Role::System,
                    content: system.to_string(),
                },
                Message {
                    role: Role::User,
                    content: build_user_content(loop_text),
                },
            ],
        }
    }

    /// Prompt plus the normalized reference pragma as the assistant turn.
    pub fn training(id: impl Into<String>, system: &str, loop_text: &str, pragma: &str) -> Self {
        let mut rec = DatasetRecord::prompt(id, system, loop_text);
        rec.messages.push(Message {
            role: Role::Assistant,
            content: pragma::normalize_pragma(pragma),
        });
        rec
    }

    fn content(&self, role: Role) -> Option<&str> {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
    }

    pub fn user_content(&self) -> Option<&str> {
        self.content(Role::User)
    }

    pub fn assistant_content(&self) -> Option<&str> {
        self.content(Role::Assistant)
    }

    /// The loop text carried in the user turn (everything after the marker line).
    pub fn loop_text(&self) -> Option<&str> {
        self.user_content()?
            .strip_prefix(TARGET_MARKER)?
            .strip_prefix('\n')
    }

    pub fn without_assistant(&self) -> DatasetRecord {
        DatasetRecord {
            id: self.id.clone(),
            messages: self
                .messages
                .iter()
                .filter(|m| m.role != Role::Assistant)
                .cloned()
                .collect(),
        }
    }

    pub fn is_training(&self) -> bool {
        self.messages.len() == 3
    }

    /// Checks message order, the marker placement and the assistant label.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let invalid = |reason: &str| DatasetError::InvalidRecord {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        let roles: Vec<Role> = self.messages.iter().map(|m| m.role).collect();
        match roles.as_slice() {
            [Role::System, Role::User] | [Role::System, Role::User, Role::Assistant] => {}
            _ => return Err(invalid("messages must be system, user[, assistant]")),
        }
        let user = &self.messages[1].content;
        if user.matches(TARGET_MARKER).count() != 1 {
            return Err(invalid("user content must contain the marker exactly once"));
        }
        if !user.starts_with(&format!("{TARGET_MARKER}\n")) {
            return Err(invalid("marker must be on its own line before the loop"));
        }
        if let Some(label) = self.messages.get(2).map(|m| m.content.as_str())
            && (label.contains('\n')
                || pragma::normalize_pragma(label) != label
                || !pragma::is_acc_pragma(label))
            {
                return Err(invalid("assistant content must be one normalized pragma line"));
            }
        Ok(())
    }
}

/// One JSON document per line, each terminated by `\n`.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Blank lines are ignored; anything else that fails to decode is reported
/// with its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DatasetError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| DatasetError::MalformedLine {
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn write_dataset(path: &Path, records: &[DatasetRecord]) -> Result<(), DatasetError> {
    for r in records {
        r.validate()?;
    }
    write_jsonl(path, records)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>, DatasetError> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate()?;
    }
    Ok(records)
}

/// First line of `raw_output` whose normalized form is an `acc` pragma.
pub fn extract_generation(raw_output: &str) -> Option<String> {
    raw_output
        .lines()
        .map(pragma::normalize_pragma)
        .find(|line| pragma::is_acc_pragma(line))
}

/// A line of the generations file written by an external inference runner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationInput {
    pub id: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub id: String,
    pub raw_output: String,
    pub extracted_pragma: Option<String>,
    pub extraction_failed: bool,
}

impl GenerationRecord {
    pub fn from_output(id: impl Into<String>, raw_output: impl Into<String>) -> Self {
        let raw_output = raw_output.into();
        let extracted_pragma = extract_generation(&raw_output);
        GenerationRecord {
            id: id.into(),
            extraction_failed: extracted_pragma.is_none(),
            extracted_pragma,
            raw_output,
        }
    }
}

pub fn read_generations(path: &Path) -> Result<Vec<GenerationRecord>, DatasetError> {
    let inputs: Vec<GenerationInput> = read_jsonl(path)?;
    Ok(inputs
        .into_iter()
        .map(|g| GenerationRecord::from_output(g.id, g.output))
        .collect())
}

/// Join of reference records and generations by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pairing {
    pub matched: Vec<String>,
    pub missing_generation: Vec<String>,
    pub unknown_ids: Vec<String>,
}

pub fn pair_generations(refs: &[DatasetRecord], gens: &[GenerationRecord]) -> Pairing {
    let ref_ids: BTreeSet<&str> = refs.iter().map(|r| r.id.as_str()).collect();
    let gen_ids: BTreeMap<&str, ()> = gens.iter().map(|g| (g.id.as_str(), ())).collect();
    Pairing {
        matched: gen_ids
            .keys()
            .filter(|id| ref_ids.contains(*id))
            .map(|s| s.to_string())
            .collect(),
        missing_generation: ref_ids
            .iter()
            .filter(|id| !gen_ids.contains_key(*id))
            .map(|s| s.to_string())
            .collect(),
        unknown_ids: gen_ids
            .keys()
            .filter(|id| !ref_ids.contains(*id))
            .map(|s| s.to_string())
            .collect(),
    }
}

use std::collections::BTreeSet;

use super::model::{ArticulationModel, ModelError};
use super::ops::{revert, Operation, Recorder, UndoEntry};
use super::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub tag: String,
    pub op: Operation,
}

/// Ordered, uniquely tagged operations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperationHistory {
    entries: Vec<HistoryEntry>,
}

impl OperationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<HistoryEntry>) -> Result<Self, ModelError> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.tag.as_str()) {
                return Err(ModelError::DuplicateTag(e.tag.clone()));
            }
        }
        Ok(OperationHistory { entries })
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, tag: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.tag == tag)
    }

    pub fn push(&mut self, tag: impl Into<String>, op: Operation) -> Result<(), ModelError> {
        let tag = tag.into();
        if self.position(&tag).is_some() {
            return Err(ModelError::DuplicateTag(tag));
        }
        self.entries.push(HistoryEntry { tag, op });
        Ok(())
    }
}

/// Where a new operation goes in the history.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Append,
    Before(String),
    Replace(String),
}

/// Names whose values differ between two model states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeSet {
    pub paths: BTreeSet<Path>,
    pub constraints: BTreeSet<String>,
    pub shapes: BTreeSet<String>,
}

impl ChangeSet {
    pub fn between(before: &ArticulationModel, after: &ArticulationModel) -> Self {
        fn diff<K: Ord + Clone, V: PartialEq>(
            a: &std::collections::BTreeMap<K, V>,
            b: &std::collections::BTreeMap<K, V>,
        ) -> BTreeSet<K> {
            let mut out: BTreeSet<K> = a
                .iter()
                .filter(|(k, v)| b.get(*k) != Some(*v))
                .map(|(k, _)| k.clone())
                .collect();
            out.extend(b.keys().filter(|k| !a.contains_key(*k)).cloned());
            out
        }
        ChangeSet {
            paths: diff(&before.defs, &after.defs),
            constraints: diff(&before.constraints, &after.constraints),
            shapes: diff(&before.shapes, &after.shapes),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty() && self.constraints.is_empty() && self.shapes.is_empty()
    }
}

fn tagged(tag: &str, e: ModelError) -> ModelError {
    match e {
        e @ ModelError::Operation { .. } => e,
        e => ModelError::Operation {
            tag: tag.to_string(),
            source: Box::new(e),
        },
    }
}

/// Applies all operations in order to the empty model.
pub fn replay(history: &OperationHistory) -> Result<ArticulationModel, ModelError> {
    TaggedModel::from_history(history).map(TaggedModel::into_model)
}

/// A model together with the tagged history that produced it.
///
/// Every step keeps an undo log, so inserting or replacing an operation only
/// reverts and re-applies the affected suffix; the result equals a fresh
/// replay of the updated history.
#[derive(Debug, Clone, Default)]
pub struct TaggedModel {
    model: ArticulationModel,
    history: OperationHistory,
    undo: Vec<Vec<UndoEntry>>,
}

impl TaggedModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_history(history: &OperationHistory) -> Result<Self, ModelError> {
        let mut tm = TaggedModel::new();
        for e in history.entries() {
            tm.apply(e.tag.clone(), e.op.clone(), Placement::Append)?;
        }
        Ok(tm)
    }

    pub fn model(&self) -> &ArticulationModel {
        &self.model
    }

    pub fn history(&self) -> &OperationHistory {
        &self.history
    }

    pub fn into_model(self) -> ArticulationModel {
        self.model
    }

    fn step(&mut self, entry: &HistoryEntry) -> Result<Vec<UndoEntry>, ModelError> {
        let mut rec = Recorder::new(&mut self.model);
        match entry.op.apply(&entry.tag, &mut rec) {
            Ok(()) => Ok(rec.undo),
            Err(e) => {
                let undo = rec.undo;
                revert(&mut self.model, undo);
                Err(tagged(&entry.tag, e))
            }
        }
    }

    /// Reverts steps `index..` and returns their entries.
    fn unwind(&mut self, index: usize) -> Vec<HistoryEntry> {
        while self.undo.len() > index {
            let log = self.undo.pop().expect("undo log per entry");
            revert(&mut self.model, log);
        }
        self.history.entries.split_off(index)
    }

    /// Applies entries in order; on failure reverts the ones already applied
    /// by this call.
    fn apply_all(&mut self, entries: &[HistoryEntry]) -> Result<(), ModelError> {
        let start = self.undo.len();
        for e in entries {
            match self.step(e) {
                Ok(log) => {
                    self.undo.push(log);
                    self.history.entries.push(e.clone());
                }
                Err(err) => {
                    self.unwind(start);
                    return Err(err);
                }
            }
        }
        Ok(())
    }

    /// Inserts `op` under `tag` and returns the names whose values changed.
    pub fn apply(
        &mut self,
        tag: impl Into<String>,
        op: Operation,
        placement: Placement,
    ) -> Result<ChangeSet, ModelError> {
        let tag = tag.into();
        let (index, replaced) = match &placement {
            Placement::Append => (self.history.len(), false),
            Placement::Before(t) => (
                self.history
                    .position(t)
                    .ok_or_else(|| ModelError::UnknownTag(t.clone()))?,
                false,
            ),
            Placement::Replace(t) => (
                self.history
                    .position(t)
                    .ok_or_else(|| ModelError::UnknownTag(t.clone()))?,
                true,
            ),
        };
        let clash = self.history.position(&tag);
        if clash.is_some() && !(replaced && clash == Some(index)) {
            return Err(ModelError::DuplicateTag(tag));
        }
        let before = self.model.clone();
        let suffix = self.unwind(index);
        let mut new_entries = vec![HistoryEntry { tag, op }];
        new_entries.extend(suffix.iter().skip(usize::from(replaced)).cloned());
        if let Err(e) = self.apply_all(&new_entries) {
            self.apply_all(&suffix)
                .expect("previously applied suffix re-applies");
            return Err(e);
        }
        Ok(ChangeSet::between(&before, &self.model))
    }
}

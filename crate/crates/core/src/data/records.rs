//! Line-delimited record files.
//!
//! Three record kinds share the format, one JSON object per line:
//!
//! * task records — [`TaskInstance`]; the schema is pinned in
//!   `schema/task_record.schema.json` at the repository root,
//! * tensor records — [`TensorRecord`], sparse adjacency dumps with the
//!   anchor positions needed for standalone decoding,
//! * prediction records — [`PredictionRecord`], tuples in the gold-slot
//!   schema keyed by instance id.

use super::{DataError, TaskInstance};
use crate::graph::{AdjacencyTensor, CodecError, EdgeKind};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

/// Stream task instances from a line-delimited record file.
///
/// Blank lines are skipped; a malformed line yields a
/// [`DataError::ParseError`] carrying its 1-based line number.
pub fn read_records_iter<R: Read>(
    reader: R,
) -> impl Iterator<Item = Result<TaskInstance, DataError>> {
    BufReader::new(reader)
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(parse_line(i + 1, &l)),
            Err(e) => Some(Err(DataError::Io(e))),
        })
}

fn parse_line(line: usize, content: &str) -> Result<TaskInstance, DataError> {
    let instance: TaskInstance = serde_json::from_str(content)
        .map_err(|e| DataError::ParseError { line, message: e.to_string() })?;
    instance.validate().map_err(|e| DataError::ParseError { line, message: e.to_string() })?;
    Ok(instance)
}

pub fn read_records(path: &Path) -> Result<Vec<TaskInstance>, DataError> {
    read_records_iter(File::open(path)?).collect()
}

pub fn write_records<W: Write>(
    instances: &[TaskInstance],
    mut writer: W,
) -> Result<(), DataError> {
    for instance in instances {
        let line = serde_json::to_string(instance)
            .map_err(|e| DataError::InvalidInstance { id: instance.id.clone(), detail: e.to_string() })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Sparse serialized form of an adjacency tensor plus the stream metadata a
/// standalone decoder needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub id: String,
    pub len: usize,
    pub consecutive: Vec<(usize, usize)>,
    pub jump: Vec<(usize, usize)>,
    pub tail_to_head: Vec<(usize, usize)>,
    pub anchors: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<usize>,
}

impl TensorRecord {
    pub fn from_tensor(
        id: &str,
        adj: &AdjacencyTensor,
        anchors: Vec<usize>,
        arity: Option<usize>,
    ) -> Self {
        TensorRecord {
            id: id.to_string(),
            len: adj.len(),
            consecutive: adj.edges(EdgeKind::Consecutive),
            jump: adj.edges(EdgeKind::Jump),
            tail_to_head: adj.edges(EdgeKind::TailToHead),
            anchors,
            arity,
        }
    }

    pub fn to_tensor(&self) -> Result<AdjacencyTensor, CodecError> {
        let mut adj = AdjacencyTensor::new(self.len);
        for (kind, edges) in [
            (EdgeKind::Consecutive, &self.consecutive),
            (EdgeKind::Jump, &self.jump),
            (EdgeKind::TailToHead, &self.tail_to_head),
        ] {
            for &(from, to) in edges {
                if from >= self.len || to >= self.len {
                    return Err(CodecError::PositionOutOfRange {
                        position: from.max(to),
                        len: self.len,
                    });
                }
                adj.set(kind, from, to, true);
            }
        }
        Ok(adj)
    }
}

/// Predicted tuples for one instance, in the gold-slot schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub tuples: Vec<Vec<super::GoldSlot>>,
}

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::mesh::Coord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Start,
    Compute,
    Write,
    WriteVisible,
    DmaStart,
    DmaDone,
    FlagWait,
    FlagResume,
    BarrierArrive,
    BarrierRelease,
    MutexRequest,
    MutexGrant,
    MutexRelease,
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub time_ns: f64,
    pub core: Coord,
    pub kind: EventKind,
    pub bytes: u64,
}

/// Writes records as JSON lines.
pub fn write_json_lines<W: Write>(mut out: W, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

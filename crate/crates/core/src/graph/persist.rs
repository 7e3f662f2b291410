//! On-disk graph container: one header line, then the canonical JSON payload.
//!
//! ```text
//! lexgraph-graph v1 sha256=<hex digest of the payload bytes>
//! {"fact":...}
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{GraphError, HierarGraph};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "lexgraph-graph";

/// Serializes a graph. Every map in the graph is ordered, so equal graphs
/// produce identical bytes.
pub fn write_graph(graph: &HierarGraph) -> String {
    let payload = serde_json::to_string(graph).expect("graph serializes");
    let digest = hex::encode(Sha256::digest(payload.as_bytes()));
    format!("{MAGIC} v{FORMAT_VERSION} sha256={digest}\n{payload}\n")
}

pub fn read_graph(text: &str) -> Result<HierarGraph, GraphError> {
    let (header, rest) = text
        .split_once('\n')
        .ok_or_else(|| GraphError::Malformed("missing header line".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(GraphError::Malformed("not a graph file".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| GraphError::Malformed("unreadable format version".into()))?;
    if version > FORMAT_VERSION {
        return Err(GraphError::Version {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let expected = parts
        .next()
        .and_then(|c| c.strip_prefix("sha256="))
        .ok_or_else(|| GraphError::Malformed("missing checksum".into()))?;
    let payload = rest.strip_suffix('\n').unwrap_or(rest);
    let actual = hex::encode(Sha256::digest(payload.as_bytes()));
    if actual != expected {
        return Err(GraphError::Checksum {
            expected: expected.to_owned(),
            actual,
        });
    }
    serde_json::from_str(payload).map_err(|e| GraphError::Malformed(e.to_string()))
}

/// Writes through a temporary sibling file so readers never see a partial graph.
pub fn persist(graph: &HierarGraph, path: &Path) -> Result<(), GraphError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, write_graph(graph))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<HierarGraph, GraphError> {
    read_graph(&fs::read_to_string(path)?)
}

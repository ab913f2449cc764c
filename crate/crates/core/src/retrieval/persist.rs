//! Index persistence.
//!
//! One file per index, newline-delimited JSON. The first line is a header
//! `{format, version, dimension, count, metric}`; each following line is one
//! chunk record `{doc_id, span_id, offsets, metadata, text, vector}` in
//! `(doc_id, span_id)` order, so identical indexes serialize to identical
//! bytes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Chunk, ChunkMetadata, EmbeddingVector, IndexSet, RetrievalError, VectorIndex};
use crate::citation::CanonicalId;

pub const FORMAT_TAG: &str = "gated-rag.vector-index";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dimension: usize,
    count: usize,
    metric: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    doc_id: CanonicalId,
    span_id: u32,
    offsets: (usize, usize),
    metadata: ChunkMetadata,
    text: String,
    vector: EmbeddingVector,
}

pub fn write_index<W: Write>(index: &VectorIndex, mut out: W) -> Result<(), RetrievalError> {
    let header = Header {
        format: FORMAT_TAG.into(),
        version: FORMAT_VERSION,
        dimension: index.dimension(),
        count: index.len(),
        metric: "cosine".into(),
    };
    writeln!(out, "{}", to_json(&header)?)?;
    for e in index.iter() {
        let rec = Record {
            doc_id: e.chunk.doc_id.clone(),
            span_id: e.chunk.span_id,
            offsets: e.chunk.char_offset,
            metadata: e.chunk.metadata.clone(),
            text: e.chunk.text.clone(),
            vector: e.vector.clone(),
        };
        writeln!(out, "{}", to_json(&rec)?)?;
    }
    Ok(())
}

pub fn export_index(index: &VectorIndex) -> Vec<u8> {
    let mut buf = Vec::new();
    write_index(index, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_index<R: BufRead>(input: R) -> Result<VectorIndex, RetrievalError> {
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| RetrievalError::Format("missing header".into()))??;
    let header: Header =
        serde_json::from_str(&header_line).map_err(|e| RetrievalError::Format(format!("header: {e}")))?;
    if header.format != FORMAT_TAG {
        return Err(RetrievalError::Format(format!(
            "unknown format tag {:?}",
            header.format
        )));
    }
    if header.version != FORMAT_VERSION {
        return Err(RetrievalError::Format(format!(
            "unsupported version {}",
            header.version
        )));
    }
    if header.metric != "cosine" {
        return Err(RetrievalError::Format(format!(
            "unsupported metric {:?}",
            header.metric
        )));
    }
    let mut index = VectorIndex::new(header.dimension);
    let mut items = Vec::with_capacity(header.count);
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(&line).map_err(|e| RetrievalError::Format(format!("record {}: {e}", n + 1)))?;
        let vector = EmbeddingVector::new(rec.vector.values().to_vec())?;
        items.push((
            Chunk {
                doc_id: rec.doc_id,
                span_id: rec.span_id,
                text: rec.text,
                char_offset: rec.offsets,
                metadata: rec.metadata,
            },
            vector,
        ));
    }
    if items.len() != header.count {
        return Err(RetrievalError::Format(format!(
            "header declares {} records, found {}",
            header.count,
            items.len()
        )));
    }
    index.index_add(items)?;
    Ok(index)
}

fn index_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.index.jsonl"))
}

/// Saves every index in the set under `dir` as `<name>.index.jsonl`.
pub fn save_set(set: &IndexSet, dir: &Path) -> Result<(), RetrievalError> {
    fs::create_dir_all(dir)?;
    for (name, index) in set.iter() {
        let path = index_path(dir, name);
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = std::io::BufWriter::new(fs::File::create(&tmp)?);
            write_index(index, &mut f)?;
            f.flush()?;
        }
        fs::rename(tmp, path)?;
    }
    Ok(())
}

/// Loads every `*.index.jsonl` file under `dir`; a missing directory yields
/// an empty set.
pub fn load_set(dir: &Path, dimension: usize) -> Result<IndexSet, RetrievalError> {
    let mut set = IndexSet::new(dimension);
    if !dir.exists() {
        return Ok(set);
    }
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.to_string_lossy().ends_with(".index.jsonl"))
        .collect();
    paths.sort();
    for path in paths {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_suffix(".index.jsonl"))
            .unwrap_or_default()
            .to_string();
        let index = read_index(BufReader::new(fs::File::open(&path)?))?;
        set.insert_index(&name, index)?;
    }
    Ok(set)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, RetrievalError> {
    serde_json::to_string(v).map_err(|e| RetrievalError::Format(e.to_string()))
}

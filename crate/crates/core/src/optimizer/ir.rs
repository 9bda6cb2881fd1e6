//! Container-format version extraction.
//!
//! ONNX models store `ir_version` as field 1 (varint) of the top-level
//! `ModelProto`; mock artifacts are JSON documents with an `ir_version` key.

use std::path::Path;

fn read_varint(bytes: &[u8], pos: &mut usize) -> Option<u64> {
    let mut value = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes.get(*pos)?;
        *pos += 1;
        value |= u64::from(b & 0x7f) << shift;
        if b & 0x80 == 0 {
            return Some(value);
        }
    }
    None
}

/// `ir_version` from serialized `ModelProto` bytes, scanning top-level fields.
pub fn protobuf_ir_version(bytes: &[u8]) -> Option<i64> {
    let mut pos = 0;
    while pos < bytes.len() {
        let tag = read_varint(bytes, &mut pos)?;
        let (field, wire) = (tag >> 3, tag & 7);
        match wire {
            0 => {
                let v = read_varint(bytes, &mut pos)?;
                if field == 1 {
                    return Some(v as i64);
                }
            }
            1 => pos = pos.checked_add(8)?,
            2 => {
                let len = read_varint(bytes, &mut pos)? as usize;
                pos = pos.checked_add(len)?;
            }
            5 => pos = pos.checked_add(4)?,
            _ => return None,
        }
        if pos > bytes.len() {
            return None;
        }
    }
    None
}

pub fn json_ir_version(bytes: &[u8]) -> Option<i64> {
    let v: serde_json::Value = serde_json::from_slice(bytes).ok()?;
    v.get("ir_version")?.as_i64()
}

/// Format version of a model file, or `None` when it cannot be read.
pub fn read_ir_version(path: &Path) -> Option<i64> {
    let bytes = std::fs::read(path).ok()?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace())?;
    if *first == b'{' {
        json_ir_version(&bytes)
    } else {
        protobuf_ir_version(&bytes)
    }
}

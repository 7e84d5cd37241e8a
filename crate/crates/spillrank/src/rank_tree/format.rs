//! Versioned binary form of a structure.
//!
//! # Layout
//!
//! ```text
//! "SPRK"            4 bytes
//! version           u32 little endian
//! header length     u32 little endian
//! header            JSON: params, blocks, pad_bits, top_width, arena_bits
//! arena             ceil(arena_bits / 8) bytes, least significant bit first
//! ```
//!
//! Level codes are not stored; they depend only on the parameters and are
//! rebuilt on load.

use serde::{Deserialize, Serialize};

use super::{build_codecs, top_width_for, RankStructure};
use crate::error::{Error, Result};
use crate::model::{BitArena, Params};

pub const FORMAT_MAGIC: &[u8; 4] = b"SPRK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    params: Params,
    blocks: u64,
    pad_bits: u64,
    top_width: u64,
    arena_bits: u64,
}

pub fn save(rs: &RankStructure) -> Vec<u8> {
    let header = Header {
        params: rs.params.clone(),
        blocks: rs.blocks,
        pad_bits: rs.pad_bits,
        top_width: rs.top_width,
        arena_bits: rs.arena.len(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + rs.arena.len().div_ceil(8) as usize);
    out.extend_from_slice(FORMAT_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&rs.arena.to_bytes());
    out
}

fn u32_at(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::Format("truncated header".into()))
}

pub fn load(bytes: &[u8]) -> Result<RankStructure> {
    if bytes.get(..4) != Some(FORMAT_MAGIC.as_slice()) {
        return Err(Error::Format("missing SPRK magic".into()));
    }
    let version = u32_at(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}"
        )));
    }
    let hlen = u32_at(bytes, 8)? as usize;
    let body = bytes
        .get(12..12 + hlen)
        .ok_or_else(|| Error::Format("truncated header".into()))?;
    let header: Header =
        serde_json::from_slice(body).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    let params = header.params;
    params.validate()?;
    let (leaf, codecs) = build_codecs(&params)?;
    let root = codecs
        .last()
        .map(|c| c.own.clone())
        .unwrap_or_else(|| leaf.clone());
    let top_width = top_width_for(&params, root.size())?;
    let expected_blocks = params.block_count();
    if header.blocks != expected_blocks
        || header.top_width != top_width
        || header.pad_bits != expected_blocks * params.block_len() - params.n
    {
        return Err(Error::Integrity(
            "header disagrees with its parameters".into(),
        ));
    }
    let expected_bits = (expected_blocks - 1) * params.prefix_width()
        + expected_blocks * (params.memory_bits(params.t) + top_width);
    if header.arena_bits != expected_bits {
        return Err(Error::Integrity(format!(
            "arena has {} bits, layout needs {expected_bits}",
            header.arena_bits
        )));
    }
    let arena = BitArena::from_bytes(params.w, &bytes[12 + hlen..], header.arena_bits)?;
    Ok(RankStructure {
        params,
        leaf,
        codecs,
        arena,
        blocks: header.blocks,
        pad_bits: header.pad_bits,
        top_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ProbeMeter;
    use crate::rank_tree::{build, rank};

    #[test]
    fn round_trip_and_corruption() {
        let bits: Vec<bool> = (0..192).map(|i| i % 5 == 1).collect();
        let rs = build(&bits, Params::relaxed(192, 16, 2, 2)).unwrap();
        let bytes = save(&rs);
        assert_eq!(&bytes[..4], b"SPRK");
        let back = load(&bytes).unwrap();
        let mut m = ProbeMeter::new();
        for u in 0..=192 {
            assert_eq!(
                rank(&back, u, &mut m).unwrap(),
                rank(&rs, u, &mut m).unwrap()
            );
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(load(&bad), Err(Error::Format(_))));
        assert!(load(&bytes[..bytes.len() - 3]).is_err());
        assert!(load(b"nope").is_err());
    }
}

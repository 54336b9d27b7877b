//! Versioned binary parameter checkpoints.
//!
//! Layout (little-endian throughout):
//!   magic "GAITCKPT" | version u32 | config header | parameter groups
//!
//! Config header: in_channels, n_blocks, block channels..., temporal_kernel,
//! embedding_dim, frames, partitions, n_edges, (a, b) per edge — all u32.
//!
//! Each parameter group: name length u16, UTF-8 name, element count u64,
//! then raw f32 values. Group order is the fixed order of
//! `ModelParams::group_names`, so a load after a save is bit-exact.

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::graph::GraphConfig;

use super::{BlockParams, ModelConfig, ModelParams};

const MAGIC: &[u8; 8] = b"GAITCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic bytes; not a parameter checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

fn write_u32<W: Write>(w: &mut W, x: u32) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, x: u64) -> io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn save<W: Write>(
    w: &mut W,
    config: &ModelConfig,
    params: &ModelParams<f32>,
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    write_u32(w, VERSION)?;
    write_u32(w, config.in_channels as u32)?;
    write_u32(w, config.block_channels.len() as u32)?;
    for &c in &config.block_channels {
        write_u32(w, c as u32)?;
    }
    write_u32(w, config.temporal_kernel as u32)?;
    write_u32(w, config.embedding_dim as u32)?;
    write_u32(w, config.frames as u32)?;
    write_u32(w, config.graph.partitions as u32)?;
    write_u32(w, config.graph.edges.len() as u32)?;
    for &(a, b) in &config.graph.edges {
        write_u32(w, a as u32)?;
        write_u32(w, b as u32)?;
    }

    let names = params.group_names();
    let slices = params.slices();
    write_u32(w, names.len() as u32)?;
    for (name, slice) in names.iter().zip(slices) {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        write_u64(w, slice.len() as u64)?;
        for &x in slice {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load<R: Read>(r: &mut R) -> Result<(ModelConfig, ModelParams<f32>), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let in_channels = read_u32(r)? as usize;
    let n_blocks = read_u32(r)? as usize;
    if n_blocks == 0 || n_blocks > 64 {
        return Err(CheckpointError::Corrupt(format!("{n_blocks} blocks")));
    }
    let mut block_channels = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        block_channels.push(read_u32(r)? as usize);
    }
    let temporal_kernel = read_u32(r)? as usize;
    let embedding_dim = read_u32(r)? as usize;
    let frames = read_u32(r)? as usize;
    let partitions = read_u32(r)? as usize;
    let n_edges = read_u32(r)? as usize;
    if n_edges > 1024 {
        return Err(CheckpointError::Corrupt(format!("{n_edges} edges")));
    }
    let mut edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let a = read_u32(r)? as usize;
        let b = read_u32(r)? as usize;
        edges.push((a, b));
    }
    let config = ModelConfig {
        in_channels,
        block_channels: block_channels.clone(),
        temporal_kernel,
        embedding_dim,
        frames,
        graph: GraphConfig { edges, partitions },
    };

    // expected group shapes from the config
    let mut expected: Vec<(String, usize)> = Vec::new();
    let mut c_in = in_channels;
    for (bi, &c_out) in block_channels.iter().enumerate() {
        for ki in 0..partitions {
            expected.push((format!("block{bi}.spatial{ki}"), c_in * c_out));
        }
        expected.push((format!("block{bi}.temporal"), temporal_kernel * c_out * c_out));
        expected.push((format!("block{bi}.gamma"), c_out));
        expected.push((format!("block{bi}.beta"), c_out));
        c_in = c_out;
    }
    expected.push(("projection".to_string(), c_in * embedding_dim));

    let n_groups = read_u32(r)? as usize;
    if n_groups != expected.len() {
        return Err(CheckpointError::Corrupt(format!(
            "expected {} parameter groups, found {n_groups}",
            expected.len()
        )));
    }
    let mut flat: Vec<Vec<f32>> = Vec::with_capacity(n_groups);
    for (name, len) in &expected {
        let mut name_len = [0u8; 2];
        r.read_exact(&mut name_len)?;
        let name_len = u16::from_le_bytes(name_len) as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let got_name = String::from_utf8(name_buf)
            .map_err(|_| CheckpointError::Corrupt("non-UTF8 group name".into()))?;
        if &got_name != name {
            return Err(CheckpointError::Corrupt(format!(
                "group name mismatch: expected {name}, found {got_name}"
            )));
        }
        let count = read_u64(r)? as usize;
        if count != *len {
            return Err(CheckpointError::Corrupt(format!(
                "group {name}: expected {len} values, found {count}"
            )));
        }
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)?;
        let values = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        flat.push(values);
    }

    // reassemble in group order
    let mut it = flat.into_iter();
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let spatial: Vec<Vec<f32>> = (0..partitions).map(|_| it.next().unwrap()).collect();
        let temporal = it.next().unwrap();
        let gamma = it.next().unwrap();
        let beta = it.next().unwrap();
        blocks.push(BlockParams {
            spatial,
            temporal,
            gamma,
            beta,
        });
    }
    let projection = it.next().unwrap();
    Ok((config, ModelParams { blocks, projection }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    #[test]
    fn roundtrip_bit_exact() {
        let config = ModelConfig::default();
        let params = init_params(&config, 123);
        let mut buf = Vec::new();
        save(&mut buf, &config, &params).unwrap();
        let (config2, params2) = load(&mut buf.as_slice()).unwrap();
        assert_eq!(config, config2);
        assert_eq!(params, params2);
        // saving again produces identical bytes
        let mut buf2 = Vec::new();
        save(&mut buf2, &config2, &params2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn bad_magic_rejected() {
        let data = b"NOTMAGIC\x01\x00\x00\x00";
        assert!(matches!(
            load(&mut data.as_slice()),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn truncated_rejected() {
        let config = ModelConfig::default();
        let params = init_params(&config, 1);
        let mut buf = Vec::new();
        save(&mut buf, &config, &params).unwrap();
        buf.truncate(buf.len() / 2);
        assert!(load(&mut buf.as_slice()).is_err());
    }
}

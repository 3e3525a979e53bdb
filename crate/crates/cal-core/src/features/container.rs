//! Flat binary container for feature matrices: magic "CALF", version u32,
//! then named blocks (name length + name + row/col u32 + little-endian f32
//! data, row-major).

use super::{Matrix, NodeFeatureMatrix};
use std::io::{self, Read, Write};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"CALF";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("bad magic, not a feature container")]
    BadMagic,
    #[error("unsupported container version {0}")]
    BadVersion(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Write the enabled blocks plus the concatenation and edge features.
pub fn write_feature_matrix<W: Write>(m: &NodeFeatureMatrix, w: &mut W) -> Result<(), ContainerError> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let named: [(&str, Option<&Matrix>); 6] = [
        ("x_type", m.x_type.as_ref()),
        ("x_walk", m.x_walk.as_ref()),
        ("x_text", m.x_text.as_ref()),
        ("x_metric", m.x_metric.as_ref()),
        ("x", Some(&m.x)),
        ("edge_features", Some(&m.edge_features)),
    ];
    for (name, block) in named {
        if let Some(block) = block {
            write_block(w, name, block)?;
        }
    }
    Ok(())
}

fn write_block<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<(), ContainerError> {
    w.write_all(&(name.len() as u32).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    w.write_all(&(m.rows as u32).to_le_bytes())?;
    w.write_all(&(m.cols as u32).to_le_bytes())?;
    for v in &m.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read all named blocks until end of stream.
pub fn read_container<R: Read>(r: &mut R) -> Result<Vec<(String, Matrix)>, ContainerError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != VERSION {
        return Err(ContainerError::BadVersion(version));
    }
    let mut blocks = Vec::new();
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let name_len = u32::from_le_bytes(len_buf) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        let mut data = vec![0.0f32; rows * cols];
        let mut buf = [0u8; 4];
        for v in &mut data {
            r.read_exact(&mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        blocks.push((String::from_utf8_lossy(&name).into_owned(), Matrix { rows, cols, data }));
    }
    Ok(blocks)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, ContainerError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

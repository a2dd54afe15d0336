//! `MSFL` flow dumps: `"MSFL" | u32 width | u32 height | (f32 u, f32 v) per pixel`,
//! little-endian, row-major.

use std::fs;
use std::path::Path;

use metastab_core::flow::FlowField;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MSFL";

pub fn encode(flow: &FlowField) -> Vec<u8> {
    let (w, h) = flow.dims();
    let mut out = Vec::with_capacity(12 + 8 * w * h);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a flow dump. Confidence is not stored and comes back as 1.
pub fn decode(bytes: &[u8], path: &Path) -> Result<FlowField> {
    if bytes.len() < 12 || bytes[..4] != MAGIC {
        return Err(Error::format(path, "not an MSFL flow file"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes")) as usize;
    let (w, h) = (word(4), word(8));
    let n = w
        .checked_mul(h)
        .filter(|n| n.checked_mul(8).and_then(|b| b.checked_add(12)) == Some(bytes.len()))
        .ok_or_else(|| Error::format(path, format!("payload does not match {w}x{h}")))?;
    let f = |i: usize| f32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let u = (0..n).map(|i| f(12 + 8 * i)).collect();
    let v = (0..n).map(|i| f(16 + 8 * i)).collect();
    Ok(FlowField::new(w, h, u, v, vec![1.0; n])?)
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(flow)).map_err(Error::io(path))
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_layout() {
        let u = vec![0.5, -1.25, 3.0, f32::MIN_POSITIVE, 0.0, 7.5];
        let v = vec![-0.5, 2.0, -3.0, 1e-8, -0.0, 1.0];
        let flow = FlowField::new(3, 2, u.clone(), v.clone(), vec![1.0; 6]).unwrap();
        let b = encode(&flow);
        assert_eq!(&b[..4], b"MSFL");
        assert_eq!(b.len(), 12 + 48);
        assert_eq!(f32::from_le_bytes(b[16..20].try_into().unwrap()), -0.5);
        let back = decode(&b, Path::new("m")).unwrap();
        assert_eq!(back.dims(), (3, 2));
        assert_eq!(back.u().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), u.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(back.v().iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert!(decode(&b[..b.len() - 4], Path::new("m")).is_err());
    }
}

//! `MSTB` parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "MSTB" | u32 version | u32 count
//! count x ( u32 name_len | name (UTF-8) | u32 rank | rank x u32 dim | f32 payload )
//! ```

use std::fs;
use std::path::Path;

use metastab_core::regressor::AffineRegressor;
use metastab_core::synthesis::SynthesisNet;
use metastab_core::tensor::{ParamSet, Tensor};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"MSTB";
pub const VERSION: u32 = 1;

/// Serializes a parameter table.
pub fn encode(params: &ParamSet<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * params.numel() + 64 * params.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params.iter() {
        out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        let shape = p.tensor.shape();
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

/// Parses a parameter table; `path` only labels errors.
pub fn decode(bytes: &[u8], path: &Path) -> Result<ParamSet<f32>> {
    let truncated = || Error::format(path, "truncated checkpoint");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4) != Some(&MAGIC[..]) {
        return Err(Error::format(path, "not an MSTB checkpoint"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32().ok_or_else(truncated)?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| Error::format(path, "parameter name is not UTF-8"))?
            .to_string();
        let rank = r.u32().ok_or_else(truncated)? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize).ok_or_else(truncated))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::format(path, "parameter shape overflows"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let tensor = Tensor::param(&shape, data)?;
        params.push(name, tensor);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after parameter table"));
    }
    Ok(params)
}

pub fn save_params(params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    fs::write(path, encode(params)).map_err(Error::io(path))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamSet<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, path)
}

pub fn load_synthesis(path: impl AsRef<Path>) -> Result<SynthesisNet> {
    Ok(SynthesisNet::from_params(load_params(path)?)?)
}

pub fn load_regressor(path: impl AsRef<Path>) -> Result<AffineRegressor> {
    Ok(AffineRegressor::from_params(load_params(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use metastab_core::synthesis::SynthesisConfig;

    #[test]
    fn synthesis_net_round_trips_bit_exactly() {
        let mut net = SynthesisNet::new(SynthesisConfig { k: 1, base_width: 4 }, 3);
        net.randomize_output(0.1, 9);
        let bytes = encode(net.params());
        let back = SynthesisNet::from_params(decode(&bytes, Path::new("mem")).unwrap()).unwrap();
        let bits = |n: &SynthesisNet| n.params().flat_values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&net), bits(&back));
        assert_eq!(encode(back.params()), bytes);
    }

    #[test]
    fn header_layout() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::param(&[2, 1], vec![1.0f32, -2.0]).unwrap());
        let b = encode(&ps);
        let mut expected = b"MSTB".to_vec();
        for v in [1u32, 1, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.push(b'w');
        for v in [2u32, 2, 1] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(b, expected);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut ps = ParamSet::new();
        ps.push("w", Tensor::param(&[3], vec![1.0f32, 2.0, 3.0]).unwrap());
        let b = encode(&ps);
        let p = Path::new("x.mstb");
        assert!(decode(&b[..b.len() - 1], p).unwrap_err().to_string().contains("truncated"));
        assert!(decode(b"NOPE", p).unwrap_err().to_string().contains("not an MSTB"));
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(decode(&v2, p).unwrap_err().to_string().contains("version 2"));
        let mut extra = b.clone();
        extra.push(0);
        assert!(decode(&extra, p).unwrap_err().to_string().contains("trailing"));
    }
}

//! DRAM side of the chip: the byte-addressed image, named regions, the
//! ping-pong transpose unit, and element packing rules.
//!
//! Elements occupy power-of-two containers in DRAM (at least one byte), so
//! an `i6` costs one byte of traffic and an `i18` four. The controller
//! queue timing (fixed latency, per-controller grant) is driven by the
//! simulator; this module owns the data transformations.

use crate::isa::Precision;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum MemoryError {
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("region `{name}` too small: needs {needed} bytes, has {have}")]
    RegionSize {
        name: String,
        needed: u64,
        have: u64,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad manifest: {0}")]
    Manifest(String),
}

// ------------------------------------------------------------- transpose

/// The ping-pong transpose unit as a pure function: `elements` enter in
/// row-major order and come out as bit slices, one wordline image per bit
/// of significance (slice `w`, bit `k` = bit `w` of element `k`). Fill and
/// drain overlap, so throughput is one slice per cycle; the simulator
/// folds that into the transfer streaming time.
pub fn transpose_batch(elements: &[i64], p: Precision, bitlines: usize) -> Vec<Vec<u64>> {
    let words = bitlines.div_ceil(64);
    let mut rows = vec![vec![0u64; words]; p.bits as usize];
    for (k, &v) in elements.iter().enumerate() {
        let u = (p.wrap(v) as u64) & mask_u64(p.bits as u32);
        for (w, row) in rows.iter_mut().enumerate() {
            if u >> w & 1 == 1 {
                row[k / 64] |= 1 << (k % 64);
            }
        }
    }
    rows
}

/// Inverse of [`transpose_batch`]: rebuilds `count` elements from slices.
pub fn untranspose_batch(rows: &[Vec<u64>], p: Precision, count: usize) -> Vec<i64> {
    (0..count)
        .map(|k| {
            let mut u = 0i64;
            for (w, row) in rows.iter().enumerate() {
                if row[k / 64] >> (k % 64) & 1 == 1 {
                    u |= 1 << w;
                }
            }
            p.wrap(u)
        })
        .collect()
}

fn mask_u64(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

// --------------------------------------------------------------- packing

/// Little-endian container encoding of one element stream.
pub fn encode_elements(values: &[i64], p: Precision) -> Vec<u8> {
    let bytes = p.container_bytes() as usize;
    let mut out = Vec::with_capacity(values.len() * bytes);
    for &v in values {
        let u = (p.wrap(v) as u64) & mask_u64(p.container_bits());
        for b in 0..bytes {
            out.push((u >> (8 * b)) as u8);
        }
    }
    out
}

pub fn decode_elements(bytes: &[u8], p: Precision, count: usize) -> Vec<i64> {
    let width = p.container_bytes() as usize;
    (0..count)
        .map(|i| {
            let mut u = 0u64;
            for b in 0..width {
                u |= (bytes.get(i * width + b).copied().unwrap_or(0) as u64) << (8 * b);
            }
            p.wrap((u & mask_u64(p.bits as u32)) as i64)
        })
        .collect()
}

// ----------------------------------------------------------------- image

/// Byte-addressed DRAM image, grown on write and zero by default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DramImage {
    bytes: Vec<u8>,
}

impl DramImage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        DramImage { bytes }
    }

    pub fn read(&self, addr: u64, len: usize) -> Vec<u8> {
        (0..len)
            .map(|i| {
                self.bytes
                    .get(addr as usize + i)
                    .copied()
                    .unwrap_or(0)
            })
            .collect()
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) {
        let end = addr as usize + data.len();
        if end > self.bytes.len() {
            self.bytes.resize(end, 0);
        }
        self.bytes[addr as usize..end].copy_from_slice(data);
    }

    pub fn read_elements(&self, addr: u64, p: Precision, count: usize) -> Vec<i64> {
        let bytes = self.read(addr, count * p.container_bytes() as usize);
        decode_elements(&bytes, p, count)
    }

    pub fn write_elements(&mut self, addr: u64, p: Precision, values: &[i64]) {
        self.write(addr, &encode_elements(values, p));
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

// -------------------------------------------------------------- manifest

/// One named element range of the image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRegion {
    pub offset: u64,
    pub prec: String,
    pub count: u64,
}

impl ManifestRegion {
    pub fn precision(&self) -> Result<Precision, MemoryError> {
        self.prec
            .parse()
            .map_err(|e: String| MemoryError::Manifest(e))
    }

    pub fn byte_len(&self) -> Result<u64, MemoryError> {
        Ok(self.count * self.precision()?.container_bytes() as u64)
    }
}

/// The region manifest that travels with a DRAM image file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    #[serde(default)]
    pub regions: BTreeMap<String, ManifestRegion>,
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Self, MemoryError> {
        toml::from_str(text).map_err(|e| MemoryError::Manifest(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let text = std::fs::read_to_string(path).map_err(|source| MemoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn get(&self, name: &str) -> Result<&ManifestRegion, MemoryError> {
        self.regions
            .get(name)
            .ok_or_else(|| MemoryError::UnknownRegion(name.to_string()))
    }

    pub fn insert(&mut self, name: &str, offset: u64, p: Precision, count: u64) {
        self.regions.insert(
            name.to_string(),
            ManifestRegion {
                offset,
                prec: p.to_string(),
                count,
            },
        );
    }

    /// First free byte after every region.
    pub fn end(&self) -> u64 {
        self.regions
            .values()
            .filter_map(|r| r.byte_len().ok().map(|l| r.offset + l))
            .max()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_identity_on_1x1() {
        let p = Precision::unsigned(1);
        let rows = transpose_batch(&[1], p, 64);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0][0], 1);
        assert_eq!(untranspose_batch(&rows, p, 1), vec![1]);
    }

    #[test]
    fn double_transpose_is_identity() {
        let p = Precision::signed(8);
        let vals: Vec<i64> = (0..256).map(|i| ((i * 37) % 256) - 128).collect();
        let rows = transpose_batch(&vals, p, 256);
        assert_eq!(rows.len(), 8);
        assert_eq!(untranspose_batch(&rows, p, 256), vals);
    }

    #[test]
    fn transposed_slice_is_bit_of_each_element() {
        let p = Precision::unsigned(8);
        let vals: Vec<i64> = (0..64).map(|i| i * 3 % 256).collect();
        let rows = transpose_batch(&vals, p, 64);
        for (w, row) in rows.iter().enumerate() {
            for (k, &v) in vals.iter().enumerate() {
                let bit = row[k / 64] >> (k % 64) & 1;
                assert_eq!(bit, ((v as u64) >> w) & 1, "slice {w} element {k}");
            }
        }
    }

    #[test]
    fn container_sizes_follow_power_of_two_rule() {
        assert_eq!(Precision::signed(6).container_bytes(), 1);
        assert_eq!(Precision::signed(8).container_bytes(), 1);
        assert_eq!(Precision::signed(10).container_bytes(), 2);
        assert_eq!(Precision::signed(18).container_bytes(), 4);
        assert_eq!(Precision::signed(26).container_bytes(), 4);
        assert_eq!(Precision::signed(33).container_bytes(), 8);
    }

    #[test]
    fn element_roundtrip_with_sign_extension() {
        let p = Precision::signed(6);
        let vals = vec![-32, -1, 0, 1, 31];
        let bytes = encode_elements(&vals, p);
        assert_eq!(bytes.len(), 5);
        assert_eq!(decode_elements(&bytes, p, 5), vals);
    }

    #[test]
    fn image_reads_are_zero_beyond_the_end() {
        let mut img = DramImage::new();
        img.write(4, &[1, 2, 3]);
        assert_eq!(img.read(0, 8), vec![0, 0, 0, 0, 1, 2, 3, 0]);
        assert_eq!(img.len(), 7);
    }

    #[test]
    fn manifest_roundtrip() {
        let mut m = Manifest::default();
        m.insert("in1", 0, Precision::signed(8), 2048);
        m.insert("out", 2048, Precision::signed(16), 1024);
        let text = m.to_toml();
        let back = Manifest::from_toml(&text).unwrap();
        assert_eq!(m, back);
        assert_eq!(back.get("out").unwrap().byte_len().unwrap(), 2048);
        assert_eq!(back.end(), 4096);
        assert!(back.get("nope").is_err());
    }
}

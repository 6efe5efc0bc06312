//! The SPM binary container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset size field
//!      0    4 magic "SPM1"
//!      4    4 H (u32)
//!      8    4 W (u32)
//!     12    4 k (u32)
//!     16    1 channel flags: bit0 depth, bit1 normals
//!     17    1 endianness tag, b'L'
//!     18    2 encoder version (u16)
//!     20    4 truncation count (u32)
//!     24    8 source hash (u64)
//!     32      depth: k*H*W f32, layer-major then row-major; -1.0 where invalid
//!             validity: k*H*W bits packed LSB-first, ceil(k*H*W / 8) bytes
//!             normals (bit1 only): k*H*W * 3 f32
//! ```
//!
//! The same body layout with magic `SPN1` holds one orthographic depth stack
//! of the nested baseline; there the byte at offset 24 carries the axis tag.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sphere::{SpMap, SpMeta, SphericalGrid, SENTINEL};

pub const MAGIC: [u8; 4] = *b"SPM1";
pub const NESTED_MAGIC: [u8; 4] = *b"SPN1";
pub const HEADER_LEN: usize = 32;
pub const FLAG_DEPTH: u8 = 1;
pub const FLAG_NORMALS: u8 = 2;
pub const ENDIAN_LITTLE: u8 = b'L';

/// Fixed 32-byte header shared by SPM and nested-stack files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpHeader {
    pub magic: [u8; 4],
    pub height: u32,
    pub width: u32,
    pub layers: u32,
    pub flags: u8,
    pub encoder_version: u16,
    pub truncation_count: u32,
    pub source_hash: u64,
}

impl SpHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&self.magic);
        b[4..8].copy_from_slice(&self.height.to_le_bytes());
        b[8..12].copy_from_slice(&self.width.to_le_bytes());
        b[12..16].copy_from_slice(&self.layers.to_le_bytes());
        b[16] = self.flags;
        b[17] = ENDIAN_LITTLE;
        b[18..20].copy_from_slice(&self.encoder_version.to_le_bytes());
        b[20..24].copy_from_slice(&self.truncation_count.to_le_bytes());
        b[24..32].copy_from_slice(&self.source_hash.to_le_bytes());
        b
    }

    pub fn parse(bytes: &[u8], expected_magic: [u8; 4]) -> Result<SpHeader> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::HeaderMismatch(format!("file shorter than {HEADER_LEN}-byte header")));
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != expected_magic {
            return Err(Error::BadMagic(magic));
        }
        if bytes[17] != ENDIAN_LITTLE {
            return Err(Error::HeaderMismatch(format!("unknown endianness tag {:#x}", bytes[17])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        Ok(SpHeader {
            magic,
            height: u32_at(4),
            width: u32_at(8),
            layers: u32_at(12),
            flags: bytes[16],
            encoder_version: u16::from_le_bytes(bytes[18..20].try_into().unwrap()),
            truncation_count: u32_at(20),
            source_hash: u64::from_le_bytes(bytes[24..32].try_into().unwrap()),
        })
    }

    fn cells(&self) -> usize {
        self.height as usize * self.width as usize * self.layers as usize
    }

    /// Exact file length implied by the header.
    pub fn file_len(&self) -> usize {
        let n = self.cells();
        let normals = if self.flags & FLAG_NORMALS != 0 { 12 * n } else { 0 };
        HEADER_LEN + 4 * n + n.div_ceil(8) + normals
    }
}

/// Raw body buffers of a layered depth file.
pub(crate) struct Body<'a> {
    pub depth: &'a [f32],
    pub valid: &'a [bool],
    pub normals: Option<&'a [[f32; 3]]>,
}

pub(crate) fn write_body(out: &mut Vec<u8>, body: &Body<'_>) {
    for d in body.depth {
        out.extend_from_slice(&d.to_le_bytes());
    }
    let mut packed = vec![0u8; body.valid.len().div_ceil(8)];
    for (i, &v) in body.valid.iter().enumerate() {
        if v {
            packed[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend_from_slice(&packed);
    if let Some(normals) = body.normals {
        for n in normals {
            for c in n {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
}

pub(crate) struct OwnedBody {
    pub depth: Vec<f32>,
    pub valid: Vec<bool>,
    pub normals: Option<Vec<[f32; 3]>>,
}

/// Reads the body following `header`; `bytes` starts at the header.
pub(crate) fn read_body(bytes: &[u8], header: &SpHeader) -> Result<OwnedBody> {
    if header.flags & FLAG_DEPTH == 0 {
        return Err(Error::HeaderMismatch("depth channel flag not set".into()));
    }
    if bytes.len() != header.file_len() {
        return Err(Error::HeaderMismatch(format!(
            "expected {} bytes, found {}",
            header.file_len(),
            bytes.len()
        )));
    }
    let n = header.cells();
    let mut o = HEADER_LEN;
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let depth: Vec<f32> = (0..n).map(|i| f32_at(o + 4 * i)).collect();
    o += 4 * n;
    let valid: Vec<bool> = (0..n).map(|i| bytes[o + i / 8] >> (i % 8) & 1 == 1).collect();
    o += n.div_ceil(8);
    let normals = (header.flags & FLAG_NORMALS != 0).then(|| {
        (0..n)
            .map(|i| {
                let b = o + 12 * i;
                [f32_at(b), f32_at(b + 4), f32_at(b + 8)]
            })
            .collect()
    });
    Ok(OwnedBody { depth, valid, normals })
}

pub fn header_of(map: &SpMap) -> SpHeader {
    let g = map.grid();
    SpHeader {
        magic: MAGIC,
        height: g.height() as u32,
        width: g.width() as u32,
        layers: map.layers() as u32,
        flags: FLAG_DEPTH | if map.has_normals() { FLAG_NORMALS } else { 0 },
        encoder_version: map.meta.encoder_version,
        truncation_count: map.meta.truncation_count,
        source_hash: map.meta.source_hash,
    }
}

/// Serializes a map to SPM bytes.
pub fn to_bytes(map: &SpMap) -> Vec<u8> {
    let header = header_of(map);
    let mut out = Vec::with_capacity(header.file_len());
    out.extend_from_slice(&header.to_bytes());
    write_body(
        &mut out,
        &Body {
            depth: map.depth_buffer(),
            valid: map.valid_buffer(),
            normals: map.normal_buffer(),
        },
    );
    out
}

/// Parses SPM bytes. Any size disagreement with the header is an error;
/// partial maps are never returned.
pub fn from_bytes(bytes: &[u8]) -> Result<SpMap> {
    let header = SpHeader::parse(bytes, MAGIC)?;
    let grid = SphericalGrid::new(header.height as usize, header.width as usize)
        .map_err(|e| Error::HeaderMismatch(e.to_string()))?;
    if header.layers == 0 {
        return Err(Error::HeaderMismatch("zero layers".into()));
    }
    let body = read_body(bytes, &header)?;
    if body
        .depth
        .iter()
        .zip(&body.valid)
        .any(|(d, &v)| !v && d.to_bits() != SENTINEL.to_bits())
    {
        return Err(Error::InvalidMap("invalid pixel without sentinel depth".into()));
    }
    SpMap::from_parts(
        grid,
        header.layers as usize,
        body.depth,
        body.valid,
        body.normals,
        SpMeta {
            source_hash: header.source_hash,
            encoder_version: header.encoder_version,
            truncation_count: header.truncation_count,
        },
    )
}

pub fn write_spm(map: &SpMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_bytes(map))?;
    Ok(())
}

pub fn read_spm(path: impl AsRef<Path>) -> Result<SpMap> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_map(h: usize, w: usize, k: usize, normals: bool, seed: u64) -> SpMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = SphericalGrid::new(h, w).unwrap();
        let mut m = SpMap::empty(grid, k, normals);
        m.meta = SpMeta {
            source_hash: rng.gen(),
            encoder_version: 3,
            truncation_count: rng.gen_range(0..10),
        };
        for r in 0..h {
            for c in 0..w {
                let hits = rng.gen_range(0..=k);
                let mut d = 0.86f32;
                for l in 0..hits {
                    d *= rng.gen_range(0.3f32..0.99);
                    let n = crate::mesh::Vec3::new(rng.gen(), rng.gen(), rng.gen());
                    m.set(l, r, c, d, Some(n));
                }
            }
        }
        m
    }

    #[test]
    fn depth_only_file_size() {
        let m = SpMap::empty(SphericalGrid::new(256, 512).unwrap(), 4, false);
        // 32 + 4 * 524288 + 524288 / 8
        assert_eq!(to_bytes(&m).len(), 2_162_720);
        assert_eq!(header_of(&m).file_len(), 2_162_720);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let m = random_map(4, 8, 2, true, 1);
        let bytes = to_bytes(&m);
        for cut in [0, 10, HEADER_LEN, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::HeaderMismatch(_))), "cut {cut}");
        }
    }

    #[test]
    fn bad_magic_is_rejected() {
        let mut bytes = to_bytes(&random_map(4, 8, 1, false, 2));
        bytes[0] = b'X';
        assert!(matches!(from_bytes(&bytes), Err(Error::BadMagic(_))));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.spm");
        let m = random_map(6, 12, 3, true, 9);
        write_spm(&m, &p).unwrap();
        assert_eq!(read_spm(&p).unwrap(), m);
        assert!(matches!(read_spm(dir.path().join("none.spm")), Err(Error::FileNotFound(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn bytes_round_trip_bit_exact(h in 2usize..9, w in 4usize..17, k in 1usize..5, normals: bool, seed: u64) {
            let m = random_map(h, w, k, normals, seed);
            let bytes = to_bytes(&m);
            let back = from_bytes(&bytes).unwrap();
            prop_assert_eq!(to_bytes(&back), bytes);
            prop_assert_eq!(back, m);
        }
    }
}

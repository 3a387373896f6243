//! Byte packing and the on-disk share and store formats.
//!
//! A store directory holds one `node_NNN.rms` file per node and, for the
//! 2-layer scheme, the secure server's `record.rmpr`. Share files never
//! carry the permutation seed.
//!
//! Share file layout, all integers little-endian:
//!
//! ```text
//! "RMSH" | version u16 | scheme u8 | reserved u8 | q u32 | node u32 | n u32
//! | d u32 | alpha u32 | xd u32 | theta_L u64 | theta_H u64 | m u32 | rho u32
//! | theta u64 | B_F u64 | original_len u64 | symbol_count u64
//! | symbol_count symbols of symbol_width bytes each
//! ```
//!
//! Fields that do not apply to a scheme are zero.

use std::fs;
use std::path::{Path, PathBuf};

use ratematch::galois::{Elem, Field, FieldError};
use ratematch::two_layer::PermutationRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Packs bytes into symbols of `field.data_bits()` bits each, least
/// significant bit first; the last symbol is zero-padded.
pub fn bytes_to_symbols(field: &Field, bytes: &[u8]) -> Vec<Elem> {
    let bits = field.data_bits() as usize;
    let count = (bytes.len() * 8).div_ceil(bits);
    let mut out = Vec::with_capacity(count);
    let (mut acc, mut have) = (0u64, 0usize);
    let mut it = bytes.iter();
    while out.len() < count {
        while have < bits {
            match it.next() {
                Some(&b) => {
                    acc |= u64::from(b) << have;
                    have += 8;
                }
                None => have = bits,
            }
        }
        out.push(field.reduce(acc & ((1u64 << bits) - 1)));
        acc >>= bits;
        have -= bits;
    }
    out
}

/// Inverse of [`bytes_to_symbols`], keeping the first `len` bytes.
pub fn symbols_to_bytes(field: &Field, symbols: &[Elem], len: usize) -> Vec<u8> {
    let bits = field.data_bits() as usize;
    let mut out = Vec::with_capacity(len);
    let (mut acc, mut have) = (0u64, 0usize);
    for s in symbols {
        acc |= u64::from(s.value()) << have;
        have += bits;
        while have >= 8 && out.len() < len {
            out.push(acc as u8);
            acc >>= 8;
            have -= 8;
        }
        if out.len() == len {
            break;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum SchemeTag {
    TwoLayer = 1,
    MLayer = 2,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareHeader {
    pub scheme: SchemeTag,
    pub q: u32,
    pub node: u32,
    pub n: u32,
    pub d: u32,
    pub alpha: u32,
    pub xd: u32,
    pub theta_l: u64,
    pub theta_h: u64,
    pub m: u32,
    pub rho: u32,
    pub theta: u64,
    pub b_f: u64,
    pub original_len: u64,
    pub symbol_count: u64,
}

const SHARE_MAGIC: &[u8; 4] = b"RMSH";
const SHARE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 * 6 + 8 * 2 + 4 * 2 + 8 * 4;

impl ShareHeader {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.extend_from_slice(SHARE_MAGIC);
        out.extend_from_slice(&SHARE_VERSION.to_le_bytes());
        out.push(self.scheme as u8);
        out.push(0);
        for v in [self.q, self.node, self.n, self.d, self.alpha, self.xd] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.theta_l, self.theta_h] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.m, self.rho] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in [self.theta, self.b_f, self.original_len, self.symbol_count] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<ShareHeader, FormatError> {
        let bad = |m: &str| FormatError::Malformed(m.to_string());
        if b.len() < HEADER_LEN {
            return Err(bad("share header truncated"));
        }
        if &b[..4] != SHARE_MAGIC {
            return Err(bad("not a share file"));
        }
        if u16::from_le_bytes([b[4], b[5]]) != SHARE_VERSION {
            return Err(bad("unsupported share file version"));
        }
        let scheme = match b[6] {
            1 => SchemeTag::TwoLayer,
            2 => SchemeTag::MLayer,
            _ => return Err(bad("unknown scheme tag")),
        };
        let u32_at = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
        Ok(ShareHeader {
            scheme,
            q: u32_at(8),
            node: u32_at(12),
            n: u32_at(16),
            d: u32_at(20),
            alpha: u32_at(24),
            xd: u32_at(28),
            theta_l: u64_at(32),
            theta_h: u64_at(40),
            m: u32_at(48),
            rho: u32_at(52),
            theta: u64_at(56),
            b_f: u64_at(64),
            original_len: u64_at(72),
            symbol_count: u64_at(80),
        })
    }

    /// Everything except the node index.
    pub fn same_file(&self, other: &ShareHeader) -> bool {
        ShareHeader {
            node: 0,
            ..self.clone()
        } == ShareHeader {
            node: 0,
            ..other.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShareFile {
    pub header: ShareHeader,
    pub symbols: Vec<Elem>,
}

impl ShareFile {
    pub fn to_bytes(&self, field: &Field) -> Vec<u8> {
        let mut out = self.header.to_bytes();
        out.reserve(self.symbols.len() * field.symbol_width());
        for &s in &self.symbols {
            field.write_symbol(s, &mut out);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(ShareFile, Field), FormatError> {
        let header = ShareHeader::from_bytes(bytes)?;
        let field = Field::new(u64::from(header.q), None)?;
        let w = field.symbol_width();
        let body = &bytes[HEADER_LEN..];
        if body.len() as u64 != header.symbol_count * w as u64 {
            return Err(FormatError::Malformed(format!(
                "payload is {} bytes, header promises {} symbols of {w} bytes",
                body.len(),
                header.symbol_count
            )));
        }
        let symbols = body
            .chunks(w)
            .map(|c| field.read_symbol(c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((ShareFile { header, symbols }, field))
    }
}

pub const RECORD_FILE: &str = "record.rmpr";

pub fn share_path(dir: &Path, node: usize) -> PathBuf {
    dir.join(format!("node_{node:03}.rms"))
}

/// Writes one share file per node and, if given, the permutation record.
pub fn write_store(
    dir: &Path,
    field: &Field,
    shares: &[ShareFile],
    record: Option<&PermutationRecord>,
) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for s in shares {
        let path = share_path(dir, s.header.node as usize);
        fs::write(&path, s.to_bytes(field)).map_err(io_err(&path))?;
    }
    if let Some(r) = record {
        let path = dir.join(RECORD_FILE);
        fs::write(&path, r.to_bytes()).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn write_share(dir: &Path, field: &Field, share: &ShareFile) -> Result<(), FormatError> {
    let path = share_path(dir, share.header.node as usize);
    fs::write(&path, share.to_bytes(field)).map_err(io_err(&path))
}

/// A loaded store directory.
#[derive(Debug)]
pub struct Store {
    pub field: Field,
    /// Header of node 0, with `node` reset to 0.
    pub header: ShareHeader,
    pub shares: Vec<Vec<Elem>>,
    pub record: Option<PermutationRecord>,
}

pub fn load_store(dir: &Path) -> Result<Store, FormatError> {
    let first = share_path(dir, 0);
    let bytes = fs::read(&first).map_err(io_err(&first))?;
    let (s0, field) = ShareFile::from_bytes(&bytes)?;
    let header = ShareHeader {
        node: 0,
        ..s0.header
    };
    let mut shares = vec![s0.symbols];
    for i in 1..header.n as usize {
        let path = share_path(dir, i);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let (s, _) = ShareFile::from_bytes(&bytes)?;
        if !s.header.same_file(&header) || s.header.node as usize != i {
            return Err(FormatError::Malformed(format!(
                "{} does not belong to this store",
                path.display()
            )));
        }
        shares.push(s.symbols);
    }
    let record = match header.scheme {
        SchemeTag::TwoLayer => {
            let path = dir.join(RECORD_FILE);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            let rec = PermutationRecord::from_bytes(&bytes)
                .map_err(|e| FormatError::Malformed(e.to_string()))?;
            let p = rec.plan();
            if p.n as u32 != header.n
                || p.d as u32 != header.d
                || p.xd as u32 != header.xd
                || p.theta_l != header.theta_l
                || p.theta_h != header.theta_h
            {
                return Err(FormatError::Malformed(
                    "record does not match the shares".into(),
                ));
            }
            Some(rec)
        }
        SchemeTag::MLayer => None,
    };
    Ok(Store {
        field,
        header,
        shares,
        record,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header() -> ShareHeader {
        ShareHeader {
            scheme: SchemeTag::MLayer,
            q: 65536,
            node: 3,
            n: 30,
            d: 16,
            alpha: 8,
            xd: 0,
            theta_l: 0,
            theta_h: 0,
            m: 3,
            rho: 1,
            theta: 3,
            b_f: 200,
            original_len: 399,
            symbol_count: 24,
        }
    }

    #[test]
    fn header_round_trip() {
        let h = header();
        let b = h.to_bytes();
        assert_eq!(b.len(), HEADER_LEN);
        assert_eq!(ShareHeader::from_bytes(&b).unwrap(), h);
        let mut bad = b.clone();
        bad[6] = 9;
        assert!(ShareHeader::from_bytes(&bad).is_err());
        assert!(ShareHeader::from_bytes(&b[..10]).is_err());
    }

    #[test]
    fn share_round_trip_and_length_check() {
        let f = Field::gf65536();
        let s = ShareFile {
            header: header(),
            symbols: (0..24).map(|v| f.reduce(v * 2711)).collect(),
        };
        let b = s.to_bytes(&f);
        assert_eq!(b.len(), HEADER_LEN + 48);
        assert_eq!(ShareFile::from_bytes(&b).unwrap().0, s);
        assert!(ShareFile::from_bytes(&b[..b.len() - 1]).is_err());
    }

    #[test]
    fn small_field_packing() {
        // GF(23) carries 4 data bits per symbol.
        let f = Field::new(23, None).unwrap();
        let syms = bytes_to_symbols(&f, &[0xAB, 0x01]);
        assert_eq!(
            syms.iter().map(|s| s.value()).collect::<Vec<_>>(),
            vec![0xB, 0xA, 0x1, 0x0]
        );
        assert_eq!(symbols_to_bytes(&f, &syms, 2), vec![0xAB, 0x01]);
    }

    proptest! {
        #[test]
        fn packing_round_trips(bytes in proptest::collection::vec(any::<u8>(), 0..300), q in prop::sample::select(vec![2u64, 5, 23, 31, 256, 257, 65536])) {
            let f = Field::new(q, None).unwrap();
            let syms = bytes_to_symbols(&f, &bytes);
            prop_assert_eq!(syms.len(), (bytes.len() * 8).div_ceil(f.data_bits() as usize));
            prop_assert_eq!(symbols_to_bytes(&f, &syms, bytes.len()), bytes);
        }
    }
}

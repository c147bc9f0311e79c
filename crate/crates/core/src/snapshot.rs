//! Binary snapshots of converged solves.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "KWSN"
//! 4       4     format version (u32, currently 1)
//! 8       1     family tag: 0 divisor-free, 1 divisor, 2 limit background
//! 9       8     energy E (f64)
//! 17      16    z0 (re, im as f64; zeros unless family tag is 1)
//! 33      4     n_rho (u32)
//! 37      4     n_t (u32)
//! 41      8     rho_max (f64)
//! 49      1     converged flag
//! 50      8     solver iterations (u64)
//! 58      8     final residual sup-norm (f64)
//! 66      8*n   f values, row-major (ring-major, n = n_rho * n_t)
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::path::Path;

use num_complex::Complex64;
use sha2::{Digest, Sha256};

use crate::background::{BackgroundSource, Family, ModuliPoint};
use crate::error::{Error, Result};
use crate::geometry::{DiscreteField, Grid};

const MAGIC: &[u8; 4] = b"KWSN";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 66;
const CHECKSUM_LEN: usize = 32;

/// A persisted solve: where it came from, the grid, and the solution.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub source: BackgroundSource,
    pub n_rho: usize,
    pub n_t: usize,
    pub rho_max: f64,
    pub converged: bool,
    pub iterations: u64,
    pub residual_sup: f64,
    pub f: Vec<f64>,
}

impl Snapshot {
    pub fn grid(&self) -> Result<std::sync::Arc<Grid>> {
        Grid::new(self.n_rho, self.n_t, self.rho_max)
    }

    pub fn field(&self) -> Result<DiscreteField> {
        DiscreteField::new(self.grid()?, self.f.clone())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + 8 * self.f.len() + CHECKSUM_LEN);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        let (tag, e, z0) = match self.source {
            BackgroundSource::Point(ModuliPoint {
                family: Family::DivisorFree,
                energy,
            }) => (0u8, energy, Complex64::new(0.0, 0.0)),
            BackgroundSource::Point(ModuliPoint {
                family: Family::DivisorAt(z0),
                energy,
            }) => (1u8, energy, z0),
            BackgroundSource::UhlenbeckLimit { energy } => (2u8, energy, Complex64::new(0.0, 0.0)),
        };
        buf.push(tag);
        buf.extend_from_slice(&e.to_le_bytes());
        buf.extend_from_slice(&z0.re.to_le_bytes());
        buf.extend_from_slice(&z0.im.to_le_bytes());
        buf.extend_from_slice(&(self.n_rho as u32).to_le_bytes());
        buf.extend_from_slice(&(self.n_t as u32).to_le_bytes());
        buf.extend_from_slice(&self.rho_max.to_le_bytes());
        buf.push(self.converged as u8);
        buf.extend_from_slice(&self.iterations.to_le_bytes());
        buf.extend_from_slice(&self.residual_sup.to_le_bytes());
        for v in &self.f {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let fail = |msg: &str| Error::Snapshot(msg.to_string());
        if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
            return Err(fail("file truncated: shorter than header plus checksum"));
        }
        if &bytes[0..4] != MAGIC {
            return Err(fail("bad magic bytes: not a snapshot file"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Snapshot(format!(
                "unsupported format version {version} (this build reads version {VERSION})"
            )));
        }
        let body_len = bytes.len() - CHECKSUM_LEN;
        let digest = Sha256::digest(&bytes[..body_len]);
        if digest.as_slice() != &bytes[body_len..] {
            return Err(fail("checksum mismatch: snapshot is corrupted"));
        }
        let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let tag = bytes[8];
        let energy = f64_at(9);
        let z0 = Complex64::new(f64_at(17), f64_at(25));
        let source = match tag {
            0 => BackgroundSource::Point(ModuliPoint::divisor_free(energy)),
            1 => BackgroundSource::Point(ModuliPoint::divisor_at(z0, energy)),
            2 => BackgroundSource::UhlenbeckLimit { energy },
            other => return Err(Error::Snapshot(format!("unknown family tag {other}"))),
        };
        let n_rho = u32::from_le_bytes(bytes[33..37].try_into().unwrap()) as usize;
        let n_t = u32::from_le_bytes(bytes[37..41].try_into().unwrap()) as usize;
        let rho_max = f64_at(41);
        let converged = match bytes[49] {
            0 => false,
            1 => true,
            other => return Err(Error::Snapshot(format!("bad converged flag {other}"))),
        };
        let iterations = u64::from_le_bytes(bytes[50..58].try_into().unwrap());
        let residual_sup = f64_at(58);
        let n = n_rho
            .checked_mul(n_t)
            .ok_or_else(|| fail("grid dimensions overflow"))?;
        if body_len != HEADER_LEN + 8 * n {
            return Err(Error::Snapshot(format!(
                "file truncated: expected {} data bytes for a {n_rho}x{n_t} grid, found {}",
                8 * n,
                body_len - HEADER_LEN
            )));
        }
        let f = (0..n).map(|k| f64_at(HEADER_LEN + 8 * k)).collect();
        Ok(Self {
            source,
            n_rho,
            n_t,
            rho_max,
            converged,
            iterations,
            residual_sup,
            f,
        })
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<()> {
    std::fs::write(path, snap.encode())?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path)?;
    Snapshot::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        Snapshot {
            source: BackgroundSource::Point(ModuliPoint::divisor_at(
                Complex64::new(2.0, -1.0),
                1.25,
            )),
            n_rho: 16,
            n_t: 8,
            rho_max: 40.0,
            converged: true,
            iterations: 7,
            residual_sup: 3.2e-11,
            f: (0..128).map(|k| (k as f64).sin()).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let snap = sample();
        let bytes = snap.encode();
        let back = Snapshot::decode(&bytes).unwrap();
        assert_eq!(back.f, snap.f);
        assert_eq!(back.source, snap.source);
        assert_eq!(back.n_rho, 16);
        assert_eq!(back.n_t, 8);
        assert_eq!(back.rho_max, 40.0);
        assert!(back.converged);
        assert_eq!(back.iterations, 7);
        assert_eq!(back.residual_sup, 3.2e-11);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn truncation_detected() {
        let bytes = sample().encode();
        let err = Snapshot::decode(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(err.to_string().contains("checksum") || err.to_string().contains("truncat"));
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode();
        bytes[100] ^= 0x40;
        let err = Snapshot::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_bump_rejected() {
        let mut bytes = sample().encode();
        bytes[4] = 2;
        // refresh the checksum so only the version differs
        let body = bytes.len() - CHECKSUM_LEN;
        let digest = Sha256::digest(&bytes[..body]);
        bytes[body..].copy_from_slice(&digest);
        let err = Snapshot::decode(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(Snapshot::decode(&bytes).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("solve.kwsn");
        let snap = sample();
        write_snapshot(&path, &snap).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.f, snap.f);
    }
}

//! Binary snapshots of spectral fields.
//!
//! Field layout: `b"ZYF1"`, version `u16`, cutoff `u32`, hermitian `u8`, then every
//! coefficient in lexicographic order as little-endian `f64` pairs `(re, im)`.
//!
//! State layout: `b"ZYS1"`, version `u16`, gamma `f64`, a 32-byte run digest, then the fields
//! `u`, `w`, `v`.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::error::{Result, ZyError};
use crate::random_fields::State;
use crate::spectral::{Disk, SpectralField};

pub const FIELD_MAGIC: &[u8; 4] = b"ZYF1";
pub const FIELD_VERSION: u16 = 1;
pub const STATE_MAGIC: &[u8; 4] = b"ZYS1";

pub fn write_field<W: Write>(out: &mut W, f: &SpectralField) -> Result<()> {
    out.write_all(FIELD_MAGIC)?;
    out.write_all(&FIELD_VERSION.to_le_bytes())?;
    out.write_all(&f.cutoff().to_le_bytes())?;
    out.write_all(&[f.hermitian() as u8])?;
    let mut buf = Vec::with_capacity(16 * f.coeffs().len());
    for c in f.coeffs() {
        buf.extend_from_slice(&c.re.to_le_bytes());
        buf.extend_from_slice(&c.im.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn field_bytes(f: &SpectralField) -> Vec<u8> {
    let mut v = Vec::new();
    write_field(&mut v, f).expect("writing to memory");
    v
}

pub fn read_exact<R: Read, const K: usize>(inp: &mut R) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    inp.read_exact(&mut b).map_err(|e| ZyError::Format(format!("truncated input: {e}")))?;
    Ok(b)
}

pub fn read_field<R: Read>(inp: &mut R) -> Result<SpectralField> {
    let magic: [u8; 4] = read_exact(inp)?;
    if &magic != FIELD_MAGIC {
        return Err(ZyError::Format("missing ZYF1 magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(inp)?);
    if version != FIELD_VERSION {
        return Err(ZyError::Format(format!("unsupported field version {version}")));
    }
    let cutoff = u32::from_le_bytes(read_exact(inp)?);
    if cutoff > 1 << 14 {
        return Err(ZyError::Format(format!("implausible cutoff {cutoff}")));
    }
    let herm = match read_exact::<_, 1>(inp)?[0] {
        0 => false,
        1 => true,
        b => return Err(ZyError::Format(format!("bad hermitian flag {b}"))),
    };
    let len = Disk::get(cutoff).len();
    let mut raw = vec![0u8; 16 * len];
    inp.read_exact(&mut raw).map_err(|e| ZyError::Format(format!("truncated coefficients: {e}")))?;
    let coeffs = raw
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    SpectralField::from_coeffs(cutoff, herm, coeffs)
}

pub fn write_state<W: Write>(out: &mut W, s: &State, digest: &[u8; 32]) -> Result<()> {
    out.write_all(STATE_MAGIC)?;
    out.write_all(&FIELD_VERSION.to_le_bytes())?;
    out.write_all(&s.gamma.to_le_bytes())?;
    out.write_all(digest)?;
    write_field(out, &s.u)?;
    write_field(out, &s.w)?;
    write_field(out, &s.v)
}

/// Reads a state and the digest stored with it.
pub fn read_state<R: Read>(inp: &mut R) -> Result<(State, [u8; 32])> {
    if &read_exact::<_, 4>(inp)? != STATE_MAGIC {
        return Err(ZyError::Format("missing ZYS1 magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(inp)?);
    if version != FIELD_VERSION {
        return Err(ZyError::Format(format!("unsupported state version {version}")));
    }
    let gamma = f64::from_le_bytes(read_exact(inp)?);
    let digest = read_exact(inp)?;
    let (u, w, v) = (read_field(inp)?, read_field(inp)?, read_field(inp)?);
    let state = State::new(u, w, v, gamma).map_err(|e| ZyError::Format(e.to_string()))?;
    Ok((state, digest))
}

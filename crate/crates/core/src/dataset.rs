//! Dataset files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! magic   12 bytes  "QDISCORDDSET"
//! version u32       1
//! count   u64
//! record  count x { 16 x f64 C_ij (row-major), u8 label, f64 discord (NaN = not computed) }
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::codec::{put_f64s, ByteReader};
use crate::error::{Error, Result};
use crate::states::{Label, LabeledSample, PauliCoefficients};

pub const MAGIC: &[u8; 12] = b"QDISCORDDSET";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_LEN: usize = 16 * 8 + 1 + 8;

/// Slack allowed on `|C_ij| <= 1` and `C_00 = 1` when decoding.
const COEFF_SLACK: f64 = 1e-9;

pub fn encode(samples: &[LabeledSample]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 + samples.len() * RECORD_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for s in samples {
        put_f64s(&mut out, &s.coeffs.flat());
        out.push(s.label.as_u8());
        out.extend_from_slice(&s.discord.unwrap_or(f64::NAN).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Vec<LabeledSample>> {
    let mut r = ByteReader::new(bytes, "dataset");
    if r.array::<12>()? != *MAGIC {
        return Err(r.error("bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported version {version}")));
    }
    let count = r.u64()?;
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(RECORD_LEN))
        .ok_or_else(|| r.error("record count overflows"))?;
    if expected != r.remaining() {
        return Err(r.error(format!(
            "{count} records need {expected} bytes, found {}",
            r.remaining()
        )));
    }
    let mut samples = Vec::with_capacity(count as usize);
    for index in 0..count {
        let flat: [f64; 16] = r.f64_vec(16)?.try_into().unwrap();
        if flat.iter().any(|c| !c.is_finite() || c.abs() > 1.0 + COEFF_SLACK) {
            return Err(r.error(format!("record {index}: coefficient out of range")));
        }
        if (flat[0] - 1.0).abs() > COEFF_SLACK {
            return Err(r.error(format!("record {index}: C_00 = {}", flat[0])));
        }
        let label = Label::from_u8(r.u8()?).ok_or_else(|| r.error(format!("record {index}: bad label")))?;
        let discord = r.f64()?;
        let discord = if discord.is_nan() {
            None
        } else if discord.is_finite() {
            Some(discord)
        } else {
            return Err(r.error(format!("record {index}: infinite discord value")));
        };
        samples.push(LabeledSample {
            coeffs: PauliCoefficients::from_flat(flat),
            label,
            discord,
        });
    }
    r.finish()?;
    Ok(samples)
}

pub fn write(path: impl AsRef<Path>, samples: &[LabeledSample]) -> Result<()> {
    fs::write(path, encode(samples))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Vec<LabeledSample>> {
    decode(&fs::read(path)?)
}

/// Inspection export with header `c00..c33,label,discord`; a missing discord is written as `NaN`.
pub fn write_csv<W: Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..16).map(|k| format!("c{}{}", k / 4, k % 4)).collect();
    header.push("label".into());
    header.push("discord".into());
    w.write_record(&header)?;
    for s in samples {
        let mut row: Vec<String> = s.coeffs.flat().iter().map(|v| v.to_string()).collect();
        row.push(s.label.as_u8().to_string());
        row.push(s.discord.unwrap_or(f64::NAN).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(Error::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::generate_dataset;

    #[test]
    fn binary_round_trip() {
        let mut ds = generate_dataset(20, 0.5, 3, false).unwrap();
        ds[3].discord = Some(0.25);
        let bytes = encode(&ds);
        assert_eq!(bytes.len(), HEADER_LEN + 8 + 20 * RECORD_LEN);
        assert_eq!(&bytes[..12], MAGIC);
        assert_eq!(decode(&bytes).unwrap(), ds);
    }

    #[test]
    fn decode_rejects_corruption() {
        let ds = generate_dataset(4, 0.5, 3, false).unwrap();
        let bytes = encode(&ds);
        assert!(decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[12] = 9;
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[HEADER_LEN + 8 + 128] = 7;
        assert!(decode(&bad).is_err());
        let mut bad = bytes.clone();
        bad[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode(&bad).is_err());
        let mut bad = bytes;
        bad[HEADER_LEN + 8..HEADER_LEN + 16].copy_from_slice(&2.0f64.to_le_bytes());
        assert!(decode(&bad).is_err());
    }

    #[test]
    fn csv_export_layout() {
        let ds = generate_dataset(2, 0.5, 1, false).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("c00,c01,c02,c03,c10"));
        assert!(header.ends_with("c33,label,discord"));
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,"));
        assert!(row.ends_with(",NaN"));
    }
}

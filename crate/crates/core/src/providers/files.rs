//! Binary interchange for descriptor fields and mask lists produced offline.
//!
//! Descriptor field (`.fand`):
//!
//! ```text
//! "FAND" 0x01 | h: u32le | w: u32le | d: u32le | h*w*d f32le, pixel-major
//! ```
//!
//! Mask list (`.fanm`):
//!
//! ```text
//! "FANM" 0x01 | n: u32le | n x (h: u32le | w: u32le | h*w bytes in {0,1})
//! ```

use std::io::Write;
use std::path::Path;

use crate::error::{FanError, Result};
use crate::types::{DescriptorField, Mask};

pub const FIELD_MAGIC: &[u8; 4] = b"FAND";
pub const MASKS_MAGIC: &[u8; 4] = b"FANM";
pub const FORMAT_VERSION: u8 = 0x01;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn err(&self, detail: impl Into<String>) -> FanError {
        FanError::Format {
            offset: self.pos as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated {what}: need {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            self.pos -= 4;
            return Err(self.err(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.take(1, "version")?[0];
        if version != FORMAT_VERSION {
            self.pos -= 1;
            return Err(self.err(format!("unsupported version {version:#04x}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.err(format!(
                "{} trailing bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode_descriptor_field(field: &DescriptorField) -> Vec<u8> {
    let mut out = Vec::with_capacity(17 + field.data().len() * 4);
    out.extend_from_slice(FIELD_MAGIC);
    out.push(FORMAT_VERSION);
    for v in [field.height(), field.width(), field.dim()] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_descriptor_field(bytes: &[u8]) -> Result<DescriptorField> {
    let mut r = Reader::new(bytes);
    r.header(FIELD_MAGIC)?;
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let d = r.u32("dim")? as usize;
    if h == 0 || w == 0 || d == 0 {
        return Err(FanError::Format {
            offset: 5,
            detail: format!("zero dimension in header {h}x{w}x{d}"),
        });
    }
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .ok_or_else(|| r.err("header shape overflows"))?;
    let byte_len = count.checked_mul(4).ok_or_else(|| r.err("header shape overflows"))?;
    let payload_start = r.pos;
    let payload = r.take(byte_len, &format!("payload of {count} floats"))?;
    let mut data = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(FanError::Format {
                offset: (payload_start + i * 4) as u64,
                detail: format!("non-finite value {v} at element {i}"),
            });
        }
        data.push(v);
    }
    r.finish()?;
    DescriptorField::new(h, w, d, data)
}

pub fn write_descriptor_field(path: impl AsRef<Path>, field: &DescriptorField) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&encode_descriptor_field(field))?;
    f.flush()?;
    Ok(())
}

pub fn load_descriptor_field(path: impl AsRef<Path>) -> Result<DescriptorField> {
    decode_descriptor_field(&std::fs::read(path)?)
}

pub fn encode_masks(masks: &[Mask]) -> Vec<u8> {
    let body: usize = masks.iter().map(|m| 8 + m.values().len()).sum();
    let mut out = Vec::with_capacity(9 + body);
    out.extend_from_slice(MASKS_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(masks.len() as u32).to_le_bytes());
    for m in masks {
        out.extend_from_slice(&(m.height() as u32).to_le_bytes());
        out.extend_from_slice(&(m.width() as u32).to_le_bytes());
        out.extend_from_slice(m.values());
    }
    out
}

pub fn decode_masks(bytes: &[u8]) -> Result<Vec<Mask>> {
    let mut r = Reader::new(bytes);
    r.header(MASKS_MAGIC)?;
    let n = r.u32("mask count")? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for k in 0..n {
        let h = r.u32("mask height")? as usize;
        let w = r.u32("mask width")? as usize;
        let len = h.checked_mul(w).ok_or_else(|| r.err("mask shape overflows"))?;
        let start = r.pos;
        let values = r.take(len, &format!("mask {k} payload"))?;
        if let Some(i) = values.iter().position(|&v| v > 1) {
            return Err(FanError::Format {
                offset: (start + i) as u64,
                detail: format!("mask {k} value {} is not 0 or 1", values[i]),
            });
        }
        out.push(Mask::from_values(h, w, values.to_vec())?);
    }
    r.finish()?;
    Ok(out)
}

pub fn write_masks(path: impl AsRef<Path>, masks: &[Mask]) -> Result<()> {
    std::fs::write(path, encode_masks(masks))?;
    Ok(())
}

pub fn load_masks(path: impl AsRef<Path>) -> Result<Vec<Mask>> {
    decode_masks(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> DescriptorField {
        let data: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
        DescriptorField::new(2, 2, 3, data).unwrap()
    }

    #[test]
    fn field_round_trip_via_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.fand");
        let f = sample_field();
        write_descriptor_field(&path, &f).unwrap();
        assert_eq!(load_descriptor_field(&path).unwrap(), f);
    }

    #[test]
    fn field_layout_is_pixel_major() {
        let bytes = encode_descriptor_field(&sample_field());
        assert_eq!(&bytes[..5], b"FAND\x01");
        assert_eq!(&bytes[5..9], &2u32.to_le_bytes());
        assert_eq!(&bytes[13..17], &3u32.to_le_bytes());
        // third component of pixel (0,0) is element 2
        assert_eq!(&bytes[17 + 8..17 + 12], &(-1.0f32).to_le_bytes());
        assert_eq!(bytes.len(), 17 + 48);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_descriptor_field(&sample_field());
        bytes[..4].copy_from_slice(b"XXXX");
        match decode_descriptor_field(&bytes) {
            Err(FanError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_descriptor_field(&sample_field());
        let short = &bytes[..bytes.len() - 4];
        match decode_descriptor_field(short) {
            Err(FanError::Format { offset, detail }) => {
                assert_eq!(offset, 17);
                assert!(detail.contains("truncated"), "{detail}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_reports_offset() {
        let mut bytes = encode_descriptor_field(&sample_field());
        bytes[17 + 20..17 + 24].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_descriptor_field(&bytes) {
            Err(FanError::Format { offset, .. }) => assert_eq!(offset, 37),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn masks_round_trip_and_empty() {
        let masks = vec![
            Mask::from_rect(4, 5, 1, 1, 2, 2),
            Mask::full(3, 3),
            Mask::from_rect(4, 5, 0, 3, 5, 1),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fanm");
        write_masks(&path, &masks).unwrap();
        assert_eq!(load_masks(&path).unwrap(), masks);
        assert!(decode_masks(&encode_masks(&[])).unwrap().is_empty());
    }

    #[test]
    fn mask_value_two_rejected() {
        let mut bytes = encode_masks(&[Mask::full(2, 2)]);
        let last = bytes.len() - 1;
        bytes[last] = 2;
        match decode_masks(&bytes) {
            Err(FanError::Format { offset, .. }) => assert_eq!(offset as usize, last),
            other => panic!("{other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn field_bytes_round_trip(h in 1usize..6, w in 1usize..6, d in 1usize..5, seed in any::<u64>()) {
                let data: Vec<f32> = (0..h * w * d)
                    .map(|i| f32::from_bits((seed.wrapping_mul(i as u64 + 1) >> 7) as u32 & 0x3fff_ffff))
                    .collect();
                let f = DescriptorField::new(h, w, d, data).unwrap();
                let bytes = encode_descriptor_field(&f);
                let back = decode_descriptor_field(&bytes).unwrap();
                prop_assert_eq!(encode_descriptor_field(&back), bytes);
            }

            #[test]
            fn masks_round_trip(shapes in proptest::collection::vec((1usize..6, 1usize..6, any::<u64>()), 0..5)) {
                let masks: Vec<Mask> = shapes
                    .iter()
                    .map(|&(h, w, bits)| Mask::from_fn(h, w, |x, y| bits >> ((y * w + x) % 64) & 1 == 1))
                    .collect();
                prop_assert_eq!(decode_masks(&encode_masks(&masks)).unwrap(), masks);
            }
        }
    }
}

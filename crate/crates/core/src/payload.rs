//! The multipurpose mark: authentication hash, external-file locator,
//! feature vector and patient code, with a fixed binary framing.
//!
//! Wire layout (all integers big-endian):
//!
//! ```text
//! "DEW1" | version u8 = 1 | hash [32] | locator_len u16 | locator
//!        | code_len u8 | patient_code | 10 x i32 Q16.16 | crc32
//! ```
//!
//! The CRC is IEEE CRC-32 over every preceding byte.

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::FeatureVector;
use crate::image::GrayImage;

pub const MAGIC: [u8; 4] = *b"DEW1";
pub const VERSION: u8 = 1;
pub const MAX_LOCATOR_LEN: usize = 1024;
pub const MAX_PATIENT_CODE_LEN: usize = 64;
/// Serialized size with an empty locator and patient code.
pub const BASE_LEN: usize = 4 + 1 + 32 + 2 + 1 + 4 * FeatureVector::LEN + 4;

const Q16_ONE: f64 = 65536.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PayloadError {
    #[error("{field} is {len} bytes, limit is {max}")]
    FieldTooLong {
        field: &'static str,
        len: usize,
        max: usize,
    },
    #[error("feature {index} is not finite")]
    NonFiniteFeature { index: usize },
    #[error("feature {index} = {value} does not fit Q16.16")]
    FeatureOutOfRange { index: usize, value: String },
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported payload version {0}")]
    BadVersion(u8),
    #[error("payload checksum mismatch")]
    CrcMismatch,
    #[error("payload truncated")]
    Truncated,
    #[error("{field} is not valid UTF-8")]
    InvalidUtf8 { field: &'static str },
}

pub type ImageHash = [u8; 32];

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    /// SHA-256 of the original (pre-watermark) image, see [`compute_image_hash`].
    pub hash: ImageHash,
    /// Path of the external image file this record points to.
    pub locator: String,
    pub features: FeatureVector,
    pub patient_code: String,
}

/// SHA-256 over `width (u32 BE) | height (u32 BE) | row-major pixels`.
pub fn compute_image_hash(img: &GrayImage) -> ImageHash {
    let mut hasher = Sha256::new();
    hasher.update((img.width() as u32).to_be_bytes());
    hasher.update((img.height() as u32).to_be_bytes());
    hasher.update(img.pixels());
    hasher.finalize().into()
}

pub fn verify(p: &Payload, restored: &GrayImage) -> bool {
    compute_image_hash(restored) == p.hash
}

pub fn quantize_feature(index: usize, value: f64) -> Result<i32, PayloadError> {
    if !value.is_finite() {
        return Err(PayloadError::NonFiniteFeature { index });
    }
    let q = (value * Q16_ONE).round();
    if q < f64::from(i32::MIN) || q > f64::from(i32::MAX) {
        return Err(PayloadError::FeatureOutOfRange {
            index,
            value: value.to_string(),
        });
    }
    Ok(q as i32)
}

pub fn dequantize_feature(q: i32) -> f64 {
    f64::from(q) / Q16_ONE
}

/// Rounds every component to the Q16.16 grid, as a parsed payload would carry it.
pub fn quantize_features(f: &FeatureVector) -> Result<FeatureVector, PayloadError> {
    let mut out = [0.0; FeatureVector::LEN];
    for (i, (o, v)) in out.iter_mut().zip(f.to_array()).enumerate() {
        *o = dequantize_feature(quantize_feature(i, v)?);
    }
    Ok(FeatureVector::from_array(out))
}

impl Payload {
    pub fn new(
        image: &GrayImage,
        locator: impl Into<String>,
        features: FeatureVector,
        patient_code: impl Into<String>,
    ) -> Self {
        Self {
            hash: compute_image_hash(image),
            locator: locator.into(),
            features,
            patient_code: patient_code.into(),
        }
    }

    pub fn serialized_len(&self) -> usize {
        BASE_LEN + self.locator.len() + self.patient_code.len()
    }

    pub fn serialized_bits(&self) -> usize {
        8 * self.serialized_len()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, PayloadError> {
        if self.locator.len() > MAX_LOCATOR_LEN {
            return Err(PayloadError::FieldTooLong {
                field: "locator",
                len: self.locator.len(),
                max: MAX_LOCATOR_LEN,
            });
        }
        if self.patient_code.len() > MAX_PATIENT_CODE_LEN {
            return Err(PayloadError::FieldTooLong {
                field: "patient_code",
                len: self.patient_code.len(),
                max: MAX_PATIENT_CODE_LEN,
            });
        }
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.hash);
        out.extend_from_slice(&(self.locator.len() as u16).to_be_bytes());
        out.extend_from_slice(self.locator.as_bytes());
        out.push(self.patient_code.len() as u8);
        out.extend_from_slice(self.patient_code.as_bytes());
        for (i, v) in self.features.to_array().into_iter().enumerate() {
            out.extend_from_slice(&quantize_feature(i, v)?.to_be_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_be_bytes());
        Ok(out)
    }

    /// Serialized bytes unpacked MSB-first.
    pub fn serialize(&self) -> Result<Vec<bool>, PayloadError> {
        Ok(bytes_to_bits(&self.to_bytes()?))
    }

    /// Parses a payload from the front of `bytes`; returns it with the number
    /// of bytes it occupied.
    pub fn parse_prefix(bytes: &[u8]) -> Result<(Self, usize), PayloadError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(PayloadError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != VERSION {
            return Err(PayloadError::BadVersion(version));
        }
        let hash: ImageHash = r.take(32)?.try_into().unwrap();
        let loc_len = u16::from_be_bytes(r.take(2)?.try_into().unwrap()) as usize;
        if loc_len > MAX_LOCATOR_LEN {
            return Err(PayloadError::FieldTooLong {
                field: "locator",
                len: loc_len,
                max: MAX_LOCATOR_LEN,
            });
        }
        let locator = r.take(loc_len)?;
        let code_len = r.take(1)?[0] as usize;
        if code_len > MAX_PATIENT_CODE_LEN {
            return Err(PayloadError::FieldTooLong {
                field: "patient_code",
                len: code_len,
                max: MAX_PATIENT_CODE_LEN,
            });
        }
        let code = r.take(code_len)?;
        let mut feats = [0.0; FeatureVector::LEN];
        for f in feats.iter_mut() {
            *f = dequantize_feature(i32::from_be_bytes(r.take(4)?.try_into().unwrap()));
        }
        let body_end = r.pos;
        let crc = u32::from_be_bytes(r.take(4)?.try_into().unwrap());
        if crc32fast::hash(&bytes[..body_end]) != crc {
            return Err(PayloadError::CrcMismatch);
        }
        let locator = String::from_utf8(locator.to_vec())
            .map_err(|_| PayloadError::InvalidUtf8 { field: "locator" })?;
        let patient_code =
            String::from_utf8(code.to_vec()).map_err(|_| PayloadError::InvalidUtf8 {
                field: "patient_code",
            })?;
        Ok((
            Payload {
                hash,
                locator,
                features: FeatureVector::from_array(feats),
                patient_code,
            },
            r.pos,
        ))
    }

    pub fn parse_bytes(bytes: &[u8]) -> Result<Self, PayloadError> {
        let (p, used) = Self::parse_prefix(bytes)?;
        if used != bytes.len() {
            return Err(PayloadError::Truncated);
        }
        Ok(p)
    }

    /// Inverse of [`Payload::serialize`]. Trailing bits past the CRC are ignored.
    pub fn parse(bits: &[bool]) -> Result<Self, PayloadError> {
        Self::parse_prefix(&bits_to_bytes(bits)).map(|(p, _)| p)
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash)
    }

    /// `key: value` lines; features with six fractional digits.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "hash: {}\nlocator: {}\npatient_code: {}\n",
            self.hash_hex(),
            self.locator,
            self.patient_code
        );
        for (name, v) in FeatureVector::NAMES.iter().zip(self.features.to_array()) {
            s.push_str(&format!("{name}: {v:.6}\n"));
        }
        s
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PayloadError> {
        let end = self.pos.checked_add(n).ok_or(PayloadError::Truncated)?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(PayloadError::Truncated)?;
        self.pos = end;
        Ok(s)
    }
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| b >> i & 1 == 1))
        .collect()
}

/// MSB-first packing; a final partial byte is zero-padded.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| {
            c.iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | (u8::from(b) << (7 - i)))
        })
        .collect()
}

//! Whole-image embedding and blind extraction.
//!
//! Pixels are paired horizontally, `(p[2k], p[2k + 1])` within each row; on
//! odd-width images the last pixel of every row is never touched. Every
//! expandable pair is expanded. The embedded bitstream is
//!
//! ```text
//! serialized location map | original LSBs of changeable, non-expanded pairs | data
//! ```
//!
//! written one bit per changeable pair in raster order. Slots past the end of
//! the data carry 0 on expanded pairs and the original LSB elsewhere, so the
//! watermarked image is a deterministic function of `(image, data)`.
//!
//! Changeability survives both expansion and LSB replacement, so the decoder
//! recovers the slot order from the watermarked image alone.

use std::fmt;

use thiserror::Error;

use crate::image::GrayImage;
use crate::location_map::{build_map, compress, decompress, CompressedMap, MapError};
use crate::payload::{bits_to_bytes, bytes_to_bits, verify, Payload, PayloadError};
use crate::pixel_codec::{
    classify_pair, expand_embed_bit, extract_bit, forward_transform, inverse_transform,
    lsb_replace_bit, AvgDiff, CodecError, PairClass, PixelPair,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WatermarkError {
    #[error("insufficient capacity: need {needed} bits, {available} available")]
    InsufficientCapacity { needed: usize, available: usize },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

impl WatermarkError {
    /// Errors that indicate a damaged or foreign watermark rather than a
    /// caller mistake.
    pub fn is_tamper_signal(&self) -> bool {
        matches!(
            self,
            WatermarkError::Map(_) | WatermarkError::Payload(_) | WatermarkError::Codec(_)
        )
    }
}

/// Pixel pairs of an image with their transforms and classes, in raster order.
#[derive(Debug, Clone)]
pub struct PairScan {
    /// Index into the pixel buffer of each pair's left pixel.
    pub offsets: Vec<usize>,
    pub pairs: Vec<AvgDiff>,
    pub classes: Vec<PairClass>,
}

impl PairScan {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn pair_scan(img: &GrayImage) -> PairScan {
    let per_row = img.width() / 2;
    let n = per_row * img.height();
    let mut scan = PairScan {
        offsets: Vec::with_capacity(n),
        pairs: Vec::with_capacity(n),
        classes: Vec::with_capacity(n),
    };
    let px = img.pixels();
    for y in 0..img.height() {
        let row = y * img.width();
        for k in 0..per_row {
            let off = row + 2 * k;
            let a = forward_transform(PixelPair::new(px[off], px[off + 1]));
            scan.offsets.push(off);
            scan.pairs.push(a);
            scan.classes.push(classify_pair(a));
        }
    }
    scan
}

/// Slot and overhead accounting for an image under the expand-everything
/// policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capacity {
    pub pairs: usize,
    pub expandable: usize,
    /// Changeable but not expandable.
    pub changeable: usize,
    pub unchangeable: usize,
    /// One writable bit per expandable or changeable pair.
    pub slots: usize,
    pub map_bits: usize,
    pub saved_lsb_bits: usize,
}

impl Capacity {
    pub fn overhead_bits(&self) -> usize {
        self.map_bits + self.saved_lsb_bits
    }

    /// Data bits that fit after the overhead, 0 when the overhead alone
    /// does not fit.
    pub fn usable_bits(&self) -> usize {
        self.slots.saturating_sub(self.overhead_bits())
    }
}

fn plan(scan: &PairScan) -> Result<(Capacity, CompressedMap), WatermarkError> {
    let selected: Vec<bool> = scan.classes.iter().map(|c| c.is_expandable()).collect();
    let map = build_map(&scan.classes, &selected)?;
    let compressed = compress(&map);
    let expandable = map.count_ones();
    let changeable = scan
        .classes
        .iter()
        .filter(|&&c| c == PairClass::Changeable)
        .count();
    let cap = Capacity {
        pairs: scan.len(),
        expandable,
        changeable,
        unchangeable: scan.len() - expandable - changeable,
        slots: expandable + changeable,
        map_bits: 8 * compressed.serialized_len(),
        saved_lsb_bits: changeable,
    };
    Ok((cap, compressed))
}

pub fn capacity(img: &GrayImage) -> Capacity {
    plan(&pair_scan(img))
        .expect("expand-all selection is always consistent with classes")
        .0
}

/// Peak signal-to-noise ratio in dB; `Infinite` for identical images.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Finite(f64),
    Infinite,
}

impl Psnr {
    pub fn db(self) -> f64 {
        match self {
            Psnr::Finite(v) => v,
            Psnr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Psnr::Infinite)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Finite(v) => write!(f, "{v:.2}"),
            Psnr::Infinite => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, WatermarkError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(WatermarkError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let sse: u64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| {
            let d = i64::from(x) - i64::from(y);
            (d * d) as u64
        })
        .sum();
    Ok(sse as f64 / a.len() as f64)
}

pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<Psnr, WatermarkError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(Psnr::Infinite);
    }
    Ok(Psnr::Finite(10.0 * (255.0f64 * 255.0 / m).log10()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbedReport {
    /// Usable data capacity in bits.
    pub capacity_bits: usize,
    /// Data bits written.
    pub used_bits: usize,
    pub expanded_pairs: usize,
    /// Changeable pairs carrying a replaced LSB (not expanded).
    pub changeable_pairs: usize,
    pub overhead_bits: usize,
    pub psnr_db: Psnr,
}

fn write_pair(out: &mut [u8], offset: usize, a: AvgDiff) -> Result<(), CodecError> {
    let p = inverse_transform(a)?;
    out[offset] = p.x;
    out[offset + 1] = p.y;
    Ok(())
}

/// Embeds raw data bits. See the module docs for the stream layout.
pub fn embed_bits(
    img: &GrayImage,
    data: &[bool],
) -> Result<(GrayImage, EmbedReport), WatermarkError> {
    let scan = pair_scan(img);
    let (cap, map) = plan(&scan)?;
    let available = cap.usable_bits();
    if cap.overhead_bits() > cap.slots || data.len() > available {
        return Err(WatermarkError::InsufficientCapacity {
            needed: data.len(),
            available,
        });
    }

    let mut stream = bytes_to_bits(&map.to_bytes());
    stream.extend(
        scan.pairs
            .iter()
            .zip(&scan.classes)
            .filter(|(_, &c)| c == PairClass::Changeable)
            .map(|(&a, _)| extract_bit(a)),
    );
    stream.extend_from_slice(data);

    let mut out = img.clone();
    let px = out.pixels_mut();
    let mut slot = 0usize;
    for ((&a, &class), &off) in scan.pairs.iter().zip(&scan.classes).zip(&scan.offsets) {
        let modified = match class {
            PairClass::Expandable => {
                let bit = stream.get(slot).copied().unwrap_or(false);
                expand_embed_bit(a, bit)?
            }
            PairClass::Changeable => {
                let bit = stream.get(slot).copied().unwrap_or_else(|| extract_bit(a));
                lsb_replace_bit(a, bit)?
            }
            PairClass::Unchangeable => continue,
        };
        slot += 1;
        write_pair(px, off, modified)?;
    }

    let report = EmbedReport {
        capacity_bits: available,
        used_bits: data.len(),
        expanded_pairs: cap.expandable,
        changeable_pairs: cap.changeable,
        overhead_bits: cap.overhead_bits(),
        psnr_db: psnr(img, &out)?,
    };
    Ok((out, report))
}

pub fn embed(
    img: &GrayImage,
    payload: &Payload,
) -> Result<(GrayImage, EmbedReport), WatermarkError> {
    embed_bits(img, &payload.serialize()?)
}

/// Restores the original image and returns every slot bit after the
/// overhead: the embedded data followed by filler.
pub fn extract_bits(wimg: &GrayImage) -> Result<(GrayImage, Vec<bool>), WatermarkError> {
    let scan = pair_scan(wimg);
    let slot_bits: Vec<bool> = scan
        .pairs
        .iter()
        .zip(&scan.classes)
        .filter(|(_, c)| c.is_changeable())
        .map(|(&a, _)| extract_bit(a))
        .collect();

    let stream_bytes = bits_to_bytes(&slot_bits);
    let (compressed, map_len) = CompressedMap::read_prefix(&stream_bytes)?;
    let map_bits = 8 * map_len;
    if map_bits > slot_bits.len() {
        return Err(MapError::CorruptMap("map runs past the embedded slots").into());
    }
    let map = decompress(&compressed)?;
    if map.len() != scan.len() {
        return Err(MapError::CorruptMap("map length differs from pair count").into());
    }

    let mut restored = wimg.clone();
    let px = restored.pixels_mut();
    let mut saved = map_bits;
    let saved_count = scan
        .classes
        .iter()
        .enumerate()
        .filter(|&(i, c)| c.is_changeable() && !map.get(i))
        .count();
    let data_start = map_bits + saved_count;
    if data_start > slot_bits.len() {
        return Err(MapError::CorruptMap("saved LSBs run past the embedded slots").into());
    }

    for (i, ((&a, &class), &off)) in scan
        .pairs
        .iter()
        .zip(&scan.classes)
        .zip(&scan.offsets)
        .enumerate()
    {
        let expanded = map.get(i);
        if !class.is_changeable() {
            if expanded {
                return Err(MapError::CorruptMap("expanded pair is not changeable").into());
            }
            continue;
        }
        let original = if expanded {
            AvgDiff::new(a.l, a.h >> 1)
        } else {
            let bit = slot_bits[saved];
            saved += 1;
            AvgDiff::new(a.l, 2 * a.h.div_euclid(2) + i32::from(bit))
        };
        // every expandable pair was expanded, and only those
        if classify_pair(original).is_expandable() != expanded {
            return Err(MapError::CorruptMap("restored pair contradicts location map").into());
        }
        write_pair(px, off, original)?;
    }

    Ok((restored, slot_bits[data_start..].to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub restored: GrayImage,
    pub payload: Payload,
    /// The restored image matches the embedded hash and the watermarked
    /// image is exactly what embedding that payload would produce.
    pub verified: bool,
}

pub fn extract(wimg: &GrayImage) -> Result<Extraction, WatermarkError> {
    let (restored, data) = extract_bits(wimg)?;
    let (payload, _) = Payload::parse_prefix(&bits_to_bytes(&data))?;
    let verified = verify(&payload, &restored)
        && matches!(embed(&restored, &payload), Ok((ref again, _)) if again == wimg);
    Ok(Extraction {
        restored,
        payload,
        verified,
    })
}

/// Extraction outcome with structural failures folded into `verified = false`.
#[derive(Debug, Clone, PartialEq)]
pub enum Authentication {
    Verified(Extraction),
    /// Payload decoded but the image does not match it.
    Mismatch(Extraction),
    /// The watermark could not be decoded at all.
    Undecodable(WatermarkError),
}

impl Authentication {
    pub fn is_verified(&self) -> bool {
        matches!(self, Authentication::Verified(_))
    }
}

pub fn authenticate(wimg: &GrayImage) -> Authentication {
    match extract(wimg) {
        Ok(x) if x.verified => Authentication::Verified(x),
        Ok(x) => Authentication::Mismatch(x),
        Err(e) => Authentication::Undecodable(e),
    }
}

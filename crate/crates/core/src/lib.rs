//! Reversible difference-expansion watermarking for 8-bit grayscale medical
//! images, and a watermark-indexed image vault.
//!
//! Each image carries a payload with a SHA-256 of the original pixels, an
//! external-file locator, a ten-component texture/shape feature vector and a
//! patient code. Extraction restores the original image bit-exactly, so the
//! hash can be checked against it. The [`vault`] keeps watermarked images
//! beside a JSON manifest and can rebuild lost manifest links from the
//! watermarks; [`retrieval`] searches it by patient code or feature
//! distance.
//!
//! ```
//! use medmark::{embed, extract, extract_features, GrayImage, Payload};
//!
//! let img = medmark::synth::smooth_texture(128, 128, 7);
//! let features = extract_features(&img).unwrap();
//! let payload = Payload::new(&img, "/archive/scan-7.pgm", features, "PAT-0007");
//! let (marked, report) = embed(&img, &payload).unwrap();
//! assert!(report.used_bits <= report.capacity_bits);
//!
//! let out = extract(&marked).unwrap();
//! assert!(out.verified);
//! assert_eq!(out.restored, img);
//! assert_eq!(out.payload.patient_code, "PAT-0007");
//! ```

pub mod features;
pub mod image;
pub mod location_map;
pub mod payload;
pub mod pixel_codec;
pub mod retrieval;
pub mod synth;
pub mod vault;
pub mod watermark;

pub use crate::features::{extract_features, FeatureError, FeatureVector};
pub use crate::image::{GrayImage, ImageError};
pub use crate::payload::{compute_image_hash, Payload, PayloadError};
pub use crate::retrieval::{
    precision_recall, search_by_code, search_by_features, ClassLabels, EvalConfig, Normalization,
    PRPoint, QueryResult, RetrievalError, VaultSnapshot,
};
pub use crate::vault::{CodeMap, RecordStatus, Vault, VaultError, VaultManifest, VaultRecord};
pub use crate::watermark::{
    authenticate, capacity, embed, embed_bits, extract, extract_bits, psnr, Authentication,
    Capacity, EmbedReport, Extraction, Psnr, WatermarkError,
};

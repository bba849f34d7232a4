//! Watermarked image vault: a JSON manifest standing in for the database,
//! and loose PGM files standing in for externally stored image objects.
//!
//! Layout:
//!
//! ```text
//! <vault>/manifest.json
//! <vault>/images/<image_file>.pgm
//! ```
//!
//! Every stored image carries its own patient code and locator in the
//! watermark, so a manifest whose links were lost can be rebuilt from the
//! images alone.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{extract_features, FeatureError, FeatureVector};
use crate::image::{GrayImage, ImageError};
use crate::payload::{Payload, PayloadError, MAX_PATIENT_CODE_LEN};
use crate::watermark::{authenticate, embed, Authentication, EmbedReport, WatermarkError};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum VaultError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported manifest version {0}")]
    ManifestVersion(u32),
    #[error("code map: {0}")]
    CodeMap(String),
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error(transparent)]
    Watermark(#[from] WatermarkError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Payload(#[from] PayloadError),
    #[error("unknown patient code {0:?}")]
    UnknownCode(String),
    #[error("vault already initialized at {0}")]
    AlreadyExists(PathBuf),
    #[error("record for {0:?} already exists")]
    DuplicateRecord(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> VaultError + '_ {
    move |source| VaultError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Watermarked,
    LinkBroken,
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaultRecord {
    pub patient_code: String,
    pub locator: String,
    pub image_file: String,
    pub status: RecordStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaultManifest {
    pub version: u32,
    pub records: Vec<VaultRecord>,
    /// Features of each original image keyed by `image_file`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub feature_cache: BTreeMap<String, FeatureVector>,
}

impl Default for VaultManifest {
    fn default() -> Self {
        Self {
            version: MANIFEST_VERSION,
            records: Vec::new(),
            feature_cache: BTreeMap::new(),
        }
    }
}

impl VaultManifest {
    pub fn from_json(text: &str) -> Result<Self, VaultError> {
        let m: VaultManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(VaultError::ManifestVersion(m.version));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    /// Blanks every locator and patient code and marks links broken.
    pub fn strip_links(&mut self) {
        for r in &mut self.records {
            r.locator.clear();
            r.patient_code.clear();
            r.status = RecordStatus::LinkBroken;
        }
    }
}

/// Writes `contents` to a temp file beside `path`, syncs it, then renames
/// over `path`. `before_rename` runs between the two steps.
fn write_atomic(
    path: &Path,
    contents: &[u8],
    before_rename: impl FnOnce(&Path) -> io::Result<()>,
) -> Result<(), VaultError> {
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(contents).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    before_rename(&tmp).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

/// Assignment of patient code and locator to each source image file name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeMap {
    entries: BTreeMap<String, (String, String)>,
}

impl CodeMap {
    pub fn insert(
        &mut self,
        file: impl Into<String>,
        patient_code: impl Into<String>,
        locator: impl Into<String>,
    ) {
        self.entries
            .insert(file.into(), (patient_code.into(), locator.into()));
    }

    pub fn get(&self, file: &str) -> Option<(&str, &str)> {
        self.entries
            .get(file)
            .map(|(c, l)| (c.as_str(), l.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Reads CSV with header `file,patient_code,locator`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, VaultError> {
        #[derive(Deserialize)]
        struct Row {
            file: String,
            patient_code: String,
            locator: String,
        }
        let mut map = CodeMap::default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        for row in rdr.deserialize::<Row>() {
            let row = row.map_err(|e| VaultError::CodeMap(e.to_string()))?;
            if map.entries.contains_key(&row.file) {
                return Err(VaultError::CodeMap(format!(
                    "duplicate entry for {}",
                    row.file
                )));
            }
            map.insert(row.file, row.patient_code, row.locator);
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self, VaultError> {
        Self::from_csv(File::open(path).map_err(io_err(path))?)
    }
}

#[derive(Debug, Default)]
pub struct BatchSummary {
    pub watermarked: Vec<String>,
    /// Images whose payload did not fit.
    pub skipped: Vec<(String, WatermarkError)>,
    pub failed: Vec<(String, VaultError)>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairSummary {
    pub verified: usize,
    /// Records whose locator, patient code or status changed.
    pub changed: usize,
    pub unverified: Vec<String>,
    /// Verified images found in `images/` without a manifest record.
    pub adopted: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct LoadedRecord {
    pub record: VaultRecord,
    pub restored: Option<GrayImage>,
    pub payload: Option<Payload>,
    pub verified: bool,
    /// Why verification failed, when it did.
    pub diagnostic: Option<String>,
}

/// Result of watermarking one original image.
struct Prepared {
    watermarked: GrayImage,
    features: FeatureVector,
    report: EmbedReport,
}

fn prepare(
    original: &GrayImage,
    patient_code: &str,
    locator: &str,
) -> Result<Prepared, VaultError> {
    if patient_code.is_empty() {
        return Err(VaultError::InvalidRecord("empty patient code".into()));
    }
    if patient_code.len() > MAX_PATIENT_CODE_LEN {
        return Err(VaultError::InvalidRecord(format!(
            "patient code longer than {MAX_PATIENT_CODE_LEN} bytes"
        )));
    }
    let features = extract_features(original)?;
    let payload = Payload::new(original, locator, features, patient_code);
    let (watermarked, report) = embed(original, &payload)?;
    Ok(Prepared {
        watermarked,
        features,
        report,
    })
}

fn is_pgm(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn list_pgm(dir: &Path) -> Result<Vec<String>, VaultError> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_file() && is_pgm(&path) {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

#[derive(Debug, Clone)]
pub struct Vault {
    root: PathBuf,
    manifest: VaultManifest,
}

impl Vault {
    pub fn init(root: impl AsRef<Path>) -> Result<Self, VaultError> {
        let root = root.as_ref().to_path_buf();
        let manifest_path = root.join(MANIFEST_FILE);
        if manifest_path.exists() {
            return Err(VaultError::AlreadyExists(root));
        }
        let images = root.join(IMAGES_DIR);
        fs::create_dir_all(&images).map_err(io_err(&images))?;
        let vault = Vault {
            root,
            manifest: VaultManifest::default(),
        };
        vault.save()?;
        Ok(vault)
    }

    pub fn open(root: impl AsRef<Path>) -> Result<Self, VaultError> {
        let root = root.as_ref().to_path_buf();
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(Vault {
            manifest: VaultManifest::from_json(&text)?,
            root,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &VaultManifest {
        &self.manifest
    }

    /// Direct manifest access; call [`Vault::save`] to persist.
    pub fn manifest_mut(&mut self) -> &mut VaultManifest {
        &mut self.manifest
    }

    pub fn records(&self) -> &[VaultRecord] {
        &self.manifest.records
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn image_path(&self, image_file: &str) -> PathBuf {
        self.root.join(IMAGES_DIR).join(image_file)
    }

    pub fn save(&self) -> Result<(), VaultError> {
        self.save_with_hook(|_| Ok(()))
    }

    fn save_with_hook(
        &self,
        before_rename: impl FnOnce(&Path) -> io::Result<()>,
    ) -> Result<(), VaultError> {
        write_atomic(
            &self.manifest_path(),
            self.manifest.to_json().as_bytes(),
            before_rename,
        )
    }

    fn check_new(&self, image_file: &str) -> Result<(), VaultError> {
        if image_file.is_empty() || image_file.contains(['/', '\\']) {
            return Err(VaultError::InvalidRecord(format!(
                "bad image file name {image_file:?}"
            )));
        }
        if self
            .manifest
            .records
            .iter()
            .any(|r| r.image_file == image_file)
        {
            return Err(VaultError::DuplicateRecord(image_file.to_string()));
        }
        Ok(())
    }

    fn store(
        &mut self,
        image_file: &str,
        patient_code: &str,
        locator: &str,
        prepared: &Prepared,
    ) -> Result<(), VaultError> {
        let path = self.image_path(image_file);
        prepared
            .watermarked
            .save(&path)
            .map_err(|source| VaultError::Image {
                path: path.clone(),
                source,
            })?;
        self.manifest.records.push(VaultRecord {
            patient_code: patient_code.to_string(),
            locator: locator.to_string(),
            image_file: image_file.to_string(),
            status: RecordStatus::Watermarked,
        });
        self.manifest
            .feature_cache
            .insert(image_file.to_string(), prepared.features);
        Ok(())
    }

    /// Watermarks one original image into the vault and persists the manifest.
    pub fn add(
        &mut self,
        original: &GrayImage,
        image_file: &str,
        patient_code: &str,
        locator: &str,
    ) -> Result<EmbedReport, VaultError> {
        self.check_new(image_file)?;
        let prepared = prepare(original, patient_code, locator)?;
        self.store(image_file, patient_code, locator, &prepared)?;
        self.save()?;
        Ok(prepared.report)
    }

    /// Offline batch watermarking of every PGM in `src_dir`. Images are
    /// processed in parallel; records are appended in file-name order and
    /// the manifest is written once at the end.
    pub fn watermark_all(
        &mut self,
        src_dir: &Path,
        codes: &CodeMap,
    ) -> Result<BatchSummary, VaultError> {
        let names = list_pgm(src_dir)?;
        type Outcome = Result<(String, String, Prepared), VaultError>;
        let prepared: Vec<(String, Outcome)> = names
            .into_par_iter()
            .map(|name| {
                let result = (|| {
                    let (code, locator) = codes.get(&name).ok_or_else(|| {
                        VaultError::CodeMap(format!("no patient code for {name}"))
                    })?;
                    let path = src_dir.join(&name);
                    let original = GrayImage::load(&path)
                        .map_err(|source| VaultError::Image { path, source })?;
                    let p = prepare(&original, code, locator)?;
                    Ok((code.to_string(), locator.to_string(), p))
                })();
                (name, result)
            })
            .collect();

        let mut summary = BatchSummary::default();
        for (name, result) in prepared {
            let stored = result.and_then(|(code, locator, p)| {
                self.check_new(&name)?;
                self.store(&name, &code, &locator, &p)
            });
            match stored {
                Ok(()) => summary.watermarked.push(name),
                Err(VaultError::Watermark(e @ WatermarkError::InsufficientCapacity { .. })) => {
                    summary.skipped.push((name, e))
                }
                Err(e) => summary.failed.push((name, e)),
            }
        }
        self.save()?;
        Ok(summary)
    }

    fn authenticate_file(&self, image_file: &str) -> Result<Authentication, VaultError> {
        let path = self.image_path(image_file);
        let img = GrayImage::load(&path).map_err(|source| VaultError::Image { path, source })?;
        Ok(authenticate(&img))
    }

    /// Extracts the stored image of the first record with this patient code.
    pub fn load_record(&self, patient_code: &str) -> Result<LoadedRecord, VaultError> {
        let record = self
            .manifest
            .records
            .iter()
            .find(|r| r.patient_code == patient_code)
            .ok_or_else(|| VaultError::UnknownCode(patient_code.to_string()))?;
        Ok(self.load(record))
    }

    pub fn load(&self, record: &VaultRecord) -> LoadedRecord {
        let mut out = LoadedRecord {
            record: record.clone(),
            restored: None,
            payload: None,
            verified: false,
            diagnostic: None,
        };
        match self.authenticate_file(&record.image_file) {
            Ok(Authentication::Verified(x)) => {
                out.verified = true;
                out.restored = Some(x.restored);
                out.payload = Some(x.payload);
            }
            Ok(Authentication::Mismatch(x)) => {
                out.diagnostic = Some("restored image does not match embedded hash".into());
                out.restored = Some(x.restored);
                out.payload = Some(x.payload);
            }
            Ok(Authentication::Undecodable(e)) => out.diagnostic = Some(e.to_string()),
            Err(e) => out.diagnostic = Some(e.to_string()),
        }
        out
    }

    /// Rebuilds locators and patient codes from the watermarks and rewrites
    /// the manifest atomically.
    pub fn repair_links(&mut self) -> Result<RepairSummary, VaultError> {
        self.repair_links_with_hook(|_| Ok(()))
    }

    fn repair_links_with_hook(
        &mut self,
        before_rename: impl FnOnce(&Path) -> io::Result<()>,
    ) -> Result<RepairSummary, VaultError> {
        let known: HashSet<&str> = self
            .manifest
            .records
            .iter()
            .map(|r| r.image_file.as_str())
            .collect();
        let images_dir = self.root.join(IMAGES_DIR);
        let orphans: Vec<String> = list_pgm(&images_dir)?
            .into_iter()
            .filter(|n| !known.contains(n.as_str()))
            .collect();

        let extracted: Vec<Option<Payload>> = self
            .manifest
            .records
            .par_iter()
            .map(|r| match self.authenticate_file(&r.image_file) {
                Ok(Authentication::Verified(x)) => Some(x.payload),
                _ => None,
            })
            .collect();
        let adopted: Vec<(String, Option<Payload>)> = orphans
            .into_par_iter()
            .map(|name| {
                let p = match self.authenticate_file(&name) {
                    Ok(Authentication::Verified(x)) => Some(x.payload),
                    _ => None,
                };
                (name, p)
            })
            .collect();

        let mut summary = RepairSummary::default();
        for (record, payload) in self.manifest.records.iter_mut().zip(extracted) {
            let before = record.clone();
            match payload {
                Some(p) => {
                    record.locator = p.locator;
                    record.patient_code = p.patient_code;
                    record.status = RecordStatus::Watermarked;
                    summary.verified += 1;
                }
                None => {
                    record.status = RecordStatus::Unverified;
                    summary.unverified.push(record.image_file.clone());
                }
            }
            if *record != before {
                summary.changed += 1;
            }
        }
        for (name, payload) in adopted {
            if let Some(p) = payload {
                self.manifest.records.push(VaultRecord {
                    patient_code: p.patient_code,
                    locator: p.locator,
                    image_file: name.clone(),
                    status: RecordStatus::Watermarked,
                });
                summary.verified += 1;
                summary.adopted.push(name);
            }
        }
        self.save_with_hook(before_rename)?;
        Ok(summary)
    }
}

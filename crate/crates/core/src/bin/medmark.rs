//! Command-line front end. Exit codes: 0 ok, 1 other, 2 verification
//! failure, 3 insufficient capacity, 4 not found, 5 format or corruption.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use medmark::image::ImageError;
use medmark::payload::PayloadError;
use medmark::retrieval::{self, pr_graph_string, DEFAULT_CUTOFFS};
use medmark::{
    authenticate, embed, extract_features, psnr, Authentication, ClassLabels, CodeMap, EvalConfig,
    GrayImage, Normalization, Payload, RetrievalError, Vault, VaultError, VaultSnapshot,
    WatermarkError,
};

#[derive(Parser)]
#[command(
    name = "medmark",
    version,
    about = "Reversible watermarking and retrieval for grayscale medical images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a payload (hash, locator, features, patient code) into a PGM image
    Embed {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        locator: String,
        #[arg(long)]
        code: String,
    },
    /// Restore the original image and dump the payload
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_original: Option<PathBuf>,
        #[arg(long)]
        out_payload: Option<PathBuf>,
    },
    /// Check a watermarked image against its embedded hash
    Verify {
        #[arg(long)]
        image: PathBuf,
    },
    /// Print the ten-component feature vector of an image
    Features {
        #[arg(long)]
        image: PathBuf,
    },
    /// PSNR between two images of equal size
    Psnr { a: PathBuf, b: PathBuf },
    /// Watermarked image vault
    #[command(subcommand)]
    Vault(VaultCommand),
}

#[derive(Subcommand)]
enum VaultCommand {
    /// Create an empty vault
    Init { dir: PathBuf },
    /// Watermark one image into the vault
    Add {
        dir: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Stored file name (defaults to the source file name)
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        code: String,
        #[arg(long, default_value = "")]
        locator: String,
    },
    /// Watermark every PGM in a directory using a `file,patient_code,locator` CSV
    WatermarkAll {
        dir: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        codes: PathBuf,
    },
    /// Rebuild manifest locators and patient codes from the watermarks
    Repair { dir: PathBuf },
    /// Restore the image of a patient record
    Load {
        dir: PathBuf,
        #[arg(long)]
        code: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search by patient code or by query image
    Search {
        dir: PathBuf,
        #[arg(long, conflicts_with = "query", required_unless_present = "query")]
        code: Option<String>,
        #[arg(long)]
        query: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Mean top-D precision/recall per class, written as CSV
    Eval {
        dir: PathBuf,
        /// Lines of `<image_file> <class>`
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "D", value_delimiter = ',', default_values_t = DEFAULT_CUTOFFS)]
        cutoffs: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Args)]
struct NormArgs {
    /// z-score feature components before computing distances
    #[arg(long)]
    zscore: bool,
}

impl NormArgs {
    fn get(&self) -> Normalization {
        if self.zscore {
            Normalization::ZScore
        } else {
            Normalization::None
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ImageError> for Failure {
    fn from(e: ImageError) -> Self {
        let code = match e {
            ImageError::Io(_) => 1,
            _ => 5,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<WatermarkError> for Failure {
    fn from(e: WatermarkError) -> Self {
        let code = match &e {
            WatermarkError::InsufficientCapacity { .. } => 3,
            e if e.is_tamper_signal() => 2,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<PayloadError> for Failure {
    fn from(e: PayloadError) -> Self {
        Failure::new(5, e.to_string())
    }
}

impl From<VaultError> for Failure {
    fn from(e: VaultError) -> Self {
        match e {
            VaultError::Watermark(w) => w.into(),
            VaultError::Image { path, source } => {
                let f = Failure::from(source);
                Failure::new(f.code, format!("{}: {}", path.display(), f.message))
            }
            VaultError::UnknownCode(_) => Failure::new(4, e.to_string()),
            VaultError::Manifest(_) | VaultError::ManifestVersion(_) | VaultError::CodeMap(_) => {
                Failure::new(5, e.to_string())
            }
            VaultError::Payload(_) => Failure::new(5, e.to_string()),
            _ => Failure::new(1, e.to_string()),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        let code = match e {
            RetrievalError::UnknownCode(_)
            | RetrievalError::UnknownLabel(_)
            | RetrievalError::EmptyVault => 4,
            RetrievalError::QueryUnavailable(..) => 2,
            RetrievalError::Labels(_) | RetrievalError::Csv(_) => 5,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<medmark::FeatureError> for Failure {
    fn from(e: medmark::FeatureError) -> Self {
        Failure::new(1, e.to_string())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(1, format!("{}: {e}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Embed {
            image,
            out,
            locator,
            code,
        } => {
            let original = GrayImage::load(&image)?;
            let features = extract_features(&original)?;
            let payload = Payload::new(&original, locator, features, code);
            let (marked, report) = embed(&original, &payload)?;
            marked.save(&out)?;
            println!("capacity_bits: {}", report.capacity_bits);
            println!("used_bits: {}", report.used_bits);
            println!("expanded_pairs: {}", report.expanded_pairs);
            println!("changeable_pairs: {}", report.changeable_pairs);
            println!("psnr_db: {}", report.psnr_db);
        }
        Command::Extract {
            image,
            out_original,
            out_payload,
        } => {
            let marked = GrayImage::load(&image)?;
            let x = match authenticate(&marked) {
                Authentication::Undecodable(e) => return Err(e.into()),
                Authentication::Verified(x) | Authentication::Mismatch(x) => x,
            };
            if let Some(path) = out_original {
                x.restored.save(&path)?;
            }
            let dump = x.payload.to_text();
            match out_payload {
                Some(path) => fs::write(&path, dump).map_err(io(&path))?,
                None => print!("{dump}"),
            }
            if !x.verified {
                return Err(Failure::new(
                    2,
                    "verification failed: image does not match embedded hash",
                ));
            }
        }
        Command::Verify { image } => {
            let marked = GrayImage::load(&image)?;
            match authenticate(&marked) {
                Authentication::Verified(_) => println!("verified"),
                Authentication::Mismatch(_) => {
                    return Err(Failure::new(2, "verification failed: hash mismatch"))
                }
                Authentication::Undecodable(e) => return Err(e.into()),
            }
        }
        Command::Features { image } => {
            let f = extract_features(&GrayImage::load(&image)?)?;
            for (name, v) in medmark::FeatureVector::NAMES.iter().zip(f.to_array()) {
                println!("{name}: {v:.6}");
            }
        }
        Command::Psnr { a, b } => {
            let v = psnr(&GrayImage::load(&a)?, &GrayImage::load(&b)?)?;
            println!("{v}");
        }
        Command::Vault(cmd) => run_vault(cmd)?,
    }
    Ok(())
}

fn run_vault(cmd: VaultCommand) -> Result<(), Failure> {
    match cmd {
        VaultCommand::Init { dir } => {
            Vault::init(&dir)?;
            println!("initialized {}", dir.display());
        }
        VaultCommand::Add {
            dir,
            image,
            name,
            code,
            locator,
        } => {
            let mut vault = Vault::open(&dir)?;
            let name = match name {
                Some(n) => n,
                None => image
                    .file_name()
                    .and_then(|n| n.to_str())
                    .ok_or_else(|| Failure::new(1, "source image has no file name"))?
                    .to_string(),
            };
            let report = vault.add(&GrayImage::load(&image)?, &name, &code, &locator)?;
            println!(
                "{name}: {} bits used of {}, psnr {}",
                report.used_bits, report.capacity_bits, report.psnr_db
            );
        }
        VaultCommand::WatermarkAll { dir, src, codes } => {
            let mut vault = Vault::open(&dir)?;
            let summary = vault.watermark_all(&src, &CodeMap::load(&codes)?)?;
            for (name, e) in &summary.skipped {
                eprintln!("skipped {name}: {e}");
            }
            for (name, e) in &summary.failed {
                eprintln!("failed {name}: {e}");
            }
            println!(
                "watermarked: {}, skipped: {}, failed: {}",
                summary.watermarked.len(),
                summary.skipped.len(),
                summary.failed.len()
            );
        }
        VaultCommand::Repair { dir } => {
            let mut vault = Vault::open(&dir)?;
            let s = vault.repair_links()?;
            for name in &s.unverified {
                eprintln!("unverified {name}");
            }
            println!(
                "verified: {}, changed: {}, adopted: {}, unverified: {}",
                s.verified,
                s.changed,
                s.adopted.len(),
                s.unverified.len()
            );
        }
        VaultCommand::Load { dir, code, out } => {
            let vault = Vault::open(&dir)?;
            let loaded = vault.load_record(&code)?;
            if !loaded.verified {
                return Err(Failure::new(
                    2,
                    format!(
                        "{}: verification failed: {}",
                        loaded.record.image_file,
                        loaded.diagnostic.unwrap_or_default()
                    ),
                ));
            }
            let payload = loaded.payload.expect("verified record has a payload");
            if let Some(path) = out {
                loaded
                    .restored
                    .expect("verified record has an image")
                    .save(&path)?;
            }
            println!("image_file: {}", loaded.record.image_file);
            print!("{}", payload.to_text());
        }
        VaultCommand::Search {
            dir,
            code,
            query,
            top,
            norm,
        } => {
            let vault = Vault::open(&dir)?;
            let snapshot = VaultSnapshot::build(&vault);
            let result = match (code, query) {
                (Some(code), _) => retrieval::search_by_code(&snapshot, &code)?,
                (None, Some(q)) => retrieval::search_by_features(
                    &snapshot,
                    &GrayImage::load(&q)?,
                    top,
                    norm.get(),
                )?,
                (None, None) => unreachable!("clap requires --code or --query"),
            };
            for (rank, h) in result.hits.iter().enumerate() {
                println!(
                    "{}\t{}\t{}\t{:.6}\t{}",
                    rank + 1,
                    h.record.image_file,
                    h.record.patient_code,
                    h.distance,
                    if h.verified { "verified" } else { "UNVERIFIED" }
                );
            }
        }
        VaultCommand::Eval {
            dir,
            labels,
            seed,
            cutoffs,
            out,
            norm,
        } => {
            let vault = Vault::open(&dir)?;
            let text = fs::read_to_string(&labels).map_err(io(&labels))?;
            let labels = ClassLabels::parse(&text)?;
            let snapshot = VaultSnapshot::build(&vault);
            let config = EvalConfig {
                cutoffs,
                seed,
                normalization: norm.get(),
                ..EvalConfig::default()
            };
            let points = retrieval::precision_recall(&vault, &snapshot, &labels, &config)?;
            let csv = pr_graph_string(&points);
            match out {
                Some(path) => fs::write(&path, csv).map_err(io(&path))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use tocr_core::dataset::{
    augment, derive_seed, ingest_glyph_sheet, read_manifest, split_dataset, to_labeled,
    write_dataset, AugmentPlan, DatasetManifest, GlyphSample, Split, Target, DEFAULT_FRACTIONS,
};
use tocr_core::duoclf::{evaluate_dual, load_bundle, save_bundle};
use tocr_core::imgcore::{binarize, RasterImage};
use tocr_core::nn::{
    load_model, parse_arch, preset, save_model, train, Init, OptimizerKind, ParamSet, TrainConfig,
};
use tocr_core::pipeline::{ocr_page, render_html, OcrConfig};
use tocr_core::segment::{segment_page, write_debug_dump, SegmentConfig};
use tocr_core::synth::{render_sheet, FontStyle};
use tocr_core::taxonomy::{CompositeLabel, Taxonomy};

use crate::config::ConfigFile;
use crate::server::{self, AppState, DEFAULT_MAX_BODY};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "tocr", version, about = "Telugu OCR: segmentation, dual-CNN recognition, dataset tools")]
pub struct Cli {
    /// key = value file supplying defaults for any long flag; flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Html,
    Txt,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recognize a page image.
    Ocr {
        image: PathBuf,
        /// html (default), txt or json.
        #[arg(long)]
        format: Option<OutputFormat>,
        /// Bundle directory or bundle.json [default: ./bundle].
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Skip skew estimation and correction.
        #[arg(long)]
        no_deskew: bool,
    },
    /// Expand every sample of a manifest with the default augmentation
    /// plan, re-split and write a new dataset directory.
    Augment {
        manifest: PathBuf,
        out: PathBuf,
        /// [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Leave the source samples out of the output.
        #[arg(long)]
        variants_only: bool,
    },
    /// Cut a glyph sheet into labeled samples. The labels file holds one
    /// row per sheet line of whitespace-separated `main:modifier` tokens
    /// (ids or taxonomy names; `:modifier` may be omitted).
    Ingest {
        sheet: PathBuf,
        labels: PathBuf,
        /// Output dataset directory [default: ./dataset].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Font name recorded in provenance [default: unknown].
        #[arg(long)]
        font: Option<String>,
        /// Sheet point size, one of 15..40 in steps of 5 [default: 25].
        #[arg(long)]
        size: Option<u32>,
        /// Split seed [default: 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Taxonomy JSON [default: built-in desk taxonomy].
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
    /// Train one network on the train split, validating on val.
    Train {
        manifest: PathBuf,
        /// Architecture string or preset name, e.g. CRP25-CRP20-DD256 or TCCNN-S.
        #[arg(long)]
        arch: String,
        /// main or modifier.
        #[arg(long)]
        target: Target,
        /// Model file to write [default: <target>.tocr].
        #[arg(long)]
        out: Option<PathBuf>,
        /// adam (default) or sgd.
        #[arg(long)]
        optimizer: Option<OptimizerArg>,
        /// [default: 100]
        #[arg(long)]
        epochs: Option<usize>,
        /// [default: 5]
        #[arg(long)]
        patience: Option<usize>,
        /// [default: 500]
        #[arg(long)]
        batch_size: Option<usize>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<u64>,
        /// Taxonomy JSON for the class count [default: built-in].
        #[arg(long)]
        taxonomy: Option<PathBuf>,
        /// Also write the training history as JSON.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Tie a main and a modifier model into a bundle directory.
    Bundle {
        #[arg(long)]
        main: PathBuf,
        #[arg(long)]
        modifier: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        taxonomy: Option<PathBuf>,
    },
    /// Main, modifier and joint accuracy of a bundle on a manifest split.
    Eval {
        manifest: PathBuf,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// train, val or test [default: test].
        #[arg(long)]
        split: Option<String>,
    },
    /// Segment a page and write an overlay and the segmentation as JSON.
    Segment {
        image: PathBuf,
        /// [default: ./segment-debug]
        #[arg(long)]
        debug_dir: Option<PathBuf>,
    },
    /// Serve POST /ocr, GET /healthz and GET /version.
    Serve {
        /// [default: 127.0.0.1:8080]
        #[arg(long)]
        addr: Option<String>,
        #[arg(long)]
        bundle: Option<PathBuf>,
        /// Request body limit in bytes [default: 10485760].
        #[arg(long)]
        max_body: Option<usize>,
        /// Flag glyphs whose confidence is below this [default: off].
        #[arg(long)]
        reject_below: Option<f32>,
    },
    /// Render a synthetic glyph sheet and its labels file.
    RenderSheet {
        out: PathBuf,
        /// Labels file to write next to the sheet [default: <out> with extension .labels].
        #[arg(long)]
        labels_out: Option<PathBuf>,
        /// light, bold or medium-oblique [default: light].
        #[arg(long)]
        style: Option<String>,
        /// [default: 25]
        #[arg(long)]
        size: Option<u32>,
        /// Modifier id attached to every main [default: 0].
        #[arg(long)]
        modifier: Option<usize>,
        /// Glyphs per row [default: 13].
        #[arg(long)]
        row_len: Option<usize>,
        /// [default: 0]
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn input(msg: impl Into<String>) -> CliError {
    CliError::Input(msg.into())
}

fn load_taxonomy(path: Option<PathBuf>) -> Result<Taxonomy, CliError> {
    match path {
        Some(p) if p.as_os_str() != "desk" => Ok(Taxonomy::load(p)?),
        _ => Ok(Taxonomy::desk()),
    }
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(input(format!("split must be train, val or test, got {s:?}"))),
    }
}

/// `12:3`, `ka:sign_aa`, `ka` (no modifier).
pub fn parse_label(token: &str, taxonomy: &Taxonomy) -> Result<CompositeLabel, CliError> {
    let (m, k) = token.split_once(':').unwrap_or((token, "0"));
    let main = m
        .parse()
        .ok()
        .or_else(|| taxonomy.main_by_name(m))
        .ok_or_else(|| input(format!("unknown main {m:?} in {token:?}")))?;
    let modifier = k
        .parse()
        .ok()
        .or_else(|| taxonomy.modifier_by_name(k))
        .ok_or_else(|| input(format!("unknown modifier {k:?} in {token:?}")))?;
    let label = CompositeLabel::new(main, modifier);
    taxonomy.check(label)?;
    Ok(label)
}

pub fn parse_labels_file(text: &str, taxonomy: &Taxonomy) -> Result<Vec<Vec<CompositeLabel>>, CliError> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|l| l.split_whitespace().map(|t| parse_label(t, taxonomy)).collect())
        .collect()
}

fn bundle_path(cfg: &ConfigFile, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    cfg.pick(flag, "bundle", PathBuf::from("bundle"))
}

fn write_split_dataset(out: &Path, samples: &[GlyphSample], seed: u64, taxonomy: &str) -> Result<DatasetManifest, CliError> {
    let mut manifest = split_dataset(samples, DEFAULT_FRACTIONS, seed)?;
    manifest.taxonomy = taxonomy.to_string();
    write_dataset(out, samples, &manifest)?;
    Ok(manifest)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Ocr {
            image,
            format,
            bundle,
            no_deskew,
        } => {
            let format = cfg.pick(format, "format", OutputFormat::Html)?;
            let model = load_bundle(bundle_path(&cfg, bundle)?)?;
            let page = RasterImage::load(&image)?;
            let config = OcrConfig {
                deskew: !no_deskew && cfg.pick(None, "deskew", true)?,
                ..OcrConfig::default()
            };
            let result = ocr_page(&page, &model, &config)?;
            match format {
                OutputFormat::Html => print!("{}", render_html(&result)),
                OutputFormat::Txt => println!("{}", result.text()),
                OutputFormat::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&result.to_json()).map_err(|e| CliError::Internal(e.to_string()))?
                ),
            }
        }
        Command::Augment {
            manifest,
            out,
            seed,
            variants_only,
        } => {
            let seed = cfg.pick(seed, "seed", 0)?;
            let m = read_manifest(&manifest)?;
            let samples = m.load_samples(manifest_root(&manifest), None)?;
            let plan = AugmentPlan::default();
            let mut all = Vec::new();
            for (i, s) in samples.iter().enumerate() {
                if !variants_only {
                    all.push(s.clone());
                }
                all.extend(augment(s, &plan, derive_seed(seed, i as u64))?);
            }
            let written = write_split_dataset(&out, &all, seed, &m.taxonomy)?;
            let c = written.counts();
            eprintln!("{} samples (train {}, val {}, test {})", all.len(), c.train, c.val, c.test);
        }
        Command::Ingest {
            sheet,
            labels,
            out,
            font,
            size,
            seed,
            taxonomy,
        } => {
            let tax_ref = taxonomy
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "desk".into());
            let tax = load_taxonomy(taxonomy)?;
            let text = std::fs::read_to_string(&labels)
                .map_err(|e| input(format!("{}: {e}", labels.display())))?;
            let rows = parse_labels_file(&text, &tax)?;
            let page = RasterImage::load(&sheet)?;
            let font = cfg.pick(font, "font", "unknown".to_string())?;
            let size = cfg.pick(size, "size", 25)?;
            let samples = ingest_glyph_sheet(&page, &rows, &font, size, &SegmentConfig::default())?;
            let out = cfg.pick(out, "out", PathBuf::from("dataset"))?;
            write_split_dataset(&out, &samples, cfg.pick(seed, "seed", 0)?, &tax_ref)?;
            eprintln!("{} samples written to {}", samples.len(), out.display());
        }
        Command::Train {
            manifest,
            arch,
            target,
            out,
            optimizer,
            epochs,
            patience,
            batch_size,
            seed,
            taxonomy,
            history,
        } => {
            let tax = load_taxonomy(taxonomy)?;
            let classes = match target {
                Target::Main => tax.n_main(),
                Target::Modifier => tax.n_modifier(),
            };
            let arch = preset(&arch).unwrap_or(&arch).to_string();
            let spec = parse_arch(&arch, classes)?;
            let m = read_manifest(&manifest)?;
            let root = manifest_root(&manifest);
            let train_set = to_labeled(&m.load_samples(&root, Some(Split::Train))?, target);
            let val = to_labeled(&m.load_samples(&root, Some(Split::Val))?, target);
            if train_set.is_empty() || val.is_empty() {
                return Err(input("manifest needs non-empty train and val splits"));
            }
            let seed = cfg.pick(seed, "seed", 0)?;
            let config = TrainConfig {
                batch_size: cfg.pick(batch_size, "batch-size", 500)?,
                optimizer: match cfg.pick(optimizer, "optimizer", OptimizerArg::Adam)? {
                    OptimizerArg::Adam => OptimizerKind::adam_default(),
                    OptimizerArg::Sgd => OptimizerKind::sgd_default(),
                },
                max_epochs: cfg.pick(epochs, "epochs", 100)?,
                patience: cfg.pick(patience, "patience", 5)?,
                target_accuracy: None,
                seed,
            };
            let init = ParamSet::init(&spec, Init::HeUniform, seed)?;
            let (params, hist) = train(&spec, init, &train_set, &val, &config)?;
            for e in &hist.epochs {
                eprintln!(
                    "epoch {:3}  loss {:.4}  train {:.4}  val {:.4}",
                    e.epoch, e.train_loss, e.train_accuracy, e.val_accuracy
                );
            }
            eprintln!(
                "best epoch {} (val {:.4}), stopped: {:?}",
                hist.best_epoch, hist.best_val_accuracy, hist.stop
            );
            let out = out.unwrap_or_else(|| PathBuf::from(format!("{}.tocr", match target {
                Target::Main => "main",
                Target::Modifier => "modifier",
            })));
            save_model(&spec, &params, &out)?;
            if let Some(h) = history {
                std::fs::write(h, serde_json::to_string_pretty(&hist).map_err(|e| CliError::Internal(e.to_string()))?)?;
            }
        }
        Command::Bundle {
            main,
            modifier,
            out,
            taxonomy,
        } => {
            let tax = load_taxonomy(taxonomy)?;
            let path = save_bundle(&out, &load_model(main)?, &load_model(modifier)?, &tax)?;
            // fail now rather than at serve time
            load_bundle(&path)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Eval {
            manifest,
            bundle,
            split,
        } => {
            let model = load_bundle(bundle_path(&cfg, bundle)?)?;
            let split = parse_split(&cfg.pick(split, "split", "test".to_string())?)?;
            let m = read_manifest(&manifest)?;
            let samples = m.load_samples(manifest_root(&manifest), Some(split))?;
            let acc = evaluate_dual(&model, &samples)?;
            println!(
                "{}",
                serde_json::json!({
                    "samples": samples.len(),
                    "main": acc.main,
                    "modifier": acc.modifier,
                    "joint": acc.joint,
                })
            );
        }
        Command::Segment { image, debug_dir } => {
            let page = RasterImage::load(&image)?;
            let mask = binarize(&page)?;
            let words = segment_page(&page, &mask, &SegmentConfig::default())?;
            let dir = cfg.pick(debug_dir, "debug-dir", PathBuf::from("segment-debug"))?;
            write_debug_dump(&dir, &page, &words)?;
            let glyphs: usize = words.iter().map(|w| w.glyphs.len()).sum();
            println!("{} words, {} glyphs; debug output in {}", words.len(), glyphs, dir.display());
        }
        Command::Serve {
            addr,
            bundle,
            max_body,
            reject_below,
        } => {
            let addr = cfg.pick(addr, "addr", "127.0.0.1:8080".to_string())?;
            let max_body = cfg.pick(max_body, "max-body", DEFAULT_MAX_BODY)?;
            let reject = match reject_below {
                Some(t) => Some(t),
                None => cfg.get("reject-below")?,
            };
            let model = load_bundle(bundle_path(&cfg, bundle)?)?.with_reject_threshold(reject);
            let state = AppState {
                model: Arc::new(model),
                config: Arc::new(OcrConfig::default()),
            };
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(server::serve(&addr, state, max_body))
                .map_err(|e| input(format!("{addr}: {e}")))?;
        }
        Command::RenderSheet {
            out,
            labels_out,
            style,
            size,
            modifier,
            row_len,
            seed,
        } => {
            let tax = Taxonomy::desk();
            let name = cfg.pick(style, "style", "light".to_string())?;
            let style = FontStyle::by_name(&name).ok_or_else(|| input(format!("unknown style {name:?}")))?;
            let modifier = cfg.pick(modifier, "modifier", 0)?;
            let row_len = cfg.pick(row_len, "row-len", 13)?.max(1);
            let labels: Vec<CompositeLabel> =
                (0..tax.n_main()).map(|m| CompositeLabel::new(m, modifier)).collect();
            for l in &labels {
                tax.check(*l)?;
            }
            let rows: Vec<Vec<CompositeLabel>> = labels.chunks(row_len).map(<[_]>::to_vec).collect();
            let sheet = render_sheet(&tax, &rows, &style, cfg.pick(size, "size", 25)?, cfg.pick(seed, "seed", 0)?)?;
            sheet.save(&out)?;
            let labels_out = labels_out.unwrap_or_else(|| out.with_extension("labels"));
            let text: String = rows
                .iter()
                .map(|r| {
                    let tokens: Vec<String> = r.iter().map(|l| format!("{}:{}", l.main_id, l.modifier_id)).collect();
                    tokens.join(" ") + "\n"
                })
                .collect();
            std::fs::write(&labels_out, text)?;
            eprintln!("wrote {} and {}", out.display(), labels_out.display());
        }
    }
    Ok(())
}

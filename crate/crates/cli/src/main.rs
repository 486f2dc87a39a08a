//! Command-line front end for the `retouch` library.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use retouch::color::{hsv_to_rgb, lab_to_rgb, rgb_to_hsv, rgb_to_lab, rgb_to_yuv, yuv_to_rgb};
use retouch::image::ColorSpace;
use retouch::io::{is_image_path, load_rgb, save_gray16, save_rgb16, save_rgb8};
use retouch::kmeans::kmeans;
use retouch::luminance::{gainmap_between, DEFAULT_EPSILON};
use retouch::metrics::{max_abs_diff, psnr, ssim};
use retouch::model::{forward, load_params, load_params_json, save_params, save_params_json};
use retouch::palette::{build_masks, hue_palette_loss_per_bin, major_colors, plot_coordinates, DEFAULT_BINS, DEFAULT_PALETTE_SIZE};
use retouch::train::{
    bin_count_sweep, load_dataset, split_first, train_with_validation, write_bin_sweep_csv, write_history_csv, TrainConfig,
    DEFAULT_LONG_EDGE, DEFAULT_SEED, SWEEP_BINS,
};
use retouch::{exif, EnhancerParams, ExifVector, ImageRgb};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ncheckpoint format: LCC1 (little-endian, f64 parameters)",
    "\nscalar: f64"
);

#[derive(Parser)]
#[command(name = "retouch", version, long_version = LONG_VERSION, about = "Curve-based photo enhancement toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, ValueEnum)]
enum Space {
    Yuv,
    Hsv,
    Lab,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Depth {
    #[value(name = "8")]
    Eight,
    #[value(name = "16")]
    Sixteen,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an image to YUV, HSV or Lab and print one TSV row per pixel.
    Convert {
        #[arg(long, value_enum)]
        to: Space,
        input: PathBuf,
        /// Write the TSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report the round-trip error back to RGB instead of the pixel values.
        #[arg(long)]
        check: bool,
    },
    /// Per-pixel luma gain of TARGET over SOURCE, saved as a 16-bit PGM/PNG
    /// normalized by the maximum gain (written to `<out>.max.txt`).
    Gainmap {
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_EPSILON)]
        epsilon: f64,
    },
    /// Hue-palette loss of OUTPUT against GT, per bin and total, as TSV.
    HueLoss {
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        output: PathBuf,
        gt: PathBuf,
    },
    /// Dominant Lab colors of an image with their pixel fractions.
    Palette {
        #[arg(long, default_value_t = DEFAULT_PALETTE_SIZE)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        image: PathBuf,
    },
    /// k-means over the normalized EXIF vectors of every image in DIR; CSV `filename,cluster`.
    ClusterExif {
        #[arg(long, default_value_t = 30)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        dir: PathBuf,
    },
    /// Train the enhancer on DATA/input and DATA/gt.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 1.0)]
        w_lab: f64,
        #[arg(long, default_value_t = 1.0)]
        w_hue: f64,
        #[arg(long, default_value_t = DEFAULT_LONG_EDGE)]
        long_edge: usize,
        /// Use the first N pairs for training and the rest for validation (default: all for training).
        #[arg(long)]
        train_count: Option<usize>,
        /// Train stage 1 first, then freeze it and train stage 2.
        #[arg(long)]
        stage_wise: bool,
        #[arg(long, default_value_t = 0.0)]
        monotone_weight: f64,
        /// Directory for params.lcc, params.json, history.csv and run.json.
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Train once per hue bin count and report held-out PSNR for each, as CSV.
    SweepBins {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated bin counts; each must divide 360.
        #[arg(long, value_delimiter = ',', default_values_t = SWEEP_BINS)]
        bins: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = DEFAULT_LONG_EDGE)]
        long_edge: usize,
        /// Pairs used for training; the rest are held out.
        #[arg(long)]
        train_count: usize,
    },
    /// Run the full two-stage model on one image.
    Infer {
        /// `.json` mirror or binary checkpoint.
        #[arg(long)]
        params: PathBuf,
        /// EXIF sidecar; defaults to the sidecar or embedded EXIF of INPUT.
        #[arg(long)]
        exif: Option<PathBuf>,
        /// Output bit depth.
        #[arg(long, value_enum, default_value = "8")]
        depth: Depth,
        input: PathBuf,
        output: PathBuf,
    },
    /// PSNR and SSIM between two images.
    Metrics { a: PathBuf, b: PathBuf },
    /// CSV of the dominant Lab colors of every image in DIR, for scatter plots.
    AnalyzeAb {
        #[arg(long, default_value_t = DEFAULT_PALETTE_SIZE)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        dir: PathBuf,
    },
    /// Write an identity-initialized parameter file.
    InitParams {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        out: PathBuf,
    },
}

/// Bad command-line input detected by the CLI itself.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let argument = e.chain().any(|c| {
                c.downcast_ref::<UsageError>().is_some()
                    || c.downcast_ref::<retouch::Error>().is_some_and(|e| e.is_argument_error())
            });
            ExitCode::from(if argument { 2 } else { 1 })
        }
    }
}

fn output_stream(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_path(p))
        .collect();
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_any_params(path: &Path) -> Result<EnhancerParams> {
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    Ok(if is_json {
        load_params_json(path)?.0
    } else {
        load_params(path)?
    })
}

fn write_pixels<S: ColorSpace>(out: &mut dyn Write, img: &retouch::image::Image<S, f64>) -> io::Result<()> {
    writeln!(out, "x\ty\t{}", S::CHANNELS.join("\t"))?;
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [a, b, c] = img.pixel(x, y);
            writeln!(out, "{x}\t{y}\t{a:?}\t{b:?}\t{c:?}")?;
        }
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Convert { to, input, out, check } => {
            let img: ImageRgb = load_rgb(&input)?;
            let mut w = output_stream(out.as_deref())?;
            if check {
                let back = match to {
                    Space::Yuv => yuv_to_rgb(&rgb_to_yuv(&img)),
                    Space::Hsv => hsv_to_rgb(&rgb_to_hsv(&img)),
                    Space::Lab => lab_to_rgb(&rgb_to_lab(&img)),
                };
                writeln!(w, "max_abs_error={:?}", max_abs_diff(&img, &back)?)?;
            } else {
                match to {
                    Space::Yuv => write_pixels(&mut *w, &rgb_to_yuv(&img))?,
                    Space::Hsv => write_pixels(&mut *w, &rgb_to_hsv(&img))?,
                    Space::Lab => write_pixels(&mut *w, &rgb_to_lab(&img))?,
                }
            }
            w.flush()?;
        }
        Command::Gainmap {
            target,
            source,
            out,
            epsilon,
        } => {
            let t: ImageRgb = load_rgb(&target)?;
            let s: ImageRgb = load_rgb(&source)?;
            let g = gainmap_between(&t, &s, epsilon)?;
            let (plane, max) = g.normalized();
            save_gray16(&out, &plane)?;
            let mut side = out.clone().into_os_string();
            side.push(".max.txt");
            std::fs::write(&side, format!("max_gain={max:?}\n"))
                .with_context(|| format!("writing {}", Path::new(&side).display()))?;
            println!("max_gain={max:?}");
        }
        Command::HueLoss { bins, output, gt } => {
            if bins == 0 || 360 % bins != 0 {
                return Err(usage(format!("--bins {bins} does not divide 360")));
            }
            let o: ImageRgb = load_rgb(&output)?;
            let g: ImageRgb = load_rgb(&gt)?;
            let masks = build_masks(&g, bins)?;
            let per_bin = hue_palette_loss_per_bin(&o, &g, &masks)?;
            let mut w = output_stream(None)?;
            writeln!(w, "bin\tcount\tloss")?;
            for (j, (loss, count)) in per_bin.iter().zip(masks.counts()).enumerate() {
                writeln!(w, "{j}\t{count}\t{loss:?}")?;
            }
            writeln!(w, "total\t{}\t{:?}", o.pixel_count(), per_bin.iter().sum::<f64>())?;
            w.flush()?;
        }
        Command::Palette { k, seed, image } => {
            let img: ImageRgb = load_rgb(&image)?;
            let pal = major_colors(&img, k, seed)?;
            let mut w = output_stream(None)?;
            writeln!(w, "rank\tL\ta\tb\tweight")?;
            for (i, c) in pal.colors.iter().enumerate() {
                let [l, a, b] = c.lab;
                writeln!(w, "{i}\t{l:?}\t{a:?}\t{b:?}\t{:?}", c.weight)?;
            }
            w.flush()?;
        }
        Command::ClusterExif { k, seed, dir } => {
            let files = image_files(&dir)?;
            let vectors = files
                .iter()
                .map(|f| exif::load_for_image(f).map(|v| v.normalize().0))
                .collect::<retouch::Result<Vec<[f64; 6]>>>()?;
            if files.is_empty() {
                bail!(usage(format!("no images found in {}", dir.display())));
            }
            let km = kmeans(&vectors, k, seed)?;
            let mut w = output_stream(None)?;
            writeln!(w, "filename,cluster")?;
            for (f, c) in files.iter().zip(&km.assignments) {
                writeln!(w, "{},{c}", file_name(f))?;
            }
            w.flush()?;
        }
        Command::Train {
            data,
            epochs,
            seed,
            bins,
            lr,
            batch_size,
            w_lab,
            w_hue,
            long_edge,
            train_count,
            stage_wise,
            monotone_weight,
            out,
        } => {
            let cfg = TrainConfig {
                seed,
                learning_rate: lr,
                epochs,
                batch_size,
                w_lab,
                w_hue,
                bins,
                stage_wise,
                monotone_weight,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            let set = load_dataset::<f64>(&data, long_edge)?;
            for s in &set.skipped {
                eprintln!("skipped {}: {}", s.stem, s.reason);
            }
            if set.pairs.is_empty() {
                bail!(usage(format!("no image pairs found under {}", data.display())));
            }
            let (tr, val) = split_first(&set.pairs, train_count.unwrap_or(set.pairs.len()));
            if tr.is_empty() {
                bail!(usage("--train-count leaves no training pairs"));
            }
            eprintln!("training on {} pairs, validating on {}", tr.len(), val.len());
            let outcome = train_with_validation(&tr, &val, &cfg)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            save_params(out.join("params.lcc"), &outcome.params)?;
            save_params_json(out.join("params.json"), &outcome.params, Some(seed))?;
            let hist = File::create(out.join("history.csv")).context("creating history.csv")?;
            write_history_csv(BufWriter::new(hist), &outcome.history)?;
            let manifest = serde_json::json!({
                "seed": seed,
                "config": cfg,
                "data": data,
                "long_edge": long_edge,
                "train_pairs": tr.iter().map(|p| &p.id).collect::<Vec<_>>(),
                "val_pairs": val.iter().map(|p| &p.id).collect::<Vec<_>>(),
                "skipped": set.skipped.iter().map(|s| serde_json::json!({"stem": s.stem, "reason": s.reason})).collect::<Vec<_>>(),
                "final": outcome.history.last(),
            });
            std::fs::write(out.join("run.json"), serde_json::to_string_pretty(&manifest)?)
                .context("writing run.json")?;
            if let Some(last) = outcome.history.last() {
                println!(
                    "epoch={} total={:?} l1lab={:?} psnr_val={}",
                    last.epoch,
                    last.total,
                    last.l1lab,
                    last.psnr_val.map(|v| format!("{v:?}")).unwrap_or_else(|| "none".into())
                );
            }
        }
        Command::SweepBins {
            data,
            bins,
            epochs,
            seed,
            lr,
            batch_size,
            long_edge,
            train_count,
        } => {
            let cfg = TrainConfig {
                seed,
                learning_rate: lr,
                epochs,
                batch_size,
                ..TrainConfig::default()
            };
            cfg.validate()?;
            for &b in &bins {
                TrainConfig { bins: b, ..cfg.clone() }.validate()?;
            }
            let set = load_dataset::<f64>(&data, long_edge)?;
            for s in &set.skipped {
                eprintln!("skipped {}: {}", s.stem, s.reason);
            }
            let (tr, val) = split_first(&set.pairs, train_count);
            if tr.is_empty() || val.is_empty() {
                bail!(usage("--train-count must leave both training and held-out pairs"));
            }
            let rows = bin_count_sweep(&tr, &val, &bins, &cfg)?;
            write_bin_sweep_csv(io::stdout().lock(), &rows)?;
        }
        Command::Infer {
            params,
            exif: exif_path,
            depth,
            input,
            output,
        } => {
            let p = load_any_params(&params)?;
            let vector: ExifVector = match &exif_path {
                Some(path) => exif::load_exif(path)?,
                None => exif::load_for_image(&input)?,
            };
            let img: ImageRgb = load_rgb(&input)?;
            let out = forward(&img, &vector.normalize(), &p);
            if depth == Depth::Sixteen {
                save_rgb16(&output, &out)?;
            } else {
                save_rgb8(&output, &out)?;
            }
        }
        Command::Metrics { a, b } => {
            let x: ImageRgb = load_rgb(&a)?;
            let y: ImageRgb = load_rgb(&b)?;
            println!("psnr={:?} ssim={:?}", psnr(&x, &y)?, ssim(&x, &y)?);
        }
        Command::AnalyzeAb { k, seed, dir } => {
            let files = image_files(&dir)?;
            let mut w = output_stream(None)?;
            writeln!(w, "filename,rank,weight,L,a,b,L_norm,a_norm,b_norm")?;
            for f in &files {
                let img: ImageRgb = load_rgb(f)?;
                for (i, c) in major_colors(&img, k, seed)?.colors.iter().enumerate() {
                    let [l, a, b] = c.lab;
                    let [ln, an, bn] = plot_coordinates(c.lab);
                    writeln!(
                        w,
                        "{},{i},{:?},{l:?},{a:?},{b:?},{ln:?},{an:?},{bn:?}",
                        file_name(f),
                        c.weight
                    )?;
                }
            }
            w.flush()?;
        }
        Command::InitParams { seed, out } => {
            let p = EnhancerParams::default_identity(seed);
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
                save_params_json(&out, &p, Some(seed))?;
            } else {
                save_params(&out, &p)?;
            }
        }
    }
    Ok(())
}

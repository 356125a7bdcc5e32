use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use cardiofat::pipeline::{self, EvalMode, PipelineConfig, RegisterArgs};
use cardiofat::{Error, Result};

#[derive(Parser)]
#[command(name = "cardiofat", version, about = "Epicardial and mediastinal fat segmentation for cardiac CT")]
struct Cli {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Average binary landmark patches into an atlas PNG.
    Atlas {
        patch_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Move a scan (and optionally its masks) into the common frame.
    Register {
        scan_dir: PathBuf,
        #[arg(long)]
        atlas: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        masks: Option<PathBuf>,
        #[arg(long)]
        masks_out: Option<PathBuf>,
    },
    /// Extract per-pixel feature rows from registered scans and their masks.
    Features {
        #[arg(long = "scan", required = true)]
        scans: Vec<PathBuf>,
        #[arg(long = "masks", required = true)]
        masks: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the configured sample stride.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Train a random forest on an ARFF dataset.
    Train {
        arff: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Classify every fat pixel of a registered scan.
    Segment {
        scan_dir: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Hold-out (split66) or cross-validation (cv10) evaluation of a dataset.
    Eval {
        arff: PathBuf,
        #[arg(long, default_value = "split66")]
        mode: String,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dice overlap of predicted masks against truth masks with the same names.
    Dice {
        pred_dir: PathBuf,
        truth_dir: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Write a synthetic corpus with truth masks and landmark patches.
    Phantom {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    path.map_or_else(|| Ok(PipelineConfig::default()), PipelineConfig::load)
}

fn render(t: &cardiofat::evaluation::Table, format: Format) -> String {
    match format {
        Format::Text => t.to_text(),
        Format::Csv => t.to_csv(),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    }
    let mut cfg = load_config(cli.config.as_deref())?;

    match cli.command {
        Command::Atlas { patch_dir, out } => {
            let atlas = pipeline::cmd_atlas(&patch_dir, &out, &cfg)?;
            println!("atlas {}x{} from {} patches", atlas.width(), atlas.height(), atlas.source_count());
        }
        Command::Register { scan_dir, atlas, out, masks, masks_out } => {
            let t = pipeline::cmd_register(
                &RegisterArgs {
                    scan_dir: &scan_dir,
                    atlas: atlas.as_deref(),
                    out_dir: &out,
                    masks: masks.as_deref(),
                    masks_out: masks_out.as_deref(),
                },
                &cfg,
            )?;
            println!(
                "landmark ({}, {}) -> ({}, {}), shift ({}, {})",
                t.landmark.x, t.landmark.y, t.target_center.x, t.target_center.y, t.dx, t.dy
            );
        }
        Command::Features { scans, masks, out, stride } => {
            if scans.len() != masks.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} --scan but {} --masks arguments",
                    scans.len(),
                    masks.len()
                )));
            }
            if let Some(s) = stride {
                cfg.features.sample_stride = s;
            }
            cfg.validate()?;
            let pairs: Vec<(PathBuf, PathBuf)> = scans.into_iter().zip(masks).collect();
            let data = pipeline::cmd_features(&pairs, &out, &cfg)?;
            let counts = data.class_counts();
            let summary: Vec<String> = data.classes.iter().zip(&counts).map(|(c, n)| format!("{c} {n}")).collect();
            println!("{} rows ({})", data.len(), summary.join(", "));
        }
        Command::Train { arff, out, trees, k, seed } => {
            cfg.forest.n_trees = trees.unwrap_or(cfg.forest.n_trees);
            cfg.forest.k = k.unwrap_or(cfg.forest.k);
            cfg.forest.seed = seed.unwrap_or(cfg.forest.seed);
            cfg.validate()?;
            let f = pipeline::cmd_train(&arff, &out, &cfg)?;
            println!("trained {} trees on {} attributes", f.trees.len(), f.schema.attributes.len());
        }
        Command::Segment { scan_dir, model, out, format } => {
            let (_, areas) = pipeline::cmd_segment(&scan_dir, &model, &out)?;
            print!("{}", render(&areas, format));
        }
        Command::Eval { arff, mode, format, seed } => {
            let mode: EvalMode = mode.parse()?;
            cfg.evaluation.seed = seed.unwrap_or(cfg.evaluation.seed);
            let report = pipeline::cmd_eval(&arff, mode, &cfg)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Csv => print!("{}", report.table().to_csv()),
            }
        }
        Command::Dice { pred_dir, truth_dir, format } => {
            print!("{}", render(&pipeline::cmd_dice(&pred_dir, &truth_dir)?, format));
        }
        Command::Phantom { seed, count, out } => {
            let truths = pipeline::cmd_phantom(seed, count, &out, &cfg)?;
            for t in truths {
                println!(
                    "phantom{:03}: landmark ({}, {}), offset ({}, {})",
                    t.index, t.landmark.x, t.landmark.y, t.offset_x, t.offset_y
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = e.category();
            eprintln!("error[{}]: {e}", cat.as_str());
            ExitCode::from(cat.exit_code() as u8)
        }
    }
}

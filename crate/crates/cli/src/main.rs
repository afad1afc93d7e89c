use clap::{Args, Parser, Subcommand};
use kdvision_cli::commands::{
    format_hits, format_identifications, run_analyze, run_catalog, run_classify, run_identify, run_index, run_query,
    run_render, run_train, QueryMode,
};
use kdvision_cli::config::{parse_intervals, parse_vector, PipelineConfig};
use kdvision_cli::error::{exit, read_text, CliError, CliResult};
use kdvision_cli::store::write_atomic;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "kdvision", version, about = "Image analysis, cataloging and content-based queries")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

/// Pipeline settings; flags override the config file.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `auto` or a grey level
    #[arg(long, global = true)]
    threshold: Option<String>,
    /// `auto`, `bright` or `dark`
    #[arg(long, global = true)]
    polarity: Option<String>,
    /// Histogram smoothing window
    #[arg(long, global = true)]
    smooth: Option<String>,
    /// 4 or 8
    #[arg(long, global = true)]
    connectivity: Option<String>,
    /// Vectorization precision in pixels
    #[arg(long, global = true)]
    precision: Option<String>,
    /// Comma separated attribute names to index
    #[arg(long, global = true)]
    attrs: Option<String>,
    /// Index bits per attribute
    #[arg(long, global = true)]
    depth: Option<String>,
    /// `lo:hi` per indexed attribute
    #[arg(long, global = true)]
    bounds: Option<String>,
    /// Index attribute ranks instead of values
    #[arg(long, global = true)]
    equalize: bool,
    /// Registration transform file
    #[arg(long, global = true)]
    transform: Option<String>,
    /// `p q r s` control point file
    #[arg(long = "control-points", global = true)]
    control_points: Option<String>,
    /// Polynomial order fitted to control points
    #[arg(long = "transform-order", global = true)]
    transform_order: Option<String>,
    /// Grey level of rendered contours
    #[arg(long, global = true)]
    overlay: Option<String>,
    /// `auto`, `prefix` or `centered` ordering of ranked answers
    #[arg(long, global = true)]
    ranking: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(p) = &self.config {
            cfg.apply_text(&read_text(p)?)?;
        }
        let flags = [
            ("threshold", &self.threshold),
            ("polarity", &self.polarity),
            ("smooth", &self.smooth),
            ("connectivity", &self.connectivity),
            ("precision", &self.precision),
            ("attrs", &self.attrs),
            ("depth", &self.depth),
            ("bounds", &self.bounds),
            ("transform", &self.transform),
            ("control_points", &self.control_points),
            ("transform_order", &self.transform_order),
            ("overlay", &self.overlay),
            ("ranking", &self.ranking),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.equalize {
            cfg.equalize = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Segment an image and report objects, features and polylines
    Analyze {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Relabel bands by their joint histogram classes
    Classify {
        #[arg(long = "band", required = true)]
        bands: Vec<PathBuf>,
        /// Derivative order for a single band
        #[arg(long)]
        derivative: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        legend: PathBuf,
    },
    /// Register an image and its objects into an archive
    Catalog {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Reuse the reports of a previous analyze run
        #[arg(long)]
        analysis: Option<PathBuf>,
        /// Store the raster in the archive
        #[arg(long)]
        embed: bool,
    },
    /// Build the attribute index of an archive
    Index {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interval, nearest-neighbor or example query
    Query {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        index: PathBuf,
        /// `lo:hi` per indexed attribute
        #[arg(long, group = "mode", allow_hyphen_values = true)]
        interval: Option<String>,
        /// Comma separated key
        #[arg(long, group = "mode", allow_hyphen_values = true)]
        nearest: Option<String>,
        /// Probe image
        #[arg(long, group = "mode")]
        example: Option<PathBuf>,
        #[arg(long)]
        max: Option<usize>,
        /// Write the answers as a new archive
        #[arg(long)]
        extract: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw archived contours over their image
    Render {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long, default_value_t = 0)]
        image: u32,
        /// Comma separated object ids, `all` or `none`
        #[arg(long, default_value = "all")]
        select: String,
        /// Source raster when the archive holds none
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a discriminant model on a feature table
    Train {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also fit rejection thresholds
        #[arg(long)]
        thresholds: bool,
    },
    /// Classify the rows of a feature table
    Identify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        thresholds: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = cli.config.resolve()?;
    match cli.command {
        Command::Analyze { input, out_dir } => {
            let a = run_analyze(&input, &out_dir, &cfg)?;
            println!("objects {}", a.objects.len());
        }
        Command::Classify { bands, derivative, out, legend } => {
            let refs: Vec<&Path> = bands.iter().map(PathBuf::as_path).collect();
            println!("classes {}", run_classify(&refs, derivative, &out, &legend)?);
        }
        Command::Catalog { archive, input, analysis, embed } => {
            let r = run_catalog(&archive, &input, analysis.as_deref(), embed, &cfg)?;
            println!("image {} objects {}", r.image, r.objects.len());
        }
        Command::Index { archive, out } => {
            let idx = run_index(&archive, &out, &cfg)?;
            println!("indexed {} clamped {}", idx.len(), idx.clamped());
        }
        Command::Query { archive, index, interval, nearest, example, max, extract, out } => {
            let bad = |v: &str| CliError::Config(format!("unreadable query `{v}`"));
            let mode = match (interval, nearest, example) {
                (Some(v), _, _) => QueryMode::Interval(parse_intervals(&v).ok_or_else(|| bad(&v))?),
                (_, Some(v), _) => QueryMode::Nearest(parse_vector(&v).ok_or_else(|| bad(&v))?),
                (_, _, Some(p)) => QueryMode::Example(p),
                _ => return Err(CliError::Config("give --interval, --nearest or --example".into())),
            };
            let hits = run_query(&archive, &index, &mode, max.unwrap_or(usize::MAX), extract.as_deref(), &cfg)?;
            emit(&format_hits(&hits), out.as_deref())?;
        }
        Command::Render { archive, image, select, source, out } => {
            let ids = match select.trim() {
                "all" => None,
                "none" | "" => Some(Vec::new()),
                list => Some(
                    list.split(',')
                        .map(|w| w.trim().parse().map_err(|_| CliError::Config(format!("bad object id `{w}`"))))
                        .collect::<CliResult<Vec<u32>>>()?,
                ),
            };
            run_render(&archive, image, ids.as_deref(), source.as_deref(), &out, &cfg)?;
        }
        Command::Train { table, labels, out, thresholds } => {
            println!("classes {}", run_train(&table, &labels, &out, thresholds)?);
        }
        Command::Identify { model, table, thresholds, out } => {
            emit(&format_identifications(&run_identify(&model, &table, thresholds)?), out.as_deref())?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("kdvision: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

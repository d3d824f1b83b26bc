use std::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

use accmine_core::mcu::Variant;
use accmine_core::pipeline::{self, PipelineConfig, PipelineError};
use clap::{Args, Parser, Subcommand};

/// Mine, curate and evaluate OpenACC pragma-loop pairs.
#[derive(Debug, Parser)]
#[command(name = "accmine", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Split seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Compiler executable for the MCU harness.
    #[arg(long, global = true)]
    compiler: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Query the code-search API and store the hits as a snapshot.
    Mine,
    /// Extract pragma-loop pairs from a snapshot or a source directory.
    Extract {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Filter invalid loops and remove duplicates.
    Curate {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Stratified train/test split.
    Split {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        ratio: Option<f64>,
    },
    /// Write chat-format train/test JSONL.
    Format {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Score generations against reference records.
    Evaluate {
        #[arg(long)]
        refs: Option<PathBuf>,
        #[arg(long)]
        gens: PathBuf,
        #[arg(long)]
        label: Option<String>,
    },
    /// Categorize non-exact generations.
    Taxonomy {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
    /// Compile each test loop with no pragma, the reference and the generation.
    Mcu {
        #[arg(long)]
        refs: Option<PathBuf>,
        /// Curated pairs used to synthesize missing MCUs.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        gens: Option<PathBuf>,
        /// Directory of hand-written `<id>.c` / `<id>.cpp` MCUs.
        #[arg(long)]
        mcus: Option<PathBuf>,
    },
    /// Render report.md and report.json from the artifacts in a directory.
    Report {
        #[arg(long = "in")]
        input: Option<PathBuf>,
    },
}

fn config(g: &Global) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.split.seed = s;
    }
    if let Some(o) = &g.out {
        cfg.out = Some(o.clone());
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(c) = &g.compiler {
        cfg.compiler.executable = c.clone();
    }
    Ok(cfg)
}

fn or_out(cfg: &PipelineConfig, given: Option<PathBuf>, name: &str) -> PathBuf {
    given.unwrap_or_else(|| cfg.out_dir().join(name))
}

fn pct(r: Option<f64>) -> String {
    r.map_or("n/a".into(), |v| format!("{:.1}%", v * 100.0))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let mut cfg = config(&cli.global)?;
    match cli.command {
        Command::Mine => {
            let m = pipeline::mine(&cfg)?;
            println!("stored {} files", m.entries.len());
        }
        Command::Extract { input } => {
            let input = input
                .or_else(|| cfg.snapshots.clone().filter(|p| p.is_dir()))
                .or_else(|| cfg.corpus.clone())
                .ok_or_else(|| PipelineError::Invalid("no input: pass --in or set corpus in the config".into()))?;
            let r = pipeline::extract(&cfg, &input)?;
            println!(
                "{} files, {} pragma instances, {} pairs",
                r.totals.files, r.totals.pragma_instances, r.totals.pairs
            );
        }
        Command::Curate { input } => {
            let input = or_out(&cfg, input, pipeline::PAIRS_FILE);
            let c = pipeline::curate(&cfg, &input)?;
            println!(
                "{} extracted, {} after filtering, {} after deduplication",
                c.counts.extracted, c.counts.after_filter, c.counts.after_dedup
            );
        }
        Command::Split { input, ratio } => {
            if let Some(r) = ratio {
                cfg.split.ratio = r;
            }
            let input = or_out(&cfg, input, pipeline::CURATED_FILE);
            let s = pipeline::split(&cfg, &input)?;
            println!(
                "train {}, test {}",
                s.count(accmine_core::curate::Part::Train),
                s.count(accmine_core::curate::Part::Test)
            );
        }
        Command::Format { input, split } => {
            let input = or_out(&cfg, input, pipeline::CURATED_FILE);
            let split = or_out(&cfg, split, pipeline::SPLIT_FILE);
            let f = pipeline::format(&cfg, &input, &split)?;
            println!("train {}, test {}", f.train, f.test);
        }
        Command::Evaluate { refs, gens, label } => {
            if let Some(l) = label {
                cfg.label = l;
            }
            let refs = or_out(&cfg, refs, pipeline::TEST_FILE);
            let e = pipeline::evaluate(&cfg, &refs, &gens)?;
            println!(
                "n={} exact={:.4} levenshtein={:.4} directive={:.4} jaccard={:.4} macro_f1={:.4}",
                e.n, e.exact_match_rate, e.mean_levenshtein, e.directive_accuracy, e.mean_jaccard, e.prf.macro_f1
            );
        }
        Command::Taxonomy { input } => {
            let input = or_out(&cfg, input, pipeline::EVAL_FILE);
            let t = pipeline::taxonomy(&cfg, &input)?;
            for (k, v) in t.rows() {
                println!("{k}: {v}");
            }
        }
        Command::Mcu { refs, input, gens, mcus } => {
            let refs = or_out(&cfg, refs, pipeline::TEST_FILE);
            let input = or_out(&cfg, input, pipeline::CURATED_FILE);
            let c = pipeline::mcu(&cfg, &refs, &input, gens.as_deref(), mcus.as_deref())?;
            for v in Variant::ALL {
                let s = c.stats(v);
                println!("{}: {}/{} ({})", v.as_str(), s.passed, s.attempted, pct(s.rate));
            }
        }
        Command::Report { input } => {
            let dir = input.unwrap_or_else(|| cfg.out_dir());
            pipeline::report(&cfg, &dir)?;
            println!("{}", cfg.out_dir().join(pipeline::REPORT_MD).display());
        }
    }
    Ok(())
}

fn print_error(e: &dyn Error) {
    eprintln!("error: {e}");
    let mut src = e.source();
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            print_error(&e);
            ExitCode::from(1)
        }
    }
}

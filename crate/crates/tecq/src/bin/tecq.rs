//! Experiment CLI: seeded Monte Carlo sweeps for the trellis-extended
//! quantizers, codebook design, and trellis table dumps.
//!
//! Exit codes: 0 success, 2 configuration/argument error, 3 i/o error.

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use tecq::config::{ExperimentConfig, ExperimentKind};
use tecq::error::{Error, Result};
use tecq::harness::{
    self, emit_results, run_beamforming_experiment, run_rate_experiment, run_tespa_experiment,
    OutputFormat, ResultRow, TespaSpec,
};
use tecq::{codebook::Codebook, trellis::ConvCode};

#[derive(Parser)]
#[command(name = "tecq", version, about = "Trellis-extended codebook CSI quantization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Experiment configuration file (TOML, key = value).
    #[arg(long = "spec")]
    spec: Option<PathBuf>,
    /// Output directory for results and the resolved configuration.
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Output format for the results table.
    #[arg(long, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,
    /// Override the number of Monte Carlo trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (affects speed only, never results).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Average beamforming gain versus antenna count (MISO).
    Beamforming(RunArgs),
    /// Achievable rate versus SNR (MIMO rank-K precoding).
    Rate(RunArgs),
    /// Differential quantization: gain versus update index (temporal
    /// channel) or versus antenna count (spatial channel).
    Tespa {
        #[command(flatten)]
        run: RunArgs,
        /// Also write a JSON-lines session trace of one trial.
        #[arg(long)]
        trace: Option<u64>,
    },
    /// Design a max-min-distance codebook and write it as JSON.
    DesignCodebook {
        #[arg(long, default_value_t = 4)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        words: usize,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump a convolutional code's transition table as JSON.
    DumpTrellis {
        #[arg(long, default_value_t = 8)]
        states: usize,
        #[arg(long = "input-bits", default_value_t = 2)]
        input_bits: u32,
        /// Output file (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Beamforming(args) => {
            let cfg = load_config(&args)?;
            let rows = run_beamforming_experiment(&cfg.beamforming_spec()?)?;
            write_outputs(&args, &cfg, ExperimentKind::Beamforming, &rows)
        }
        Command::Rate(args) => {
            let cfg = load_config(&args)?;
            let rows = run_rate_experiment(&cfg.rate_spec()?)?;
            write_outputs(&args, &cfg, ExperimentKind::Rate, &rows)
        }
        Command::Tespa { run: args, trace } => {
            let cfg = load_config(&args)?;
            let spec = cfg.tespa_spec()?;
            let rows = run_tespa_experiment(&spec)?;
            write_outputs(&args, &cfg, ExperimentKind::Tespa, &rows)?;
            if let Some(trial) = trace {
                let temporal = match &spec {
                    TespaSpec::Temporal(t) => t,
                    TespaSpec::Spatial(_) => {
                        return Err(Error::config(
                            "session traces exist for the temporal experiment only",
                        ))
                    }
                };
                let trace_rows = harness::tespa_trace(temporal, trial)?;
                let path = args.out.join("trace.jsonl");
                let mut text = String::new();
                for row in &trace_rows {
                    text.push_str(&serde_json::to_string(row).expect("trace row serializes"));
                    text.push('\n');
                }
                std::fs::write(&path, text)?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::DesignCodebook { dim, words, rank, seed, out } => {
            let cb = Codebook::design_ed(dim, words, rank, seed)?;
            let text = cb.to_json();
            eprintln!(
                "min pairwise distance: {:.6} (squared {:.6})",
                cb.min_distance_sq().sqrt(),
                cb.min_distance_sq()
            );
            write_or_print(out.as_deref(), &text)
        }
        Command::DumpTrellis { states, input_bits, out } => {
            let code = ConvCode::ungerboeck(states, input_bits)?;
            let text = serde_json::to_string_pretty(&code.transition_rows())
                .expect("rows serialize");
            write_or_print(out.as_deref(), &text)
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.spec {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.trials {
        cfg.trials = Some(t);
    }
    if let Some(s) = args.seed {
        cfg.seed = Some(s);
    }
    if let Some(n) = args.threads {
        cfg.threads = Some(n);
    }
    Ok(cfg)
}

fn write_outputs(
    args: &RunArgs,
    cfg: &ExperimentConfig,
    kind: ExperimentKind,
    rows: &[ResultRow],
) -> Result<()> {
    let format = match args.format.as_str() {
        "json" => OutputFormat::Json,
        _ => OutputFormat::Csv,
    };
    std::fs::create_dir_all(&args.out)?;
    let results_path = args.out.join(match format {
        OutputFormat::Csv => "results.csv",
        OutputFormat::Json => "results.json",
    });
    emit_results(rows, format, &results_path)?;
    // The resolved configuration makes the run reproducible on its own.
    let resolved = cfg.resolved(kind)?;
    std::fs::write(args.out.join("config.toml"), resolved.to_toml())?;
    println!("wrote {} ({} rows)", results_path.display(), rows.len());
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            println!("wrote {}", p.display());
            Ok(())
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

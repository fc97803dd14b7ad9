mod commands;
mod http;

use std::path::PathBuf;
use std::process::ExitCode;

use a2c_core::coex::RateLevel;
use a2c_core::metrics::ReportFormat;
use a2c_core::pipeline::Mode;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "a2c", version, about = "Rejector / classifier / expert / collaborative-exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; defaults to `output.dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the seed this command consumes (partition, training or draws).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Reuse an existing output directory and overwrite its files.
    #[arg(long)]
    pub force: bool,
}

fn parse_rate(s: &str) -> Result<RateLevel, String> {
    s.parse().map_err(|e: a2c_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: a2c_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: a2c_core::Error| e.to_string())
}

#[derive(Subcommand)]
enum Command {
    /// Split the dataset into groups A/B/C and A into train/test.
    Partition(Common),
    /// Fit and calibrate the rejector on A-train.
    TrainRejector(Common),
    /// Train the classifier on A-train.
    TrainClassifier(Common),
    /// Known-vs-unknown accuracy of the saved rejector.
    EvalRejector(Common),
    /// Micro-F1 of the saved classifier on A-test and on the full evaluation set.
    EvalClassifier(Common),
    /// Route the evaluation set through one pipeline mode.
    RunMode {
        #[command(flatten)]
        common: Common,
        /// automation, deferral or collaborative.
        #[arg(long, value_parser = parse_mode)]
        mode: Mode,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
        tier: u8,
        /// none, 1, 2, 3 or 4.
        #[arg(long, default_value = "4", value_parser = parse_rate)]
        rate: RateLevel,
    },
    /// Every tier × rate cell, written as grid.csv and grid.md.
    Grid(Common),
    /// Persona/collaborator dialogues on escalated group-C samples.
    CoexPersona {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        tier: u8,
        /// jordan, alex or john; defaults to `persona.name`.
        #[arg(long)]
        persona: Option<String>,
        /// Offline dry run: a scripted analyst that answers with this
        /// decision (normal, intrusion, caution) or never decides (none).
        #[arg(long)]
        stub_decision: Option<String>,
    },
    /// Render a saved grid.json or run.json.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// csv or markdown.
        #[arg(long, default_value = "markdown", value_parser = parse_format)]
        format: ReportFormat,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Write a synthetic KDD-format file with the 10% subset's class mix.
    SynthKdd {
        #[arg(long)]
        out: PathBuf,
        /// Fraction of the 10% subset's per-class counts.
        #[arg(long, default_value_t = 0.05)]
        scale: f64,
        #[arg(long, default_value_t = 30)]
        min_per_class: usize,
        #[arg(long, default_value_t = 1500)]
        max_per_class: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Partition(c) => commands::partition(&c),
        Command::TrainRejector(c) => commands::train_rejector(&c),
        Command::TrainClassifier(c) => commands::train_classifier(&c),
        Command::EvalRejector(c) => commands::eval_rejector(&c),
        Command::EvalClassifier(c) => commands::eval_classifier(&c),
        Command::RunMode { common, mode, tier, rate } => commands::run_mode(&common, mode, tier, rate),
        Command::Grid(c) => commands::grid(&c),
        Command::CoexPersona {
            common,
            tier,
            persona,
            stub_decision,
        } => commands::coex_persona(&common, tier, persona.as_deref(), stub_decision.as_deref()),
        Command::Report { input, format, out, force } => commands::report(&input, format, out.as_deref(), force),
        Command::SynthKdd {
            out,
            scale,
            min_per_class,
            max_per_class,
            seed,
            force,
        } => commands::synth_kdd(&out, scale, min_per_class, max_per_class, seed, force),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::FAILURE
        }
    }
}

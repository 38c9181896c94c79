mod artifact;
mod commands;
mod config;

use clap::{Parser, Subcommand};
use commands::Ctx;
use config::RunConfig;
use mrnet_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Train and evaluate multi-task product embeddings.
#[derive(Parser)]
#[command(name = "mrnet", version, about)]
struct Cli {
    /// TOML run configuration
    #[arg(long, global = true, default_value = "mrnet.toml")]
    config: PathBuf,
    /// override the config seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// override the config output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// suppress progress output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic product catalog and its task registry
    GenCatalog,
    /// Train skip-gram word vectors on catalog titles
    TrainWord2vec,
    /// Train the multi-task title encoder
    TrainMrnet,
    /// Encode every catalog product into an embedding file
    Embed,
    /// Train the group-agnostic sparse autoencoder
    TrainAgnostic,
    /// Project embeddings into the group-agnostic space
    ProjectAgnostic,
    /// Train the cross-language multimodal autoencoder
    TrainCrosslang,
    /// Project second-region embeddings into the first region's space
    ProjectCrosslang,
    /// Print the nearest neighbors of a product
    Knn {
        /// product id to query
        id: String,
        /// number of neighbors
        #[arg(short, default_value_t = 9)]
        k: usize,
    },
    /// Cross-validated downstream evaluation against the TF-IDF baseline
    Eval,
    /// Split the catalog into train and low-overlap unseen test sets
    UnseenSplit,
    /// Feature-importance overlap analysis
    Interpret {
        /// class task to analyze (defaults to the first one)
        #[arg(long)]
        task: Option<String>,
    },
    /// Finite-difference check of the encoder and head gradients
    Gradcheck,
}

fn run(cli: Cli) -> mrnet_core::Result<()> {
    let (mut cfg, config_bytes) = match RunConfig::load(&cli.config) {
        Ok(v) => v,
        // gradcheck is self-contained, so it runs on defaults
        Err(_) if matches!(cli.command, Command::Gradcheck) && !cli.config.exists() => {
            (RunConfig::default(), Vec::new())
        }
        Err(e) => return Err(e),
    };
    if let Some(out) = cli.out {
        cfg.paths.out_dir = Some(out);
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(1);
    let ctx = Ctx {
        config_sha256: artifact::config_hash(&config_bytes),
        cfg,
        seed,
        quiet: cli.quiet,
    };
    match &cli.command {
        Command::GenCatalog => commands::gen_catalog(&ctx),
        Command::TrainWord2vec => commands::train_w2v(&ctx),
        Command::TrainMrnet => commands::train_mrnet(&ctx),
        Command::Embed => commands::embed(&ctx),
        Command::TrainAgnostic => commands::train_agnostic(&ctx),
        Command::ProjectAgnostic => commands::project_agnostic(&ctx),
        Command::TrainCrosslang => commands::train_crosslang(&ctx),
        Command::ProjectCrosslang => commands::project_crosslang(&ctx),
        Command::Knn { id, k } => commands::knn_cmd(&ctx, id, *k),
        Command::Eval => commands::eval(&ctx),
        Command::UnseenSplit => commands::unseen_split_cmd(&ctx),
        Command::Interpret { task } => commands::interpret(&ctx, task.as_deref()),
        Command::Gradcheck => commands::gradcheck(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own usage/help; help and version are success
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind) = match &e {
                Error::Config(_) => (1, "config"),
                Error::Data(_) | Error::Shape(_) | Error::Io(_) => (2, "data"),
                Error::Numeric(_) => (3, "numeric"),
            };
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error kind={kind} exit={code} reason={msg}");
            ExitCode::from(code)
        }
    }
}

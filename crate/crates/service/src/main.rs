use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use persona_core::{load_corpus, ChatTurn, Role, Theme};
use persona_service::{ProviderMode, ServiceConfig};

#[derive(Parser)]
#[command(name = "persona", version, about = "Grounded persona service and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a JSONL story corpus.
    Ingest {
        corpus: PathBuf,
        /// Print per-theme record counts.
        #[arg(long)]
        stats: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// One grounded exchange without the HTTP layer.
    Ask {
        #[arg(long)]
        theme: Theme,
        #[arg(long, value_parser = non_blank)]
        question: String,
        /// Use the deterministic offline provider.
        #[arg(long)]
        stub: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "Alex")]
        name: String,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Rank corpus passages for a query within a theme.
    Search {
        theme: Theme,
        query: String,
        #[arg(short, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value = "data/corpus.jsonl")]
        corpus: PathBuf,
    },
    /// Draft candidate ability entries for a theme from retrieved passages.
    GenerateAbilities {
        #[arg(long)]
        theme: Theme,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stub: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(clap::Args)]
struct DataArgs {
    /// Service config supplying data paths and the provider.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding corpus.jsonl, abilities.jsonl and questions.jsonl.
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

fn non_blank(s: &str) -> Result<String, String> {
    if s.trim().is_empty() {
        Err("must not be empty".into())
    } else {
        Ok(s.to_string())
    }
}

impl DataArgs {
    fn config(&self, stub: bool, seed: u64) -> anyhow::Result<ServiceConfig> {
        let mut config = match &self.config {
            Some(path) => ServiceConfig::load(path)?,
            None if stub => ServiceConfig::stub(&self.data_dir, self.data_dir.join("store"), seed),
            None => bail!("a remote provider needs --config; pass --stub to run offline"),
        };
        if stub {
            config.provider = ProviderMode::Stub;
            config.stub_seed = seed;
        }
        Ok(config)
    }
}

fn ingest(corpus: &Path, stats: bool) -> anyhow::Result<()> {
    let corpus = load_corpus(corpus).with_context(|| format!("{}", corpus.display()))?;
    println!("records: {}", corpus.len());
    if stats {
        let counts = corpus.stats();
        for theme in Theme::ALL {
            println!("{theme}: {}", counts.get(&theme).copied().unwrap_or(0));
        }
    }
    Ok(())
}

fn ask(theme: Theme, question: &str, name: &str, config: &ServiceConfig) -> anyhow::Result<()> {
    let engine = config.build_engine()?;
    let system = format!(
        "You are {}. You live with Down syndrome and answer from your own experience of {}.",
        name.trim(),
        theme.as_str().to_lowercase()
    );
    let context = [
        ChatTurn::new(Role::System, system).map_err(anyhow::Error::msg)?,
        ChatTurn::user(question).map_err(anyhow::Error::msg)?,
    ];
    let outcome = engine.chat_stateless(&context, Some(theme))?;
    for p in &outcome.grounding {
        eprintln!("grounding: {}", p.marker());
    }
    println!("{}", outcome.turn.content);
    Ok(())
}

fn search(theme: Theme, query: &str, k: usize, corpus: &Path) -> anyhow::Result<()> {
    let corpus = load_corpus(corpus).with_context(|| format!("{}", corpus.display()))?;
    let index = persona_core::RetrievalIndex::build(persona_core::passages_from_corpus(&corpus))?;
    for (p, score) in index.retrieve(query, theme, k)? {
        let snippet: String = p.text.chars().take(80).collect();
        println!("{}\t{score:.6}\t{}\t{snippet}", p.passage_id, p.record_id);
    }
    Ok(())
}

fn generate(theme: Theme, out: &Path, config: &ServiceConfig) -> anyhow::Result<()> {
    let engine = config.build_engine()?;
    let report = engine.generate_abilities(theme)?;
    for (name, reason) in &report.rejected {
        eprintln!("rejected {name}: {reason}");
    }
    let catalog = persona_core::AbilityCatalog::new(report.accepted, persona_core::CatalogSource::Generated)?;
    catalog.save(out)?;
    println!(
        "wrote {} candidate entries to {} (review before use)",
        catalog.entries().len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { corpus, stats } => ingest(&corpus, stats),
        Command::Serve { config } => {
            let config = ServiceConfig::load(&config)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(persona_service::serve(config))
        }
        Command::Ask {
            theme,
            question,
            stub,
            seed,
            name,
            data,
        } => ask(theme, &question, &name, &data.config(stub, seed)?),
        Command::Search { theme, query, k, corpus } => search(theme, &query, k, &corpus),
        Command::GenerateAbilities {
            theme,
            out,
            stub,
            seed,
            data,
        } => generate(theme, &out, &data.config(stub, seed)?),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

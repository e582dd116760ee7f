//! `sfaa`: run the transcript anonymization pipeline stage by stage.
//!
//! Exit codes: 0 success, 1 configuration, 2 I/O, 3 language model,
//! 4 project state, 5 validation.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use sfaa_core::gencorpus::GenSpec;
use sfaa_core::pipeline::{artifacts, Backends, Pipeline};
use sfaa_core::{io, Error, ErrorFamily};
use sfaa_review::{Project, ServeError};

#[derive(Parser, Debug)]
#[command(name = "sfaa", version, about = "Detect, classify and anonymize identifiers in interview transcripts")]
struct Cli {
    /// Pipeline configuration (JSON). Relative paths inside it resolve
    /// against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Detection backends to run, comma-separated: rules, dictionary, llm.
    #[arg(long, global = true)]
    backends: Option<String>,

    /// Documents processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Project (output) directory; overrides `paths.output`.
    #[arg(long, global = true)]
    project: Option<PathBuf>,

    /// Seed for corpus generation; overrides `seeds.corpus`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Accept detections that have no verdict.
    #[arg(long, global = true)]
    auto_accept: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read the configured corpus into the project directory.
    Ingest,
    /// Run the detection backends and merge their output.
    Detect,
    /// Assign risk classes to the detections file.
    Classify,
    /// Plan anonymization actions from classified detections and verdicts.
    Plan,
    /// Apply the written plan.
    Apply,
    /// Ingest, detect, classify, plan and apply with every detection accepted.
    Anonymize,
    /// Serve the review API for a project.
    Review {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: SocketAddr,
        /// Static UI assets served at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
    },
    /// Score detections against the reference annotations.
    Evaluate,
    /// Print the latest evaluation report.
    Report,
    /// Generate a synthetic corpus with planted identifiers.
    GenCorpus {
        /// Generation spec (JSON); flags below override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        documents: Option<usize>,
        #[arg(long)]
        plants_per_doc: Option<usize>,
        /// Comma-separated subtypes to plant.
        #[arg(long)]
        subtypes: Option<String>,
    },
}

fn load_pipeline(cli: &Cli) -> sfaa_core::Result<Pipeline> {
    let snapshot = cli.project.as_ref().map(|p| p.join(artifacts::SNAPSHOT));
    let mut p = match (&cli.config, &snapshot) {
        (Some(cfg), _) => Pipeline::load(Some(cfg))?,
        (None, Some(s)) if s.exists() => Pipeline::from_snapshot(cli.project.as_deref().unwrap_or(Path::new(".")))?,
        (None, _) => Pipeline::load(None)?,
    };
    if let Some(dir) = &cli.project {
        p = p.with_output(dir);
    }
    if let Some(b) = &cli.backends {
        p = p.with_backends(Backends::parse_csv(b)?);
    }
    Ok(p.with_jobs(cli.jobs))
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let pipeline = load_pipeline(&cli)?;
    match &cli.command {
        Command::Ingest => {
            let n = pipeline.run_ingest()?;
            print_json(&serde_json::json!({ "documents": n }))
        }
        Command::Detect => {
            let d = pipeline.run_detect()?;
            let per_backend: std::collections::BTreeMap<_, _> = d.by_backend.iter().map(|(k, v)| (k, v.len())).collect();
            print_json(&serde_json::json!({
                "detections": d.merged.len(),
                "per_backend": per_backend,
                "llm_requests": d.llm_requests,
                "llm_dropped": d.dropped.len(),
            }))
        }
        Command::Classify => {
            let c = pipeline.run_classify()?;
            print_json(&serde_json::json!({ "classified": c.len() }))
        }
        Command::Plan => {
            let (plan, _) = pipeline.run_plan(cli.auto_accept)?;
            print_json(&serde_json::json!({ "actions": plan.actions.len(), "events": plan.events.len() }))
        }
        Command::Apply => {
            let n = pipeline.run_apply()?;
            print_json(&serde_json::json!({ "documents": n }))
        }
        Command::Anonymize => {
            let summary = pipeline.run_anonymize()?;
            print_json(&summary)?;
            if !summary.residuals.is_empty() {
                return Err(Error::MalformedInput {
                    line: 0,
                    message: format!("{} high-risk surfaces remain after anonymization", summary.residuals.len()),
                }
                .into());
            }
            Ok(())
        }
        Command::Review { bind, assets } => {
            let project = Project::open(pipeline)?;
            let rt = tokio::runtime::Runtime::new().context("starting the async runtime")?;
            rt.block_on(sfaa_review::serve(project, *bind, assets.clone()))?;
            Ok(())
        }
        Command::Evaluate => {
            let report = pipeline.run_evaluate()?;
            print!("{}", report.render_text());
            Ok(())
        }
        Command::Report => {
            print!("{}", pipeline.run_report()?);
            Ok(())
        }
        Command::GenCorpus {
            spec,
            documents,
            plants_per_doc,
            subtypes,
        } => {
            let mut gen: GenSpec = match spec {
                Some(p) => io::read_json(p).map_err(|e| Error::Spec(e.to_string()))?,
                None => GenSpec::default(),
            };
            if let Some(n) = documents {
                gen.documents = *n;
            }
            if let Some(n) = plants_per_doc {
                gen.plants_per_doc = *n;
            }
            if let Some(s) = subtypes {
                gen.subtypes = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
            }
            let seed = cli.seed.unwrap_or(pipeline.config.seeds.corpus);
            let g = pipeline.run_gen_corpus(&gen, seed)?;
            print_json(&serde_json::json!({
                "seed": seed,
                "documents": g.corpus.len(),
                "gold": g.gold.len(),
                "output": pipeline.output_dir(),
            }))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Error>() {
        return e.exit_code() as u8;
    }
    match err.downcast_ref::<ServeError>() {
        Some(ServeError::Project(e)) => e.exit_code() as u8,
        Some(_) => ErrorFamily::Io as u8,
        None => ErrorFamily::Io as u8,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { ErrorFamily::Config as u8 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};

use triage_forge::ehr::{load_store, DataPlan, DataRequest, ItemKind, Recency};
use triage_forge::evaluation::aggregate;
use triage_forge::gateway::{Gateway, ModelSettings, RemoteConfig, RemoteHttpBackend, ScriptedBackend};
use triage_forge::harness::{check_transcripts, load_transcripts, run_batch, to_pretty_json, RunConfig};
use triage_forge::jsonl::{read_jsonl, write_jsonl};
use triage_forge::service::{load_reviews, serve, ServiceState, REVIEWS_DIR};
use triage_forge::triage::TriageAssessment;
use triage_forge::verifier::{load_corpus, verify_urgency};
use triage_forge::vignette::{
    build_vignettes, classify_records, ingest, select_dataset, write_vignettes, BalanceConfig, ClassifiedRecord,
    DatasetSelection, DateWindow, EncounterRecord, IngestConfig, DEFAULT_MAX_PER_CATEGORY, DEFAULT_MIN_PER_CATEGORY,
};

#[derive(Parser)]
#[command(name = "forge", version, about = "Simulated triage encounters and clinician review tooling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate raw encounter records and drop malformed or out-of-window lines.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, requires = "to")]
        from: Option<NaiveDate>,
        #[arg(long, requires = "from")]
        to: Option<NaiveDate>,
    },
    /// Label visit type and symptom category for each record.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Draw a per-category balanced dataset from classified records.
    Sample {
        #[arg(long)]
        classified: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MIN_PER_CATEGORY)]
        min: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_PER_CATEGORY)]
        max: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write one vignette JSON per selected record.
    Vignettes {
        #[arg(long)]
        classified: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Inspect a health-record store.
    #[command(subcommand)]
    Ehr(EhrCommand),
    /// Check an assessment's urgency against a guideline corpus.
    Verify {
        #[arg(long)]
        assessment: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Defaults to `<assessment stem>.verifier.json` beside the assessment.
        #[arg(long)]
        output: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Run a batch of simulated encounters.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Serve encounters and reviews over HTTP.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Scan persisted transcripts for structural problems.
    CheckTranscripts { dir: PathBuf },
    /// Aggregate clinician reviews against persisted encounters.
    Report {
        /// Run output directory holding `encounters/`.
        #[arg(long)]
        transcripts: PathBuf,
        /// Defaults to `<transcripts>/reviews`.
        #[arg(long)]
        reviews: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Subcommand)]
enum EhrCommand {
    /// Load a store and print counts and rejected lines.
    Load { path: PathBuf },
    /// Query one patient's items as of a date.
    Query {
        path: PathBuf,
        #[arg(long)]
        patient: String,
        #[arg(long)]
        as_of: NaiveDate,
        #[arg(long)]
        kind: String,
        #[arg(long, default_value = "")]
        name: String,
        /// most_recent, all, or since:YYYY-MM-DD
        #[arg(long, default_value = "most_recent")]
        recency: String,
    },
}

#[derive(Args)]
struct BackendArgs {
    /// Scripted backend file (JSON list of matcher/response entries).
    #[arg(long, conflicts_with = "remote_url")]
    script: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible chat endpoint.
    #[arg(long)]
    remote_url: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    token_env: Option<String>,
    #[arg(long)]
    model: Option<String>,
}

impl BackendArgs {
    fn gateway(&self) -> Result<Gateway> {
        match (&self.script, &self.remote_url) {
            (Some(p), _) => Ok(Gateway::new(
                ScriptedBackend::from_file(p).with_context(|| format!("loading script {}", p.display()))?,
            )),
            (None, Some(url)) => {
                let mut cfg = RemoteConfig::new(url.clone());
                cfg.token_env = self.token_env.clone();
                Ok(Gateway::new(RemoteHttpBackend::new(cfg)))
            }
            (None, None) => bail!("one of --script or --remote-url is required"),
        }
    }

    fn settings(&self) -> ModelSettings {
        let mut s = ModelSettings::default();
        if let Some(m) = &self.model {
            s.model_id = m.clone();
        }
        s
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_classified(path: &Path) -> Result<Vec<ClassifiedRecord>> {
    let out = read_jsonl::<ClassifiedRecord, _>(path, |_| Ok(()))?;
    for r in &out.rejects {
        eprintln!("skipped line {}: {}", r.line, r.reason);
    }
    Ok(out.items)
}

fn parse_recency(s: &str) -> Result<Recency> {
    Ok(match s {
        "most_recent" => Recency::MostRecent,
        "all" => Recency::All,
        _ => match s.strip_prefix("since:") {
            Some(d) => Recency::Since(d.parse().context("since date")?),
            None => bail!("unknown recency {s:?}"),
        },
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { input, output, from, to } => {
            let window = from.zip(to).map(|(start, end)| DateWindow { start, end });
            let out = ingest(&input, &IngestConfig { window })?;
            write_jsonl(&output, &out.records)?;
            for r in &out.rejects {
                eprintln!("rejected line {}: {}", r.line, r.reason);
            }
            println!("{} records kept, {} rejected", out.records.len(), out.rejects.len());
        }
        Command::Classify {
            input,
            output,
            parallelism,
            backend,
        } => {
            let records = read_jsonl::<EncounterRecord, _>(&input, |_| Ok(()))?.items;
            let classified = classify_records(&backend.gateway()?, &backend.settings(), &records, parallelism)?;
            write_jsonl(&output, &classified)?;
            println!("{} records classified", classified.len());
        }
        Command::Sample {
            classified,
            output,
            min,
            max,
            seed,
        } => {
            let classified = read_classified(&classified)?;
            let selection = select_dataset(&classified, BalanceConfig { min_n: min, max_n: max, seed })?;
            std::fs::write(&output, to_pretty_json(&selection))?;
            for w in &selection.manifest.warnings {
                eprintln!("warning: {w}");
            }
            for (cat, n) in &selection.manifest.counts {
                println!("{:<18}{n:>4}", cat.label());
            }
            println!("{:<18}{:>4}", "Total", selection.manifest.total);
        }
        Command::Vignettes {
            classified,
            selection,
            output,
        } => {
            let classified = read_classified(&classified)?;
            let selection: DatasetSelection = read_json(&selection)?;
            let vignettes = build_vignettes(&classified, &selection)?;
            write_vignettes(&output, &vignettes)?;
            println!("{} vignettes written to {}", vignettes.len(), output.display());
        }
        Command::Ehr(EhrCommand::Load { path }) => {
            let loaded = load_store(&path)?;
            for r in &loaded.rejects {
                eprintln!("rejected line {}: {}", r.line, r.reason);
            }
            println!(
                "{} items for {} patients, {} rejected",
                loaded.store.len(),
                loaded.store.patient_count(),
                loaded.rejects.len()
            );
        }
        Command::Ehr(EhrCommand::Query {
            path,
            patient,
            as_of,
            kind,
            name,
            recency,
        }) => {
            let store = load_store(&path)?.store;
            let item_kind: ItemKind =
                serde_json::from_value(serde_json::Value::String(kind.clone())).with_context(|| format!("item kind {kind:?}"))?;
            let plan = DataPlan {
                requested: vec![DataRequest {
                    item_kind,
                    name_pattern: name,
                    recency: parse_recency(&recency)?,
                }],
                rationale: String::new(),
            };
            for item in store.query(&patient, &plan, as_of) {
                println!("{}", serde_json::to_string(&item)?);
            }
        }
        Command::Verify {
            assessment,
            corpus,
            output,
            backend,
        } => {
            let a: TriageAssessment = read_json(&assessment)?;
            let corpus = load_corpus(&corpus)?;
            let outcome = verify_urgency(&backend.gateway()?, &backend.settings(), &a, &corpus)?;
            let output = output.unwrap_or_else(|| {
                let stem = assessment.file_stem().unwrap_or_default().to_string_lossy();
                assessment.with_file_name(format!("{stem}.verifier.json"))
            });
            std::fs::write(&output, to_pretty_json(&outcome))?;
            println!("{}", outcome.explanation);
        }
        Command::Run { config, output_dir } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let report = run_batch(&cfg)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for e in &report.encounters {
                println!("{} {} {:?}", e.vignette_id, e.encounter_id, e.termination);
            }
            let counts: Vec<String> = report.counts.iter().map(|(k, v)| format!("{k:?}={v}")).collect();
            println!("{} encounters in {} ms: {}", report.total, report.wall_time_ms, counts.join(" "));
        }
        Command::Serve { port, host, data } => {
            let state = Arc::new(ServiceState::load(&data)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port))
                    .await
                    .with_context(|| format!("binding {host}:{port}"))?;
                eprintln!(
                    "serving {} encounters on http://{}",
                    state.encounter_count(),
                    listener.local_addr()?
                );
                serve(listener, state, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                anyhow::Ok(())
            })?;
        }
        Command::CheckTranscripts { dir } => {
            let (n, issues) = check_transcripts(&dir)?;
            for i in &issues {
                println!("{}: {}", i.path.display(), i.problem);
            }
            println!("{n} transcripts checked, {} problems", issues.len());
            if !issues.is_empty() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report {
            transcripts,
            reviews,
            json,
        } => {
            let outcomes: Vec<_> = load_transcripts(&transcripts)?.iter().map(|t| t.outcome()).collect();
            let dir = reviews.unwrap_or_else(|| transcripts.join(REVIEWS_DIR));
            let all = load_reviews(&dir, None)?;
            let report = aggregate(&all, &outcomes)?;
            if json {
                print!("{}", to_pretty_json(&report));
            } else {
                print!("{}", report.render_table());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

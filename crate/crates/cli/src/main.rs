//! `kgprobe`: run the consistency-testing pipeline stage by stage.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kgprobe_core::analytics::{format_percent, Scope};
use kgprobe_core::pipeline::{Pipeline, PipelineError, StageOptions};
use kgprobe_core::TemplateId;

#[derive(Debug, Parser)]
#[command(
    name = "kgprobe",
    version,
    about = "Knowledge-graph consistency testing for question-answering models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the ground-truth graph snapshot.
    Ingest(Common),
    /// Sample leaves and extract their knowledge paths.
    Paths(Common),
    /// Generate test plans for every ancestor pair.
    Gen(Common),
    /// Execute the plans against each SUT, resuming stored transcripts.
    Run(Common),
    /// Detect metamorphic and ontological errors.
    Oracle(Common),
    /// Compute knowledge gaps and coverage.
    Coverage(Common),
    /// Cross-validate the weighted ensemble.
    Mitigate(Common),
    /// Write CSV and line-delimited JSON reports.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Pipeline configuration (TOML).
    #[arg(long, short, default_value = "kgprobe.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict to one domain.
    #[arg(long)]
    domain: Option<String>,
    /// Restrict to these SUTs (repeatable).
    #[arg(long)]
    sut: Vec<String>,
    /// Templates evaluated by `mitigate` (repeatable).
    #[arg(long)]
    template: Vec<u8>,
    /// Output directory for `report`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of folds for `mitigate`.
    #[arg(long)]
    k: Option<usize>,
    /// Response cache directory for `run`.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Answer network SUTs from the cache only.
    #[arg(long)]
    offline: bool,
}

impl Common {
    fn options(&self) -> StageOptions {
        StageOptions {
            seed: self.seed,
            suts: self.sut.clone(),
            templates: self.template.iter().copied().map(TemplateId).collect(),
            k: self.k,
            out: self.out.clone(),
            cache_dir: self.cache_dir.clone(),
            offline: self.offline,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors are config errors; clap's own code 2 means a missing artifact here.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(command: &Command) -> Result<(), PipelineError> {
    let common = match command {
        Command::Ingest(c)
        | Command::Paths(c)
        | Command::Gen(c)
        | Command::Run(c)
        | Command::Oracle(c)
        | Command::Coverage(c)
        | Command::Mitigate(c)
        | Command::Report(c) => c,
    };
    let pipeline = Pipeline::load(&common.config)?;
    let opts = common.options();
    if opts.out.is_some() && pipeline.domains(common.domain.as_deref())?.len() > 1 {
        return Err(PipelineError::Config(
            "--out needs --domain when several domains are configured".into(),
        ));
    }
    for domain in pipeline.domains(common.domain.as_deref())? {
        let d = &domain.name;
        match command {
            Command::Ingest(_) => {
                let (entities, edges) = pipeline.ingest(domain)?;
                println!("{d}: {entities} entities, {edges} edges");
            }
            Command::Paths(_) => {
                let n = pipeline.paths(domain, &opts)?;
                println!("{d}: {n} paths");
            }
            Command::Gen(_) => {
                let c = pipeline.gen(domain)?;
                println!(
                    "{d}: {} relations, {} atomic, {} sequential-intra, {} sequential-inter, {} query slots",
                    c.relations, c.atomic, c.sequential_intra, c.sequential_inter, c.query_slots
                );
            }
            Command::Run(_) => {
                for (sut, s) in pipeline.run(domain, &opts)? {
                    println!(
                        "{d}/{sut}: {} conversations, {} turns, {} cache hits, {} resumed, {} without response",
                        s.conversations, s.turns, s.cache_hits, s.resumed, s.exhausted
                    );
                }
            }
            Command::Oracle(_) => {
                for o in pipeline.oracle(domain, &opts)? {
                    let t = o.outcome.total();
                    println!(
                        "{d}/{}: {}/{} errors ({}%), coverage count {}",
                        o.sut,
                        t.errors,
                        t.valid,
                        format_percent(t.errors, t.valid),
                        o.outcome.coverage_count
                    );
                }
            }
            Command::Coverage(_) => {
                for c in pipeline.coverage(domain, &opts)? {
                    println!(
                        "{d}/{}: gap t1 {}, gap t2 {}, both {}, coverage {}/{} ({}%)",
                        c.sut,
                        c.gap(TemplateId::ORIGINAL),
                        c.gap(TemplateId::MUTATED),
                        c.intersection.len(),
                        c.overall_coverage,
                        c.relations,
                        format_percent(c.overall_coverage, c.relations)
                    );
                }
            }
            Command::Mitigate(_) => {
                let m = pipeline.mitigate(domain, &opts)?;
                if let Some(g) = m.total(Scope::All) {
                    println!(
                        "{d}: {} folds over {} relations; weighted gap {}, majority {}, mean SUT {:.2}",
                        m.k, m.eligible, g.weighted, g.majority, g.mean_sut
                    );
                }
            }
            Command::Report(_) => {
                for p in pipeline.report(domain, &opts)? {
                    println!("{}", p.display());
                }
            }
        }
    }
    Ok(())
}

//! Stage-by-stage orchestration over on-disk artifacts.
//!
//! Each stage reads its predecessors' files under
//! `<workdir>/<domain>/` and writes its own, so any stage can be re-run
//! alone. Layout:
//!
//! ```text
//! graph.kg            ingest
//! paths.tsv           paths
//! plans.jsonl         gen
//! unseen.jsonl        gen (template-3 queries)
//! runs/<sut>/*.jsonl  run
//! oracle/<sut>/       oracle (errors.jsonl, outcome.json)
//! coverage/<sut>.json coverage
//! mitigation.json     mitigate
//! report/             report
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, coverage_report, error_key, error_overlap, kfold_mitigation, CoverageReport, MitigationReport, ReportInput,
    SutAnswers, SutOutcome,
};
use crate::fixtures;
use crate::ingest::{
    self, load_snapshot, save_snapshot, IngestError, Provenance, RelationSpec, SparqlClient, SparqlConfig,
};
use crate::kg::{Entity, KnowledgeGraph, KnowledgePath, DEFAULT_DEPTH};
use crate::oracles::{evaluate_sut, ErrorRecord};
use crate::retry::RetryPolicy;
use crate::sut::{
    HttpAdapterConfig, HttpChatAdapter, ResponseCache, RunError, RunStats, RunStore, Runner, RunnerOptions,
    ScriptedSut, SutAdapter, SutError,
};
use crate::testgen::{
    generate_suite, CheckCounts, Conversation, ConversationKind, Query, TemplateId, TemplateRegistry, TestPlan,
    TestSuite,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing artifact {}: run `{stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("transport exhausted: {0}")]
    Transport(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad artifact {}: {reason}", path.display())]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Graph(#[from] crate::kg::KgError),
    #[error(transparent)]
    TestGen(#[from] crate::testgen::TestGenError),
    #[error(transparent)]
    Oracle(#[from] crate::oracles::OracleError),
    #[error(transparent)]
    Analytics(#[from] analytics::AnalyticsError),
    #[error(transparent)]
    Store(#[from] crate::sut::StoreError),
}

impl PipelineError {
    /// 1 config, 2 missing upstream artifact, 3 transport exhaustion.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::MissingArtifact { .. } => 2,
            Self::Transport(_) | Self::Ingest(IngestError::Unreachable { .. }) => 3,
            _ => 1,
        }
    }
}

impl From<RunError> for PipelineError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Aborted {
                source: SutError::OfflineMiss(_) | SutError::Transport(_) | SutError::Timeout,
                ..
            } => Self::Transport(e.to_string()),
            RunError::Aborted { .. } => Self::Config(e.to_string()),
            RunError::Store(s) => Self::Store(s),
            RunError::Cache(source) => Self::Io {
                path: PathBuf::from("<cache>"),
                source,
            },
        }
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_workdir")]
    pub workdir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Template registry file; the built-in registry when absent.
    #[serde(default)]
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(rename = "domain")]
    pub domains: Vec<DomainConfig>,
    #[serde(default, rename = "sut")]
    pub suts: Vec<SutConfig>,
    #[serde(default)]
    pub mitigation: MitigationConfig,
}

fn default_workdir() -> PathBuf {
    PathBuf::from("work")
}

fn default_parallelism() -> usize {
    4
}

fn default_leaves() -> usize {
    fixtures::PLACES_LEAVES
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub name: String,
    #[serde(default)]
    pub depth: Option<u32>,
    #[serde(default = "default_leaves")]
    pub leaves: usize,
    /// Name of a built-in fixture graph ("places").
    #[serde(default)]
    pub fixture: Option<String>,
    /// Snapshot file to ingest instead of querying an endpoint.
    #[serde(default)]
    pub snapshot: Option<PathBuf>,
    #[serde(default)]
    pub seeds: Vec<SeedEntity>,
    /// Built-in relation specs: "located_in", "part_of", "performer".
    #[serde(default)]
    pub relations: Vec<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedEntity {
    pub id: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SutConfig {
    Http {
        name: String,
        url: String,
        model: String,
        #[serde(default)]
        credential_env: Option<String>,
        #[serde(default = "zero")]
        temperature: Option<f64>,
        #[serde(default = "yes")]
        system_command: bool,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        requests_per_minute: Option<u32>,
    },
    Scripted {
        name: String,
        #[serde(default)]
        seed: u64,
        /// JSON fault spec; truthful when absent.
        #[serde(default)]
        faults: Option<PathBuf>,
        #[serde(default = "yes")]
        system_command: bool,
    },
}

fn zero() -> Option<f64> {
    Some(0.0)
}

fn default_timeout() -> u64 {
    120
}

impl SutConfig {
    pub fn name(&self) -> &str {
        match self {
            Self::Http { name, .. } | Self::Scripted { name, .. } => name,
        }
    }

    fn is_local(&self) -> bool {
        matches!(self, Self::Scripted { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Also generate and run template-3 queries.
    #[serde(default = "yes")]
    pub unseen: bool,
}

fn default_k() -> usize {
    5
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self { k: 5, unseen: true }
    }
}

/// Options the command line may override.
#[derive(Debug, Clone, Default)]
pub struct StageOptions {
    pub seed: Option<u64>,
    pub suts: Vec<String>,
    pub templates: Vec<TemplateId>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub offline: bool,
}

/// Artifact paths for one domain.
#[derive(Debug, Clone)]
pub struct DomainLayout {
    pub root: PathBuf,
}

impl DomainLayout {
    pub fn graph(&self) -> PathBuf {
        self.root.join("graph.kg")
    }
    pub fn paths(&self) -> PathBuf {
        self.root.join("paths.tsv")
    }
    pub fn plans(&self) -> PathBuf {
        self.root.join("plans.jsonl")
    }
    pub fn unseen(&self) -> PathBuf {
        self.root.join("unseen.jsonl")
    }
    pub fn runs(&self) -> PathBuf {
        self.root.join("runs")
    }
    pub fn errors(&self, sut: &str) -> PathBuf {
        self.root.join("oracle").join(sut).join("errors.jsonl")
    }
    pub fn outcome(&self, sut: &str) -> PathBuf {
        self.root.join("oracle").join(sut).join("outcome.json")
    }
    pub fn coverage(&self, sut: &str) -> PathBuf {
        self.root.join("coverage").join(format!("{sut}.json"))
    }
    pub fn mitigation(&self) -> PathBuf {
        self.root.join("mitigation.json")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

pub struct Pipeline {
    pub config: RunConfig,
    base: PathBuf,
}

impl Pipeline {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    /// Parses a config; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: PathBuf) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let p = Self { config, base };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.domains.is_empty() {
            return Err(PipelineError::Config("at least one [[domain]] is required".into()));
        }
        let mut names = BTreeSet::new();
        for d in &c.domains {
            if !names.insert(d.name.as_str()) || !safe_name(&d.name) {
                return Err(PipelineError::Config(format!(
                    "bad or duplicate domain name `{}`",
                    d.name
                )));
            }
            let sources =
                usize::from(d.fixture.is_some()) + usize::from(d.snapshot.is_some()) + usize::from(!d.seeds.is_empty());
            if sources != 1 {
                return Err(PipelineError::Config(format!(
                    "domain `{}` needs exactly one of fixture, snapshot or seeds",
                    d.name
                )));
            }
            if let Some(f) = &d.fixture {
                if f != "places" {
                    return Err(PipelineError::Config(format!("unknown fixture `{f}`")));
                }
            }
            if let Some(s) = &d.snapshot {
                self.existing(s)?;
            }
            for r in &d.relations {
                builtin_spec(r)?;
            }
            if !d.seeds.is_empty() && d.relations.is_empty() {
                return Err(PipelineError::Config(format!(
                    "domain `{}` has seeds but no relations",
                    d.name
                )));
            }
        }
        let mut suts = BTreeSet::new();
        for s in &c.suts {
            if !suts.insert(s.name()) || !safe_name(s.name()) {
                return Err(PipelineError::Config(format!(
                    "bad or duplicate SUT name `{}`",
                    s.name()
                )));
            }
            if let SutConfig::Scripted { faults: Some(f), .. } = s {
                self.existing(f)?;
            }
        }
        if let Some(t) = &c.templates {
            self.existing(t)?;
        }
        if c.mitigation.k == 0 {
            return Err(PipelineError::Config("mitigation.k must be positive".into()));
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base.join(p)
        }
    }

    fn existing(&self, p: &Path) -> Result<PathBuf> {
        let r = self.resolve(p);
        if r.exists() {
            Ok(r)
        } else {
            Err(PipelineError::Config(format!(
                "referenced file {} does not exist",
                r.display()
            )))
        }
    }

    pub fn workdir(&self) -> PathBuf {
        self.resolve(&self.config.workdir)
    }

    /// Domains selected by `filter`, or all of them.
    pub fn domains(&self, filter: Option<&str>) -> Result<Vec<&DomainConfig>> {
        match filter {
            None => Ok(self.config.domains.iter().collect()),
            Some(name) => self
                .config
                .domains
                .iter()
                .find(|d| d.name == name)
                .map(|d| vec![d])
                .ok_or_else(|| PipelineError::Config(format!("no domain named `{name}`"))),
        }
    }

    fn suts(&self, filter: &[String]) -> Result<Vec<&SutConfig>> {
        for f in filter {
            if !self.config.suts.iter().any(|s| s.name() == f) {
                return Err(PipelineError::Config(format!("no SUT named `{f}`")));
            }
        }
        let selected: Vec<&SutConfig> = self
            .config
            .suts
            .iter()
            .filter(|s| filter.is_empty() || filter.iter().any(|f| f == s.name()))
            .collect();
        if selected.is_empty() {
            return Err(PipelineError::Config("at least one [[sut]] is required".into()));
        }
        Ok(selected)
    }

    pub fn layout(&self, domain: &DomainConfig) -> DomainLayout {
        DomainLayout {
            root: self.workdir().join(&domain.name),
        }
    }

    fn registry(&self) -> Result<TemplateRegistry> {
        match &self.config.templates {
            None => Ok(TemplateRegistry::builtin()),
            Some(p) => Ok(TemplateRegistry::load(&self.existing(p)?)?),
        }
    }

    fn seed(&self, opts: &StageOptions) -> u64 {
        opts.seed.unwrap_or(self.config.seed)
    }

    /// Builds the ground-truth graph and stores it as a snapshot.
    pub fn ingest(&self, domain: &DomainConfig) -> Result<(usize, usize)> {
        let layout = self.layout(domain);
        let depth = domain.depth.unwrap_or(DEFAULT_DEPTH);
        let (graph, provenance) = if domain.fixture.is_some() {
            (fixtures::places_fixture(), fixtures::fixture_provenance())
        } else if let Some(s) = &domain.snapshot {
            let snap = load_snapshot(&self.existing(s)?)?;
            (snap.graph, snap.provenance)
        } else {
            let seeds: Vec<Entity> = domain
                .seeds
                .iter()
                .map(|s| Entity::new(s.id.clone(), s.label.clone(), domain.name.clone()))
                .collect();
            let specs = domain
                .relations
                .iter()
                .map(|r| builtin_spec(r))
                .collect::<Result<Vec<_>>>()?;
            let client = SparqlClient::new(SparqlConfig::resolve(domain.endpoint.as_deref()))?;
            let graph = ingest::build_multi(&seeds, &specs, depth, &client, self.config.parallelism)?;
            (graph, Provenance::now(client.endpoint()))
        };
        create_dir(&layout.root)?;
        save_snapshot(&graph, &provenance, &layout.graph())?;
        Ok((graph.entity_count(), graph.edge_count()))
    }

    fn load_graph(&self, layout: &DomainLayout) -> Result<KnowledgeGraph> {
        let path = require(layout.graph(), "ingest")?;
        Ok(load_snapshot(&path)?.graph)
    }

    /// Samples leaves and writes their paths.
    pub fn paths(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<usize> {
        let layout = self.layout(domain);
        let graph = self.load_graph(&layout)?;
        let paths = fixtures::sample_paths(&graph, domain.leaves, self.seed(opts))?;
        let mut text = String::new();
        for p in &paths {
            text.push_str(p.kind());
            for n in p.nodes() {
                text.push('\t');
                text.push_str(n.as_str());
            }
            text.push('\n');
        }
        write_file(&layout.paths(), text.as_bytes())?;
        Ok(paths.len())
    }

    fn load_paths(&self, layout: &DomainLayout, graph: &KnowledgeGraph) -> Result<Vec<KnowledgePath>> {
        let path = require(layout.paths(), "paths")?;
        let text = read_text(&path)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let mut parts = line.split('\t');
            let kind = parts.next().unwrap_or_default();
            let nodes = parts.map(Into::into).collect();
            let p = KnowledgePath::new(nodes, kind)
                .and_then(|p| p.validate(graph).map(|_| p))
                .map_err(|e| PipelineError::Corrupt {
                    path: path.clone(),
                    reason: format!("line {}: {e}", i + 1),
                })?;
            out.push(p);
        }
        Ok(out)
    }

    /// Generates test plans (and template-3 queries when enabled).
    pub fn gen(&self, domain: &DomainConfig) -> Result<CheckCounts> {
        let layout = self.layout(domain);
        let graph = self.load_graph(&layout)?;
        let paths = self.load_paths(&layout, &graph)?;
        let suite = generate_suite(&graph, &paths, &self.registry()?, self.config.mitigation.unseen)?;
        write_jsonl(&layout.plans(), &suite.plans)?;
        write_jsonl(&layout.unseen(), &suite.unseen)?;
        Ok(suite.counts())
    }

    fn load_suite(&self, layout: &DomainLayout) -> Result<TestSuite> {
        let plans: Vec<TestPlan> = read_jsonl(&require(layout.plans(), "gen")?)?;
        let unseen: Vec<Query> = match layout.unseen().exists() {
            true => read_jsonl(&layout.unseen())?,
            false => Vec::new(),
        };
        Ok(TestSuite { plans, unseen })
    }

    fn adapter(&self, sut: &SutConfig, truth: &Arc<KnowledgeGraph>) -> Result<Box<dyn SutAdapter>> {
        Ok(match sut {
            SutConfig::Http {
                name,
                url,
                model,
                credential_env,
                temperature,
                system_command,
                timeout_secs,
                ..
            } => {
                let a = HttpChatAdapter::new(HttpAdapterConfig {
                    name: name.clone(),
                    url: url.clone(),
                    model: model.clone(),
                    credential_env: credential_env.clone(),
                    temperature: *temperature,
                    system_command: *system_command,
                    timeout_secs: *timeout_secs,
                })
                .map_err(|e| PipelineError::Config(e.to_string()))?;
                Box::new(a)
            }
            SutConfig::Scripted {
                name,
                seed,
                faults,
                system_command,
            } => {
                let spec = match faults {
                    None => Default::default(),
                    Some(f) => {
                        let path = self.existing(f)?;
                        serde_json::from_str(&read_text(&path)?)
                            .map_err(|e| PipelineError::Config(format!("fault spec {}: {e}", path.display())))?
                    }
                };
                let s = ScriptedSut::new(name.clone(), truth.clone(), spec, *seed);
                Box::new(if *system_command { s } else { s.without_system_command() })
            }
        })
    }

    /// Runs every planned conversation against the selected SUTs.
    pub fn run(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<Vec<(String, RunStats)>> {
        let selected = self.suts(&opts.suts)?;
        let layout = self.layout(domain);
        let suite = self.load_suite(&layout)?;
        let truth = Arc::new(self.load_graph(&layout)?);
        let conversations: Vec<Conversation> = suite
            .plans
            .iter()
            .flat_map(|p| p.conversations.iter().cloned())
            .chain(suite.unseen.iter().map(|q| Conversation {
                kind: ConversationKind::AtomicUnseen,
                queries: vec![q.clone()],
            }))
            .collect();
        let cache_dir = opts
            .cache_dir
            .clone()
            .or_else(|| self.config.cache_dir.as_ref().map(|c| self.resolve(c)))
            .unwrap_or_else(|| self.workdir().join("cache"));
        let store = RunStore::new(layout.runs());
        let mut out = Vec::new();
        for sut in selected {
            let adapter = self.adapter(sut, &truth)?;
            let options = RunnerOptions {
                retry: RetryPolicy::default(),
                requests_per_minute: match sut {
                    SutConfig::Http {
                        requests_per_minute, ..
                    } => *requests_per_minute,
                    SutConfig::Scripted { .. } => None,
                },
                offline: opts.offline && !sut.is_local(),
                parallelism: self.config.parallelism,
            };
            let runner = Runner::new(adapter.as_ref(), Some(ResponseCache::new(&cache_dir)), options);
            let stats = runner.run_all(&conversations, &store)?;
            if stats.turns > 0 && stats.exhausted == stats.turns {
                return Err(PipelineError::Transport(format!(
                    "{}: no turn got a response after retries",
                    sut.name()
                )));
            }
            if stats.exhausted > 0 {
                log::warn!("{}: {} turns got no response", sut.name(), stats.exhausted);
            }
            out.push((sut.name().to_owned(), stats));
        }
        Ok(out)
    }

    fn transcripts(&self, layout: &DomainLayout, sut: &str) -> Result<BTreeMap<String, crate::sut::Transcript>> {
        let store = RunStore::new(layout.runs());
        let t = store.load_all(sut)?;
        if t.is_empty() {
            return Err(PipelineError::MissingArtifact {
                path: layout.runs().join(sut),
                stage: "run",
            });
        }
        Ok(t)
    }

    /// Runs both oracles for each selected SUT.
    pub fn oracle(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<Vec<SutOutcome>> {
        let selected = self.suts(&opts.suts)?;
        let layout = self.layout(domain);
        let graph = self.load_graph(&layout)?;
        let paths = self.load_paths(&layout, &graph)?;
        let suite = self.load_suite(&layout)?;
        let mut out = Vec::new();
        for sut in selected {
            let name = sut.name();
            let transcripts = self.transcripts(&layout, name)?;
            let eval = evaluate_sut(name, &suite, &paths, &transcripts)?;
            write_jsonl(&layout.errors(name), &eval.errors)?;
            let outcome = SutOutcome {
                sut: name.to_owned(),
                outcome: eval.outcome,
                paths: paths.len(),
                paths_with_errors: eval.paths_with_errors,
            };
            write_json(&layout.outcome(name), &outcome)?;
            out.push(outcome);
        }
        Ok(out)
    }

    /// Knowledge gap and coverage per selected SUT.
    pub fn coverage(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<Vec<CoverageReport>> {
        let selected = self.suts(&opts.suts)?;
        let layout = self.layout(domain);
        let suite = self.load_suite(&layout)?;
        let relations: Vec<_> = suite.relations().cloned().collect();
        let mut out = Vec::new();
        for sut in selected {
            let name = sut.name();
            let outcome: SutOutcome = read_json(&require(layout.outcome(name), "oracle")?)?;
            let table = crate::oracles::ResponseTable::from_transcripts(self.transcripts(&layout, name)?.values());
            let report = coverage_report(name, &table, &relations, outcome.outcome.coverage_count)?;
            write_json(&layout.coverage(name), &report)?;
            out.push(report);
        }
        Ok(out)
    }

    /// Cross-validated ensemble mitigation over all selected SUTs.
    pub fn mitigate(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<MitigationReport> {
        let selected = self.suts(&opts.suts)?;
        let layout = self.layout(domain);
        let suite = self.load_suite(&layout)?;
        let relations: Vec<_> = suite.relations().cloned().collect();
        let mut suts = Vec::new();
        for sut in selected {
            let name = sut.name();
            let errors: Vec<ErrorRecord> = read_jsonl(&require(layout.errors(name), "oracle")?)?;
            let mut relation_errors = BTreeMap::new();
            for e in errors.iter().filter(|e| e.error_type.is_metamorphic()) {
                *relation_errors.entry(e.relation.clone()).or_insert(0) += 1;
            }
            suts.push(SutAnswers {
                name: name.to_owned(),
                relation_errors,
                table: crate::oracles::ResponseTable::from_transcripts(self.transcripts(&layout, name)?.values()),
            });
        }
        let templates = if !opts.templates.is_empty() {
            opts.templates.clone()
        } else if suite.unseen.is_empty() {
            vec![TemplateId::ORIGINAL, TemplateId::MUTATED]
        } else {
            vec![TemplateId::ORIGINAL, TemplateId::MUTATED, TemplateId::UNSEEN]
        };
        let k = opts.k.unwrap_or(self.config.mitigation.k);
        let report = kfold_mitigation(&relations, &suts, &templates, k, self.seed(opts))?;
        write_json(&layout.mitigation(), &report)?;
        Ok(report)
    }

    /// Renders tables from the stored oracle, coverage and mitigation
    /// outputs.
    pub fn report(&self, domain: &DomainConfig, opts: &StageOptions) -> Result<Vec<PathBuf>> {
        let selected = self.suts(&opts.suts)?;
        let layout = self.layout(domain);
        let mut input = ReportInput::default();
        let mut sets = Vec::new();
        for sut in selected {
            let name = sut.name();
            input
                .outcomes
                .push(read_json(&require(layout.outcome(name), "oracle")?)?);
            input
                .coverage
                .push(read_json(&require(layout.coverage(name), "coverage")?)?);
            let errors: Vec<ErrorRecord> = read_jsonl(&layout.errors(name))?;
            sets.push((name.to_owned(), errors.iter().map(error_key).collect()));
        }
        if layout.mitigation().exists() {
            input.mitigation = Some(read_json(&layout.mitigation())?);
        }
        input.overlap = Some(error_overlap(&sets));
        let out = opts.out.clone().unwrap_or_else(|| layout.report());
        Ok(analytics::emit_reports(&input, &out)?)
    }
}

fn safe_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        && s != "."
        && s != ".."
}

/// Built-in relation specs by kind name.
pub fn builtin_spec(name: &str) -> Result<RelationSpec> {
    match name {
        "located_in" => Ok(RelationSpec::wikidata_places()),
        "part_of" => Ok(RelationSpec::wikidata_part_of()),
        "performer" => Ok(RelationSpec::wikidata_performer()),
        other => Err(PipelineError::Config(format!("unknown relation spec `{other}`"))),
    }
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingArtifact { path, stage })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_owned(),
        source,
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(io_err(path))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

/// Writes via a temporary sibling and rename.
fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| PipelineError::Corrupt {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for i in items {
        text.push_str(&serde_json::to_string(i).expect("serializable"));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| PipelineError::Corrupt {
                path: path.to_owned(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"
        workdir = "work"
        seed = 3

        [[domain]]
        name = "places"
        fixture = "places"

        [[sut]]
        kind = "scripted"
        name = "clean"

        [[sut]]
        kind = "http"
        name = "gpt"
        url = "http://localhost:1/v1/chat/completions"
        model = "gpt-3.5-turbo"
        credential_env = "OPENAI_API_KEY"
        requests_per_minute = 60
    "#;

    #[test]
    fn parses_and_defaults() {
        let p = Pipeline::from_toml(CONFIG, PathBuf::from("/tmp/x")).unwrap();
        assert_eq!(p.workdir(), PathBuf::from("/tmp/x/work"));
        assert_eq!(p.config.mitigation, MitigationConfig::default());
        assert_eq!(p.config.domains[0].leaves, 50);
        match &p.config.suts[1] {
            SutConfig::Http { temperature, .. } => assert_eq!(*temperature, Some(0.0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let bad = [
            CONFIG.replace("fixture = \"places\"", ""),
            CONFIG.replace("name = \"clean\"", "name = \"gpt\""),
            CONFIG.replace("workdir", "wrokdir"),
            CONFIG.replace("fixture = \"places\"", "fixture = \"moon\""),
            CONFIG.replace("fixture = \"places\"", "snapshot = \"nope.kg\""),
        ];
        for b in bad {
            let e = Pipeline::from_toml(&b, PathBuf::from("/nonexistent"))
                .err()
                .expect("rejected");
            assert_eq!(e.exit_code(), 1, "{e}");
        }
    }

    #[test]
    fn stages_require_predecessors() {
        let dir = tempfile::tempdir().unwrap();
        let p = Pipeline::from_toml(CONFIG, dir.path().to_owned()).unwrap();
        let d = p.config.domains[0].clone();
        let opts = StageOptions::default();
        let e = p.paths(&d, &opts).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        p.ingest(&d).unwrap();
        p.paths(&d, &opts).unwrap();
        p.gen(&d).unwrap();
        let only_clean = StageOptions {
            suts: vec!["clean".into()],
            ..StageOptions::default()
        };
        assert_eq!(p.oracle(&d, &only_clean).unwrap_err().exit_code(), 2);
        assert_eq!(p.report(&d, &only_clean).unwrap_err().exit_code(), 2);
    }
}

//! Command-line entry point.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use workbench_core::analytics::{self, MoEQuery, DEFAULT_ASSUMED_PROPORTION};
use workbench_core::annotation::AnnotatorProfile;
use workbench_core::codebook::{CodebookManifest, CONTEMPORARY_EXAMPLE_COUNT};
use workbench_core::corpus::apply_liveness;
use workbench_core::sampler::{self, DiscardReport, FilterConfig};
use workbench_core::{AnnotationRecord, Category, Codebook, QuerySpec, SampleDraw, SamplePlan, SCHEMA_VERSION};

use crate::error::{Result, WorkbenchError};
use crate::formats;
use crate::http::{self, ApiState};
use crate::ingest::{self, LivenessTable};
use crate::store::AnnotationStore;

#[derive(Debug, Parser)]
#[command(name = "workbench", version, about = "Tweet corpus annotation workbench")]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Directory for default outputs and the annotation journal.
    #[arg(long, global = true, env = "WORKBENCH_DATA_DIR", default_value = "workbench-data")]
    pub data_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse archives, keep matching tweets, write a normalized corpus and stats.
    Ingest(IngestArgs),
    /// Draw a stratified sample from a normalized corpus.
    Sample(SampleArgs),
    /// Run the annotation HTTP service.
    Serve(ServeArgs),
    /// Sampling math and annotation reports.
    Report {
        #[command(subcommand)]
        report: ReportCommand,
    },
    /// Daily counts and peak days of a corpus.
    Timeline(TimelineArgs),
    /// Check a codebook against its manifest.
    CodebookValidate(CodebookArgs),
}

#[derive(Debug, Args)]
#[group(id = "query_source", required = true, multiple = false)]
pub struct QueryArgs {
    /// Query spec JSON file.
    #[arg(long, group = "query_source")]
    pub query: Option<PathBuf>,
    /// Whole-word "Israel".
    #[arg(long, group = "query_source")]
    pub israel: bool,
    /// Prefix "Jew" with the jewelry exclusions.
    #[arg(long, group = "query_source")]
    pub jew: bool,
    /// Keep every parsed record.
    #[arg(long, group = "query_source")]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    /// Normalized corpus output [default: <data-dir>/corpus.ndjson].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stats output [default: <data-dir>/corpus_stats.json].
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// CSV of tweet_id,status (live or deleted) applied to every record.
    #[arg(long)]
    pub liveness: Option<PathBuf>,
    #[arg(required = true)]
    pub archives: Vec<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "plan_source", required = true, multiple = false)]
pub struct PlanArgs {
    /// Sample plan JSON file.
    #[arg(long, group = "plan_source")]
    pub plan: Option<PathBuf>,
    /// The 2018 three-period plan (198/26/176).
    #[arg(long = "default-2018", group = "plan_source")]
    pub default_2018: bool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Seed for the draw; overrides the plan file's seed.
    #[arg(long)]
    pub seed: u64,
    /// Normalized corpus to draw from.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Drawn ids, one per line [default: <data-dir>/draw.txt]. A JSON
    /// report is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the annotatable records (live, allowed language, not
    /// jewelry-only) to this file.
    #[arg(long)]
    pub annotatable: Option<PathBuf>,
    /// Keep records whose liveness is unknown.
    #[arg(long)]
    pub keep_unknown: bool,
    /// Accepted language tags.
    #[arg(long, value_delimiter = ',', default_values_t = ["en".to_string(), "und".to_string()])]
    pub languages: Vec<String>,
    /// Drop tweets whose only Jew* tokens are jewelry spellings.
    #[arg(long)]
    pub jewelry_filter: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    /// Static token required as "Authorization: Bearer <token>".
    #[arg(long, env = "WORKBENCH_TOKEN")]
    pub token: Option<String>,
    /// Create this session before serving (needs --draw, --corpus, --annotators).
    #[arg(long, requires_all = ["draw", "corpus", "annotators"])]
    pub session: Option<String>,
    /// Draw report JSON written by `sample`.
    #[arg(long)]
    pub draw: Option<PathBuf>,
    /// Annotatable corpus written by `sample --annotatable`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub annotators: Vec<String>,
    /// Import an annotation export (CSV or JSON) before serving.
    #[arg(long)]
    pub import: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Margin of error of a proportion.
    Moe {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Sample size needed for a margin of error.
    SampleSize {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        me: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Score distribution per sample and annotator.
    Summary {
        /// Annotation export files (CSV or JSON).
        #[arg(long = "annotations", required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ASSUMED_PROPORTION)]
        p: f64,
        #[arg(long, default_value_t = 0.95)]
        confidence: f64,
    },
    /// Agreement between two annotators of one sample.
    Agreement {
        #[arg(long = "annotations", required = true)]
        annotations: Vec<PathBuf>,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Restrict to one sample id.
        #[arg(long)]
        sample: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct TimelineArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Scale each day by the inverse stream rate of this plan.
    #[arg(long, conflicts_with = "default_2018")]
    pub plan: Option<PathBuf>,
    #[arg(long = "default-2018")]
    pub default_2018: bool,
    #[arg(long, default_value_t = 3)]
    pub top: usize,
    /// Write date,count CSV here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CodebookArgs {
    /// Codebook JSON [default: the shipped codebook].
    #[arg(long, requires = "manifest")]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// The JSON sidecar of a draw.
#[derive(Debug, Serialize, Deserialize)]
pub struct DrawReport {
    #[serde(flatten)]
    pub draw: SampleDraw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discards: Option<DiscardReport>,
}

struct Ctx<'a> {
    json: bool,
    data_dir: PathBuf,
    out: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn emit<T: Serialize>(&mut self, value: &T, text: impl FnOnce() -> String) -> Result<()> {
        let s = if self.json { formats::to_json_pretty(value) } else { text() };
        self.out.write_all(s.as_bytes()).map_err(|e| WorkbenchError::io("<stdout>", e))
    }

    fn default_path(&self, given: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        if let Some(p) = given {
            return Ok(p.clone());
        }
        std::fs::create_dir_all(&self.data_dir).map_err(|e| WorkbenchError::io(&self.data_dir, e))?;
        Ok(self.data_dir.join(name))
    }
}

fn query_spec(args: &QueryArgs) -> Result<Option<QuerySpec>> {
    Ok(match (&args.query, args.israel, args.jew) {
        (Some(p), _, _) => Some(formats::read_json_file(p)?),
        (_, true, _) => Some(QuerySpec::israel()),
        (_, _, true) => Some(QuerySpec::jew()),
        _ => None,
    })
}

fn ingest_cmd(ctx: &mut Ctx, args: &IngestArgs) -> Result<()> {
    let matcher = query_spec(&args.query)?.map(|q| q.compile().map_err(|e| WorkbenchError::Invalid(e.to_string()))).transpose()?;
    let liveness = args.liveness.as_deref().map(LivenessTable::load).transpose()?;
    let out_path = ctx.default_path(&args.out, "corpus.ndjson")?;
    let stats_path = ctx.default_path(&args.stats, "corpus_stats.json")?;

    let mut ingestion = ingest::ingest_archives(&args.archives, matcher)?;
    let io = |e| WorkbenchError::io(&out_path, e);
    let mut out = BufWriter::new(File::create(&out_path).map_err(io)?);
    let mut warnings = 0usize;
    for mut record in ingestion.by_ref() {
        if let Some(table) = &liveness {
            warnings += apply_liveness(std::slice::from_mut(&mut record), |id| table.lookup(id)).len();
        }
        ingest::write_normalized(&mut out, &record).map_err(io)?;
    }
    out.flush().map_err(io)?;
    for (path, e) in ingestion.errors().iter().take(5) {
        tracing::warn!("{}: {e}", path.display());
    }
    let stats = ingestion.finish()?;
    formats::write_json_file(&stats_path, &stats)?;
    if warnings > 0 {
        tracing::warn!("{warnings} records have no liveness verdict");
    }
    ctx.emit(&stats, || {
        format!(
            "{} records, {} distinct users, {} parse failures -> {}\n",
            stats.total_records,
            stats.distinct_users,
            stats.parse_failures,
            out_path.display()
        )
    })
}

fn load_plan(plan: &Option<PathBuf>, default_2018: bool, seed: u64) -> Result<Option<SamplePlan>> {
    if default_2018 {
        return Ok(Some(SamplePlan::default_2018(seed)));
    }
    let Some(path) = plan else { return Ok(None) };
    let mut plan: SamplePlan = formats::read_json_file(path)?;
    plan.seed = seed;
    plan.validate().map_err(|e| WorkbenchError::format(path, e))?;
    Ok(Some(plan))
}

fn sample_cmd(ctx: &mut Ctx, args: &SampleArgs) -> Result<()> {
    let plan = load_plan(&args.plan.plan, args.plan.default_2018, args.seed)?.expect("clap requires a plan source");
    let corpus = ingest::read_corpus(&args.corpus)?;
    let draw = sampler::draw(&plan, &corpus);

    let ids_path = ctx.default_path(&args.out, "draw.txt")?;
    formats::write_id_list(&ids_path, &draw.tweet_ids)?;

    let mut discards = None;
    if let Some(path) = &args.annotatable {
        let config = FilterConfig {
            keep_unknown: args.keep_unknown,
            languages: args.languages.clone(),
            jewelry: args.jewelry_filter.then(|| QuerySpec::jew().compile().expect("static query")),
        };
        let (kept, report) = sampler::filter_for_annotation(&draw, &corpus, &config);
        let io = |e| WorkbenchError::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for r in &kept {
            ingest::write_normalized(&mut out, r).map_err(io)?;
        }
        out.flush().map_err(io)?;
        discards = Some(report);
    }

    let report = DrawReport { draw, discards };
    let report_path = ids_path.with_extension("json");
    formats::write_json_file(&report_path, &report)?;
    ctx.emit(&report, || {
        let counts: Vec<String> = report.draw.per_stratum_counts.iter().map(u64::to_string).collect();
        let mut s = format!("drew {} tweets ({}) with seed {} -> {}\n", report.draw.tweet_ids.len(), counts.join("/"), plan.seed, ids_path.display());
        for (i, short) in report.draw.shortfalls.iter().enumerate().filter(|(_, s)| **s > 0) {
            s.push_str(&format!("stratum {} short by {short}\n", i + 1));
        }
        if let Some(d) = &report.discards {
            s.push_str(&format!(
                "discarded {}: {} deleted, {} unknown liveness, {} foreign language, {} jewelry, {} missing\n",
                d.total(),
                d.deleted,
                d.unknown_liveness,
                d.foreign_language,
                d.jewelry,
                d.missing
            ));
        }
        s
    })
}

fn serve_cmd(ctx: &mut Ctx, args: &ServeArgs) -> Result<()> {
    let store = Arc::new(AnnotationStore::open(&ctx.data_dir, Arc::new(Codebook::shipped()))?);
    if let (Some(sid), Some(draw_path), Some(corpus_path)) = (&args.session, &args.draw, &args.corpus) {
        if store.session(sid).is_none() {
            let report: DrawReport = formats::read_json_file(draw_path)?;
            let records = ingest::read_corpus(corpus_path)?;
            let annotators = args.annotators.iter().map(AnnotatorProfile::new).collect();
            store.create_session(sid, &report.draw, &records, annotators)?;
        }
    }
    if let Some(path) = &args.import {
        let n = store.import(formats::read_annotations(path)?)?;
        tracing::info!("imported {n} annotations");
    }
    let mut state = ApiState::new(store);
    if let Some(t) = &args.token {
        state = state.with_token(t.as_str());
    }
    writeln!(ctx.out, "serving on http://{}", args.listen).map_err(|e| WorkbenchError::io("<stdout>", e))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| WorkbenchError::io("<runtime>", e))?;
    runtime.block_on(http::serve(args.listen, state)).map_err(|e| WorkbenchError::io(args.listen.to_string(), e))
}

fn load_annotations(paths: &[PathBuf]) -> Result<Vec<AnnotationRecord>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(formats::read_annotations(p)?);
    }
    Ok(all)
}

fn analytics_err(e: analytics::AnalyticsError) -> WorkbenchError {
    WorkbenchError::Invalid(e.to_string())
}

fn report_cmd(ctx: &mut Ctx, report: &ReportCommand) -> Result<()> {
    match report {
        ReportCommand::Moe { n, p, confidence } => {
            let q = MoEQuery { n: *n, p: *p, confidence: *confidence };
            let me = analytics::margin_of_error(&q).map_err(analytics_err)?;
            let doc = json!({ "schema_version": SCHEMA_VERSION, "n": n, "p": p, "confidence": confidence, "margin_of_error": me });
            ctx.emit(&doc, || format!("{me:.4}\n"))
        }
        ReportCommand::SampleSize { p, me, confidence } => {
            let n = analytics::required_sample_size(*p, *me, *confidence).map_err(analytics_err)?;
            let doc = json!({ "schema_version": SCHEMA_VERSION, "p": p, "margin_of_error": me, "confidence": confidence, "sample_size": n });
            ctx.emit(&doc, || format!("{n}\n"))
        }
        ReportCommand::Summary { annotations, p, confidence } => {
            let mut groups: BTreeMap<(String, String), Vec<AnnotationRecord>> = BTreeMap::new();
            for r in load_annotations(annotations)? {
                groups.entry((r.sample_id.clone(), r.annotator_id.clone())).or_default().push(r);
            }
            let summaries = groups
                .values()
                .filter(|rs| rs.iter().any(AnnotationRecord::is_scored))
                .map(|rs| analytics::summarize_with(rs, *p, *confidence))
                .collect::<Result<Vec<_>, _>>()
                .map_err(analytics_err)?;
            if summaries.is_empty() {
                return Err(WorkbenchError::Invalid("no scored annotations".into()));
            }
            let doc = json!({ "schema_version": SCHEMA_VERSION, "summaries": summaries });
            ctx.emit(&doc, || analytics::render_table(&summaries))
        }
        ReportCommand::Agreement { annotations, a, b, sample } => {
            let all = load_annotations(annotations)?;
            let pick = |who: &str| -> Vec<AnnotationRecord> {
                all.iter().filter(|r| r.annotator_id == who && sample.as_ref().is_none_or(|s| &r.sample_id == s)).cloned().collect()
            };
            let report = analytics::agreement(&pick(a), &pick(b)).map_err(analytics_err)?;
            let doc = json!({ "schema_version": SCHEMA_VERSION, "agreement": report });
            ctx.emit(&doc, || {
                let mut s = format!("{} vs {}: {} common tweets\n", a, b, report.n_common);
                s.push_str(&format!("5-way agreement {:.3}, kappa {:.3}\n", report.percent_agreement_5way, report.kappa_5way));
                match (report.percent_agreement_binary, report.kappa_binary) {
                    (Some(pa), Some(k)) => s.push_str(&format!("binary agreement {pa:.3}, kappa {k:.3} over {} tweets\n", report.n_binary)),
                    _ => s.push_str("binary agreement undefined (no tweet scored non-zero by both)\n"),
                }
                s.push_str(&format!("{} binary disagreements\n", report.disagreement_list.len()));
                s
            })
        }
    }
}

fn timeline_cmd(ctx: &mut Ctx, args: &TimelineArgs) -> Result<()> {
    let corpus = ingest::read_corpus(&args.corpus)?;
    let mut bucket = analytics::timeline(&corpus);
    if let Some(plan) = load_plan(&args.plan, args.default_2018, 0)? {
        bucket = bucket.normalized(&plan);
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, bucket.to_csv()).map_err(|e| WorkbenchError::io(path, e))?;
    }
    let peaks = analytics::top_peaks(&bucket, args.top);
    let doc = json!({ "schema_version": SCHEMA_VERSION, "days": bucket.counts.len(), "peaks": peaks.peaks });
    ctx.emit(&doc, || peaks.peaks.iter().enumerate().map(|(i, p)| format!("{}. {} {}\n", i + 1, p.date, p.count)).collect())
}

fn codebook_cmd(ctx: &mut Ctx, args: &CodebookArgs) -> Result<()> {
    let (book, manifest) = match &args.codebook {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| WorkbenchError::io(path, e))?;
            (Codebook::from_json(&text).map_err(|e| WorkbenchError::format(path, e))?, None)
        }
        None => (Codebook::shipped(), Some(CodebookManifest::shipped())),
    };
    let manifest = match (&args.manifest, manifest) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).map_err(|e| WorkbenchError::io(path, e))?;
            CodebookManifest::from_json(&text).map_err(|e| WorkbenchError::format(path, e))?
        }
        (None, Some(m)) => m,
        (None, None) => unreachable!("clap requires a manifest with a custom codebook"),
    };
    let mismatches = manifest.check(&book);
    let counts = book.category_counts();
    let contemporary = counts.get(&Category::ContemporaryExample).copied().unwrap_or(0);
    let doc = json!({
        "schema_version": SCHEMA_VERSION,
        "entries": book.len(),
        "contemporary_examples": contemporary,
        "categories": counts,
        "mismatches": mismatches.iter().map(ToString::to_string).collect::<Vec<_>>(),
    });
    ctx.emit(&doc, || {
        let mut s = format!("{} entries, {contemporary} contemporary examples, {} categories\n", book.len(), counts.len());
        for m in &mismatches {
            s.push_str(&format!("mismatch: {m}\n"));
        }
        s
    })?;
    if !mismatches.is_empty() || contemporary != CONTEMPORARY_EXAMPLE_COUNT {
        return Err(WorkbenchError::Invalid(format!("codebook does not match its manifest ({} mismatches)", mismatches.len())));
    }
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut ctx = Ctx { json: cli.json, data_dir: cli.data_dir, out };
    match &cli.command {
        Command::Ingest(a) => ingest_cmd(&mut ctx, a),
        Command::Sample(a) => sample_cmd(&mut ctx, a),
        Command::Serve(a) => serve_cmd(&mut ctx, a),
        Command::Report { report } => report_cmd(&mut ctx, report),
        Command::Timeline(a) => timeline_cmd(&mut ctx, a),
        Command::CodebookValidate(a) => codebook_cmd(&mut ctx, a),
    }
}

/// Runs the CLI and returns the process exit code: 0 on success, 1 on
/// usage or validation errors, 2 on I/O errors.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(rendered.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(rendered.as_bytes());
                    1
                }
            };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

//! The four subcommands. Each validates its inputs before writing
//! anything, writes its files, and prints a short summary plus a sha256
//! digest per output file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rttp_core::domain::Post;
use rttp_core::eval::{
    evaluate_method, recall_at_k, should_retrain, DayLayout, MethodEvaluation, PrecisionAt, RecallSample, TrendLabel,
};
use rttp_core::jsonl::{read_jsonl, write_records};
use rttp_core::mixdpo::{
    build_pairs, pairs_won, policy_from_rankings, squeeze_diagnostic, synthetic_dataset, train, write_metrics_csv,
    PairDataset, PolicyKind, PreferencePair, TabularPolicy,
};
use rttp_core::pipeline::{pregenerate, DropCounters, EventLog, MethodVariant, RankedTrend, WindowStore};
use rttp_core::querygen::{ExtractiveGenerator, KnowledgeTable, QueryGenerator, RemoteGenerator, TemplateGenerator};
use rttp_core::simgen::{generate_world, TRUTH_FILE, WORLD_FILES};

use crate::config::{GeneratorKind, RunConfig};
use crate::{runtime, CliError};

pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const RUN_SUMMARY_FILE: &str = "run_summary.json";
pub const REPORT_JSONL: &str = "report.jsonl";
pub const REPORT_TXT: &str = "report.txt";
pub const POLICY_FILE: &str = "policy.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SQUEEZE_FILE: &str = "squeeze.json";
pub const PAIRS_FILE: &str = "pairs.jsonl";

pub fn rankings_file(method: MethodVariant) -> String {
    format!("rankings_{}.jsonl", method.as_str())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects output files in memory so nothing is written until every
/// input has been read and checked.
#[derive(Default)]
struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn commit(self, dir: &Path, out: &mut dyn Write) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))?;
        }
        for (name, bytes) in &self.files {
            writeln!(out, "sha256 {}  {name}", sha256_hex(bytes)).map_err(runtime)?;
        }
        Ok(())
    }
}

fn jsonl_bytes<T: Serialize>(records: &[T]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_records(&mut buf, records).map_err(runtime)?;
    Ok(buf)
}

fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(runtime)?;
    buf.push(b'\n');
    Ok(buf)
}

fn pick_dir(arg: Option<&Path>, fallback: Option<&PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    arg.map(Path::to_path_buf)
        .or_else(|| fallback.cloned())
        .ok_or_else(|| CliError::Config(format!("no {what} directory given (flag or [paths] section)")))
}

fn existing_dir(dir: &Path, what: &str) -> Result<(), CliError> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} directory {} does not exist",
            dir.display()
        )))
    }
}

/// The configured generator. A configured knowledge file must exist; the
/// default one may be absent, leaving the template generator with an empty
/// table.
pub fn build_generator(cfg: &RunConfig, events: &Path) -> Result<Arc<dyn QueryGenerator>, CliError> {
    Ok(match cfg.generator.kind {
        GeneratorKind::Extractive => Arc::new(ExtractiveGenerator),
        GeneratorKind::Template => {
            let path = cfg.knowledge_path(events);
            let table = if path.is_file() {
                KnowledgeTable::load(&path).map_err(runtime)?
            } else if cfg.generator.knowledge.is_some() {
                return Err(CliError::Config(format!(
                    "knowledge file {} does not exist",
                    path.display()
                )));
            } else {
                log::warn!("no knowledge file at {}, using an empty table", path.display());
                KnowledgeTable::default()
            };
            Arc::new(TemplateGenerator::new(table))
        }
        GeneratorKind::Remote => {
            Arc::new(RemoteGenerator::new(cfg.generator.remote.clone()).map_err(|e| CliError::Config(e.to_string()))?)
        }
    })
}

// ---------------------------------------------------------------- simulate

pub fn simulate(cfg: &RunConfig, out_dir: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let dir = pick_dir(out_dir, cfg.paths.output.as_ref(), "output")?;
    let world = generate_world(&cfg.world).map_err(|e| CliError::Config(e.to_string()))?;
    let outputs = {
        let mut o = Outputs::default();
        o.add(WORLD_FILES[0], jsonl_bytes(&world.creators)?);
        o.add(WORLD_FILES[1], jsonl_bytes(&world.posts)?);
        o.add(WORLD_FILES[2], jsonl_bytes(&world.engagements)?);
        o.add(WORLD_FILES[3], jsonl_bytes(&world.searches)?);
        o.add(WORLD_FILES[4], jsonl_bytes(&world.truth.planted_trends)?);
        o.add(WORLD_FILES[5], jsonl_bytes(&world.knowledge)?);
        o
    };
    let heads = world
        .truth
        .planted_trends
        .iter()
        .filter(|t| t.kind == rttp_core::eval::TrendKind::Head)
        .count();
    let w = |out: &mut dyn Write, k: &str, v: usize| writeln!(out, "{k:<16}{v:>10}").map_err(runtime);
    w(out, "creators", world.creators.len())?;
    w(out, "posts", world.posts.len())?;
    w(out, "engagements", world.engagements.len())?;
    w(out, "searches", world.searches.len())?;
    w(out, "head trends", heads)?;
    w(out, "tail trends", world.truth.planted_trends.len() - heads)?;
    w(out, "knowledge", world.knowledge.len())?;
    outputs.commit(&dir, out)
}

// --------------------------------------------------------------------- run

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub post_id: String,
    pub queries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCount {
    pub method: MethodVariant,
    pub rows: usize,
    pub distinct_queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub generator: GeneratorKind,
    pub posts: usize,
    pub engagements: usize,
    pub searches: usize,
    pub windows: usize,
    pub window_k: usize,
    pub methods: Vec<MethodCount>,
    pub drops: DropCounters,
}

pub fn run(
    cfg: &RunConfig,
    events: Option<&Path>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<RunSummary, CliError> {
    let events = pick_dir(events, cfg.paths.events.as_ref(), "events")?;
    let dir = pick_dir(out_dir, cfg.paths.output.as_ref(), "output")?;
    existing_dir(&events, "events")?;
    let generator = build_generator(cfg, &events)?;
    let log = EventLog::load(&events).map_err(runtime)?;

    let mut store = WindowStore::new(cfg.pipeline.clone(), generator).map_err(|e| CliError::Config(e.to_string()))?;
    store.ingest_log(&log);
    store.seal_all();

    let mut outputs = Outputs::default();
    let mut methods = Vec::new();
    for &m in &cfg.run.methods {
        let rows = store.rank_all(m, cfg.run.window_k).map_err(runtime)?;
        let distinct: BTreeSet<&str> = rows.iter().map(|r| r.query.as_str()).collect();
        methods.push(MethodCount {
            method: m,
            rows: rows.len(),
            distinct_queries: distinct.len(),
        });
        outputs.add(rankings_file(m), jsonl_bytes(&rows)?);
    }
    let generations: Vec<GenerationRecord> = store
        .generations()
        .into_iter()
        .map(|(id, q)| GenerationRecord {
            post_id: id.to_string(),
            queries: q.to_vec(),
        })
        .collect();
    outputs.add(GENERATIONS_FILE, jsonl_bytes(&generations)?);

    let summary = RunSummary {
        generator: cfg.generator.kind,
        posts: log.posts.len(),
        engagements: log.engagements.len(),
        searches: log.searches.len(),
        windows: store.window_indices().len(),
        window_k: cfg.run.window_k,
        methods,
        drops: store.drops(),
    };
    outputs.add(RUN_SUMMARY_FILE, pretty_json(&summary)?);

    let p = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(runtime);
    p(
        out,
        format!(
            "windows {}  posts {}  searches {}",
            summary.windows, summary.posts, summary.searches
        ),
    )?;
    for m in &summary.methods {
        p(
            out,
            format!(
                "{:<24}{:>8} rows{:>8} queries",
                m.method.as_str(),
                m.rows,
                m.distinct_queries
            ),
        )?;
    }
    let d = &summary.drops;
    p(
        out,
        format!(
            "dropped: unknown_post {} late {} invalid {} duplicate_post {} unknown_creator {} generator_failures {}",
            d.unknown_post, d.late, d.invalid, d.duplicate_post, d.unknown_creator, d.generator_failures
        ),
    )?;
    outputs.commit(&dir, out)?;
    Ok(summary)
}

// -------------------------------------------------------------------- eval

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine {
    Method {
        method: String,
        status: MethodStatus,
        days: usize,
        precision: Vec<PrecisionAt>,
        head_detection: f64,
        tail_detection: f64,
    },
    Recall {
        k: usize,
        recall: f64,
        samples: usize,
        /// Present when a baseline recall is configured.
        retrain: Option<bool>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodStatus {
    Ok,
    Absent,
}

fn load_generations(path: &Path) -> Result<HashMap<String, Vec<String>>, CliError> {
    let records: Vec<GenerationRecord> = read_jsonl(path).map_err(runtime)?;
    Ok(records.into_iter().map(|r| (r.post_id, r.queries)).collect())
}

fn recall_samples(posts: &[Post], generations: &HashMap<String, Vec<String>>) -> Vec<RecallSample> {
    posts
        .iter()
        .filter(|p| !p.ground_truth_queries.is_empty())
        .map(|p| RecallSample {
            post_id: p.post_id.clone(),
            generated: generations.get(&p.post_id).cloned().unwrap_or_default(),
            ground_truth: p.ground_truth_queries.clone(),
        })
        .collect()
}

pub fn eval(
    cfg: &RunConfig,
    rankings: &Path,
    truth: Option<&Path>,
    events: Option<&Path>,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Vec<ReportLine>, CliError> {
    existing_dir(rankings, "rankings")?;
    let events = events.map(Path::to_path_buf).or_else(|| cfg.paths.events.clone());
    let truth = match (truth, &events) {
        (Some(t), _) => t.to_path_buf(),
        (None, Some(e)) => e.join(TRUTH_FILE),
        (None, None) => return Err(CliError::Config("no truth file given (--truth or --events)".into())),
    };
    if !truth.is_file() {
        return Err(CliError::Config(format!(
            "truth file {} does not exist",
            truth.display()
        )));
    }
    let dir = out_dir.map(Path::to_path_buf).unwrap_or_else(|| rankings.to_path_buf());
    let labels: Vec<TrendLabel> = read_jsonl(&truth).map_err(runtime)?;
    let layout = DayLayout {
        window_length: cfg.pipeline.window_length,
        windows_per_day: cfg.eval.windows_per_day,
    };

    let mut lines = Vec::new();
    for &m in &cfg.run.methods {
        let path = rankings.join(rankings_file(m));
        if !path.is_file() {
            lines.push(ReportLine::Method {
                method: m.as_str().into(),
                status: MethodStatus::Absent,
                days: 0,
                precision: Vec::new(),
                head_detection: 0.0,
                tail_detection: 0.0,
            });
            continue;
        }
        let rows: Vec<RankedTrend> = read_jsonl(&path).map_err(runtime)?;
        let MethodEvaluation {
            method,
            days,
            precision,
            head_detection,
            tail_detection,
        } = evaluate_method(m.as_str(), &rows, &labels, layout, &cfg.eval.ks);
        lines.push(ReportLine::Method {
            method,
            status: MethodStatus::Ok,
            days,
            precision,
            head_detection,
            tail_detection,
        });
    }

    let gen_path = rankings.join(GENERATIONS_FILE);
    if let Some(ev) = events.as_ref().filter(|_| gen_path.is_file()) {
        let log = EventLog::load(ev).map_err(runtime)?;
        let samples = recall_samples(&log.posts, &load_generations(&gen_path)?);
        if !samples.is_empty() {
            let recall = recall_at_k(&samples, cfg.eval.recall_k).map_err(runtime)?;
            let retrain = if cfg.trigger.baseline_recall > 0.0 {
                let current = recall_at_k(&samples, cfg.trigger.k).map_err(runtime)?;
                Some(should_retrain(current, &cfg.trigger).map_err(runtime)?)
            } else {
                None
            };
            lines.push(ReportLine::Recall {
                k: cfg.eval.recall_k,
                recall,
                samples: samples.len(),
                retrain,
            });
        }
    }

    let text = render_report(&lines, &cfg.eval.ks);
    out.write_all(text.as_bytes()).map_err(runtime)?;
    let mut outputs = Outputs::default();
    outputs.add(REPORT_JSONL, jsonl_bytes(&lines)?);
    outputs.add(REPORT_TXT, text.into_bytes());
    outputs.commit(&dir, out)?;
    Ok(lines)
}

fn render_report(lines: &[ReportLine], ks: &[usize]) -> String {
    let mut s = String::new();
    let _ = write!(s, "{:<24}", "method");
    for k in ks {
        let _ = write!(s, "{:>9}", format!("p@{k}"));
    }
    let _ = writeln!(s, "{:>8}{:>8}", "head", "tail");
    for l in lines {
        match l {
            ReportLine::Method {
                method,
                status: MethodStatus::Absent,
                ..
            } => {
                let _ = writeln!(s, "{method:<24}absent");
            }
            ReportLine::Method {
                method,
                precision,
                head_detection,
                tail_detection,
                ..
            } => {
                let _ = write!(s, "{method:<24}");
                for p in precision {
                    let _ = write!(s, "{:>9.3}", p.precision);
                }
                let _ = writeln!(s, "{head_detection:>8.3}{tail_detection:>8.3}");
            }
            ReportLine::Recall {
                k,
                recall,
                samples,
                retrain,
            } => {
                let _ = write!(s, "recall@{k} {recall:.3} over {samples} posts");
                if let Some(r) = retrain {
                    let _ = write!(s, ", retrain {}", if *r { "yes" } else { "no" });
                }
                let _ = writeln!(s);
            }
        }
    }
    s
}

// ------------------------------------------------------------------- train

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub pairs: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub synthetic: bool,
    pub policy: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub monitor: bool,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub trained: bool,
    pub recall: Option<f64>,
    pub pairs_on: usize,
    pub pairs_off: usize,
    pub final_loss: f64,
    pub pairs_won: f64,
    pub entropy_before: f64,
    pub entropy_after: f64,
}

fn read_policy(path: &Path) -> Result<TabularPolicy, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    TabularPolicy::read_from(BufReader::new(f)).map_err(runtime)
}

pub fn train_cmd(cfg: &RunConfig, args: &TrainArgs, out: &mut dyn Write) -> Result<TrainSummary, CliError> {
    let sources = [args.pairs.is_some(), args.events.is_some(), args.synthetic]
        .iter()
        .filter(|b| **b)
        .count();
    if sources != 1 {
        return Err(CliError::Config(
            "give exactly one of --pairs, --events, --synthetic".into(),
        ));
    }
    if args.monitor && args.events.is_none() {
        return Err(CliError::Config("--monitor needs --events".into()));
    }
    let dir = pick_dir(args.out.as_deref(), cfg.paths.output.as_ref(), "output")?;

    let mut recall = None;
    let (dataset, derived) = if let Some(p) = &args.pairs {
        let f = std::fs::File::open(p).map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
        let ds = PairDataset::read_from(BufReader::new(f)).map_err(runtime)?;
        (ds, None)
    } else if let Some(ev) = &args.events {
        existing_dir(ev, "events")?;
        let generator = build_generator(cfg, ev)?;
        let log = EventLog::load(ev).map_err(runtime)?;
        let labeled: Vec<Post> = log
            .posts
            .into_iter()
            .filter(|p| !p.ground_truth_queries.is_empty())
            .collect();
        let refs: Vec<&Post> = labeled.iter().collect();
        let k = cfg.train.pair_k.max(cfg.trigger.k);
        let generations: HashMap<String, Vec<String>> =
            pregenerate(generator.as_ref(), &refs, k, cfg.pipeline.generator_workers)
                .into_iter()
                .map(|(id, r)| (id, r.unwrap_or_default()))
                .collect();
        if args.monitor {
            let samples = recall_samples(&labeled, &generations);
            let r = recall_at_k(&samples, cfg.trigger.k).map_err(runtime)?;
            recall = Some(r);
            let fire = should_retrain(r, &cfg.trigger).map_err(|e| CliError::Config(e.to_string()))?;
            writeln!(
                out,
                "recall@{} {r:.4} baseline {:.4}",
                cfg.trigger.k, cfg.trigger.baseline_recall
            )
            .map_err(runtime)?;
            if !fire {
                writeln!(out, "no retraining needed").map_err(runtime)?;
                return Ok(TrainSummary {
                    trained: false,
                    recall,
                    pairs_on: 0,
                    pairs_off: 0,
                    final_loss: 0.0,
                    pairs_won: 0.0,
                    entropy_before: 0.0,
                    entropy_after: 0.0,
                });
            }
        }
        let ds = build_pairs(&labeled, &generations, cfg.train.pair_k).map_err(runtime)?;
        let init = policy_from_rankings(&ds, &generations, cfg.train.init_peak).map_err(runtime)?;
        (ds, Some(init))
    } else {
        let (ds, init) = synthetic_dataset(&cfg.train.synthetic).map_err(|e| CliError::Config(e.to_string()))?;
        (ds, Some(init))
    };

    let initial = match (&args.policy, derived) {
        (Some(p), _) => read_policy(p)?,
        (None, Some(init)) => init,
        (None, None) => {
            TabularPolicy::uniform(dataset.contexts.clone(), dataset.vocabulary.clone()).map_err(runtime)?
        }
    };
    let reference = match &args.reference {
        Some(p) => read_policy(p)?,
        None => initial.clone(),
    };
    if initial.contexts() != dataset.contexts.as_slice() || initial.vocabulary() != dataset.vocabulary.as_slice() {
        return Err(CliError::Config(
            "policy does not match the pair dataset's contexts and vocabulary".into(),
        ));
    }

    let outcome = train(&initial, &reference, &dataset.pool, &cfg.dpo, cfg.train.steps).map_err(runtime)?;

    let eval_contexts: Vec<usize> = {
        let off: BTreeSet<usize> = dataset.pool.off_policy.iter().map(|p| p.context).collect();
        if off.is_empty() {
            (0..initial.n_contexts()).collect()
        } else {
            off.into_iter().collect()
        }
    };
    let squeeze = squeeze_diagnostic(&initial, &outcome.policy, &eval_contexts).map_err(runtime)?;
    let sampled: Vec<PreferencePair> = dataset
        .pool
        .iter()
        .filter(|p| cfg.dpo.off_policy_fraction > 0.0 || p.policy_kind == PolicyKind::OnPolicy)
        .filter(|p| cfg.dpo.off_policy_fraction < 1.0 || p.policy_kind == PolicyKind::OffPolicy)
        .copied()
        .collect();
    let summary = TrainSummary {
        trained: true,
        recall,
        pairs_on: dataset.pool.on_policy.len(),
        pairs_off: dataset.pool.off_policy.len(),
        final_loss: outcome.metrics.last().map(|m| m.loss).unwrap_or(0.0),
        pairs_won: pairs_won(&outcome.policy, &sampled),
        entropy_before: squeeze.mean_entropy_before,
        entropy_after: squeeze.mean_entropy_after,
    };

    let mut outputs = Outputs::default();
    let mut buf = Vec::new();
    outcome.policy.write_to(&mut buf).map_err(runtime)?;
    outputs.add(POLICY_FILE, buf);
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &outcome.metrics).map_err(runtime)?;
    outputs.add(METRICS_FILE, buf);
    outputs.add(SQUEEZE_FILE, pretty_json(&squeeze)?);
    let mut buf = Vec::new();
    dataset.write_to(&mut buf).map_err(runtime)?;
    outputs.add(PAIRS_FILE, buf);

    let rows: BTreeMap<&str, String> = [
        ("pairs", format!("{} on, {} off", summary.pairs_on, summary.pairs_off)),
        ("steps", cfg.train.steps.to_string()),
        ("final loss", format!("{:.4}", summary.final_loss)),
        ("pairs won", format!("{:.3}", summary.pairs_won)),
        (
            "entropy",
            format!("{:.4} -> {:.4}", summary.entropy_before, summary.entropy_after),
        ),
    ]
    .into_iter()
    .collect();
    for (k, v) in rows {
        writeln!(out, "{k:<12}{v}").map_err(runtime)?;
    }
    outputs.commit(&dir, out)?;
    Ok(summary)
}

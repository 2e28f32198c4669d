//! The `avqa` command-line driver.
//!
//! Every subcommand reads its settings from flags, optionally layered over
//! a JSON file given with `--config`, and writes a run manifest next to its
//! output recording the effective settings, seed, tool version and the
//! SHA-256 of every input file. A previous run manifest is itself accepted
//! as a `--config` file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::augment::{augment_categories, grounding_categories, HttpTransport, LlmEndpointConfig, TaskArtifact};
use crate::compiler::{compile_dataset, read_jsonl, write_dataset, CompileOptions, MixSpec, MixTargets, Templates};
use crate::evalkit::{
    echo_masks, echo_predictions, evaluate, read_masks, read_predictions, write_predictions, EvalContext, EvalSettings,
    EvalTask,
};
use crate::ingest::{self, AnnotationStore, CorpusSpec, LoadReport};
use crate::sim::{self, DEFAULT_COS_THRESHOLD};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "avqa",
    version,
    about = "Affordance VQA dataset compiler, evaluator and manipulation simulator"
)]
pub struct Cli {
    /// JSON file with default values for the subcommand's flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load annotation corpora into one store.
    Ingest(IngestArgs),
    /// Generate task descriptions for grounding categories.
    Augment(AugmentArgs),
    /// Build the instruction dataset.
    Compile(CompileArgs),
    /// Score predictions against a compiled split.
    Eval(EvalArgs),
    /// Write reference answers (and masks) as predictions.
    EchoGt(EchoGtArgs),
    /// Run contact plans through the articulated-object simulator.
    PolicyEval(PolicyEvalArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestArgs {
    /// Corpus as kind:TAG=root; kinds are coco-detection,
    /// part-affordance-maps and physical-properties.
    #[arg(long = "corpus", value_name = "SPEC")]
    pub corpus: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Existing task file to extend.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Use the built-in task table instead of an endpoint.
    #[arg(long)]
    pub offline: bool,
    /// Base URL of a chat-completions API.
    #[arg(long, value_name = "URL")]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    #[arg(long)]
    pub max_concurrent: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
    /// Full endpoint settings; config file only.
    #[arg(skip)]
    pub llm: Option<LlmEndpointConfig>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompileArgs {
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// `preset`, `all`, or a JSON mix file.
    #[arg(long)]
    pub mix: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Always use the first template of each list.
    #[arg(long)]
    pub no_paraphrase: bool,
    #[arg(long)]
    pub templates: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalArgs {
    /// Compiled split (JSONL).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Annotation store, needed for mask AP and heatmap metrics.
    #[arg(long)]
    pub store: Option<PathBuf>,
    /// Predicted masks keyed by sample id.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Task to score, or `all` (repeatable).
    #[arg(long = "task")]
    pub task: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EchoGtArgs {
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write reference masks here; needs --store.
    #[arg(long)]
    pub masks_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyEvalArgs {
    /// Directory of scene JSON files.
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// Box predictions keyed by scene id.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Use ground-truth plans.
    #[arg(long)]
    pub oracle: bool,
    /// Use uniformly random plans.
    #[arg(long)]
    pub random: bool,
    /// Random plans per scene.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cos_threshold: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-trial results (JSONL).
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Fatal(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Fatal(e)
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Fatal(e.into())
    }
}

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

/// What a subcommand did, for the manifest.
#[derive(Default)]
struct Run {
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    summary: Value,
    partial: bool,
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let file = match cli.config.as_deref().map(read_config).transpose() {
        Ok(v) => v,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_USAGE;
        }
    };
    let file = file.as_ref();
    let (name, config, manifest_path, result) = match &cli.command {
        Command::Ingest(a) => dispatch("ingest", a, file, |a| a.out.clone(), ingest_cmd),
        Command::Augment(a) => dispatch("augment", a, file, |a| a.out.clone(), augment_cmd),
        Command::Compile(a) => dispatch(
            "compile",
            a,
            file,
            |a| a.out.as_ref().map(|d| d.join("run")),
            compile_cmd,
        ),
        Command::Eval(a) => dispatch("eval", a, file, |a| a.out.clone(), eval_cmd),
        Command::EchoGt(a) => dispatch("echo-gt", a, file, |a| a.out.clone(), echo_gt_cmd),
        Command::PolicyEval(a) => dispatch("policy-eval", a, file, |a| a.out.clone(), policy_eval_cmd),
    };
    let (code, run, error) = match result {
        Ok(run) => (if run.partial { EXIT_PARTIAL } else { EXIT_OK }, run, None),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `avqa {name} --help` for usage");
            return EXIT_USAGE;
        }
        Err(Failure::Fatal(e)) => {
            eprintln!("error: {e:#}");
            (EXIT_FATAL, Run::default(), Some(format!("{e:#}")))
        }
    };
    if let Some(base) = manifest_path {
        let path = sidecar(&base, "manifest.json");
        if let Err(e) = write_manifest(&path, name, &config, &run, code, error) {
            eprintln!("error: writing {}: {e:#}", path.display());
            return EXIT_FATAL;
        }
    }
    code
}

type Dispatched = (&'static str, Value, Option<PathBuf>, Result<Run, Failure>);

fn dispatch<A>(
    name: &'static str,
    flags: &A,
    file: Option<&Value>,
    out: impl Fn(&A) -> Option<PathBuf>,
    body: impl Fn(&A) -> Result<Run, Failure>,
) -> Dispatched
where
    A: Serialize + DeserializeOwned,
{
    match overlay(flags, file) {
        Ok(args) => {
            let config = serde_json::to_value(&args).unwrap_or(Value::Null);
            let manifest = out(&args);
            (name, config, manifest, body(&args))
        }
        Err(msg) => (name, Value::Null, None, Err(Failure::Usage(msg))),
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// A config file, or the `config` object of a previous run manifest.
fn read_config(path: &Path) -> Result<Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    match v {
        Value::Object(mut m) if m.get("tool") == Some(&json!("avqa")) && m.contains_key("config") => {
            Ok(m.remove("config").unwrap_or_default())
        }
        Value::Object(_) => Ok(v),
        _ => Err(format!("{}: config must be a JSON object", path.display())),
    }
}

/// File values overlaid with every flag that was actually given.
fn overlay<A: Serialize + DeserializeOwned>(flags: &A, file: Option<&Value>) -> Result<A, String> {
    let Some(file) = file else {
        return serde_json::from_value(serde_json::to_value(flags).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string());
    };
    let mut merged = file.as_object().cloned().unwrap_or_default();
    let Value::Object(given) = serde_json::to_value(flags).map_err(|e| e.to_string())? else {
        return Err("flags did not serialize to an object".into());
    };
    for (k, v) in given {
        let set = match &v {
            Value::Null => false,
            Value::Bool(b) => *b,
            Value::Array(a) => !a.is_empty(),
            _ => true,
        };
        if set || !merged.contains_key(&k) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| format!("config: {e}"))
}

/// `out.json` -> `out.json.<suffix>`; for directories the sidecar goes inside.
fn sidecar(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn write_manifest(
    path: &Path,
    name: &str,
    config: &Value,
    run: &Run,
    code: i32,
    error: Option<String>,
) -> anyhow::Result<()> {
    let mut inputs = BTreeMap::new();
    for p in &run.inputs {
        digest_into(p, &mut inputs)?;
    }
    let manifest = json!({
        "tool": "avqa",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": name,
        "seed": run.seed,
        "config": config,
        "inputs": inputs,
        "outputs": run.outputs,
        "exit_code": code,
        "error": error,
        "summary": run.summary,
    });
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

/// SHA-256 of a file, or of every file below a directory.
fn digest_into(path: &Path, out: &mut BTreeMap<String, String>) -> anyhow::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            digest_into(&e, out)?;
        }
    } else {
        let bytes = std::fs::read(path).with_context(|| path.display().to_string())?;
        out.insert(path.display().to_string(), hex(&Sha256::digest(&bytes)));
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, Failure> {
    v.as_ref()
        .ok_or_else(|| Failure::Usage(format!("missing required flag --{flag}")))
}

fn existing<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<&'a PathBuf, Failure> {
    let p = required(v, flag)?;
    if !p.exists() {
        return usage(format!("--{flag}: {} does not exist", p.display()));
    }
    Ok(p)
}

fn optional_existing<'a>(v: &'a Option<PathBuf>, flag: &str) -> Result<Option<&'a PathBuf>, Failure> {
    v.as_ref().map(|_| existing(v, flag)).transpose()
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| dir.display().to_string())?;
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).with_context(|| path.display().to_string())
}

fn ingest_cmd(a: &IngestArgs) -> Result<Run, Failure> {
    let out = required(&a.out, "out")?;
    if a.corpus.is_empty() {
        return usage("at least one --corpus is required");
    }
    let mut specs = Vec::new();
    for s in &a.corpus {
        let spec: CorpusSpec = s.parse().map_err(|e: crate::Error| Failure::Usage(e.to_string()))?;
        if !spec.root.is_dir() {
            return usage(format!("corpus root {} is not a directory", spec.root.display()));
        }
        specs.push(spec);
    }
    let mut stores = Vec::new();
    let mut report = LoadReport::default();
    for spec in &specs {
        let (store, r) = ingest::load(spec).with_context(|| format!("loading {spec}"))?;
        log::info!(
            "{}: {} records, {} errors",
            spec.tag,
            store.annotations.len(),
            r.errors.len()
        );
        stores.push(store);
        report.absorb(r);
    }
    let store = ingest::merge(stores)?;
    ensure_parent(out)?;
    store.write_json(out)?;
    Ok(Run {
        seed: None,
        inputs: specs.iter().map(|s| s.root.clone()).collect(),
        outputs: vec![out.clone()],
        partial: report.has_errors(),
        summary: json!({
            "images": store.images.len(),
            "records": store.annotations.len(),
            "load_report": report,
        }),
    })
}

fn augment_cmd(a: &AugmentArgs) -> Result<Run, Failure> {
    let store_path = existing(&a.store, "store")?;
    let out = required(&a.out, "out")?;
    let prior = optional_existing(&a.tasks, "tasks")?;
    let mut cfg = a.llm.clone().unwrap_or_default();
    cfg.offline |= a.offline;
    if let Some(v) = &a.endpoint {
        cfg.base_url = v.clone();
    }
    if let Some(v) = &a.model {
        cfg.model = v.clone();
    }
    if let Some(v) = &a.api_key_env {
        cfg.api_key_env = v.clone();
    }
    if let Some(v) = a.max_retries {
        cfg.max_retries = v;
    }
    if let Some(v) = a.max_concurrent {
        cfg.max_concurrent = v;
    }
    if let Some(v) = a.timeout_ms {
        cfg.timeout_ms = v;
    }
    if !cfg.offline && a.endpoint.is_none() && a.llm.is_none() {
        return usage("give --offline or --endpoint");
    }
    cfg.check().map_err(|e| Failure::Usage(e.to_string()))?;

    let store = AnnotationStore::read_json(store_path)?;
    let existing_tasks = match prior {
        Some(p) => TaskArtifact::read_json(p)?,
        None => TaskArtifact::default(),
    };
    let categories = grounding_categories(&store);
    let (tasks, report) = augment_categories(&categories, &existing_tasks, &cfg, &HttpTransport)?;
    ensure_parent(out)?;
    tasks.write_json(out)?;
    let mut inputs = vec![store_path.clone()];
    inputs.extend(prior.cloned());
    Ok(Run {
        seed: None,
        inputs,
        outputs: vec![out.clone()],
        partial: !report.failed.is_empty() || !report.empty.is_empty(),
        summary: json!({
            "categories": categories.len(),
            "descriptions": tasks.len(),
            "offline": cfg.offline,
            "report": report,
        }),
    })
}

fn read_mix(arg: Option<&str>, seed: u64, val_fraction: f64) -> Result<(MixSpec, Option<PathBuf>), Failure> {
    match arg.unwrap_or("preset") {
        "preset" => Ok((MixSpec::preset(seed, val_fraction), None)),
        "all" => Ok((
            MixSpec {
                targets: MixTargets::All,
                seed,
                val_fraction,
            },
            None,
        )),
        path => {
            let p = PathBuf::from(path);
            let text = std::fs::read_to_string(&p).map_err(|e| Failure::Usage(format!("--mix {path}: {e}")))?;
            let targets = serde_json::from_str::<MixSpec>(&text)
                .map(|m| m.targets)
                .or_else(|_| serde_json::from_str::<MixTargets>(&text))
                .map_err(|e| Failure::Usage(format!("--mix {path}: {e}")))?;
            Ok((
                MixSpec {
                    targets,
                    seed,
                    val_fraction,
                },
                Some(p),
            ))
        }
    }
}

fn compile_cmd(a: &CompileArgs) -> Result<Run, Failure> {
    let store_path = existing(&a.store, "store")?;
    let tasks_path = existing(&a.tasks, "tasks")?;
    let out = required(&a.out, "out")?;
    let templates_path = optional_existing(&a.templates, "templates")?;
    let seed = a.seed.unwrap_or(0);
    let (mix, mix_path) = read_mix(a.mix.as_deref(), seed, a.val_fraction.unwrap_or(0.1))?;
    mix.check().map_err(|e| Failure::Usage(e.to_string()))?;

    let store = AnnotationStore::read_json(store_path)?;
    let tasks = TaskArtifact::read_json(tasks_path)?;
    let templates = match templates_path {
        Some(p) => Templates::read(p)?,
        None => Templates::default(),
    };
    let opts = CompileOptions {
        seed,
        paraphrase: !a.no_paraphrase,
        templates,
    };
    let ds = compile_dataset(&store, &tasks, &opts, &mix)?;
    write_dataset(&ds, out)?;
    let mut inputs = vec![store_path.clone(), tasks_path.clone()];
    inputs.extend(templates_path.cloned());
    inputs.extend(mix_path);
    Ok(Run {
        seed: Some(seed),
        inputs,
        outputs: ["train.jsonl", "val.jsonl", "manifest.json"]
            .iter()
            .map(|f| out.join(f))
            .collect(),
        partial: false,
        summary: json!({ "train": ds.train.len(), "val": ds.val.len() }),
    })
}

fn eval_tasks(names: &[String]) -> Result<Vec<EvalTask>, Failure> {
    if names.is_empty() || names.iter().any(|n| n == "all") {
        return Ok(EvalTask::ALL.to_vec());
    }
    names
        .iter()
        .map(|n| n.parse().map_err(|e: crate::Error| Failure::Usage(e.to_string())))
        .collect()
}

fn eval_cmd(a: &EvalArgs) -> Result<Run, Failure> {
    let gt_path = existing(&a.gt, "gt")?;
    let pred_path = existing(&a.pred, "pred")?;
    let store_path = optional_existing(&a.store, "store")?;
    let masks_path = optional_existing(&a.masks, "masks")?;
    let out = required(&a.out, "out")?;
    let tasks = eval_tasks(&a.task)?;

    let samples = read_jsonl(gt_path)?;
    let preds = read_predictions(pred_path)?;
    let store = store_path.map(|p| AnnotationStore::read_json(p)).transpose()?;
    let masks = masks_path.map(|p| read_masks(p)).transpose()?;
    let ctx = EvalContext {
        store: store.as_ref(),
        masks: masks.as_ref(),
    };
    let report = evaluate(&samples, &preds, &tasks, &ctx, &EvalSettings::default());
    ensure_parent(out)?;
    report.write(out)?;
    let avg: BTreeMap<String, Value> = report
        .tables
        .iter()
        .map(|t| (format!("{}/{}", t.task, t.metric), json!(t.avg)))
        .collect();
    let mut inputs = vec![gt_path.clone(), pred_path.clone()];
    inputs.extend(store_path.cloned());
    inputs.extend(masks_path.cloned());
    Ok(Run {
        seed: None,
        inputs,
        outputs: vec![out.clone(), out.with_extension("csv")],
        partial: false,
        summary: json!({ "samples": samples.len(), "predictions": preds.len(), "avg": avg }),
    })
}

fn echo_gt_cmd(a: &EchoGtArgs) -> Result<Run, Failure> {
    let gt_path = existing(&a.gt, "gt")?;
    let store_path = optional_existing(&a.store, "store")?;
    let out = required(&a.out, "out")?;
    if a.masks_out.is_some() && store_path.is_none() {
        return usage("--masks-out needs --store");
    }
    let samples = read_jsonl(gt_path)?;
    ensure_parent(out)?;
    write_predictions(&echo_predictions(&samples), out)?;
    let mut outputs = vec![out.clone()];
    if let (Some(mpath), Some(spath)) = (&a.masks_out, store_path) {
        let store = AnnotationStore::read_json(spath)?;
        let masks = echo_masks(&store, &samples);
        write_text(mpath, &serde_json::to_string(&masks).map_err(anyhow::Error::from)?)?;
        outputs.push(mpath.clone());
    }
    let mut inputs = vec![gt_path.clone()];
    inputs.extend(store_path.cloned());
    Ok(Run {
        seed: None,
        inputs,
        outputs,
        partial: false,
        summary: json!({ "predictions": samples.len() }),
    })
}

fn policy_eval_cmd(a: &PolicyEvalArgs) -> Result<Run, Failure> {
    let scenes_dir = existing(&a.scenes, "scenes")?;
    let pred_path = optional_existing(&a.pred, "pred")?;
    let masks_path = optional_existing(&a.masks, "masks")?;
    let out = required(&a.out, "out")?;
    let modes = [a.oracle, a.random, pred_path.is_some()].iter().filter(|m| **m).count();
    if modes != 1 {
        return usage("give exactly one of --oracle, --random, --pred");
    }
    let cos = a.cos_threshold.unwrap_or(DEFAULT_COS_THRESHOLD);
    if !(-1.0..=1.0).contains(&cos) {
        return usage("--cos-threshold must lie in [-1, 1]");
    }
    let seed = a.seed.unwrap_or(0);
    let trials = a.trials.unwrap_or(1000);

    let (scenes, bad) = sim::load_scenes(scenes_dir)?;
    if scenes.is_empty() {
        return Err(anyhow::anyhow!("no valid scenes under {}", scenes_dir.display()).into());
    }
    let mut notes: Vec<String> = bad.iter().map(|(p, e)| format!("{}: {e}", p.display())).collect();
    let (mode, plans) = if a.oracle {
        ("oracle", sim::oracle_plans(&scenes)?)
    } else if a.random {
        ("random", sim::random_plans(&scenes, seed, trials))
    } else {
        let preds = read_predictions(pred_path.expect("checked above"))?;
        let masks = masks_path.map(|p| read_masks(p)).transpose()?;
        let (plans, n) = sim::plans_from_predictions(&scenes, &preds, masks.as_ref());
        notes.extend(n);
        ("pred", plans)
    };
    let (report, results) = sim::run_suite(&scenes, &plans, cos);
    ensure_parent(out)?;
    report.write(out)?;
    let mut outputs = vec![out.clone(), out.with_extension("csv")];
    if let Some(p) = &a.trials_out {
        let mut text = String::new();
        for r in &results {
            text.push_str(&serde_json::to_string(r).map_err(anyhow::Error::from)?);
            text.push('\n');
        }
        write_text(p, &text)?;
        outputs.push(p.clone());
    }
    let mut inputs = vec![scenes_dir.clone()];
    inputs.extend(pred_path.cloned());
    inputs.extend(masks_path.cloned());
    Ok(Run {
        seed: a.random.then_some(seed),
        inputs,
        outputs,
        partial: !bad.is_empty(),
        summary: json!({
            "mode": mode,
            "scenes": scenes.len(),
            "avg": report.avg,
            "notes": notes,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_values() {
        let flags = CompileArgs {
            seed: Some(9),
            ..Default::default()
        };
        let file = json!({"seed": 3, "mix": "all", "val_fraction": 0.2});
        let a = overlay(&flags, Some(&file)).unwrap();
        assert_eq!(a.seed, Some(9));
        assert_eq!(a.mix.as_deref(), Some("all"));
        assert_eq!(a.val_fraction, Some(0.2));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let file = json!({"sede": 3});
        assert!(overlay(&CompileArgs::default(), Some(&file)).is_err());
    }

    #[test]
    fn manifest_is_accepted_as_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, r#"{"tool": "avqa", "config": {"seed": 4}, "seed": 4}"#).unwrap();
        assert_eq!(read_config(&p).unwrap(), json!({"seed": 4}));
    }

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(run(["avqa", "compile", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["avqa", "eval", "--gt", "/nonexistent/gt.jsonl"]), EXIT_USAGE);
        assert_eq!(run(["avqa", "policy-eval", "--scenes", "."]), EXIT_USAGE);
        assert_eq!(run(["avqa", "--version"]), EXIT_OK);
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(
            sidecar(Path::new("out/r.json"), "manifest.json"),
            PathBuf::from("out/r.json.manifest.json")
        );
    }
}

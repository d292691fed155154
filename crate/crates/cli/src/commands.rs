use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use tkgqa_core::embedder::{load_params, save_params, EmbedderConfig, EmbedderParams};
use tkgqa_core::evaluation::{comparison_table, evaluate, load_dataset, sweep, write_dataset, EvalOptions, DEFAULT_KS};
use tkgqa_core::gateway::{BackendConfig, BackendKind, Gateway, GenerationRequest, Generator, Purpose};
use tkgqa_core::kg::{dump_quadruples, load_quadruples, QuadrupleFormat, TemporalKG};
use tkgqa_core::plan::{
    parse_plan, render_plan_prompt, Ablation, ExecutionTrace, Pipeline, PipelineConfig, RuleDetector,
    DEFAULT_SEARCH_K,
};
use tkgqa_core::rerank::{DEFAULT_MU, DEFAULT_TOP_N};
use tkgqa_core::store::{load_store, save_store, TemporalKnowledgeStore};
use tkgqa_core::synthetic;
use tkgqa_core::trainer::{read_training_pairs, train as train_params, write_loss_log, write_training_pairs, TrainerConfig};

use crate::{parse_list, pipeline_err, AskArgs, BuildStoreArgs, CliError, EvalArgs, PipelineArgs, PlanArgs, ReplayArgs, Settings, SynthArgs, TrainArgs};

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Pipeline(format!("{}: {e}", path.display())))
}

fn io(e: std::io::Error) -> CliError {
    CliError::Pipeline(e.to_string())
}

fn read_kg(path: &Path) -> Result<TemporalKG, CliError> {
    load_quadruples(open(path)?, QuadrupleFormat::Auto).map_err(|e| pipeline_err(&path.display().to_string())(&e))
}

fn read_params(path: &Path) -> Result<EmbedderParams, CliError> {
    load_params(open(path)?).map_err(|e| pipeline_err(&path.display().to_string())(&e))
}

fn read_store(path: &Path) -> Result<TemporalKnowledgeStore, CliError> {
    load_store(open(path)?).map_err(|e| pipeline_err(&path.display().to_string())(&e))
}

/// A backend config file, or the name `rule_planner`.
pub fn backend_config(spec: &str) -> Result<BackendConfig, CliError> {
    let path = Path::new(spec);
    if !path.exists() && matches!(spec, "rule_planner" | "rule-planner") {
        return Ok(BackendConfig::new(BackendKind::RulePlanner));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("--backend {spec}: {e}")))?;
    let mut config: BackendConfig =
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("--backend {spec}: {e}")))?;
    if let (Some(script), Some(dir)) = (&config.script, path.parent()) {
        if script.is_relative() {
            config.script = Some(dir.join(script));
        }
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("--backend {spec}: {e}")))?;
    Ok(config)
}

fn gateway(settings: &Settings, flag: Option<String>) -> Result<Gateway, CliError> {
    let spec = settings
        .value(flag, "backend")?
        .ok_or_else(|| CliError::Usage("missing --backend (flag or config key)".into()))?;
    Gateway::from_config(&backend_config(&spec)?).map_err(|e| pipeline_err("backend")(&e))
}

pub fn trainer_config(settings: &Settings, a: &TrainArgs) -> Result<TrainerConfig, CliError> {
    let d = TrainerConfig::default();
    let seed = settings.or(a.seed, "seed", d.rng_seed)?;
    let config = TrainerConfig {
        temperature: settings.or(a.tau, "tau", d.temperature)?,
        learning_rate: settings.or(a.lr, "lr", d.learning_rate)?,
        epochs: settings.or(a.epochs, "epochs", d.epochs)?,
        batch_size: settings.or(a.batch_size, "batch-size", d.batch_size)?,
        rng_seed: seed,
        in_batch_negatives: d.in_batch_negatives,
        embedder: EmbedderConfig {
            dim: settings.or(a.dim, "dim", d.embedder.dim)?,
            buckets: settings.or(a.buckets, "buckets", d.embedder.buckets)?,
            prompt_len: settings.or(a.prompt_len, "prompt-len", d.embedder.prompt_len)?,
            seed,
        },
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn pipeline_config(settings: &Settings, a: &PipelineArgs) -> Result<PipelineConfig, CliError> {
    let config = PipelineConfig {
        mu: settings.or(a.mu, "mu", DEFAULT_MU)?,
        top_n: settings.or(a.top_n, "top-n", DEFAULT_TOP_N)?,
        search_k: settings.or(a.search_k, "search-k", DEFAULT_SEARCH_K)?,
        ablation: Ablation {
            no_plan: settings.switch(a.no_plan, "no-plan")?,
            no_rank: settings.switch(a.no_rank, "no-rank")?,
            no_retrieve: settings.switch(a.no_retrieve, "no-retrieve")?,
            no_prompt: settings.switch(a.no_prompt, "no-prompt")?,
            no_rerank: settings.switch(a.no_rerank, "no-rerank")?,
        },
    };
    if !(0.0..=1.0).contains(&config.mu) {
        return Err(CliError::Usage(format!("--mu must lie in [0, 1], got {}", config.mu)));
    }
    if config.top_n == 0 || config.search_k == 0 {
        return Err(CliError::Usage("--top-n and --search-k must be at least 1".into()));
    }
    Ok(config)
}

pub fn build_store(settings: &Settings, a: BuildStoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let kg_path = settings.required_path(a.kg, "kg")?;
    let params_path = settings.required_path(a.params, "params")?;
    let out_path = settings.required_path(a.out, "out")?;
    let kg = read_kg(&kg_path)?;
    let params = read_params(&params_path)?;
    let store = tkgqa_core::store::build_store(&kg, &params).map_err(|e| pipeline_err("build-store")(&e))?;
    let mut sink = create(&out_path)?;
    save_store(&store, &mut sink).map_err(|e| pipeline_err("build-store")(&e))?;
    sink.flush().map_err(io)?;
    writeln!(out, "stored {} facts of dimension {} in {}", store.len(), store.dim(), out_path.display()).map_err(io)
}

pub fn train(settings: &Settings, a: TrainArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = trainer_config(settings, &a)?;
    let kg_path = settings.required_path(a.kg, "kg")?;
    let pairs_path = settings.required_path(a.pairs, "pairs")?;
    let out_path = settings.required_path(a.out, "out")?;
    let loss_log = settings.path(a.loss_log, "loss-log");
    let kg = read_kg(&kg_path)?;
    let pairs = read_training_pairs(open(&pairs_path)?).map_err(|e| pipeline_err("pairs")(&e))?;
    let outcome = train_params(&kg, &pairs, &config).map_err(|e| pipeline_err("train")(&e))?;
    let mut sink = create(&out_path)?;
    save_params(&outcome.params, &mut sink).map_err(|e| pipeline_err("checkpoint")(&e))?;
    sink.flush().map_err(io)?;
    if let Some(path) = loss_log {
        let mut log = create(&path)?;
        write_loss_log(&outcome.epoch_losses, &mut log).map_err(io)?;
        log.flush().map_err(io)?;
    }
    writeln!(out, "initial loss {:.6}", outcome.initial_loss).map_err(io)?;
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        writeln!(out, "epoch {} loss {loss:.6}", i + 1).map_err(io)?;
    }
    writeln!(out, "wrote {}", out_path.display()).map_err(io)
}

pub fn plan(settings: &Settings, a: PlanArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let question = settings
        .value(a.question, "question")?
        .ok_or_else(|| CliError::Usage("missing --question".into()))?;
    let gateway = gateway(settings, a.backend)?;
    let request = GenerationRequest::new(render_plan_prompt(&question), Purpose::Plan);
    let response = gateway.generate(&request).map_err(|e| pipeline_err("plan")(&e))?;
    let plan = parse_plan(&question, &response).map_err(|e| pipeline_err("plan")(&e))?;
    for step in &plan.steps {
        let binding = step.binding.as_ref().map(|b| format!("[{b}] = ")).unwrap_or_default();
        writeln!(out, "{}. {}: {binding}{}", step.index, step.operator, step.objective).map_err(io)?;
    }
    Ok(())
}

struct Loaded {
    store: TemporalKnowledgeStore,
    params: EmbedderParams,
    gateway: Gateway,
    config: PipelineConfig,
}

fn load_pipeline(settings: &Settings, a: PipelineArgs) -> Result<Loaded, CliError> {
    let config = pipeline_config(settings, &a)?;
    let store_path = settings.required_path(a.store, "store")?;
    let params_path = settings.required_path(a.params, "params")?;
    let gateway = gateway(settings, a.backend)?;
    Ok(Loaded {
        store: read_store(&store_path)?,
        params: read_params(&params_path)?,
        gateway,
        config,
    })
}

fn new_pipeline(l: &Loaded, config: PipelineConfig) -> Result<Pipeline<'_>, CliError> {
    Pipeline::new(&l.store, &l.params, &l.gateway, &RuleDetector, config).map_err(|e| pipeline_err("pipeline")(&e))
}

pub fn ask(settings: &Settings, a: AskArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let question = settings
        .value(a.question, "question")?
        .ok_or_else(|| CliError::Usage("missing --question".into()))?;
    let trace_path = settings.path(a.trace, "trace");
    let loaded = load_pipeline(settings, a.pipeline)?;
    let pipeline = new_pipeline(&loaded, loaded.config)?;
    let (trace, failure) = match pipeline.answer(&question) {
        Ok(trace) => (trace, None),
        Err(f) => (f.trace, Some(f.error)),
    };
    if let Some(path) = trace_path {
        write_file(&path, trace.to_json().as_bytes())?;
    }
    if let Some(error) = failure {
        if let Some(step) = trace.steps.last() {
            writeln!(err, "failed at step {} ({}: {})", step.step, step.operator, step.resolved).map_err(io)?;
        }
        return Err(CliError::Pipeline(error.to_string()));
    }
    let labels = loaded.config.ablation.labels();
    if !labels.is_empty() {
        writeln!(out, "# ablation: {}", labels.join(", ")).map_err(io)?;
    }
    for answer in &trace.final_answers {
        writeln!(out, "{answer}").map_err(io)?;
    }
    Ok(())
}

pub fn eval(settings: &Settings, a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dataset = settings.required_path(a.dataset, "dataset")?;
    let ks = match settings.value(a.k, "k")? {
        Some(text) => parse_list(&text, "k")?,
        None => DEFAULT_KS.to_vec(),
    };
    let ns = settings.value(a.sweep_n, "sweep-n")?.map(|t| parse_list(&t, "sweep-n")).transpose()?;
    let opts = EvalOptions {
        ks,
        jobs: settings.or(a.jobs, "jobs", 1)?.max(1),
        timing: settings.switch(a.timing, "timing")?,
    };
    let report_path = settings.path(a.report, "report");
    let items = load_dataset(open(&dataset)?).map_err(|e| pipeline_err("dataset")(&e))?;
    let loaded = load_pipeline(settings, a.pipeline)?;
    match ns {
        None => {
            let pipeline = new_pipeline(&loaded, loaded.config)?;
            let report = evaluate(&items, &pipeline, &opts).map_err(|e| pipeline_err("eval")(&e))?;
            write!(out, "{}", report.to_table()).map_err(io)?;
            if let Some(path) = report_path {
                write_file(&path, report.to_json().as_bytes())?;
            }
        }
        Some(ns) => {
            new_pipeline(&loaded, loaded.config)?;
            let reports = sweep(&items, &ns, &opts, |n| {
                let config = PipelineConfig { top_n: n, ..loaded.config };
                Pipeline::new(&loaded.store, &loaded.params, &loaded.gateway, &RuleDetector, config)
                    .expect("fingerprint checked above")
            })
            .map_err(|e| pipeline_err("eval")(&e))?;
            let labelled: Vec<(String, &_)> = reports.iter().map(|r| (format!("n={}", r.settings.top_n), r)).collect();
            write!(out, "{}", comparison_table(&labelled, opts.ks[0])).map_err(io)?;
            if let Some(path) = report_path {
                let json = serde_json::to_string_pretty(&reports).expect("reports serialize");
                write_file(&path, json.as_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn replay_script(settings: &Settings, a: ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let trace_path = settings.required_path(a.trace, "trace")?;
    let out_path = settings.required_path(a.out, "out")?;
    let text = fs::read_to_string(&trace_path).map_err(|e| CliError::Pipeline(format!("{}: {e}", trace_path.display())))?;
    let trace: ExecutionTrace = serde_json::from_str(&text).map_err(|e| pipeline_err("trace")(&e))?;
    let script = trace.replay_script();
    write_file(&out_path, script.to_json().as_bytes())?;
    writeln!(out, "wrote {} entries to {}", script.entries().len(), out_path.display()).map_err(io)
}

fn scripted_backend_toml(script: &str) -> String {
    format!("kind = \"scripted\"\nscript = \"{script}\"\n")
}

/// Contents of every bundled data file, by file name.
pub fn synthetic_files(seed: u64, questions: usize) -> Vec<(String, Vec<u8>)> {
    let tsv = |kg: &TemporalKG| {
        let mut buf = Vec::new();
        dump_quadruples(kg, &mut buf).expect("writing to memory");
        buf
    };
    let pairs = |kg: &TemporalKG| {
        let mut buf = Vec::new();
        write_training_pairs(&synthetic::fact_pairs(kg), &mut buf).expect("writing to memory");
        buf
    };
    let case = synthetic::case_study_kg();
    let suite = synthetic::ablation_suite(seed, questions);
    let files: Vec<(&str, Vec<u8>)> = vec![
        ("case_study.tsv", tsv(&case)),
        ("case_study_pairs.jsonl", pairs(&case)),
        ("case_study_script.json", synthetic::case_study_script().to_json().into_bytes()),
        ("case_study_backend.toml", scripted_backend_toml("case_study_script.json").into_bytes()),
        ("suite.tsv", tsv(&suite.kg)),
        ("suite_pairs.jsonl", pairs(&suite.kg)),
        ("suite.jsonl", write_dataset(&suite.items).into_bytes()),
        ("suite_script.json", suite.script.to_json().into_bytes()),
        ("suite_backend.toml", scripted_backend_toml("suite_script.json").into_bytes()),
    ];
    files.into_iter().map(|(n, b)| (n.to_string(), b)).collect()
}

pub fn synth(settings: &Settings, a: SynthArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let dir: PathBuf = settings.required_path(a.out_dir, "out-dir")?;
    let seed = settings.or(a.seed, "seed", 0)?;
    let questions = settings.or(a.questions, "questions", 50)?;
    fs::create_dir_all(&dir).map_err(io)?;
    for (name, bytes) in synthetic_files(seed, questions) {
        write_file(&dir.join(&name), &bytes)?;
        writeln!(out, "wrote {}", dir.join(&name).display()).map_err(io)?;
    }
    Ok(())
}

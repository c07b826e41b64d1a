//! Command-line front end: train, predict, eval, synth, movement.
//!
//! Every option can come from a JSON config file named by the
//! GEOINFER_CONFIG environment variable; command-line flags win over
//! config values. Exit codes: 0 success, 1 config error, 2 data error,
//! 3 internal error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use geoinfer::bundle::{load_bundle, save_bundle, ModelBundle};
use geoinfer::corpus::{
    load_corpus, save_corpus, Gazetteer, Granularity, LocationTaxonomy, UserRecord,
};
use geoinfer::ensemble::{
    predict_user, train_predictor, ClassifierId, Combiner, EnsembleContext, EnsembleSpec,
    HierarchySpec, PredictorSpec, TrainParams,
};
use geoinfer::eval::synth::{demo_gazetteer, demo_taxonomy, synthesize_corpus, SynthSpec};
use geoinfer::eval::{run_experiment, write_metrics_tsv, write_report_text, EvalError, ExperimentConfig};
use geoinfer::features::StopwordList;
use geoinfer::movement::{movement_stats, predict_traveling, train_travel_model, write_movement_report};

const CONFIG_ENV: &str = "GEOINFER_CONFIG";
const DEFAULT_TRAVEL_THRESHOLD_MILES: f64 = 100.0;
const DEFAULT_FOLDS: usize = 10;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successful exits, not mistakes.
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

#[derive(Parser)]
#[command(
    name = "geoinfer",
    version,
    about = "Infer social-media users' home locations from text and posting times"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model bundle from a labeled corpus
    Train(CommonArgs),
    /// Predict home locations for the users in a corpus
    Predict(CommonArgs),
    /// Cross-validated evaluation with a metrics file
    Eval(CommonArgs),
    /// Generate a synthetic corpus with a known ground truth
    Synth(CommonArgs),
    /// Report per-user movement statistics from geotagged messages
    Movement(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Train(a)
            | Command::Predict(a)
            | Command::Eval(a)
            | Command::Synth(a)
            | Command::Movement(a) => a,
        }
    }
}

#[derive(Args, Default)]
struct CommonArgs {
    /// User corpus, one JSON record per line
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Location taxonomy table (cities and states)
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Gazetteer table mapping surface forms to places
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Stopword list, one token per line (builtin list when omitted)
    #[arg(long)]
    stopwords: Option<PathBuf>,
    /// Model bundle path: written by train, read by predict
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output file (stdout when omitted; eval requires it)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Prediction granularity: city, state, timezone, census, federal
    #[arg(long)]
    granularity: Option<String>,
    /// Two-stage prediction: first-level granularity, then city within it
    #[arg(long)]
    hierarchy: Option<String>,
    /// Comma-separated ensemble members, e.g. words,hashtags,behavior
    #[arg(long)]
    members: Option<String>,
    /// Vote combiner: dynamic or majority
    #[arg(long)]
    combiner: Option<String>,
    /// Cross-validation fold count
    #[arg(long)]
    folds: Option<usize>,
    /// Random seed (required for eval and synth)
    #[arg(long)]
    seed: Option<u64>,
    /// Keep only each user's most recent N messages
    #[arg(long)]
    cap_messages: Option<usize>,
    /// Drop users the travel model flags before testing on them
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    travel_filter: Option<bool>,
    /// Geotag spread that marks a user as traveling
    #[arg(long)]
    travel_threshold_miles: Option<f64>,
    /// Abort loading at the first malformed corpus record
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    strict: Option<bool>,
}

/// One resolved option set per run. Config-file fields mirror the flags,
/// plus knobs too niche to deserve flags (term selection thresholds,
/// synthetic corpus shaping).
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    corpus: Option<PathBuf>,
    taxonomy: Option<PathBuf>,
    gazetteer: Option<PathBuf>,
    stopwords: Option<PathBuf>,
    model: Option<PathBuf>,
    out: Option<PathBuf>,
    granularity: Option<String>,
    hierarchy: Option<String>,
    members: Option<Vec<String>>,
    combiner: Option<String>,
    folds: Option<usize>,
    seed: Option<u64>,
    cap_messages: Option<usize>,
    travel_filter: Option<bool>,
    travel_threshold_miles: Option<f64>,
    strict: Option<bool>,
    alpha: Option<f64>,
    k_percent: Option<f64>,
    t_diff: Option<f64>,
    t_max: Option<f64>,
    slot_minutes: Option<u32>,
    relaxed_radii: Option<Vec<f64>>,
    ablate: Option<bool>,
    users_per_city: Option<u32>,
    messages_per_user: Option<u32>,
    words_per_message: Option<u32>,
    traveler_fraction: Option<f64>,
    cities_per_zone: Option<usize>,
}

impl RunConfig {
    fn from_env() -> Result<Self, CliError> {
        let Some(path) = std::env::var_os(CONFIG_ENV) else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.to_string_lossy()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            CliError::Config(format!("bad config {}: {e}", path.to_string_lossy()))
        })
    }

    /// Flags win over config values; absent flags leave config values alone.
    fn apply_flags(&mut self, a: &CommonArgs) {
        let members = a
            .members
            .as_ref()
            .map(|s| s.split(',').map(|m| m.trim().to_string()).collect());
        override_opt(&mut self.corpus, &a.corpus);
        override_opt(&mut self.taxonomy, &a.taxonomy);
        override_opt(&mut self.gazetteer, &a.gazetteer);
        override_opt(&mut self.stopwords, &a.stopwords);
        override_opt(&mut self.model, &a.model);
        override_opt(&mut self.out, &a.out);
        override_opt(&mut self.granularity, &a.granularity);
        override_opt(&mut self.hierarchy, &a.hierarchy);
        override_opt(&mut self.members, &members);
        override_opt(&mut self.combiner, &a.combiner);
        override_opt(&mut self.folds, &a.folds);
        override_opt(&mut self.seed, &a.seed);
        override_opt(&mut self.cap_messages, &a.cap_messages);
        override_opt(&mut self.travel_filter, &a.travel_filter);
        override_opt(&mut self.travel_threshold_miles, &a.travel_threshold_miles);
        override_opt(&mut self.strict, &a.strict);
    }

    fn train_params(&self) -> TrainParams {
        let mut params = TrainParams::default();
        if let Some(v) = self.alpha {
            params.alpha = v;
        }
        if let Some(v) = self.k_percent {
            params.local_terms.k_percent = v;
        }
        if let Some(v) = self.t_diff {
            params.local_terms.t_diff = v;
        }
        if let Some(v) = self.t_max {
            params.local_terms.t_max = v;
        }
        if let Some(v) = self.slot_minutes {
            params.slot_minutes = v;
        }
        params
    }

    fn travel_threshold(&self) -> f64 {
        self.travel_threshold_miles
            .unwrap_or(DEFAULT_TRAVEL_THRESHOLD_MILES)
    }
}

fn override_opt<T: Clone>(target: &mut Option<T>, flag: &Option<T>) {
    if flag.is_some() {
        target.clone_from(flag);
    }
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Data(msg) => write!(f, "{msg}"),
            CliError::Internal(msg) => write!(f, "{msg}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_env()?;
    cfg.apply_flags(cli.command.args());
    match cli.command {
        Command::Train(_) => cmd_train(&cfg),
        Command::Predict(_) => cmd_predict(&cfg),
        Command::Eval(_) => cmd_eval(&cfg),
        Command::Synth(_) => cmd_synth(&cfg),
        Command::Movement(_) => cmd_movement(&cfg),
    }
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Config(format!("missing required option --{flag}")))
}

fn load_taxonomy(path: &Path) -> Result<LocationTaxonomy, CliError> {
    LocationTaxonomy::load(path)
        .map_err(|e| CliError::Data(format!("taxonomy {}: {e}", path.display())))
}

fn load_stopwords(path: &Option<PathBuf>) -> Result<StopwordList, CliError> {
    match path {
        Some(p) => StopwordList::load(p)
            .map_err(|e| CliError::Data(format!("stopwords {}: {e}", p.display()))),
        None => Ok(StopwordList::default_english()),
    }
}

/// Place-mention classifiers resolve surface forms through the gazetteer,
/// so configuring one without a gazetteer path is a config error. Other
/// members run fine with an empty one.
fn load_gazetteer(
    path: &Option<PathBuf>,
    taxonomy: &LocationTaxonomy,
    members: &[ClassifierId],
) -> Result<Gazetteer, CliError> {
    match path {
        Some(p) => Gazetteer::load(p, taxonomy)
            .map_err(|e| CliError::Data(format!("gazetteer {}: {e}", p.display()))),
        None => {
            if let Some(m) = members
                .iter()
                .find(|m| matches!(m, ClassifierId::PlaceNames | ClassifierId::LocalPlace))
            {
                return Err(CliError::Config(format!(
                    "member '{}' needs --gazetteer",
                    m.as_str()
                )));
            }
            Gazetteer::from_entries(Vec::new(), taxonomy)
                .map_err(|e| CliError::Internal(format!("empty gazetteer: {e}")))
        }
    }
}

fn load_users(
    path: &Path,
    taxonomy: &LocationTaxonomy,
    strict: bool,
) -> Result<Vec<UserRecord>, CliError> {
    let load = load_corpus(path, taxonomy, strict)
        .map_err(|e| CliError::Data(format!("corpus {}: {e}", path.display())))?;
    if !load.rejected.is_empty() {
        eprintln!("skipped {} malformed corpus records", load.rejected.len());
    }
    if load.users.is_empty() {
        return Err(CliError::Data(format!(
            "corpus {} has no usable users",
            path.display()
        )));
    }
    Ok(load.users)
}

fn parse_members(cfg: &RunConfig) -> Result<Vec<ClassifierId>, CliError> {
    let Some(names) = &cfg.members else {
        // Content plus heuristic members work at every granularity; the
        // behavior member only speaks time zones, so it must be asked for.
        return Ok(vec![
            ClassifierId::Words,
            ClassifierId::Hashtags,
            ClassifierId::PlaceNames,
            ClassifierId::LocalPlace,
            ClassifierId::VisitHistory,
        ]);
    };
    names
        .iter()
        .map(|n| {
            ClassifierId::parse(n)
                .ok_or_else(|| CliError::Config(format!("unknown ensemble member '{n}'")))
        })
        .collect()
}

fn parse_granularity(name: &str) -> Result<Granularity, CliError> {
    Granularity::parse(name)
        .ok_or_else(|| CliError::Config(format!("unknown granularity '{name}'")))
}

fn build_predictor_spec(cfg: &RunConfig) -> Result<PredictorSpec, CliError> {
    let members = parse_members(cfg)?;
    let combiner = match &cfg.combiner {
        Some(name) => Combiner::parse(name)
            .ok_or_else(|| CliError::Config(format!("unknown combiner '{name}'")))?,
        None => Combiner::DynamicWeighted,
    };
    let spec = match &cfg.hierarchy {
        Some(level) => {
            if cfg.granularity.as_deref().is_some_and(|g| g != "city") {
                return Err(CliError::Config(
                    "--hierarchy always predicts cities; drop --granularity".into(),
                ));
            }
            PredictorSpec::Hierarchical(HierarchySpec {
                first_level: parse_granularity(level)?,
                members,
                combiner,
            })
        }
        None => {
            let granularity = match &cfg.granularity {
                Some(name) => parse_granularity(name)?,
                None => Granularity::City,
            };
            PredictorSpec::Flat(EnsembleSpec {
                members,
                combiner,
                granularity,
            })
        }
    };
    spec.validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(spec)
}

fn spec_name(spec: &PredictorSpec) -> String {
    let (shape, members, combiner) = match spec {
        PredictorSpec::Flat(s) => (
            format!("flat:{}", s.granularity),
            &s.members,
            s.combiner,
        ),
        PredictorSpec::Hierarchical(s) => (
            format!("hier:{}", s.first_level),
            &s.members,
            s.combiner,
        ),
    };
    let members: Vec<&str> = members.iter().map(|m| m.as_str()).collect();
    format!(
        "{shape}|members={}|combiner={}",
        members.join("+"),
        combiner.as_str()
    )
}

/// Stable one-line description of the run, recorded in the metrics file so
/// rows from different runs can be told apart.
fn config_name(cfg: &RunConfig, spec: &PredictorSpec) -> String {
    let cap = cfg
        .cap_messages
        .map_or("none".to_string(), |c| c.to_string());
    format!(
        "{}|folds={}|seed={}|cap={cap}|filter={}",
        spec_name(spec),
        cfg.folds.unwrap_or(DEFAULT_FOLDS),
        cfg.seed.unwrap_or(0),
        if cfg.travel_filter.unwrap_or(false) {
            "on"
        } else {
            "off"
        },
    )
}

/// Writer on --out when set, stdout otherwise.
fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    match out {
        Some(p) => {
            let file = File::create(p)
                .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let taxonomy_path = require(&cfg.taxonomy, "taxonomy")?;
    let model_path = require(&cfg.model, "model")?;
    let spec = build_predictor_spec(cfg)?;
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let stopwords = load_stopwords(&cfg.stopwords)?;
    let members: Vec<ClassifierId> = match &spec {
        PredictorSpec::Flat(s) => s.members.clone(),
        PredictorSpec::Hierarchical(s) => s.members.clone(),
    };
    let gazetteer = load_gazetteer(&cfg.gazetteer, &taxonomy, &members)?;
    let users = load_users(corpus_path, &taxonomy, cfg.strict.unwrap_or(false))?;
    let ctx = EnsembleContext {
        taxonomy: &taxonomy,
        gazetteer: &gazetteer,
        stopwords: &stopwords,
    };
    let params = cfg.train_params();
    let predictor = train_predictor(&spec, &users, &ctx, &params)
        .map_err(|e| CliError::Data(format!("training failed: {e}")))?;
    let travel = if cfg.travel_filter.unwrap_or(false) {
        let model = train_travel_model(&users, &gazetteer, &stopwords, cfg.travel_threshold())
            .map_err(|e| CliError::Data(format!("travel model training failed: {e}")))?;
        Some(model)
    } else {
        None
    };
    let bundle = ModelBundle::new(&taxonomy, predictor, travel);
    save_bundle(model_path, &bundle)
        .map_err(|e| CliError::Internal(format!("cannot write model: {e}")))?;
    println!(
        "trained {} on {} users; model written to {}",
        spec_name(&spec),
        users.len(),
        model_path.display()
    );
    Ok(())
}

fn cmd_predict(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let taxonomy_path = require(&cfg.taxonomy, "taxonomy")?;
    let model_path = require(&cfg.model, "model")?;
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let bundle = load_bundle(model_path, &taxonomy)
        .map_err(|e| CliError::Data(format!("model {}: {e}", model_path.display())))?;
    if let Some(name) = &cfg.granularity {
        let asked = parse_granularity(name)?;
        let have = bundle.predictor.output_granularity();
        if asked != have {
            return Err(CliError::Config(format!(
                "model predicts {have}, not {asked}"
            )));
        }
    }
    let stopwords = load_stopwords(&cfg.stopwords)?;
    let gazetteer = match &cfg.gazetteer {
        Some(p) => Gazetteer::load(p, &taxonomy)
            .map_err(|e| CliError::Data(format!("gazetteer {}: {e}", p.display())))?,
        None => Gazetteer::from_entries(Vec::new(), &taxonomy)
            .map_err(|e| CliError::Internal(format!("empty gazetteer: {e}")))?,
    };
    let users = load_users(corpus_path, &taxonomy, cfg.strict.unwrap_or(false))?;
    let ctx = EnsembleContext {
        taxonomy: &taxonomy,
        gazetteer: &gazetteer,
        stopwords: &stopwords,
    };
    let mut sink = open_sink(&cfg.out)?;
    let io_err = |e: std::io::Error| CliError::Internal(format!("cannot write predictions: {e}"));
    if bundle.travel.is_some() {
        writeln!(sink, "user_id\tlabel\tweight\tfell_back\ttraveling").map_err(io_err)?;
    } else {
        writeln!(sink, "user_id\tlabel\tweight\tfell_back").map_err(io_err)?;
    }
    for user in &users {
        let record = predict_user(&bundle.predictor, user, &ctx);
        let mut line = format!(
            "{}\t{}\t{:.6}\t{}",
            user.user_id, record.prediction.label, record.prediction.weight, record.fell_back
        );
        if let Some(model) = &bundle.travel {
            let traveling = predict_traveling(model, user, &gazetteer, &stopwords);
            line.push('\t');
            line.push_str(if traveling { "true" } else { "false" });
        }
        writeln!(sink, "{line}").map_err(io_err)?;
    }
    sink.flush().map_err(io_err)?;
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let taxonomy_path = require(&cfg.taxonomy, "taxonomy")?;
    let out_path = require(&cfg.out, "out")?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Config("eval needs an explicit --seed".into()))?;
    let spec = build_predictor_spec(cfg)?;
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let stopwords = load_stopwords(&cfg.stopwords)?;
    let members: Vec<ClassifierId> = match &spec {
        PredictorSpec::Flat(s) => s.members.clone(),
        PredictorSpec::Hierarchical(s) => s.members.clone(),
    };
    let gazetteer = load_gazetteer(&cfg.gazetteer, &taxonomy, &members)?;
    let users = load_users(corpus_path, &taxonomy, cfg.strict.unwrap_or(false))?;
    let ctx = EnsembleContext {
        taxonomy: &taxonomy,
        gazetteer: &gazetteer,
        stopwords: &stopwords,
    };
    let name = config_name(cfg, &spec);
    let config = ExperimentConfig {
        predictor: spec,
        folds: cfg.folds.unwrap_or(DEFAULT_FOLDS),
        seed,
        params: cfg.train_params(),
        cap_messages: cfg.cap_messages,
        travel_filter: cfg.travel_filter.unwrap_or(false),
        travel_threshold_miles: cfg.travel_threshold(),
        relaxed_radii: cfg.relaxed_radii.clone().unwrap_or_default(),
        ablate: cfg.ablate.unwrap_or(false),
    };
    let report = run_experiment(&users, &ctx, &config).map_err(|e| match e {
        EvalError::BadConfig(msg) => CliError::Config(msg),
        other => CliError::Data(format!("evaluation failed: {other}")),
    })?;
    let mut stdout = std::io::stdout().lock();
    write_report_text(&report, &mut stdout)
        .map_err(|e| CliError::Internal(format!("cannot write report: {e}")))?;
    let file = File::create(out_path)
        .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", out_path.display())))?;
    let mut metrics = BufWriter::new(file);
    write_metrics_tsv(&report, &name, &mut metrics)
        .map_err(|e| CliError::Internal(format!("cannot write metrics: {e}")))?;
    metrics
        .flush()
        .map_err(|e| CliError::Internal(format!("cannot write metrics: {e}")))?;
    Ok(())
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out_path = require(&cfg.out, "out")?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::Config("synth needs an explicit --seed".into()))?;
    let mut spec = SynthSpec {
        seed,
        ..SynthSpec::default()
    };
    if let Some(v) = cfg.users_per_city {
        spec.users_per_city = v;
    }
    if let Some(v) = cfg.messages_per_user {
        spec.messages_per_user = v;
    }
    if let Some(v) = cfg.words_per_message {
        spec.words_per_message = v;
    }
    if let Some(v) = cfg.traveler_fraction {
        spec.traveler_fraction = v;
    }
    if let Some(v) = cfg.travel_threshold_miles {
        spec.travel_threshold_miles = v;
    }
    let taxonomy = demo_taxonomy(cfg.cities_per_zone.unwrap_or(5));
    let corpus = synthesize_corpus(&spec, &taxonomy)
        .map_err(|e| CliError::Config(format!("bad corpus shape: {e}")))?;
    save_corpus(out_path, &corpus.users)
        .map_err(|e| CliError::Internal(format!("cannot write corpus: {e}")))?;
    if let Some(p) = &cfg.taxonomy {
        taxonomy
            .save(p)
            .map_err(|e| CliError::Internal(format!("cannot write taxonomy: {e}")))?;
    }
    if let Some(p) = &cfg.gazetteer {
        demo_gazetteer(&taxonomy)
            .save(p)
            .map_err(|e| CliError::Internal(format!("cannot write gazetteer: {e}")))?;
    }
    let messages: usize = corpus.users.iter().map(|u| u.messages.len()).sum();
    println!(
        "wrote {} users ({} messages, {} travelers) to {}",
        corpus.users.len(),
        messages,
        corpus.bookkeeping.travelers.len(),
        out_path.display()
    );
    Ok(())
}

fn cmd_movement(cfg: &RunConfig) -> Result<(), CliError> {
    let corpus_path = require(&cfg.corpus, "corpus")?;
    let taxonomy_path = require(&cfg.taxonomy, "taxonomy")?;
    let taxonomy = load_taxonomy(taxonomy_path)?;
    let users = load_users(corpus_path, &taxonomy, cfg.strict.unwrap_or(false))?;
    let stats: Vec<_> = users.iter().map(movement_stats).collect();
    let mut sink = open_sink(&cfg.out)?;
    write_movement_report(&mut sink, &stats, cfg.travel_threshold())
        .map_err(|e| CliError::Internal(format!("cannot write report: {e}")))?;
    sink.flush()
        .map_err(|e| CliError::Internal(format!("cannot write report: {e}")))?;
    Ok(())
}

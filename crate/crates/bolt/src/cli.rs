//! Command-line surface. Every pipeline is orchestrated here; diagnostics go
//! to stderr, data to stdout or `--out`. Exit codes: 0 success, 1 usage or
//! configuration error, 2 data error, 3 backend/transport error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analytics::{
    adaptability_matrix, first_turn_profile, frequency_profile, mean_position_profile,
    profile_difference, profile_from_vectors, BehaviorProfile, ComparisonTable, Measure, Unit,
};
use crate::classification::{
    check_pool_disjoint, classify_annotated, classify_corpus, merge_predictions,
    predictions_to_jsonl, ClassifierMode, ClassifierSpec,
};
use crate::config::{load_config, Config};
use crate::corpus::{
    corpus_stats, corpus_to_jsonl, load_corpus, save_corpus, validate, Conversation, Corpus,
    Quality, Source,
};
use crate::evaluation::{annotated_utterances, per_class_confusion, macro_prf, random_baseline, run_split_evaluation};
use crate::gateway::Gateway;
use crate::lexicon::{lexicon_profile, load_lexicon};
use crate::modulation::{
    builtin_modulations, run_modulation_experiment, Direction, ModulationBackends, ModulationSpec,
};
use crate::report::{
    render, CorpusStatsTable, EvalRow, EvalTable, Format, ModulationRow, ModulationTable,
    RenderSpec, Table, TableKind,
};
use crate::simulation::{
    extract_single_response_tasks, generate_single_response, simulate_full_conversation, SimMode,
    SimulationJob,
};
use crate::taxonomy::{load_builtin_taxonomy, CodeId, Speaker};
use crate::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "bolt",
    version,
    about = "Simulate, classify, and statistically compare therapy conversations"
)]
struct Cli {
    /// TOML config with backends, seeds, and template overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice in the invocation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Backend name declared in the config.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Write data output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Output format: csv, json, or markdown.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Override the selected backend's parallel-call cap.
    #[arg(long, global = true)]
    max_parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Inspect or validate conversation corpora.
    Corpus {
        #[command(subcommand)]
        cmd: CorpusCmd,
    },
    /// Generate therapist responses or whole sessions from references.
    Simulate {
        #[command(subcommand)]
        cmd: SimulateCmd,
    },
    /// Label utterances with behavior codes via a prompted backend.
    Classify(ClassifyArgs),
    /// Score a classifier over seeded train/test splits.
    EvalClassifier(EvalArgs),
    /// Compare behavior profiles of two labeled corpora.
    Analyze {
        #[command(subcommand)]
        cmd: AnalyzeCmd,
    },
    /// Run a paired prompt-modulation experiment.
    Modulate(ModulateArgs),
    /// Re-render a saved JSON table in another format.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum CorpusCmd {
    /// Check schema and invariants; violations are listed on stderr.
    Validate { path: PathBuf },
    /// Per-speaker utterance and word-count statistics.
    Stats { path: PathBuf },
}

#[derive(Subcommand, Debug)]
enum SimulateCmd {
    /// One therapist reply per client-terminated prefix of each reference.
    Single {
        #[arg(long)]
        reference: PathBuf,
    },
    /// Full alternating sessions against a simulated client.
    Full {
        #[arg(long)]
        reference: PathBuf,
        /// Backend that plays the client.
        #[arg(long)]
        client_backend: String,
        #[arg(long, default_value_t = crate::simulation::DEFAULT_MAX_TURNS)]
        max_turns: usize,
    },
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Corpus to classify.
    #[arg(long)]
    input: PathBuf,
    /// therapist or client.
    #[arg(long)]
    speaker: String,
    /// multi_def, multi_def_ex, or binary_def_ex.
    #[arg(long, default_value = "multi_def")]
    mode: String,
    /// Labeled corpus supplying few-shot examples (required for *_ex modes).
    #[arg(long)]
    examples: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k_shots: usize,
    /// Also write the corpus with predicted labels merged in.
    #[arg(long)]
    merge_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Labeled corpus to split and score on.
    #[arg(long)]
    annotated: PathBuf,
    #[arg(long)]
    speaker: String,
    #[arg(long, default_value = "multi_def")]
    mode: String,
    #[arg(long, default_value_t = 3)]
    k_shots: usize,
    #[arg(long, default_value_t = 5)]
    splits: usize,
    /// Train fraction of each split.
    #[arg(long, default_value_t = 0.6)]
    ratio: f64,
}

#[derive(Subcommand, Debug)]
enum AnalyzeCmd {
    /// Per-behavior frequency difference.
    Frequency {
        #[arg(long)]
        compare: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
    },
    /// First-occurrence turn (or mean position) difference.
    Temporal {
        #[arg(long)]
        compare: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        /// first_turn or mean_position.
        #[arg(long, default_value = "first_turn")]
        metric: String,
    },
    /// Therapist response profile conditioned on the preceding client behavior.
    Adaptability {
        #[arg(long)]
        compare: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
    },
    /// Word-category rates of therapist language.
    Lexicon {
        #[arg(long)]
        compare: PathBuf,
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
    },
}

#[derive(Args, Debug)]
struct ModulateArgs {
    /// Reference conversations driving the simulated clients.
    #[arg(long)]
    references: PathBuf,
    /// Target code id of a built-in modulation (e.g. t.problem_solving),
    /// or any code id when --instruction is given.
    #[arg(long)]
    target: String,
    /// Custom steering instruction (defaults to the built-in for the target).
    #[arg(long)]
    instruction: Option<String>,
    /// increase or decrease; required with --instruction.
    #[arg(long)]
    direction: Option<String>,
    #[arg(long)]
    client_backend: String,
    #[arg(long)]
    classifier_backend: String,
    #[arg(long, default_value = "multi_def")]
    classify_mode: String,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Table previously rendered with --format json.
    #[arg(long)]
    input: PathBuf,
    /// frequency_diff, temporal_diff, adaptability_diff, lexicon_diff,
    /// classifier_eval, modulation, or corpus_stats.
    #[arg(long)]
    kind: String,
}

pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders help/version on stdout with exit 0
            if e.use_stderr() {
                eprint!("{e}");
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn parse_speaker(s: &str) -> Result<Speaker> {
    match s {
        "therapist" => Ok(Speaker::Therapist),
        "client" => Ok(Speaker::Client),
        other => Err(Error::Usage(format!(
            "unknown speaker `{other}` (expected therapist or client)"
        ))),
    }
}

fn parse_mode(s: &str) -> Result<ClassifierMode> {
    match s {
        "multi_def" => Ok(ClassifierMode::MultiDef),
        "multi_def_ex" => Ok(ClassifierMode::MultiDefEx),
        "binary_def_ex" => Ok(ClassifierMode::BinaryDefEx),
        other => Err(Error::Usage(format!("unknown classifier mode `{other}`"))),
    }
}

fn parse_kind(s: &str) -> Result<TableKind> {
    match s {
        "frequency_diff" => Ok(TableKind::FrequencyDiff),
        "temporal_diff" => Ok(TableKind::TemporalDiff),
        "adaptability_diff" => Ok(TableKind::AdaptabilityDiff),
        "lexicon_diff" => Ok(TableKind::LexiconDiff),
        "classifier_eval" => Ok(TableKind::ClassifierEval),
        "modulation" => Ok(TableKind::Modulation),
        "corpus_stats" => Ok(TableKind::CorpusStats),
        other => Err(Error::Usage(format!("unknown table kind `{other}`"))),
    }
}

struct Ctx {
    config: Config,
    seed: u64,
    backend_flag: Option<String>,
    format: Format,
    out: Option<PathBuf>,
    max_parallel: Option<usize>,
}

impl Ctx {
    fn gateway_named(&self, name: &str) -> Result<Gateway> {
        let mut cfg = self.config.find_backend(name)?.clone();
        if let Some(mp) = self.max_parallel {
            cfg.max_parallel = mp;
        }
        Gateway::new(cfg, self.config.cache_dir())
    }

    fn gateway(&self) -> Result<Gateway> {
        let mut cfg = self
            .config
            .select_backend(self.backend_flag.as_deref())?
            .clone();
        if let Some(mp) = self.max_parallel {
            cfg.max_parallel = mp;
        }
        Gateway::new(cfg, self.config.cache_dir())
    }

    fn emit(&self, content: &str) -> Result<()> {
        match &self.out {
            Some(path) => {
                fs::write(path, content)?;
                Ok(())
            }
            None => {
                print!("{content}");
                Ok(())
            }
        }
    }

    fn render_spec(&self, table_kind: TableKind) -> RenderSpec {
        RenderSpec {
            format: self.format,
            table_kind,
        }
    }
}

fn group_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "group".to_string())
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => load_config(path)?,
        None => Config::default(),
    };
    let format = match cli.format.as_deref() {
        Some(f) => f.parse()?,
        None => Format::Csv,
    };
    let ctx = Ctx {
        seed: cli.seed.or(config.seed).unwrap_or(0),
        config,
        backend_flag: cli.backend,
        format,
        out: cli.out,
        max_parallel: cli.max_parallel,
    };
    match cli.command {
        Command::Corpus { cmd } => run_corpus(&ctx, cmd),
        Command::Simulate { cmd } => run_simulate(&ctx, cmd),
        Command::Classify(args) => run_classify(&ctx, args),
        Command::EvalClassifier(args) => run_eval(&ctx, args),
        Command::Analyze { cmd } => run_analyze(&ctx, cmd),
        Command::Modulate(args) => run_modulate(&ctx, args),
        Command::Report(args) => run_report(&ctx, args),
    }
}

fn run_corpus(ctx: &Ctx, cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Validate { path } => {
            // bypass load_corpus so all violations are reported, not just the first
            let text = fs::read_to_string(&path)?;
            let mut conversations = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let conv: Conversation =
                    serde_json::from_str(line).map_err(|e| Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                conversations.push(conv);
            }
            let violations = validate(&Corpus::new(conversations));
            if violations.is_empty() {
                eprintln!("{}: valid", path.display());
                Ok(())
            } else {
                for v in &violations {
                    eprintln!("{v}");
                }
                Err(Error::Data(format!(
                    "{} violations in {}",
                    violations.len(),
                    path.display()
                )))
            }
        }
        CorpusCmd::Stats { path } => {
            let corpus = load_corpus(&path)?;
            let stats = corpus_stats(&corpus)?;
            let table = Table::CorpusStats(CorpusStatsTable {
                group: group_id(&path),
                stats,
            });
            ctx.emit(&render(&table, &ctx.render_spec(TableKind::CorpusStats))?)
        }
    }
}

fn run_simulate(ctx: &Ctx, cmd: SimulateCmd) -> Result<()> {
    let templates = ctx.config.templates()?;
    match cmd {
        SimulateCmd::Single { reference } => {
            let references = load_corpus(&reference)?;
            let gateway = ctx.gateway()?;
            let mut out = Vec::new();
            for conv in &references.conversations {
                for prefix in extract_single_response_tasks(conv) {
                    let response = generate_single_response(&gateway, &templates, prefix)?;
                    let mut utterances = prefix.to_vec();
                    let turn = response.index;
                    utterances.push(response);
                    out.push(Conversation {
                        id: format!("{}-sr-{turn}", conv.id),
                        dataset_id: conv.dataset_id.clone(),
                        quality: Quality::Unknown,
                        source: Source::SimSingleResponse,
                        model_id: Some(gateway.config().model_id.clone()),
                        utterances,
                        extra: BTreeMap::new(),
                    });
                }
            }
            ctx.emit(&corpus_to_jsonl(&Corpus::new(out))?)
        }
        SimulateCmd::Full {
            reference,
            client_backend,
            max_turns,
        } => {
            let references = load_corpus(&reference)?;
            let therapist = ctx.gateway()?;
            let client = ctx.gateway_named(&client_backend)?;
            let mut out = Vec::new();
            for (i, conv) in references.conversations.iter().enumerate() {
                let job = SimulationJob {
                    reference: conv.clone(),
                    backend_therapist: therapist.config().clone(),
                    backend_client: Some(client.config().clone()),
                    mode: SimMode::Full,
                    max_turns,
                    seed: ctx.seed + i as u64,
                };
                match simulate_full_conversation(&job, &templates, &therapist, &client) {
                    Ok(conv) => out.push(conv),
                    Err(failure) => {
                        eprintln!(
                            "simulation of `{}` failed after {} utterances; partial transcript:",
                            conv.id,
                            failure.partial.len()
                        );
                        eprintln!("{}", serde_json::to_string(&failure.partial)?);
                        return Err(failure.error);
                    }
                }
            }
            ctx.emit(&corpus_to_jsonl(&Corpus::new(out))?)
        }
    }
}

fn run_classify(ctx: &Ctx, args: ClassifyArgs) -> Result<()> {
    let taxonomy = load_builtin_taxonomy();
    let speaker = parse_speaker(&args.speaker)?;
    let mode = parse_mode(&args.mode)?;
    let corpus = load_corpus(&args.input)?;
    let mut spec = ClassifierSpec::new(mode, speaker);
    spec.k_shots = args.k_shots;
    spec.seed = ctx.seed;
    if mode.uses_examples() {
        let path = args.examples.as_ref().ok_or_else(|| {
            Error::Usage(format!("--examples is required for mode {mode}"))
        })?;
        let pool_corpus = load_corpus(path)?;
        spec.example_pool = annotated_utterances(&pool_corpus, speaker)?;
    }
    let gateway = ctx.gateway()?;
    let output = classify_corpus(&gateway, &spec, &taxonomy, &corpus, speaker)?;
    for f in &output.failures {
        eprintln!(
            "failed: {}#{}: {}",
            f.conversation_id, f.utterance_index, f.message
        );
    }
    if let Some(merge_out) = &args.merge_out {
        let merged = merge_predictions(&corpus, &output.predictions)?;
        save_corpus(&merged, merge_out)?;
    }
    ctx.emit(&predictions_to_jsonl(&output.predictions, mode)?)?;
    if !output.failures.is_empty() {
        return Err(Error::Data(format!(
            "{} utterances failed to classify",
            output.failures.len()
        )));
    }
    Ok(())
}

fn run_eval(ctx: &Ctx, args: EvalArgs) -> Result<()> {
    let taxonomy = load_builtin_taxonomy();
    let speaker = parse_speaker(&args.speaker)?;
    let mode = parse_mode(&args.mode)?;
    let corpus = load_corpus(&args.annotated)?;
    let annotated = annotated_utterances(&corpus, speaker)?;
    let codes: Vec<CodeId> = taxonomy
        .codes_for(speaker)
        .iter()
        .map(|c| c.id.clone())
        .collect();
    let gateway = ctx.gateway()?;
    let report = run_split_evaluation(
        |train, test| {
            let mut spec = ClassifierSpec::new(mode, speaker);
            spec.k_shots = args.k_shots;
            spec.seed = ctx.seed;
            if mode.uses_examples() {
                spec.example_pool = train.to_vec();
                check_pool_disjoint(&spec.example_pool, test)?;
            }
            classify_annotated(&gateway, &spec, &taxonomy, test)
        },
        &annotated,
        &codes,
        args.splits,
        args.ratio,
        ctx.seed,
    )?;
    let baseline = run_split_evaluation(
        |_, test| Ok(random_baseline(test, &codes, ctx.seed)),
        &annotated,
        &codes,
        args.splits,
        args.ratio,
        ctx.seed,
    )?;
    let table = Table::ClassifierEval(EvalTable {
        rows: vec![
            EvalRow {
                label: mode.to_string(),
                precision: report.mean.macro_p,
                recall: report.mean.macro_r,
                f1: report.mean.macro_f1,
                f1_std: report.std.macro_f1,
            },
            EvalRow {
                label: "random".to_string(),
                precision: baseline.mean.macro_p,
                recall: baseline.mean.macro_r,
                f1: baseline.mean.macro_f1,
                f1_std: baseline.std.macro_f1,
            },
        ],
    });
    ctx.emit(&render(&table, &ctx.render_spec(TableKind::ClassifierEval))?)
}

fn load_group(path: &Path) -> Result<(String, Corpus)> {
    Ok((group_id(path), load_corpus(path)?))
}

fn refs(corpus: &Corpus) -> Vec<&Conversation> {
    corpus.conversations.iter().collect()
}

fn run_analyze(ctx: &Ctx, cmd: AnalyzeCmd) -> Result<()> {
    let taxonomy = load_builtin_taxonomy();
    let profile_pair = |compare: &Path,
                        baseline: &Path,
                        f: &dyn Fn(&str, &[&Conversation]) -> Result<BehaviorProfile>|
     -> Result<ComparisonTable> {
        let (cg, cc) = load_group(compare)?;
        let (bg, bc) = load_group(baseline)?;
        profile_difference(&f(&cg, &refs(&cc))?, &f(&bg, &refs(&bc))?)
    };
    match cmd {
        AnalyzeCmd::Frequency { compare, baseline } => {
            let table = profile_pair(&compare, &baseline, &|g, c| {
                frequency_profile(g, c, &taxonomy)
            })?;
            ctx.emit(&render(
                &Table::Comparison(table),
                &ctx.render_spec(TableKind::FrequencyDiff),
            )?)
        }
        AnalyzeCmd::Temporal {
            compare,
            baseline,
            metric,
        } => {
            let table = match metric.as_str() {
                "first_turn" => profile_pair(&compare, &baseline, &|g, c| {
                    first_turn_profile(g, c, &taxonomy)
                })?,
                "mean_position" => profile_pair(&compare, &baseline, &|g, c| {
                    mean_position_profile(g, c, &taxonomy)
                })?,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown temporal metric `{other}` (first_turn or mean_position)"
                    )))
                }
            };
            ctx.emit(&render(
                &Table::Comparison(table),
                &ctx.render_spec(TableKind::TemporalDiff),
            )?)
        }
        AnalyzeCmd::Adaptability { compare, baseline } => {
            let (cg, cc) = load_group(&compare)?;
            let (bg, bc) = load_group(&baseline)?;
            let cm = adaptability_matrix(&cg, &refs(&cc), &taxonomy)?;
            let bm = adaptability_matrix(&bg, &refs(&bc), &taxonomy)?;
            let mut combined = ComparisonTable {
                compare_group: cg,
                baseline_group: bg,
                measure: Measure::ConditionalPct,
                rows: Vec::new(),
            };
            for (client_code, compare_profile) in &cm {
                let Some(baseline_profile) = bm.get(client_code) else {
                    continue;
                };
                let diff = profile_difference(compare_profile, baseline_profile)?;
                for mut row in diff.rows {
                    row.behavior = format!("{client_code} \u{2192} {}", row.behavior);
                    combined.rows.push(row);
                }
            }
            ctx.emit(&render(
                &Table::Comparison(combined),
                &ctx.render_spec(TableKind::AdaptabilityDiff),
            )?)
        }
        AnalyzeCmd::Lexicon {
            compare,
            baseline,
            lexicon,
        } => {
            let lex = load_lexicon(&lexicon)?;
            let (cg, cc) = load_group(&compare)?;
            let (bg, bc) = load_group(&baseline)?;
            let cp = profile_from_vectors(
                &cg,
                Measure::FrequencyPct,
                Unit::Conversation,
                lexicon_profile(&refs(&cc), &lex)?,
            );
            let bp = profile_from_vectors(
                &bg,
                Measure::FrequencyPct,
                Unit::Conversation,
                lexicon_profile(&refs(&bc), &lex)?,
            );
            let table = profile_difference(&cp, &bp)?;
            ctx.emit(&render(
                &Table::Comparison(table),
                &ctx.render_spec(TableKind::LexiconDiff),
            )?)
        }
    }
}

fn run_modulate(ctx: &Ctx, args: ModulateArgs) -> Result<()> {
    let taxonomy = load_builtin_taxonomy();
    let target = CodeId::from(args.target.as_str());
    let spec = match &args.instruction {
        Some(instruction) => {
            let direction = match args.direction.as_deref() {
                Some("increase") => Direction::Increase,
                Some("decrease") => Direction::Decrease,
                Some(other) => {
                    return Err(Error::Usage(format!(
                        "unknown direction `{other}` (increase or decrease)"
                    )))
                }
                None => {
                    return Err(Error::Usage(
                        "--direction is required with --instruction".into(),
                    ))
                }
            };
            ModulationSpec {
                target_code: target.clone(),
                direction,
                instruction: instruction.clone(),
            }
        }
        None => builtin_modulations()
            .into_iter()
            .find(|m| m.target_code == target)
            .ok_or_else(|| {
                Error::Usage(format!(
                    "no built-in modulation for `{target}`; pass --instruction and --direction"
                ))
            })?,
    };
    let references = load_corpus(&args.references)?;
    let templates = ctx.config.templates()?;
    let therapist = ctx.gateway()?;
    let client = ctx.gateway_named(&args.client_backend)?;
    let classifier_gw = ctx.gateway_named(&args.classifier_backend)?;
    let mut classifier = ClassifierSpec::new(parse_mode(&args.classify_mode)?, Speaker::Therapist);
    classifier.seed = ctx.seed;
    let backends = ModulationBackends {
        therapist: &therapist,
        client: &client,
        classifier: &classifier_gw,
    };
    let outcome = run_modulation_experiment(
        &backends,
        &templates,
        &references.conversations,
        &spec,
        &classifier,
        &taxonomy,
        ctx.seed,
    )?;
    let behavior = taxonomy
        .get(&spec.target_code)
        .map(|c| c.display_name.clone())
        .unwrap_or_else(|| spec.target_code.to_string());
    let table = Table::Modulation(ModulationTable {
        rows: vec![ModulationRow {
            behavior,
            group: therapist.config().model_id.clone(),
            baseline_freq: outcome.baseline_freq,
            modulated_freq: outcome.modulated_freq,
            delta: outcome.delta,
            significant: outcome.test.map(|t| t.p < 0.05).unwrap_or(false),
        }],
    });
    ctx.emit(&render(&table, &ctx.render_spec(TableKind::Modulation))?)
}

fn run_report(ctx: &Ctx, args: ReportArgs) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let text = fs::read_to_string(&args.input)?;
    let table = crate::report::parse_json(&text)?;
    ctx.emit(&render(&table, &ctx.render_spec(kind))?)
}

/// Convenience for tests: score predictions already in hand against gold.
pub fn score_predictions(
    preds: &[std::collections::BTreeSet<CodeId>],
    golds: &[std::collections::BTreeSet<CodeId>],
    codes: &[CodeId],
) -> Result<crate::evaluation::MacroScores> {
    Ok(macro_prf(&per_class_confusion(preds, golds, codes)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exit(args: &[&str]) -> i32 {
        cli_main(std::iter::once("bolt").chain(args.iter().copied()))
    }

    #[test]
    fn unknown_flag_exits_1() {
        assert_eq!(exit(&["corpus", "validate", "--bogus", "x"]), 1);
        assert_eq!(exit(&["no-such-command"]), 1);
    }

    #[test]
    fn help_exits_0() {
        assert_eq!(exit(&["--help"]), 0);
    }

    #[test]
    fn invalid_corpus_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.jsonl");
        // empty text violates corpus invariants
        fs::write(
            &bad,
            r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"client","text":"  "}]}"#,
        )
        .unwrap();
        assert_eq!(exit(&["corpus", "validate", bad.to_str().unwrap()]), 2);
    }

    #[test]
    fn valid_corpus_exits_0_and_stats_writes_out() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.jsonl");
        fs::write(
            &good,
            r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"client","text":"hello there"},{"index":1,"speaker":"therapist","text":"welcome in"}]}"#,
        )
        .unwrap();
        assert_eq!(exit(&["corpus", "validate", good.to_str().unwrap()]), 0);

        let out = dir.path().join("stats.csv");
        assert_eq!(
            exit(&[
                "corpus",
                "stats",
                good.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]),
            0
        );
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("group,speaker,"));
        assert!(text.contains("good,therapist,1,1,2.0,0.0"));
    }

    #[test]
    fn missing_backend_config_exits_1() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        fs::write(
            &corpus,
            r#"{"id":"a","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{"index":0,"speaker":"client","text":"hi"}]}"#,
        )
        .unwrap();
        assert_eq!(
            exit(&[
                "classify",
                "--input",
                corpus.to_str().unwrap(),
                "--speaker",
                "therapist",
            ]),
            1
        );
    }

    #[test]
    fn analyze_frequency_end_to_end() {
        let dir = tempfile::tempdir().unwrap();
        let mk = |name: &str, labels: &str| -> PathBuf {
            let path = dir.path().join(name);
            let mut lines = String::new();
            for i in 0..3 {
                lines.push_str(&format!(
                    r#"{{"id":"{name}-{i}","dataset_id":"d","quality":"high","source":"human","model_id":null,"utterances":[{{"index":0,"speaker":"client","text":"hi","labels":[]}},{{"index":1,"speaker":"therapist","text":"resp {i}","labels":{labels}}}]}}"#,
                ));
                lines.push('\n');
            }
            fs::write(&path, lines).unwrap();
            path
        };
        let compare = mk("sim.jsonl", r#"["t.problem_solving"]"#);
        let baseline = mk("high.jsonl", r#"[]"#);
        let out = dir.path().join("t.csv");
        assert_eq!(
            exit(&[
                "analyze",
                "frequency",
                "--compare",
                compare.to_str().unwrap(),
                "--baseline",
                baseline.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ]),
            0
        );
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains("Problem-Solving,sim,+100.00,significant"), "{text}");
    }
}

//! Command-line entry points.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use harnevo_core::env::{new_match, Variant};
use harnevo_core::eval::{SeedRegistry, SeedSet, DEFAULT_DEV_SEEDS};
use harnevo_core::harness::{decide, DecisionSlot};
use harnevo_core::play::{naive_action, AgentSpec};
use harnevo_core::trajectory::{Actor, Trajectory};

use crate::analysis;
use crate::archive::Archive;
use crate::evolve::{
    self, Document, Evaluator, Extras, MatchEvaluator, Proposer, Regime, RemoteProposer, ScriptedEvaluator,
    ScriptedProposer,
};
use crate::gateway::ModelSource;
use crate::runner::{resolve_agent, run_eval, write_artifacts, SUMMARY_FILE};
use crate::server::{self, parse_human_action, AppState};

#[derive(Debug, Parser)]
#[command(name = "harnevo", about = "Harness evaluation, evolution and analysis for two-player dice games")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Paired-seed evaluation of a target against an opponent.
    Eval(EvalArgs),
    /// Run the outer search loop.
    Evolve(EvolveArgs),
    /// Post-hoc analyses.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Play a match in the terminal, one action per input line.
    Play(PlayArgs),
    /// Count hook strings in a request log.
    Audit(AuditArgs),
    /// Inspect an archive.
    #[command(subcommand)]
    Archive(ArchiveCommand),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub task: Variant,
    /// `naive`, a bundled harness id or a .harness file.
    #[arg(long, default_value = "case_a")]
    pub target: String,
    #[arg(long, default_value = "naive")]
    pub opponent: String,
    /// `heldout` or `dev`.
    #[arg(long, default_value = "dev")]
    pub seeds: String,
    #[arg(long, default_value_t = DEFAULT_DEV_SEEDS)]
    pub dev_count: usize,
    /// `constant:<text>`, `scripted:<file>` or `remote`.
    #[arg(long, default_value = "constant:[Call]")]
    pub model: ModelSource,
    #[arg(long, default_value = "eval-output")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    #[arg(long)]
    pub regime: Regime,
    #[arg(long, default_value_t = 10)]
    pub iterations: u32,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// `scripted:<plan.json>` or `remote:<url>`.
    #[arg(long)]
    pub proposer: String,
    #[arg(long, default_value = "small3")]
    pub task: Variant,
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long, default_value = "evolve-run")]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DEV_SEEDS)]
    pub dev_seeds: usize,
    /// Directory of text documents for the open regime.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Archive holding demonstrations for the demo regime; defaults to `--archive`.
    #[arg(long)]
    pub demos_from: Option<PathBuf>,
    #[arg(long, default_value = "base")]
    pub base: String,
    #[arg(long, default_value = "naive")]
    pub opponent: String,
    #[arg(long, default_value = "constant:[Call]")]
    pub model: ModelSource,
    /// `match` or `scripted:<rewards.json>`.
    #[arg(long, default_value = "match")]
    pub evaluator: String,
    #[arg(long, default_value_t = 120)]
    pub proposer_timeout_secs: u64,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Attrition-adjusted resource curves and distances to a human curve.
    Economy(EconomyArgs),
    /// Edit-granularity tallies per evidence arm.
    Complexity(ComplexityArgs),
    /// Same as the top-level `audit`.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct EconomyArgs {
    /// `NAME=PATH`; repeatable. PATH is an economy log, a trajectory file or a directory.
    #[arg(long = "method", required = true)]
    pub methods: Vec<String>,
    #[arg(long)]
    pub human: PathBuf,
    /// Inclusive late window, `A-B`.
    #[arg(long, default_value = "19-23")]
    pub late: String,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    /// Directory for `economy.json` and `curves.tsv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[arg(long)]
    pub strings_file: PathBuf,
    #[arg(long)]
    pub requests: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long, default_value = "small3")]
    pub task: Variant,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "case_a")]
    pub opponent: String,
    #[arg(long, default_value_t = 0)]
    pub human_seat: usize,
    #[arg(long, default_value = "constant:[Call]")]
    pub model: ModelSource,
    /// Store the finished game as a demonstration in this archive.
    #[arg(long)]
    pub archive: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum ArchiveCommand {
    Ls {
        #[arg(long)]
        archive: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value = "constant:[Call]")]
    pub model: ModelSource,
}

type Failure = String;

fn fail<E: std::fmt::Display>(e: E) -> Failure {
    e.to_string()
}

/// Parse `argv` (program name first) and run; returns the exit status.
pub fn run(argv: &[String], out: &mut dyn Write, err: &mut dyn Write, input: &mut dyn BufRead) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli.command, out, input) {
        Ok(()) => 0,
        Err(message) => {
            let _ = writeln!(err, "error: {message}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write, input: &mut dyn BufRead) -> Result<(), Failure> {
    match cmd {
        Command::Eval(a) => eval(a, out),
        Command::Evolve(a) => evolve(a, out),
        Command::Analyze(AnalyzeCommand::Economy(a)) => economy(a, out),
        Command::Analyze(AnalyzeCommand::Complexity(a)) => complexity(a, out),
        Command::Analyze(AnalyzeCommand::Audit(a)) | Command::Audit(a) => audit(a, out),
        Command::Play(a) => play(a, out, input),
        Command::Archive(ArchiveCommand::Ls { archive }) => archive_ls(&archive, out),
        Command::Serve(a) => serve(a, out),
    }
}

fn seed_set(task: Variant, role: &str, dev_count: usize) -> Result<SeedSet, Failure> {
    match role {
        "heldout" | "held_out" | "held-out" => Ok(SeedSet::held_out(task)),
        "dev" | "development" => SeedSet::development(task, dev_count).map_err(fail),
        other => Err(format!("unknown seed role `{other}` (heldout, dev)")),
    }
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let target = resolve_agent(&a.target).map_err(fail)?;
    let opponent = resolve_agent(&a.opponent).map_err(fail)?;
    let set = seed_set(a.task, &a.seeds, a.dev_count)?;
    let registry = SeedRegistry::standard(a.dev_count).map_err(fail)?;
    let mut gateway = a.model.build().map_err(fail)?;
    let artifacts = run_eval(&target, &opponent, &set, &registry, gateway.as_mut()).map_err(fail)?;
    write_artifacts(&a.out, &artifacts).map_err(fail)?;
    let s = &artifacts.summary;
    writeln!(
        out,
        "{} vs {} on {} (n={}): mean {:.4} se {:.4} clean {}\nsummary written to {}",
        s.target,
        s.opponent,
        s.seed_set,
        s.n,
        s.mean_reward,
        s.standard_error,
        s.clean,
        a.out.join(SUMMARY_FILE).display()
    )
    .map_err(fail)
}

fn load_corpus(dir: &Path) -> Result<Vec<Document>, Failure> {
    let mut docs = Vec::new();
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| format!("{}: {e}", dir.display()))?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    for p in paths {
        let text = fs::read_to_string(&p).map_err(|e| format!("{}: {e}", p.display()))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        docs.push(Document { name, text });
    }
    Ok(docs)
}

fn evolve(a: EvolveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let archive = Archive::open(&a.archive).map_err(fail)?;
    let dev = SeedSet::development(a.task, a.dev_seeds).map_err(fail)?;
    let registry = SeedRegistry::standard(a.dev_seeds).map_err(fail)?;
    let mut extras = Extras::default();
    if let Some(c) = &a.corpus {
        extras.corpus = Some(load_corpus(c)?);
    }
    if a.regime == Regime::Demo {
        let source = match &a.demos_from {
            Some(p) => Archive::open(p).map_err(fail)?,
            None => Archive::open(&a.archive).map_err(fail)?,
        };
        extras.demonstrations = Some(source.demonstrations().map_err(fail)?);
    }
    let mut proposer: Box<dyn Proposer> = match a.proposer.split_once(':') {
        Some(("scripted", plan)) => Box::new(ScriptedProposer::from_file(Path::new(plan)).map_err(fail)?),
        Some(("remote", url)) => {
            Box::new(RemoteProposer::new(url, Duration::from_secs(a.proposer_timeout_secs)).map_err(fail)?)
        }
        _ => return Err(format!("unknown proposer `{}` (scripted:<plan>, remote:<url>)", a.proposer)),
    };
    let mut evaluator: Box<dyn Evaluator> = match a.evaluator.split_once(':') {
        None if a.evaluator == "match" => Box::new(MatchEvaluator {
            opponent: resolve_agent(&a.opponent).map_err(fail)?,
            gateway: a.model.build().map_err(fail)?,
        }),
        Some(("scripted", path)) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{path}: {e}"))?;
            let rewards: BTreeMap<String, Vec<f64>> = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
            Box::new(ScriptedEvaluator { rewards })
        }
        _ => return Err(format!("unknown evaluator `{}` (match, scripted:<file>)", a.evaluator)),
    };
    let base = match resolve_agent(&a.base).map_err(fail)? {
        AgentSpec::Harness(d) => d,
        AgentSpec::Naive => return Err("the base must be a harness".into()),
    };
    let config = evolve::EvolveConfig {
        regime: a.regime,
        iterations: a.iterations,
        k: a.k,
        dev_seeds: dev,
        registry,
        extras,
    };
    let outcome =
        evolve::run_evolution(&archive, &base, proposer.as_mut(), evaluator.as_mut(), &config).map_err(fail)?;
    evolve::write_run(&a.out, &outcome).map_err(fail)?;
    let m = &outcome.manifest;
    writeln!(
        out,
        "selected {} (dev reward {:.3}); {} development rollouts of {} budgeted; regime purity {}; held-out blind {}",
        m.selected,
        m.selected_reward,
        m.budget.development_rollouts,
        m.budget.expected_rollouts,
        m.regime_purity,
        m.held_out_blind
    )
    .map_err(fail)
}

fn parse_window(s: &str) -> Result<RangeInclusive<u32>, Failure> {
    let bad = || format!("late window `{s}` must look like 19-23");
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    let (a, b): (u32, u32) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b {
        return Err(bad());
    }
    Ok(a..=b)
}

fn economy(a: EconomyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let late = parse_window(&a.late)?;
    let mut methods = Vec::new();
    for m in &a.methods {
        let (name, path) = m.split_once('=').ok_or_else(|| format!("`{m}` must be NAME=PATH"))?;
        methods.push((name.to_owned(), analysis::load_rollouts(Path::new(path)).map_err(fail)?));
    }
    let human = analysis::load_rollouts(&a.human).map_err(fail)?;
    let report = analysis::analyze_economy(&methods, &human, late, a.window).map_err(fail)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let json = serde_json::to_string_pretty(&report).map_err(fail)? + "\n";
        fs::write(dir.join("economy.json"), json).map_err(fail)?;
        fs::write(dir.join("curves.tsv"), analysis::curve_table(&report)).map_err(fail)?;
    }
    out.write_all(analysis::economy_table(&report).as_bytes()).map_err(fail)
}

fn complexity(a: ComplexityArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let labels = analysis::load_labels(&a.labels).map_err(fail)?;
    let rows = analysis::complexity(&labels);
    if rows.is_empty() {
        return Err("no labelled edits".into());
    }
    out.write_all(analysis::complexity_table(&rows).as_bytes()).map_err(fail)
}

fn audit(a: AuditArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let strings = analysis::load_strings(&a.strings_file).map_err(fail)?;
    let report = analysis::hook_audit(&a.requests, &strings).map_err(fail)?;
    out.write_all(analysis::audit_table(&report).as_bytes()).map_err(fail)
}

fn play(a: PlayArgs, out: &mut dyn Write, input: &mut dyn BufRead) -> Result<(), Failure> {
    if a.human_seat > 1 {
        return Err("--human-seat must be 0 or 1".into());
    }
    let opponent = resolve_agent(&a.opponent).map_err(fail)?;
    let mut gateway = a.model.build().map_err(fail)?;
    let mut state = new_match(a.task, a.seed);
    let mut traj = Trajectory::new(&format!("play-{}-{}", a.task, a.seed), a.task, a.seed, Actor::Human, a.human_seat);
    let mut decisions = 0u32;
    let mut line = String::new();
    let outcome = loop {
        if let Some(o) = state.outcome() {
            break o;
        }
        let seat = state.turn();
        let obs = state.render_observation(seat);
        if seat != a.human_seat {
            let action = match &opponent {
                AgentSpec::Naive => Ok(naive_action(&obs, a.seed)),
                AgentSpec::Harness(d) => {
                    let slot = DecisionSlot { rollout_id: "play", decision_index: decisions, model_name: "scripted" };
                    decide(d, &obs, gateway.as_mut(), &slot).map(|d| d.action).map_err(fail)
                }
            };
            decisions += 1;
            match action.and_then(|x| state.apply_action(x).map(|_| x).map_err(fail)) {
                Ok(x) => writeln!(out, "opponent: {x}").map_err(fail)?,
                Err(e) => {
                    writeln!(out, "opponent forfeits: {e}").map_err(fail)?;
                    state.forfeit(a.human_seat);
                }
            }
            continue;
        }
        let legal: Vec<String> = obs.legal_actions().iter().map(ToString::to_string).collect();
        writeln!(out, "{}\nlegal: {}\n>", obs.rendered_text, legal.join(", ")).map_err(fail)?;
        line.clear();
        if input.read_line(&mut line).map_err(fail)? == 0 {
            return Err("input ended before the match finished; nothing stored".into());
        }
        match parse_human_action(&line).filter(|x| obs.is_legal(x)) {
            Some(x) => {
                state.apply_action(x).map_err(fail)?;
                traj.push(obs, x);
            }
            None => writeln!(out, "illegal action `{}`", line.trim()).map_err(fail)?,
        }
    };
    traj.finish(outcome.reward(a.human_seat), Some(state.render_observation(a.human_seat)));
    writeln!(out, "game over: {:?}, your reward {}", outcome.reason, outcome.reward(a.human_seat)).map_err(fail)?;
    if let Some(dir) = &a.archive {
        let id = Archive::open(dir).map_err(fail)?.store_demonstration(&traj).map_err(fail)?;
        writeln!(out, "stored demonstration {id}").map_err(fail)?;
    }
    Ok(())
}

fn archive_ls(dir: &Path, out: &mut dyn Write) -> Result<(), Failure> {
    let archive = Archive::open(dir).map_err(fail)?;
    writeln!(out, "seq\titeration\tcandidate\tparent\tseed_set\tn\tmean_dev_reward\tclean").map_err(fail)?;
    for e in archive.entries().map_err(fail)? {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
            e.sequence,
            e.iteration,
            e.candidate_id,
            e.parent_id.as_deref().unwrap_or("-"),
            e.seed_set,
            e.n,
            e.mean_dev_reward,
            e.clean
        )
        .map_err(fail)?;
    }
    Ok(())
}

fn serve(a: ServeArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let archive = Arc::new(Archive::open(&a.archive).map_err(fail)?);
    let rt = tokio::runtime::Runtime::new().map_err(fail)?;
    rt.block_on(async {
        let listener = server::bind(a.addr).await.map_err(fail)?;
        let local = listener.local_addr().map_err(fail)?;
        writeln!(out, "listening on http://{local}").map_err(fail)?;
        out.flush().map_err(fail)?;
        server::serve(listener, AppState::new(archive, a.model)).await.map_err(fail)
    })
}

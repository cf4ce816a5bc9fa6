use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use care_control::config::{self, CATALOG_HELP, TRANSPORT_HELP};
use care_control::workbench::{DraftOutcome, RunRecord};
use care_control::{router, AgentChoice, ApiError, AppState, Caller, Tokens, Workbench};
use care_core::artifact_store::{Decision, Verdict};
use care_core::benchmark::{format_percent, load_corpus, Benchmark, GenerationConfig, DEFAULT_GOLD_PRIMARY_K};
use care_core::helper_agent::Submission;
use care_core::phase_engine::{GatePolicy, GateStatus, ProjectConfig};
use care_core::{PhaseId, Role};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "care", version, about = "Stage-gated agent engineering workbench")]
struct Cli {
    /// Directory holding project stores.
    #[arg(long, env = "CARE_ROOT", default_value = "care-data", global = true)]
    root: PathBuf,
    /// Project to act on.
    #[arg(long, env = "CARE_PROJECT", global = true)]
    project: Option<String>,
    #[arg(long, env = "CARE_TRANSPORT", default_value = "simulated", global = true, help = TRANSPORT_HELP)]
    transport: String,
    #[arg(long, env = "CARE_CATALOG", default_value = "live", global = true, help = CATALOG_HELP)]
    catalog: String,
    /// Print JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Who {
    #[arg(long, env = "CARE_ROLE", default_value = "developer")]
    role: Role,
    #[arg(long, env = "CARE_ACTOR", default_value = "cli")]
    actor: String,
}

impl Who {
    fn caller(&self) -> Caller {
        Caller::new(self.role, self.actor.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Create a project.
    Init {
        /// Project id; defaults to --project.
        id: Option<String>,
        #[arg(long, default_value_t = 1)]
        sme_quorum: u32,
        #[arg(long, default_value_t = 1)]
        developer_quorum: u32,
        /// Review Phases 2 and 3 as two composite gates.
        #[arg(long)]
        merge_subphases: bool,
    },
    /// Current phase and gate.
    Status,
    /// Open or continue an elicitation session and print its open questions.
    Elicit {
        #[arg(long)]
        phase: PhaseId,
        #[arg(long)]
        session: Option<String>,
    },
    /// Answer a question in a session.
    Answer {
        #[arg(long)]
        session: String,
        #[arg(long)]
        question: String,
        text: String,
        #[command(flatten)]
        who: Who,
    },
    /// Summarize a session's answers with their sources.
    Summarize {
        #[arg(long)]
        session: String,
    },
    /// Draft the phase artifact from a session and submit it.
    Draft {
        #[arg(long)]
        phase: PhaseId,
        /// Defaults to the newest session for the phase.
        #[arg(long)]
        session: Option<String>,
        #[arg(long, default_value = "")]
        rationale: String,
    },
    /// Gate status and approvals.
    #[command(subcommand)]
    Gate(GateCommand),
    /// Move to the next phase once the current gate passes.
    Advance {
        #[arg(long)]
        key: Option<String>,
        #[command(flatten)]
        who: Who,
    },
    /// Return to an earlier phase.
    Revisit {
        #[arg(long)]
        to: PhaseId,
        #[arg(long)]
        key: Option<String>,
        #[command(flatten)]
        who: Who,
    },
    /// Artifacts, revision proposals and lineage.
    #[command(subcommand)]
    Artifact(ArtifactCommand),
    /// Benchmarks, runs and reports.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "CARE_BIND", default_value = "127.0.0.1:8080")]
        bind: String,
        /// Lines of `token role actor`.
        #[arg(long, env = "CARE_TOKEN_FILE")]
        token_file: PathBuf,
    },
}

#[derive(Subcommand)]
enum GateCommand {
    /// Gate status for a phase (default: current phase).
    Status {
        #[arg(long)]
        phase: Option<PhaseId>,
    },
    /// Approve or reject an artifact head.
    Approve {
        /// Defaults to the newest artifact of the current phase.
        #[arg(long)]
        artifact: Option<String>,
        #[arg(long)]
        version: Option<u32>,
        #[arg(long)]
        reject: bool,
        #[arg(long, default_value = "")]
        note: String,
        #[command(flatten)]
        who: Who,
    },
}

#[derive(Subcommand)]
enum ArtifactCommand {
    /// Artifact heads in the project.
    List,
    /// Print an artifact head.
    Show {
        id: String,
    },
    /// Every version of an artifact with its approvals.
    Lineage {
        id: String,
    },
    /// Create version 1 of an artifact from a file.
    Create {
        #[arg(long)]
        phase: PhaseId,
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        who: Who,
    },
    /// Propose a unified diff against a base version.
    Propose {
        id: String,
        #[arg(long)]
        base: u32,
        #[arg(long)]
        diff_file: PathBuf,
        #[arg(long, default_value = "")]
        rationale: String,
        #[command(flatten)]
        who: Who,
    },
    /// Accept or reject a revision proposal.
    Decide {
        proposal: String,
        #[arg(long, conflicts_with = "reject", required_unless_present = "reject")]
        accept: bool,
        #[arg(long)]
        reject: bool,
        #[command(flatten)]
        who: Who,
    },
    /// Ask the helper agent to turn review feedback into a proposal.
    Feedback {
        id: String,
        text: String,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Generate a synthetic benchmark from a corpus of cited documents.
    Generate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 5)]
        max_attempts: usize,
        #[arg(long, default_value_t = 10)]
        page_size: u32,
    },
    /// Store a benchmark file under the project.
    Import {
        #[arg(long)]
        file: PathBuf,
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate one agent on a stored benchmark or a `.jsonl` benchmark file.
    Run {
        #[arg(long)]
        agent: AgentChoice,
        /// Stored benchmark name, or a `.jsonl` file to import first.
        #[arg(long)]
        benchmark: String,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        k: Vec<usize>,
        /// Catalog fixture; shorthand for `--catalog fixture:<path>`.
        #[arg(long)]
        fixture: Option<PathBuf>,
        /// Model cassette: a scripted rule file or a recorded exchange log.
        #[arg(long)]
        cassette: Option<PathBuf>,
    },
    /// Table rows for a CARE run and a baseline run.
    Report {
        #[arg(long)]
        care: String,
        #[arg(long)]
        baseline: String,
    },
    /// Two-gate decision over synthetic runs and optional gold runs.
    TwoGate {
        #[arg(long)]
        care_synthetic: String,
        #[arg(long)]
        baseline_synthetic: String,
        #[arg(long, requires = "baseline_gold")]
        care_gold: Option<String>,
        #[arg(long, requires = "care_gold")]
        baseline_gold: Option<String>,
        #[arg(long, default_value_t = DEFAULT_GOLD_PRIMARY_K)]
        k: usize,
    },
}

struct Ctx {
    cli_json: bool,
    project: Option<String>,
    workbench: Workbench,
}

impl Ctx {
    fn project(&self) -> Result<&str, ApiError> {
        self.project
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("no project; pass --project or set CARE_PROJECT"))
    }

    fn emit(&self, value: &impl Serialize, text: impl FnOnce() -> String) {
        if self.cli_json {
            println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
        } else {
            print!("{}", text());
        }
    }
}

fn gate_text(g: &GateStatus) -> String {
    let mut s = format!("{}: {}\n", g.phase, if g.satisfied { "satisfied" } else { "not satisfied" });
    for m in &g.missing {
        let reason = serde_json::to_value(m.reason).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        s.push_str(&format!("  missing {} ({reason})\n", m.kind));
    }
    s
}

fn read(path: &Path) -> Result<String, ApiError> {
    fs::read_to_string(path).map_err(|e| ApiError::bad_request(format!("{}: {e}", path.display())))
}

fn submission_text(o: &DraftOutcome) -> String {
    let mut s = match &o.submission {
        Submission::Created { artifact } => format!("created {} v{}\n", artifact.artifact_id, artifact.version),
        Submission::Proposed { proposal } => format!(
            "proposed {} against {} v{}\n",
            proposal.proposal_id, proposal.artifact_id, proposal.base_version
        ),
        Submission::Unchanged { artifact } => format!("unchanged {} v{}\n", artifact.artifact_id, artifact.version),
    };
    for v in &o.violations {
        s.push_str(&format!("  faithfulness: {}\n", serde_json::to_string(v).expect("serializable")));
    }
    s
}

fn run_text(r: &RunRecord) -> String {
    let mut s = format!(
        "{} {} on {} (n={}){}\n",
        r.run_id,
        r.report.agent_name,
        r.report.benchmark_name,
        r.report.n,
        if r.report.pre_gate { " [pre-gate]" } else { "" }
    );
    for k in &r.report.ks {
        if let Ok(v) = r.report.mean(*k) {
            s.push_str(&format!("  Recall@{k}: {}\n", format_percent(&v)));
        }
    }
    s
}

/// Transport spec for a cassette file: rule files are scripted, anything
/// else is replayed.
fn cassette_spec(path: &Path) -> Result<String, ApiError> {
    let text = read(path)?;
    let scripted = serde_json::from_str::<serde_json::Value>(&text).is_ok_and(|v| v.get("rules").is_some());
    let kind = if scripted { "scripted" } else { "replay" };
    Ok(format!("{kind}:{}", path.display()))
}

fn run(mut cli: Cli) -> Result<(), ApiError> {
    if let Command::Bench(BenchCommand::Run { fixture, cassette, .. }) = &cli.command {
        if let Some(f) = fixture {
            cli.catalog = format!("fixture:{}", f.display());
        }
        if let Some(c) = cassette {
            cli.transport = cassette_spec(c)?;
        }
    }
    if let Command::Serve { bind, token_file } = &cli.command {
        let workbench = Workbench::new(&cli.root, config::transport(&cli.transport)?, config::catalog(&cli.catalog)?);
        return serve(workbench, bind, token_file);
    }
    let ctx = Ctx {
        cli_json: cli.json,
        project: cli.project.clone(),
        workbench: Workbench::new(&cli.root, config::transport(&cli.transport)?, config::catalog(&cli.catalog)?),
    };
    let w = &ctx.workbench;
    match cli.command {
        Command::Init {
            id,
            sme_quorum,
            developer_quorum,
            merge_subphases,
        } => {
            let id = id.or(ctx.project.clone()).ok_or_else(|| ApiError::bad_request("give a project id"))?;
            let config = ProjectConfig {
                gate: GatePolicy {
                    sme_quorum,
                    developer_quorum,
                    merge_subphases,
                },
            };
            let v = w.create_project(&id, config)?;
            ctx.emit(&v, || format!("created project {} at {}\n", v.project_id, v.current_phase));
        }
        Command::Status => {
            let v = w.project(ctx.project()?)?;
            ctx.emit(&v, || format!("{} at {}\n{}", v.project_id, v.current_phase, gate_text(&v.gate)));
        }
        Command::Elicit { phase, session } => {
            let p = ctx.project()?;
            let session = match session {
                Some(s) => w.session(p, &s)?,
                None => w.open_session(p, phase)?,
            };
            let questions = w.next_questions(p, &session.session_id)?;
            let value = serde_json::json!({ "session_id": session.session_id, "questions": questions });
            ctx.emit(&value, || {
                let mut s = format!("session {} ({})\n", session.session_id, session.phase);
                for q in &questions {
                    s.push_str(&format!("{} [{}] {}\n", q.entry_id, q.dimension_id.as_deref().unwrap_or(""), q.text));
                }
                if questions.is_empty() {
                    s.push_str("every dimension has an answer\n");
                }
                s
            });
        }
        Command::Answer {
            session,
            question,
            text,
            who,
        } => {
            let e = w.answer(ctx.project()?, &session, &question, &text, &who.caller())?;
            ctx.emit(&e, || format!("{} recorded\n", e.entry_id));
        }
        Command::Summarize { session } => {
            let s = w.summarize(ctx.project()?, &session)?;
            ctx.emit(&s, || s.text.clone());
        }
        Command::Draft { phase, session, rationale } => {
            let p = ctx.project()?;
            let session = match session {
                Some(s) => s,
                None => w
                    .sessions(p)?
                    .into_iter()
                    .rev()
                    .find(|s| s.phase == phase)
                    .map(|s| s.session_id)
                    .ok_or_else(|| ApiError::not_found("session", &format!("for {phase}")))?,
            };
            let o = w.draft(p, &session, &rationale)?;
            ctx.emit(&o, || submission_text(&o));
        }
        Command::Gate(GateCommand::Status { phase }) => {
            let g = w.gate_status(ctx.project()?, phase)?;
            ctx.emit(&g, || gate_text(&g));
        }
        Command::Gate(GateCommand::Approve {
            artifact,
            version,
            reject,
            note,
            who,
        }) => {
            let p = ctx.project()?;
            let artifact = match artifact {
                Some(a) => a,
                None => {
                    let phase = w.project(p)?.current_phase;
                    w.artifacts(p)?
                        .into_iter()
                        .rev()
                        .find(|a| a.phase == phase)
                        .map(|a| a.artifact_id)
                        .ok_or_else(|| ApiError::not_found("artifact", &format!("for {phase}")))?
                }
            };
            let verdict = if reject { Verdict::Reject } else { Verdict::Approve };
            let r = w.approve(p, &artifact, version, verdict, &note, &who.caller())?;
            let gate = w.gate_status(p, None)?;
            ctx.emit(&r, || {
                format!(
                    "{} v{} {} by {} ({})\n{}",
                    r.artifact_id,
                    r.version,
                    if reject { "rejected" } else { "approved" },
                    r.actor,
                    r.role,
                    gate_text(&gate)
                )
            });
        }
        Command::Advance { key, who } => {
            let s = w.advance(ctx.project()?, key.as_deref(), &who.caller())?;
            ctx.emit(&s, || format!("now at {}\n", s.current_phase));
        }
        Command::Revisit { to, key, who } => {
            let s = w.revisit(ctx.project()?, to, key.as_deref(), &who.caller())?;
            ctx.emit(&s, || format!("now at {}\n", s.current_phase));
        }
        Command::Artifact(cmd) => artifact(&ctx, cmd)?,
        Command::Bench(cmd) => bench(&ctx, cmd)?,
        Command::Serve { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn artifact(ctx: &Ctx, cmd: ArtifactCommand) -> Result<(), ApiError> {
    let w = &ctx.workbench;
    let p = ctx.project()?;
    match cmd {
        ArtifactCommand::List => {
            let list = w.artifacts(p)?;
            ctx.emit(&list, || {
                list.iter()
                    .map(|a| format!("{}\t{}\t{}\tv{}\t{}\n", a.artifact_id, a.phase, a.kind, a.version, a.status))
                    .collect()
            });
        }
        ArtifactCommand::Show { id } => {
            let a = w.artifact(p, &id)?;
            ctx.emit(&a, || a.content.clone());
        }
        ArtifactCommand::Lineage { id } => {
            let l = w.lineage(p, &id)?;
            ctx.emit(&l, || {
                l.iter()
                    .map(|e| format!("v{}\t{}\t{} approvals\n", e.version, e.status, e.approvals.len()))
                    .collect()
            });
        }
        ArtifactCommand::Create { phase, file, who } => {
            let a = w.create_artifact(p, phase, phase.artifact_kind(), &read(&file)?, &who.caller())?;
            ctx.emit(&a, || format!("created {} v{}\n", a.artifact_id, a.version));
        }
        ArtifactCommand::Propose {
            id,
            base,
            diff_file,
            rationale,
            who,
        } => {
            let r = w.propose(p, &id, base, &read(&diff_file)?, &rationale, &who.caller())?;
            ctx.emit(&r, || format!("proposed {}\n", r.proposal_id));
        }
        ArtifactCommand::Decide { proposal, accept, who, .. } => {
            let decision = if accept { Decision::Accept } else { Decision::Reject };
            let a = w.apply(p, &proposal, decision, &who.caller())?;
            ctx.emit(&a, || format!("{} now v{} ({})\n", a.artifact_id, a.version, a.status));
        }
        ArtifactCommand::Feedback { id, text } => {
            let r = w.feedback(p, &id, &text)?;
            ctx.emit(&r, || format!("proposed {}\n{}", r.proposal_id, r.diff));
        }
    }
    Ok(())
}

fn bench(ctx: &Ctx, cmd: BenchCommand) -> Result<(), ApiError> {
    let w = &ctx.workbench;
    let p = ctx.project()?;
    match cmd {
        BenchCommand::Generate {
            corpus,
            name,
            max_attempts,
            page_size,
        } => {
            let corpus = load_corpus(&corpus)?;
            let mut config = GenerationConfig::new(name);
            config.max_attempts = max_attempts;
            config.page_size = page_size;
            let r = w.generate_benchmark(p, &corpus, &config)?;
            ctx.emit(&r, || {
                format!(
                    "{}: {} queries emitted, {} citations discarded\n",
                    r.benchmark.name,
                    r.benchmark.len(),
                    r.discards.len()
                )
            });
        }
        BenchCommand::Import { file, name } => {
            let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("benchmark").to_string();
            let mut b = Benchmark::from_jsonl(&read(&file)?, &stem)?;
            if let Some(n) = name {
                b.name = n;
            }
            let digest = w.put_benchmark(p, &b)?;
            let v = serde_json::json!({ "benchmark": b.name, "gate": b.gate, "n": b.len(), "digest": digest });
            ctx.emit(&v, || format!("stored {} ({} queries, {})\n", b.name, b.len(), b.gate.label()));
        }
        BenchCommand::Run { agent, benchmark, k, .. } => {
            let file = Path::new(&benchmark);
            let name = if benchmark.ends_with(".jsonl") && file.is_file() {
                let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("benchmark");
                let b = Benchmark::from_jsonl(&read(file)?, stem)?;
                w.put_benchmark(p, &b)?;
                b.name
            } else {
                benchmark
            };
            let r = w.run(p, agent, &name, &k)?;
            let dir = w.root().join(p).join("runs").join(&r.run_id);
            ctx.emit(&r, || format!("{}report: {}\n", run_text(&r), dir.join("report.json").display()));
        }
        BenchCommand::Report { care, baseline } => {
            let table = w.report_table(p, &care, &baseline)?;
            ctx.emit(&table, || table.clone());
        }
        BenchCommand::TwoGate {
            care_synthetic,
            baseline_synthetic,
            care_gold,
            baseline_gold,
            k,
        } => {
            let gold = care_gold.as_deref().zip(baseline_gold.as_deref());
            let v = w.two_gate(p, (&care_synthetic, &baseline_synthetic), gold, k)?;
            ctx.emit(&v, || {
                let outcome = serde_json::to_value(v.decision.synthetic_outcome).expect("serializable");
                let mut s = format!("{}\nsynthetic gate: {}\n", v.table, outcome.as_str().unwrap_or_default());
                if let Some(g) = &v.decision.gold_outcome {
                    s.push_str(&format!(
                        "gold Recall@{}: care {:.1}% vs baseline {:.1}%{}\n",
                        g.primary_k,
                        g.care_value * 100.0,
                        g.baseline_value * 100.0,
                        if g.care_better { " (care better)" } else { "" }
                    ));
                }
                s
            });
        }
    }
    Ok(())
}

fn serve(workbench: Workbench, bind: &str, token_file: &Path) -> Result<(), ApiError> {
    let tokens = Tokens::load(token_file)?;
    if tokens.is_empty() {
        return Err(ApiError::bad_request(format!("{} has no tokens", token_file.display())));
    }
    let state = AppState::new(workbench, tokens);
    let runtime = tokio::runtime::Runtime::new().map_err(ApiError::storage)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| ApiError::bad_request(format!("bind {bind}: {e}")))?;
        tracing::info!(%bind, "serving");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(ApiError::storage)
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("CARE_LOG"))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.message);
            if !e.details.is_null() {
                eprintln!("{}", serde_json::to_string_pretty(&e.details).expect("serializable"));
            }
            ExitCode::FAILURE
        }
    }
}

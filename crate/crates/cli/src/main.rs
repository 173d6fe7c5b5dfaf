use clap::{Parser, Subcommand};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use vsf_cli::config::HarnessConfig;
use vsf_cli::gen::{gen_mixed_scenarios, gen_scenarios, ScenarioKind};
use vsf_cli::records::{read_jsonl, write_jsonl, RecordLine, ScoreRecord, TrajectoryFile};
use vsf_cli::run::{
    build_candidates, fuse_command, run_ablation, score_command, write_ablation_output,
    AblationSpec, RunError, ScorerSpec,
};
use vsf_core::directive::rule_based_directive;
use vsf_core::scenario::{load_scenarios, save_scenarios};
use vsf_core::scorers::{ego_features, fit_linear_scorer, save_params, trajectory_features, TrainingRow};
use vsf_core::{metrics, DirectiveEmbedding, Scenario, Trajectory};
use vsf_vlm::{label_for, render_overlay, MockPolicy, MockVlmServer};

/// Exit codes: 0 success, 1 usage, 2 data error, 3 transport error.
const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vsf",
    about = "Candidate generation, metric scoring, score fusion and VLM selection over synthetic driving scenarios",
    version
)]
struct Cli {
    /// JSON config overriding pipeline defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global RNG seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = automatic).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic scenarios.
    GenScenarios {
        /// straight-clear | lead-brake | red-light | curve-lane-keep | cross-traffic | mixed
        #[arg(long)]
        kind: String,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the candidate vocabulary (and anchors) for a scenario.
    GenVocab {
        #[arg(long)]
        scenarios: PathBuf,
        /// Scenario id (defaults to the first in the file).
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the directive-conditioned linear scorer on oracle labels.
    FitScorer {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
    },
    /// Score every (scenario, trajectory) pair.
    Score {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        trajs: PathBuf,
        /// oracle | noisy:<sd>,<seed> | linear:<params>[,vlm]
        #[arg(long, default_value = "oracle")]
        scorer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse one or more score files and select per scenario.
    Fuse {
        #[arg(long, num_args = 1.., required = true)]
        scores: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run the VLM selection loop instead of plain argmax.
        #[arg(long)]
        vlm: bool,
        /// Needed with --vlm: the scenario and trajectory files.
        #[arg(long)]
        scenarios: Option<PathBuf>,
        #[arg(long)]
        trajs: Option<PathBuf>,
        /// Pre-assigned model weights as JSON, e.g. '{"a":2,"b":1}'.
        #[arg(long)]
        model_weights: Option<String>,
    },
    /// Run an ablation spec: every fusion config over every scenario.
    Ablate {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Print the summary table for a records file.
    Report {
        #[arg(long)]
        records: PathBuf,
    },
    /// Serve the deterministic mock VLM.
    ServeMockVlm {
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// first | fixed:<letter> | rule
        #[arg(long, default_value = "first")]
        policy: String,
    },
    /// Render the front-view overlay for a scenario and candidate file.
    Render {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long)]
        trajs: PathBuf,
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are successful exits; real parse errors are usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    if cli.jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global() {
            eprintln!("warning: could not size worker pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Data(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_DATA)
        }
        Err(CliError::Transport(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_TRANSPORT)
        }
    }
}

enum CliError {
    Usage(String),
    Data(String),
    Transport(String),
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.is_transport() {
            CliError::Transport(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<vsf_core::scenario::ScenarioError> for CliError {
    fn from(e: vsf_core::scenario::ScenarioError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<vsf_cli::records::RecordError> for CliError {
    fn from(e: vsf_cli::records::RecordError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<HarnessConfig, CliError> {
    match path {
        Some(p) => HarnessConfig::load(p).map_err(CliError::Data),
        None => Ok(HarnessConfig::default()),
    }
}

fn scenario_by_id<'a>(
    scenarios: &'a [Scenario],
    id: &Option<String>,
) -> Result<&'a Scenario, CliError> {
    match id {
        None => scenarios
            .first()
            .ok_or_else(|| CliError::Data("scenario file is empty".into())),
        Some(wanted) => scenarios
            .iter()
            .find(|s| &s.id == wanted)
            .ok_or_else(|| CliError::Data(format!("scenario {wanted:?} not found"))),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(&cli.config)?;
    match cli.command {
        Command::GenScenarios { kind, count, out } => {
            if count == 0 {
                return Err(CliError::Usage("--count must be >= 1".into()));
            }
            let scenarios = if kind.eq_ignore_ascii_case("mixed") {
                gen_mixed_scenarios(count, cli.seed)
            } else {
                let kind: ScenarioKind = kind.parse().map_err(CliError::Usage)?;
                gen_scenarios(kind, count, cli.seed)
            };
            save_scenarios(&out, &scenarios)?;
            println!("wrote {} scenarios to {}", scenarios.len(), out.display());
            Ok(())
        }
        Command::GenVocab { scenarios, id, out } => {
            let all = load_scenarios(&scenarios)?;
            let scenario = scenario_by_id(&all, &id)?;
            let candidates = build_candidates(&scenario.ego, &scenario.id, &cfg, cli.seed)?;
            let file = TrajectoryFile {
                params: serde_json::json!({
                    "vocab": cfg.vocab,
                    "anchors": cfg.anchors,
                    "seed": cli.seed,
                    "scenario_id": scenario.id,
                }),
                trajectories: candidates,
            };
            file.save(&out)?;
            println!("wrote {} candidates to {}", file.trajectories.len(), out.display());
            Ok(())
        }
        Command::FitScorer { scenarios, out, lambda } => {
            let all = load_scenarios(&scenarios)?;
            let rows = training_rows(&all, &cfg, cli.seed)?;
            let embedding = DirectiveEmbedding::seeded(
                vsf_core::directive::DEFAULT_EMBEDDING_DIM,
                cli.seed,
            );
            let params = fit_linear_scorer(&rows, lambda, embedding)
                .map_err(|e| CliError::Data(e.to_string()))?;
            save_params(&out, &params).map_err(|e| CliError::Data(e.to_string()))?;
            println!("fitted on {} rows, wrote {}", rows.len(), out.display());
            Ok(())
        }
        Command::Score { scenarios, trajs, scorer, out } => {
            let all = load_scenarios(&scenarios)?;
            let traj_file = TrajectoryFile::load(&trajs)?;
            let spec = ScorerSpec::parse_flag(&scorer).map_err(CliError::Usage)?;
            let endpoint = cfg.vlm.endpoint_config();
            let records = score_command(&all, &traj_file.trajectories, &spec, &cfg, endpoint.as_ref())?;
            write_jsonl(&out, &records)?;
            println!("wrote {} score records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Fuse { scores, out, vlm, scenarios, trajs, model_weights } => {
            let score_files: Vec<Vec<ScoreRecord>> = scores
                .iter()
                .map(|p| read_jsonl(p))
                .collect::<Result<_, _>>()?;
            let weights: Option<BTreeMap<String, f64>> = match model_weights {
                Some(text) => Some(
                    serde_json::from_str(&text)
                        .map_err(|e| CliError::Usage(format!("bad --model-weights: {e}")))?,
                ),
                None => None,
            };
            let loaded;
            let traj_file;
            let endpoint_cfg;
            let vlm_inputs = if vlm {
                let scenario_path = scenarios
                    .ok_or_else(|| CliError::Usage("--vlm requires --scenarios".into()))?;
                let traj_path =
                    trajs.ok_or_else(|| CliError::Usage("--vlm requires --trajs".into()))?;
                loaded = load_scenarios(&scenario_path)?;
                traj_file = TrajectoryFile::load(&traj_path)?;
                endpoint_cfg = cfg.vlm.endpoint_config().ok_or_else(|| {
                    CliError::Data(
                        "no VLM endpoint configured (config vlm.endpoint or VSF_VLM_ENDPOINT)".into(),
                    )
                })?;
                Some((loaded.as_slice(), traj_file.trajectories.as_slice(), &endpoint_cfg))
            } else {
                None
            };
            let records = fuse_command(&score_files, &cfg, weights, vlm_inputs)?;
            write_jsonl(&out, &records)?;
            for record in &records {
                println!("{}: selected {}", record.scenario_id, record.selected_index);
            }
            Ok(())
        }
        Command::Ablate { spec } => {
            let spec = AblationSpec::load(&spec)?;
            let endpoint = cfg.vlm.endpoint_config();
            let output = run_ablation(&spec, &cfg, cli.seed, endpoint.as_ref())?;
            write_ablation_output(&spec, &output)?;
            print!("{}", output.summary);
            Ok(())
        }
        Command::Report { records } => {
            let lines: Vec<RecordLine> = read_jsonl(&records)?;
            print!("{}", vsf_cli::report::summarize(&lines));
            Ok(())
        }
        Command::ServeMockVlm { port, policy } => {
            let policy: MockPolicy = policy.parse().map_err(CliError::Usage)?;
            let server = MockVlmServer::spawn(policy, port)
                .map_err(|e| CliError::Transport(e.to_string()))?;
            println!("mock vlm listening on {}", server.base_url());
            server.join();
            Ok(())
        }
        Command::Render { scenarios, trajs, id, out } => {
            let all = load_scenarios(&scenarios)?;
            let scenario = scenario_by_id(&all, &id)?;
            let traj_file = TrajectoryFile::load(&trajs)?;
            if traj_file.trajectories.is_empty() {
                return Err(CliError::Data("trajectory file has no trajectories".into()));
            }
            let labeled: Vec<(char, &Trajectory)> = traj_file
                .trajectories
                .iter()
                .take(26)
                .enumerate()
                .map(|(i, t)| (label_for(i), t))
                .collect();
            let stage = scenario.stage1();
            let image = render_overlay(&stage, &scenario.camera, &labeled, &cfg.render.to_render_config())
                .map_err(|e| CliError::Data(e.to_string()))?;
            std::fs::write(&out, image.to_ppm())
                .map_err(|e| CliError::Data(format!("cannot write {}: {e}", out.display())))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

/// Training rows for the linear scorer: every candidate of every scenario
/// stage-1, labeled by the metric suite, with the rule-based directive.
fn training_rows(
    scenarios: &[Scenario],
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<Vec<TrainingRow<f64>>, CliError> {
    let mut rows = Vec::new();
    for scenario in scenarios {
        let stage = scenario.stage1();
        let candidates = build_candidates(&scenario.ego, &scenario.id, cfg, seed)
            .map_err(CliError::from)?;
        let labels = metrics::score_candidates(&candidates, &stage, &cfg.metrics)
            .map_err(|e| CliError::Data(e.to_string()))?;
        let directive = rule_based_directive(&scenario.ego, &stage, &cfg.directive_rules);
        let ego = ego_features(&scenario.ego);
        for (traj, targets) in candidates.iter().zip(labels) {
            rows.push(TrainingRow {
                features: trajectory_features(traj, &stage),
                ego,
                directive,
                targets,
            });
        }
    }
    Ok(rows)
}

//! Command-line front end: scene generation, planning, single-episode
//! simulation, batch evaluation and report rendering.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for invalid input
//! data (bad scene files, unknown categories, unreadable paths).

mod svg;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use stackplan_core::config::HarnessConfig;
use stackplan_core::eval::{
    aggregate, evaluate, read_corpus, read_episode_records, run_episode, write_corpus,
    write_episode_records, EvaluateOptions, PlannerId, TaskKind,
};
use stackplan_core::planner::{
    baseline_one_by_one, baseline_rule_only, plan_lookahead, Models, Plan, TargetDesignation,
    DEFAULT_HORIZON_FACTOR,
};
use stackplan_core::pomdp::BeliefState;
use stackplan_core::scene::{ObjectId, SceneGraph};

#[derive(Parser)]
#[command(name = "stackplan", version, about = "Grasp-order planning over stacked scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// JSON config file; defaults apply for missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<HarnessConfig> {
        match &self.config {
            None => Ok(HarnessConfig::default()),
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                Ok(HarnessConfig::from_json(&text)?)
            }
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scene corpus with a manifest.
    Generate {
        /// Number of scenes to generate.
        #[arg(long)]
        count: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Master seed; scene seeds derive from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Plan a decision chain for a scene file and print it as JSON.
    Plan {
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated target object ids, e.g. "0,3".
        #[arg(long)]
        targets: String,
        /// Planner: pomdp, one_by_one or rule_only.
        #[arg(long, default_value = "pomdp")]
        planner: String,
        /// Lookahead depth (pomdp only); default 2x object count.
        #[arg(long)]
        horizon: Option<u32>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Run one closed-loop episode on a scene and print the report.
    Simulate {
        /// Scene JSON file.
        #[arg(long)]
        scene: PathBuf,
        /// Comma-separated target object ids.
        #[arg(long)]
        targets: String,
        /// Planner: pomdp, one_by_one or rule_only.
        #[arg(long, default_value = "pomdp")]
        planner: String,
        /// Episode seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write a line-delimited step trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Evaluate planners over a corpus and write reports.
    Evaluate {
        /// Corpus directory produced by `generate`.
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for reports.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated planners to run.
        #[arg(long, default_value = "pomdp,one_by_one,rule_only")]
        planners: String,
        /// Comma-separated tasks to sample (st, mt, tc).
        #[arg(long, default_value = "st,mt,tc")]
        tasks: String,
        /// Master evaluation seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArg,
    },
    /// Re-aggregate episode records and render the summary and chart.
    Report {
        /// episodes.jsonl produced by `evaluate`.
        #[arg(long)]
        records: PathBuf,
        /// Directory for summary.txt and chart.svg; prints only when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_targets(text: &str) -> Result<TargetDesignation> {
    let ids: BTreeSet<ObjectId> = text
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map(ObjectId)
                .map_err(|_| anyhow!("target `{t}` is not an object id"))
        })
        .collect::<Result<_>>()?;
    Ok(TargetDesignation::new(ids)?)
}

fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| T::from_str(t.trim()).map_err(Into::into))
        .collect()
}

fn load_scene(path: &Path, config: &HarnessConfig) -> Result<SceneGraph> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    let graph = SceneGraph::from_json(&text)?;
    let report = graph.validate();
    if !report.is_ok() {
        let list: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        return Err(anyhow!("scene is invalid: {}", list.join("; ")));
    }
    graph.check_categories(&[
        ("recall", &config.noise.recall),
        ("grasp_success", &config.noise.grasp_success),
    ])?;
    Ok(graph)
}

fn plan_with(
    planner: PlannerId,
    graph: &SceneGraph,
    targets: &TargetDesignation,
    config: &HarnessConfig,
    horizon: Option<u32>,
) -> Result<Plan> {
    Ok(match planner {
        PlannerId::Pomdp => {
            let belief = BeliefState::certain(graph);
            let models = Models {
                noise: &config.noise,
                reward: &config.reward,
            };
            let depth = horizon
                .or(config.horizon)
                .unwrap_or(DEFAULT_HORIZON_FACTOR * graph.object_count().max(1) as u32);
            plan_lookahead(&belief, targets, &models, depth)?.1
        }
        PlannerId::OneByOne => baseline_one_by_one(graph, targets)?,
        PlannerId::RuleOnly => baseline_rule_only(graph, targets)?,
    })
}

fn infer_task(targets: &TargetDesignation, graph: &SceneGraph) -> TaskKind {
    if targets.ids().len() == graph.object_count() {
        TaskKind::TableClear
    } else if targets.ids().len() == 1 {
        TaskKind::SingleTarget
    } else {
        TaskKind::MultiTarget
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            count,
            out,
            seed,
            config,
        } => {
            let config = config.load()?;
            let manifest = write_corpus(&out, &config, count, seed)?;
            println!(
                "wrote {} scenes and manifest.json to {}",
                manifest.scenes.len(),
                out.display()
            );
        }
        Command::Plan {
            scene,
            targets,
            planner,
            horizon,
            config,
        } => {
            let config = config.load()?;
            let planner = PlannerId::from_str(&planner)?;
            let graph = load_scene(&scene, &config)?;
            let targets = parse_targets(&targets)?;
            targets.validate_against(&graph)?;
            let plan = plan_with(planner, &graph, &targets, &config, horizon)?;
            println!("{}", serde_json::to_string_pretty(&plan)?);
        }
        Command::Simulate {
            scene,
            targets,
            planner,
            seed,
            trace,
            config,
        } => {
            let config = config.load()?;
            let planner = PlannerId::from_str(&planner)?;
            let graph = load_scene(&scene, &config)?;
            let targets = parse_targets(&targets)?;
            targets.validate_against(&graph)?;
            let task = infer_task(&targets, &graph);
            let (report, trace_lines) = simulate_episode(
                &graph,
                &targets,
                task,
                planner,
                seed,
                &config,
            )?;
            if let Some(path) = trace {
                fs::write(&path, trace_lines.join("\n") + "\n")
                    .with_context(|| format!("writing trace {}", path.display()))?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Evaluate {
            corpus,
            out,
            planners,
            tasks,
            seed,
            config,
        } => {
            let config = config.load()?;
            let planners: Vec<PlannerId> = parse_list(&planners)?;
            let tasks: Vec<TaskKind> = parse_list(&tasks)?;
            let scenes = read_corpus(&corpus)?;
            let options = EvaluateOptions {
                planners,
                tasks,
                master_seed: seed,
            };
            let (reports, summary) = evaluate(&scenes, &config, &options)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            write_episode_records(&out.join("episodes.jsonl"), &reports)?;
            fs::write(
                out.join("aggregate.json"),
                serde_json::to_string_pretty(&summary)?,
            )?;
            let table = summary.render_table();
            fs::write(out.join("summary.txt"), &table)?;
            fs::write(out.join("chart.svg"), svg::rationality_chart(&summary))?;
            print!("{table}");
        }
        Command::Report { records, out } => {
            let reports = read_episode_records(&records)?;
            let summary = aggregate(&reports);
            let table = summary.render_table();
            if let Some(out) = out {
                fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
                fs::write(out.join("summary.txt"), &table)?;
                fs::write(out.join("chart.svg"), svg::rationality_chart(&summary))?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

fn simulate_episode(
    graph: &SceneGraph,
    targets: &TargetDesignation,
    task: TaskKind,
    planner: PlannerId,
    seed: u64,
    config: &HarnessConfig,
) -> Result<(stackplan_core::eval::EpisodeReport, Vec<String>)> {
    use stackplan_core::eval::DesignationCase;
    use stackplan_core::sim::annotate_reference;

    let reference = annotate_reference(graph, targets, &config.reward)?;
    let case = DesignationCase {
        task,
        draw: 0,
        targets: targets.clone(),
        reference,
        episode_seed: seed,
    };
    let report = run_episode(graph, 0, &case, planner, config)?;

    // Replay the same episode to collect the audit trace.
    let trace = replay_trace(graph, &case, planner, config)?;
    Ok((report, trace))
}

fn replay_trace(
    graph: &SceneGraph,
    case: &stackplan_core::eval::DesignationCase,
    planner: PlannerId,
    config: &HarnessConfig,
) -> Result<Vec<String>> {
    use stackplan_core::planner::{
        run_policy_loop, OneByOneStep, PomdpStep, RuleOnlyStep, StepPolicy,
    };
    use stackplan_core::sim::SimEnv;

    let mut env = SimEnv::new(graph.clone(), config.noise.clone(), case.episode_seed);
    let models = Models {
        noise: &config.noise,
        reward: &config.reward,
    };
    let mut policy: Box<dyn StepPolicy> = match planner {
        PlannerId::Pomdp => Box::new(PomdpStep {
            horizon: config.horizon,
        }),
        PlannerId::OneByOne => Box::new(OneByOneStep),
        PlannerId::RuleOnly => Box::new(RuleOnlyStep),
    };
    let (chain, _) = run_policy_loop(
        &mut env,
        &case.targets,
        &models,
        &mut *policy,
        config.retry_cap,
        config.initial_scans,
    )?;
    let lines = chain
        .steps
        .iter()
        .zip(env.records())
        .map(|(step, record)| {
            serde_json::json!({
                "step": record.step,
                "action": step.action,
                "outcome": if record.success { "success" } else { "failure" },
                "moved": record.moved,
                "observation_digest": step.observation_digest,
            })
            .to_string()
        })
        .collect();
    Ok(lines)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Unknown planner or task names are usage errors; anything
            // else is invalid input data.
            let usage = e
                .downcast_ref::<stackplan_core::eval::EvalError>()
                .is_some_and(|e| {
                    matches!(
                        e,
                        stackplan_core::eval::EvalError::UnknownPlanner(_)
                            | stackplan_core::eval::EvalError::UnknownTask(_)
                    )
                });
            eprintln!("error: {e:#}");
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}

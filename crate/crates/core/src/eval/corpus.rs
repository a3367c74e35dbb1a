//! Scene corpus IO and the parallel evaluation pipeline.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::HarnessConfig;
use crate::scene::SceneGraph;
use crate::sim::{generate_scene, GroundTruthScene};

use super::episode::mix_seed;
use super::{
    aggregate, designations_for_scene, run_episode, AggregateReport, EpisodeReport, EvalError,
    PlannerId, TaskKind,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneManifestEntry {
    pub seed: u64,
    pub path: String,
    pub objects: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub master_seed: u64,
    pub scenes: Vec<SceneManifestEntry>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Generates `count` scenes into `dir` (one JSON file per seed) plus a
/// `manifest.json`. Scene seeds derive deterministically from the
/// master seed.
pub fn write_corpus(
    dir: &Path,
    config: &HarnessConfig,
    count: usize,
    master_seed: u64,
) -> Result<CorpusManifest, EvalError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut scenes = Vec::with_capacity(count);
    for i in 0..count {
        let seed = mix_seed(&[master_seed, i as u64]);
        let scene = generate_scene(&config.generator, seed);
        let file = format!("scene_{i:06}.json");
        let path = dir.join(&file);
        fs::write(&path, scene.graph.to_json()).map_err(|e| io_err(&path, e))?;
        scenes.push(SceneManifestEntry {
            seed,
            path: file,
            objects: scene.graph.object_count(),
        });
    }
    let manifest = CorpusManifest {
        master_seed,
        scenes,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text).map_err(|e| io_err(&path, e))?;
    Ok(manifest)
}

/// Loads a corpus back from its manifest.
pub fn read_corpus(dir: &Path) -> Result<Vec<GroundTruthScene>, EvalError> {
    let manifest_path = dir.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| io_err(&manifest_path, e))?;
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for entry in &manifest.scenes {
        let path = dir.join(&entry.path);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        scenes.push(GroundTruthScene {
            graph: SceneGraph::from_json(&text)?,
            seed: entry.seed,
        });
    }
    Ok(scenes)
}

/// Evaluation run parameters.
#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub planners: Vec<PlannerId>,
    pub tasks: Vec<TaskKind>,
    pub master_seed: u64,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            planners: PlannerId::ALL.to_vec(),
            tasks: TaskKind::ALL.to_vec(),
            master_seed: 0,
        }
    }
}

/// Runs every planner over every sampled designation of every scene.
/// Episodes fan out over a worker pool; the report order and content
/// are deterministic for a given seed and config.
pub fn evaluate(
    scenes: &[GroundTruthScene],
    config: &HarnessConfig,
    options: &EvaluateOptions,
) -> Result<(Vec<EpisodeReport>, AggregateReport), EvalError> {
    if scenes.is_empty() {
        return Err(EvalError::EmptyCorpus);
    }
    for scene in scenes {
        scene.graph.check_categories(&[
            ("recall", &config.noise.recall),
            ("grasp_success", &config.noise.grasp_success),
        ])?;
    }

    let cases: Vec<_> = scenes
        .par_iter()
        .map(|scene| {
            designations_for_scene(
                &scene.graph,
                scene.seed,
                options.master_seed,
                &options.tasks,
                config,
            )
            .map(|cases| (scene, cases))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let jobs: Vec<_> = cases
        .iter()
        .flat_map(|(scene, cases)| {
            cases.iter().flat_map(move |case| {
                options
                    .planners
                    .iter()
                    .map(move |&planner| (*scene, case, planner))
            })
        })
        .collect();

    let reports: Vec<EpisodeReport> = jobs
        .par_iter()
        .map(|(scene, case, planner)| {
            run_episode(&scene.graph, scene.seed, case, *planner, config)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let report = aggregate(&reports);
    Ok((reports, report))
}

/// Writes per-episode records as line-delimited JSON.
pub fn write_episode_records(path: &Path, reports: &[EpisodeReport]) -> Result<(), EvalError> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads per-episode records back.
pub fn read_episode_records(path: &Path) -> Result<Vec<EpisodeReport>, EvalError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io_err(path, e)))
        .collect()
}

/// Scenes for in-memory evaluation without touching disk.
pub fn generate_scenes(
    config: &HarnessConfig,
    count: usize,
    master_seed: u64,
) -> Vec<GroundTruthScene> {
    (0..count)
        .map(|i| generate_scene(&config.generator, mix_seed(&[master_seed, i as u64])))
        .collect()
}


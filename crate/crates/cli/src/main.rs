//! `radioslam` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use radioslam::dataset::interpolate;
use radioslam::dataset_io::{
    load_dataset, read_model, read_trajectory, write_atomic, write_dataset, write_json, write_model, write_trajectory,
    Provenance,
};
use radioslam::distance_model::{DEFAULT_BIN_WIDTH, DEFAULT_MAX_PAIR_DISTANCE};
use radioslam::evaluation::{ate, Alignment, DEFAULT_MAX_DT};
use radioslam::geometry::TimedPose;
use radioslam::mapping::{export_pgm, svg_overlay, SvgLayer, DEFAULT_FREE_THRESHOLD, DEFAULT_OCCUPIED_THRESHOLD};
use radioslam::pipeline::{
    build_keyframes, keyframe_map, run_radio_lidar_slam, run_radio_slam, train_model, PipelineConfig,
};
use radioslam::simulator::Scenario;

/// Environment variable holding the log filter, e.g. `info` or `radioslam=debug`.
const LOG_ENV: &str = "RADIOSLAM_LOG";

#[derive(Parser)]
#[command(name = "radioslam", version, about = "Radio fingerprint SLAM with optional LiDAR refinement")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Random seed; recorded in every output header.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file with optional `scenario`, `pipeline`, `train`
    /// and `eval` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset from a canned scenario or the config's `scenario`.
    Simulate {
        /// One of loop, corridor, figure-eight, room.
        #[arg(long)]
        scenario: Option<String>,
        /// Omit LiDAR scans from the dataset.
        #[arg(long)]
        no_scans: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a distance model from a dataset.
    TrainModel {
        dataset: PathBuf,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        max_pair_distance: Option<f64>,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Radio SLAM: odometry plus fingerprint loop closures.
    RadioSlam {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Radio+LiDAR SLAM; also writes an occupancy map.
    RadioLidarSlam {
        #[command(flatten)]
        run: RunArgs,
        /// Map image; a YAML sidecar is written beside it.
        #[arg(long, default_value = "map.pgm")]
        map: PathBuf,
    },
    /// Absolute trajectory error of an estimate against a reference.
    Eval {
        estimated: PathBuf,
        reference: PathBuf,
        /// anchor_first, rigid_2d or none.
        #[arg(long)]
        alignment: Option<String>,
        #[arg(long)]
        max_dt: Option<f64>,
        /// Also write the full report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Draw trajectories and an occupancy map as SVG, or the map alone as PGM.
    Render {
        /// Trajectory CSVs; the first one places the scans.
        #[arg(long = "trajectory", required = true)]
        trajectories: Vec<PathBuf>,
        /// Dataset whose scans build the map.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Output file; `.pgm` writes a map image, anything else SVG.
        #[arg(long)]
        out: PathBuf,
        /// Pixels per metre in SVG output.
        #[arg(long, default_value_t = 20.0)]
        scale: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
    /// Run report (counts, accepted closures, stage timings) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    scenario: Option<Scenario>,
    pipeline: PipelineConfig,
    train: TrainConfig,
    eval: EvalConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    bin_width: f64,
    max_pair_distance: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            bin_width: DEFAULT_BIN_WIDTH,
            max_pair_distance: DEFAULT_MAX_PAIR_DISTANCE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EvalConfig {
    alignment: Alignment,
    max_dt: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            alignment: Alignment::AnchorFirst,
            max_dt: DEFAULT_MAX_DT,
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.common.config.as_deref())?;
    let seed = cli.common.seed;
    match cli.command {
        Command::Simulate {
            scenario,
            no_scans,
            out,
        } => simulate(&config, seed, scenario.as_deref(), no_scans, &out),
        Command::TrainModel {
            dataset,
            bin_width,
            max_pair_distance,
            out,
        } => {
            let train = TrainConfig {
                bin_width: bin_width.unwrap_or(config.train.bin_width),
                max_pair_distance: max_pair_distance.unwrap_or(config.train.max_pair_distance),
            };
            let data = load_dataset(&dataset)?;
            let model = train_model(&data, train.bin_width, train.max_pair_distance)?;
            info!("trained {} bins", model.bins.len());
            let prov = Provenance::new("train-model", seed, serde_json::to_value(&train)?);
            write_model(&out, &model, &prov)?;
            Ok(())
        }
        Command::RadioSlam { run } => {
            let (data, model) = inputs(&run)?;
            let out = run_radio_slam(&data, &model, &config.pipeline)?;
            let prov = Provenance::new("radio-slam", seed, serde_json::to_value(&config.pipeline)?);
            write_trajectory(&run.out, &out.trajectory, &prov)?;
            if let Some(path) = &run.report {
                write_json(path, &out.report)?;
            }
            info!(
                "{} keyframes, {} radio closures",
                out.report.keyframes, out.report.radio_edges
            );
            Ok(())
        }
        Command::RadioLidarSlam { run, map } => {
            let (data, model) = inputs(&run)?;
            let out = run_radio_lidar_slam(&data, &model, &config.pipeline)?;
            let prov = Provenance::new("radio-lidar-slam", seed, serde_json::to_value(&config.pipeline)?);
            write_trajectory(&run.out, &out.trajectory, &prov)?;
            write_map(&map, &out.grid, &prov)?;
            if let Some(path) = &run.report {
                write_json(path, &out.report)?;
            }
            info!(
                "{} keyframes, {} radio closures, {} lidar closures",
                out.report.keyframes, out.report.radio_edges, out.report.lidar_edges
            );
            Ok(())
        }
        Command::Eval {
            estimated,
            reference,
            alignment,
            max_dt,
            json,
        } => {
            let alignment = match alignment {
                Some(a) => a.parse()?,
                None => config.eval.alignment,
            };
            let est = read_trajectory(&estimated)?;
            let reference = read_trajectory(&reference)?;
            let report = ate(&est, &reference, alignment, max_dt.unwrap_or(config.eval.max_dt))?;
            print!("{}", report.table());
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Render {
            trajectories,
            dataset,
            out,
            scale,
        } => render(&config, seed, &trajectories, dataset.as_deref(), &out, scale),
    }
}

fn simulate(config: &Config, seed: Option<u64>, name: Option<&str>, no_scans: bool, out: &Path) -> Result<()> {
    let seed_value = seed.unwrap_or(0);
    let mut scenario = match (name, &config.scenario) {
        (Some(n), _) => Scenario::canned(n, seed_value)?,
        (None, Some(s)) => s.clone(),
        (None, None) => bail!("give --scenario or a config with a `scenario` section"),
    };
    if let Some(s) = seed {
        scenario.world.seed = s;
    }
    if no_scans {
        scenario.world.lidar = None;
    }
    let dataset = scenario.simulate()?;
    let prov = Provenance::new(
        "simulate",
        Some(scenario.world.seed),
        serde_json::json!({ "scenario": scenario.name, "no_scans": no_scans }),
    );
    write_dataset(out, &dataset, &prov)?;
    // The full world description, so the run can be reproduced from config.
    write_json(&out.join("scenario.json"), &serde_json::json!({ "scenario": scenario }))?;
    info!("wrote {} odometry samples to {}", dataset.odometry.len(), out.display());
    Ok(())
}

fn inputs(run: &RunArgs) -> Result<(radioslam::dataset::Dataset, radioslam::distance_model::DistanceModel)> {
    let data = load_dataset(&run.dataset)?;
    let model = read_model(&run.model)?;
    Ok((data, model))
}

fn write_map(path: &Path, grid: &radioslam::mapping::OccupancyGrid, prov: &Provenance) -> Result<()> {
    let image = export_pgm(grid, DEFAULT_OCCUPIED_THRESHOLD, DEFAULT_FREE_THRESHOLD)?;
    let header = prov.header();
    let comment: String = header.lines().map(|l| l.trim_start_matches("# ")).collect::<Vec<_>>().join("\n");
    write_atomic(path, &image.to_bytes(Some(&comment)))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_atomic(&path.with_extension("yaml"), image.metadata_text(&name, Some(&comment)).as_bytes())?;
    Ok(())
}

const COLORS: [&str; 4] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd"];

fn render(
    config: &Config,
    seed: Option<u64>,
    trajectories: &[PathBuf],
    dataset: Option<&Path>,
    out: &Path,
    scale: f64,
) -> Result<()> {
    let trajs: Vec<Vec<TimedPose>> = trajectories
        .iter()
        .map(|p| read_trajectory(p))
        .collect::<radioslam::Result<_>>()?;
    let grid = match dataset {
        Some(d) => {
            let data = load_dataset(d)?;
            if data.scans.is_none() {
                bail!("dataset {} has no scans to map", d.display());
            }
            let chain = build_keyframes(&data, &config.pipeline)?;
            let poses = chain
                .keyframes
                .iter()
                .map(|k| interpolate(&trajs[0], k.timestamp))
                .collect::<Option<Vec<_>>>()
                .context("empty trajectory")?;
            Some(keyframe_map(&poses, &chain.keyframes, config.pipeline.map_resolution)?)
        }
        None => None,
    };
    let prov = Provenance::new(
        "render",
        seed,
        serde_json::json!({
            "trajectories": trajectories,
            "dataset": dataset,
            "map_resolution": config.pipeline.map_resolution,
        }),
    );
    let is_pgm = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if is_pgm {
        let Some(grid) = &grid else {
            bail!("PGM output needs --dataset to build a map");
        };
        return write_map(out, grid, &prov);
    }
    let layers: Vec<SvgLayer> = trajs
        .iter()
        .zip(trajectories)
        .enumerate()
        .map(|(k, (t, p))| SvgLayer {
            label: p.display().to_string(),
            color: COLORS[k % COLORS.len()].to_owned(),
            points: t.iter().map(|s| s.pose.position()).collect(),
        })
        .collect();
    let comment = prov.header().lines().map(|l| l.trim_start_matches("# ")).collect::<Vec<_>>().join("; ");
    let svg = svg_overlay(grid.as_ref(), &layers, scale, Some(&comment));
    write_atomic(out, svg.as_bytes())?;
    Ok(())
}

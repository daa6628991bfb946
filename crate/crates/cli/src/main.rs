use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use sea_core::atlas::Atlas;
use sea_core::features::PlaceModel;
use sea_core::harness::plot::{heatmap_svg, noise_sweep_svg, trajectories_svg};
use sea_core::harness::{
    atlas_from_logs, collect_place_samples, prepare, prepare_eval, random_walk, read_results_csv, report_from_rows, run_suite, scene_name,
    scene_seeds, train_place_model, AtlasBuildReport, ClusterTrainConfig, ExploreLog, Prepared, Scene, SuiteConfig, SuiteOutput,
    SuiteReport,
};
use sea_core::localize::{
    accuracy_at, context_fixture, localize_with_context, node_distance_estimate, pair_samples, ContextWeights, FixtureConfig, Query,
};
use sea_core::rng::{derive, stream, streams};
use sea_core::simworld::{FeatureBank, GridWorld, CATEGORY_NAMES};
use sea_core::SemanticGraphMap;

#[derive(Parser)]
#[command(name = "sea", version, about = "Semantic environment atlas: scene generation, atlas building and object-goal navigation")]
struct Cli {
    /// Suite configuration (TOML). Defaults apply when omitted; SEA_SEED overrides the seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Increase log verbosity.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write train and evaluation houses as scene JSON.
    GenScenes {
        #[arg(long)]
        out: PathBuf,
    },
    /// Collect random-walk logs in every scene of a directory.
    Explore {
        #[arg(long)]
        scenes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Episodes per scene; defaults to the config value.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Place clusters.
    Clusters {
        #[command(subcommand)]
        cmd: ClustersCmd,
    },
    /// Semantic environment atlas.
    Atlas {
        #[command(subcommand)]
        cmd: AtlasCmd,
    },
    /// Run the flag matrix and noise sweep.
    Run(RunArgs),
    /// Recompute the report from a results file.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localize queries against a saved map.
    Localize(LocalizeArgs),
    /// Render figures from saved artifacts.
    Plot(PlotArgs),
}

#[derive(Subcommand)]
enum ClustersCmd {
    Train {
        #[arg(long)]
        logs: PathBuf,
        /// Scene directory; scenes are regenerated from their seeds when omitted.
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AtlasCmd {
    Build {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        clusters: PathBuf,
        #[arg(long)]
        scenes: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    out: PathBuf,
    /// Use saved clusters instead of training them (requires --atlas).
    #[arg(long, requires = "atlas")]
    clusters: Option<PathBuf>,
    #[arg(long, requires = "clusters")]
    atlas: Option<PathBuf>,
    /// Also write every episode trace to traces.jsonl.
    #[arg(long)]
    traces: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Channels {
    Image,
    ImageObject,
    All,
}

#[derive(Args)]
struct LocalizeArgs {
    #[arg(long, required_unless_present = "write_fixture")]
    sgm: Option<PathBuf>,
    #[arg(long, required_unless_present = "write_fixture")]
    queries: Option<PathBuf>,
    #[arg(long, required_unless_present = "write_fixture")]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    channels: Channels,
    /// Write a synthetic map.json and queries.jsonl into this directory and exit.
    #[arg(long, conflicts_with_all = ["sgm", "queries", "out"])]
    write_fixture: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    fixture_seed: u64,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    out: PathBuf,
    /// Γ and R heatmaps.
    #[arg(long)]
    atlas: Option<PathBuf>,
    /// Success against pose noise level.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Trajectories over this scene, taken from --traces.
    #[arg(long, requires = "traces")]
    scene: Option<PathBuf>,
    #[arg(long, requires = "scene")]
    traces: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn load_config(path: Option<&Path>) -> Result<SuiteConfig> {
    let cfg = match path {
        Some(p) => SuiteConfig::load(p)?,
        None => {
            let mut c = SuiteConfig::default();
            c.apply_env()?;
            c
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::GenScenes { out } => gen_scenes(&cfg, &out),
        Cmd::Explore { scenes, out, episodes, steps } => explore(&cfg, &scenes, &out, episodes, steps),
        Cmd::Clusters { cmd: ClustersCmd::Train { logs, scenes, out } } => clusters_train(&cfg, &logs, scenes.as_deref(), &out),
        Cmd::Atlas { cmd: AtlasCmd::Build { logs, clusters, scenes, out } } => atlas_build(&cfg, &logs, &clusters, scenes.as_deref(), &out),
        Cmd::Run(args) => run(&cfg, &args),
        Cmd::Eval { results, out } => eval(&cfg, &results, &out),
        Cmd::Localize(args) => localize(&args),
        Cmd::Plot(args) => plot(&args),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value)?)
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    out.sort();
    Ok(out)
}

fn gen_scenes(cfg: &SuiteConfig, out: &Path) -> Result<()> {
    let (train, eval) = scene_seeds(cfg);
    for (split, seeds) in [("train", train), ("eval", eval)] {
        for s in seeds {
            let world = sea_core::simworld::generate_house(s, &cfg.house)?;
            write(&out.join(split).join(format!("{}.json", scene_name(s))), &world.to_json()?)?;
        }
        info!("wrote {split} scenes to {}", out.join(split).display());
    }
    Ok(())
}

/// Scenes keyed by seed: loaded from `dir`, or regenerated from the seeds the
/// logs name when no directory is given.
fn scenes_for(cfg: &SuiteConfig, dir: Option<&Path>, logs: &[ExploreLog], bank: &FeatureBank) -> Result<HashMap<u64, Scene>> {
    let mut out = HashMap::new();
    match dir {
        Some(d) => {
            for p in files(d, "json")? {
                let world = GridWorld::from_json(&read(&p)?).with_context(|| format!("parsing {}", p.display()))?;
                let features = sea_core::simworld::SceneFeatures::new(&world, bank);
                out.insert(world.seed, Scene { world, features });
            }
        }
        None => {
            for log in logs {
                if let Entry::Vacant(v) = out.entry(log.scene_seed) {
                    v.insert(Scene::generate(log.scene_seed, &cfg.house, bank)?);
                }
            }
        }
    }
    Ok(out)
}

fn explore(cfg: &SuiteConfig, scenes: &Path, out: &Path, episodes: Option<usize>, steps: Option<usize>) -> Result<()> {
    let bank = FeatureBank::standard();
    let scenes = scenes_for(cfg, Some(scenes), &[], &bank)?;
    if scenes.is_empty() {
        bail!("no scenes found");
    }
    let mut seeds: Vec<u64> = scenes.keys().copied().collect();
    seeds.sort_unstable();
    let mut written = 0;
    for s in seeds {
        let sc = &scenes[&s];
        let mut rng = stream(s, streams::EPISODE);
        for k in 0..episodes.unwrap_or(cfg.explore_episodes) {
            let start = sc.world.random_free_pose(&mut rng);
            let log =
                random_walk(&sc.world, &sc.features, start, derive(s, 500 + k as u64), steps.unwrap_or(cfg.explore_steps), cfg.noise)?;
            write(&out.join(format!("{}-{k:02}.jsonl", scene_name(s))), &log.to_jsonl()?)?;
            written += 1;
        }
    }
    info!("wrote {written} logs to {}", out.display());
    Ok(())
}

/// Parses every log in `dir`; unreadable ones are skipped with a warning.
fn load_logs(dir: &Path) -> Result<Vec<ExploreLog>> {
    let mut logs = Vec::new();
    for p in files(dir, "jsonl")? {
        match read(&p).and_then(|t| Ok(ExploreLog::from_jsonl(&t)?)) {
            Ok(l) => logs.push(l),
            Err(e) => warn!("skipping {}: {e:#}", p.display()),
        }
    }
    if logs.is_empty() {
        bail!("no usable logs in {}", dir.display());
    }
    Ok(logs)
}

fn clusters_train(cfg: &SuiteConfig, logs: &Path, scenes: Option<&Path>, out: &Path) -> Result<()> {
    let logs = load_logs(logs)?;
    let bank = FeatureBank::standard();
    let scenes = scenes_for(cfg, scenes, &logs, &bank)?;
    let mut samples = Vec::new();
    for log in &logs {
        let Some(sc) = scenes.get(&log.scene_seed) else {
            warn!("no scene for log seed {}", log.scene_seed);
            continue;
        };
        samples.extend(collect_place_samples(&sc.world, &sc.features, log, cfg.clusters.sample_every)?);
    }
    let model = train_place_model(&samples, &ClusterTrainConfig { seed: derive(cfg.seed, 3), ..cfg.clusters.clone() })?;
    write_json(out, &model)?;
    info!("trained {} place clusters from {} samples", model.n_places(), samples.len());
    Ok(())
}

fn atlas_build(cfg: &SuiteConfig, logs: &Path, clusters: &Path, scenes: Option<&Path>, out: &Path) -> Result<()> {
    let logs = load_logs(logs)?;
    let place: PlaceModel = serde_json::from_str(&read(clusters)?).context("parsing clusters")?;
    let bank = FeatureBank::standard();
    let scenes = scenes_for(cfg, scenes, &logs, &bank)?;
    let (atlas, report) =
        atlas_from_logs(&logs, |s| scenes.get(&s).map(|sc| (&sc.world, &sc.features)), &place, cfg.episode.register_score)?;
    for s in &report.skipped {
        warn!("{s}");
    }
    write(out, &atlas.to_json()?)?;
    info!("atlas over {} scenes from {} logs", atlas.n_scenes, report.used);
    Ok(())
}

fn category_labels() -> Vec<String> {
    CATEGORY_NAMES.iter().map(|s| s.to_string()).collect()
}

fn place_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("P{i}")).collect()
}

fn atlas_figures(atlas: &Atlas, out: &Path) -> Result<()> {
    let places = place_labels(atlas.n_places);
    write(&out.join("gamma.svg"), &heatmap_svg(&atlas.gamma, "Reachability between place clusters", &places, &places))?;
    write(&out.join("r.svg"), &heatmap_svg(&atlas.r, "Place-object connections", &places, &category_labels()))
}

fn sweep_points(report: &SuiteReport) -> Vec<(u32, f64)> {
    let Some(first) = report.summary.first() else { return Vec::new() };
    let mut pts: Vec<(u32, f64)> =
        report.summary.iter().filter(|s| s.variant == first.variant).map(|s| (s.noise_level, s.metrics.success_rate)).collect();
    pts.sort_by_key(|p| p.0);
    pts
}

fn run(cfg: &SuiteConfig, args: &RunArgs) -> Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let prep = match (&args.clusters, &args.atlas) {
        (Some(c), Some(a)) => {
            let place: PlaceModel = serde_json::from_str(&read(c)?).context("parsing clusters")?;
            let atlas = Atlas::from_json(&read(a)?).context("parsing atlas")?;
            let (_, eval_seeds) = scene_seeds(cfg);
            let eval = prepare_eval(cfg, &eval_seeds, &FeatureBank::standard())?;
            Prepared { place, atlas, atlas_report: AtlasBuildReport::default(), logs: Vec::new(), eval }
        }
        _ => {
            info!("preparing {} train and {} evaluation scenes", cfg.train_scenes, cfg.eval_scenes);
            let p = prepare(cfg)?;
            write_json(&args.out.join("clusters.json"), &p.place)?;
            write(&args.out.join("atlas.json"), &p.atlas.to_json()?)?;
            p
        }
    };
    info!("running {} evaluation episodes per variant", prep.eval.iter().map(|e| e.1.len()).sum::<usize>());
    let output = run_suite(cfg, &prep)?;
    output.write_csv(&args.out.join("results.csv"))?;
    write_json(&args.out.join("report.json"), &output.report)?;
    atlas_figures(&prep.atlas, &args.out)?;
    let pts = sweep_points(&output.report);
    if pts.len() > 1 {
        write(&args.out.join("noise_sweep.svg"), &noise_sweep_svg(&pts))?;
    }
    if let Some((scene, _)) = prep.eval.first() {
        write(&args.out.join("trajectories.svg"), &first_scene_trajectories(&output, &scene.world, cfg))?;
    }
    if args.traces {
        let scene_of: HashMap<String, &str> =
            output.rows.iter().map(|r| (format!("{}/{}/{}", r.variant, r.noise_level, r.episode), r.scene.as_str())).collect();
        let mut text = String::new();
        for (key, t) in &output.traces {
            let scene = scene_of.get(key).copied().unwrap_or_default().to_string();
            text.push_str(&serde_json::to_string(&TraceLine { key: key.clone(), scene, trace: t.clone() })?);
            text.push('\n');
        }
        write(&args.out.join("traces.jsonl"), &text)?;
    }
    print_summary(&output.report);
    Ok(())
}

#[derive(Serialize, serde::Deserialize)]
struct TraceLine {
    key: String,
    scene: String,
    trace: sea_core::harness::EpisodeTrace,
}

/// Paths of the first variant at the base noise level in the first scene.
fn first_scene_trajectories(output: &SuiteOutput, world: &GridWorld, cfg: &SuiteConfig) -> String {
    let variant = &cfg.variants[0].name;
    let scene = scene_name(world.seed);
    let prefix = format!("{variant}/{}/", cfg.pose_level);
    let indices: Vec<usize> = output
        .rows
        .iter()
        .filter(|r| &r.variant == variant && r.noise_level == cfg.pose_level && r.scene == scene)
        .map(|r| r.episode)
        .collect();
    let paths: Vec<Vec<[f64; 2]>> = output
        .traces
        .iter()
        .filter(|(k, _)| k.strip_prefix(&prefix).and_then(|i| i.parse().ok()).is_some_and(|i: usize| indices.contains(&i)))
        .map(|(_, t)| t.positions.clone())
        .collect();
    trajectories_svg(world, &paths, None)
}

fn print_summary(report: &SuiteReport) {
    println!("{:<16} {:>5} {:>7} {:>7} {:>7} {:>7}", "variant", "noise", "n", "success", "spl", "dts");
    for s in &report.summary {
        let m = &s.metrics;
        println!("{:<16} {:>5} {:>7} {:>7.3} {:>7.3} {:>7.3}", s.variant, s.noise_level, m.episodes, m.success_rate, m.spl, m.dts);
    }
    for c in &report.comparisons {
        println!("{} - {}: {:+.3} [{:+.3}, {:+.3}]", c.a, c.b, c.diff, c.ci_low, c.ci_high);
    }
}

fn eval(cfg: &SuiteConfig, results: &Path, out: &Path) -> Result<()> {
    let rows = read_results_csv(results)?;
    if rows.is_empty() {
        bail!("{} holds no rows", results.display());
    }
    let report = report_from_rows(&rows, cfg.seed, cfg.episode.success_distance, cfg.bootstrap_resamples)?;
    write_json(out, &report)?;
    print_summary(&report);
    Ok(())
}

#[derive(Serialize)]
struct LocalizeRow {
    query: usize,
    matched_node: usize,
    x: f64,
    y: f64,
    confidence: f64,
    /// Hop-based distance estimate to the previous query's node.
    distance_to_prev: Option<f64>,
    error_m: Option<f64>,
}

fn localize(args: &LocalizeArgs) -> Result<()> {
    if let Some(dir) = &args.write_fixture {
        let f = context_fixture(args.fixture_seed, &FixtureConfig::default())?;
        write(&dir.join("map.json"), &serde_json::to_string(&f.sgm)?)?;
        let mut text = String::new();
        for q in &f.queries {
            text.push_str(&serde_json::to_string(q)?);
            text.push('\n');
        }
        write(&dir.join("queries.jsonl"), &text)?;
        info!("wrote fixture with {} queries to {}", f.queries.len(), dir.display());
        return Ok(());
    }
    let (Some(sgm), Some(queries), Some(out)) = (&args.sgm, &args.queries, &args.out) else {
        bail!("--sgm, --queries and --out are required");
    };
    let sgm: SemanticGraphMap = serde_json::from_str(&read(sgm)?).context("parsing map")?;
    let queries: Vec<Query> = read(queries)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("query line {}", i + 1)))
        .collect::<Result<_>>()?;
    let w = match args.channels {
        Channels::Image => ContextWeights::image_only(),
        Channels::ImageObject => ContextWeights::image_object(),
        Channels::All => ContextWeights::default(),
    };
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut wtr = csv::Writer::from_path(out).with_context(|| format!("writing {}", out.display()))?;
    let mut prev = None;
    for (i, q) in queries.iter().enumerate() {
        let r = localize_with_context(&sgm, q, &w)?;
        let [x, y] = r.position_estimate;
        let distance_to_prev = prev.map(|p| node_distance_estimate(&sgm, p, r.matched_node)).transpose()?;
        let error_m = q.pose.map(|p| (p[0] - x).hypot(p[1] - y));
        wtr.serialize(LocalizeRow { query: i, matched_node: r.matched_node, x, y, confidence: r.confidence, distance_to_prev, error_m })?;
        prev = Some(r.matched_node);
    }
    wtr.flush()?;
    if queries.len() >= 2 && queries.iter().all(|q| q.pose.is_some()) {
        let s = pair_samples(&sgm, &queries, &w)?;
        println!("Acc@0.5m {:.3}  Acc@1m {:.3}  ({} pairs)", accuracy_at(&s, 0.5)?, accuracy_at(&s, 1.0)?, s.len());
    }
    Ok(())
}

fn plot(args: &PlotArgs) -> Result<()> {
    let mut made = 0;
    if let Some(a) = &args.atlas {
        atlas_figures(&Atlas::from_json(&read(a)?).context("parsing atlas")?, &args.out)?;
        made += 2;
    }
    if let Some(r) = &args.report {
        let report: SuiteReport = serde_json::from_str(&read(r)?).context("parsing report")?;
        write(&args.out.join("noise_sweep.svg"), &noise_sweep_svg(&sweep_points(&report)))?;
        made += 1;
    }
    if let (Some(s), Some(t)) = (&args.scene, &args.traces) {
        let world = GridWorld::from_json(&read(s)?).context("parsing scene")?;
        let name = scene_name(world.seed);
        let mut paths = Vec::new();
        for (i, line) in read(t)?.lines().filter(|l| !l.trim().is_empty()).enumerate() {
            let tl: TraceLine = serde_json::from_str(line).with_context(|| format!("trace line {}", i + 1))?;
            if tl.scene == name {
                paths.push(tl.trace.positions);
            }
        }
        write(&args.out.join("trajectories.svg"), &trajectories_svg(&world, &paths, None))?;
        made += 1;
    }
    if made == 0 {
        bail!("nothing to plot; pass --atlas, --report or --scene with --traces");
    }
    Ok(())
}

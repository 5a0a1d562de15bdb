//! Command implementations behind the `uavcol` binary.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use uavcol_core::mission::{
    run_schemes, verify_mission, ComparisonTable, MetricsRecord, Scheme, SchemeConfig, Trajectory,
};
use uavcol_core::Error;

use crate::config::{RunConfig, SchemeSelector};
use crate::generate::{generate_scenario, Template};
use crate::scenario_file::ScenarioFile;

/// Failure of a command, mapped onto the process exit status.
#[derive(Debug)]
pub enum CliError {
    /// Missions ran but at least one failed, or a trajectory has violations.
    MissionFailed(String),
    InvalidInput(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::MissionFailed(_) => 1,
            CliError::InvalidInput(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::MissionFailed(m) | CliError::InvalidInput(m) | CliError::Internal(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::InvalidScenario { .. }
            | Error::TooLarge { .. }
            | Error::GenerationFailed { .. }
            | Error::Parse(_) => CliError::InvalidInput(e.to_string()),
            Error::ShapeMismatch { .. } | Error::TrainingHalted { .. } | Error::Io(_) => {
                CliError::Internal(e.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn read_input(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::InvalidInput(format!("cannot read {}: {e}", path.display())))
}

/// Writes `contents` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let internal = |e: std::io::Error| CliError::Internal(format!("cannot write {}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(internal)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(internal)?;
    tmp.write_all(contents).map_err(internal)?;
    tmp.as_file().sync_all().map_err(internal)?;
    tmp.persist(path).map_err(|e| internal(e.error))?;
    Ok(())
}

pub fn load_scenario(path: &Path) -> CliResult<ScenarioFile> {
    let text = read_input(path)?;
    ScenarioFile::parse(&text).map_err(|e| CliError::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => Ok(RunConfig::from_json(&read_input(p)?)?),
    }
}

fn thread_pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

pub struct GenerateArgs {
    pub items: usize,
    pub obstacles: Option<usize>,
    pub seed: u64,
    pub template: Template,
    pub out: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs) -> CliResult<()> {
    let n_obs = args.obstacles.unwrap_or(args.template.params().default_obstacles);
    let file = generate_scenario(args.items, n_obs, args.seed, args.template)?;
    write_atomic(&args.out, file.to_text().as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

/// Options shared by `run` and `sweep`.
pub struct RunOptions {
    pub scheme: Option<SchemeSelector>,
    pub seeds: Option<Vec<u64>>,
    pub out: Option<PathBuf>,
    pub jobs: usize,
    pub paper_rewards: bool,
    pub episodes: Option<usize>,
    pub config: RunConfig,
}

impl RunOptions {
    fn scheme_config(&self) -> CliResult<SchemeConfig> {
        let mut cfg = self.config.apply(&SchemeConfig::desk())?;
        if self.paper_rewards {
            cfg.hp.rewards.scale_dist = 1.0;
        }
        if let Some(m) = self.episodes {
            cfg.hp.episodes = m;
        }
        Ok(cfg)
    }

    fn schemes(&self) -> Vec<Scheme> {
        self.scheme.or(self.config.scheme).unwrap_or(SchemeSelector::All).schemes()
    }

    fn seeds(&self, fallback: u64) -> Vec<u64> {
        self.seeds.clone().or_else(|| self.config.seeds.clone()).unwrap_or_else(|| vec![fallback])
    }

    fn out_dir(&self) -> CliResult<PathBuf> {
        self.out
            .clone()
            .or_else(|| self.config.out.clone())
            .ok_or_else(|| CliError::InvalidInput("an output directory is required (--out)".into()))
    }
}

pub fn trajectory_file_name(scheme: Scheme, seed: u64) -> String {
    format!("trajectory_{}_seed{seed}.csv", scheme.label())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub rows: Vec<MetricsRecord>,
    pub failed: usize,
}

pub fn cmd_run(scenario_path: &Path, opts: &RunOptions) -> CliResult<RunSummary> {
    let file = load_scenario(scenario_path)?;
    let scenario = file.scenario();
    let cfg = opts.scheme_config()?;
    let schemes = opts.schemes();
    let seeds = opts.seeds(file.seed);
    let out = opts.out_dir()?;
    let k = scenario.num_items();

    let pool = thread_pool(opts.jobs)?;
    let runs = pool.install(|| {
        seeds.par_iter().map(|&seed| run_schemes(&scenario, seed, &schemes, &cfg)).collect::<Vec<_>>()
    });

    let mut table = ComparisonTable::default();
    for runs in runs {
        let runs = runs?;
        for r in &runs.results {
            write_atomic(&out.join(trajectory_file_name(r.scheme, runs.seed)), r.trajectory.to_csv().as_bytes())?;
            table.rows.push(r.metrics(k, runs.seed));
        }
    }
    write_atomic(&out.join("metrics.jsonl"), table.to_json_lines().as_bytes())?;
    let summary = serde_json::to_string_pretty(&table.summary()).expect("summary serializes") + "\n";
    write_atomic(&out.join("comparison.json"), summary.as_bytes())?;

    for s in table.summary() {
        println!(
            "{:<12} runs {:>3}  success {:>5.1}%  mean time {:>8.1} s  mean tour {:>8.1} m",
            s.scheme.label(),
            s.runs,
            100.0 * s.success_rate,
            s.mean_time_s,
            s.mean_tour_length_m
        );
    }
    let failed = table.rows.iter().filter(|r| !r.success).count();
    Ok(RunSummary { rows: table.rows, failed })
}

/// Long-format sweep row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub mission_time_s: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAggregate {
    pub scheme: Scheme,
    #[serde(rename = "K")]
    pub k: usize,
    pub runs: usize,
    pub mean_time_s: f64,
    pub success_rate: f64,
}

pub struct SweepArgs {
    pub ks: Vec<usize>,
    pub obstacles: Option<usize>,
    pub template: Template,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("scheme,K,seed,mission_time_s,success\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.scheme, r.k, r.seed, r.mission_time_s, r.success as u8));
    }
    s
}

pub fn aggregate(rows: &[SweepRow]) -> Vec<SweepAggregate> {
    let mut ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    let mut out = Vec::new();
    for k in ks {
        for scheme in Scheme::ALL {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.k == k && r.scheme == scheme).collect();
            if sel.is_empty() {
                continue;
            }
            let n = sel.len() as f64;
            out.push(SweepAggregate {
                scheme,
                k,
                runs: sel.len(),
                mean_time_s: sel.iter().map(|r| r.mission_time_s).sum::<f64>() / n,
                success_rate: sel.iter().filter(|r| r.success).count() as f64 / n,
            });
        }
    }
    out
}

pub fn aggregate_csv(aggs: &[SweepAggregate]) -> String {
    let mut s = String::from("scheme,K,runs,mean_time_s,success_rate\n");
    for a in aggs {
        s.push_str(&format!("{},{},{},{},{}\n", a.scheme, a.k, a.runs, a.mean_time_s, a.success_rate));
    }
    s
}

/// One generated scenario per (K, seed); every scheme flies it with that seed.
pub fn cmd_sweep(args: &SweepArgs, opts: &RunOptions) -> CliResult<Vec<SweepRow>> {
    if args.ks.is_empty() || args.ks.contains(&0) {
        return Err(CliError::InvalidInput("--ks must list item counts >= 1".into()));
    }
    let cfg = opts.scheme_config()?;
    let schemes = opts.schemes();
    let seeds = opts.seeds(0);
    let out = opts.out_dir()?;
    let n_obs = args.obstacles.unwrap_or(args.template.params().default_obstacles);

    let mut cases = Vec::new();
    for &k in &args.ks {
        for &seed in &seeds {
            let file = generate_scenario(k, n_obs, seed, args.template)?;
            write_atomic(&out.join(format!("scenario_K{k}_seed{seed}.json")), file.to_text().as_bytes())?;
            cases.push((k, seed, file.scenario()));
        }
    }

    let pool = thread_pool(opts.jobs)?;
    let results = pool.install(|| {
        cases.par_iter().map(|(_, seed, sc)| run_schemes(sc, *seed, &schemes, &cfg)).collect::<Vec<_>>()
    });

    let mut rows = Vec::new();
    for ((k, seed, _), runs) in cases.iter().zip(results) {
        for r in runs?.results {
            rows.push(SweepRow {
                scheme: r.scheme,
                k: *k,
                seed: *seed,
                mission_time_s: r.mission_time,
                success: r.success(),
            });
        }
    }
    let aggs = aggregate(&rows);
    write_atomic(&out.join("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    write_atomic(&out.join("sweep_summary.csv"), aggregate_csv(&aggs).as_bytes())?;
    for a in &aggs {
        println!(
            "K={:<3} {:<12} runs {:>3}  success {:>5.1}%  mean time {:>8.1} s",
            a.k,
            a.scheme.label(),
            a.runs,
            100.0 * a.success_rate,
            a.mean_time_s
        );
    }
    Ok(rows)
}

/// Prints the verification report; `Ok(false)` when violations were found.
pub fn cmd_validate(trajectory_path: &Path, scenario_path: &Path) -> CliResult<bool> {
    let file = load_scenario(scenario_path)?;
    let scenario = file.scenario();
    let text = read_input(trajectory_path)?;
    let traj = Trajectory::from_csv(&text, scenario.delta)
        .map_err(|e| CliError::InvalidInput(format!("{}: {e}", trajectory_path.display())))?;
    let violations = verify_mission(&traj, &scenario);
    if violations.is_empty() {
        println!("ok: {} samples, no violations", traj.samples.len());
        return Ok(true);
    }
    for v in &violations {
        println!("{v}");
    }
    println!("{} violation(s)", violations.len());
    Ok(false)
}

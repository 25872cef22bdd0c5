//! Command line: `train`, `eval`, `record`, `replay`, `serve`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fastslow_core::slow::{
    LlmBackend, MemoryBank, SlowConfig, SlowDirector, SlowSystem, StubBackend, DEFAULT_MEMORY_CAP,
};
use fastslow_core::trainer::{evaluate, Baseline, BatchLog, Director, EvalReport, FixedLane, KeepStartLane, Trainer};
use fastslow_core::ScenarioConfig;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::config::{load_train_config, resolve_scenario};
use crate::episode_log::{read_log, record_episode, replay, write_log};
use crate::exec::Rayon;
use crate::manifest::RunManifest;
use crate::memory_file::{append_transcript, load_bank, save_bank};
use crate::remote::{RemoteBackend, RemoteConfig};
use crate::serve::{start, OwnedPilot, ServeOptions, DEFAULT_PORT};
use crate::{Error, Result};

pub const CURVE_FILE: &str = "learning_curve.csv";
pub const FINAL_DIR: &str = "final";
pub const CHECKPOINT_EVERY: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "fastslow", version, about = "Fast-slow human-in-the-loop driving: train, evaluate, replay, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a policy and write checkpoints and a learning curve.
    Train(TrainArgs),
    /// Evaluate a checkpoint (or a baseline) and print a JSON report.
    Eval(EvalArgs),
    /// Play episodes and write JSON-lines episode logs.
    Record(RecordArgs),
    /// Re-simulate episode logs and check them bit for bit.
    Replay(ReplayArgs),
    /// Run a live session over a websocket.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmChoice {
    Stub,
    Remote,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineChoice {
    Random,
    KeepLane,
    SpeedUp,
}

impl From<BaselineChoice> for Baseline {
    fn from(b: BaselineChoice) -> Self {
        match b {
            BaselineChoice::Random => Baseline::Random,
            BaselineChoice::KeepLane => Baseline::KeepLane,
            BaselineChoice::SpeedUp => Baseline::SpeedUp,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Preset name (highway, merge, two_way) or scenario TOML file.
    #[arg(long, default_value = "highway")]
    pub scenario: String,
    /// Training config TOML; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mask: Option<Switch>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct PilotArgs {
    /// Checkpoint directory.
    #[arg(long, required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Drive with a baseline instead of a checkpoint.
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    pub baseline: Option<BaselineChoice>,
    /// Scenario preset or TOML file; defaults to the checkpoint's scenario.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long, value_enum, default_value = "on")]
    pub mask: Switch,
}

#[derive(Debug, Clone, Args)]
pub struct SlowArgs {
    #[arg(long, value_enum, default_value = "off")]
    pub llm: LlmChoice,
    /// Instruction given at the start of every episode.
    #[arg(long)]
    pub instruction: Option<String>,
    /// Memory bank file (JSON lines), loaded before and saved after.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    /// Append every prompt and response to this file.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Environment variable holding the remote API key.
    #[arg(long, default_value = crate::remote::ENV_API_KEY)]
    pub api_key_env: String,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub pilot: PilotArgs,
    #[command(flatten)]
    pub slow: SlowArgs,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fixed directed lane with --llm off; sampled per episode when absent.
    #[arg(long)]
    pub lane: Option<usize>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RecordArgs {
    #[command(flatten)]
    pub pilot: PilotArgs,
    #[command(flatten)]
    pub slow: SlowArgs,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    /// Seed of the first episode; later ones count up.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// Episode logs, or directories of `*.jsonl` logs.
    #[arg(required = true)]
    pub logs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub pilot: PilotArgs,
    #[arg(long, value_enum, default_value = "stub")]
    pub llm: LlmChoice,
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Playback speed; 1 is real time.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    #[arg(long, default_value = crate::remote::ENV_API_KEY)]
    pub api_key_env: String,
}

/// Parse `std::env::args`, run, and return the exit status.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Train(a) => cmd_train(&a).map(|_| 0),
        Command::Eval(a) => cmd_eval(&a).map(|_| 0),
        Command::Record(a) => cmd_record(&a).map(|_| 0),
        Command::Replay(a) => cmd_replay(&a),
        Command::Serve(a) => cmd_serve(&a).map(|_| 0),
    }
}

#[derive(Debug, Serialize)]
struct CurveRow {
    batch: usize,
    env_steps: usize,
    mean_return: f64,
    kl: f64,
    entropy: f64,
    success_rate: f64,
    episodes: usize,
    collisions: usize,
    surrogate: f64,
    critic: f64,
    early_stop: bool,
    minibatches: usize,
}

impl From<&BatchLog> for CurveRow {
    fn from(l: &BatchLog) -> Self {
        CurveRow {
            batch: l.batch,
            env_steps: l.env_steps,
            mean_return: l.mean_return,
            kl: l.kl,
            entropy: l.entropy,
            success_rate: l.success_rate,
            episodes: l.episodes,
            collisions: l.collisions,
            surrogate: l.surrogate,
            critic: l.critic,
            early_stop: l.early_stop,
            minibatches: l.minibatches,
        }
    }
}

/// What `train` produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub logs: Vec<BatchLog>,
    pub final_checkpoint: PathBuf,
}

pub fn cmd_train(a: &TrainArgs) -> Result<TrainOutcome> {
    // everything is validated before the output directory is touched
    let env = resolve_scenario(&a.scenario)?.with_seed(a.seed);
    let mut cfg = load_train_config(a.config.as_deref())?;
    if let Some(steps) = a.steps {
        cfg.total_steps = steps;
    }
    if let Some(m) = a.mask {
        cfg.mask = m.on();
    }
    let mut trainer = Trainer::new(&env, &cfg, a.seed).map_err(|e| Error::Config(e.to_string()))?;

    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest::new("train", json!({"scenario": env, "train": cfg}), a.seed);
    manifest.add_output(crate::manifest::RUN_MANIFEST_FILE);
    manifest.add_output(CURVE_FILE);
    manifest.add_output(format!("{FINAL_DIR}/"));
    manifest.write(out)?;

    let result = (|| -> Result<TrainOutcome> {
        let mut csv = csv::Writer::from_path(out.join(CURVE_FILE))?;
        let mut logs = Vec::new();
        let meta = |t: &Trainer| CheckpointMeta {
            scenario: Some(env.clone()),
            train: Some(cfg.clone()),
            seed: Some(a.seed),
            batch: Some(t.batch),
            env_steps: Some(t.batch * cfg.batch_steps),
        };
        while !trainer.finished() {
            let log = trainer.run_batch(&Rayon)?;
            csv.serialize(CurveRow::from(&log))?;
            csv.flush().map_err(|e| Error::io(out.join(CURVE_FILE), e))?;
            if !a.quiet {
                eprintln!(
                    "batch {}/{} steps {} return {:.3} success {:.2} kl {:.4} entropy {:.3}",
                    log.batch,
                    trainer.total_batches(),
                    log.env_steps,
                    log.mean_return,
                    log.success_rate,
                    log.kl,
                    log.entropy
                );
            }
            if log.batch % CHECKPOINT_EVERY == 0 {
                let rel = format!("checkpoints/batch_{:04}", log.batch);
                save_checkpoint(&out.join(&rel), &trainer.params, &meta(&trainer))?;
                manifest.add_output(format!("{rel}/"));
                manifest.write(out)?;
            }
            logs.push(log);
        }
        let final_checkpoint = save_checkpoint(&out.join(FINAL_DIR), &trainer.params, &meta(&trainer))?;
        Ok(TrainOutcome { logs, final_checkpoint })
    })();
    match &result {
        Ok(_) => manifest.finish(out, "ok")?,
        Err(e) => manifest.finish(out, &format!("failed: {e}"))?,
    };
    result
}

struct Loaded {
    pilot: OwnedPilot,
    env: ScenarioConfig,
    label: String,
}

fn load_pilot(p: &PilotArgs) -> Result<Loaded> {
    let (pilot, stored, label) = match (&p.checkpoint, p.baseline) {
        (Some(dir), _) => {
            let ck = load_checkpoint(dir)?;
            (OwnedPilot::Policy(ck.params), ck.manifest.scenario, format!("policy:{}", dir.display()))
        }
        (None, Some(b)) => (OwnedPilot::Baseline(b.into()), None, format!("baseline:{b:?}").to_lowercase()),
        (None, None) => return Err(Error::Config("either --checkpoint or --baseline is required".into())),
    };
    let env = match (&p.scenario, stored) {
        (Some(s), _) => resolve_scenario(s)?,
        (None, Some(env)) => env,
        (None, None) => return Err(Error::Config("--scenario is required when the checkpoint has none".into())),
    };
    Ok(Loaded { pilot, env, label })
}

/// The slow system for `--llm stub|remote`.
pub fn make_system(
    llm: LlmChoice,
    bank: MemoryBank,
    api_key_env: &str,
) -> Option<SlowSystem<Box<dyn LlmBackend + Send>>> {
    let backend: Box<dyn LlmBackend + Send> = match llm {
        LlmChoice::Off => return None,
        LlmChoice::Stub => Box::new(StubBackend),
        LlmChoice::Remote => {
            let mut cfg = RemoteConfig::from_env();
            cfg.api_key_env = api_key_env.to_string();
            Box::new(RemoteBackend::new(cfg))
        }
    };
    Some(SlowSystem::new(backend, bank, SlowConfig::default()))
}

fn load_memory(path: Option<&Path>) -> Result<MemoryBank> {
    match path {
        Some(p) => load_bank(p, DEFAULT_MEMORY_CAP),
        None => Ok(MemoryBank::default()),
    }
}

fn finish_slow(director: &SlowDirector<Box<dyn LlmBackend + Send>>, s: &SlowArgs) -> Result<()> {
    if let Some(p) = &s.memory {
        save_bank(p, &director.system.bank)?;
    }
    if let Some(p) = &s.transcript {
        append_transcript(p, &director.system.transcript)?;
    }
    Ok(())
}

/// Evaluation report as printed by `eval`.
pub fn eval_json(report: &EvalReport, label: &str, env: &ScenarioConfig, a: &EvalArgs) -> serde_json::Value {
    let s = &report.summary;
    json!({
        "pilot": label,
        "scenario": env,
        "llm": format!("{:?}", a.slow.llm).to_lowercase(),
        "instruction": a.slow.instruction,
        "mask": a.pilot.mask.on(),
        "seed": a.seed,
        "episodes": s.episodes,
        "success_rate": s.success_rate,
        "avg_speed": s.avg_speed,
        "accel_variability": s.accel_variability,
        "min_ttc": s.min_ttc,
        "max_speed": s.max_speed,
        "min_speed": s.min_speed,
        "adherence": report.adherence,
        "mean_return": report.mean_return,
        "overtakes": report.overtakes,
        "collisions": report.episodes.iter().filter(|e| e.collided).count(),
        "per_episode": report.episodes,
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<serde_json::Value> {
    if a.episodes == 0 {
        return Err(Error::Config("--episodes must be at least 1".into()));
    }
    let loaded = load_pilot(&a.pilot)?;
    if let Some(lane) = a.lane {
        if lane >= loaded.env.lane_count {
            return Err(Error::Config(format!("--lane {lane} is outside the road")));
        }
    }
    let pilot = loaded.pilot.pilot();
    let mask = a.pilot.mask.on();
    let report = match make_system(a.slow.llm, load_memory(a.slow.memory.as_deref())?, &a.slow.api_key_env) {
        Some(system) => {
            let mut director = SlowDirector::new(system, a.slow.instruction.clone());
            let r = evaluate(pilot, &loaded.env, &mut director, a.episodes, a.seed, mask)?;
            finish_slow(&director, &a.slow)?;
            r
        }
        None => {
            let mut fixed = match a.lane {
                Some(l) => FixedLane::lane(l),
                None => FixedLane::sampled(),
            };
            evaluate(pilot, &loaded.env, &mut fixed, a.episodes, a.seed, mask)?
        }
    };
    let value = eval_json(&report, &loaded.label, &loaded.env, a);
    let text = serde_json::to_string_pretty(&value)?;
    if let Some(p) = &a.report {
        fs::write(p, &text).map_err(|e| Error::io(p, e))?;
    }
    println!("{text}");
    Ok(value)
}

pub fn cmd_record(a: &RecordArgs) -> Result<Vec<PathBuf>> {
    let loaded = load_pilot(&a.pilot)?;
    let out = &a.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut manifest = RunManifest::new(
        "record",
        json!({"scenario": loaded.env, "pilot": loaded.label, "episodes": a.episodes}),
        a.seed,
    );
    manifest.add_output(crate::manifest::RUN_MANIFEST_FILE);
    manifest.write(out)?;
    let mut system = make_system(a.slow.llm, load_memory(a.slow.memory.as_deref())?, &a.slow.api_key_env)
        .map(|s| SlowDirector::new(s, a.slow.instruction.clone()));
    let mut paths = Vec::new();
    let mut keep = KeepStartLane;
    for i in 0..a.episodes as u64 {
        let seed = a.seed + i;
        let director: &mut dyn Director = match &mut system {
            Some(d) => d,
            None => &mut keep,
        };
        let (log, _) = record_episode(
            loaded.pilot.pilot(),
            &loaded.env,
            director,
            seed,
            a.pilot.mask.on(),
            &loaded.label,
            a.slow.instruction.as_deref(),
        )?;
        let name = format!("{}_{seed}.jsonl", loaded.env.kind.name());
        write_log(&out.join(&name), &log)?;
        manifest.add_output(name.clone());
        manifest.write(out)?;
        println!("{}", out.join(&name).display());
        paths.push(out.join(name));
    }
    if let Some(d) = &system {
        finish_slow(d, &a.slow)?;
    }
    manifest.finish(out, "ok")?;
    Ok(paths)
}

fn expand_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

/// Exit status 0 when every log replays, 1 otherwise.
pub fn cmd_replay(a: &ReplayArgs) -> Result<i32> {
    let stdout = std::io::stdout();
    replay_files(&a.logs, &mut stdout.lock())
}

/// Replay every log under `inputs` (files or directories of `.jsonl`),
/// writing one PASS/FAIL line each to `w`.
pub fn replay_files(inputs: &[PathBuf], w: &mut dyn Write) -> Result<i32> {
    let logs = expand_logs(inputs)?;
    if logs.is_empty() {
        return Err(Error::Config("no episode logs found".into()));
    }
    let mut failed = 0;
    for path in &logs {
        let (log, truncated) = read_log(path)?;
        let report = replay(&log)?;
        let note = if truncated { " (truncated log, prefix checked)" } else { "" };
        let line = match &report.divergence {
            None => format!("PASS {} ({} steps){note}", path.display(), report.steps_checked),
            Some(d) => {
                failed += 1;
                format!("FAIL {}: first divergent step {} (tick {}): {}", path.display(), d.step, d.tick, d.detail)
            }
        };
        let _ = writeln!(w, "{line}");
    }
    Ok(if failed == 0 { 0 } else { 1 })
}

pub fn cmd_serve(a: &ServeArgs) -> Result<()> {
    if a.llm == LlmChoice::Off {
        return Err(Error::Config("serve needs --llm stub or --llm remote".into()));
    }
    if !(a.speed > 0.0) {
        return Err(Error::Config("--speed must be positive".into()));
    }
    let loaded = load_pilot(&a.pilot)?;
    let system = make_system(a.llm, load_memory(a.memory.as_deref())?, &a.api_key_env)
        .ok_or_else(|| Error::Config("no slow system".into()))?;
    let options = ServeOptions {
        bind: a.bind.clone(),
        port: a.port,
        speed: a.speed,
        seed: a.seed,
        mask: a.pilot.mask.on(),
        memory_path: a.memory.clone(),
        transcript_path: a.transcript.clone(),
    };
    let handle = start(loaded.pilot, loaded.env, SlowDirector::new(system, None), options)?;
    eprintln!("serving session {} on {}", handle.hub.session(), handle.url());
    handle.wait()
}

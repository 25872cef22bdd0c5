//! Acceptance suite. Prints one `PASS`/`FAIL` line per check.
//!
//! Exits non-zero when a check fails that is not listed in
//! `KNOWN_FAILS`; those still print `FAIL` with their measurements.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use fastslow::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use fastslow::cli::replay_files;
use fastslow::episode_log::{perturb_control, read_log, record_episode, write_log};
use fastslow::exec::Rayon;
use fastslow_core::episode::DriveSession;
use fastslow_core::exec::Sequential;
use fastslow_core::policy::{
    forward, forward_rows, init_params, ppo_gradients, ppo_loss, Dims, LossConfig, PolicyParams, Sample,
};
use fastslow_core::rng::{rng_from_seed, stream};
use fastslow_core::sim::{build_scenario, Direction, Observation, OBS_ROWS, PRESENT_COL};
use fastslow_core::slow::{
    cosine, embed_text, encode_scene, parse_directive, render_directive_block, BackendError, DirectiveSource,
    LlmBackend, MemoryBank, Prompt, SlowConfig, SlowDirector, SlowSystem, StubBackend,
};
use fastslow_core::trainer::{
    compute_advantages, evaluate, run_episode, run_training_episode, train, Baseline, BatchLog, FixedLane, Pilot,
    TrainConfig,
};
use fastslow_core::{Action, Directive, ScenarioConfig, ScenarioKind};
use rand::seq::SliceRandom;
use rand::Rng;

const KNOWN_FAILS: &[usize] = &[5];
const HURRY: &str = "I'm in a hurry to get to work, I want to drive faster";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Train, then round-trip through an f32 checkpoint.
fn trained(kind: ScenarioKind, steps: usize, mask: bool) -> (PolicyParams, Vec<BatchLog>) {
    let env = ScenarioConfig::preset(kind, 42);
    let cfg = TrainConfig { total_steps: steps, mask, ..TrainConfig::default() };
    let (params, logs) = train(&env, &cfg, 42, &Rayon, |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_checkpoint(dir.path(), &params, &CheckpointMeta::default()).unwrap();
    (load_checkpoint(dir.path()).unwrap().params, logs)
}

fn gradient_check() -> Outcome {
    let dims = Dims { d_in: 6, d_model: 8, heads: 1, layers: 1 };
    let mut p = init_params(21, dims).unwrap();
    let mut rng = rng_from_seed(22);
    for (_, slot, bias) in p.layout.arrays() {
        if bias {
            p.slice_mut(slot).iter_mut().for_each(|x| *x = rng.gen_range(-0.5..0.5));
        }
    }
    let batch: Vec<Sample> = (0..4)
        .map(|i| {
            let input: Vec<f64> = (0..3)
                .flat_map(|r| {
                    let mut row: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    row.push(if r == 2 && i % 2 == 0 { 0.0 } else { 1.0 });
                    row
                })
                .collect();
            let t = forward_rows(&p, &input, 3).unwrap();
            let action = Action::ALL[i % 5];
            Sample {
                input,
                n: 3,
                action,
                allowed: [true; 5],
                logp_old: t.probs[action.index()].ln() + rng.gen_range(-0.05..0.05),
                advantage: rng.gen_range(-1.0..1.0),
                value_target: rng.gen_range(-1.0..1.0),
            }
        })
        .collect();
    let cfg = LossConfig::default();
    let (g, _) = ppo_gradients(&p, &batch, &cfg, &Sequential).unwrap();
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..p.data.len() {
        let orig = p.data[i];
        p.data[i] = orig + eps;
        let up = ppo_loss(&p, &batch, &cfg).unwrap().loss;
        p.data[i] = orig - eps;
        let down = ppo_loss(&p, &batch, &cfg).unwrap().loss;
        p.data[i] = orig;
        let fd = (up - down) / (2.0 * eps);
        worst = worst.max((fd - g.data[i]).abs() / fd.abs().max(g.data[i].abs()).max(1e-7));
    }
    outcome(worst < 1e-4, format!("{} parameters, max relative error {worst:.2e} (< 1e-4)", p.data.len()))
}

fn random_observation(rng: &mut impl Rng) -> Observation {
    let mut o = Observation::zeros();
    o.rows[0] = [0.0, rng.gen_range(0.0..1.0), 0.0, 0.0, rng.gen_range(0.0..1.0), 1.0];
    for r in 1..OBS_ROWS {
        if rng.gen_bool(0.7) {
            for c in 0..PRESENT_COL {
                o.rows[r][c] = rng.gen_range(-2.0..2.0);
            }
            o.rows[r][PRESENT_COL] = 1.0;
        }
    }
    o
}

fn distribution_invariants() -> Outcome {
    let p = init_params(5, Dims::default()).unwrap();
    let mut rng = rng_from_seed(6);
    let (mut row_err, mut prob_err, mut perm_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let obs = random_observation(&mut rng);
        let t = forward(&p, &obs).unwrap();
        prob_err = prob_err.max((t.probs.iter().sum::<f64>() - 1.0).abs());
        for l in 0..p.dims().layers {
            for h in 0..p.dims().heads {
                for row in t.attention(l, h).chunks(t.n) {
                    row_err = row_err.max((row.iter().sum::<f64>() - 1.0).abs());
                }
            }
        }
        let mut order: Vec<usize> = (1..OBS_ROWS).collect();
        order.shuffle(&mut rng);
        let mut shuffled = obs;
        for (dst, &src) in order.iter().enumerate() {
            shuffled.rows[dst + 1] = obs.rows[src];
        }
        let u = forward(&p, &shuffled).unwrap();
        for k in 0..Action::COUNT {
            perm_err = perm_err.max((t.logits[k] - u.logits[k]).abs());
        }
    }
    outcome(
        row_err < 1e-6 && prob_err < 1e-6 && perm_err < 1e-9,
        format!("1000 observations, attention row error {row_err:.1e}, distribution error {prob_err:.1e} (< 1e-6), permutation logit change {perm_err:.1e} (< 1e-9)"),
    )
}

fn advantage_oracle() -> Outcome {
    let p = init_params(3, Dims::default()).unwrap();
    let mut rng = rng_from_seed(4);
    let mut worst: f64 = 0.0;
    let mut steps = 0;
    for e in 0..100u64 {
        let kind = ScenarioKind::ALL[(e % 3) as usize];
        let traj = run_training_episode(&p, &ScenarioConfig::preset(kind, 0), true, e, rng.gen_range(5..120)).unwrap();
        let rewards: Vec<f64> = traj.steps.iter().map(|s| s.reward).collect();
        let values: Vec<f64> = traj.steps.iter().map(|s| s.value_old).collect();
        let gamma = [0.99, 0.9, 0.5][(e % 3) as usize];
        let k = rng.gen_range(1..40);
        let (adv, _) = compute_advantages(&rewards, &values, traj.bootstrap_value, gamma, k).unwrap();
        let n = rewards.len();
        for t in 0..n {
            let mut sum = 0.0;
            let mut i = 0;
            while i < k && t + i < n {
                sum += gamma.powi(i as i32) * rewards[t + i];
                i += 1;
            }
            let tail = if t + k < n { values[t + k] } else { traj.bootstrap_value };
            let brute = sum + gamma.powi(i as i32) * tail - values[t];
            worst = worst.max((adv[t] - brute).abs());
        }
        steps += n;
    }
    outcome(worst <= 1e-10, format!("100 episodes, {steps} steps, max abs difference {worst:.1e} (<= 1e-10)"))
}

fn mask_property() -> Outcome {
    let started = Instant::now();
    let (mut states, mut forks, mut bad) = (0, 0, 0);
    let mut episode = 0u64;
    while states < 10_000 {
        episode += 1;
        let kind = ScenarioKind::ALL[(episode % 3) as usize];
        let mut rng = stream(7, episode);
        let cfg = ScenarioConfig::preset(kind, episode * 1000 + 7);
        let y_des = cfg.lane_center(rng.gen_range(0..cfg.lane_count));
        let mut s = DriveSession::new(&cfg, Some(y_des)).unwrap();
        while !s.done && states < 10_000 {
            let mask = s.action_mask();
            let allowed: Vec<Action> = Action::ALL.into_iter().filter(|a| mask[a.index()]).collect();
            for &a in &allowed {
                let mut fork = s.clone();
                fork.step(a);
                forks += 1;
                bad += usize::from(fork.world.collided);
            }
            states += 1;
            s.step(allowed[rng.gen_range(0..allowed.len())]);
        }
    }
    let property_secs = started.elapsed().as_secs_f64();
    let rate = |logs: &[BatchLog]| {
        let eps: usize = logs.iter().map(|l| l.episodes).sum();
        let col: usize = logs.iter().map(|l| l.collisions).sum();
        (col as f64 / eps as f64, col, eps)
    };
    let (on, c_on, e_on) = rate(&trained(ScenarioKind::Highway, 10_000, true).1);
    let (off, c_off, e_off) = rate(&trained(ScenarioKind::Highway, 10_000, false).1);
    outcome(
        bad == 0 && states == 10_000 && on < off,
        format!(
            "{states} states, {forks} allowed actions simulated, {bad} collisions ({property_secs:.0} s); training collision rate at 1e4 steps mask on {on:.3} ({c_on}/{e_on}) vs off {off:.3} ({c_off}/{e_off}); {:.0} s total",
            started.elapsed().as_secs_f64()
        ),
    )
}

fn learning_progress(params: &PolicyParams, logs: &[BatchLog], train_secs: f64) -> Outcome {
    let tenth = (logs.len() / 10).max(1);
    let mean = |ls: &[BatchLog]| ls.iter().map(|l| l.mean_return).sum::<f64>() / ls.len() as f64;
    let (first, last) = (mean(&logs[..tenth]), mean(&logs[logs.len() - tenth..]));
    let env = ScenarioConfig::highway(42);
    let greedy = evaluate(Pilot::Policy(params), &env, &mut FixedLane::sampled(), 100, 1, true).unwrap();
    let random = evaluate(Pilot::Baseline(Baseline::Random), &env, &mut FixedLane::sampled(), 100, 1, false).unwrap();
    let random_masked =
        evaluate(Pilot::Baseline(Baseline::Random), &env, &mut FixedLane::sampled(), 100, 1, true).unwrap();
    let (g, r) = (greedy.summary.success_rate, random.summary.success_rate);
    let ratio = last / first;
    outcome(
        ratio >= 2.0 && g >= 0.70 && g > r,
        format!(
            "return first 10% {first:.2} final 10% {last:.2} ratio {ratio:.2} (>= 2); greedy success {g:.2} (>= 0.70) vs random {r:.2} (random under the mask {:.2}); training {train_secs:.0} s",
            random_masked.summary.success_rate
        ),
    )
}

fn adherence(params: &PolicyParams) -> Outcome {
    let started = Instant::now();
    let env = ScenarioConfig::highway(42);
    let (mut kept, mut adhered, mut crashed, mut batch) = (0, 0, 0, 0u64);
    while kept < 100 {
        let r = evaluate(Pilot::Policy(params), &env, &mut FixedLane::sampled(), 100, 100 + batch, true).unwrap();
        batch += 1;
        for e in r.episodes {
            if e.collided {
                crashed += 1;
            } else if kept < 100 {
                kept += 1;
                adhered += usize::from(Some(e.final_lane) == e.directed_lane);
            }
        }
    }
    let rate = adhered as f64 / kept as f64;
    outcome(
        rate >= 0.80,
        format!("{adhered}/{kept} collision-free episodes end in the directed lane ({rate:.2} >= 0.80), {crashed} collided episodes skipped, {:.0} s", started.elapsed().as_secs_f64()),
    )
}

struct Failing(BackendError);

impl LlmBackend for Failing {
    fn complete(&mut self, _: &Prompt) -> Result<String, BackendError> {
        Err(self.0.clone())
    }
}

struct Says(&'static str);

impl LlmBackend for Says {
    fn complete(&mut self, _: &Prompt) -> Result<String, BackendError> {
        Ok(self.0.to_string())
    }
}

fn slow_system() -> Outcome {
    let mut notes = String::new();
    let instructions = [HURRY, "please drive carefully", "move to the right lane 2", "hello there", "left lane 0 now"];

    // determinism
    let mut runs = 0;
    let mut deterministic = true;
    let prefilled = |seed: u64| {
        let mut bank = MemoryBank::with_capacity(64);
        for s in 0..20 {
            let w = build_scenario(&ScenarioConfig::preset(ScenarioKind::ALL[(s % 3) as usize], seed + s)).unwrap();
            bank.write(encode_scene(&w), Directive::neutral(w.ego().lane), 1.0, s as f64).unwrap();
        }
        bank
    };
    for seed in 0..30u64 {
        let world = build_scenario(&ScenarioConfig::preset(ScenarioKind::ALL[(seed % 3) as usize], seed)).unwrap();
        for text in instructions {
            let mut a = SlowSystem::new(StubBackend, prefilled(seed), SlowConfig::default());
            let mut b = SlowSystem::new(StubBackend, prefilled(seed), SlowConfig::default());
            let (da, db) = (a.decide(&world, text), b.decide(&world, text));
            deterministic &= da.directive == db.directive
                && serde_json::to_string(&a.transcript).unwrap() == serde_json::to_string(&b.transcript).unwrap();
            runs += 1;
        }
    }
    let _ = write!(notes, "stub deterministic on {runs} runs: {deterministic}; ");

    // retrieval against brute-force cosine
    let mut rng = rng_from_seed(9);
    let (mut queries, mut mismatches) = (0, 0);
    for bank_index in 0..3u64 {
        let mut bank = MemoryBank::with_capacity(1000);
        let mut embeddings = Vec::new();
        for i in 0..1000u64 {
            let kind = ScenarioKind::ALL[rng.gen_range(0..3)];
            let mut s = DriveSession::new(&ScenarioConfig::preset(kind, bank_index * 10_000 + i), None).unwrap();
            for _ in 0..rng.gen_range(0..4) {
                s.step(Action::ALL[rng.gen_range(0..5)]);
            }
            let scene = encode_scene(&s.world);
            embeddings.push(embed_text(&scene.text).unwrap());
            bank.write(scene, Directive::neutral(0), 0.0, i as f64).unwrap();
        }
        for q in 0..50u64 {
            let world =
                build_scenario(&ScenarioConfig::preset(ScenarioKind::ALL[(q % 3) as usize], 900_000 + q)).unwrap();
            let scene = encode_scene(&world);
            let qe = embed_text(&scene.text).unwrap();
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for (i, e) in embeddings.iter().enumerate() {
                let s = cosine(&qe, e);
                // newest wins ties
                if s >= best_score {
                    best = i;
                    best_score = s;
                }
            }
            let hit = bank.retrieve(&scene, 3).unwrap()[0];
            queries += 1;
            mismatches += usize::from(hit.index != best || hit.score != best_score);
        }
    }
    let _ = write!(notes, "retrieval argmax mismatches {mismatches}/{queries} on 1000-entry banks; ");

    // parser round trip
    let mut rt_total = 0;
    let mut rt_bad = 0;
    let mut invalid = 0;
    let mut accepted_invalid = 0;
    let rationales =
        ["", "overtake the truck", "quote \" and `backtick` and \\ slash", "línea izquierda → 0", "multi\nline"];
    for kind in ScenarioKind::ALL {
        let cfg = ScenarioConfig::preset(kind, 0);
        for lane in 0..cfg.lane_count {
            for intent in -1..=1i8 {
                for urgency in [0.0, 0.25, 1.0, rng.gen_range(0.0..1.0)] {
                    for rationale in rationales {
                        let d =
                            Directive { target_lane: lane, speed_intent: intent, urgency, rationale: rationale.into() };
                        let text = format!("Step 1: look around.\n{}", render_directive_block(&d));
                        let parsed = parse_directive(&text, &cfg);
                        if d.range_error(&cfg).is_some() {
                            invalid += 1;
                            accepted_invalid += usize::from(parsed.is_ok());
                            continue;
                        }
                        rt_total += 1;
                        rt_bad += usize::from(parsed.ok() != Some(d));
                    }
                }
            }
        }
    }
    let _ = write!(
        notes,
        "parser round trips {}/{rt_total} valid directives, rejects {}/{invalid} invalid ones; ",
        rt_total - rt_bad,
        invalid - accepted_invalid
    );

    // fallback
    let world = build_scenario(&ScenarioConfig::highway(3)).unwrap();
    let neutral = Directive::neutral(world.ego().lane);
    let backends: Vec<Box<dyn LlmBackend>> = vec![
        Box::new(Failing(BackendError::Timeout)),
        Box::new(Failing(BackendError::Transport("http 500".into()))),
        Box::new(Failing(BackendError::EmptyResponse)),
        Box::new(Says("")),
        Box::new(Says("no block here")),
        Box::new(Says("```json\n{not json}\n```")),
        Box::new(Says(
            "```json\n{\"target_lane\": 7, \"speed_intent\": 0, \"urgency\": 0.5, \"rationale\": \"\"}\n```",
        )),
        Box::new(Says(
            "```json\n{\"target_lane\": 1, \"speed_intent\": 2, \"urgency\": 0.5, \"rationale\": \"\"}\n```",
        )),
        Box::new(Says(
            "```json\n{\"target_lane\": 1, \"speed_intent\": 0, \"urgency\": 1.5, \"rationale\": \"\"}\n```",
        )),
        Box::new(Says("```json\n{\"target_lane\": 1, \"speed_intent\": 0}\n```")),
    ];
    let cases = backends.len() + 1;
    let mut fell_back = 0;
    for b in backends {
        let mut sys = SlowSystem::new(b, MemoryBank::default(), SlowConfig::default());
        let d = sys.decide(&world, HURRY);
        fell_back += usize::from(d.source == DirectiveSource::Fallback && d.directive == neutral);
    }
    let d = SlowSystem::new(StubBackend, MemoryBank::default(), SlowConfig::default()).decide(&world, "  ");
    fell_back += usize::from(d.source == DirectiveSource::Fallback && d.directive == neutral);
    let _ = write!(notes, "neutral fallback on {fell_back}/{cases} failure modes");

    outcome(deterministic && mismatches == 0 && rt_bad == 0 && accepted_invalid == 0 && fell_back == cases, notes)
}

fn overtake_demo(params: &PolicyParams, train_secs: f64) -> Outcome {
    let started = Instant::now();
    let env = ScenarioConfig::two_way(42);
    let seed = 0;
    let run = |instruction: Option<&str>| {
        let system = SlowSystem::new(StubBackend, MemoryBank::default(), SlowConfig::default());
        let mut director = SlowDirector::new(system, instruction.map(String::from));
        run_episode(Pilot::Policy(params), &env, &mut director, seed, true).unwrap().0
    };
    let start = build_scenario(&env.with_seed(seed)).unwrap();
    let ego = start.ego();
    let leader = start
        .background()
        .filter(|v| v.direction == Direction::Forward && v.lane == ego.lane && v.x > ego.x)
        .min_by(|a, b| a.x.total_cmp(&b.x))
        .map(|v| v.id)
        .expect("a leader ahead of the ego");
    let behind =
        |s: &DriveSession| s.world.vehicles.iter().find(|v| v.id == leader).is_none_or(|v| s.world.ego().x < v.x);

    let with = run(Some(HURRY));
    let without = run(None);
    let pass = with.overtakes >= 1
        && !with.world.collided
        && without.overtakes == 0
        && !without.world.collided
        && behind(&without);
    outcome(
        pass,
        format!(
            "seed {seed}: with instruction {} overtake(s), collided {}; without: {} overtakes, collided {}, behind leader {}; episodes {:.1} s, training {train_secs:.0} s",
            with.overtakes,
            with.world.collided,
            without.overtakes,
            without.world.collided,
            behind(&without),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn replay_check(params: &PolicyParams) -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut files: Vec<PathBuf> = Vec::new();
    for i in 0..20u64 {
        let kind = ScenarioKind::ALL[(i % 3) as usize];
        let pilot = if i % 2 == 0 { Pilot::Policy(params) } else { Pilot::Baseline(Baseline::Random) };
        let env = ScenarioConfig::preset(kind, 0);
        let (log, _) =
            record_episode(pilot, &env, &mut FixedLane::sampled(), 500 + i, true, "acceptance", None).unwrap();
        let path = dir.path().join(format!("{}_{i}.jsonl", kind.name()));
        write_log(&path, &log).unwrap();
        files.push(path);
    }
    let mut report = Vec::new();
    let clean = replay_files(&[dir.path().to_path_buf()], &mut report).unwrap();
    let passes = String::from_utf8_lossy(&report).lines().filter(|l| l.starts_with("PASS")).count();

    let target = &files[4];
    let (mut log, _) = read_log(target).unwrap();
    let step = log.steps.iter().position(|s| s.controls.accel != 0.0 && s.controls.accel.abs() < 4.0).unwrap();
    perturb_control(&mut log, step, 51, false);
    write_log(target, &log).unwrap();
    let mut report = Vec::new();
    let perturbed = replay_files(&[dir.path().to_path_buf()], &mut report).unwrap();
    let text = String::from_utf8_lossy(&report).to_string();
    let fails: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    let located = fails.len() == 1 && fails[0].contains(&format!("first divergent step {}", step + 1));
    outcome(
        clean == 0 && passes == 20 && perturbed == 1 && located,
        format!(
            "{passes}/20 logs PASS across 3 scenarios; one flipped accel bit at step {step}: exit {perturbed}, {} FAIL line(s), located {located}; {:.1} s",
            fails.len(),
            started.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("[{}] {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "gradient check", gradient_check());
    report(2, "attention and distribution invariants", distribution_invariants());
    report(3, "advantage oracle", advantage_oracle());
    report(7, "slow system determinism, retrieval, parsing, fallback", slow_system());
    report(4, "safety mask property and ablation", mask_property());

    let t = Instant::now();
    let (highway, logs) = trained(ScenarioKind::Highway, 20_000, true);
    let highway_secs = t.elapsed().as_secs_f64();
    report(5, "highway learning progress", learning_progress(&highway, &logs, highway_secs));
    report(6, "directive adherence", adherence(&highway));
    report(9, "deterministic replay", replay_check(&highway));

    let t = Instant::now();
    let (two_way, _) = trained(ScenarioKind::TwoWay, 20_000, true);
    let two_way_secs = t.elapsed().as_secs_f64();
    report(8, "instructed overtake on two_way", overtake_demo(&two_way, two_way_secs));

    let failed: Vec<usize> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    let unexpected: Vec<usize> = failed.iter().copied().filter(|n| !KNOWN_FAILS.contains(n)).collect();
    let fixed: Vec<usize> = KNOWN_FAILS.iter().copied().filter(|n| !failed.contains(n)).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}; known failures {:?}; unexpected failures {:?}; known failures now passing {:?}",
        results.len() - failed.len(),
        failed.len(),
        failed,
        KNOWN_FAILS,
        unexpected,
        fixed
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}

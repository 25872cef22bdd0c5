//! Live session service: runs episodes continuously and streams them over
//! a websocket (protocol [`crate::wire`]). One session per process.
//!
//! The session thread is the only writer of simulation state. Client
//! threads forward parsed `instruction` / `control` messages to it; it
//! applies them at the next decision boundary.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender, TryRecvError};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use fastslow_core::control::{safety_mask, ArbitrationEvent, Verdict};
use fastslow_core::episode::DriveSession;
use fastslow_core::policy::{forward, PolicyParams};
use fastslow_core::rng::{stream, SimRng};
use fastslow_core::sim::{metrics_summary, RewardBreakdown, SIM_DT};
use fastslow_core::slow::{LlmBackend, SlowDirector, TranscriptEntry};
use fastslow_core::trainer::{Baseline, Director, Pilot};
use fastslow_core::{Action, ScenarioConfig, WorldState};
use tungstenite::Message;

use crate::memory_file::{append_transcript, save_bank};
use crate::wire::*;
use crate::{Error, Result};

pub const DEFAULT_PORT: u16 = 8700;
const POLL: Duration = Duration::from_millis(20);

/// Owned counterpart of [`Pilot`].
#[derive(Debug, Clone)]
pub enum OwnedPilot {
    Policy(PolicyParams),
    Baseline(Baseline),
}

impl OwnedPilot {
    pub fn pilot(&self) -> Pilot<'_> {
        match self {
            OwnedPilot::Policy(p) => Pilot::Policy(p),
            OwnedPilot::Baseline(b) => Pilot::Baseline(*b),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub bind: String,
    /// 0 picks a free port.
    pub port: u16,
    /// Playback speed; 1.0 is real time.
    pub speed: f64,
    /// Seed of the first episode; later episodes count up from it.
    pub seed: u64,
    pub mask: bool,
    pub memory_path: Option<PathBuf>,
    pub transcript_path: Option<PathBuf>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            bind: "127.0.0.1".into(),
            port: DEFAULT_PORT,
            speed: 1.0,
            seed: 0,
            mask: true,
            memory_path: None,
            transcript_path: None,
        }
    }
}

/// Sequencing and fan-out of outgoing messages.
pub struct Hub {
    session: String,
    inner: Mutex<HubInner>,
}

struct HubInner {
    seq: u64,
    clients: Vec<Sender<String>>,
    snapshot: Option<StatePayload>,
}

impl Hub {
    pub fn new(session: String) -> Self {
        Hub { session, inner: Mutex::new(HubInner { seq: 0, clients: Vec::new(), snapshot: None }) }
    }

    pub fn session(&self) -> &str {
        &self.session
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, HubInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Broadcast with the next sequence number.
    pub fn publish(&self, body: WireBody) {
        let mut inner = self.lock();
        inner.seq += 1;
        if let WireBody::State(s) = &body {
            inner.snapshot = Some(s.clone());
        }
        let text = WireMessage::new(&self.session, inner.seq, body).to_json();
        inner.clients.retain(|c| c.send(text.clone()).is_ok());
    }

    /// Register a client. Its first message is the latest state, re-sent
    /// as a snapshot under the latest sequence number.
    pub fn join(&self) -> Receiver<String> {
        let (tx, rx) = channel();
        let mut inner = self.lock();
        if let Some(mut snap) = inner.snapshot.clone() {
            snap.frame = FrameKind::Snapshot;
            let msg = WireMessage::new(&self.session, inner.seq, WireBody::State(snap));
            let _ = tx.send(msg.to_json());
        }
        inner.clients.push(tx);
        rx
    }

    pub fn clients(&self) -> usize {
        self.lock().clients.len()
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    episodes: u64,
    collisions: u64,
    streak: u64,
}

/// The episode loop.
pub struct LiveSession {
    hub: Arc<Hub>,
    pilot: OwnedPilot,
    env: ScenarioConfig,
    director: SlowDirector<Box<dyn LlmBackend + Send>>,
    session: DriveSession,
    rng: SimRng,
    seed: u64,
    episode: u64,
    paused: bool,
    options: ServeOptions,
    tally: Tally,
    transcript_written: usize,
}

impl LiveSession {
    pub fn new(
        hub: Arc<Hub>,
        pilot: OwnedPilot,
        env: ScenarioConfig,
        director: SlowDirector<Box<dyn LlmBackend + Send>>,
        options: ServeOptions,
    ) -> Result<Self> {
        let session = DriveSession::new(&env.with_seed(options.seed), None)?;
        let mut live = LiveSession {
            hub,
            pilot,
            env,
            director,
            session,
            rng: stream(options.seed, 3),
            seed: options.seed,
            episode: 0,
            paused: false,
            options,
            tally: Tally::default(),
            transcript_written: 0,
        };
        live.start_episode(live.seed)?;
        Ok(live)
    }

    fn start_episode(&mut self, seed: u64) -> Result<()> {
        let mut session = DriveSession::new(&self.env.with_seed(seed), None)?;
        session.mask_enabled = self.options.mask;
        self.director.reset(&mut session, seed);
        self.session = session;
        self.rng = stream(seed, 3);
        self.seed = seed;
        self.episode += 1;
        let state = self.state(&self.session.world.clone(), FrameKind::Decision, None);
        self.hub.publish(WireBody::State(state));
        Ok(())
    }

    fn state(&self, world: &WorldState, frame: FrameKind, reward: Option<RewardBreakdown>) -> StatePayload {
        let cfg = &world.config;
        StatePayload {
            frame,
            episode: self.episode,
            seed: self.seed,
            tick: world.tick,
            time: world.time,
            decision: self.session.decisions,
            road: RoadView {
                kind: cfg.kind,
                lane_count: cfg.lane_count,
                lane_width: cfg.lane_width,
                oncoming_lane: cfg.oncoming_lane(),
            },
            vehicles: world.vehicles.iter().map(VehicleView::from).collect(),
            collided: world.collided,
            done: self.session.done,
            paused: self.paused,
            reward,
            y_des: self.session.y_des,
            directive_lane: self.session.arbitration.active.as_ref().map(|d| d.target_lane),
            pending_directive: self.session.arbitration.pending.is_some(),
        }
    }

    fn handle(&mut self, body: WireBody) -> Result<()> {
        match body {
            WireBody::Instruction(p) => {
                self.hub.publish(WireBody::Instruction(p.clone()));
                self.director.instruct(&p.text);
                // carried into later episodes
                self.director.instruction = Some(p.text);
            }
            WireBody::Control(c) => match c.command {
                ControlCommand::Pause | ControlCommand::Resume => {
                    self.paused = c.command == ControlCommand::Pause;
                    let state = self.state(&self.session.world.clone(), FrameKind::Decision, None);
                    self.hub.publish(WireBody::State(state));
                }
                ControlCommand::Reset => self.start_episode(c.seed.unwrap_or(self.seed))?,
            },
            _ => {}
        }
        Ok(())
    }

    fn publish_transcript(&mut self, from: usize) -> Result<()> {
        let entries: Vec<TranscriptEntry> = self.director.system.transcript[from..].to_vec();
        for e in &entries {
            let failures = e.attempts.iter().filter_map(|a| a.as_ref().err().cloned()).collect();
            self.hub.publish(WireBody::Directive(DirectivePayload {
                time: e.time,
                instruction: e.instruction.clone(),
                directive: e.directive.clone(),
                source: e.source,
                failures,
            }));
        }
        if let Some(path) = &self.options.transcript_path {
            let all = &self.director.system.transcript;
            append_transcript(path, &all[self.transcript_written..])?;
            self.transcript_written = all.len();
        }
        Ok(())
    }

    /// One decision period, with tick frames paced by the playback speed.
    pub fn step_decision(&mut self) -> Result<()> {
        let before = self.director.system.transcript.len();
        self.director.before_decision(&mut self.session);
        self.publish_transcript(before)?;
        let time = self.session.world.time;
        match self.director.last_event {
            ArbitrationEvent::Deferred(reason) => self.hub.publish(WireBody::MaskEvent(MaskEventPayload {
                time,
                candidate: MaskCandidate::Directive,
                verdict: "deferred".into(),
                reason: Some(reason),
                executed: None,
            })),
            ArbitrationEvent::Expired => self.hub.publish(WireBody::MaskEvent(MaskEventPayload {
                time,
                candidate: MaskCandidate::Directive,
                verdict: "expired".into(),
                reason: None,
                executed: None,
            })),
            ArbitrationEvent::Idle | ArbitrationEvent::Applied => {}
        }

        let action = self.pilot.pilot().act(&self.session, &mut self.rng)?;
        if let (OwnedPilot::Policy(p), true) = (&self.pilot, self.session.mask_enabled) {
            let probs = forward(p, &self.session.observe()).map_err(fastslow_core::trainer::TrainError::from)?.probs;
            let mut top = Action::ALL[0];
            for a in Action::ALL {
                if probs[a.index()] > probs[top.index()] {
                    top = a;
                }
            }
            if let Verdict::Rejected(reason) = safety_mask(&self.session.mask_context(), top) {
                self.hub.publish(WireBody::MaskEvent(MaskEventPayload {
                    time,
                    candidate: MaskCandidate::Action(top),
                    verdict: "rejected".into(),
                    reason: Some(reason),
                    executed: Some(action),
                }));
            }
        }

        let mut ticks = Vec::new();
        let out = self.session.step_with(action, |w, _| ticks.push(w.clone()));
        let pause = Duration::from_secs_f64(SIM_DT / self.options.speed.max(1e-6));
        let last = ticks.len().saturating_sub(1);
        for (i, w) in ticks.iter().enumerate() {
            thread::sleep(pause);
            let (frame, reward) =
                if i == last { (FrameKind::Decision, Some(out.reward)) } else { (FrameKind::Tick, None) };
            let state = self.state(w, frame, reward);
            self.hub.publish(WireBody::State(state));
        }
        self.publish_metrics();
        Ok(())
    }

    fn publish_metrics(&self) {
        let Ok(m) = metrics_summary(std::slice::from_ref(&self.session.metrics)) else { return };
        self.hub.publish(WireBody::Metrics(MetricsPayload {
            episode: self.episode,
            avg_speed: m.avg_speed,
            accel_variability: m.accel_variability,
            min_ttc: m.min_ttc,
            max_speed: m.max_speed,
            min_speed: m.min_speed,
            episodes_done: self.tally.episodes,
            collisions: self.tally.collisions,
            success_streak: self.tally.streak,
        }));
    }

    fn end_episode(&mut self) -> Result<()> {
        self.director.finish(&self.session);
        self.tally.episodes += 1;
        if self.session.world.collided {
            self.tally.collisions += 1;
            self.tally.streak = 0;
        } else {
            self.tally.streak += 1;
        }
        self.publish_metrics();
        if let Some(path) = &self.options.memory_path {
            save_bank(path, &self.director.system.bank)?;
        }
        self.start_episode(self.seed.wrapping_add(1))
    }

    /// Run until `shutdown` is set.
    pub fn run(mut self, inbound: Receiver<WireBody>, shutdown: Arc<AtomicBool>) -> Result<()> {
        while !shutdown.load(Ordering::Relaxed) {
            loop {
                match inbound.try_recv() {
                    Ok(body) => self.handle(body)?,
                    Err(TryRecvError::Empty | TryRecvError::Disconnected) => break,
                }
            }
            if self.paused {
                thread::sleep(POLL);
            } else if self.session.done {
                thread::sleep(Duration::from_secs_f64(SIM_DT / self.options.speed.max(1e-6)));
                self.end_episode()?;
            } else {
                self.step_decision()?;
            }
        }
        Ok(())
    }
}

fn client_loop(stream: TcpStream, hub: Arc<Hub>, inbound: Sender<WireBody>, shutdown: Arc<AtomicBool>) {
    let _ = stream.set_nonblocking(false);
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(_) => return,
    };
    if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
        return;
    }
    let outgoing = hub.join();
    while !shutdown.load(Ordering::Relaxed) {
        loop {
            match outgoing.try_recv() {
                Ok(text) => {
                    if ws.send(Message::text(text)).is_err() {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => {
                // malformed or server-only messages are dropped
                if let Ok(body) = parse_inbound(&t) {
                    if inbound.send(body).is_err() {
                        return;
                    }
                }
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

/// A running server.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub hub: Arc<Hub>,
    shutdown: Arc<AtomicBool>,
    session: Option<JoinHandle<Result<()>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("ws://{}", self.addr)
    }

    /// Stop all threads and return the session loop's result.
    pub fn stop(mut self) -> Result<()> {
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        match self.session.take().map(|s| s.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Serve("session thread panicked".into())),
            None => Ok(()),
        }
    }

    /// Block until the session loop ends.
    pub fn wait(mut self) -> Result<()> {
        let r = match self.session.take().map(|s| s.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Serve("session thread panicked".into())),
            None => Ok(()),
        };
        self.shutdown.store(true, Ordering::Relaxed);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        r
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::Relaxed);
    }
}

fn session_id(seed: u64) -> String {
    let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.subsec_nanos());
    format!("s-{:08x}", (u64::from(nanos) ^ seed.rotate_left(17)) as u32)
}

/// Bind, publish the first state and start serving.
pub fn start(
    pilot: OwnedPilot,
    env: ScenarioConfig,
    director: SlowDirector<Box<dyn LlmBackend + Send>>,
    options: ServeOptions,
) -> Result<ServerHandle> {
    let listener = TcpListener::bind((options.bind.as_str(), options.port)).map_err(|e| {
        if e.kind() == ErrorKind::AddrInUse {
            Error::Serve(format!("port {} is already in use", options.port))
        } else {
            Error::Serve(format!("cannot bind {}:{}: {e}", options.bind, options.port))
        }
    })?;
    let addr = listener.local_addr().map_err(|e| Error::Serve(e.to_string()))?;
    listener.set_nonblocking(true).map_err(|e| Error::Serve(e.to_string()))?;
    let hub = Arc::new(Hub::new(session_id(options.seed)));
    let shutdown = Arc::new(AtomicBool::new(false));
    let live = LiveSession::new(hub.clone(), pilot, env, director, options)?;
    let (tx, rx) = channel();

    let session = {
        let shutdown = shutdown.clone();
        thread::spawn(move || {
            let r = live.run(rx, shutdown.clone());
            shutdown.store(true, Ordering::Relaxed);
            r
        })
    };
    let acceptor = {
        let (hub, shutdown) = (hub.clone(), shutdown.clone());
        thread::spawn(move || {
            while !shutdown.load(Ordering::Relaxed) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let (hub, tx, shutdown) = (hub.clone(), tx.clone(), shutdown.clone());
                        thread::spawn(move || client_loop(stream, hub, tx, shutdown));
                    }
                    Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                    Err(_) => thread::sleep(POLL),
                }
            }
        })
    };
    Ok(ServerHandle { addr, hub, shutdown, session: Some(session), acceptor: Some(acceptor) })
}

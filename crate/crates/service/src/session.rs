//! Live simulation session served over websockets.
//!
//! The control loop owns the simulation and runs at a fixed rate. Queries go
//! to a [`PipelineWorker`], so the loop never waits for an assistant. Each
//! connection has its own thread; it forwards client messages to the loop
//! as commands and writes the loop's broadcast frames with its own sequence
//! numbers.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use langnav_core::assistants::{
    initial_ratings, ActiveSpec, LlmClient, Pipeline, PipelineWorker, Query, SpecHandle,
};
use langnav_core::sim::{initial_spec, EpisodeConfig, EpisodeStepper, SimError, Termination};
use langnav_core::world::{Scenario, Vec2};
use tungstenite::{Message, WebSocket};

use crate::protocol::{
    ClientMsg, ControlMsg, ErrorMsg, Frame, HelloFrame, RunState, ServerMsg, SpecFrame, StateFrame,
    PROTO_VERSION,
};

/// Resolves a builtin scenario name or reads a scenario file.
pub fn resolve_scenario(name_or_path: &str) -> Result<Scenario, String> {
    if let Some(s) = Scenario::builtin(name_or_path) {
        return Ok(s);
    }
    Scenario::load(Path::new(name_or_path)).map_err(|e| e.to_string())
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub scenario: Scenario,
    pub episode: EpisodeConfig,
    pub seed: u64,
    /// Artificial delay before each query's pipeline starts.
    pub query_delay: Duration,
    /// Wall-clock length of one control period.
    pub period: Duration,
    /// How long a new connection may take to send its hello.
    pub handshake_timeout: Duration,
}

impl SessionConfig {
    pub fn new(scenario: Scenario) -> Self {
        let episode = EpisodeConfig::default();
        SessionConfig {
            period: Duration::from_secs_f64(episode.mpc.dt),
            scenario,
            episode,
            seed: 1,
            query_delay: Duration::from_millis(1500),
            handshake_timeout: Duration::from_secs(10),
        }
    }
}

enum Command {
    Subscribe(Sender<ServerMsg>),
    Query {
        text: String,
        reply: Sender<ServerMsg>,
    },
    Scene(String),
    Control {
        msg: ControlMsg,
        reply: Sender<ServerMsg>,
    },
}

/// A running session. Dropping it stops the service.
pub struct Server {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    acceptor: Option<JoinHandle<()>>,
    control: Option<JoinHandle<()>>,
}

impl Server {
    pub fn bind(
        addr: impl ToSocketAddrs,
        config: SessionConfig,
        client: Box<dyn LlmClient>,
    ) -> Result<Server, String> {
        config.episode.validate().map_err(|e| e.to_string())?;
        let listener = TcpListener::bind(addr).map_err(|e| format!("cannot bind: {e}"))?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        let stop = Arc::new(AtomicBool::new(false));
        let (commands, inbox) = mpsc::channel();

        let control = {
            let stop = stop.clone();
            let config = config.clone();
            std::thread::Builder::new()
                .name("control".into())
                .spawn(move || ControlLoop::new(config, client).run(inbox, &stop))
                .map_err(|e| e.to_string())?
        };
        let acceptor = {
            let stop = stop.clone();
            let timeout = config.handshake_timeout;
            std::thread::Builder::new()
                .name("accept".into())
                .spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            return;
                        }
                        let Ok(stream) = stream else { continue };
                        let (commands, stop) = (commands.clone(), stop.clone());
                        let _ = std::thread::Builder::new()
                            .name("connection".into())
                            .spawn(move || serve_connection(stream, commands, &stop, timeout));
                    }
                })
                .map_err(|e| e.to_string())?
        };
        Ok(Server {
            addr,
            stop,
            acceptor: Some(acceptor),
            control: Some(control),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Blocks until the control loop ends.
    pub fn wait(mut self) {
        if let Some(c) = self.control.take() {
            let _ = c.join();
        }
    }

    fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the acceptor blocked in accept().
        let _ = TcpStream::connect(self.addr);
        for t in [self.acceptor.take(), self.control.take()]
            .into_iter()
            .flatten()
        {
            let _ = t.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

struct ControlLoop {
    config: SessionConfig,
    handle: SpecHandle,
    worker: PipelineWorker,
    events: Receiver<langnav_core::assistants::PipelineEvent>,
    stepper: EpisodeStepper,
    subscribers: Vec<Sender<ServerMsg>>,
    last_spec: Arc<ActiveSpec>,
    last_digest: String,
    plan: Vec<Vec2>,
    paused: bool,
    ended: Option<Termination>,
    next_query: u64,
}

impl ControlLoop {
    fn new(config: SessionConfig, client: Box<dyn LlmClient>) -> Self {
        let handle = SpecHandle::with_initial_ratings(initial_spec(&config.scenario));
        let mut pipeline = Pipeline::from_boxed(client);
        if !config.scenario.scene_description.is_empty() {
            pipeline.set_scene(config.scenario.scene_description.clone());
        }
        let (worker, events) =
            PipelineWorker::spawn_with_delay(pipeline, handle.clone(), config.query_delay);
        let stepper = EpisodeStepper::new(
            &config.scenario,
            handle.clone(),
            &config.episode,
            config.seed,
        )
        .expect("episode config validated at bind");
        let last_spec = handle.snapshot();
        ControlLoop {
            last_digest: last_spec.spec.digest(),
            last_spec,
            config,
            handle,
            worker,
            events,
            stepper,
            subscribers: Vec::new(),
            plan: Vec::new(),
            paused: false,
            ended: None,
            next_query: 0,
        }
    }

    fn run(mut self, inbox: Receiver<Command>, stop: &AtomicBool) {
        let period = self.config.period;
        let mut deadline = Instant::now();
        while !stop.load(Ordering::SeqCst) {
            while let Ok(cmd) = inbox.try_recv() {
                self.apply(cmd);
            }
            if !self.paused && self.ended.is_none() {
                if let Err(e) = self.step() {
                    self.broadcast(error(format!("simulation stopped: {e}")));
                    self.paused = true;
                }
            }
            let events: Vec<_> = self.events.try_iter().collect();
            for e in events {
                self.broadcast(ServerMsg::PipelineEvent(e.into()));
            }
            self.publish_spec_if_changed();
            let state = self.state_frame();
            self.broadcast(state);

            deadline += period;
            let now = Instant::now();
            if deadline > now {
                std::thread::sleep(deadline - now);
            } else if now - deadline > period {
                deadline = now;
            }
        }
    }

    fn step(&mut self) -> Result<(), SimError> {
        let out = self.stepper.step()?;
        self.plan = out.plan.states.iter().map(|s| s.position()).collect();
        self.ended = out.termination;
        Ok(())
    }

    fn apply(&mut self, cmd: Command) {
        match cmd {
            Command::Subscribe(tx) => {
                let hello = ServerMsg::Hello(HelloFrame {
                    proto: PROTO_VERSION,
                    scenario: self.config.scenario.name.clone(),
                    period: self.config.period.as_secs_f64(),
                });
                let spec = ServerMsg::Spec(SpecFrame::from_active(&self.last_spec));
                if tx.send(hello).is_ok() && tx.send(spec).is_ok() {
                    self.subscribers.push(tx);
                }
            }
            Command::Query { text, reply } => {
                match Query::new(self.next_query, text, self.stepper.t()) {
                    Ok(q) => {
                        self.next_query += 1;
                        self.worker.submit(q);
                    }
                    Err(e) => {
                        let _ = reply.send(error(format!("query rejected: {e}")));
                    }
                }
            }
            Command::Scene(text) => self.worker.set_scene(text),
            Command::Control { msg, reply } => match msg {
                ControlMsg::Pause => self.paused = true,
                ControlMsg::Resume => self.paused = false,
                ControlMsg::Reset => self.reset(),
                ControlMsg::LoadScenario { scenario } => match resolve_scenario(&scenario) {
                    Ok(s) => {
                        if !s.scene_description.is_empty() {
                            self.worker.set_scene(s.scene_description.clone());
                        }
                        self.config.scenario = s;
                        self.reset();
                    }
                    Err(e) => {
                        let _ =
                            reply.send(error(format!("cannot load scenario `{scenario}`: {e}")));
                    }
                },
            },
        }
    }

    /// Restarts the episode from the scenario start with the initial spec.
    fn reset(&mut self) {
        self.worker.reset();
        let spec = initial_spec(&self.config.scenario);
        let z = initial_ratings(spec.term_names());
        self.handle.install(spec, z);
        self.stepper = EpisodeStepper::new(
            &self.config.scenario,
            self.handle.clone(),
            &self.config.episode,
            self.config.seed,
        )
        .expect("episode config validated at bind");
        self.plan.clear();
        self.ended = None;
    }

    fn publish_spec_if_changed(&mut self) {
        let snap = self.handle.snapshot();
        if Arc::ptr_eq(&snap, &self.last_spec) {
            return;
        }
        let digest = snap.spec.digest();
        let changed = digest != self.last_digest;
        self.last_spec = snap;
        self.last_digest = digest;
        if changed {
            let frame = ServerMsg::Spec(SpecFrame::from_active(&self.last_spec));
            self.broadcast(frame);
        }
    }

    fn state_frame(&self) -> ServerMsg {
        let scenario = self.stepper.scenario();
        ServerMsg::State(StateFrame {
            t: self.stepper.t(),
            robot: self.stepper.robot(),
            humans: self.stepper.humans(),
            plan: self.plan.clone(),
            reference_path: scenario.reference_path.waypoints().to_vec(),
            goal: scenario.goal,
            run_state: match (self.ended, self.paused) {
                (Some(Termination::Collision), _) => RunState::Collision,
                (Some(_), _) => RunState::GoalReached,
                (None, true) => RunState::Paused,
                (None, false) => RunState::Running,
            },
        })
    }

    fn broadcast(&mut self, msg: ServerMsg) {
        self.subscribers.retain(|s| s.send(msg.clone()).is_ok());
    }
}

fn error(message: String) -> ServerMsg {
    ServerMsg::Error(ErrorMsg { message })
}

struct Connection {
    ws: WebSocket<TcpStream>,
    seq: u64,
}

impl Connection {
    fn send(&mut self, msg: ServerMsg) -> tungstenite::Result<()> {
        let frame = Frame { seq: self.seq, msg };
        self.seq += 1;
        self.ws.send(Message::text(frame.to_json()))
    }
}

fn is_timeout(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

/// Reads the client's hello. Anything else ends the connection.
fn handshake(conn: &mut Connection, timeout: Duration) -> bool {
    let _ = conn.ws.get_ref().set_read_timeout(Some(timeout));
    let reason = match conn.ws.read() {
        Ok(Message::Text(t)) => match ClientMsg::parse(&t) {
            Ok(ClientMsg::Hello { proto }) if proto == PROTO_VERSION => return true,
            Ok(ClientMsg::Hello { proto }) => {
                format!("unsupported protocol version {proto}; this server speaks {PROTO_VERSION}")
            }
            Ok(_) => "expected hello before any other message".to_string(),
            Err(e) => e,
        },
        Ok(_) => "expected a text hello frame".to_string(),
        Err(e) if is_timeout(&e) => "no hello received".to_string(),
        Err(_) => return false,
    };
    let _ = conn.send(error(reason));
    let _ = conn.ws.close(None);
    let _ = conn.ws.flush();
    false
}

fn serve_connection(
    stream: TcpStream,
    commands: Sender<Command>,
    stop: &AtomicBool,
    handshake_timeout: Duration,
) {
    let _ = stream.set_nodelay(true);
    let Ok(ws) = tungstenite::accept(stream) else {
        return;
    };
    let mut conn = Connection { ws, seq: 0 };
    if !handshake(&mut conn, handshake_timeout) {
        return;
    }
    let (tx, rx) = mpsc::channel();
    if commands.send(Command::Subscribe(tx.clone())).is_err() {
        return;
    }
    let _ = conn
        .ws
        .get_ref()
        .set_read_timeout(Some(Duration::from_millis(5)));
    while !stop.load(Ordering::SeqCst) {
        match conn.ws.read() {
            Ok(Message::Text(t)) => {
                let cmd = match ClientMsg::parse(&t) {
                    Ok(ClientMsg::Hello { .. }) => Err("hello already received".to_string()),
                    Ok(ClientMsg::Query { text }) => Ok(Command::Query {
                        text,
                        reply: tx.clone(),
                    }),
                    Ok(ClientMsg::SceneDescription { text }) => Ok(Command::Scene(text)),
                    Ok(ClientMsg::Control(msg)) => Ok(Command::Control {
                        msg,
                        reply: tx.clone(),
                    }),
                    Err(e) => Err(e),
                };
                match cmd {
                    Ok(c) => {
                        if commands.send(c).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        if conn.send(error(e)).is_err() {
                            break;
                        }
                    }
                }
            }
            Ok(Message::Binary(_)) => {
                if conn
                    .send(error("binary frames are not supported".into()))
                    .is_err()
                {
                    break;
                }
            }
            Ok(Message::Close(_)) => {
                let _ = conn.ws.flush();
                break;
            }
            Ok(_) => {}
            Err(e) if is_timeout(&e) => {}
            Err(_) => break,
        }
        let mut failed = false;
        for msg in rx.try_iter() {
            if conn.send(msg).is_err() {
                failed = true;
                break;
            }
        }
        if failed {
            break;
        }
    }
    let _ = conn.ws.close(None);
    let _ = conn.ws.flush();
}

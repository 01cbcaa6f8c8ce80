use std::sync::mpsc::{self, Receiver, Sender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use super::{Pipeline, PipelineEvent, Query, SpecHandle, Stage};

#[derive(Default)]
struct Slot {
    pending: Option<Query>,
    scene: Option<String>,
    reset: bool,
    busy: bool,
    shutdown: bool,
}

struct Shared {
    slot: Mutex<Slot>,
    wake: Condvar,
}

/// Background thread running at most one pipeline at a time.
///
/// A query submitted while another is in flight waits in a single slot; a
/// newer submission replaces it and a [`Stage::Dropped`] event reports the
/// superseded query.
pub struct PipelineWorker {
    shared: Arc<Shared>,
    events: Sender<PipelineEvent>,
    thread: Option<JoinHandle<()>>,
}

impl PipelineWorker {
    pub fn spawn(pipeline: Pipeline, handle: SpecHandle) -> (Self, Receiver<PipelineEvent>) {
        Self::spawn_with_delay(pipeline, handle, Duration::ZERO)
    }

    /// Like [`PipelineWorker::spawn`], but every query waits `delay` before
    /// its pipeline starts. The query counts as in flight while it waits.
    pub fn spawn_with_delay(
        mut pipeline: Pipeline,
        handle: SpecHandle,
        delay: Duration,
    ) -> (Self, Receiver<PipelineEvent>) {
        let (tx, rx) = mpsc::channel();
        let shared = Arc::new(Shared {
            slot: Mutex::new(Slot::default()),
            wake: Condvar::new(),
        });
        let thread = {
            let shared = shared.clone();
            let tx = tx.clone();
            std::thread::Builder::new()
                .name("pipeline".into())
                .spawn(move || loop {
                    let (query, scene, reset) = {
                        let mut slot = shared.slot.lock().unwrap_or_else(|e| e.into_inner());
                        while slot.pending.is_none() && !slot.shutdown {
                            slot = shared.wake.wait(slot).unwrap_or_else(|e| e.into_inner());
                        }
                        if slot.shutdown {
                            return;
                        }
                        slot.busy = true;
                        (
                            slot.pending.take(),
                            slot.scene.take(),
                            std::mem::take(&mut slot.reset),
                        )
                    };
                    if reset {
                        pipeline.reset();
                    }
                    if let Some(scene) = scene {
                        pipeline.set_scene(scene);
                    }
                    if let Some(q) = query {
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                        }
                        pipeline.handle_query(&q, &handle, &mut |e| {
                            let _ = tx.send(e);
                        });
                    }
                    let mut slot = shared.slot.lock().unwrap_or_else(|e| e.into_inner());
                    slot.busy = false;
                    shared.wake.notify_all();
                })
                .expect("spawn pipeline thread")
        };
        (
            PipelineWorker {
                shared,
                events: tx,
                thread: Some(thread),
            },
            rx,
        )
    }

    pub fn submit(&self, query: Query) {
        let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(old) = slot.pending.replace(query) {
            let _ = self.events.send(PipelineEvent {
                query_index: old.index,
                stage: Stage::Dropped,
                detail: format!("superseded before processing: {}", old.text),
                elapsed: 0.0,
            });
        }
        self.shared.wake.notify_all();
    }

    /// Scene description used by the next camera adaptation.
    pub fn set_scene(&self, text: impl Into<String>) {
        let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
        slot.scene = Some(text.into());
    }

    /// Clears conversation history before the next query and drops any
    /// queued one.
    pub fn reset(&self) {
        let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
        slot.reset = true;
        if let Some(old) = slot.pending.take() {
            let _ = self.events.send(PipelineEvent {
                query_index: old.index,
                stage: Stage::Dropped,
                detail: "dropped by reset".into(),
                elapsed: 0.0,
            });
        }
    }

    pub fn is_idle(&self) -> bool {
        let slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
        !slot.busy && slot.pending.is_none()
    }

    /// Blocks until nothing is queued or running. Returns false on timeout.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
        while slot.busy || slot.pending.is_some() {
            let now = Instant::now();
            if now >= deadline {
                return false;
            }
            slot = self
                .shared
                .wake
                .wait_timeout(slot, deadline - now)
                .unwrap_or_else(|e| e.into_inner())
                .0;
        }
        true
    }
}

impl Drop for PipelineWorker {
    fn drop(&mut self) {
        {
            let mut slot = self.shared.slot.lock().unwrap_or_else(|e| e.into_inner());
            slot.shutdown = true;
            self.shared.wake.notify_all();
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

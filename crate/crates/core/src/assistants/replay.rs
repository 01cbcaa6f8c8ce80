use std::path::{Path, PathBuf};

use super::{request_digest, ChatTurn, LlmClient, LlmError};

/// Answers from a fixture directory of `<digest>.txt` files.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn fixture_path(dir: &Path, digest: &str) -> PathBuf {
        dir.join(format!("{digest}.txt"))
    }
}

impl LlmClient for ReplayBackend {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        let digest = request_digest(system, conversation, user);
        std::fs::read_to_string(Self::fixture_path(&self.dir, &digest))
            .map_err(|_| LlmError::MissingFixture(digest))
    }
}

/// Forwards to another client and writes every answer as a replay fixture.
pub struct RecordingBackend<C> {
    inner: C,
    dir: PathBuf,
    recorded: usize,
}

impl<C: LlmClient> RecordingBackend<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>) -> Result<Self, LlmError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Config(format!("{}: {e}", dir.display())))?;
        Ok(RecordingBackend {
            inner,
            dir,
            recorded: 0,
        })
    }

    pub fn recorded(&self) -> usize {
        self.recorded
    }
}

impl<C: LlmClient> LlmClient for RecordingBackend<C> {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        let answer = self.inner.send(system, conversation, user)?;
        let path =
            ReplayBackend::fixture_path(&self.dir, &request_digest(system, conversation, user));
        std::fs::write(&path, &answer)
            .map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
        self.recorded += 1;
        Ok(answer)
    }

    fn reset(&mut self) {
        self.inner.reset()
    }
}

//! Language model backend selection.

use std::path::PathBuf;

use clap::ValueEnum;
use langnav_core::assistants::{
    LiveBackend, LlmClient, MockBackend, RecordingBackend, ReplayBackend,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Mock,
    Replay,
    Live,
}

/// Everything needed to build a fresh client of the chosen kind.
#[derive(Debug, Clone)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Fixture directory read by `replay`.
    pub fixtures: Option<PathBuf>,
    pub model: String,
    /// When set, every answer is also written here as a replay fixture.
    pub record_to: Option<PathBuf>,
}

impl BackendSpec {
    pub fn mock() -> Self {
        BackendSpec {
            kind: BackendKind::Mock,
            fixtures: None,
            model: String::new(),
            record_to: None,
        }
    }

    /// Checks the configuration once so that `build` cannot fail later.
    pub fn validate(&self) -> Result<(), String> {
        match self.kind {
            BackendKind::Mock => {}
            BackendKind::Replay => {
                let dir = self
                    .fixtures
                    .as_ref()
                    .ok_or("--llm replay requires --fixtures DIR")?;
                if !dir.is_dir() {
                    return Err(format!(
                        "fixture directory {} does not exist",
                        dir.display()
                    ));
                }
            }
            BackendKind::Live => {
                LiveBackend::from_env(self.model.clone())
                    .map_err(|e| format!("--llm live: {e}"))?;
            }
        }
        if let Some(dir) = &self.record_to {
            std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn LlmClient>, String> {
        let base: Box<dyn LlmClient> = match self.kind {
            BackendKind::Mock => Box::new(MockBackend::new()),
            BackendKind::Replay => Box::new(ReplayBackend::new(
                self.fixtures
                    .clone()
                    .ok_or("--llm replay requires --fixtures DIR")?,
            )),
            BackendKind::Live => {
                Box::new(LiveBackend::from_env(self.model.clone()).map_err(|e| e.to_string())?)
            }
        };
        match &self.record_to {
            Some(dir) => Ok(Box::new(
                RecordingBackend::new(base, dir.clone()).map_err(|e| e.to_string())?,
            )),
            None => Ok(base),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_needs_an_existing_directory() {
        let mut spec = BackendSpec::mock();
        assert!(spec.validate().is_ok());
        spec.kind = BackendKind::Replay;
        assert!(spec.validate().is_err());
        spec.fixtures = Some(PathBuf::from("/definitely/not/here"));
        assert!(spec.validate().is_err());
        let dir = tempfile::tempdir().unwrap();
        spec.fixtures = Some(dir.path().to_path_buf());
        assert!(spec.validate().is_ok());
        assert!(spec.build().is_ok());
    }
}

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// One earlier user/assistant exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub user: String,
    pub assistant: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("no recorded response for request {0}")]
    MissingFixture(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Chat-style language-model endpoint.
pub trait LlmClient: Send {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError>;

    /// Drops any backend-side conversation state.
    fn reset(&mut self) {}
}

impl<C: LlmClient + ?Sized> LlmClient for Box<C> {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        (**self).send(system, conversation, user)
    }

    fn reset(&mut self) {
        (**self).reset()
    }
}

/// Stable hex digest of a full request.
pub fn request_digest(system: &str, conversation: &[ChatTurn], user: &str) -> String {
    let mut h = Sha256::new();
    let mut field = |s: &str| {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    };
    field(system);
    for t in conversation {
        field(&t.user);
        field(&t.assistant);
    }
    field(user);
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_separates_fields() {
        let a = request_digest("ab", &[], "c");
        let b = request_digest("a", &[], "bc");
        assert_ne!(a, b);
        assert_eq!(a, request_digest("ab", &[], "c"));
        assert_eq!(a.len(), 64);
    }
}

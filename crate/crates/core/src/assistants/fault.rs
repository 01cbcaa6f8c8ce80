use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{ChatTurn, LlmClient, LlmError};

/// What a [`FaultyClient`] does to one exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fault {
    Pass,
    TransportError,
    /// Replaces the answer with free text that matches no response format.
    Garble,
    /// Breaks every DSL source and builtin name in the answer.
    CorruptDsl,
    /// Pushes every rating outside `0..=10`.
    OutOfRangeRating,
}

impl Fault {
    pub const ALL: [Fault; 5] = [
        Fault::Pass,
        Fault::TransportError,
        Fault::Garble,
        Fault::CorruptDsl,
        Fault::OutOfRangeRating,
    ];

    fn apply(self, answer: String) -> Result<String, LlmError> {
        match self {
            Fault::Pass => Ok(answer),
            Fault::TransportError => Err(LlmError::Transport("injected connection reset".into())),
            Fault::Garble => Ok("I am not sure what you mean. Could you rephrase?".into()),
            Fault::CorruptDsl => Ok(answer
                .lines()
                .map(|l| match l.split_once(":=") {
                    Some((head, src)) => format!("{head}:= ({src}"),
                    None if l.trim_start().to_ascii_uppercase().starts_with("TERM") => {
                        format!("{l}_x")
                    }
                    None => l.to_string(),
                })
                .collect::<Vec<_>>()
                .join("\n")),
            Fault::OutOfRangeRating => Ok(answer
                .lines()
                .map(|l| match l.split_once('=') {
                    Some((head, z)) if l.starts_with("RATING") => {
                        let z: i64 = z.trim().parse().unwrap_or(5);
                        let pushed = if z % 2 == 0 { 40 + z } else { -7 - z };
                        format!("{head}={pushed}")
                    }
                    _ => l.to_string(),
                })
                .collect::<Vec<_>>()
                .join("\n")),
        }
    }
}

/// Wraps a client and perturbs its exchanges according to a schedule.
///
/// The n-th call to `send` uses the n-th scheduled fault; once the schedule
/// is exhausted every call passes through.
pub struct FaultyClient<C> {
    inner: C,
    schedule: VecDeque<Fault>,
    calls: usize,
}

impl<C: LlmClient> FaultyClient<C> {
    pub fn new(inner: C, schedule: impl IntoIterator<Item = Fault>) -> Self {
        FaultyClient {
            inner,
            schedule: schedule.into_iter().collect(),
            calls: 0,
        }
    }

    pub fn calls(&self) -> usize {
        self.calls
    }

    pub fn into_inner(self) -> C {
        self.inner
    }
}

impl<C: LlmClient> LlmClient for FaultyClient<C> {
    fn send(
        &mut self,
        system: &str,
        conversation: &[ChatTurn],
        user: &str,
    ) -> Result<String, LlmError> {
        self.calls += 1;
        let fault = self.schedule.pop_front().unwrap_or(Fault::Pass);
        if fault == Fault::TransportError {
            return fault.apply(String::new());
        }
        let answer = self.inner.send(system, conversation, user)?;
        fault.apply(answer)
    }

    fn reset(&mut self) {
        self.inner.reset()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assistants::{parse_manifest, parse_ratings};

    #[test]
    fn corrupted_manifest_fails_to_parse() {
        let text = Fault::CorruptDsl
            .apply("TERM: goal\nTERM: d := (oh_x - px)^2\n".into())
            .unwrap();
        assert!(parse_manifest(&text).is_err());
        let builtin_only = Fault::CorruptDsl.apply("TERM: goal\n".into()).unwrap();
        assert!(parse_manifest(&builtin_only).is_err());
    }

    #[test]
    fn ratings_leave_range() {
        let text = Fault::OutOfRangeRating
            .apply("RATING a=4\nRATING b=5\nREASON: x".into())
            .unwrap();
        let a = parse_ratings(&text).unwrap();
        assert_eq!(a.ratings["a"], 44);
        assert_eq!(a.ratings["b"], -12);
    }
}

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, ModelRequest};
use crate::answer::format_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownPatchMode {
    #[default]
    Error,
    Empty,
}

/// Answers from a fixed `patch id -> text` table, keyed by the request tag.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    id: String,
    answers: HashMap<String, String>,
    unknown: UnknownPatchMode,
}

impl FixtureBackend {
    pub fn new(id: impl Into<String>, answers: HashMap<String, String>, unknown: UnknownPatchMode) -> Self {
        Self {
            id: id.into(),
            answers,
            unknown,
        }
    }

    /// Always answers with the empty string.
    pub fn always_empty() -> Self {
        Self::new("mock-empty", HashMap::new(), UnknownPatchMode::Empty)
    }

    pub fn answer_for(&self, tag: Option<&str>) -> Result<String, BackendError> {
        match tag.and_then(|t| self.answers.get(t)) {
            Some(text) => Ok(text.clone()),
            None => match self.unknown {
                UnknownPatchMode::Empty => Ok(String::new()),
                UnknownPatchMode::Error => Err(BackendError::UnknownPatch(tag.unwrap_or("<untagged>").to_string())),
            },
        }
    }
}

impl Backend for FixtureBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ModelRequest) -> Result<String, BackendError> {
        self.answer_for(req.tag.as_deref())
    }
}

/// A backend that answers every patch with its ground truth in the answer grammar.
pub fn mock_from_truth<'a, I>(truth: I, unknown: UnknownPatchMode) -> FixtureBackend
where
    I: IntoIterator<Item = (&'a str, &'a BTreeSet<u32>)>,
{
    let answers = truth
        .into_iter()
        .map(|(id, labels)| (id.to_string(), format_answer(labels)))
        .collect();
    FixtureBackend::new("mock-truth", answers, unknown)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_answers() {
        let a: BTreeSet<u32> = [37].into();
        let b: BTreeSet<u32> = [3, 1].into();
        let mock = mock_from_truth([("p1", &a), ("p2", &b)], UnknownPatchMode::Error);
        assert_eq!(mock.answer_for(Some("p1")).unwrap(), "(37)");
        assert_eq!(mock.answer_for(Some("p2")).unwrap(), "(1),(3)");
        assert_eq!(mock.answer_for(Some("nope")), Err(BackendError::UnknownPatch("nope".into())));

        let lax = mock_from_truth([("p1", &a)], UnknownPatchMode::Empty);
        assert_eq!(lax.answer_for(Some("nope")).unwrap(), "");
    }

    #[test]
    fn fixture_echo() {
        let mock = FixtureBackend::new(
            "fixture",
            [("patch_17".to_string(), "(1),(3)".to_string())].into(),
            UnknownPatchMode::Error,
        );
        let req = ModelRequest::new("p", vec![vec![0]]).with_tag("patch_17");
        assert_eq!(mock.complete(&req).unwrap(), "(1),(3)");
    }
}

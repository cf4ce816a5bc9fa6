use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::checklist::{checklist, dimension};
use super::prompts::{ModuleRef, PromptModule};
use crate::domain::{PhaseId, Role};
use crate::ErrorCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Question,
    Answer,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension_id: Option<String>,
    pub text: String,
    pub author: Role,
    /// The question an answer responds to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationQuestion {
    pub dimension_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SessionError {
    #[error("unknown transcript entry {0}")]
    UnknownEntry(String),
    #[error("entry {0} is not a question")]
    NotAQuestion(String),
    #[error("answers must come from an SME or developer")]
    AnswerRequiresHuman,
    #[error("dimension {dimension} does not belong to phase {phase}")]
    UnknownDimension { dimension: String, phase: PhaseId },
    #[error("answer text is empty")]
    EmptyAnswer,
}

impl ErrorCode for SessionError {
    fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownEntry(_) => "unknown_entry",
            SessionError::NotAQuestion(_) => "not_a_question",
            SessionError::AnswerRequiresHuman => "answer_requires_human",
            SessionError::UnknownDimension { .. } => "unknown_dimension",
            SessionError::EmptyAnswer => "empty_content",
        }
    }
}

/// Phase-aligned question/answer transcript. Entry ids are `E1`, `E2`, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElicitationSession {
    pub session_id: String,
    pub project_id: String,
    pub phase: PhaseId,
    pub transcript: Vec<TranscriptEntry>,
    /// Prompt modules used so far, by name.
    #[serde(default)]
    pub prompt_modules: BTreeMap<String, ModuleRef>,
}

impl ElicitationSession {
    pub fn new(session_id: impl Into<String>, project_id: impl Into<String>, phase: PhaseId) -> Self {
        Self {
            session_id: session_id.into(),
            project_id: project_id.into(),
            phase,
            transcript: Vec::new(),
            prompt_modules: BTreeMap::new(),
        }
    }

    pub fn note_module(&mut self, module: &PromptModule) {
        self.prompt_modules.insert(module.name.to_string(), module.reference());
    }

    fn push(&mut self, mut entry: TranscriptEntry) -> &TranscriptEntry {
        entry.entry_id = format!("E{}", self.transcript.len() + 1);
        self.transcript.push(entry);
        self.transcript.last().expect("just pushed")
    }

    pub fn entry(&self, entry_id: &str) -> Option<&TranscriptEntry> {
        self.transcript.iter().find(|e| e.entry_id == entry_id)
    }

    pub fn add_questions(&mut self, questions: &[ElicitationQuestion]) -> Result<Vec<String>, SessionError> {
        for q in questions {
            if dimension(self.phase, &q.dimension_id).is_none() {
                return Err(SessionError::UnknownDimension {
                    dimension: q.dimension_id.clone(),
                    phase: self.phase,
                });
            }
        }
        Ok(questions
            .iter()
            .map(|q| {
                self.push(TranscriptEntry {
                    entry_id: String::new(),
                    kind: EntryKind::Question,
                    dimension_id: Some(q.dimension_id.clone()),
                    text: q.text.clone(),
                    author: Role::HelperAgent,
                    in_reply_to: None,
                })
                .entry_id
                .clone()
            })
            .collect())
    }

    /// Record a human answer; it inherits the question's dimension.
    pub fn answer(&mut self, question_id: &str, text: &str, author: Role) -> Result<&TranscriptEntry, SessionError> {
        if !author.is_human() {
            return Err(SessionError::AnswerRequiresHuman);
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyAnswer);
        }
        let q = self
            .entry(question_id)
            .ok_or_else(|| SessionError::UnknownEntry(question_id.to_string()))?;
        if q.kind != EntryKind::Question {
            return Err(SessionError::NotAQuestion(question_id.to_string()));
        }
        let dimension_id = q.dimension_id.clone();
        Ok(self.push(TranscriptEntry {
            entry_id: String::new(),
            kind: EntryKind::Answer,
            dimension_id,
            text: text.trim().to_string(),
            author,
            in_reply_to: Some(question_id.to_string()),
        }))
    }

    pub fn add_summary(&mut self, text: &str) -> &TranscriptEntry {
        self.push(TranscriptEntry {
            entry_id: String::new(),
            kind: EntryKind::Summary,
            dimension_id: None,
            text: text.to_string(),
            author: Role::HelperAgent,
            in_reply_to: None,
        })
    }

    /// Dimensions with at least one answer, in checklist order.
    pub fn answered_dimensions(&self) -> Vec<&'static str> {
        let answered: BTreeSet<&str> = self
            .transcript
            .iter()
            .filter(|e| e.kind == EntryKind::Answer)
            .filter_map(|e| e.dimension_id.as_deref())
            .collect();
        checklist(self.phase)
            .iter()
            .map(|d| d.dimension_id)
            .filter(|d| answered.contains(d))
            .collect()
    }

    /// Dimensions still lacking an answer, in checklist order.
    pub fn unanswered_dimensions(&self) -> Vec<&'static str> {
        let answered = self.answered_dimensions();
        checklist(self.phase)
            .iter()
            .map(|d| d.dimension_id)
            .filter(|d| !answered.contains(d))
            .collect()
    }

    /// Questions nobody has answered yet.
    pub fn pending_questions(&self) -> Vec<&TranscriptEntry> {
        self.transcript
            .iter()
            .filter(|e| e.kind == EntryKind::Question)
            .filter(|q| {
                !self
                    .transcript
                    .iter()
                    .any(|a| a.in_reply_to.as_deref() == Some(q.entry_id.as_str()))
            })
            .collect()
    }

    /// Transcript rendered one entry per line for prompts:
    /// `[E2] answer to E1 (dimension) by sme: text`.
    pub fn render_transcript(&self) -> String {
        let mut out = String::new();
        for e in &self.transcript {
            let kind = match (e.kind, &e.in_reply_to) {
                (EntryKind::Answer, Some(q)) => format!("answer to {q}"),
                (EntryKind::Answer, None) => "answer".to_string(),
                (EntryKind::Question, _) => "question".to_string(),
                (EntryKind::Summary, _) => "summary".to_string(),
            };
            let dim = e.dimension_id.as_deref().unwrap_or("-");
            let text = e.text.replace('\n', " ");
            out.push_str(&format!("[{}] {kind} ({dim}) by {}: {text}\n", e.entry_id, e.author));
        }
        out
    }
}

use super::AnnotateError;
use crate::corpus::STANCE_CLASSES;

/// Instruction sentence sent ahead of every statement/target pair.
pub const STANCE_INSTRUCTION: &str = "Given the following statement and the target, infer the stance of the statement towards the target. Answer with only one word: neutral, positive, or negative.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StanceRequest {
    pub statement: String,
    pub target: String,
}

impl StanceRequest {
    pub fn new(
        statement: impl Into<String>,
        target: impl Into<String>,
    ) -> Result<Self, AnnotateError> {
        let req = StanceRequest {
            statement: statement.into(),
            target: target.into(),
        };
        if req.statement.trim().is_empty() || req.target.trim().is_empty() {
            return Err(AnnotateError::Config(
                "stance requests need a non-empty statement and target".into(),
            ));
        }
        Ok(req)
    }
}

pub fn render_stance_prompt(req: &StanceRequest) -> String {
    format!(
        "{STANCE_INSTRUCTION}\nStatement: {}\nTarget: {}",
        req.statement, req.target
    )
}

/// Maps a model reply onto a stance class.
///
/// A bare stance word (any case, optional trailing punctuation) is accepted
/// directly. Otherwise the reply is scanned token by token and accepted only
/// if exactly one of the three stance words appears in it.
pub fn parse_stance_response(raw: &str) -> Result<&'static str, AnnotateError> {
    let norm = raw.trim().to_lowercase();
    let bare = norm.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if let Some(s) = STANCE_CLASSES.iter().find(|s| **s == bare) {
        return Ok(s);
    }
    let mut found: Option<&'static str> = None;
    for tok in norm.split(|c: char| !c.is_alphanumeric()) {
        if let Some(s) = STANCE_CLASSES.iter().find(|s| **s == tok) {
            match found {
                Some(prev) if prev != *s => {
                    return Err(AnnotateError::UnparseableStance {
                        raw: raw.to_string(),
                    })
                }
                _ => found = Some(s),
            }
        }
    }
    found.ok_or_else(|| AnnotateError::UnparseableStance {
        raw: raw.to_string(),
    })
}

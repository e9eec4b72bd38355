use alloc::string::{String, ToString};
use core::fmt;

/// A non-fatal finding attached to an operation's output, such as a dropped
/// annotator or an image that could not be scored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(subject: impl ToString, message: impl ToString) -> Self {
        Self {
            subject: subject.to_string(),
            message: message.to_string(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

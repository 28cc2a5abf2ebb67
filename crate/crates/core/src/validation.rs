use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IssueCode {
    DegenerateHand,
    KeypointOutOfImage,
    MaskSizeMismatch,
    ImageSizeMismatch,
    LowConfidence,
    MissingFile,
    DigestMismatch,
    BadMetadata,
    BadManifest,
    DuplicateFrame,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::DegenerateHand => "DEGENERATE_HAND",
            IssueCode::KeypointOutOfImage => "KEYPOINT_OUT_OF_IMAGE",
            IssueCode::MaskSizeMismatch => "MASK_SIZE_MISMATCH",
            IssueCode::ImageSizeMismatch => "IMAGE_SIZE_MISMATCH",
            IssueCode::LowConfidence => "LOW_CONFIDENCE",
            IssueCode::MissingFile => "MISSING_FILE",
            IssueCode::DigestMismatch => "DIGEST_MISMATCH",
            IssueCode::BadMetadata => "BAD_METADATA",
            IssueCode::BadManifest => "BAD_MANIFEST",
            IssueCode::DuplicateFrame => "DUPLICATE_FRAME",
        }
    }
}

impl fmt::Display for IssueCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Issue {
    pub code: IssueCode,
    pub message: String,
}

/// Result of a non-throwing validation pass. `ok` is true exactly when
/// `issues` is empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn new() -> Self {
        ValidationReport { ok: true, issues: Vec::new() }
    }

    pub fn push(&mut self, code: IssueCode, message: impl Into<String>) {
        self.issues.push(Issue { code, message: message.into() });
        self.ok = false;
    }

    pub fn has(&self, code: IssueCode) -> bool {
        self.issues.iter().any(|i| i.code == code)
    }

    pub fn extend(&mut self, other: ValidationReport) {
        for i in other.issues {
            self.push(i.code, i.message);
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ok {
            return f.write_str("ok");
        }
        for (n, issue) in self.issues.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", issue.code, issue.message)?;
        }
        Ok(())
    }
}

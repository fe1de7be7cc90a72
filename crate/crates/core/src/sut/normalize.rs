use std::fmt;

use serde::{Deserialize, Serialize};

/// Classified model answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseClass {
    Yes,
    No,
    Invalid,
}

impl ResponseClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Yes => "yes",
            Self::No => "no",
            Self::Invalid => "invalid",
        }
    }

    pub fn is_valid(self) -> bool {
        self != Self::Invalid
    }

    /// 1.0 for Yes, 0.0 for No.
    pub fn as_vote(self) -> Option<f64> {
        match self {
            Self::Yes => Some(1.0),
            Self::No => Some(0.0),
            Self::Invalid => None,
        }
    }
}

impl fmt::Display for ResponseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies a raw reply as Yes, No or Invalid.
///
/// Leading whitespace, quotes, markdown bullets and other punctuation are
/// skipped; the reply must then start with the word "yes" or "no" (any
/// case) followed by a non-alphanumeric character or the end of text.
pub fn normalize_response(raw: &str) -> ResponseClass {
    let body = raw.trim_start_matches(|c: char| !c.is_alphanumeric());
    let lower = body.to_lowercase();
    let starts_word =
        |w: &str| lower.starts_with(w) && lower[w.len()..].chars().next().is_none_or(|c| !c.is_alphanumeric());
    if starts_word("yes") {
        ResponseClass::Yes
    } else if starts_word("no") {
        ResponseClass::No
    } else {
        ResponseClass::Invalid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(normalize_response("Yes, Kinawley is in Ulster."), ResponseClass::Yes);
        assert_eq!(normalize_response("no"), ResponseClass::No);
        assert_eq!(
            normalize_response("As a language model, I cannot verify that."),
            ResponseClass::Invalid
        );
    }

    #[test]
    fn formatting_noise() {
        for raw in [
            "  YES.",
            "**Yes**",
            "- yes",
            "> No, it is not.",
            "\"No\"",
            "“Yes”",
            "* yes",
        ] {
            assert_ne!(normalize_response(raw), ResponseClass::Invalid, "{raw}");
        }
        for raw in ["", "Nope", "Not sure", "Norway is north", "Yesterday", "Maybe yes"] {
            assert_eq!(normalize_response(raw), ResponseClass::Invalid, "{raw}");
        }
    }

    proptest! {
        #[test]
        fn total_and_idempotent(raw in ".{0,40}") {
            let c = normalize_response(&raw);
            prop_assert_eq!(normalize_response(c.as_str()), c);
        }
    }
}

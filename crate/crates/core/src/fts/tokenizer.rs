use serde::{Deserialize, Serialize};

/// Splits on every non-alphanumeric codepoint; optionally lowercases.
/// No stemming and no stop-word removal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| {
                if self.lowercase {
                    t.to_lowercase()
                } else {
                    t.to_owned()
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_and_lowercases() {
        let t = Tokenizer::default();
        assert_eq!(t.tokenize("Red Sports-Shoes"), vec!["red", "sports", "shoes"]);
        assert!(t.tokenize("").is_empty());
        assert_eq!(t.tokenize("a  a"), vec!["a", "a"]);
        assert_eq!(t.tokenize("--x9,,Ünï"), vec!["x9", "ünï"]);
    }

    #[test]
    fn case_preserving_config() {
        let t = Tokenizer { lowercase: false };
        assert_eq!(t.tokenize("Red shoes"), vec!["Red", "shoes"]);
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Decides which authors are bots. Matching is case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotPolicy {
    #[serde(default)]
    pub exact_usernames: Vec<String>,
    #[serde(default = "default_suffixes")]
    pub suffix_patterns: Vec<String>,
}

fn default_suffixes() -> Vec<String> {
    vec!["[bot]".into(), "-bot".into(), "bot".into()]
}

impl Default for BotPolicy {
    fn default() -> Self {
        BotPolicy {
            exact_usernames: Vec::new(),
            suffix_patterns: default_suffixes(),
        }
    }
}

impl BotPolicy {
    /// A policy that treats nobody as a bot.
    pub fn none() -> Self {
        BotPolicy {
            exact_usernames: Vec::new(),
            suffix_patterns: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn is_bot(&self, username: &str) -> bool {
        let name = username.trim().to_lowercase();
        if name.is_empty() {
            return false;
        }
        self.exact_usernames.iter().any(|u| u.trim().to_lowercase() == name)
            || self
                .suffix_patterns
                .iter()
                .any(|s| !s.is_empty() && name.ends_with(&s.to_lowercase()))
    }
}

use std::collections::BTreeSet;
use std::path::Path;

use super::SessionError;

pub const DEFAULT_PRONOUNS: &[&str] =
    &["this", "that", "these", "those", "it", "they", "them", "here", "there", "one", "ones"];

/// Word list used to flag pronouns in transcripts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PronounLexicon {
    words: BTreeSet<String>,
}

impl Default for PronounLexicon {
    fn default() -> Self {
        Self { words: DEFAULT_PRONOUNS.iter().map(|s| s.to_string()).collect() }
    }
}

impl PronounLexicon {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self { words: words.into_iter().map(|w| normalize_token(w.as_ref())).filter(|w| !w.is_empty()).collect() }
    }

    /// One word per line; `#` starts a comment. A line `+default` pulls in
    /// the built-in list so locale files only need their extensions.
    pub fn from_file(path: &Path) -> Result<Self, SessionError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| SessionError::Io { path: path.to_path_buf(), source })?;
        let mut words = BTreeSet::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line == "+default" {
                words.extend(DEFAULT_PRONOUNS.iter().map(|s| s.to_string()));
                continue;
            }
            let w = normalize_token(line);
            if !w.is_empty() {
                words.insert(w);
            }
        }
        Ok(Self { words })
    }

    pub fn is_pronoun(&self, token: &str) -> bool {
        self.words.contains(&normalize_token(token))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// Lowercase and strip leading/trailing punctuation.
pub fn normalize_token(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_list_flags_case_and_punctuation() {
        let lex = PronounLexicon::default();
        assert!(lex.is_pronoun("This"));
        assert!(lex.is_pronoun("it?"));
        assert!(lex.is_pronoun("ones"));
        assert!(!lex.is_pronoun("apple"));
        assert!(!lex.is_pronoun("thistle"));
    }

    #[test]
    fn file_with_default_include() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.txt");
        std::fs::write(&p, "# german\n+default\ndas\ndies # demonstrative\n").unwrap();
        let lex = PronounLexicon::from_file(&p).unwrap();
        assert!(lex.is_pronoun("das"));
        assert!(lex.is_pronoun("dies"));
        assert!(lex.is_pronoun("those"));
    }
}

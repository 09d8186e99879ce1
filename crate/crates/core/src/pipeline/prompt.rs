use serde::{Deserialize, Serialize};

/// The stored instruction template. Slots: `{{inputs}}`, `{{values}}`,
/// `{{examples}}`.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../templates/prompt.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InputType {
    #[serde(rename = "Context Caption")]
    ContextCaption,
    #[serde(rename = "Interest Caption")]
    InterestCaption,
    #[serde(rename = "OCR")]
    Ocr,
    #[serde(rename = "User Query")]
    UserQuery,
}

impl InputType {
    pub const ORDER: [InputType; 4] =
        [InputType::ContextCaption, InputType::InterestCaption, InputType::Ocr, InputType::UserQuery];

    pub fn name(self) -> &'static str {
        match self {
            InputType::ContextCaption => "Context Caption",
            InputType::InterestCaption => "Interest Caption",
            InputType::Ocr => "OCR",
            InputType::UserQuery => "User Query",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            InputType::ContextCaption => {
                "A textual description of the whole visual content, generated by the visual captioning tool."
            }
            InputType::InterestCaption => {
                "A textual description of the user's eye gaze interest, generated by a visual captioning tool -- a list of textual descriptions of the object that the user is looking at. The recognition result might be inaccurate, and the input is the top 3 descriptions with the highest confidence."
            }
            InputType::Ocr => {
                "Extracted text from the whole vision field, generated by OCR tool, the recognition result can be considered highly inaccurate except for understandable phrases."
            }
            InputType::UserQuery => {
                "The user's query question, may be vague by using pronouns or skipping intent words. Query text is a transcript using a speech recognition tool, which may be inaccurate if you find some words hard to understand."
            }
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template lacks the `{0}` slot")]
    MissingSlot(&'static str),
    #[error("template has an unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("invalid prompt bundle: {0}")]
    InvalidBundle(String),
}

/// Everything the prompt says about one query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub context_captions: Vec<String>,
    pub interest_captions: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr_text: Option<String>,
    pub query_text: String,
    pub input_roster: Vec<InputType>,
}

impl PromptBundle {
    /// Bundle with the roster derived from which fields are populated.
    pub fn new(
        context_captions: Vec<String>,
        interest_captions: Vec<Vec<String>>,
        ocr_text: Option<String>,
        query_text: String,
    ) -> Self {
        let mut b = Self {
            context_captions,
            interest_captions,
            ocr_text: ocr_text.filter(|t| !t.trim().is_empty()),
            query_text,
            input_roster: Vec::new(),
        };
        b.input_roster = b.derived_roster();
        b
    }

    fn present(&self, t: InputType) -> bool {
        match t {
            InputType::ContextCaption => !self.context_captions.is_empty(),
            InputType::InterestCaption => !self.interest_captions.is_empty(),
            InputType::Ocr => self.ocr_text.as_deref().is_some_and(|t| !t.trim().is_empty()),
            InputType::UserQuery => true,
        }
    }

    fn derived_roster(&self) -> Vec<InputType> {
        InputType::ORDER.into_iter().filter(|t| self.present(*t)).collect()
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.query_text.trim().is_empty() {
            return Err(TemplateError::InvalidBundle("empty query text".into()));
        }
        if self.input_roster != self.derived_roster() {
            return Err(TemplateError::InvalidBundle(format!(
                "roster {:?} does not match populated fields {:?}",
                self.input_roster,
                self.derived_roster()
            )));
        }
        if self.interest_captions.iter().any(Vec::is_empty) {
            return Err(TemplateError::InvalidBundle("interest caption without labels".into()));
        }
        Ok(())
    }

    fn value_block(&self, t: InputType) -> String {
        match t {
            InputType::ContextCaption => self.context_captions.join("\n"),
            InputType::InterestCaption => self
                .interest_captions
                .iter()
                .map(|labels| format!("[{}]", labels.join(", ")))
                .collect::<Vec<_>>()
                .join("\n"),
            InputType::Ocr => self.ocr_text.clone().unwrap_or_default(),
            InputType::UserQuery => self.query_text.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
    examples: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("built-in template is valid")
    }
}

const SLOTS: [&str; 3] = ["inputs", "values", "examples"];

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        for required in ["inputs", "values"] {
            if !text.contains(&format!("{{{{{required}}}}}")) {
                return Err(TemplateError::MissingSlot(required));
            }
        }
        let mut rest = text;
        while let Some(i) = rest.find("{{") {
            let after = &rest[i + 2..];
            if let Some(j) = after.find("}}") {
                let name = &after[..j];
                if name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') && !SLOTS.contains(&name) {
                    return Err(TemplateError::UnknownSlot(name.to_string()));
                }
            }
            rest = after;
        }
        Ok(Self { text: text.to_string(), examples: String::new() })
    }

    /// Few-shot examples substituted into the `{{examples}}` slot.
    pub fn with_examples(mut self, examples: impl Into<String>) -> Self {
        self.examples = examples.into();
        self
    }

    pub fn render(&self, bundle: &PromptBundle) -> Result<String, TemplateError> {
        bundle.validate()?;
        let inputs: String =
            bundle.input_roster.iter().map(|t| format!("\n- {}: {}", t.name(), t.description())).collect();
        let values = bundle
            .input_roster
            .iter()
            .map(|t| format!("{}:\n{}", t.name(), bundle.value_block(*t)))
            .collect::<Vec<_>>()
            .join("\n\n");
        // single pass, so slot markers inside substituted values stay literal
        let mut out = String::with_capacity(self.text.len() + values.len() + inputs.len());
        let mut rest = self.text.as_str();
        while let Some(i) = rest.find("{{") {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            let slot = [("{{inputs}}", &inputs), ("{{values}}", &values), ("{{examples}}", &self.examples)]
                .into_iter()
                .find(|(marker, _)| tail.starts_with(marker));
            match slot {
                Some((marker, value)) => {
                    out.push_str(value);
                    rest = &tail[marker.len()..];
                }
                None => {
                    out.push_str("{{");
                    rest = &tail[2..];
                }
            }
        }
        out.push_str(rest);
        Ok(out)
    }
}

/// Render `bundle` with the built-in template.
pub fn build_prompt(bundle: &PromptBundle) -> Result<String, TemplateError> {
    PromptTemplate::default().render(bundle)
}

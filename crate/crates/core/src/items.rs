//! Labelled evaluation items.

use alloc::string::String;

use crate::error::{data_err, Result};

/// One phone occurrence with its triphone context and speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneToken {
    pub utterance_id: String,
    pub onset: f64,
    pub offset: f64,
    pub phone: String,
    pub prev_phone: String,
    pub next_phone: String,
    pub speaker: String,
    pub language: Option<String>,
}

/// A whole utterance labelled with speaker and language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UtteranceRecord {
    pub utterance_id: String,
    pub speaker: String,
    pub language: String,
}

pub(crate) fn check_label(what: &str, label: &str) -> Result<()> {
    if label.is_empty() {
        return Err(data_err!("empty {what} label"));
    }
    if label.chars().any(char::is_whitespace) {
        return Err(data_err!("{what} label {label:?} contains whitespace"));
    }
    Ok(())
}

impl PhoneToken {
    pub fn validate(&self) -> Result<()> {
        check_label("utterance", &self.utterance_id)?;
        check_label("phone", &self.phone)?;
        check_label("previous-phone", &self.prev_phone)?;
        check_label("next-phone", &self.next_phone)?;
        check_label("speaker", &self.speaker)?;
        if let Some(lang) = &self.language {
            check_label("language", lang)?;
        }
        if !(self.onset.is_finite() && self.offset.is_finite()) {
            return Err(data_err!("{}: non-finite token time", self.utterance_id));
        }
        if self.onset >= self.offset {
            return Err(data_err!("onset ≥ offset"));
        }
        Ok(())
    }
}

impl UtteranceRecord {
    pub fn validate(&self) -> Result<()> {
        check_label("utterance", &self.utterance_id)?;
        check_label("speaker", &self.speaker)?;
        check_label("language", &self.language)
    }
}
